mod output;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use izhirv_core::dcu::{approximation_error, reference_ae_disputed, DividerSelect, REFERENCE_AE};
use izhirv_core::isa::{assemble, disassemble, parse_hex_image, read_flat_binary, Program, Reg};
use izhirv_core::machine::{Machine, StopReason, TimingConfig};
use izhirv_core::netsim::sudoku::{
    backtracking_solve, grid_to_string, parse_puzzle_file, solve, validate_solution, SudokuConfig, BUNDLED_PUZZLES,
};
use izhirv_core::netsim::{
    build_8020, isi_histogram, run_simulation, Mode, SpikeRaster, ISI_BIN_MS, ISI_MAX_MS, N_EXCITATORY,
};

use output::RunOutput;

#[derive(Parser)]
#[command(name = "izhirv", version, about = "RV32IM + Izhikevich neuron extension simulator")]
struct Cli {
    /// Print per-instruction traces and per-item progress.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Fixed,
    Oracle,
    Both,
}

#[derive(clap::Args)]
struct OutArg {
    /// Output directory.
    #[arg(long, env = "IZHIRV_OUT", default_value = "izhirv-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the 1000-neuron 80/20 network.
    #[command(name = "run-8020")]
    Run8020 {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        ticks: u32,
        #[arg(long, value_enum, default_value_t = ModeArg::Fixed)]
        mode: ModeArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Solve every puzzle in a file with the winner-take-all network.
    SolveSudoku {
        /// Puzzle file, one 81-character puzzle per line (bundled set if omitted).
        #[arg(long)]
        puzzles: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Overrides the configured tick cap.
        #[arg(long)]
        max_ticks: Option<u32>,
        /// Network constants (bundled sudoku.conf if omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Assemble (or load a .hex/.bin image) and run it on the machine.
    RunAsm {
        file: PathBuf,
        /// Load address for flat binaries.
        #[arg(long, default_value_t = 0, value_parser = parse_u32)]
        base: u32,
        #[arg(long, default_value_t = 10_000_000)]
        max_instructions: u64,
        #[arg(long, default_value_t = 1)]
        stall_cycles: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Print the decay unit's shift combinations and approximation errors.
    DcuTable {
        #[arg(long)]
        csv: bool,
    },
    /// Assemble instructions and print their machine words.
    Encode {
        #[arg(required = true)]
        instructions: Vec<String>,
    },
    /// Disassemble machine words given in hex.
    Decode {
        #[arg(required = true)]
        words: Vec<String>,
    },
}

fn parse_u32(s: &str) -> Result<u32, String> {
    let t = s.trim();
    let r = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(h) => u32::from_str_radix(h, 16),
        None => t.parse(),
    };
    r.map_err(|e| format!("invalid number `{s}`: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// `Ok(false)` means the work ran but some validation failed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run8020 { seed, ticks, mode, out } => cmd_run_8020(seed, ticks, mode, &out.out),
        Command::SolveSudoku { puzzles, seed, max_ticks, config, out } => {
            cmd_solve_sudoku(puzzles.as_deref(), seed, max_ticks, config.as_deref(), &out.out, cli.verbose)
        }
        Command::RunAsm { file, base, max_instructions, stall_cycles, out } => {
            cmd_run_asm(&file, base, max_instructions, stall_cycles, &out.out, cli.verbose)
        }
        Command::DcuTable { csv } => {
            print!("{}", if csv { dcu_table_csv() } else { dcu_table_text() });
            Ok(true)
        }
        Command::Encode { instructions } => {
            let program = assemble(&instructions.join("\n")).map_err(anyhow::Error::msg)?;
            for w in program.word_values() {
                println!("{w:08x}");
            }
            Ok(true)
        }
        Command::Decode { words } => {
            for w in &words {
                println!("{}", disassemble(parse_u32(&format!("0x{}", w.trim_start_matches("0x"))).map_err(anyhow::Error::msg)?));
            }
            Ok(true)
        }
    }
}

fn summary_block(name: &str, r: &SpikeRaster) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[{name}]");
    let _ = writeln!(s, "spikes = {}", r.len());
    let _ = writeln!(s, "excitatory_rate_hz = {:.4}", r.mean_rate_hz(0..N_EXCITATORY));
    let _ = writeln!(s, "inhibitory_rate_hz = {:.4}", r.mean_rate_hz(N_EXCITATORY..r.n));
    s
}

fn cmd_run_8020(seed: u64, ticks: u32, mode: ModeArg, out: &Path) -> Result<bool> {
    let spec = build_8020(seed);
    let mut run = RunOutput::new(out, "run-8020");
    let mode_name = match mode {
        ModeArg::Fixed => "fixed",
        ModeArg::Oracle => "oracle",
        ModeArg::Both => "both",
    };
    run.setting("seed", seed).setting("ticks", ticks).setting("mode", mode_name);
    run.setting("isi_bin_ms", ISI_BIN_MS).setting("isi_max_ms", ISI_MAX_MS);
    let mut summary = format!("neurons = {}\nticks = {ticks}\nseed = {seed}\nmode = {mode_name}\n", spec.len());
    let modes: &[(Mode, &str)] = match mode {
        ModeArg::Fixed => &[(Mode::Fixed, "")],
        ModeArg::Oracle => &[(Mode::Oracle, "")],
        ModeArg::Both => &[(Mode::Fixed, "_fixed"), (Mode::Oracle, "_oracle")],
    };
    let mut hists = Vec::new();
    for &(m, suffix) in modes {
        let raster = run_simulation(&spec, ticks, m);
        let hist = isi_histogram(&raster, ISI_BIN_MS, ISI_MAX_MS);
        run.file(&format!("raster{suffix}.csv"), raster.to_csv());
        run.file(&format!("isi{suffix}.csv"), hist.to_csv());
        summary += &summary_block(if m == Mode::Fixed { "fixed" } else { "oracle" }, &raster);
        hists.push(hist);
    }
    if let [a, b] = &hists[..] {
        let _ = writeln!(summary, "isi_l1_distance = {:.4}", a.l1_distance(b));
    }
    run.file("summary.txt", summary.clone());
    run.write()?;
    print!("{summary}");
    Ok(true)
}

fn cmd_solve_sudoku(
    puzzles: Option<&Path>,
    seed: u64,
    max_ticks: Option<u32>,
    config: Option<&Path>,
    out: &Path,
    verbose: bool,
) -> Result<bool> {
    let text = match puzzles {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?,
        None => BUNDLED_PUZZLES.to_owned(),
    };
    let config_text = match config {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?,
        None => izhirv_core::netsim::sudoku::DEFAULT_CONFIG_TEXT.to_owned(),
    };
    let mut cfg: SudokuConfig = config_text.parse().context("bad network config")?;
    if let Some(t) = max_ticks {
        cfg.max_ticks = t;
    }
    let mut run = RunOutput::new(out, "solve-sudoku");
    run.setting("seed", seed).setting("max_ticks", cfg.max_ticks).setting("config_version", cfg.version);
    run.hash_input(&config_text).hash_input(&text);

    let mut ok = true;
    let mut csv = String::from("line,clues,status,ticks,solution\n");
    let mut table = format!("{:>5} {:>5} {:>10} {:>8}\n", "line", "clues", "status", "ticks");
    let (mut n_solved, mut n_total) = (0, 0);
    for (line, parsed) in parse_puzzle_file(&text) {
        n_total += 1;
        let p = match parsed {
            Ok(p) => p,
            Err(e) => {
                eprintln!("line {line}: {e}");
                let _ = writeln!(csv, "{line},,malformed,,");
                let _ = writeln!(table, "{line:>5} {:>5} {:>10} {:>8}", "-", "malformed", "-");
                ok = false;
                continue;
            }
        };
        let outcome = solve(&p, &cfg, seed, Mode::Fixed);
        let status = match outcome.solution {
            Some(g) if validate_solution(&g, &p) && backtracking_solve(&p).is_some_and(|b| validate_solution(&b, &p)) => {
                n_solved += 1;
                "solved"
            }
            Some(_) => "invalid",
            None => "unsolved",
        };
        ok &= status == "solved";
        let sol = outcome.solution.map(|g| grid_to_string(&g)).unwrap_or_default();
        let _ = writeln!(csv, "{line},{},{status},{},{sol}", p.clue_count(), outcome.ticks);
        let _ = writeln!(table, "{line:>5} {:>5} {status:>10} {:>8}", p.clue_count(), outcome.ticks);
        if verbose {
            eprintln!("line {line}: {status} after {} ticks", outcome.ticks);
        }
    }
    let _ = writeln!(table, "solved {n_solved}/{n_total}");
    run.file("sudoku.csv", csv).file("summary.txt", table.clone());
    run.write()?;
    print!("{table}");
    Ok(ok)
}

fn load_program(file: &Path, base: u32) -> Result<Program> {
    let ext = file.extension().and_then(|e| e.to_str()).unwrap_or("");
    let program = match ext {
        "bin" => {
            let bytes = std::fs::read(file).with_context(|| format!("cannot read {}", file.display()))?;
            read_flat_binary(&bytes, base)?
        }
        _ => {
            let text = std::fs::read_to_string(file).with_context(|| format!("cannot read {}", file.display()))?;
            if ext == "hex" {
                parse_hex_image(&text, base)?
            } else {
                assemble(&text).map_err(|e| anyhow::anyhow!("{}: {e}", file.display()))?
            }
        }
    };
    if program.is_empty() {
        bail!("{}: no instructions", file.display());
    }
    Ok(program)
}

fn cmd_run_asm(file: &Path, base: u32, max: u64, stall_cycles: u64, out: &Path, verbose: bool) -> Result<bool> {
    let program = load_program(file, base)?;
    let source = std::fs::read(file)?;
    let mut m = Machine::default().with_timing(TimingConfig { stall_cycles, ..TimingConfig::default() });
    m.load_program(&program)?;
    if verbose {
        m.enable_trace();
    }
    let result = m.run(max);
    let trace: String = m.take_trace().iter().map(|t| format!("{t}\n")).collect();
    if verbose {
        eprint!("{trace}");
    }
    let report = result.map_err(|trap| anyhow::anyhow!("trap: {trap}"))?;

    let mut text = String::new();
    for i in 0..32 {
        let _ = write!(text, "{:>4} {:08x}", Reg::x(i as u8).to_string(), m.reg(i));
        text.push(if i % 4 == 3 { '\n' } else { ' ' });
    }
    let _ = writeln!(text, "pc {:08x}", m.pc());
    text += &report.counters.to_string();
    if report.stop == StopReason::BudgetExhausted {
        let _ = writeln!(text, "stopped: instruction budget of {max} exhausted");
    }
    let csv = format!(
        "{}\n{}\n",
        izhirv_core::machine::PerfCounters::CSV_HEADER,
        report.counters.to_csv_row()
    );
    let mut run = RunOutput::new(out, "run-asm");
    run.setting("program", file.display()).setting("max_instructions", max).setting("stall_cycles", stall_cycles);
    run.hash_input(&String::from_utf8_lossy(&source));
    run.file("counters.csv", csv).file("summary.txt", text.clone());
    if verbose {
        run.file("trace.txt", trace);
    }
    run.write()?;
    print!("{text}");
    Ok(report.stop == StopReason::Halted)
}

const DISPUTED_NOTE: &str = "* computed from the listed shifts; the reference table prints 12.1093, \
which these shifts do not produce";

fn dcu_rows() -> Vec<(DividerSelect, String, f64, f64, f64)> {
    DividerSelect::ALL
        .iter()
        .map(|&d| {
            let v = d.combo().value();
            let reference = REFERENCE_AE.iter().find(|r| r.0 == d.divisor()).map_or(f64::NAN, |r| r.1);
            (d, d.combo().to_string(), *v.numer() as f64 / *v.denom() as f64, approximation_error(d), reference)
        })
        .collect()
}

fn dcu_table_text() -> String {
    let mut s = format!("{:<8}{:<44}{:<14}{:>10}{:>14}\n", "divider", "shifts", "value", "AE (%)", "reference (%)");
    for (d, combo, value, ae, reference) in dcu_rows() {
        let mark = if reference_ae_disputed(d) { "*" } else { " " };
        let _ = writeln!(s, "{:<8}{combo:<44}{value:<14}{:>9.4}{mark}{reference:>14.4}", format!("/{}", d.divisor()), ae);
    }
    let _ = writeln!(s, "{DISPUTED_NOTE}");
    s
}

fn dcu_table_csv() -> String {
    let mut s = String::from("divider,shifts,value,ae_percent,reference_percent,note\n");
    for (d, _, value, ae, reference) in dcu_rows() {
        let shifts: Vec<String> = d.combo().shifts().iter().map(u32::to_string).collect();
        let note = if reference_ae_disputed(d) { "reference disagrees with shifts" } else { "" };
        let _ = writeln!(s, "{},{},{value},{ae},{reference},{note}", d.divisor(), shifts.join(" "));
    }
    s
}
