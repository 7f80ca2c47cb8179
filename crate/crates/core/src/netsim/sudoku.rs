//! Winner-take-all Sudoku network: one neuron per (row, col, digit).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{InputModel, Mode, NetworkSpec, Simulation, SpikeRaster, Synapse};
use crate::dcu::DividerSelect;
use crate::fixedpoint::{Fixed, QFormat};
use crate::npu::{NeuronParams, TimeStep};

pub const N_NEURONS: usize = 729;

pub type Grid = [u8; 81];

/// Neuron index of digit `digit` (1..=9) in cell (`row`, `col`).
pub fn neuron_index(row: usize, col: usize, digit: u8) -> usize {
    (row * 9 + col) * 9 + (digit as usize - 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PuzzleError {
    #[error("expected 81 cells, found {0}")]
    Length(usize),
    #[error("invalid character {ch:?} at cell {pos}")]
    BadChar { ch: char, pos: usize },
    #[error("clue {digit} at cell {pos} conflicts with cell {other}")]
    Conflict { digit: u8, pos: usize, other: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SudokuPuzzle {
    cells: Grid,
}

fn peers(pos: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (pos / 9, pos % 9);
    let (br, bc) = (r / 3 * 3, c / 3 * 3);
    (0..81).filter(move |&q| {
        let (qr, qc) = (q / 9, q % 9);
        q != pos && (qr == r || qc == c || (qr / 3 * 3 == br && qc / 3 * 3 == bc))
    })
}

impl SudokuPuzzle {
    pub fn new(cells: Grid) -> Result<Self, PuzzleError> {
        for (pos, &digit) in cells.iter().enumerate() {
            if digit > 9 {
                return Err(PuzzleError::BadChar { ch: char::from(b'0' + digit.min(9)), pos });
            }
            if digit == 0 {
                continue;
            }
            if let Some(other) = peers(pos).find(|&q| q < pos && cells[q] == digit) {
                return Err(PuzzleError::Conflict { digit, pos, other });
            }
        }
        Ok(SudokuPuzzle { cells })
    }

    pub fn empty() -> Self {
        SudokuPuzzle { cells: [0; 81] }
    }

    pub fn cells(&self) -> &Grid {
        &self.cells
    }

    pub fn clue_count(&self) -> usize {
        self.cells.iter().filter(|&&d| d != 0).count()
    }

    pub fn is_complete(&self) -> bool {
        self.clue_count() == 81
    }
}

impl FromStr for SudokuPuzzle {
    type Err = PuzzleError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let n = s.chars().count();
        if n != 81 {
            return Err(PuzzleError::Length(n));
        }
        let mut cells = [0u8; 81];
        for (pos, ch) in s.chars().enumerate() {
            cells[pos] = match ch {
                '.' | '0' => 0,
                '1'..='9' => ch as u8 - b'0',
                _ => return Err(PuzzleError::BadChar { ch, pos }),
            };
        }
        SudokuPuzzle::new(cells)
    }
}

impl fmt::Display for SudokuPuzzle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&grid_to_string(&self.cells))
    }
}

pub fn grid_to_string(g: &Grid) -> String {
    g.iter().map(|&d| if d == 0 { '.' } else { char::from(b'0' + d) }).collect()
}

/// Parses a puzzle file: one puzzle per line, blank lines and `#` comments
/// skipped. Each entry carries its 1-based line number.
pub fn parse_puzzle_file(text: &str) -> Vec<(usize, Result<SudokuPuzzle, PuzzleError>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(k, l)| (k + 1, l.parse()))
        .collect()
}

/// Complete, row/column/box-unique, and agreeing with every clue.
pub fn validate_solution(grid: &Grid, p: &SudokuPuzzle) -> bool {
    if grid.iter().any(|&d| !(1..=9).contains(&d)) {
        return false;
    }
    if p.cells.iter().zip(grid).any(|(&c, &g)| c != 0 && c != g) {
        return false;
    }
    for k in 0..9 {
        let row = (0..9).map(|j| k * 9 + j);
        let col = (0..9).map(|j| j * 9 + k);
        let bx = (0..9).map(|j| (k / 3 * 3 + j / 3) * 9 + k % 3 * 3 + j % 3);
        for unit in [row.collect::<Vec<_>>(), col.collect(), bx.collect()] {
            let mut seen = 0u16;
            for pos in unit {
                seen |= 1 << grid[pos];
            }
            if seen != 0b11_1111_1110 {
                return false;
            }
        }
    }
    true
}

fn candidates(g: &Grid, pos: usize) -> u16 {
    let mut used = 0u16;
    for q in peers(pos) {
        used |= 1 << g[q];
    }
    !used & 0b11_1111_1110
}

fn search(g: &mut Grid, solutions: &mut Vec<Grid>, limit: usize) {
    let mut best: Option<(usize, u16)> = None;
    for pos in 0..81 {
        if g[pos] == 0 {
            let c = candidates(g, pos);
            if best.is_none_or(|(_, b)| c.count_ones() < b.count_ones()) {
                best = Some((pos, c));
            }
        }
    }
    let Some((pos, cands)) = best else {
        solutions.push(*g);
        return;
    };
    for d in 1..=9u8 {
        if cands & (1 << d) != 0 {
            g[pos] = d;
            search(g, solutions, limit);
            if solutions.len() >= limit {
                break;
            }
        }
    }
    g[pos] = 0;
}

/// Up to `limit` solutions by backtracking search.
pub fn backtracking_solutions(p: &SudokuPuzzle, limit: usize) -> Vec<Grid> {
    let mut g = p.cells;
    let mut out = Vec::new();
    if limit > 0 {
        search(&mut g, &mut out, limit);
    }
    out
}

pub fn backtracking_solve(p: &SudokuPuzzle) -> Option<Grid> {
    backtracking_solutions(p, 1).pop()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {0}: expected `key = value`")]
    Syntax(usize),
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`")]
    BadValue { line: usize, key: String },
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("unsupported config version {0}")]
    Version(u32),
    #[error("neuron parameters out of range")]
    Params,
}

/// Drive and read-out constants of the Sudoku network.
#[derive(Debug, Clone, PartialEq)]
pub struct SudokuConfig {
    pub version: u32,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub inhibitory_weight: f64,
    pub clue_bias: f64,
    pub noise_min: f64,
    pub noise_max: f64,
    pub decay: Option<DividerSelect>,
    pub h: TimeStep,
    pub substeps: u32,
    pub pin: bool,
    pub window: u32,
    pub stability: u32,
    pub max_ticks: u32,
}

pub const DEFAULT_CONFIG_TEXT: &str = include_str!("../../config/sudoku.conf");

/// The bundled puzzle set, in puzzle-file format.
pub const BUNDLED_PUZZLES: &str = include_str!("../../data/puzzles.txt");

const KEYS: [&str; 16] = [
    "version",
    "a",
    "b",
    "c",
    "d",
    "inhibitory_weight",
    "clue_bias",
    "noise_min",
    "noise_max",
    "decay_divider",
    "h_select",
    "substeps",
    "pin",
    "window",
    "stability",
    "max_ticks",
];

impl Default for SudokuConfig {
    fn default() -> Self {
        DEFAULT_CONFIG_TEXT.parse().expect("bundled sudoku.conf is valid")
    }
}

impl FromStr for SudokuConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut map: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax(k + 1))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { line: k + 1, key: key.to_owned() });
            }
            map.insert(key, (k + 1, value.trim()));
        }
        fn get<T: FromStr>(map: &BTreeMap<&str, (usize, &str)>, key: &'static str) -> Result<T, ConfigError> {
            let &(line, v) = map.get(key).ok_or(ConfigError::Missing(key))?;
            v.parse().map_err(|_| ConfigError::BadValue { line, key: key.to_owned() })
        }
        let version: u32 = get(&map, "version")?;
        if version != 1 {
            return Err(ConfigError::Version(version));
        }
        let divider: u32 = get(&map, "decay_divider")?;
        let decay = match divider {
            0 => None,
            d => Some(DividerSelect::new(d).map_err(|_| ConfigError::BadValue {
                line: map["decay_divider"].0,
                key: "decay_divider".into(),
            })?),
        };
        let cfg = SudokuConfig {
            version,
            a: get(&map, "a")?,
            b: get(&map, "b")?,
            c: get(&map, "c")?,
            d: get(&map, "d")?,
            inhibitory_weight: get(&map, "inhibitory_weight")?,
            clue_bias: get(&map, "clue_bias")?,
            noise_min: get(&map, "noise_min")?,
            noise_max: get(&map, "noise_max")?,
            decay,
            h: TimeStep::from_bit(get::<u8>(&map, "h_select")? != 0),
            substeps: get(&map, "substeps")?,
            pin: get(&map, "pin")?,
            window: get(&map, "window")?,
            stability: get(&map, "stability")?,
            max_ticks: get(&map, "max_ticks")?,
        };
        cfg.neuron_params()?;
        Ok(cfg)
    }
}

impl SudokuConfig {
    pub fn neuron_params(&self) -> Result<NeuronParams, ConfigError> {
        NeuronParams::from_real(self.a, self.b, self.c, self.d).map_err(|_| ConfigError::Params)
    }
}

/// Neurons inhibited by `idx`: the other eight digits of its cell, then
/// the same digit in every other cell of its row, column and box.
pub fn inhibition_targets(idx: usize) -> Vec<usize> {
    let (cell, digit) = (idx / 9, (idx % 9) as u8 + 1);
    let mut out: Vec<usize> = (1..=9u8).filter(|&d| d != digit).map(|d| neuron_index(cell / 9, cell % 9, d)).collect();
    out.extend(peers(cell).map(|q| neuron_index(q / 9, q % 9, digit)));
    out.sort_unstable();
    out
}

pub fn build_sudoku(p: &SudokuPuzzle, cfg: &SudokuConfig, seed: u64) -> NetworkSpec {
    let params = cfg.neuron_params().expect("validated on parse");
    let mut spec = NetworkSpec::uniform(N_NEURONS, params);
    let mut input = InputModel::silent(N_NEURONS);
    for cell in 0..81 {
        for digit in 1..=9u8 {
            let i = cell * 9 + digit as usize - 1;
            match p.cells[cell] {
                0 => {
                    input.bias[i] = cfg.noise_min;
                    input.uniform[i] = cfg.noise_max - cfg.noise_min;
                }
                clue if clue == digit => input.bias[i] = cfg.clue_bias,
                _ => {}
            }
        }
    }
    spec.input = input;
    let w = Fixed::saturating_from_real(cfg.inhibitory_weight, QFormat::Q15_16).raw();
    for (pre, out) in spec.synapses.iter_mut().enumerate() {
        *out = inhibition_targets(pre)
            .into_iter()
            .map(|t| Synapse { target: t as u32, w, w_real: cfg.inhibitory_weight })
            .collect();
    }
    spec.decay = cfg.decay;
    spec.h = cfg.h;
    spec.substeps = cfg.substeps;
    spec.pin = cfg.pin;
    spec.input_seed = seed;
    spec
}

/// Per cell, the digit with most spikes in `counts` (first maximum on
/// ties). `None` if any cell is silent.
pub fn grid_from_counts(counts: &[u32]) -> Option<Grid> {
    let mut g = [0u8; 81];
    for (cell, slot) in g.iter_mut().enumerate() {
        let c = &counts[cell * 9..cell * 9 + 9];
        let (best, &n) = c.iter().enumerate().rev().max_by_key(|&(_, n)| n).unwrap();
        if n == 0 {
            return None;
        }
        *slot = best as u8 + 1;
    }
    Some(g)
}

/// Tracks consecutive identical valid windows.
#[derive(Debug, Clone)]
pub struct Convergence<'a> {
    puzzle: &'a SudokuPuzzle,
    stability: u32,
    last: Option<Grid>,
    streak: u32,
}

impl<'a> Convergence<'a> {
    pub fn new(puzzle: &'a SudokuPuzzle, stability: u32) -> Self {
        Convergence { puzzle, stability, last: None, streak: 0 }
    }

    /// Feed one window's spike counts; returns the grid once converged.
    pub fn push(&mut self, counts: &[u32]) -> Option<Grid> {
        match grid_from_counts(counts).filter(|g| validate_solution(g, self.puzzle)) {
            Some(g) => {
                if self.last == Some(g) {
                    self.streak += 1;
                } else {
                    self.last = Some(g);
                    self.streak = 1;
                }
            }
            None => {
                self.last = None;
                self.streak = 0;
            }
        }
        (self.streak >= self.stability).then(|| self.last.unwrap())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extraction {
    Converged { grid: Grid, tick: u32 },
    Unconverged,
}

/// Scan non-overlapping `window`-tick windows of a recorded raster.
pub fn extract_solution(r: &SpikeRaster, p: &SudokuPuzzle, window: u32, stability: u32) -> Extraction {
    assert!(window > 0, "window must be positive");
    let mut conv = Convergence::new(p, stability);
    let mut counts = vec![0u32; N_NEURONS];
    let mut events = r.events.iter().peekable();
    let mut end = window;
    while end <= r.ticks {
        counts.iter_mut().for_each(|c| *c = 0);
        while let Some(&&(t, i)) = events.peek() {
            if t >= end {
                break;
            }
            counts[i as usize] += 1;
            events.next();
        }
        if let Some(grid) = conv.push(&counts) {
            return Extraction::Converged { grid, tick: end };
        }
        end += window;
    }
    Extraction::Unconverged
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOutcome {
    pub solution: Option<Grid>,
    pub ticks: u32,
}

/// Run the network until the read-out converges or `cfg.max_ticks`.
/// A fully given puzzle converges at tick 0.
pub fn solve(p: &SudokuPuzzle, cfg: &SudokuConfig, seed: u64, mode: Mode) -> SolveOutcome {
    if p.is_complete() {
        return SolveOutcome { solution: Some(p.cells), ticks: 0 };
    }
    let spec = build_sudoku(p, cfg, seed);
    let mut sim = Simulation::new(&spec, mode);
    let mut conv = Convergence::new(p, cfg.stability);
    let mut counts = vec![0u32; N_NEURONS];
    while sim.t() < cfg.max_ticks {
        for i in sim.tick() {
            counts[i as usize] += 1;
        }
        if sim.t() % cfg.window == 0 {
            if let Some(grid) = conv.push(&counts) {
                return SolveOutcome { solution: Some(grid), ticks: sim.t() };
            }
            counts.iter_mut().for_each(|c| *c = 0);
        }
    }
    SolveOutcome { solution: None, ticks: sim.t() }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EASY: &str = "53..7....6..195....98....6.8...6...34..8.3..17...2...6.6....28....419..5....8..79";
    const EASY_SOLUTION: &str =
        "534678912672195348198342567859761423426853791713924856961537284287419635345286179";

    fn grid(s: &str) -> Grid {
        *s.parse::<SudokuPuzzle>().unwrap().cells()
    }

    #[test]
    fn parsing() {
        assert_eq!(EASY.parse::<SudokuPuzzle>().unwrap().clue_count(), 30);
        assert_eq!(EASY[..80].parse::<SudokuPuzzle>(), Err(PuzzleError::Length(80)));
        let bad = EASY.replacen('.', "x", 1);
        assert!(matches!(bad.parse::<SudokuPuzzle>(), Err(PuzzleError::BadChar { ch: 'x', .. })));
        let conflict = format!("55{}", &EASY[2..]);
        assert!(matches!(conflict.parse::<SudokuPuzzle>(), Err(PuzzleError::Conflict { digit: 5, .. })));
        assert_eq!(EASY.parse::<SudokuPuzzle>().unwrap().to_string(), EASY);
    }

    #[test]
    fn backtracking_and_validation() {
        let p: SudokuPuzzle = EASY.parse().unwrap();
        let sol = backtracking_solve(&p).unwrap();
        assert_eq!(sol, grid(EASY_SOLUTION));
        assert_eq!(backtracking_solutions(&p, 2).len(), 1);
        assert!(validate_solution(&sol, &p));

        let mut dup = sol;
        dup.swap(0, 1);
        assert!(!validate_solution(&dup, &SudokuPuzzle::empty()));
        // valid grid but contradicts a clue
        let relabel: Grid = sol.map(|d| d % 9 + 1);
        assert!(validate_solution(&relabel, &SudokuPuzzle::empty()));
        assert!(!validate_solution(&relabel, &p));
    }

    #[test]
    fn topology_counts() {
        let five = neuron_index(0, 0, 5);
        let t = inhibition_targets(five);
        assert_eq!(t.len(), 28);
        let in_cell = t.iter().filter(|&&i| i / 9 == 0).count();
        assert_eq!(in_cell, 8);
        assert!(t.iter().filter(|&&i| i / 9 != 0).all(|&i| i % 9 == 4));
        for idx in 0..N_NEURONS {
            let t = inhibition_targets(idx);
            assert_eq!(t.len(), 28);
            assert!(!t.contains(&idx));
        }
    }

    #[test]
    fn empty_puzzle_is_all_noise() {
        let cfg = SudokuConfig::default();
        let spec = build_sudoku(&SudokuPuzzle::empty(), &cfg, 0);
        assert!(spec.input.bias.iter().all(|&b| b == cfg.noise_min));
        assert!(spec.input.uniform.iter().all(|&u| u == cfg.noise_max - cfg.noise_min));
    }

    #[test]
    fn clue_drive() {
        let cfg = SudokuConfig::default();
        let p: SudokuPuzzle = EASY.parse().unwrap();
        let spec = build_sudoku(&p, &cfg, 0);
        let five = neuron_index(0, 0, 5);
        assert_eq!(spec.input.bias[five], cfg.clue_bias);
        assert_eq!(spec.input.uniform[five], 0.0);
        let four = neuron_index(0, 0, 4);
        assert_eq!((spec.input.bias[four], spec.input.uniform[four]), (0.0, 0.0));
        assert!(spec.pin);
    }

    #[test]
    fn complete_puzzle_converges_immediately() {
        let p: SudokuPuzzle = EASY_SOLUTION.parse().unwrap();
        let out = solve(&p, &SudokuConfig::default(), 1, Mode::Fixed);
        assert_eq!(out, SolveOutcome { solution: Some(grid(EASY_SOLUTION)), ticks: 0 });
    }

    #[test]
    fn extraction_rules() {
        let sol = grid(EASY_SOLUTION);
        let p: SudokuPuzzle = EASY.parse().unwrap();
        let mut counts = vec![0u32; N_NEURONS];
        for (cell, &d) in sol.iter().enumerate() {
            counts[cell * 9 + d as usize - 1] = 3;
        }
        assert_eq!(grid_from_counts(&counts), Some(sol));
        let mut conv = Convergence::new(&p, 3);
        assert_eq!(conv.push(&counts), None);
        assert_eq!(conv.push(&counts), None);
        assert_eq!(conv.push(&counts), Some(sol));
        counts[5 * 9..6 * 9].iter_mut().for_each(|c| *c = 0);
        assert_eq!(grid_from_counts(&counts), None);
    }

    #[test]
    fn raster_extraction() {
        let p: SudokuPuzzle = EASY_SOLUTION.parse().unwrap();
        let mut r = SpikeRaster::new(N_NEURONS);
        r.ticks = 150;
        for w in 0..3 {
            for (cell, &d) in p.cells().iter().enumerate() {
                r.events.push((w * 50 + 10, (cell * 9 + d as usize - 1) as u32));
            }
        }
        r.events.sort_unstable();
        assert_eq!(extract_solution(&r, &p, 50, 3), Extraction::Converged { grid: *p.cells(), tick: 150 });
        assert_eq!(extract_solution(&r, &p, 50, 4), Extraction::Unconverged);
    }

    #[test]
    fn config_parsing() {
        let cfg = SudokuConfig::default();
        assert_eq!(cfg.version, 1);
        assert!(cfg.pin);
        assert!(matches!("a = 1".parse::<SudokuConfig>(), Err(ConfigError::Missing(_))));
        assert!(matches!("bogus = 1".parse::<SudokuConfig>(), Err(ConfigError::UnknownKey { .. })));
        let v2 = DEFAULT_CONFIG_TEXT.replace("version = 1", "version = 2");
        assert_eq!(v2.parse::<SudokuConfig>(), Err(ConfigError::Version(2)));
    }
}
