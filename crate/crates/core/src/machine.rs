//! RV32IM execution engine with the neuron extension, flat little-endian
//! memory, and a cycle-accounting model of the 3-stage pipeline.
//!
//! # Timing model
//!
//! Single issue, one cycle per retired instruction, plus a fixed pipeline
//! fill charged once per run, plus `stall_cycles` whenever a source register
//! of an instruction equals the destination register of the instruction
//! retired just before it (`x0` excluded). Caches, memory latency, and the
//! forwarding network are not modelled.

use std::fmt;

use thiserror::Error;

use crate::dcu::{decay_step, DividerSelect};
use crate::fixedpoint::{Fixed, QFormat};
use crate::isa::{disassemble, BranchOp, ImmOp, InstrClass, Instruction, LoadOp, Program, RegOp, StoreOp};
use crate::npu::{izh_step, NeuronParams, NmConfig, VuWord};

/// Equivalent scalar operations credited per neuron update in
/// [`PerfCounters::ipc_eff`].
pub const N_IZH_OP: u64 = 19;

pub const DEFAULT_MEMORY_SIZE: usize = 4 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Trap {
    #[error("illegal instruction {word:#010x} at pc {pc:#010x}")]
    IllegalInstruction { pc: u32, word: u32 },
    #[error("misaligned instruction fetch at {pc:#010x}")]
    MisalignedFetch { pc: u32 },
    #[error("misaligned {width}-byte access at {addr:#010x} (pc {pc:#010x})")]
    MisalignedAccess { pc: u32, addr: u32, width: u32 },
    #[error("access outside memory at {addr:#010x} (pc {pc:#010x})")]
    OutOfBounds { pc: u32, addr: u32 },
    #[error("nmdec divider {divider} outside 2..=8 at pc {pc:#010x}")]
    BadDivider { pc: u32, divider: u32 },
    #[error("machine is halted")]
    Halted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("zero cycles; IPC undefined")]
pub struct ZeroCycles;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PerfCounters {
    pub n_cycles: u64,
    pub n_instr: u64,
    pub n_reginstr: u64,
    pub n_updates: u64,
    pub n_decays: u64,
    pub n_config_instr: u64,
    pub n_hazard_stalls: u64,
}

impl PerfCounters {
    pub fn ipc(&self) -> Result<f64, ZeroCycles> {
        if self.n_cycles == 0 {
            return Err(ZeroCycles);
        }
        Ok(self.n_instr as f64 / self.n_cycles as f64)
    }

    /// Regular instructions plus each neuron update counted as
    /// [`N_IZH_OP`] operations, per cycle. May exceed 1.
    pub fn ipc_eff(&self) -> Result<f64, ZeroCycles> {
        if self.n_cycles == 0 {
            return Err(ZeroCycles);
        }
        Ok((self.n_reginstr + self.n_updates * N_IZH_OP) as f64 / self.n_cycles as f64)
    }

    pub fn hazard_stall_percent(&self) -> f64 {
        if self.n_cycles == 0 {
            0.0
        } else {
            100.0 * self.n_hazard_stalls as f64 / self.n_cycles as f64
        }
    }

    pub const CSV_HEADER: &'static str =
        "n_cycles,n_instr,n_reginstr,n_updates,n_decays,n_config_instr,n_hazard_stalls,ipc,ipc_eff";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.6},{:.6}",
            self.n_cycles,
            self.n_instr,
            self.n_reginstr,
            self.n_updates,
            self.n_decays,
            self.n_config_instr,
            self.n_hazard_stalls,
            self.ipc().unwrap_or(0.0),
            self.ipc_eff().unwrap_or(0.0)
        )
    }
}

impl fmt::Display for PerfCounters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: [(&str, String); 9] = [
            ("cycles", self.n_cycles.to_string()),
            ("instructions", self.n_instr.to_string()),
            ("regular", self.n_reginstr.to_string()),
            ("neuron updates", self.n_updates.to_string()),
            ("decays", self.n_decays.to_string()),
            ("config", self.n_config_instr.to_string()),
            ("hazard stalls", format!("{} ({:.3}%)", self.n_hazard_stalls, self.hazard_stall_percent())),
            ("IPC", self.ipc().map_or("n/a".into(), |v| format!("{v:.4}"))),
            ("IPC_eff", self.ipc_eff().map_or("n/a".into(), |v| format!("{v:.4}"))),
        ];
        for (name, value) in rows {
            writeln!(f, "{name:<16}{value:>16}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingConfig {
    pub stall_cycles: u64,
    pub fill_cycles: u64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig { stall_cycles: 1, fill_cycles: 2 }
    }
}

/// Stall cycles charged to `next` when it follows `prev`.
pub fn cycle_model(prev: &Instruction, next: &Instruction, timing: &TimingConfig) -> u64 {
    match prev.dest() {
        Some(rd) if rd.index() != 0 && next.sources().contains(&Some(rd)) => timing.stall_cycles,
        _ => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub cycle: u64,
    pub pc: u32,
    pub word: u32,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:08x} {:08x} {}", self.cycle, self.pc, self.word, disassemble(self.word))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Halted,
    BudgetExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunReport {
    pub stop: StopReason,
    pub counters: PerfCounters,
}

#[derive(Debug, Clone)]
pub struct Machine {
    regs: [u32; 32],
    pc: u32,
    mem: Vec<u8>,
    nm: NmConfig,
    halted: bool,
    halt_address: Option<u32>,
    timing: TimingConfig,
    counters: PerfCounters,
    prev: Option<Instruction>,
    trace: Option<Vec<TraceEntry>>,
}

impl Default for Machine {
    fn default() -> Self {
        Machine::new(DEFAULT_MEMORY_SIZE)
    }
}

impl Machine {
    pub fn new(memory_size: usize) -> Self {
        Machine {
            regs: [0; 32],
            pc: 0,
            mem: vec![0; memory_size],
            nm: NmConfig::default(),
            halted: false,
            halt_address: None,
            timing: TimingConfig::default(),
            counters: PerfCounters::default(),
            prev: None,
            trace: None,
        }
    }

    pub fn with_timing(mut self, timing: TimingConfig) -> Self {
        self.timing = timing;
        self
    }

    /// Halt when the pc reaches `addr`, before executing it.
    pub fn with_halt_address(mut self, addr: u32) -> Self {
        self.halt_address = Some(addr);
        self
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<TraceEntry> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn load_program(&mut self, program: &Program) -> Result<(), Trap> {
        for &(addr, word) in program.words() {
            self.write_word(addr, word)?;
        }
        self.pc = program.entry();
        Ok(())
    }

    pub fn pc(&self) -> u32 {
        self.pc
    }

    pub fn set_pc(&mut self, pc: u32) {
        self.pc = pc;
    }

    pub fn reg(&self, index: usize) -> u32 {
        self.regs[index]
    }

    pub fn regs(&self) -> &[u32; 32] {
        &self.regs
    }

    pub fn set_reg(&mut self, index: usize, value: u32) {
        if index != 0 {
            self.regs[index] = value;
        }
    }

    pub fn nm_config(&self) -> NmConfig {
        self.nm
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    pub fn counters(&self) -> PerfCounters {
        self.counters
    }

    pub fn reset_counters(&mut self) {
        self.counters = PerfCounters::default();
        self.prev = None;
    }

    pub fn memory(&self) -> &[u8] {
        &self.mem
    }

    fn check(&self, addr: u32, width: u32) -> Result<usize, Trap> {
        if addr % width != 0 {
            return Err(Trap::MisalignedAccess { pc: self.pc, addr, width });
        }
        let start = addr as usize;
        if start + width as usize > self.mem.len() {
            return Err(Trap::OutOfBounds { pc: self.pc, addr });
        }
        Ok(start)
    }

    pub fn read_word(&self, addr: u32) -> Result<u32, Trap> {
        let i = self.check(addr, 4)?;
        Ok(u32::from_le_bytes(self.mem[i..i + 4].try_into().unwrap()))
    }

    pub fn write_word(&mut self, addr: u32, value: u32) -> Result<(), Trap> {
        let i = self.check(addr, 4)?;
        self.mem[i..i + 4].copy_from_slice(&value.to_le_bytes());
        Ok(())
    }

    fn read(&self, addr: u32, width: u32) -> Result<u32, Trap> {
        let i = self.check(addr, width)?;
        Ok(match width {
            1 => self.mem[i] as u32,
            2 => u16::from_le_bytes([self.mem[i], self.mem[i + 1]]) as u32,
            _ => u32::from_le_bytes(self.mem[i..i + 4].try_into().unwrap()),
        })
    }

    fn write(&mut self, addr: u32, width: u32, value: u32) -> Result<(), Trap> {
        let i = self.check(addr, width)?;
        let bytes = value.to_le_bytes();
        self.mem[i..i + width as usize].copy_from_slice(&bytes[..width as usize]);
        Ok(())
    }

    fn fetch(&self) -> Result<u32, Trap> {
        if self.pc % 4 != 0 {
            return Err(Trap::MisalignedFetch { pc: self.pc });
        }
        self.read_word(self.pc)
    }

    /// Execute one instruction. On a trap nothing is written and the
    /// machine halts.
    pub fn step(&mut self) -> Result<(), Trap> {
        if self.halted {
            return Err(Trap::Halted);
        }
        match self.try_step() {
            Ok(()) => Ok(()),
            Err(trap) => {
                self.halted = true;
                Err(trap)
            }
        }
    }

    fn try_step(&mut self) -> Result<(), Trap> {
        use Instruction::*;
        let pc = self.pc;
        let word = self.fetch()?;
        let insn = Instruction::decode(word).map_err(|_| Trap::IllegalInstruction { pc, word })?;
        let x = |r: crate::isa::Reg| self.regs[r.index()];
        let mut next_pc = pc.wrapping_add(4);
        let mut rd_value: Option<(usize, u32)> = None;

        match insn {
            Lui { rd, imm20 } => rd_value = Some((rd.index(), imm20 << 12)),
            Auipc { rd, imm20 } => rd_value = Some((rd.index(), pc.wrapping_add(imm20 << 12))),
            Jal { rd, offset } => {
                rd_value = Some((rd.index(), next_pc));
                next_pc = pc.wrapping_add(offset as u32);
            }
            Jalr { rd, rs1, offset } => {
                rd_value = Some((rd.index(), next_pc));
                next_pc = x(rs1).wrapping_add(offset as u32) & !1;
            }
            Branch { op, rs1, rs2, offset } => {
                let (a, b) = (x(rs1), x(rs2));
                let taken = match op {
                    BranchOp::Beq => a == b,
                    BranchOp::Bne => a != b,
                    BranchOp::Blt => (a as i32) < (b as i32),
                    BranchOp::Bge => (a as i32) >= (b as i32),
                    BranchOp::Bltu => a < b,
                    BranchOp::Bgeu => a >= b,
                };
                if taken {
                    next_pc = pc.wrapping_add(offset as u32);
                }
            }
            Load { op, rd, rs1, offset } => {
                let addr = x(rs1).wrapping_add(offset as u32);
                let value = match op {
                    LoadOp::Lb => self.read(addr, 1)? as u8 as i8 as i32 as u32,
                    LoadOp::Lh => self.read(addr, 2)? as u16 as i16 as i32 as u32,
                    LoadOp::Lw => self.read(addr, 4)?,
                    LoadOp::Lbu => self.read(addr, 1)?,
                    LoadOp::Lhu => self.read(addr, 2)?,
                };
                rd_value = Some((rd.index(), value));
            }
            Store { op, rs1, rs2, offset } => {
                let addr = x(rs1).wrapping_add(offset as u32);
                let width = match op {
                    StoreOp::Sb => 1,
                    StoreOp::Sh => 2,
                    StoreOp::Sw => 4,
                };
                self.write(addr, width, x(rs2))?;
            }
            OpImm { op, rd, rs1, imm } => {
                let a = x(rs1);
                let b = imm as u32;
                let value = match op {
                    ImmOp::Addi => a.wrapping_add(b),
                    ImmOp::Slti => ((a as i32) < imm) as u32,
                    ImmOp::Sltiu => (a < b) as u32,
                    ImmOp::Xori => a ^ b,
                    ImmOp::Ori => a | b,
                    ImmOp::Andi => a & b,
                    ImmOp::Slli => a << (b & 31),
                    ImmOp::Srli => a >> (b & 31),
                    ImmOp::Srai => ((a as i32) >> (b & 31)) as u32,
                };
                rd_value = Some((rd.index(), value));
            }
            Op { op, rd, rs1, rs2 } => rd_value = Some((rd.index(), alu(op, x(rs1), x(rs2)))),
            Fence { .. } | Ecall => {}
            Ebreak => self.halted = true,
            Nmldl { rd, rs1, rs2 } => {
                self.nm = self.nm.load_params(NeuronParams::from_registers(x(rs1), x(rs2)));
                rd_value = Some((rd.index(), 1));
            }
            Nmldh { rd, rs1 } => {
                let flags = x(rs1);
                self.nm = self.nm.load_h(flags & 1 != 0, flags & 2 != 0);
                rd_value = Some((rd.index(), 1));
            }
            Nmpn { rd, rs1, rs2 } => {
                let addr = x(rd);
                self.check(addr, 4)?;
                let i_syn = Fixed::from_bits(x(rs2), QFormat::Q15_16);
                let out = izh_step(VuWord(x(rs1)), i_syn, &self.nm);
                self.write_word(addr, out.vu.0)?;
                rd_value = Some((rd.index(), out.spike as u32));
            }
            Nmdec { rd, rs1, rs2 } => {
                let divider = x(rs2);
                let d = DividerSelect::new(divider).map_err(|_| Trap::BadDivider { pc, divider })?;
                let out = decay_step(Fixed::from_bits(x(rs1), QFormat::Q15_16), d, self.nm.h);
                rd_value = Some((rd.index(), out.raw() as u32));
            }
        }

        if let Some((rd, value)) = rd_value {
            if rd != 0 {
                self.regs[rd] = value;
            }
        }
        self.pc = next_pc;
        self.retire(&insn, pc, word);
        if self.halt_address == Some(self.pc) {
            self.halted = true;
        }
        Ok(())
    }

    fn retire(&mut self, insn: &Instruction, pc: u32, word: u32) {
        let c = &mut self.counters;
        if c.n_instr == 0 {
            c.n_cycles += self.timing.fill_cycles;
        }
        let stalls = self.prev.map_or(0, |prev| cycle_model(&prev, insn, &self.timing));
        c.n_hazard_stalls += stalls;
        c.n_cycles += 1 + stalls;
        c.n_instr += 1;
        match insn.class() {
            InstrClass::Regular => c.n_reginstr += 1,
            InstrClass::Config => c.n_config_instr += 1,
            InstrClass::Update => c.n_updates += 1,
            InstrClass::Decay => c.n_decays += 1,
        }
        self.prev = Some(*insn);
        let cycle = c.n_cycles;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEntry { cycle, pc, word });
        }
    }

    /// Step until halted or `max_instructions` have retired in this call.
    pub fn run(&mut self, max_instructions: u64) -> Result<RunReport, Trap> {
        if self.halt_address == Some(self.pc) {
            self.halted = true;
        }
        let mut retired = 0;
        while !self.halted {
            if retired == max_instructions {
                return Ok(RunReport { stop: StopReason::BudgetExhausted, counters: self.counters });
            }
            self.step()?;
            retired += 1;
        }
        Ok(RunReport { stop: StopReason::Halted, counters: self.counters })
    }
}

fn alu(op: RegOp, a: u32, b: u32) -> u32 {
    let (sa, sb) = (a as i32, b as i32);
    match op {
        RegOp::Add => a.wrapping_add(b),
        RegOp::Sub => a.wrapping_sub(b),
        RegOp::Sll => a << (b & 31),
        RegOp::Slt => (sa < sb) as u32,
        RegOp::Sltu => (a < b) as u32,
        RegOp::Xor => a ^ b,
        RegOp::Srl => a >> (b & 31),
        RegOp::Sra => (sa >> (b & 31)) as u32,
        RegOp::Or => a | b,
        RegOp::And => a & b,
        RegOp::Mul => a.wrapping_mul(b),
        RegOp::Mulh => ((sa as i64 * sb as i64) >> 32) as u32,
        RegOp::Mulhsu => ((sa as i64 * b as i64) >> 32) as u32,
        RegOp::Mulhu => ((a as u64 * b as u64) >> 32) as u32,
        RegOp::Div => {
            if b == 0 {
                u32::MAX
            } else {
                sa.wrapping_div(sb) as u32
            }
        }
        RegOp::Divu => a.checked_div(b).unwrap_or(u32::MAX),
        RegOp::Rem => {
            if b == 0 {
                a
            } else {
                sa.wrapping_rem(sb) as u32
            }
        }
        RegOp::Remu => a.checked_rem(b).unwrap_or(a),
    }
}

/// Replay a retired-instruction trace through the counter model.
pub fn counters_for_trace(trace: &[Instruction], timing: &TimingConfig) -> PerfCounters {
    let mut c = PerfCounters::default();
    let mut prev: Option<&Instruction> = None;
    for insn in trace {
        if c.n_instr == 0 {
            c.n_cycles += timing.fill_cycles;
        }
        let stalls = prev.map_or(0, |p| cycle_model(p, insn, timing));
        c.n_hazard_stalls += stalls;
        c.n_cycles += 1 + stalls;
        c.n_instr += 1;
        match insn.class() {
            InstrClass::Regular => c.n_reginstr += 1,
            InstrClass::Config => c.n_config_instr += 1,
            InstrClass::Update => c.n_updates += 1,
            InstrClass::Decay => c.n_decays += 1,
        }
        prev = Some(insn);
    }
    c
}

/// Neuron-update kernel: loads the parameters, reads the thalamic and
/// synaptic inputs, and issues one `nmpn`. Expects a neuron record at
/// [`KERNEL_RECORD`] (`vu`, params low word, params high word, flags).
pub const KERNEL_SOURCE: &str = "\
_start:
    li a3, 0x1000       # neuron record
    li a4, 0x1010       # thalamic input
    li a0, 0x1014       # synaptic current
    lw t0, 12(a3)
    nmldh x0, t0        # h select and pin
    lw a6, 4(a3)
    lw a7, 8(a3)
    nmldl x0, a6, a7    # load a, b, c, d
    lw t5, (a4)         # read the thalamic
    lw a7, (a0)         # read current
    lw a6, (a3)         # read vu
    add a7, a7, t5
    add a2, x0, a3
    nmpn a2, a6, a7     # update, store vu, spike flag into a2
    ebreak
";

pub const KERNEL_RECORD: u32 = 0x1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelRun {
    pub vu: VuWord,
    pub spike: bool,
    pub counters: PerfCounters,
}

/// Runs [`KERNEL_SOURCE`] once on a fresh machine. The neuron sees
/// `thalamic + current` as a wrapping 32-bit sum, as the guest computes it.
pub fn run_kernel(vu: VuWord, thalamic: u32, current: u32, cfg: &NmConfig) -> Result<KernelRun, Trap> {
    let program = crate::isa::assemble(KERNEL_SOURCE).expect("kernel source assembles");
    let mut m = Machine::new(64 * 1024);
    m.load_program(&program)?;
    let (lo, hi) = cfg.params.to_registers();
    m.write_word(KERNEL_RECORD, vu.0)?;
    m.write_word(KERNEL_RECORD + 4, lo)?;
    m.write_word(KERNEL_RECORD + 8, hi)?;
    m.write_word(KERNEL_RECORD + 12, cfg.flags_word())?;
    m.write_word(KERNEL_RECORD + 0x10, thalamic)?;
    m.write_word(KERNEL_RECORD + 0x14, current)?;
    let report = m.run(1000)?;
    debug_assert_eq!(report.stop, StopReason::Halted);
    Ok(KernelRun { vu: VuWord(m.read_word(KERNEL_RECORD)?), spike: m.reg(12) != 0, counters: report.counters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{assemble, Reg};

    fn run_src(src: &str) -> (Machine, RunReport) {
        let mut m = Machine::new(64 * 1024);
        m.load_program(&assemble(src).unwrap()).unwrap();
        let report = m.run(10_000).unwrap();
        (m, report)
    }

    #[test]
    fn ebreak_only() {
        let (m, r) = run_src("ebreak");
        assert_eq!(r.stop, StopReason::Halted);
        assert_eq!(r.counters.n_instr, 1);
        assert_eq!(r.counters.n_cycles, 3);
        assert!(m.is_halted());
    }

    #[test]
    fn x0_stays_zero() {
        let (m, _) = run_src("addi x0, x0, 5\nlui x0, 1\nebreak");
        assert_eq!(m.reg(0), 0);
    }

    #[test]
    fn nmldl_acknowledges() {
        let (m, r) = run_src("li a0, 0x019a0029\nli a1, 0x4000bf00\nnmldl t0, a0, a1\nebreak");
        assert_eq!(m.reg(5), 1);
        let p = m.nm_config().params;
        assert_eq!(p.a().raw(), 0x29);
        assert_eq!(p.b().raw(), 0x19a);
        assert_eq!(p.c().to_real(), -65.0);
        assert_eq!(p.d().to_real(), 8.0);
        assert_eq!(r.counters.n_config_instr, 1);
    }

    #[test]
    fn nmldh_sets_flags() {
        let (m, _) = run_src("li a0, 3\nnmldh t1, a0\nebreak");
        assert_eq!(m.reg(6), 1);
        assert!(m.nm_config().pin);
        assert!(m.nm_config().h.bit());
    }

    #[test]
    fn alu_semantics() {
        assert_eq!(alu(RegOp::Div, 7, 0), u32::MAX);
        assert_eq!(alu(RegOp::Div, i32::MIN as u32, -1i32 as u32), i32::MIN as u32);
        assert_eq!(alu(RegOp::Rem, i32::MIN as u32, -1i32 as u32), 0);
        assert_eq!(alu(RegOp::Remu, 7, 0), 7);
        assert_eq!(alu(RegOp::Mulh, -2i32 as u32, 3), u32::MAX);
        assert_eq!(alu(RegOp::Mulhu, u32::MAX, u32::MAX), 0xFFFF_FFFE);
        assert_eq!(alu(RegOp::Mulhsu, -1i32 as u32, u32::MAX), u32::MAX);
        assert_eq!(alu(RegOp::Sra, 0x8000_0000, 4), 0xF800_0000);
    }

    #[test]
    fn loads_and_stores() {
        let src = "li a0, 0x1000\nli a1, -2\nsb a1, 1(a0)\nlb a2, 1(a0)\nlbu a3, 1(a0)\nsh a1, 2(a0)\nlhu a4, 2(a0)\nlw a5, 0(a0)\nebreak";
        let (m, _) = run_src(src);
        assert_eq!(m.reg(12), -2i32 as u32);
        assert_eq!(m.reg(13), 0xFE);
        assert_eq!(m.reg(14), 0xFFFE);
        assert_eq!(m.reg(15), 0xFFFE_FE00);
    }

    #[test]
    fn jumps_and_loops() {
        let src = "li a0, 0\nli a1, 10\nloop: addi a0, a0, 3\naddi a1, a1, -1\nbnez a1, loop\ncall f\nebreak\nf: addi a0, a0, 1\nret";
        let (m, _) = run_src(src);
        assert_eq!(m.reg(10), 31);
    }

    #[test]
    fn traps() {
        let mut m = Machine::new(1024);
        m.load_program(&assemble("li a0, 2\nlw a1, 0(a0)").unwrap()).unwrap();
        assert_eq!(m.run(10), Err(Trap::MisalignedAccess { pc: 4, addr: 2, width: 4 }));
        assert!(m.is_halted());
        assert_eq!(m.step(), Err(Trap::Halted));

        let mut m = Machine::new(1024);
        m.load_program(&assemble(".word 0xffffffff").unwrap()).unwrap();
        assert_eq!(m.run(10), Err(Trap::IllegalInstruction { pc: 0, word: 0xFFFF_FFFF }));

        let mut m = Machine::new(1024);
        m.load_program(&assemble("li a0, 4096\nsw a0, 0(a0)").unwrap()).unwrap();
        assert_eq!(m.run(10), Err(Trap::OutOfBounds { pc: 4, addr: 4096 }));

        let mut m = Machine::new(1024);
        m.load_program(&assemble("li a0, 9\nnmdec a1, a1, a0").unwrap()).unwrap();
        assert_eq!(m.run(10), Err(Trap::BadDivider { pc: 4, divider: 9 }));
    }

    #[test]
    fn nmpn_trap_has_no_side_effects() {
        let mut m = Machine::new(1024);
        m.load_program(&assemble("li a2, 4096\nli a6, 0x12345678\nnmpn a2, a6, a7").unwrap()).unwrap();
        let before = m.memory().to_vec();
        assert!(m.run(10).is_err());
        assert_eq!(m.reg(12), 4096);
        assert_eq!(m.memory(), &before[..]);
    }

    #[test]
    fn budget_exhaustion_is_not_a_trap() {
        let mut m = Machine::new(1024);
        m.load_program(&assemble("loop: j loop").unwrap()).unwrap();
        let r = m.run(5).unwrap();
        assert_eq!(r.stop, StopReason::BudgetExhausted);
        assert_eq!(r.counters.n_instr, 5);
    }

    #[test]
    fn halt_address() {
        let mut m = Machine::new(1024).with_halt_address(8);
        m.load_program(&assemble("nop\nnop\nnop\nnop").unwrap()).unwrap();
        let r = m.run(100).unwrap();
        assert_eq!(r.stop, StopReason::Halted);
        assert_eq!(r.counters.n_instr, 2);
    }

    #[test]
    fn cycle_model_rule() {
        let t = TimingConfig::default();
        let add = |rd, rs1, rs2| Instruction::Op { op: RegOp::Add, rd: Reg::x(rd), rs1: Reg::x(rs1), rs2: Reg::x(rs2) };
        assert_eq!(cycle_model(&add(1, 2, 3), &add(4, 1, 5), &t), 1);
        assert_eq!(cycle_model(&add(1, 2, 3), &add(4, 5, 6), &t), 0);
        assert_eq!(cycle_model(&add(0, 2, 3), &add(4, 0, 0), &t), 0);
        let pn = Instruction::Nmpn { rd: Reg::x(1), rs1: Reg::x(7), rs2: Reg::x(8) };
        assert_eq!(cycle_model(&add(1, 2, 3), &pn, &t), 1);
        let t3 = TimingConfig { stall_cycles: 3, fill_cycles: 2 };
        assert_eq!(cycle_model(&add(1, 2, 3), &add(4, 5, 1), &t3), 3);
    }

    #[test]
    fn ipc_formulas() {
        let c = PerfCounters { n_instr: 10, n_cycles: 20, n_reginstr: 10, ..Default::default() };
        assert_eq!(c.ipc().unwrap(), 0.5);
        assert_eq!(c.ipc_eff().unwrap(), 0.5);
        let c = PerfCounters { n_reginstr: 100, n_updates: 10, n_instr: 110, n_cycles: 200, ..Default::default() };
        assert_eq!(c.ipc_eff().unwrap(), 1.45);
        assert_eq!(PerfCounters::default().ipc(), Err(ZeroCycles));
        assert_eq!(PerfCounters::default().ipc_eff(), Err(ZeroCycles));
    }

    #[test]
    fn kernel_matches_golden() {
        let cfg = NmConfig::default();
        let vu = VuWord::from_real(-60.0, -12.0).unwrap();
        let run = run_kernel(vu, 3 << 16, 2 << 16, &cfg).unwrap();
        let golden = izh_step(vu, Fixed::from_raw(5 << 16, QFormat::Q15_16).unwrap(), &cfg);
        assert_eq!((run.vu, run.spike), (golden.vu, golden.spike));
        assert_eq!(run.counters.n_updates, 1);
        assert_eq!(run.counters.n_config_instr, 2);
    }

    #[test]
    fn trace_format() {
        let mut m = Machine::new(1024);
        m.enable_trace();
        m.load_program(&assemble("nop\nebreak").unwrap()).unwrap();
        m.run(10).unwrap();
        let lines: Vec<String> = m.take_trace().iter().map(ToString::to_string).collect();
        assert_eq!(lines, ["3 00000000 00000013 nop", "4 00000004 00100073 ebreak"]);
    }
}
