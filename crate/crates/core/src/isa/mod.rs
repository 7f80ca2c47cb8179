//! RV32IM plus the four custom-0 neuron instructions.
//!
//! The custom instructions all use the R-type field layout under opcode
//! `0001011`; `funct3` selects the operation (see [`CustomOp`]). `funct7`
//! is ignored on decode and written as zero on encode.

mod asm;
mod disasm;
mod image;

use std::fmt;

use thiserror::Error;

pub use asm::{assemble, AsmError, AsmErrorKind};
pub use disasm::{disassemble, disassemble_program};
pub use image::{parse_hex_image, read_flat_binary, to_flat_binary, to_hex_image, ImageError, Program};

pub const OPCODE_CUSTOM0: u32 = 0b000_1011;

const OPCODE_LUI: u32 = 0b011_0111;
const OPCODE_AUIPC: u32 = 0b001_0111;
const OPCODE_JAL: u32 = 0b110_1111;
const OPCODE_JALR: u32 = 0b110_0111;
const OPCODE_BRANCH: u32 = 0b110_0011;
const OPCODE_LOAD: u32 = 0b000_0011;
const OPCODE_STORE: u32 = 0b010_0011;
const OPCODE_OP_IMM: u32 = 0b001_0011;
const OPCODE_OP: u32 = 0b011_0011;
const OPCODE_MISC_MEM: u32 = 0b000_1111;
const OPCODE_SYSTEM: u32 = 0b111_0011;

const WORD_ECALL: u32 = 0x0000_0073;
const WORD_EBREAK: u32 = 0x0010_0073;

/// An integer register index, `x0`..`x31`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(u8);

const ABI_NAMES: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7",
    "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6",
];

impl Reg {
    pub const ZERO: Reg = Reg(0);
    pub const RA: Reg = Reg(1);
    pub const SP: Reg = Reg(2);

    pub const fn new(index: u8) -> Option<Reg> {
        if index < 32 {
            Some(Reg(index))
        } else {
            None
        }
    }

    /// Panics if `index >= 32`.
    pub const fn x(index: u8) -> Reg {
        assert!(index < 32, "register index out of range");
        Reg(index)
    }

    pub const fn index(self) -> usize {
        self.0 as usize
    }

    fn field(word: u32, lsb: u32) -> Reg {
        Reg(((word >> lsb) & 0x1F) as u8)
    }

    /// Accepts `x0`..`x31`, ABI names, and `fp` for `s0`.
    pub fn parse(name: &str) -> Option<Reg> {
        if let Some(num) = name.strip_prefix('x') {
            if !num.is_empty() && num.bytes().all(|b| b.is_ascii_digit()) && (num == "0" || !num.starts_with('0')) {
                return num.parse::<u8>().ok().and_then(Reg::new);
            }
        }
        if name == "fp" {
            return Some(Reg(8));
        }
        ABI_NAMES.iter().position(|&n| n == name).map(|i| Reg(i as u8))
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(ABI_NAMES[self.0 as usize])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchOp {
    Beq,
    Bne,
    Blt,
    Bge,
    Bltu,
    Bgeu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoadOp {
    Lb,
    Lh,
    Lw,
    Lbu,
    Lhu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StoreOp {
    Sb,
    Sh,
    Sw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImmOp {
    Addi,
    Slti,
    Sltiu,
    Xori,
    Ori,
    Andi,
    Slli,
    Srli,
    Srai,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegOp {
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
    Mul,
    Mulh,
    Mulhsu,
    Mulhu,
    Div,
    Divu,
    Rem,
    Remu,
}

/// The custom-0 operations and their `funct3` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CustomOp {
    Nmldl,
    Nmldh,
    Nmpn,
    Nmdec,
}

impl CustomOp {
    pub const ALL: [CustomOp; 4] = [CustomOp::Nmldl, CustomOp::Nmldh, CustomOp::Nmpn, CustomOp::Nmdec];

    pub const fn funct3(self) -> u32 {
        match self {
            CustomOp::Nmldl => 0b000,
            CustomOp::Nmldh => 0b001,
            CustomOp::Nmpn => 0b010,
            CustomOp::Nmdec => 0b011,
        }
    }

    fn from_funct3(funct3: u32) -> Option<CustomOp> {
        CustomOp::ALL.into_iter().find(|op| op.funct3() == funct3)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            CustomOp::Nmldl => "nmldl",
            CustomOp::Nmldh => "nmldh",
            CustomOp::Nmpn => "nmpn",
            CustomOp::Nmdec => "nmdec",
        }
    }
}

/// A decoded instruction. Immediates are sign-extended; `Lui`/`Auipc`
/// carry the raw 20-bit upper immediate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instruction {
    Lui { rd: Reg, imm20: u32 },
    Auipc { rd: Reg, imm20: u32 },
    Jal { rd: Reg, offset: i32 },
    Jalr { rd: Reg, rs1: Reg, offset: i32 },
    Branch { op: BranchOp, rs1: Reg, rs2: Reg, offset: i32 },
    Load { op: LoadOp, rd: Reg, rs1: Reg, offset: i32 },
    Store { op: StoreOp, rs1: Reg, rs2: Reg, offset: i32 },
    OpImm { op: ImmOp, rd: Reg, rs1: Reg, imm: i32 },
    Op { op: RegOp, rd: Reg, rs1: Reg, rs2: Reg },
    Fence { pred: u8, succ: u8 },
    Ecall,
    Ebreak,
    /// Load neuron parameters: rs1 = `b:a`, rs2 = `d:c`; rd <- 1.
    Nmldl { rd: Reg, rs1: Reg, rs2: Reg },
    /// Load timestep and pin bits from rs1; rd <- 1.
    Nmldh { rd: Reg, rs1: Reg },
    /// Neuron update: VU word in rs1, current in rs2, store address in rd;
    /// rd <- spike flag.
    Nmpn { rd: Reg, rs1: Reg, rs2: Reg },
    /// Synaptic decay: rd <- decay(rs1) with divider rs2.
    Nmdec { rd: Reg, rs1: Reg, rs2: Reg },
}

/// How an instruction is tallied by the performance counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InstrClass {
    Regular,
    Config,
    Update,
    Decay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal instruction {0:#010x}")]
pub struct IllegalInstruction(pub u32);

fn sext(value: u32, bits: u32) -> i32 {
    let shift = 32 - bits;
    ((value << shift) as i32) >> shift
}

impl Instruction {
    pub fn custom(op: CustomOp, rd: Reg, rs1: Reg, rs2: Reg) -> Instruction {
        match op {
            CustomOp::Nmldl => Instruction::Nmldl { rd, rs1, rs2 },
            CustomOp::Nmldh => Instruction::Nmldh { rd, rs1 },
            CustomOp::Nmpn => Instruction::Nmpn { rd, rs1, rs2 },
            CustomOp::Nmdec => Instruction::Nmdec { rd, rs1, rs2 },
        }
    }

    pub fn class(&self) -> InstrClass {
        match self {
            Instruction::Nmldl { .. } | Instruction::Nmldh { .. } => InstrClass::Config,
            Instruction::Nmpn { .. } => InstrClass::Update,
            Instruction::Nmdec { .. } => InstrClass::Decay,
            _ => InstrClass::Regular,
        }
    }

    /// The architectural destination register, if any (including `x0`).
    pub fn dest(&self) -> Option<Reg> {
        use Instruction::*;
        match *self {
            Lui { rd, .. } | Auipc { rd, .. } | Jal { rd, .. } | Jalr { rd, .. } | Load { rd, .. }
            | OpImm { rd, .. } | Op { rd, .. } | Nmldl { rd, .. } | Nmldh { rd, .. } | Nmpn { rd, .. }
            | Nmdec { rd, .. } => Some(rd),
            Branch { .. } | Store { .. } | Fence { .. } | Ecall | Ebreak => None,
        }
    }

    /// Registers read by the instruction. `nmpn` reads its `rd` as the
    /// store address.
    pub fn sources(&self) -> [Option<Reg>; 3] {
        use Instruction::*;
        match *self {
            Jalr { rs1, .. } | Load { rs1, .. } | OpImm { rs1, .. } | Nmldh { rs1, .. } => [Some(rs1), None, None],
            Branch { rs1, rs2, .. } | Store { rs1, rs2, .. } | Op { rs1, rs2, .. } | Nmldl { rs1, rs2, .. }
            | Nmdec { rs1, rs2, .. } => [Some(rs1), Some(rs2), None],
            Nmpn { rd, rs1, rs2 } => [Some(rs1), Some(rs2), Some(rd)],
            Lui { .. } | Auipc { .. } | Jal { .. } | Fence { .. } | Ecall | Ebreak => [None; 3],
        }
    }

    pub fn decode(word: u32) -> Result<Instruction, IllegalInstruction> {
        use Instruction::*;
        let illegal = Err(IllegalInstruction(word));
        let rd = Reg::field(word, 7);
        let rs1 = Reg::field(word, 15);
        let rs2 = Reg::field(word, 20);
        let funct3 = (word >> 12) & 0x7;
        let funct7 = word >> 25;
        let i_imm = sext(word >> 20, 12);

        let insn = match word & 0x7F {
            OPCODE_LUI => Lui { rd, imm20: word >> 12 },
            OPCODE_AUIPC => Auipc { rd, imm20: word >> 12 },
            OPCODE_JAL => {
                let imm = ((word >> 31) << 20)
                    | (((word >> 12) & 0xFF) << 12)
                    | (((word >> 20) & 1) << 11)
                    | (((word >> 21) & 0x3FF) << 1);
                Jal { rd, offset: sext(imm, 21) }
            }
            OPCODE_JALR if funct3 == 0 => Jalr { rd, rs1, offset: i_imm },
            OPCODE_BRANCH => {
                let op = match funct3 {
                    0b000 => BranchOp::Beq,
                    0b001 => BranchOp::Bne,
                    0b100 => BranchOp::Blt,
                    0b101 => BranchOp::Bge,
                    0b110 => BranchOp::Bltu,
                    0b111 => BranchOp::Bgeu,
                    _ => return illegal,
                };
                let imm = ((word >> 31) << 12)
                    | (((word >> 7) & 1) << 11)
                    | (((word >> 25) & 0x3F) << 5)
                    | (((word >> 8) & 0xF) << 1);
                Branch { op, rs1, rs2, offset: sext(imm, 13) }
            }
            OPCODE_LOAD => {
                let op = match funct3 {
                    0b000 => LoadOp::Lb,
                    0b001 => LoadOp::Lh,
                    0b010 => LoadOp::Lw,
                    0b100 => LoadOp::Lbu,
                    0b101 => LoadOp::Lhu,
                    _ => return illegal,
                };
                Load { op, rd, rs1, offset: i_imm }
            }
            OPCODE_STORE => {
                let op = match funct3 {
                    0b000 => StoreOp::Sb,
                    0b001 => StoreOp::Sh,
                    0b010 => StoreOp::Sw,
                    _ => return illegal,
                };
                let imm = ((word >> 25) << 5) | ((word >> 7) & 0x1F);
                Store { op, rs1, rs2, offset: sext(imm, 12) }
            }
            OPCODE_OP_IMM => {
                let shamt = ((word >> 20) & 0x1F) as i32;
                let (op, imm) = match (funct3, funct7) {
                    (0b000, _) => (ImmOp::Addi, i_imm),
                    (0b010, _) => (ImmOp::Slti, i_imm),
                    (0b011, _) => (ImmOp::Sltiu, i_imm),
                    (0b100, _) => (ImmOp::Xori, i_imm),
                    (0b110, _) => (ImmOp::Ori, i_imm),
                    (0b111, _) => (ImmOp::Andi, i_imm),
                    (0b001, 0) => (ImmOp::Slli, shamt),
                    (0b101, 0) => (ImmOp::Srli, shamt),
                    (0b101, 0b010_0000) => (ImmOp::Srai, shamt),
                    _ => return illegal,
                };
                OpImm { op, rd, rs1, imm }
            }
            OPCODE_OP => {
                let op = match (funct7, funct3) {
                    (0, 0b000) => RegOp::Add,
                    (0b010_0000, 0b000) => RegOp::Sub,
                    (0, 0b001) => RegOp::Sll,
                    (0, 0b010) => RegOp::Slt,
                    (0, 0b011) => RegOp::Sltu,
                    (0, 0b100) => RegOp::Xor,
                    (0, 0b101) => RegOp::Srl,
                    (0b010_0000, 0b101) => RegOp::Sra,
                    (0, 0b110) => RegOp::Or,
                    (0, 0b111) => RegOp::And,
                    (1, 0b000) => RegOp::Mul,
                    (1, 0b001) => RegOp::Mulh,
                    (1, 0b010) => RegOp::Mulhsu,
                    (1, 0b011) => RegOp::Mulhu,
                    (1, 0b100) => RegOp::Div,
                    (1, 0b101) => RegOp::Divu,
                    (1, 0b110) => RegOp::Rem,
                    (1, 0b111) => RegOp::Remu,
                    _ => return illegal,
                };
                Op { op, rd, rs1, rs2 }
            }
            // Only plain FENCE with fm = 0 and zero register fields.
            OPCODE_MISC_MEM if funct3 == 0 && word >> 28 == 0 && rd.0 == 0 && rs1.0 == 0 => {
                Fence { pred: ((word >> 24) & 0xF) as u8, succ: ((word >> 20) & 0xF) as u8 }
            }
            OPCODE_SYSTEM if word == WORD_ECALL => Ecall,
            OPCODE_SYSTEM if word == WORD_EBREAK => Ebreak,
            OPCODE_CUSTOM0 => match CustomOp::from_funct3(funct3) {
                Some(op) => Instruction::custom(op, rd, rs1, rs2),
                None => return illegal,
            },
            _ => return illegal,
        };
        Ok(insn)
    }

    pub fn encode(&self) -> u32 {
        use Instruction::*;
        let r = |opcode: u32, funct3: u32, funct7: u32, rd: Reg, rs1: Reg, rs2: Reg| {
            opcode | (rd.0 as u32) << 7 | funct3 << 12 | (rs1.0 as u32) << 15 | (rs2.0 as u32) << 20 | funct7 << 25
        };
        let i = |opcode: u32, funct3: u32, rd: Reg, rs1: Reg, imm: i32| {
            opcode | (rd.0 as u32) << 7 | funct3 << 12 | (rs1.0 as u32) << 15 | ((imm as u32) & 0xFFF) << 20
        };
        match *self {
            Lui { rd, imm20 } => OPCODE_LUI | (rd.0 as u32) << 7 | (imm20 & 0xFFFFF) << 12,
            Auipc { rd, imm20 } => OPCODE_AUIPC | (rd.0 as u32) << 7 | (imm20 & 0xFFFFF) << 12,
            Jal { rd, offset } => {
                let imm = offset as u32;
                OPCODE_JAL
                    | (rd.0 as u32) << 7
                    | (imm & 0xFF000)
                    | ((imm >> 11) & 1) << 20
                    | ((imm >> 1) & 0x3FF) << 21
                    | ((imm >> 20) & 1) << 31
            }
            Jalr { rd, rs1, offset } => i(OPCODE_JALR, 0, rd, rs1, offset),
            Branch { op, rs1, rs2, offset } => {
                let funct3 = match op {
                    BranchOp::Beq => 0b000,
                    BranchOp::Bne => 0b001,
                    BranchOp::Blt => 0b100,
                    BranchOp::Bge => 0b101,
                    BranchOp::Bltu => 0b110,
                    BranchOp::Bgeu => 0b111,
                };
                let imm = offset as u32;
                OPCODE_BRANCH
                    | ((imm >> 11) & 1) << 7
                    | ((imm >> 1) & 0xF) << 8
                    | funct3 << 12
                    | (rs1.0 as u32) << 15
                    | (rs2.0 as u32) << 20
                    | ((imm >> 5) & 0x3F) << 25
                    | ((imm >> 12) & 1) << 31
            }
            Load { op, rd, rs1, offset } => {
                let funct3 = match op {
                    LoadOp::Lb => 0b000,
                    LoadOp::Lh => 0b001,
                    LoadOp::Lw => 0b010,
                    LoadOp::Lbu => 0b100,
                    LoadOp::Lhu => 0b101,
                };
                i(OPCODE_LOAD, funct3, rd, rs1, offset)
            }
            Store { op, rs1, rs2, offset } => {
                let funct3 = match op {
                    StoreOp::Sb => 0b000,
                    StoreOp::Sh => 0b001,
                    StoreOp::Sw => 0b010,
                };
                let imm = offset as u32;
                OPCODE_STORE
                    | (imm & 0x1F) << 7
                    | funct3 << 12
                    | (rs1.0 as u32) << 15
                    | (rs2.0 as u32) << 20
                    | ((imm >> 5) & 0x7F) << 25
            }
            OpImm { op, rd, rs1, imm } => match op {
                ImmOp::Addi => i(OPCODE_OP_IMM, 0b000, rd, rs1, imm),
                ImmOp::Slti => i(OPCODE_OP_IMM, 0b010, rd, rs1, imm),
                ImmOp::Sltiu => i(OPCODE_OP_IMM, 0b011, rd, rs1, imm),
                ImmOp::Xori => i(OPCODE_OP_IMM, 0b100, rd, rs1, imm),
                ImmOp::Ori => i(OPCODE_OP_IMM, 0b110, rd, rs1, imm),
                ImmOp::Andi => i(OPCODE_OP_IMM, 0b111, rd, rs1, imm),
                ImmOp::Slli => i(OPCODE_OP_IMM, 0b001, rd, rs1, imm & 0x1F),
                ImmOp::Srli => i(OPCODE_OP_IMM, 0b101, rd, rs1, imm & 0x1F),
                ImmOp::Srai => i(OPCODE_OP_IMM, 0b101, rd, rs1, (imm & 0x1F) | 0x400),
            },
            Op { op, rd, rs1, rs2 } => {
                let (funct7, funct3) = match op {
                    RegOp::Add => (0, 0b000),
                    RegOp::Sub => (0b010_0000, 0b000),
                    RegOp::Sll => (0, 0b001),
                    RegOp::Slt => (0, 0b010),
                    RegOp::Sltu => (0, 0b011),
                    RegOp::Xor => (0, 0b100),
                    RegOp::Srl => (0, 0b101),
                    RegOp::Sra => (0b010_0000, 0b101),
                    RegOp::Or => (0, 0b110),
                    RegOp::And => (0, 0b111),
                    RegOp::Mul => (1, 0b000),
                    RegOp::Mulh => (1, 0b001),
                    RegOp::Mulhsu => (1, 0b010),
                    RegOp::Mulhu => (1, 0b011),
                    RegOp::Div => (1, 0b100),
                    RegOp::Divu => (1, 0b101),
                    RegOp::Rem => (1, 0b110),
                    RegOp::Remu => (1, 0b111),
                };
                r(OPCODE_OP, funct3, funct7, rd, rs1, rs2)
            }
            Fence { pred, succ } => OPCODE_MISC_MEM | ((pred as u32) & 0xF) << 24 | ((succ as u32) & 0xF) << 20,
            Ecall => WORD_ECALL,
            Ebreak => WORD_EBREAK,
            Nmldl { rd, rs1, rs2 } => r(OPCODE_CUSTOM0, CustomOp::Nmldl.funct3(), 0, rd, rs1, rs2),
            Nmldh { rd, rs1 } => r(OPCODE_CUSTOM0, CustomOp::Nmldh.funct3(), 0, rd, rs1, Reg::ZERO),
            Nmpn { rd, rs1, rs2 } => r(OPCODE_CUSTOM0, CustomOp::Nmpn.funct3(), 0, rd, rs1, rs2),
            Nmdec { rd, rs1, rs2 } => r(OPCODE_CUSTOM0, CustomOp::Nmdec.funct3(), 0, rd, rs1, rs2),
        }
    }

    /// Clear the bits decode ignores: `funct7` of custom-0 words and the
    /// reserved rs2 field of `nmldh`.
    pub fn canonical_word(word: u32) -> u32 {
        match Instruction::decode(word) {
            Ok(insn) => insn.encode(),
            Err(_) => word,
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        disasm::write_instruction(f, self)
    }
}
