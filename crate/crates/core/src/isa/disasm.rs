use std::fmt::{self, Write as _};

use super::{BranchOp, ImmOp, Instruction, LoadOp, Program, Reg, RegOp, StoreOp};

fn fence_set(bits: u8) -> String {
    let s: String = [(8, 'i'), (4, 'o'), (2, 'r'), (1, 'w')]
        .iter()
        .filter(|(mask, _)| bits & mask != 0)
        .map(|&(_, c)| c)
        .collect();
    if s.is_empty() {
        "0".to_owned()
    } else {
        s
    }
}

pub(crate) fn write_instruction(f: &mut impl fmt::Write, insn: &Instruction) -> fmt::Result {
    use Instruction::*;
    match *insn {
        OpImm { op: ImmOp::Addi, rd: Reg::ZERO, rs1: Reg::ZERO, imm: 0 } => f.write_str("nop"),
        OpImm { op: ImmOp::Addi, rd, rs1, imm: 0 } => write!(f, "mv {rd}, {rs1}"),
        Lui { rd, imm20 } => write!(f, "lui {rd}, {imm20:#x}"),
        Auipc { rd, imm20 } => write!(f, "auipc {rd}, {imm20:#x}"),
        Jal { rd, offset } => write!(f, "jal {rd}, {offset}"),
        Jalr { rd, rs1, offset } => write!(f, "jalr {rd}, {offset}({rs1})"),
        Branch { op, rs1, rs2, offset } => {
            let m = match op {
                BranchOp::Beq => "beq",
                BranchOp::Bne => "bne",
                BranchOp::Blt => "blt",
                BranchOp::Bge => "bge",
                BranchOp::Bltu => "bltu",
                BranchOp::Bgeu => "bgeu",
            };
            write!(f, "{m} {rs1}, {rs2}, {offset}")
        }
        Load { op, rd, rs1, offset } => {
            let m = match op {
                LoadOp::Lb => "lb",
                LoadOp::Lh => "lh",
                LoadOp::Lw => "lw",
                LoadOp::Lbu => "lbu",
                LoadOp::Lhu => "lhu",
            };
            write!(f, "{m} {rd}, {offset}({rs1})")
        }
        Store { op, rs1, rs2, offset } => {
            let m = match op {
                StoreOp::Sb => "sb",
                StoreOp::Sh => "sh",
                StoreOp::Sw => "sw",
            };
            write!(f, "{m} {rs2}, {offset}({rs1})")
        }
        OpImm { op, rd, rs1, imm } => write!(f, "{} {rd}, {rs1}, {imm}", imm_mnemonic(op)),
        Op { op, rd, rs1, rs2 } => write!(f, "{} {rd}, {rs1}, {rs2}", reg_mnemonic(op)),
        Fence { pred, succ } => write!(f, "fence {}, {}", fence_set(pred), fence_set(succ)),
        Ecall => f.write_str("ecall"),
        Ebreak => f.write_str("ebreak"),
        Nmldl { rd, rs1, rs2 } => write!(f, "nmldl {rd}, {rs1}, {rs2}"),
        Nmldh { rd, rs1 } => write!(f, "nmldh {rd}, {rs1}"),
        Nmpn { rd, rs1, rs2 } => write!(f, "nmpn {rd}, {rs1}, {rs2}"),
        Nmdec { rd, rs1, rs2 } => write!(f, "nmdec {rd}, {rs1}, {rs2}"),
    }
}

pub(crate) fn imm_mnemonic(op: ImmOp) -> &'static str {
    match op {
        ImmOp::Addi => "addi",
        ImmOp::Slti => "slti",
        ImmOp::Sltiu => "sltiu",
        ImmOp::Xori => "xori",
        ImmOp::Ori => "ori",
        ImmOp::Andi => "andi",
        ImmOp::Slli => "slli",
        ImmOp::Srli => "srli",
        ImmOp::Srai => "srai",
    }
}

pub(crate) fn reg_mnemonic(op: RegOp) -> &'static str {
    match op {
        RegOp::Add => "add",
        RegOp::Sub => "sub",
        RegOp::Sll => "sll",
        RegOp::Slt => "slt",
        RegOp::Sltu => "sltu",
        RegOp::Xor => "xor",
        RegOp::Srl => "srl",
        RegOp::Sra => "sra",
        RegOp::Or => "or",
        RegOp::And => "and",
        RegOp::Mul => "mul",
        RegOp::Mulh => "mulh",
        RegOp::Mulhsu => "mulhsu",
        RegOp::Mulhu => "mulhu",
        RegOp::Div => "div",
        RegOp::Divu => "divu",
        RegOp::Rem => "rem",
        RegOp::Remu => "remu",
    }
}

/// Render one word; words that do not decode become `.word 0x........`.
pub fn disassemble(word: u32) -> String {
    match Instruction::decode(word) {
        Ok(insn) => insn.to_string(),
        Err(_) => format!(".word {word:#010x}"),
    }
}

/// Render a whole program as source that assembles back to the same words.
pub fn disassemble_program(program: &Program) -> String {
    let mut out = String::new();
    let mut next: Option<u32> = None;
    for &(addr, word) in program.words() {
        if next != Some(addr) {
            let _ = writeln!(out, ".org {addr:#x}");
        }
        let _ = writeln!(out, "{}", disassemble(word));
        next = Some(addr.wrapping_add(4));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_forms() {
        assert_eq!(disassemble(0x0000_0013), "nop");
        assert_eq!(disassemble(0xFFFF_FFFF), ".word 0xffffffff");
        let pn = Instruction::Nmpn { rd: Reg::x(12), rs1: Reg::x(16), rs2: Reg::x(17) };
        assert_eq!(disassemble(pn.encode()), "nmpn a2, a6, a7");
        assert_eq!(disassemble(0x0031_00B3), "add ra, sp, gp");
        assert_eq!(disassemble(0x0100_000F), "fence w, 0");
        assert_eq!(disassemble(0x0FF0_000F), "fence iorw, iorw");
    }
}
