//! Two-pass assembler.
//!
//! Source is one statement per line: optional `label:`, then an instruction
//! or directive. `#` starts a comment. Supported directives are `.word`,
//! `.org`, and `.globl`/`.global`/`.text` (accepted and ignored).
//!
//! Branch and jump targets are either labels or numeric byte offsets
//! relative to the instruction, which is also how the disassembler prints
//! them. Pseudo-instructions: `nop`, `mv`, `li`, `la`, `j`, `jr`, `ret`,
//! `call`, `beqz`, `bnez`, and one-operand `jal`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::{BranchOp, CustomOp, ImmOp, Instruction, LoadOp, Program, Reg, RegOp, StoreOp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmErrorKind {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("unknown directive `{0}`")]
    UnknownDirective(String),
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("label `{0}` defined twice")]
    DuplicateLabel(String),
    #[error("invalid label name `{0}`")]
    BadLabel(String),
    #[error("`{mnemonic}` takes {expected} operand(s), found {found}")]
    OperandCount { mnemonic: String, expected: usize, found: usize },
    #[error("bad register `{0}`")]
    BadRegister(String),
    #[error("bad operand `{0}`")]
    BadOperand(String),
    #[error("immediate {value} does not fit in {what}")]
    ImmediateOverflow { value: i64, what: &'static str },
    #[error("`.org {0:#x}` moves backwards or is not word aligned")]
    BadOrg(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

impl fmt::Display for AsmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.kind)
    }
}

impl std::error::Error for AsmError {}

type Result<T> = std::result::Result<T, AsmErrorKind>;

#[derive(Debug)]
enum Body<'a> {
    Insn { mnemonic: String, operands: Vec<&'a str> },
    Words(Vec<&'a str>),
}

#[derive(Debug)]
struct Stmt<'a> {
    line: usize,
    addr: u32,
    body: Body<'a>,
}

fn split_operands(rest: &str) -> Vec<&str> {
    let rest = rest.trim();
    if rest.is_empty() {
        Vec::new()
    } else {
        rest.split(',').map(str::trim).collect()
    }
}

fn valid_label(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$')
}

fn parse_number(text: &str) -> Option<i64> {
    let (neg, body) = match text.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let value = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(&h.replace('_', ""), 16).ok()?
    } else if let Some(b) = body.strip_prefix("0b") {
        i64::from_str_radix(&b.replace('_', ""), 2).ok()?
    } else if !body.is_empty() && body.bytes().all(|b| b.is_ascii_digit() || b == b'_') {
        body.replace('_', "").parse().ok()?
    } else {
        return None;
    };
    Some(if neg { -value } else { value })
}

fn reg(text: &str) -> Result<Reg> {
    Reg::parse(text).ok_or_else(|| AsmErrorKind::BadRegister(text.to_owned()))
}

fn check_range(value: i64, lo: i64, hi: i64, what: &'static str) -> Result<i64> {
    if (lo..=hi).contains(&value) {
        Ok(value)
    } else {
        Err(AsmErrorKind::ImmediateOverflow { value, what })
    }
}

/// Split `li` values into `lui`/`addi` parts.
fn hi_lo(value: i32) -> (u32, i32) {
    let hi = ((value as i64 + 0x800) >> 12) as u32 & 0xFFFFF;
    let lo = value.wrapping_sub((hi << 12) as i32);
    (hi, lo)
}

fn li_value(text: &str) -> Result<i32> {
    let v = parse_number(text).ok_or_else(|| AsmErrorKind::BadOperand(text.to_owned()))?;
    Ok(check_range(v, i32::MIN as i64, u32::MAX as i64, "32 bits")? as u32 as i32)
}

fn li_words(value: i32) -> usize {
    let (hi, lo) = hi_lo(value);
    if (-2048..2048).contains(&value) || lo == 0 || hi == 0 {
        1
    } else {
        2
    }
}

/// Words emitted for a statement; needed in the first pass.
fn statement_size(mnemonic: &str, operands: &[&str]) -> usize {
    match mnemonic {
        "la" => 2,
        "li" if operands.len() == 2 => li_value(operands[1]).map_or(1, li_words),
        _ => 1,
    }
}

struct Ctx<'s> {
    symbols: &'s BTreeMap<String, u32>,
    pc: u32,
}

impl Ctx<'_> {
    fn value(&self, text: &str) -> Result<i64> {
        if let Some(v) = parse_number(text) {
            return Ok(v);
        }
        if valid_label(text) {
            return self
                .symbols
                .get(text)
                .map(|&a| a as i64)
                .ok_or_else(|| AsmErrorKind::UndefinedLabel(text.to_owned()));
        }
        Err(AsmErrorKind::BadOperand(text.to_owned()))
    }

    /// A label resolves to its pc-relative distance; a number is taken as-is.
    fn target(&self, text: &str, bits: u32) -> Result<i32> {
        let offset = match parse_number(text) {
            Some(v) => v,
            None => self.value(text)? - self.pc as i64,
        };
        let what = if bits == 13 { "a 13-bit branch offset" } else { "a 21-bit jump offset" };
        let half = 1i64 << (bits - 1);
        let offset = check_range(offset, -half, half - 1, what)?;
        if offset % 2 != 0 {
            return Err(AsmErrorKind::BadOperand(text.to_owned()));
        }
        Ok(offset as i32)
    }

    fn imm12(&self, text: &str) -> Result<i32> {
        Ok(check_range(self.value(text)?, -2048, 2047, "12 bits")? as i32)
    }

    /// `offset(reg)` or `(reg)`.
    fn mem_operand(&self, text: &str) -> Result<(i32, Reg)> {
        let bad = || AsmErrorKind::BadOperand(text.to_owned());
        let open = text.find('(').ok_or_else(bad)?;
        let inner = text[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let off_text = text[..open].trim();
        let offset = if off_text.is_empty() { 0 } else { self.imm12(off_text)? };
        Ok((offset, reg(inner.trim())?))
    }
}

fn expect(mnemonic: &str, operands: &[&str], n: usize) -> Result<()> {
    if operands.len() == n {
        Ok(())
    } else {
        Err(AsmErrorKind::OperandCount { mnemonic: mnemonic.to_owned(), expected: n, found: operands.len() })
    }
}

fn fence_bits(text: &str) -> Result<u8> {
    if text == "0" {
        return Ok(0);
    }
    let mut bits = 0u8;
    for c in text.chars() {
        bits |= match c {
            'i' => 8,
            'o' => 4,
            'r' => 2,
            'w' => 1,
            _ => return Err(AsmErrorKind::BadOperand(text.to_owned())),
        };
    }
    Ok(bits)
}

fn branch_op(m: &str) -> Option<BranchOp> {
    Some(match m {
        "beq" => BranchOp::Beq,
        "bne" => BranchOp::Bne,
        "blt" => BranchOp::Blt,
        "bge" => BranchOp::Bge,
        "bltu" => BranchOp::Bltu,
        "bgeu" => BranchOp::Bgeu,
        _ => return None,
    })
}

fn load_op(m: &str) -> Option<LoadOp> {
    Some(match m {
        "lb" => LoadOp::Lb,
        "lh" => LoadOp::Lh,
        "lw" => LoadOp::Lw,
        "lbu" => LoadOp::Lbu,
        "lhu" => LoadOp::Lhu,
        _ => return None,
    })
}

fn store_op(m: &str) -> Option<StoreOp> {
    Some(match m {
        "sb" => StoreOp::Sb,
        "sh" => StoreOp::Sh,
        "sw" => StoreOp::Sw,
        _ => return None,
    })
}

fn imm_op(m: &str) -> Option<ImmOp> {
    Some(match m {
        "addi" => ImmOp::Addi,
        "slti" => ImmOp::Slti,
        "sltiu" => ImmOp::Sltiu,
        "xori" => ImmOp::Xori,
        "ori" => ImmOp::Ori,
        "andi" => ImmOp::Andi,
        "slli" => ImmOp::Slli,
        "srli" => ImmOp::Srli,
        "srai" => ImmOp::Srai,
        _ => return None,
    })
}

fn reg_op(m: &str) -> Option<RegOp> {
    Some(match m {
        "add" => RegOp::Add,
        "sub" => RegOp::Sub,
        "sll" => RegOp::Sll,
        "slt" => RegOp::Slt,
        "sltu" => RegOp::Sltu,
        "xor" => RegOp::Xor,
        "srl" => RegOp::Srl,
        "sra" => RegOp::Sra,
        "or" => RegOp::Or,
        "and" => RegOp::And,
        "mul" => RegOp::Mul,
        "mulh" => RegOp::Mulh,
        "mulhsu" => RegOp::Mulhsu,
        "mulhu" => RegOp::Mulhu,
        "div" => RegOp::Div,
        "divu" => RegOp::Divu,
        "rem" => RegOp::Rem,
        "remu" => RegOp::Remu,
        _ => return None,
    })
}

fn custom_op(m: &str) -> Option<CustomOp> {
    CustomOp::ALL.into_iter().find(|op| op.mnemonic() == m)
}

fn encode_statement(ctx: &Ctx, m: &str, ops: &[&str]) -> Result<Vec<Instruction>> {
    use Instruction::*;
    let addi = |rd, rs1, imm| OpImm { op: ImmOp::Addi, rd, rs1, imm };
    let one = |i: Instruction| Ok(vec![i]);

    if let Some(op) = branch_op(m) {
        expect(m, ops, 3)?;
        return one(Branch { op, rs1: reg(ops[0])?, rs2: reg(ops[1])?, offset: ctx.target(ops[2], 13)? });
    }
    if let Some(op) = load_op(m) {
        expect(m, ops, 2)?;
        let (offset, rs1) = ctx.mem_operand(ops[1])?;
        return one(Load { op, rd: reg(ops[0])?, rs1, offset });
    }
    if let Some(op) = store_op(m) {
        expect(m, ops, 2)?;
        let (offset, rs1) = ctx.mem_operand(ops[1])?;
        return one(Store { op, rs1, rs2: reg(ops[0])?, offset });
    }
    if let Some(op) = imm_op(m) {
        expect(m, ops, 3)?;
        let imm = match op {
            ImmOp::Slli | ImmOp::Srli | ImmOp::Srai => {
                check_range(ctx.value(ops[2])?, 0, 31, "a 5-bit shift amount")? as i32
            }
            _ => ctx.imm12(ops[2])?,
        };
        return one(OpImm { op, rd: reg(ops[0])?, rs1: reg(ops[1])?, imm });
    }
    if let Some(op) = reg_op(m) {
        expect(m, ops, 3)?;
        return one(Op { op, rd: reg(ops[0])?, rs1: reg(ops[1])?, rs2: reg(ops[2])? });
    }
    if let Some(op) = custom_op(m) {
        if op == CustomOp::Nmldh {
            expect(m, ops, 2)?;
            return one(Nmldh { rd: reg(ops[0])?, rs1: reg(ops[1])? });
        }
        expect(m, ops, 3)?;
        return one(Instruction::custom(op, reg(ops[0])?, reg(ops[1])?, reg(ops[2])?));
    }

    match m {
        "lui" | "auipc" => {
            expect(m, ops, 2)?;
            let v = check_range(ctx.value(ops[1])?, -(1 << 19), (1 << 20) - 1, "a 20-bit upper immediate")?;
            let (rd, imm20) = (reg(ops[0])?, v as u32 & 0xFFFFF);
            one(if m == "lui" { Lui { rd, imm20 } } else { Auipc { rd, imm20 } })
        }
        "jal" if ops.len() == 1 => one(Jal { rd: Reg::RA, offset: ctx.target(ops[0], 21)? }),
        "jal" => {
            expect(m, ops, 2)?;
            one(Jal { rd: reg(ops[0])?, offset: ctx.target(ops[1], 21)? })
        }
        "jalr" => match ops.len() {
            1 => one(Jalr { rd: Reg::RA, rs1: reg(ops[0])?, offset: 0 }),
            2 => {
                let (offset, rs1) = ctx.mem_operand(ops[1])?;
                one(Jalr { rd: reg(ops[0])?, rs1, offset })
            }
            _ => {
                expect(m, ops, 3)?;
                one(Jalr { rd: reg(ops[0])?, rs1: reg(ops[1])?, offset: ctx.imm12(ops[2])? })
            }
        },
        "fence" => match ops.len() {
            0 => one(Fence { pred: 0xF, succ: 0xF }),
            _ => {
                expect(m, ops, 2)?;
                one(Fence { pred: fence_bits(ops[0])?, succ: fence_bits(ops[1])? })
            }
        },
        "ecall" => expect(m, ops, 0).and_then(|_| one(Ecall)),
        "ebreak" => expect(m, ops, 0).and_then(|_| one(Ebreak)),
        "nop" => expect(m, ops, 0).and_then(|_| one(addi(Reg::ZERO, Reg::ZERO, 0))),
        "mv" => {
            expect(m, ops, 2)?;
            one(addi(reg(ops[0])?, reg(ops[1])?, 0))
        }
        "li" => {
            expect(m, ops, 2)?;
            let rd = reg(ops[0])?;
            let value = li_value(ops[1])?;
            let (hi, lo) = hi_lo(value);
            Ok(if (-2048..2048).contains(&value) {
                vec![addi(rd, Reg::ZERO, value)]
            } else if lo == 0 {
                vec![Lui { rd, imm20: hi }]
            } else if hi == 0 {
                vec![addi(rd, Reg::ZERO, lo)]
            } else {
                vec![Lui { rd, imm20: hi }, addi(rd, rd, lo)]
            })
        }
        "la" => {
            expect(m, ops, 2)?;
            let rd = reg(ops[0])?;
            let delta = (ctx.value(ops[1])? - ctx.pc as i64) as i32;
            let (hi, lo) = hi_lo(delta);
            Ok(vec![Auipc { rd, imm20: hi }, addi(rd, rd, lo)])
        }
        "j" => {
            expect(m, ops, 1)?;
            one(Jal { rd: Reg::ZERO, offset: ctx.target(ops[0], 21)? })
        }
        "call" => {
            expect(m, ops, 1)?;
            one(Jal { rd: Reg::RA, offset: ctx.target(ops[0], 21)? })
        }
        "jr" => {
            expect(m, ops, 1)?;
            one(Jalr { rd: Reg::ZERO, rs1: reg(ops[0])?, offset: 0 })
        }
        "ret" => expect(m, ops, 0).and_then(|_| one(Jalr { rd: Reg::ZERO, rs1: Reg::RA, offset: 0 })),
        "beqz" | "bnez" => {
            expect(m, ops, 2)?;
            let op = if m == "beqz" { BranchOp::Beq } else { BranchOp::Bne };
            one(Branch { op, rs1: reg(ops[0])?, rs2: Reg::ZERO, offset: ctx.target(ops[1], 13)? })
        }
        _ => Err(AsmErrorKind::UnknownMnemonic(m.to_owned())),
    }
}

/// Assemble source text into a [`Program`]. The entry point is `_start` if
/// defined, otherwise the first emitted word.
pub fn assemble(source: &str) -> std::result::Result<Program, AsmError> {
    let mut symbols = BTreeMap::new();
    let mut stmts = Vec::new();
    let mut addr: u32 = 0;

    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let err = |kind| AsmError { line, kind };
        let mut text = raw.split('#').next().unwrap_or("").trim();

        while let Some(colon) = text.find(':') {
            let name = text[..colon].trim();
            if name.contains(char::is_whitespace) {
                break;
            }
            if !valid_label(name) {
                return Err(err(AsmErrorKind::BadLabel(name.to_owned())));
            }
            if symbols.insert(name.to_owned(), addr).is_some() {
                return Err(err(AsmErrorKind::DuplicateLabel(name.to_owned())));
            }
            text = text[colon + 1..].trim();
        }
        if text.is_empty() {
            continue;
        }

        let (head, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        let head = head.to_ascii_lowercase();
        let operands = split_operands(rest);

        match head.as_str() {
            ".org" => {
                let target = operands
                    .first()
                    .and_then(|t| parse_number(t))
                    .ok_or_else(|| err(AsmErrorKind::BadOperand(rest.trim().to_owned())))?;
                if operands.len() != 1 || target < addr as i64 || target > u32::MAX as i64 || target % 4 != 0 {
                    return Err(err(AsmErrorKind::BadOrg(target as u64)));
                }
                addr = target as u32;
            }
            ".word" => {
                if operands.is_empty() {
                    return Err(err(AsmErrorKind::OperandCount { mnemonic: head, expected: 1, found: 0 }));
                }
                let n = operands.len() as u32;
                stmts.push(Stmt { line, addr, body: Body::Words(operands) });
                addr = addr.wrapping_add(4 * n);
            }
            ".globl" | ".global" | ".text" => {}
            d if d.starts_with('.') => return Err(err(AsmErrorKind::UnknownDirective(d.to_owned()))),
            _ => {
                let size = statement_size(&head, &operands) as u32;
                stmts.push(Stmt { line, addr, body: Body::Insn { mnemonic: head, operands } });
                addr = addr.wrapping_add(4 * size);
            }
        }
    }

    let mut words = Vec::new();
    for stmt in &stmts {
        let err = |kind| AsmError { line: stmt.line, kind };
        let ctx = Ctx { symbols: &symbols, pc: stmt.addr };
        match &stmt.body {
            Body::Words(values) => {
                for (i, v) in values.iter().enumerate() {
                    let value = ctx.value(v).map_err(err)?;
                    let value = check_range(value, i32::MIN as i64, u32::MAX as i64, "32 bits").map_err(err)?;
                    words.push((stmt.addr + 4 * i as u32, value as u32));
                }
            }
            Body::Insn { mnemonic, operands } => {
                let insns = encode_statement(&ctx, mnemonic, operands).map_err(err)?;
                debug_assert_eq!(insns.len(), statement_size(mnemonic, operands));
                for (i, insn) in insns.iter().enumerate() {
                    words.push((stmt.addr + 4 * i as u32, insn.encode()));
                }
            }
        }
    }

    let entry = symbols.get("_start").copied().or(words.first().map(|&(a, _)| a)).unwrap_or(0);
    Program::new(words, entry, symbols).map_err(|e| AsmError {
        line: stmts.last().map_or(0, |s| s.line),
        kind: AsmErrorKind::BadOperand(e.to_string()),
    })
}
