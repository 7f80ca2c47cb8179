use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("address {0:#x} is not word aligned")]
    Misaligned(u32),
    #[error("address {0:#x} is not above the previous word")]
    NotIncreasing(u32),
    #[error("flat binary length {0} is not a multiple of 4")]
    Length(usize),
}

/// An assembled program: word-aligned, strictly increasing `(address, word)`
/// pairs, an entry point, and the label table.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    words: Vec<(u32, u32)>,
    entry: u32,
    symbols: BTreeMap<String, u32>,
}

impl Program {
    pub fn new(words: Vec<(u32, u32)>, entry: u32, symbols: BTreeMap<String, u32>) -> Result<Self, ImageError> {
        let mut prev: Option<u32> = None;
        for &(addr, _) in &words {
            if addr % 4 != 0 {
                return Err(ImageError::Misaligned(addr));
            }
            if prev.is_some_and(|p| addr <= p) {
                return Err(ImageError::NotIncreasing(addr));
            }
            prev = Some(addr);
        }
        Ok(Program { words, entry, symbols })
    }

    /// Contiguous words starting at `base`.
    pub fn from_words(base: u32, words: &[u32]) -> Self {
        Program {
            words: words.iter().enumerate().map(|(i, &w)| (base + 4 * i as u32, w)).collect(),
            entry: base,
            symbols: BTreeMap::new(),
        }
    }

    pub fn words(&self) -> &[(u32, u32)] {
        &self.words
    }

    pub fn word_values(&self) -> Vec<u32> {
        self.words.iter().map(|&(_, w)| w).collect()
    }

    pub fn entry(&self) -> u32 {
        self.entry
    }

    pub fn symbols(&self) -> &BTreeMap<String, u32> {
        &self.symbols
    }

    pub fn symbol(&self, name: &str) -> Option<u32> {
        self.symbols.get(name).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }
}

/// Hex text: one 8-digit word per line, `@xxxxxxxx` lines set the address.
pub fn to_hex_image(program: &Program) -> String {
    let mut out = String::new();
    let mut next: Option<u32> = None;
    for &(addr, word) in program.words() {
        if next != Some(addr) {
            let _ = writeln!(out, "@{addr:08x}");
        }
        let _ = writeln!(out, "{word:08x}");
        next = Some(addr.wrapping_add(4));
    }
    out
}

/// Parse a hex image. Words before any `@` line start at `base`; `#`
/// starts a comment. The entry point is the first word's address.
pub fn parse_hex_image(text: &str, base: u32) -> Result<Program, ImageError> {
    let mut addr = base;
    let mut words = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |msg: &str| ImageError::Syntax { line: idx + 1, msg: msg.to_owned() };
        if let Some(a) = line.strip_prefix('@') {
            addr = u32::from_str_radix(a, 16).map_err(|_| syntax("bad address"))?;
            continue;
        }
        for tok in line.split_whitespace() {
            let tok = tok.trim_start_matches("0x");
            let word = u32::from_str_radix(tok, 16).map_err(|_| syntax("bad hex word"))?;
            words.push((addr, word));
            addr = addr.wrapping_add(4);
        }
    }
    let entry = words.first().map_or(base, |&(a, _)| a);
    Program::new(words, entry, BTreeMap::new())
}

/// Little-endian bytes from the first word's address; gaps are zero-filled.
/// Returns the base address and the bytes.
pub fn to_flat_binary(program: &Program) -> (u32, Vec<u8>) {
    let Some(&(base, _)) = program.words().first() else {
        return (0, Vec::new());
    };
    let (last, _) = *program.words().last().unwrap();
    let mut bytes = vec![0u8; (last - base) as usize + 4];
    for &(addr, word) in program.words() {
        let off = (addr - base) as usize;
        bytes[off..off + 4].copy_from_slice(&word.to_le_bytes());
    }
    (base, bytes)
}

pub fn read_flat_binary(bytes: &[u8], base: u32) -> Result<Program, ImageError> {
    if base % 4 != 0 {
        return Err(ImageError::Misaligned(base));
    }
    if bytes.len() % 4 != 0 {
        return Err(ImageError::Length(bytes.len()));
    }
    let words: Vec<u32> = bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Program::from_words(base, &words))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_roundtrip_with_gap() {
        let p = Program::new(vec![(0, 0x13), (4, 0x00100073), (0x100, 0xdeadbeef)], 0, BTreeMap::new()).unwrap();
        let text = to_hex_image(&p);
        assert_eq!(text, "@00000000\n00000013\n00100073\n@00000100\ndeadbeef\n");
        assert_eq!(parse_hex_image(&text, 0).unwrap(), p);
    }

    #[test]
    fn flat_binary_fills_gaps() {
        let p = Program::new(vec![(8, 0x11223344), (16, 0x55667788)], 8, BTreeMap::new()).unwrap();
        let (base, bytes) = to_flat_binary(&p);
        assert_eq!(base, 8);
        assert_eq!(bytes, [0x44, 0x33, 0x22, 0x11, 0, 0, 0, 0, 0x88, 0x77, 0x66, 0x55]);
        let back = read_flat_binary(&bytes, base).unwrap();
        assert_eq!(back.words()[2], (16, 0x55667788));
        assert_eq!(read_flat_binary(&[1, 2, 3], 0), Err(ImageError::Length(3)));
    }

    #[test]
    fn program_rejects_bad_layout() {
        assert_eq!(Program::new(vec![(2, 0)], 0, BTreeMap::new()), Err(ImageError::Misaligned(2)));
        assert_eq!(Program::new(vec![(4, 0), (4, 0)], 0, BTreeMap::new()), Err(ImageError::NotIncreasing(4)));
    }
}
