//! Golden model of the Neuron Processing Unit.
//!
//! One call to [`izh_step`] is one `nmpn` retirement: a forward-Euler
//! Izhikevich update of the packed `v`/`u` state, preceded by threshold
//! detection and reset. All arithmetic happens on integer raws in a wide
//! accumulator; the only rounding is the final conversion back to Q7.8.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::fixedpoint::{round_shift, Fixed, FixedError, QFormat};

/// Spike threshold, +30.0 in Q7.8.
pub const V_TH: i32 = 30 << 8;

/// 0.04 with 24 fraction bits (671088.64 rounded).
const QUAD_COEF: i128 = 671_089;
const QUAD_COEF_FRAC: u32 = 24;

/// Neuron parameters in their register formats: `a`, `b`, `d` in Q4.11,
/// `c` (reset voltage) in Q7.8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NeuronParams {
    a: Fixed,
    b: Fixed,
    c: Fixed,
    d: Fixed,
}

impl NeuronParams {
    pub fn new(a: Fixed, b: Fixed, c: Fixed, d: Fixed) -> Result<Self, FixedError> {
        for (value, want) in [(a, QFormat::Q4_11), (b, QFormat::Q4_11), (c, QFormat::Q7_8), (d, QFormat::Q4_11)] {
            if value.fmt() != want {
                return Err(FixedError::FormatMismatch { lhs: value.fmt(), rhs: want });
            }
        }
        Ok(NeuronParams { a, b, c, d })
    }

    pub fn from_real(a: f64, b: f64, c: f64, d: f64) -> Result<Self, FixedError> {
        Ok(NeuronParams {
            a: Fixed::from_real(a, QFormat::Q4_11)?,
            b: Fixed::from_real(b, QFormat::Q4_11)?,
            c: Fixed::from_real(c, QFormat::Q7_8)?,
            d: Fixed::from_real(d, QFormat::Q4_11)?,
        })
    }

    /// Decode the two `nmldl` source registers: rs1 = `b:a`, rs2 = `d:c`.
    pub fn from_registers(rs1: u32, rs2: u32) -> Self {
        NeuronParams {
            a: Fixed::from_bits(rs1 & 0xFFFF, QFormat::Q4_11),
            b: Fixed::from_bits(rs1 >> 16, QFormat::Q4_11),
            c: Fixed::from_bits(rs2 & 0xFFFF, QFormat::Q7_8),
            d: Fixed::from_bits(rs2 >> 16, QFormat::Q4_11),
        }
    }

    pub fn to_registers(self) -> (u32, u32) {
        (
            (self.b.to_bits() << 16) | self.a.to_bits(),
            (self.d.to_bits() << 16) | self.c.to_bits(),
        )
    }

    pub fn a(self) -> Fixed {
        self.a
    }
    pub fn b(self) -> Fixed {
        self.b
    }
    pub fn c(self) -> Fixed {
        self.c
    }
    pub fn d(self) -> Fixed {
        self.d
    }

    pub fn to_oracle(self) -> OracleParams {
        OracleParams {
            a: self.a.to_real(),
            b: self.b.to_real(),
            c: self.c.to_real(),
            d: self.d.to_real(),
        }
    }
}

impl Default for NeuronParams {
    /// Regular spiking: a=0.02, b=0.2, c=-65, d=8.
    fn default() -> Self {
        NeuronParams::from_real(0.02, 0.2, -65.0, 8.0).expect("constants in range")
    }
}

/// Integration timestep selected by the `h` configuration bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TimeStep {
    /// 0.5 ms, `h` bit clear.
    #[default]
    Half,
    /// 0.125 ms, `h` bit set.
    Eighth,
}

impl TimeStep {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            TimeStep::Eighth
        } else {
            TimeStep::Half
        }
    }

    pub fn bit(self) -> bool {
        self == TimeStep::Eighth
    }

    /// Multiplying by `h` is an arithmetic right shift by this amount.
    pub fn shift(self) -> u32 {
        match self {
            TimeStep::Half => 1,
            TimeStep::Eighth => 3,
        }
    }

    pub fn millis(self) -> f64 {
        match self {
            TimeStep::Half => 0.5,
            TimeStep::Eighth => 0.125,
        }
    }
}

/// The NPU/DCU configuration registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct NmConfig {
    pub params: NeuronParams,
    pub h: TimeStep,
    /// Floors the post-update voltage at `c`.
    pub pin: bool,
}

impl NmConfig {
    pub fn load_params(self, params: NeuronParams) -> Self {
        NmConfig { params, ..self }
    }

    pub fn load_h(self, h_select: bool, pin: bool) -> Self {
        NmConfig { h: TimeStep::from_bit(h_select), pin, ..self }
    }

    /// The `nmldh` source word: bit 0 = h, bit 1 = pin.
    pub fn flags_word(self) -> u32 {
        self.h.bit() as u32 | (self.pin as u32) << 1
    }
}

/// Packed neuron state: `v` in bits 31..16, `u` in bits 15..0, both Q7.8.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct VuWord(pub u32);

impl VuWord {
    pub fn new(v: Fixed, u: Fixed) -> Self {
        debug_assert_eq!(v.fmt(), QFormat::Q7_8);
        debug_assert_eq!(u.fmt(), QFormat::Q7_8);
        Self::from_raw(v.raw() as i16, u.raw() as i16)
    }

    pub fn from_raw(v: i16, u: i16) -> Self {
        VuWord(((v as u16 as u32) << 16) | u as u16 as u32)
    }

    pub fn from_real(v: f64, u: f64) -> Result<Self, FixedError> {
        Ok(Self::new(
            Fixed::from_real(v, QFormat::Q7_8)?,
            Fixed::from_real(u, QFormat::Q7_8)?,
        ))
    }

    pub fn v(self) -> Fixed {
        Fixed::from_bits(self.0 >> 16, QFormat::Q7_8)
    }

    pub fn u(self) -> Fixed {
        Fixed::from_bits(self.0 & 0xFFFF, QFormat::Q7_8)
    }
}

impl fmt::Debug for VuWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VuWord({:#010x}: v={}, u={})", self.0, self.v().to_real(), self.u().to_real())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StepResult {
    pub vu: VuWord,
    pub spike: bool,
}

/// One NPU update.
///
/// A neuron whose input `v` is above [`V_TH`] is reset (`v <- c`,
/// `u <- u + d`) and `i_syn` is ignored. Otherwise
///
/// ```text
/// v' = (0.04 v^2 + 5 v + 140 - u + i_syn) h + v
/// u' = a h (b v - u) + u
/// ```
///
/// evaluated exactly on the raws, rounded once into Q7.8 with saturation,
/// and floored at `c` when the pin bit is set.
pub fn izh_step(vu: VuWord, i_syn: Fixed, cfg: &NmConfig) -> StepResult {
    debug_assert_eq!(i_syn.fmt(), QFormat::Q15_16);
    let p = &cfg.params;
    let v = vu.v().raw() as i128;
    let u = vu.u().raw() as i128;

    if v > V_TH as i128 {
        let d = p.d.convert(QFormat::Q7_8);
        let u_next = Fixed::saturating_from_raw(u + d.raw() as i128, QFormat::Q7_8);
        return StepResult { vu: VuWord::new(p.c, u_next), spike: true };
    }

    let hs = cfg.h.shift() as i32;

    // dv/dt at 40 fraction bits: v^2 carries 16, the coefficient 24.
    const DV_FRAC: u32 = 16 + QUAD_COEF_FRAC;
    let dv = QUAD_COEF * v * v + ((5 * v - u) << (DV_FRAC - 8)) + (140i128 << DV_FRAC)
        + ((i_syn.raw() as i128) << (DV_FRAC - 16));
    // Multiplying by h adds `hs` fraction bits; v is aligned to match.
    let v_acc = dv + (v << (DV_FRAC - 8 + hs as u32));
    let v_next = Fixed::saturating_from_raw(round_shift(v_acc, DV_FRAC as i32 + hs - 8), QFormat::Q7_8);

    // du/dt at 30 fraction bits: b*v carries 19, a another 11.
    let bv_minus_u = p.b.raw() as i128 * v - (u << 11);
    let u_acc = p.a.raw() as i128 * bv_minus_u + (u << (22 + hs as u32));
    let u_next = Fixed::saturating_from_raw(round_shift(u_acc, 22 + hs), QFormat::Q7_8);

    let v_next = if cfg.pin && v_next.raw() < p.c.raw() { p.c } else { v_next };
    StepResult { vu: VuWord::new(v_next, u_next), spike: false }
}

/// Real-valued neuron parameters for the double-precision reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleStep {
    pub v: f64,
    pub u: f64,
    pub spike: bool,
}

pub const V_TH_REAL: f64 = 30.0;

/// Double-precision forward-Euler step with the same reset and pin rules as
/// [`izh_step`], without quantization or saturation.
pub fn izh_step_oracle(v: f64, u: f64, i_syn: f64, p: &OracleParams, h: f64, pin: bool) -> OracleStep {
    if v > V_TH_REAL {
        return OracleStep { v: p.c, u: u + p.d, spike: true };
    }
    let mut v_next = (0.04 * v * v + 5.0 * v + 140.0 - u + i_syn) * h + v;
    let u_next = p.a * h * (p.b * v - u) + u;
    if pin && v_next < p.c {
        v_next = p.c;
    }
    OracleStep { v: v_next, u: u_next, spike: false }
}

#[derive(Debug, Error, PartialEq)]
pub enum VectorParseError {
    #[error("expected 5 fields, found {0}")]
    FieldCount(usize),
    #[error("bad hex field `{0}`")]
    Hex(String),
    #[error("spike flag must be 0 or 1, found `{0}`")]
    Spike(String),
}

/// One NPU test vector.
///
/// Text form is five whitespace-separated hex fields:
/// `vu_in i_syn cfg vu_out spike`. `cfg` is the `nmldh` flag nibble followed
/// by the `nmldl` rs2 and rs1 words, e.g. `2` `ffd0bf00` `01990029`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestVector {
    pub vu_in: VuWord,
    pub i_syn: Fixed,
    pub cfg: NmConfig,
    pub vu_out: VuWord,
    pub spike: bool,
}

impl TestVector {
    /// Build a vector whose expected output comes from [`izh_step`].
    pub fn golden(vu_in: VuWord, i_syn: Fixed, cfg: NmConfig) -> Self {
        let out = izh_step(vu_in, i_syn, &cfg);
        TestVector { vu_in, i_syn, cfg, vu_out: out.vu, spike: out.spike }
    }

    pub fn check(&self) -> bool {
        izh_step(self.vu_in, self.i_syn, &self.cfg) == StepResult { vu: self.vu_out, spike: self.spike }
    }
}

impl fmt::Display for TestVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (rs1, rs2) = self.cfg.params.to_registers();
        write!(
            f,
            "{:08x} {:08x} {:x}{:08x}{:08x} {:08x} {}",
            self.vu_in.0,
            self.i_syn.raw() as u32,
            self.cfg.flags_word(),
            rs2,
            rs1,
            self.vu_out.0,
            self.spike as u8
        )
    }
}

impl FromStr for TestVector {
    type Err = VectorParseError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(VectorParseError::FieldCount(fields.len()));
        }
        let hex32 = |s: &str| u32::from_str_radix(s, 16).map_err(|_| VectorParseError::Hex(s.to_owned()));
        let cfg_field = fields[2];
        if cfg_field.len() < 17 || !cfg_field.is_ascii() {
            return Err(VectorParseError::Hex(cfg_field.to_owned()));
        }
        let (flags, words) = cfg_field.split_at(cfg_field.len() - 16);
        let flags = hex32(flags)?;
        let rs2 = hex32(&words[..8])?;
        let rs1 = hex32(&words[8..])?;
        let cfg = NmConfig::default()
            .load_params(NeuronParams::from_registers(rs1, rs2))
            .load_h(flags & 1 != 0, flags & 2 != 0);
        let spike = match fields[4] {
            "0" => false,
            "1" => true,
            other => return Err(VectorParseError::Spike(other.to_owned())),
        };
        Ok(TestVector {
            vu_in: VuWord(hex32(fields[0])?),
            i_syn: Fixed::from_bits(hex32(fields[1])?, QFormat::Q15_16),
            cfg,
            vu_out: VuWord(hex32(fields[3])?),
            spike,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q1516(x: f64) -> Fixed {
        Fixed::from_real(x, QFormat::Q15_16).unwrap()
    }

    fn cfg(a: f64, b: f64, c: f64, d: f64) -> NmConfig {
        NmConfig::default().load_params(NeuronParams::from_real(a, b, c, d).unwrap())
    }

    #[test]
    fn vu_word_packing() {
        let vu = VuWord::from_real(-65.0, -13.0).unwrap();
        assert_eq!(vu.0, 0xBF00_F300);
        assert_eq!(vu.v().to_real(), -65.0);
        assert_eq!(vu.u().to_real(), -13.0);
    }

    #[test]
    fn spike_resets() {
        let cfg = cfg(0.02, 0.2, -65.0, 8.0);
        let out = izh_step(VuWord::from_real(31.0, 0.0).unwrap(), q1516(12.5), &cfg);
        assert!(out.spike);
        assert_eq!(out.vu.v().to_real(), -65.0);
        assert_eq!(out.vu.u().to_real(), 8.0);
    }

    #[test]
    fn threshold_is_strict() {
        let cfg = cfg(0.02, 0.2, -65.0, 8.0);
        let at = izh_step(VuWord::from_real(30.0, 0.0).unwrap(), q1516(0.0), &cfg);
        assert!(!at.spike);
        let above = izh_step(VuWord::from_raw(V_TH as i16 + 1, 0), q1516(0.0), &cfg);
        assert!(above.spike);
        let p = cfg.params.to_oracle();
        assert!(izh_step_oracle(30.0001, 0.0, 0.0, &p, 0.5, false).spike);
        assert!(!izh_step_oracle(30.0, 0.0, 0.0, &p, 0.5, false).spike);
    }

    #[test]
    fn resting_step() {
        // dv = (169 - 325 + 140 + 13) * 0.5 = -1.5
        let cfg = cfg(0.02, 0.2, -65.0, 8.0);
        let out = izh_step(VuWord::from_real(-65.0, -13.0).unwrap(), q1516(0.0), &cfg);
        assert!(!out.spike);
        assert!((out.vu.v().to_real() + 66.5).abs() <= 2.0 * QFormat::Q7_8.lsb());
        // b*v - u = 0 only for the real b; quantized b leaves a sub-LSB drift.
        assert!((out.vu.u().to_real() + 13.0).abs() <= QFormat::Q7_8.lsb());

        let oracle = izh_step_oracle(-65.0, -13.0, 0.0, &OracleParams { a: 0.02, b: 0.2, c: -65.0, d: 8.0 }, 0.5, false);
        assert_eq!(oracle.v, -66.5);
        assert_eq!(oracle.u, -13.0);
    }

    #[test]
    fn oracle_equilibrium() {
        let p = OracleParams { a: 0.02, b: 0.2, c: -65.0, d: 8.0 };
        let v = -70.0;
        let u = 0.04 * v * v + 5.0 * v + 140.0;
        let out = izh_step_oracle(v, u, 0.0, &p, 0.5, false);
        assert_eq!(out.v, v);
    }

    #[test]
    fn pin_floors_voltage() {
        // v = -70, u = 0: dv = (196 - 350 + 140) * 0.5 = -7 -> unpinned v' = -77
        let base = cfg(0.02, 0.2, -65.0, 8.0);
        let vu = VuWord::from_real(-70.0, 0.0).unwrap();
        let free = izh_step(vu, q1516(0.0), &base);
        assert!(free.vu.v().to_real() < -65.0);
        let pinned = izh_step(vu, q1516(0.0), &base.load_h(false, true));
        assert_eq!(pinned.vu.v().to_real(), -65.0);
        assert_eq!(pinned.vu.u(), free.vu.u());
    }

    #[test]
    fn eighth_step_selected() {
        let base = cfg(0.02, 0.2, -65.0, 8.0);
        let vu = VuWord::from_real(-65.0, -13.0).unwrap();
        let out = izh_step(vu, q1516(0.0), &base.load_h(true, false));
        // dv = -3 * 0.125
        assert!((out.vu.v().to_real() + 65.375).abs() <= 2.0 * QFormat::Q7_8.lsb());
    }

    #[test]
    fn params_register_roundtrip() {
        let p = NeuronParams::from_real(0.02, 0.2, -65.0, 8.0).unwrap();
        let (rs1, rs2) = p.to_registers();
        assert_eq!(NeuronParams::from_registers(rs1, rs2), p);
        assert_eq!(p.a().raw(), 41);
        assert_eq!(p.b().raw(), 410);
        assert_eq!(p.c().raw(), -16640);
        assert_eq!(p.d().raw(), 16384);
        assert_eq!(rs1, (410 << 16) | 41);
    }

    #[test]
    fn params_reject_wrong_format() {
        let q = Fixed::zero(QFormat::Q7_8);
        let p = Fixed::zero(QFormat::Q4_11);
        assert!(NeuronParams::new(p, p, q, p).is_ok());
        assert!(NeuronParams::new(q, p, q, p).is_err());
    }

    #[test]
    fn reset_saturates_u() {
        let cfg = cfg(0.02, 0.2, -65.0, 8.0);
        let out = izh_step(VuWord::from_real(40.0, 125.0).unwrap(), q1516(0.0), &cfg);
        assert_eq!(out.vu.u().raw(), QFormat::Q7_8.max_raw());
    }

    #[test]
    fn vector_line_roundtrip() {
        let cfg = cfg(0.1, 0.2, -65.0, 2.0).load_h(true, true);
        let tv = TestVector::golden(VuWord::from_real(-60.0, -12.0).unwrap(), q1516(-3.25), cfg);
        let line = tv.to_string();
        let parsed: TestVector = line.parse().unwrap();
        assert_eq!(parsed, tv);
        assert!(parsed.check());
        assert!(line.starts_with("c400f400 fffcc000 3"));
        assert_eq!("1 2 3".parse::<TestVector>(), Err(VectorParseError::FieldCount(3)));
    }
}
