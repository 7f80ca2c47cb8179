//! Golden model of the Neuron Decay Unit.
//!
//! Division by a small constant is approximated by summing arithmetic right
//! shifts of the input, each by 1 to 9 places.

use std::fmt;

use num_rational::Ratio;
use thiserror::Error;

use crate::fixedpoint::{Fixed, QFormat};
use crate::npu::TimeStep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("unsupported divider /{0}; the shift network covers /2 to /8")]
pub struct UnsupportedDivider(pub u32);

/// A divider in `2..=8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DividerSelect(u8);

/// Shift amounts summed for each divider, indexed by `d - 2`.
const SHIFT_COMBOS: [&[u32]; 7] = [
    &[1],          // /2
    &[2, 4, 6, 8], // /3
    &[2],          // /4
    &[3, 4, 7, 8], // /5
    &[3, 5, 7, 9], // /6
    &[3, 6, 9],    // /7
    &[3],          // /8
];

impl DividerSelect {
    pub const ALL: [DividerSelect; 7] = [
        DividerSelect(2),
        DividerSelect(3),
        DividerSelect(4),
        DividerSelect(5),
        DividerSelect(6),
        DividerSelect(7),
        DividerSelect(8),
    ];

    pub fn new(d: u32) -> Result<Self, UnsupportedDivider> {
        if (2..=8).contains(&d) {
            Ok(DividerSelect(d as u8))
        } else {
            Err(UnsupportedDivider(d))
        }
    }

    pub fn divisor(self) -> u32 {
        self.0 as u32
    }

    pub fn combo(self) -> ShiftCombo {
        ShiftCombo(SHIFT_COMBOS[self.0 as usize - 2])
    }
}

impl fmt::Display for DividerSelect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "/{}", self.0)
    }
}

/// Ordered shift amounts, each in `1..=9`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftCombo(&'static [u32]);

impl ShiftCombo {
    pub fn shifts(self) -> &'static [u32] {
        self.0
    }

    /// The exact multiplier `sum(2^-k)`.
    pub fn value(self) -> Ratio<i64> {
        self.0.iter().map(|&k| Ratio::new(1, 1i64 << k)).sum()
    }
}

impl fmt::Display for ShiftCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self.0.iter().map(|k| format!("(x >> {k})")).collect();
        if terms.len() == 1 {
            write!(f, "x >> {}", self.0[0])
        } else {
            f.write_str(&terms.join(" + "))
        }
    }
}

/// Sum of arithmetic right shifts of `x` over the divider's combo.
pub fn approx_divide(x: i32, d: DividerSelect) -> i32 {
    // Each term has magnitude below |x| / 2, so the sum cannot leave i32 range.
    d.combo().shifts().iter().map(|&k| (x >> k) as i64).sum::<i64>() as i32
}

/// Relative error of the combo against `1/d`, in percent, as an exact ratio.
pub fn approximation_error_exact(d: DividerSelect) -> Ratio<i64> {
    let ideal = Ratio::new(1, d.divisor() as i64);
    let diff = d.combo().value() - ideal;
    let abs = if diff < Ratio::from_integer(0) { -diff } else { diff };
    abs / ideal * Ratio::from_integer(100)
}

pub fn approximation_error(d: DividerSelect) -> f64 {
    let ae = approximation_error_exact(d);
    *ae.numer() as f64 / *ae.denom() as f64
}

/// One decay step of a Q15.16 synaptic current: `i - (i / d) * h`, with the
/// division from the shift network and `h` a further right shift.
pub fn decay_step(i_syn: Fixed, d: DividerSelect, h: TimeStep) -> Fixed {
    debug_assert_eq!(i_syn.fmt(), QFormat::Q15_16);
    let delta = approx_divide(i_syn.raw(), d) >> h.shift();
    Fixed::saturating_from_raw(i_syn.raw() as i128 - delta as i128, QFormat::Q15_16)
}

/// Reference AE table (percent) the analytic values are checked against.
pub const REFERENCE_AE: [(u32, f64); 7] = [
    (2, 0.0),
    (3, 0.3906),
    (4, 0.0),
    (5, 0.3906),
    (6, 12.1093),
    (7, 0.1953),
    (8, 0.0),
];

/// The reference entry for /6 does not match its own shift combo, which
/// evaluates to 25/64 %.
pub fn reference_ae_disputed(d: DividerSelect) -> bool {
    d.divisor() == 6
}
