//! Gray-mapped unit-energy QPSK.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::{Error, Result, Sample, SymbolFrame};

/// Maps bit pairs `(b0, b1)` to `((1 - 2 b0) + i (1 - 2 b1)) / sqrt(2)`.
pub fn qpsk_modulate(bits: &[bool]) -> Result<SymbolFrame> {
    if bits.len() % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "QPSK needs an even bit count, got {}",
            bits.len()
        )));
    }
    let level = |b: bool| if b { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
    Ok(SymbolFrame::new(
        bits.chunks_exact(2)
            .map(|p| Sample::new(level(p[0]), level(p[1])))
            .collect(),
    ))
}

/// Quadrant slicing. Zero components slice to the positive side.
pub fn qpsk_demodulate_hard(symbols: &[Sample]) -> Vec<bool> {
    symbols
        .iter()
        .flat_map(|s| [s.re < 0.0, s.im < 0.0])
        .collect()
}

/// Nearest QPSK point.
pub fn qpsk_slice(s: Sample) -> Sample {
    let level = |v: f64| if v < 0.0 { -FRAC_1_SQRT_2 } else { FRAC_1_SQRT_2 };
    Sample::new(level(s.re), level(s.im))
}

/// The four constellation points in bit-pair order 00, 01, 10, 11.
pub fn qpsk_points() -> [Sample; 4] {
    let p = FRAC_1_SQRT_2;
    [
        Sample::new(p, p),
        Sample::new(p, -p),
        Sample::new(-p, p),
        Sample::new(-p, -p),
    ]
}

pub fn count_bit_errors(sent: &[bool], decided: &[bool]) -> u64 {
    sent.iter().zip(decided).filter(|(a, b)| a != b).count() as u64
}
