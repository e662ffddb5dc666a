//! Distributed linear convolutional space-time codes.
//!
//! The direct link is treated as a special "relay" whose generator row is the
//! unit vector `[1, 0, ..., 0]`; the relay row holds the taps `m_1..m_b`. Each
//! link sends the linear convolution of its row with the symbol frame, and the
//! asynchronous channel shifts every row by its own integer delay inside a
//! zero-padded guard of `tau_max` symbols.

use nalgebra::DMatrix;

use crate::{Error, Result, Sample, SymbolFrame};

/// `sigma_min > RANK_TOLERANCE * sigma_max` declares full rank.
pub const RANK_TOLERANCE: f64 = 1e-9;

/// Largest loop gain `|h_LI| beta` handed out by [`scheme2_power_beta`].
pub const LOOP_GAIN_LIMIT: f64 = 0.999;

const ZERO: Sample = Sample::new(0.0, 0.0);
const ONE: Sample = Sample::new(1.0, 0.0);

/// Banded Toeplitz matrix `a[i][j] = v[i - j]` for `0 <= i - j < b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionMatrix {
    matrix: DMatrix<Sample>,
}

impl ConvolutionMatrix {
    pub fn new(taps: &[Sample], frame_len: usize) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidInput("convolution taps must be non-empty".into()));
        }
        if frame_len == 0 {
            return Err(Error::InvalidInput("frame length must be positive".into()));
        }
        let b = taps.len();
        let matrix = DMatrix::from_fn(b + frame_len - 1, frame_len, |i, j| {
            if i >= j && i - j < b {
                taps[i - j]
            } else {
                ZERO
            }
        });
        Ok(ConvolutionMatrix { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<Sample> {
        &self.matrix
    }

    pub fn apply(&self, s: &[Sample]) -> Vec<Sample> {
        let col = nalgebra::DVector::from_column_slice(s);
        (&self.matrix * col).iter().copied().collect()
    }
}

pub fn convolution_matrix(taps: &[Sample], frame_len: usize) -> Result<ConvolutionMatrix> {
    ConvolutionMatrix::new(taps, frame_len)
}

/// Linear convolution of `taps` with `s`, length `taps.len() + s.len() - 1`.
pub fn convolve(taps: &[Sample], s: &[Sample]) -> Vec<Sample> {
    if taps.is_empty() || s.is_empty() {
        return Vec::new();
    }
    let mut out = vec![ZERO; taps.len() + s.len() - 1];
    for (u, &m) in taps.iter().enumerate() {
        for (k, &x) in s.iter().enumerate() {
            out[u + k] += m * x;
        }
    }
    out
}

/// Integer symbol delays per link, bounded by the zero-padding length.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DelayProfile {
    taus: Vec<usize>,
    tau_max: usize,
}

impl DelayProfile {
    pub fn new(taus: Vec<usize>, tau_max: usize) -> Result<Self> {
        if let Some(&t) = taus.iter().find(|&&t| t > tau_max) {
            return Err(Error::InvalidInput(format!(
                "delay {t} exceeds tau_max {tau_max}"
            )));
        }
        Ok(DelayProfile { taus, tau_max })
    }

    /// Two-link profile with the direct link as timing reference.
    pub fn relay(tau: usize, tau_max: usize) -> Result<Self> {
        Self::new(vec![0, tau], tau_max)
    }

    pub fn taus(&self) -> &[usize] {
        &self.taus
    }

    pub fn tau_max(&self) -> usize {
        self.tau_max
    }

    pub fn relay_delay(&self) -> usize {
        self.taus.get(1).copied().unwrap_or(0)
    }

    /// Every profile of `rows` links with delays in `0..=tau_max`, in
    /// lexicographic order (first link slowest).
    pub fn enumerate(rows: usize, tau_max: usize) -> impl Iterator<Item = DelayProfile> {
        let base = tau_max + 1;
        let total = base.pow(rows as u32);
        (0..total).map(move |mut idx| {
            let mut taus = vec![0; rows];
            for k in (0..rows).rev() {
                taus[k] = idx % base;
                idx /= base;
            }
            DelayProfile { taus, tau_max }
        })
    }
}

/// `r x b` code generator: row 0 the direct link, row 1 the relay taps.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    rows: Vec<Vec<Sample>>,
}

impl GeneratorMatrix {
    /// Arbitrary rows of equal, non-zero length.
    pub fn from_rows(rows: Vec<Vec<Sample>>) -> Result<Self> {
        let b = rows.first().map_or(0, Vec::len);
        if b == 0 || rows.iter().any(|r| r.len() != b) {
            return Err(Error::InvalidInput("generator rows must share a non-zero length".into()));
        }
        Ok(GeneratorMatrix { rows })
    }

    /// Direct row `[1, 0, ..., 0]` stacked on the given relay taps.
    pub fn with_relay_taps(taps: Vec<Sample>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidInput("relay taps must be non-empty".into()));
        }
        let mut direct = vec![ZERO; taps.len()];
        direct[0] = ONE;
        Ok(GeneratorMatrix { rows: vec![direct, taps] })
    }

    pub fn rows(&self) -> &[Vec<Sample>] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Constraint length `b`.
    pub fn b(&self) -> usize {
        self.rows[0].len()
    }

    pub fn relay_taps(&self) -> &[Sample] {
        &self.rows[1]
    }

    /// `sum_j |m_j|^2` of the relay row.
    pub fn relay_power(&self) -> f64 {
        self.relay_taps().iter().map(|m| m.norm_sqr()).sum()
    }
}

/// Relay row `[1/sqrt(b); b]`.
pub fn scheme1_generator(b: usize) -> Result<GeneratorMatrix> {
    if b < 2 {
        return Err(Error::InvalidInput(format!(
            "scheme 1 needs b >= 2 for a shift-full-rank generator, got {b}"
        )));
    }
    let m = Sample::new(1.0 / (b as f64).sqrt(), 0.0);
    GeneratorMatrix::with_relay_taps(vec![m; b])
}

/// Relay row with a single unit tap at one-based position `tap`.
pub fn delay_diversity_generator(b: usize, tap: usize) -> Result<GeneratorMatrix> {
    if tap == 0 || tap > b {
        return Err(Error::InvalidInput(format!("tap index {tap} outside 1..={b}")));
    }
    let mut taps = vec![ZERO; b];
    taps[tap - 1] = ONE;
    GeneratorMatrix::with_relay_taps(taps)
}

/// Loop-echo taps `beta (h_LI beta)^(j-1)`, `j = 1..b`.
pub fn scheme2_taps(h_li: Sample, beta: f64, b: usize) -> Vec<Sample> {
    let ratio = h_li * beta;
    let mut tap = Sample::new(beta, 0.0);
    (0..b)
        .map(|_| {
            let out = tap;
            tap *= ratio;
            out
        })
        .collect()
}

/// Generator inherited from the partially cancelled loop.
pub fn scheme2_generator(h_li: Sample, beta: f64, b: usize) -> Result<GeneratorMatrix> {
    if b < 2 {
        return Err(Error::InvalidInput(format!("scheme 2 needs b >= 2, got {b}")));
    }
    let limit = 1.0 / h_li.norm();
    if !(beta > 0.0 && beta < limit) {
        return Err(Error::BetaOutOfRange { beta, limit });
    }
    GeneratorMatrix::with_relay_taps(scheme2_taps(h_li, beta, b))
}

/// Relay-row power `beta^2 sum_{i<b} (|h| beta)^(2i)` of the Scheme 2 code.
pub fn scheme2_row_power(h_li_abs: f64, beta: f64, b: usize) -> f64 {
    let x = (h_li_abs * beta).powi(2);
    let mut acc = 0.0;
    let mut term = 1.0;
    for _ in 0..b {
        acc += term;
        term *= x;
    }
    beta * beta * acc
}

/// Largest `beta` that puts the Scheme 2 relay row at unit power.
///
/// The row power grows monotonically in `beta`, so the root is found by
/// bisection on `(0, LOOP_GAIN_LIMIT / |h_LI|)`. When even the stability
/// limit leaves the row below unit power (`|h_LI|^2 >~ b`), the limit itself
/// is returned; for `h_LI = 0` the single remaining tap gives `beta = 1`.
pub fn scheme2_power_beta(h_li: Sample, b: usize) -> f64 {
    let h = h_li.norm();
    if h == 0.0 {
        return 1.0;
    }
    // row power is at least one at beta = 1, so the root never exceeds one
    let hi = (LOOP_GAIN_LIMIT / h).min(1.0);
    if scheme2_row_power(h, hi, b) <= 1.0 {
        return hi;
    }
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if scheme2_row_power(h, mid, b) > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Outcome of a shift-full-rank test.
#[derive(Debug, Clone, PartialEq)]
pub struct SfrReport {
    /// Full row rank for every enumerated profile.
    pub is_sfr: bool,
    /// First rank-deficient profile, if any.
    pub witness: Option<DelayProfile>,
    /// Smallest `sigma_min / sigma_max` over the enumerated profiles.
    pub min_singular_ratio: f64,
    /// Delay-unbounded verdict for two-row generators: the rows stay
    /// independent under every shift iff the trimmed relay row is not a
    /// multiple of the trimmed direct row.
    pub analytic: Option<bool>,
}

/// Rows shifted by `delta` and zero padded to width `b + tau_max`.
pub fn shifted_generator(m: &GeneratorMatrix, delta: &DelayProfile) -> DMatrix<Sample> {
    shift_rows(m.rows(), delta)
}

fn shift_rows(rows: &[Vec<Sample>], delta: &DelayProfile) -> DMatrix<Sample> {
    let width = rows[0].len() + delta.tau_max();
    let mut out = DMatrix::from_element(rows.len(), width, ZERO);
    for (k, row) in rows.iter().enumerate() {
        let tau = delta.taus()[k];
        for (j, &v) in row.iter().enumerate() {
            out[(k, tau + j)] = v;
        }
    }
    out
}

/// Decides the shift-full-rank property by enumerating every delay profile
/// with delays in `0..=tau_max`.
///
/// Rows are scaled to unit norm before the singular-value test; row scaling
/// leaves the rank unchanged and keeps the relative threshold meaningful when
/// the rows have very different energies.
pub fn is_sfr(m: &GeneratorMatrix, tau_max: usize) -> SfrReport {
    let normalized: Vec<Vec<Sample>> = m
        .rows()
        .iter()
        .map(|row| {
            let n = row.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter().map(|v| v / n).collect()
            } else {
                row.clone()
            }
        })
        .collect();
    let mut min_ratio = f64::INFINITY;
    let mut witness = None;
    for delta in DelayProfile::enumerate(m.num_rows(), tau_max) {
        let sv = shift_rows(&normalized, &delta).singular_values();
        let max = sv.max();
        let min = sv.min();
        let ratio = if max > 0.0 { min / max } else { 0.0 };
        min_ratio = min_ratio.min(ratio);
        if ratio <= RANK_TOLERANCE && witness.is_none() {
            witness = Some(delta);
        }
    }
    let analytic = (m.num_rows() == 2).then(|| !rows_shift_dependent(&m.rows()[0], &m.rows()[1]));
    SfrReport {
        is_sfr: witness.is_none(),
        witness,
        min_singular_ratio: min_ratio,
        analytic,
    }
}

/// True when some relative shift makes the two rows linearly dependent.
fn rows_shift_dependent(a: &[Sample], b: &[Sample]) -> bool {
    let trim = |r: &[Sample]| -> Vec<Sample> {
        let scale = r.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let nz = |v: &Sample| v.norm() > RANK_TOLERANCE * scale;
        match (r.iter().position(nz), r.iter().rposition(nz)) {
            (Some(s), Some(e)) => r[s..=e].to_vec(),
            _ => Vec::new(),
        }
    };
    let (ta, tb) = (trim(a), trim(b));
    if ta.is_empty() || tb.is_empty() {
        return true;
    }
    if ta.len() != tb.len() {
        return false;
    }
    // proportional iff the 2 x n stack has rank one
    let ratio = tb[0] / ta[0];
    let scale = tb.iter().map(|v| v.norm()).fold(0.0, f64::max);
    ta.iter()
        .zip(&tb)
        .all(|(x, y)| (y - x * ratio).norm() <= 1e-9 * scale)
}

/// Zero-padded, delay-shifted codeword matrix `C_Delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCode {
    matrix: DMatrix<Sample>,
}

impl EffectiveCode {
    pub fn matrix(&self) -> &DMatrix<Sample> {
        &self.matrix
    }

    pub fn row(&self, k: usize) -> Vec<Sample> {
        self.matrix.row(k).iter().copied().collect()
    }
}

/// Codewords `c_k = A_k s`, each shifted by `tau_k` into width `q + tau_max`.
pub fn effective_code(
    m: &GeneratorMatrix,
    s: &SymbolFrame,
    delta: &DelayProfile,
) -> Result<EffectiveCode> {
    if delta.taus().len() != m.num_rows() {
        return Err(Error::InvalidInput(format!(
            "delay profile has {} links, generator has {} rows",
            delta.taus().len(),
            m.num_rows()
        )));
    }
    if s.is_empty() {
        return Err(Error::InvalidInput("empty symbol frame".into()));
    }
    let q = m.b() + s.len() - 1;
    let mut matrix = DMatrix::from_element(m.num_rows(), q + delta.tau_max(), ZERO);
    for (k, row) in m.rows().iter().enumerate() {
        let tau = delta.taus()[k];
        for (j, v) in convolve(row, s).into_iter().enumerate() {
            matrix[(k, tau + j)] = v;
        }
    }
    Ok(EffectiveCode { matrix })
}
