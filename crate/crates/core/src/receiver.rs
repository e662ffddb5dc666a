//! Destination-side block detection.
//!
//! The destination stacks its `N_y = l + b - 1 + tau_max` samples into
//! `y = G s + n` with colored noise covariance `R_n`, where the relay noise
//! reaches the destination through the same relay code as the signal. All
//! detectors whiten with the Cholesky factor of `R_n` first.

use crate::coding::{DelayProfile, GeneratorMatrix};
use crate::linalg::{CMatrix, HermitianFactor};
use crate::modulation::{qpsk_demodulate_hard, qpsk_points, qpsk_slice};
use crate::{ChannelRealization, Error, Result, Sample, Scheme, SimConfig, SymbolFrame};

/// Largest frame the exhaustive ML detector accepts.
pub const ML_MAX_FRAME: usize = 8;

const ZERO: Sample = Sample::new(0.0, 0.0);

/// `y = G s + n` with `E[n n^H] = R_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveSystem {
    pub g: CMatrix,
    pub r_n: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub symbols: SymbolFrame,
    pub bits: Vec<bool>,
    /// Condition estimate of the factored matrix.
    pub condition: f64,
    /// A jitter was needed to factor a covariance.
    pub jittered: bool,
    pub aborted: bool,
}

impl DetectionResult {
    fn from_symbols(symbols: Vec<Sample>, condition: f64, jittered: bool) -> Self {
        let bits = qpsk_demodulate_hard(&symbols);
        DetectionResult {
            symbols: SymbolFrame::new(symbols),
            bits,
            condition,
            jittered,
            aborted: false,
        }
    }
}

/// Amplitude of the direct row and the relay signal and noise gains seen at
/// the destination, from the nominal (perfect cancellation) model.
fn link_gains(ch: &ChannelRealization, cfg: &SimConfig) -> Result<(Sample, Sample, Sample)> {
    let direct = ch.h_sd * cfg.source_amplitude();
    Ok(match cfg.scheme {
        Scheme::DirectOnly => (direct, ZERO, ZERO),
        Scheme::Scheme1 if cfg.invert_h_sr => {
            if ch.h_sr.norm() < crate::relay::MIN_INVERTIBLE_GAIN {
                return Err(Error::SingularInversion(ch.h_sr.norm()));
            }
            (direct, ch.h_rd, ch.h_rd / ch.h_sr)
        }
        _ => (direct, ch.h_rd * ch.h_sr, ch.h_rd),
    })
}

/// Builds `G` and `R_n` for a frame of `cfg.frame_len` symbols.
///
/// Row 0 of `m` is the direct link, row 1 (if any) the relay code. Column
/// `k` of `G` is the noiseless response to a unit symbol at position `k`.
pub fn build_effective_system(
    m: &GeneratorMatrix,
    ch: &ChannelRealization,
    delta: &DelayProfile,
    cfg: &SimConfig,
) -> Result<EffectiveSystem> {
    if delta.taus().len() != m.num_rows() {
        return Err(Error::InvalidInput(format!(
            "delay profile has {} links, generator has {} rows",
            delta.taus().len(),
            m.num_rows()
        )));
    }
    if !(ch.sigma2_d > 0.0) {
        return Err(Error::InvalidInput("destination noise variance must be positive".into()));
    }
    let l = cfg.frame_len;
    let n_y = l + m.b() - 1 + delta.tau_max();
    let (direct, relay_gain, noise_gain) = link_gains(ch, cfg)?;

    let mut g = CMatrix::from_element(n_y, l, ZERO);
    let mut f = CMatrix::from_element(n_y, n_y, ZERO);
    let rows = m.rows();
    let tau0 = delta.taus()[0];
    for k in 0..l {
        for (j, &v) in rows[0].iter().enumerate() {
            g[(k + j + tau0, k)] += direct * v;
        }
    }
    if rows.len() > 1 && cfg.scheme != Scheme::DirectOnly {
        let tau = delta.taus()[1];
        for k in 0..l {
            for (j, &v) in rows[1].iter().enumerate() {
                g[(k + j + tau, k)] += relay_gain * v;
            }
        }
        // relay noise n_R(k) enters y through the same taps; samples past the
        // observation window cannot reach it
        for k in 0..n_y {
            for (j, &v) in rows[1].iter().enumerate() {
                let row = k + j + tau;
                if row < n_y {
                    f[(row, k)] += noise_gain * v;
                }
            }
        }
    }
    let mut r_n = &f * f.adjoint() * Sample::new(ch.sigma2_r, 0.0);
    for i in 0..n_y {
        r_n[(i, i)] += Sample::new(ch.sigma2_d, 0.0);
    }
    Ok(EffectiveSystem { g, r_n })
}

impl EffectiveSystem {
    pub fn frame_len(&self) -> usize {
        self.g.ncols()
    }

    pub fn observation_len(&self) -> usize {
        self.g.nrows()
    }

    /// Noiseless samples `G s`.
    pub fn apply(&self, s: &[Sample]) -> Vec<Sample> {
        let v = &self.g * CMatrix::from_column_slice(s.len(), 1, s);
        v.iter().copied().collect()
    }

    fn whiten(&self, y: &[Sample]) -> Result<Whitened> {
        if y.len() != self.observation_len() {
            return Err(Error::InvalidInput(format!(
                "observation has {} samples, system expects {}",
                y.len(),
                self.observation_len()
            )));
        }
        let noise = HermitianFactor::new(self.r_n.clone())?;
        let mut g = self.g.clone();
        noise.solve_lower(&mut g);
        let mut yw = CMatrix::from_column_slice(y.len(), 1, y);
        noise.solve_lower(&mut yw);
        Ok(Whitened {
            g,
            y: yw,
            jittered: noise.jittered,
        })
    }
}

struct Whitened {
    g: CMatrix,
    y: CMatrix,
    jittered: bool,
}

impl Whitened {
    /// Factor of `G~^H G~ + I` and the matched-filter output `G~^H y~`.
    fn mmse_parts(&self) -> Result<(HermitianFactor, CMatrix)> {
        let l = self.g.ncols();
        let mut a = self.g.adjoint() * &self.g;
        for i in 0..l {
            a[(i, i)] += Sample::new(1.0, 0.0);
        }
        let matched = self.g.adjoint() * &self.y;
        Ok((HermitianFactor::new(a)?, matched))
    }
}

/// Unsliced linear MMSE estimate `G^H (G G^H + R_n)^-1 y`.
pub fn mmse_estimate(sys: &EffectiveSystem, y: &[Sample]) -> Result<Vec<Sample>> {
    let w = sys.whiten(y)?;
    let (a, matched) = w.mmse_parts()?;
    Ok(a.chol.solve(&matched).iter().copied().collect())
}

pub fn mmse_detect(sys: &EffectiveSystem, y: &[Sample]) -> Result<DetectionResult> {
    let w = sys.whiten(y)?;
    let (a, matched) = w.mmse_parts()?;
    let est = a.chol.solve(&matched);
    let symbols = est.iter().map(|&v| qpsk_slice(v)).collect();
    Ok(DetectionResult::from_symbols(
        symbols,
        a.condition_estimate(),
        w.jittered || a.jittered,
    ))
}

/// Block MMSE-DFE.
///
/// With `G~^H G~ + I = L L^H` the feedforward output `z = L^-1 G~^H y~`
/// equals `L^H s` plus white error, so symbols are sliced from the last
/// index down, each after subtracting the feedback of decided later symbols.
pub fn mmse_dfe_detect(sys: &EffectiveSystem, y: &[Sample]) -> Result<DetectionResult> {
    let w = sys.whiten(y)?;
    let (a, mut z) = w.mmse_parts()?;
    a.solve_lower(&mut z);
    let lower = a.chol.l_dirty();
    let l = z.nrows();
    let mut s = vec![ZERO; l];
    for k in (0..l).rev() {
        // row k of L^H is the conjugate of column k of L
        let mut acc = z[k];
        for j in k + 1..l {
            acc -= lower[(j, k)].conj() * s[j];
        }
        s[k] = qpsk_slice(acc / lower[(k, k)].re);
    }
    Ok(DetectionResult::from_symbols(
        s,
        a.condition_estimate(),
        w.jittered || a.jittered,
    ))
}

/// Exhaustive search for the minimum whitened distance `|y~ - G~ s|^2`.
pub fn ml_detect(sys: &EffectiveSystem, y: &[Sample]) -> Result<DetectionResult> {
    let l = sys.frame_len();
    if l > ML_MAX_FRAME {
        return Err(Error::FrameTooLong {
            len: l,
            max: ML_MAX_FRAME,
        });
    }
    let w = sys.whiten(y)?;
    let points = qpsk_points();
    let n = w.g.nrows();
    let yv: Vec<Sample> = w.y.iter().copied().collect();
    let mut best = (f64::INFINITY, 0usize);
    let mut residual = vec![ZERO; n];
    for code in 0..(1usize << (2 * l)) {
        residual.copy_from_slice(&yv);
        for k in 0..l {
            let s = points[(code >> (2 * k)) & 3];
            for (i, r) in residual.iter_mut().enumerate() {
                *r -= w.g[(i, k)] * s;
            }
        }
        let metric: f64 = residual.iter().map(|r| r.norm_sqr()).sum();
        if metric < best.0 {
            best = (metric, code);
        }
    }
    let symbols = (0..l).map(|k| points[(best.1 >> (2 * k)) & 3]).collect();
    Ok(DetectionResult::from_symbols(symbols, 1.0, w.jittered))
}

pub fn detect(
    kind: crate::ReceiverKind,
    sys: &EffectiveSystem,
    y: &[Sample],
) -> Result<DetectionResult> {
    match kind {
        crate::ReceiverKind::Mmse => mmse_detect(sys, y),
        crate::ReceiverKind::MmseDfe => mmse_dfe_detect(sys, y),
        crate::ReceiverKind::Ml => ml_detect(sys, y),
    }
}
