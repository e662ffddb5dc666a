//! Sample-by-sample full-duplex relay engine.
//!
//! At every symbol period the relay first emits `t(i)` from its history, then
//! receives `r(i) = h_SR x(i) + h_LI t(i) + n_R(i)` through the true loop
//! channel and forms the cancelled estimate `xhat(i) = r(i) - hbar_LI t(i)`
//! with its own loop estimate `hbar_LI = h_LI - delta_h`. Everything before
//! time zero is zero.

use crate::coding::{scheme2_power_beta, DelayProfile};
use crate::rng::RngStream;
pub use crate::types::BetaPolicy;
use crate::{analysis, ChannelRealization, Error, Result, Sample};

/// Relay output magnitude treated as a diverged loop.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// `|h_SR|` below which the Scheme 1 inversion is refused.
pub const MIN_INVERTIBLE_GAIN: f64 = 1e-6;

const ZERO: Sample = Sample::new(0.0, 0.0);

impl BetaPolicy {
    pub fn resolve(self, ch: &ChannelRealization, b: usize) -> Result<f64> {
        match self {
            BetaPolicy::PowerMax => Ok(scheme2_power_beta(ch.h_li_estimate(), b)),
            BetaPolicy::Optimal => optimal_beta(ch, b),
            BetaPolicy::Fixed(beta) => Ok(beta),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RelayMode {
    /// Relay silent.
    Off,
    /// Complete cancellation, then `t(i) = sum_j m_j xhat(i - j)`.
    Scheme1 { taps: Vec<Sample>, invert_h_sr: bool },
    /// Partial cancellation `t(i) = beta [r(i-1) - (hbar beta)^b xhat(i-b-1)]`.
    Scheme2 { b: usize, beta: BetaPolicy },
    /// Classic AF with residual loop `t(i) = beta [r(i-1) - w t(i-1)]`.
    ResidualAf { w: Sample, beta: f64 },
}

/// Per-sample relay signals on the source time axis.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RelayTrace {
    pub r: Vec<Sample>,
    pub t: Vec<Sample>,
    pub xhat: Vec<Sample>,
}

impl RelayTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.t.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Scheme 1 relay code applied to the history `xhat(0..i)`.
pub fn scheme1_transmit(
    xhat_history: &[Sample],
    taps: &[Sample],
    ch: &ChannelRealization,
    invert_h_sr: bool,
) -> Result<Sample> {
    let i = xhat_history.len();
    let mut t = ZERO;
    for (j, &m) in taps.iter().enumerate() {
        // tap m_{j+1} multiplies xhat(i - j - 1)
        if let Some(k) = i.checked_sub(j + 1) {
            t += m * xhat_history[k];
        }
    }
    if invert_h_sr {
        let g = ch.h_sr.norm();
        if g < MIN_INVERTIBLE_GAIN {
            return Err(Error::SingularInversion(g));
        }
        t /= ch.h_sr;
    }
    Ok(t)
}

/// Scheme 2 partial-cancellation output for time `i = r_history.len()`.
pub fn scheme2_transmit(
    r_history: &[Sample],
    xhat_history: &[Sample],
    ch: &ChannelRealization,
    b: usize,
    beta: f64,
) -> Sample {
    let i = r_history.len();
    let last_r = i.checked_sub(1).map_or(ZERO, |k| r_history[k]);
    let echo = i.checked_sub(b + 1).map_or(ZERO, |k| xhat_history[k]);
    let loop_gain = (ch.h_li_estimate() * beta).powu(b as u32);
    (last_r - loop_gain * echo) * beta
}

/// Amplifying factor minimising the interference-plus-noise bound,
/// capped by the Scheme 2 power constraint (which also keeps
/// `beta |hbar_LI| < 1`). Without loop-CSI error the power-max factor applies.
pub fn optimal_beta(ch: &ChannelRealization, b: usize) -> Result<f64> {
    if ch.sigma2_d <= 0.0 {
        return Err(Error::InvalidInput(
            "optimal amplifying factor needs sigma_D^2 > 0".into(),
        ));
    }
    let cap = scheme2_power_beta(ch.h_li_estimate(), b);
    if ch.sigma2_h <= 0.0 {
        return Ok(cap);
    }
    Ok(analysis::beta_star(ch).min(cap))
}

/// Runs the relay over the source waveform `x` with explicit relay noise.
pub fn run_relay_with_noise(
    x: &[Sample],
    ch: &ChannelRealization,
    mode: &RelayMode,
    noise: &[Sample],
) -> Result<RelayTrace> {
    if noise.len() < x.len() {
        return Err(Error::InvalidInput(format!(
            "relay noise has {} samples for {} source samples",
            noise.len(),
            x.len()
        )));
    }
    let n = x.len();
    let hbar = ch.h_li_estimate();
    let scheme2_beta = match mode {
        RelayMode::Scheme2 { b, beta } => beta.resolve(ch, *b)?,
        _ => 0.0,
    };
    let mut trace = RelayTrace {
        r: Vec::with_capacity(n),
        t: Vec::with_capacity(n),
        xhat: Vec::with_capacity(n),
    };
    for i in 0..n {
        let t = match mode {
            RelayMode::Off => ZERO,
            RelayMode::Scheme1 { taps, invert_h_sr } => {
                scheme1_transmit(&trace.xhat, taps, ch, *invert_h_sr)?
            }
            RelayMode::Scheme2 { b, .. } => {
                scheme2_transmit(&trace.r, &trace.xhat, ch, *b, scheme2_beta)
            }
            RelayMode::ResidualAf { w, beta } => match i {
                0 => ZERO,
                _ => (trace.r[i - 1] - w * trace.t[i - 1]) * *beta,
            },
        };
        let magnitude = t.norm();
        if !(magnitude <= DIVERGENCE_LIMIT) {
            return Err(Error::RelayDiverged { index: i, magnitude });
        }
        let r = ch.h_sr * x[i] + ch.h_li * t + noise[i];
        trace.t.push(t);
        trace.r.push(r);
        trace.xhat.push(r - hbar * t);
    }
    Ok(trace)
}

/// Runs the relay drawing CN(0, sigma_R^2) noise from `rng`.
pub fn run_relay(
    x: &[Sample],
    ch: &ChannelRealization,
    mode: &RelayMode,
    rng: &mut RngStream,
) -> Result<RelayTrace> {
    let noise = rng.complex_gaussian_vec(x.len(), ch.sigma2_r);
    run_relay_with_noise(x, ch, mode, &noise)
}

/// Destination samples `y(i) = h_RD t(i + 1 - tau) + h_SD x(i) + n_D(i)`.
///
/// The relay needs one symbol period before it can emit anything, so the
/// first relay codeword sample goes out at `t(1)`. That fixed latency is
/// folded into the timing reference, leaving `tau` as the relative shift of
/// the codeword rows in the effective code.
pub fn destination_receive_with_noise(
    trace: &RelayTrace,
    x: &[Sample],
    ch: &ChannelRealization,
    delta: &DelayProfile,
    noise: &[Sample],
) -> Vec<Sample> {
    let tau = delta.relay_delay();
    noise
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let relay = (i + 1)
                .checked_sub(tau)
                .and_then(|k| trace.t.get(k))
                .copied()
                .unwrap_or(ZERO);
            let direct = x.get(i).copied().unwrap_or(ZERO);
            ch.h_rd * relay + ch.h_sd * direct + n
        })
        .collect()
}

/// Destination samples with CN(0, sigma_D^2) noise drawn from `rng`.
pub fn destination_receive(
    trace: &RelayTrace,
    x: &[Sample],
    ch: &ChannelRealization,
    delta: &DelayProfile,
    len: usize,
    rng: &mut RngStream,
) -> Vec<Sample> {
    let noise = rng.complex_gaussian_vec(len, ch.sigma2_d);
    destination_receive_with_noise(trace, x, ch, delta, &noise)
}
