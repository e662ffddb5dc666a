//! Quasi-static Rayleigh channel and delay-profile draws.

use rand::Rng;

use crate::coding::DelayProfile;
use crate::rng::RngStream;
use crate::{ChannelRealization, SimConfig};

/// Draws the four links i.i.d. CN(0, 1) and the loop-CSI error
/// CN(0, sigma_h^2). Noise variances follow from the SNRs with `E_s = 1`.
///
/// The unit-variance draw behind `delta_h` is consumed even for perfect CSI,
/// so a sweep over loop-CSI quality sees the same links at every point.
pub fn draw_channel(cfg: &SimConfig, rng: &mut RngStream) -> ChannelRealization {
    let h_sr = rng.complex_gaussian(1.0);
    let h_rd = rng.complex_gaussian(1.0);
    let h_li = rng.complex_gaussian(1.0);
    let h_sd = rng.complex_gaussian(1.0);
    let sigma2_h = cfg.rho_db.error_variance();
    let delta_h = rng.complex_gaussian(1.0) * sigma2_h.sqrt();
    ChannelRealization {
        h_sr,
        h_rd,
        h_li,
        h_sd,
        sigma2_r: cfg.sigma2_r(),
        sigma2_d: cfg.sigma2_d(),
        sigma2_h,
        delta_h,
    }
}

/// Direct link is the timing reference; the relay row gets a delay uniform on
/// `{0, ..., tau_max}`.
pub fn draw_delay_profile(tau_max: usize, rng: &mut RngStream) -> DelayProfile {
    let tau = rng.random_range(0..=tau_max);
    DelayProfile::new(vec![0, tau], tau_max).expect("drawn delay within bound")
}
