//! Closed-form interference and SINR expressions under loop-CSI error.
//!
//! Only first-order terms in the loop estimation error `delta_h` are kept. The
//! SINRs are per-realization functions of a [`ChannelRealization`]; ensemble
//! statements are made by averaging over channel draws.

use crate::{ChannelRealization, Error, Result, Sample};

fn require_source_gain(ch: &ChannelRealization) -> Result<f64> {
    let g = ch.h_sr.norm_sqr();
    if g > 0.0 {
        Ok(g)
    } else {
        Err(Error::InvalidInput("h_SR = 0 leaves the expressions undefined".into()))
    }
}

/// Ratio that keeps the noiseless limit explicit: `x/0 = +inf` for `x > 0`.
fn sinr(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// `sigma_h^2 (|h_SR|^2 + sigma_R^2)`, the loop-error power factor.
fn loop_error_power(ch: &ChannelRealization) -> f64 {
    ch.sigma2_h * (ch.h_sr.norm_sqr() + ch.sigma2_r)
}

/// Interference power of the Scheme 1 relay code caused by `delta_h`.
pub fn p_is1(ch: &ChannelRealization, m: &[Sample]) -> Result<f64> {
    let g = require_source_gain(ch)?;
    let self_conv = crate::coding::convolve(m, m);
    let energy: f64 = self_conv.iter().map(|v| v.norm_sqr()).sum();
    Ok(ch.sigma2_h / (g * g) * energy * (g + ch.sigma2_r))
}

/// Interference power of delay diversity (a single unit tap).
pub fn p_idd(ch: &ChannelRealization) -> Result<f64> {
    let g = require_source_gain(ch)?;
    Ok(ch.sigma2_h / g * (1.0 + ch.sigma2_r / g))
}

fn gamma_unit_row(ch: &ChannelRealization, row_power: f64, interference: f64) -> Result<f64> {
    let g = require_source_gain(ch)?;
    let rd = ch.h_rd.norm_sqr();
    let num = rd * row_power + ch.h_sd.norm_sqr();
    let den = rd * (ch.sigma2_r / g * row_power + interference) + ch.sigma2_d;
    Ok(sinr(num, den))
}

pub fn gamma_s1(ch: &ChannelRealization, m: &[Sample]) -> Result<f64> {
    let power: f64 = m.iter().map(|v| v.norm_sqr()).sum();
    gamma_unit_row(ch, power, p_is1(ch, m)?)
}

pub fn gamma_dd(ch: &ChannelRealization) -> Result<f64> {
    gamma_unit_row(ch, 1.0, p_idd(ch)?)
}

/// `a = |hbar_LI beta|`.
pub fn loop_factor(ch: &ChannelRealization, beta: f64) -> f64 {
    ch.h_li_estimate().norm() * beta
}

fn check_loop(ch: &ChannelRealization, beta: f64) -> Result<f64> {
    let a = loop_factor(ch, beta);
    if !(beta >= 0.0) || !(a < 1.0) {
        return Err(Error::BetaOutOfRange {
            beta,
            limit: 1.0 / ch.h_li_estimate().norm(),
        });
    }
    Ok(a)
}

/// Horner evaluation with an error-free transformation of every step, so
/// that the result stays accurate where the polynomial nearly vanishes.
fn compensated_horner(coeffs: &[f64], x: f64) -> f64 {
    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let z = s - a;
        (s, (a - (s - z)) + (b - z))
    }
    fn two_prod(a: f64, b: f64) -> (f64, f64) {
        let p = a * b;
        (p, a.mul_add(b, -p))
    }
    let mut s = 0.0;
    let mut c = 0.0;
    for &k in coeffs.iter().rev() {
        let (p, pe) = two_prod(s, x);
        let (t, se) = two_sum(p, k);
        s = t;
        c = c * x + (pe + se);
    }
    s + c
}

/// Numerator polynomial of the closed-form interference sum in `x = a^2`,
/// coefficients in ascending powers.
fn p_is2_numerator(b: usize) -> Vec<f64> {
    let bf = b as f64;
    let mut n = vec![0.0; 2 * b + 3];
    // indices coincide for small b, so entries accumulate
    for (power, coef) in [
        (0, 1.0),
        (1, 1.0),
        (b, -(bf * bf + 2.0 * bf)),
        (b + 1, 2.0 * bf * bf + 2.0 * bf - 3.0),
        (b + 2, 1.0 - bf * bf),
        (2 * b, -1.0),
        (2 * b + 1, 2.0),
        (2 * b + 2, -1.0),
    ] {
        n[power] += coef;
    }
    n
}

/// Scheme 2 interference power from `delta_h`, in closed form.
pub fn p_is2(ch: &ChannelRealization, beta: f64, b: usize) -> Result<f64> {
    let a = check_loop(ch, beta)?;
    let x = a * a;
    let num = compensated_horner(&p_is2_numerator(b), x);
    let d = 1.0 - x;
    Ok(loop_error_power(ch) * beta.powi(4) * num / (d * d * d))
}

/// Scheme 2 interference power summed tap by tap over the first-order
/// `delta_h` terms of the relay output.
pub fn p_is2_tap_sum(ch: &ChannelRealization, beta: f64, b: usize) -> Result<f64> {
    check_loop(ch, beta)?;
    let c = ch.h_li_estimate().norm_sqr();
    let mut sum = 0.0;
    for j in 2..=b + 1 {
        let k = (j - 1) as f64;
        sum += k * k * c.powi(j as i32 - 2) * beta.powi(2 * j as i32);
    }
    for j in b + 2..=2 * b + 1 {
        sum += c.powi(j as i32 - 2) * beta.powi(2 * j as i32);
    }
    Ok(loop_error_power(ch) * sum)
}

/// `sum_{j<b} a^(2j)`, the Scheme 2 row power over `beta^2`.
fn geometric_power(a: f64, b: usize) -> f64 {
    let x = a * a;
    (0..b).map(|j| x.powi(j as i32)).sum()
}

pub fn gamma_s2(ch: &ChannelRealization, beta: f64, b: usize) -> Result<f64> {
    let a = check_loop(ch, beta)?;
    gamma_unit_row(ch, beta * beta * geometric_power(a, b), p_is2(ch, beta, b)?)
}

/// Interference-plus-noise functional that `gamma_s2` decreases with.
pub fn phi_exact(ch: &ChannelRealization, beta: f64, b: usize) -> Result<f64> {
    let a = check_loop(ch, beta)?;
    let scale = 1.0 / (beta * beta * geometric_power(a, b));
    let noise = ch.sigma2_d / ch.h_rd.norm_sqr();
    Ok((p_is2(ch, beta, b)? + noise) * scale)
}

/// Upper bound of `phi_exact` after dropping high powers of `a`, valid for
/// `2 a^2 < 1`; `+inf` outside that range.
pub fn phi_bound(ch: &ChannelRealization, beta: f64) -> f64 {
    let c = ch.h_li_estimate().norm_sqr();
    let y = beta * beta;
    if !(2.0 * c * y < 1.0) {
        return f64::INFINITY;
    }
    let k = loop_error_power(ch);
    let d = ch.sigma2_d / ch.h_rd.norm_sqr();
    2.0 * k * y / (1.0 - 2.0 * c * y) + d * (1.0 - c * y) / y
}

/// Minimiser of [`phi_bound`].
pub fn beta_star(ch: &ChannelRealization) -> f64 {
    let k = loop_error_power(ch);
    let d = ch.sigma2_d / ch.h_rd.norm_sqr();
    let c = ch.h_li_estimate().norm_sqr();
    (1.0 / ((2.0 * k / d).sqrt() + 2.0 * c)).sqrt()
}

/// Value of [`phi_bound`] at [`beta_star`].
pub fn phi_min(ch: &ChannelRealization) -> f64 {
    let k = loop_error_power(ch);
    let d = ch.sigma2_d / ch.h_rd.norm_sqr();
    let c = ch.h_li_estimate().norm_sqr();
    2.0 * (2.0 * k * d).sqrt() + c * d
}

/// Whether the loop error dominates the destination noise strongly enough
/// for `gamma_s2 >= gamma_dd` to follow from the bound.
pub fn loop_error_dominates(ch: &ChannelRealization) -> Result<bool> {
    let lhs = 4.0 * ch.sigma2_d.sqrt() * ch.h_sr.norm_sqr() / ch.h_rd.norm();
    Ok(lhs <= p_idd(ch)?.sqrt())
}

/// All closed-form quantities for one channel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub ch: ChannelRealization,
    pub b: usize,
    pub beta: f64,
    pub a: f64,
    pub p_is1: f64,
    pub p_idd: f64,
    pub p_is2: f64,
    pub gamma_s1: f64,
    pub gamma_dd: f64,
    pub gamma_s2: f64,
    pub beta_star: f64,
    pub phi_min: f64,
    pub loop_error_dominates: bool,
}

impl SinrReport {
    /// Evaluates every expression with the Scheme 1 taps `m` and the Scheme 2
    /// factor `beta`; `None` selects the capped optimal factor.
    pub fn new(
        ch: &ChannelRealization,
        m: &[Sample],
        b: usize,
        beta: Option<f64>,
    ) -> Result<Self> {
        let beta = match beta {
            Some(beta) => beta,
            None => crate::relay::optimal_beta(ch, b)?,
        };
        Ok(SinrReport {
            ch: *ch,
            b,
            beta,
            a: loop_factor(ch, beta),
            p_is1: p_is1(ch, m)?,
            p_idd: p_idd(ch)?,
            p_is2: p_is2(ch, beta, b)?,
            gamma_s1: gamma_s1(ch, m)?,
            gamma_dd: gamma_dd(ch)?,
            gamma_s2: gamma_s2(ch, beta, b)?,
            beta_star: beta_star(ch),
            phi_min: phi_min(ch),
            loop_error_dominates: loop_error_dominates(ch)?,
        })
    }

    pub fn phi(&self, beta: f64) -> Result<f64> {
        phi_exact(&self.ch, beta, self.b)
    }

    pub fn phi_bound(&self, beta: f64) -> f64 {
        phi_bound(&self.ch, beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channel;
    use crate::rng::{Purpose, RngStream};
    use crate::{LoopCsi, SimConfig};
    use rand::RngCore;

    fn c(re: f64) -> Sample {
        Sample::new(re, 0.0)
    }

    fn unit_channel(sigma2_h: f64) -> ChannelRealization {
        ChannelRealization {
            h_sr: c(1.0),
            h_rd: c(1.0),
            h_li: c(0.5),
            h_sd: c(1.0),
            sigma2_r: 0.0,
            sigma2_d: 0.01,
            sigma2_h,
            delta_h: Sample::new(0.0, 0.0),
        }
    }

    fn draw(seed: u64, rho_db: f64) -> ChannelRealization {
        let cfg = SimConfig {
            rho_db: LoopCsi::Db(rho_db),
            snr_r_db: 20.0,
            snr_d_db: 25.0,
            ..SimConfig::default()
        };
        draw_channel(&cfg, &mut RngStream::new(seed, 0, Purpose::Channel))
    }

    #[test]
    fn p_is1_examples() {
        let s = 1.0 / 2f64.sqrt();
        assert!((p_is1(&unit_channel(0.01), &[c(s), c(s)]).unwrap() - 0.015).abs() < 1e-15);
        assert_eq!(p_is1(&unit_channel(0.0), &[c(s), c(s)]).unwrap(), 0.0);
        let mut ch = draw(1, 10.0);
        ch.sigma2_r = 0.3;
        assert!((p_is1(&ch, &[c(1.0)]).unwrap() - p_idd(&ch).unwrap()).abs() < 1e-15);
        let mut dead = ch;
        dead.h_sr = c(0.0);
        assert!(p_is1(&dead, &[c(1.0)]).is_err());
    }

    #[test]
    fn p_is1_matches_double_sum() {
        for seed in 0..200 {
            let ch = draw(seed, 12.0);
            let b = 2 + seed as usize % 4;
            let m = RngStream::new(seed, 0, Purpose::Other(1)).complex_gaussian_vec(b, 1.0);
            let mut brute = 0.0;
            for j in 2..=2 * b {
                let mut inner = c(0.0);
                for u in 1..=b {
                    for v in 1..=b {
                        if u + v == j {
                            inner += m[u - 1] * m[v - 1];
                        }
                    }
                }
                brute += inner.norm_sqr();
            }
            let g = ch.h_sr.norm_sqr();
            let expected = ch.sigma2_h / (g * g) * brute * (g + ch.sigma2_r);
            let got = p_is1(&ch, &m).unwrap();
            assert!((got - expected).abs() <= 1e-12 * expected);
        }
    }

    #[test]
    fn noiseless_limit_is_infinite() {
        let mut ch = unit_channel(0.0);
        ch.sigma2_d = 0.0;
        let m = [c(1.0 / 3f64.sqrt()); 3];
        assert_eq!(gamma_s1(&ch, &m).unwrap(), f64::INFINITY);
        assert_eq!(gamma_dd(&ch).unwrap(), f64::INFINITY);
        assert_eq!(gamma_s2(&ch, 0.5, 3).unwrap(), f64::INFINITY);
    }

    #[test]
    fn no_direct_link_leaves_unit_numerator() {
        let mut ch = draw(3, 15.0);
        ch.h_sd = c(0.0);
        let m = [c(0.6), c(0.8)];
        let g = ch.h_sr.norm_sqr();
        let rd = ch.h_rd.norm_sqr();
        let den = rd * (ch.sigma2_r / g + p_is1(&ch, &m).unwrap()) + ch.sigma2_d;
        assert!((gamma_s1(&ch, &m).unwrap() - rd / den).abs() < 1e-12 * rd / den);
    }

    #[test]
    fn gamma_s2_assembles_from_pieces() {
        for seed in 0..500 {
            let ch = draw(seed, 8.0);
            let b = 2 + seed as usize % 5;
            let beta = crate::coding::scheme2_power_beta(ch.h_li_estimate(), b);
            let a = loop_factor(&ch, beta);
            let row: f64 = (0..b).map(|j| beta * beta * a.powi(2 * j as i32)).sum();
            let signal = ch.h_rd.norm_sqr() * row + ch.h_sd.norm_sqr();
            let noise = ch.h_rd.norm_sqr()
                * (ch.sigma2_r / ch.h_sr.norm_sqr() * row + p_is2_tap_sum(&ch, beta, b).unwrap())
                + ch.sigma2_d;
            let got = gamma_s2(&ch, beta, b).unwrap();
            assert!((got - signal / noise).abs() <= 1e-12 * got);
        }
    }

    #[test]
    fn p_is2_limits() {
        assert_eq!(p_is2(&unit_channel(0.0), 0.7, 3).unwrap(), 0.0);
        let ch = unit_channel(0.1);
        assert!(p_is2(&ch, 1e-4, 3).unwrap() < 1e-16);
        assert!(matches!(
            p_is2(&ch, 2.0, 3),
            Err(Error::BetaOutOfRange { .. })
        ));
    }

    #[test]
    fn p_is2_closed_form_matches_tap_sum() {
        let mut rng = RngStream::new(4, 0, Purpose::Other(2));
        for seed in 0..10_000 {
            let mut ch = draw(seed, 10.0);
            ch.sigma2_h = 0.1;
            let b = 1 + seed as usize % 6;
            let limit = (0.999 / ch.h_li_estimate().norm()).min(1.0);
            let beta = limit * (rng.next_u64() as f64 / u64::MAX as f64).max(1e-3);
            let closed = p_is2(&ch, beta, b).unwrap();
            let taps = p_is2_tap_sum(&ch, beta, b).unwrap();
            assert!(
                (closed - taps).abs() <= 1e-12 * taps,
                "b {b} a {} closed {closed} taps {taps}",
                loop_factor(&ch, beta)
            );
        }
    }

    #[test]
    fn phi_bound_dominates_truncated_exact() {
        for seed in 0..2000 {
            let ch = draw(seed, 5.0 + (seed % 25) as f64);
            let hbar = ch.h_li_estimate().norm();
            for b in 2..=6 {
                for step in 1..=20 {
                    let a = 0.5 * step as f64 / 20.0;
                    let beta = a / hbar;
                    let exact = phi_exact(&ch, beta, b).unwrap();
                    let x = a * a;
                    let bound = phi_bound(&ch, beta);
                    assert!(bound >= (1.0 - x.powi(b as i32)) * exact * (1.0 - 1e-12));
                }
            }
        }
    }

    #[test]
    fn phi_reduces_to_noise_without_loop_error() {
        let ch = unit_channel(0.0);
        let (beta, b) = (0.8, 3);
        let a2 = (0.5 * beta) * (0.5f64 * beta);
        let expected = ch.sigma2_d * (1.0 - a2) / (beta * beta * (1.0 - a2.powi(3)));
        assert!((phi_exact(&ch, beta, b).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn beta_star_minimises_bound() {
        for seed in 0..1000 {
            let ch = draw(seed, (seed % 30) as f64);
            let star = beta_star(&ch);
            let top = 1.0 / (2f64.sqrt() * ch.h_li_estimate().norm());
            let n = 100_000;
            let (_, grid) = (1..n)
                .map(|i| top * i as f64 / n as f64)
                .map(|beta| (phi_bound(&ch, beta), beta))
                .fold((f64::INFINITY, 0.0), |acc, v| if v.0 < acc.0 { v } else { acc });
            assert!((grid - star).abs() <= 0.01 * star, "grid {grid} star {star}");
            let at_star = phi_bound(&ch, star);
            assert!((at_star - phi_min(&ch)).abs() <= 1e-9 * phi_min(&ch));
        }
    }

    #[test]
    fn sinrs_decrease_with_every_noise_source() {
        let m = [c(0.6), c(0.0), c(0.8)];
        let base = draw(6, 10.0);
        let beta = 0.5 / base.h_li_estimate().norm();
        let eval = |ch: &ChannelRealization| {
            [
                gamma_s1(ch, &m).unwrap(),
                gamma_dd(ch).unwrap(),
                gamma_s2(ch, beta, 3).unwrap(),
            ]
        };
        for field in 0..3 {
            let mut prev = eval(&base);
            for step in 1..20 {
                let mut ch = base;
                let v = 1e-3 * 1.5f64.powi(step);
                match field {
                    0 => ch.sigma2_r = v,
                    1 => ch.sigma2_d = v,
                    _ => ch.sigma2_h = v,
                }
                let now = eval(&ch);
                if step > 1 {
                    for k in 0..3 {
                        assert!(now[k] < prev[k], "field {field} step {step} sinr {k}");
                    }
                }
                prev = now;
            }
        }
    }

    #[test]
    fn compensated_horner_near_a_root() {
        // (1 - x)^3 expanded
        let coeffs = [1.0, -3.0, 3.0, -1.0];
        let x = 1.0 - 1e-4;
        let d = 1.0 - x;
        let exact = d * d * d;
        let got = compensated_horner(&coeffs, x);
        assert!((got - exact).abs() < 1e-6 * exact, "{got}");
    }

    #[test]
    fn report_collects_all_quantities() {
        let ch = draw(7, 10.0);
        let m = [c(1.0 / 3f64.sqrt()); 3];
        let r = SinrReport::new(&ch, &m, 3, None).unwrap();
        assert_eq!(r.beta, crate::relay::optimal_beta(&ch, 3).unwrap());
        assert!(r.a < 1.0);
        for v in [r.p_is1, r.p_idd, r.p_is2, r.gamma_s1, r.gamma_dd, r.gamma_s2] {
            assert!(v.is_finite() && v >= 0.0);
        }
        assert_eq!(r.phi(r.beta).unwrap(), phi_exact(&ch, r.beta, 3).unwrap());
    }
}
