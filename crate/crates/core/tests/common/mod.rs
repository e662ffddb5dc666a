// Criterion checks shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use fdrelay::analysis::{
    beta_star, gamma_dd, gamma_s1, gamma_s2, p_idd, p_is1, p_is2, p_is2_tap_sum, phi_bound,
    phi_min,
};
use fdrelay::coding::{
    delay_diversity_generator, effective_code, is_sfr, scheme1_generator, scheme2_generator,
    scheme2_power_beta, DelayProfile, GeneratorMatrix,
};
use fdrelay::harness::{run_sweep, run_trial, to_csv, StoppingRule, SweepParam, SweepSpec};
use fdrelay::modulation::qpsk_modulate;
use fdrelay::receiver::build_effective_system;
use fdrelay::relay::{destination_receive_with_noise, optimal_beta, run_relay_with_noise, RelayMode};
use fdrelay::rng::{Purpose, RngStream};
use fdrelay::{
    BetaPolicy, ChannelRealization, ReceiverKind, Sample, Scheme, SimConfig, SymbolFrame,
};
use rand::Rng;

pub const ZERO: Sample = Sample::new(0.0, 0.0);

#[derive(Debug, Clone)]
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Check { pass, detail: detail.into() }
    }
}

pub fn stream(seed: u64, tag: u64) -> RngStream {
    RngStream::new(seed, 0, Purpose::Other(tag))
}

pub fn log_uniform(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.random_range(lo..hi))
}

/// Links CN(0,1), loop error CN(0, sigma2_h).
pub fn random_channel(rng: &mut RngStream, sigma2_r: f64, sigma2_d: f64, sigma2_h: f64) -> ChannelRealization {
    ChannelRealization {
        h_sr: rng.complex_gaussian(1.0),
        h_rd: rng.complex_gaussian(1.0),
        h_li: rng.complex_gaussian(1.0),
        h_sd: rng.complex_gaussian(1.0),
        sigma2_r,
        sigma2_d,
        sigma2_h,
        delta_h: rng.complex_gaussian(sigma2_h),
    }
}

fn max_abs_diff(a: &[Sample], b: &[Sample]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn qpsk_frame(rng: &mut RngStream, l: usize) -> Vec<Sample> {
    qpsk_modulate(&rng.bits(2 * l)).unwrap().into_inner()
}

/// Noiseless frames through the relay engine against
/// `h_SD c_0 + h_RD h_SR c_1` built from the shifted codewords, and against
/// the receiver's `G s`.
pub fn model_equivalence(frames: u64) -> Check {
    let (l, b, tau_max) = (20, 3, 3);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for scheme in [Scheme::Scheme1, Scheme::Scheme2] {
        let cfg = SimConfig { scheme, frame_len: l, b, tau_max, ..SimConfig::default() };
        for k in 0..frames {
            let mut rng = stream(k, 100 + scheme as u64);
            let ch = random_channel(&mut rng, 0.0, 0.0, 0.0);
            let s = qpsk_frame(&mut rng, l);
            let (m, mode) = match scheme {
                Scheme::Scheme1 => {
                    let m = scheme1_generator(b).unwrap();
                    let taps = m.relay_taps().to_vec();
                    (m, RelayMode::Scheme1 { taps, invert_h_sr: false })
                }
                _ => {
                    let beta = scheme2_power_beta(ch.h_li, b);
                    let m = scheme2_generator(ch.h_li, beta, b).unwrap();
                    (m, RelayMode::Scheme2 { b, beta: BetaPolicy::Fixed(beta) })
                }
            };
            for tau in 0..=tau_max {
                let delta = DelayProfile::relay(tau, tau_max).unwrap();
                let n_y = l + b - 1 + tau_max;
                let mut x = s.clone();
                x.resize(n_y + 1, ZERO);
                let trace = run_relay_with_noise(&x, &ch, &mode, &vec![ZERO; n_y + 1]).unwrap();
                let y = destination_receive_with_noise(&trace, &x, &ch, &delta, &vec![ZERO; n_y]);

                let code = effective_code(&m, &SymbolFrame::new(s.clone()), &delta).unwrap();
                let (c0, c1) = (code.row(0), code.row(1));
                let oracle: Vec<Sample> =
                    c0.iter().zip(&c1).map(|(d, r)| ch.h_sd * d + ch.h_rd * ch.h_sr * r).collect();
                worst = worst.max(max_abs_diff(&y, &oracle));

                let noisy = ChannelRealization { sigma2_r: 1e-3, sigma2_d: 1e-3, ..ch };
                let sys = build_effective_system(&m, &noisy, &delta, &cfg).unwrap();
                worst = worst.max(max_abs_diff(&sys.apply(&s), &oracle));
                count += 1;
            }
        }
    }
    Check::new(worst < 1e-10, format!("{count} frame/delay cases, max abs diff {worst:.2e} (< 1e-10)"))
}

pub fn sfr_suite(scheme2_draws: u64) -> Check {
    let tau_max = 5;
    let mut failures = Vec::new();
    for b in 2..=6 {
        let r = is_sfr(&scheme1_generator(b).unwrap(), tau_max);
        if !r.is_sfr || r.analytic != Some(true) {
            failures.push(format!("scheme1 b={b}"));
        }
    }
    let mut rng = stream(7, 200);
    let mut s2_fail = 0;
    for _ in 0..scheme2_draws {
        let h = rng.complex_gaussian(1.0);
        let b = rng.random_range(2..=5);
        let beta = rng.random_range(1e-6..0.999) / h.norm();
        let Ok(m) = scheme2_generator(h, beta, b) else {
            s2_fail += 1;
            continue;
        };
        if !is_sfr(&m, tau_max).is_sfr {
            s2_fail += 1;
        }
    }
    if s2_fail > 0 {
        failures.push(format!("{s2_fail} scheme2 draws"));
    }
    for b in 2..=6 {
        for tap in 1..=b {
            let r = is_sfr(&delay_diversity_generator(b, tap).unwrap(), tau_max);
            if r.is_sfr || r.witness.is_none() {
                failures.push(format!("delay diversity b={b} tap={tap} passed"));
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("scheme1 b=2..6 and {scheme2_draws} scheme2 draws SFR; delay diversity witnessed for b=2..6")
    } else {
        failures.join(", ")
    };
    Check::new(failures.is_empty(), detail)
}

/// Grid minimiser of the bound over a log-spaced grid below its pole.
pub fn grid_beta(ch: &ChannelRealization, points: usize) -> f64 {
    let pole = 1.0 / (2f64.sqrt() * ch.h_li_estimate().norm());
    let lo = (pole * 1e-7).ln();
    let hi = (pole * (1.0 - 1e-12)).ln();
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..points {
        let beta = (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp();
        let v = phi_bound(ch, beta);
        if v < best.0 {
            best = (v, beta);
        }
    }
    best.1
}

pub fn analysis_identities(p_draws: u64, grid_draws: u64) -> Check {
    let mut rng = stream(3, 300);
    let mut worst_p: f64 = 0.0;
    for _ in 0..p_draws {
        let s2h = log_uniform(&mut rng, -4.0, -0.5);
        let s2r = log_uniform(&mut rng, -5.0, -1.0);
        let ch = random_channel(&mut rng, s2r, 1e-3, s2h);
        let b = rng.random_range(2..=6);
        let beta = rng.random_range(0.001..0.999) / ch.h_li_estimate().norm();
        let closed = p_is2(&ch, beta, b).unwrap();
        let sum = p_is2_tap_sum(&ch, beta, b).unwrap();
        worst_p = worst_p.max(((closed - sum) / sum).abs());
    }
    let (mut worst_phi, mut worst_beta): (f64, f64) = (0.0, 0.0);
    for _ in 0..grid_draws {
        let s2h = log_uniform(&mut rng, -4.0, -0.5);
        let s2r = log_uniform(&mut rng, -5.0, -1.0);
        let s2d = log_uniform(&mut rng, -5.0, -1.0);
        let ch = random_channel(&mut rng, s2r, s2d, s2h);
        let bs = beta_star(&ch);
        worst_phi = worst_phi.max(((phi_bound(&ch, bs) - phi_min(&ch)) / phi_min(&ch)).abs());
        worst_beta = worst_beta.max(((grid_beta(&ch, 40_000) - bs) / bs).abs());
    }
    let pass = worst_p < 1e-12 && worst_phi < 1e-9 && worst_beta < 0.01;
    Check::new(
        pass,
        format!(
            "closed form vs tap sum {worst_p:.1e} (< 1e-12) over {p_draws}; Phi(beta*) vs Phi_min {worst_phi:.1e} (< 1e-9); beta* vs grid {:.3}% (< 1%) over {grid_draws}",
            100.0 * worst_beta
        ),
    )
}

fn unit_taps(rng: &mut RngStream, b: usize) -> Vec<Sample> {
    let v = rng.complex_gaussian_vec(b, 1.0);
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Violations of `P_IS1 >= P_IDD` over random unit-power rows of length `b`.
pub fn p_is1_violations(draws: u64, b: usize, seed: u64) -> u64 {
    let mut rng = stream(seed, 400 + b as u64);
    let ch = random_channel(&mut rng, 1e-2, 1e-2, 1e-2);
    let dd = p_idd(&ch).unwrap();
    (0..draws)
        .filter(|_| {
            let m = unit_taps(&mut rng, b);
            p_is1(&ch, &m).unwrap() < dd * (1.0 - 1e-12)
        })
        .count() as u64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Medians of `gamma_S2 - gamma_DD` and `gamma_DD - gamma_S1` with
/// sigma_h^2 = 0.1 and sigma_D^2 = 1e-4.
pub fn sinr_medians(draws: u64) -> (f64, f64) {
    let b = 3;
    let m = scheme1_generator(b).unwrap().relay_taps().to_vec();
    let mut rng = stream(5, 500);
    let (mut s2dd, mut dds1) = (Vec::new(), Vec::new());
    for _ in 0..draws {
        let ch = random_channel(&mut rng, 1e-4, 1e-4, 0.1);
        let beta = optimal_beta(&ch, b).unwrap();
        let dd = gamma_dd(&ch).unwrap();
        s2dd.push(gamma_s2(&ch, beta, b).unwrap() - dd);
        dds1.push(dd - gamma_s1(&ch, &m).unwrap());
    }
    (median(s2dd), median(dds1))
}

pub fn inequality_chain(tap_draws: u64, channel_draws: u64) -> Check {
    let v: Vec<u64> = (2..=4).map(|b| p_is1_violations(tap_draws, b, 1)).collect();
    let (a, c) = sinr_medians(channel_draws);
    let pass = v.iter().all(|&n| n == 0) && a >= 0.0 && c >= 0.0;
    Check::new(
        pass,
        format!(
            "P_IS1 < P_IDD violations for b=2,3,4 over {tap_draws}: {v:?}; median(g_S2-g_DD) = {a:.3e}, median(g_DD-g_S1) = {c:.3e} over {channel_draws}"
        ),
    )
}

/// Paired per-frame error differences `a - b`: mean and its standard error.
pub fn paired_difference(a: &[u64], b: &[u64]) -> (f64, f64) {
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x as f64 - y as f64).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn frame_errors(cfg: &SimConfig, trials: u64) -> Vec<u64> {
    (0..trials).map(|k| run_trial(cfg, k).unwrap().bit_errors).collect()
}

pub fn receiver_sanity(trials: u64) -> Check {
    let mut pass = true;
    let mut parts = Vec::new();
    for scheme in [Scheme::Scheme1, Scheme::Scheme2] {
        let errs = |receiver| {
            let cfg = SimConfig {
                scheme,
                receiver,
                frame_len: 4,
                snr_r_db: 15.0,
                snr_d_db: 15.0,
                ..SimConfig::default()
            };
            frame_errors(&cfg, trials)
        };
        let ml = errs(ReceiverKind::Ml);
        let dfe = errs(ReceiverKind::MmseDfe);
        let mmse = errs(ReceiverKind::Mmse);
        let (d1, s1) = paired_difference(&ml, &dfe);
        let (d2, s2) = paired_difference(&dfe, &mmse);
        pass &= d1 <= 3.0 * s1 && d2 <= 3.0 * s2;
        let total = |v: &[u64]| v.iter().sum::<u64>();
        parts.push(format!(
            "{}: errors ML {} / DFE {} / MMSE {}",
            scheme.name(),
            total(&ml),
            total(&dfe),
            total(&mmse)
        ));
    }
    Check::new(pass, format!("{} over {trials} paired l=4 frames at 15 dB", parts.join("; ")))
}

pub fn determinism(workers: usize) -> Check {
    let spec = |w| SweepSpec {
        base: SimConfig { frames: 3_000, ..SimConfig::default() },
        param: SweepParam::SnrD,
        values: vec![5.0, 10.0, 15.0],
        schemes: vec![Scheme::Scheme1, Scheme::Scheme2, Scheme::DelayDiversity, Scheme::DirectOnly],
        stopping: StoppingRule { min_errors: 300, min_frames: 100 },
        workers: w,
    };
    let one = to_csv(&run_sweep(&spec(1)).unwrap());
    let many = to_csv(&run_sweep(&spec(workers)).unwrap());
    Check::new(
        one == many,
        format!("1 vs {workers} workers: {} CSV bytes, identical = {}", one.len(), one == many),
    )
}

pub fn relay_generator(scheme: Scheme, ch: &ChannelRealization, b: usize) -> GeneratorMatrix {
    match scheme {
        Scheme::Scheme1 => scheme1_generator(b).unwrap(),
        Scheme::DelayDiversity => delay_diversity_generator(b, 1).unwrap(),
        _ => scheme2_generator(ch.h_li, scheme2_power_beta(ch.h_li, b), b).unwrap(),
    }
}
