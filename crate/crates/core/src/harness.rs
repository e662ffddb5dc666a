//! Monte Carlo BER estimation, parameter sweeps and diversity-slope fitting.
//!
//! Trial `k` of a point draws its bits, channel, delay and both noise
//! sequences from streams keyed by `(seed, k)`, so every grid point of a
//! sweep sees the same random numbers and results never depend on how
//! trials are scheduled across workers.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_channel, draw_delay_profile};
use crate::coding::{
    delay_diversity_generator, scheme1_generator, scheme2_generator, DelayProfile,
    GeneratorMatrix,
};
use crate::linalg::HermitianFactor;
use crate::modulation::{count_bit_errors, qpsk_modulate};
use crate::receiver::{build_effective_system, detect, EffectiveSystem};
use crate::relay::{destination_receive, run_relay_with_noise, RelayMode};
use crate::rng::{Purpose, RngStream};
use crate::{
    ChannelRealization, Error, LoopCsi, ReceiverKind, Result, Sample, Scheme, SimConfig,
};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "FDRELAY_WORKERS";

/// Trials evaluated between two checks of the stopping rule.
pub const BATCH: u64 = 500;

pub const CSV_HEADER: &str =
    "scheme,receiver,b,snr_r_db,snr_d_db,rho_db,frames,bit_errors,ber,aborted,seed";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub bit_errors: u64,
    /// The relay diverged or could not invert its gain; no decision made.
    pub aborted: bool,
    /// Relay transmit energy per source symbol, `sum |t|^2 / l`; only the
    /// time-domain engine measures it.
    pub relay_power: Option<f64>,
}

/// Everything a trial needs before the relay runs.
struct TrialSetup {
    ch: ChannelRealization,
    delta: DelayProfile,
    generator: GeneratorMatrix,
    mode: RelayMode,
    bits: Vec<bool>,
    symbols: Vec<Sample>,
}

fn setup_trial(cfg: &SimConfig, trial: u64) -> Result<TrialSetup> {
    let ch = draw_channel(cfg, &mut RngStream::new(cfg.seed, trial, Purpose::Channel));
    let relay_delta = draw_delay_profile(cfg.tau_max, &mut RngStream::new(cfg.seed, trial, Purpose::Delay));
    let bits = RngStream::new(cfg.seed, trial, Purpose::Bits).bits(2 * cfg.frame_len);
    let symbols = qpsk_modulate(&bits)?.into_inner();
    let b = cfg.b;
    let (generator, mode) = match cfg.scheme {
        Scheme::Scheme1 => {
            let m = scheme1_generator(b)?;
            let taps = m.relay_taps().to_vec();
            (m, RelayMode::Scheme1 { taps, invert_h_sr: cfg.invert_h_sr })
        }
        Scheme::DelayDiversity => {
            let m = delay_diversity_generator(b, cfg.dd_tap)?;
            let taps = m.relay_taps().to_vec();
            (m, RelayMode::Scheme1 { taps, invert_h_sr: false })
        }
        Scheme::Scheme2 => {
            let beta = cfg.beta_policy.resolve(&ch, b)?;
            let m = scheme2_generator(ch.h_li_estimate(), beta, b)?;
            (m, RelayMode::Scheme2 { b, beta: crate::BetaPolicy::Fixed(beta) })
        }
        Scheme::DirectOnly => {
            let mut row = vec![Sample::new(0.0, 0.0); b];
            row[0] = Sample::new(1.0, 0.0);
            (GeneratorMatrix::from_rows(vec![row])?, RelayMode::Off)
        }
    };
    let delta = if cfg.scheme == Scheme::DirectOnly {
        DelayProfile::new(vec![0], cfg.tau_max)?
    } else {
        relay_delta
    };
    Ok(TrialSetup { ch, delta, generator, mode, bits, symbols })
}

fn aborts_trial(e: &Error) -> bool {
    matches!(e, Error::RelayDiverged { .. } | Error::SingularInversion(_))
}

fn decide(cfg: &SimConfig, sys: &EffectiveSystem, y: &[Sample], bits: &[bool]) -> Result<TrialOutcome> {
    let out = detect(cfg.receiver, sys, y)?;
    Ok(TrialOutcome {
        bit_errors: count_bit_errors(bits, &out.bits),
        aborted: false,
        relay_power: None,
    })
}

const ABORTED: TrialOutcome = TrialOutcome { bit_errors: 0, aborted: true, relay_power: None };

/// One frame end to end through the sample-by-sample relay engine.
pub fn run_trial(cfg: &SimConfig, trial: u64) -> Result<TrialOutcome> {
    let setup = setup_trial(cfg, trial)?;
    let n_y = cfg.observation_len();
    // the relay runs one sample past the window so that t(n_y) exists
    let amp = cfg.source_amplitude();
    let mut x = vec![Sample::new(0.0, 0.0); n_y + 1];
    for (xi, s) in x.iter_mut().zip(&setup.symbols) {
        *xi = s * amp;
    }
    let relay_noise = RngStream::new(cfg.seed, trial, Purpose::RelayNoise)
        .complex_gaussian_vec(n_y + 1, setup.ch.sigma2_r);
    let trace = match run_relay_with_noise(&x, &setup.ch, &setup.mode, &relay_noise) {
        Ok(trace) => trace,
        Err(e) if aborts_trial(&e) => return Ok(ABORTED),
        Err(e) => return Err(e),
    };
    let mut dest = RngStream::new(cfg.seed, trial, Purpose::DestinationNoise);
    let y = destination_receive(&trace, &x, &setup.ch, &setup.delta, n_y, &mut dest);
    let sys = match build_effective_system(&setup.generator, &setup.ch, &setup.delta, cfg) {
        Ok(sys) => sys,
        Err(e) if aborts_trial(&e) => return Ok(ABORTED),
        Err(e) => return Err(e),
    };
    let energy: f64 = trace.t.iter().map(|t| t.norm_sqr()).sum();
    Ok(TrialOutcome {
        relay_power: Some(energy / cfg.frame_len as f64),
        ..decide(cfg, &sys, &y, &setup.bits)?
    })
}

/// Same trial through `y = G s + n` with `n` drawn directly from `R_n`.
pub fn run_trial_matrix_model(cfg: &SimConfig, trial: u64) -> Result<TrialOutcome> {
    let setup = setup_trial(cfg, trial)?;
    let sys = match build_effective_system(&setup.generator, &setup.ch, &setup.delta, cfg) {
        Ok(sys) => sys,
        Err(e) if aborts_trial(&e) => return Ok(ABORTED),
        Err(e) => return Err(e),
    };
    let n_y = sys.observation_len();
    let w = crate::linalg::CMatrix::from_vec(
        n_y,
        1,
        RngStream::new(cfg.seed, trial, Purpose::DestinationNoise).complex_gaussian_vec(n_y, 1.0),
    );
    let noise = HermitianFactor::new(sys.r_n.clone())?.chol.l() * w;
    let y: Vec<Sample> = sys
        .apply(&setup.symbols)
        .iter()
        .zip(noise.iter())
        .map(|(a, b)| a + b)
        .collect();
    decide(cfg, &sys, &y, &setup.bits)
}

/// When a BER estimate is considered done. A point stops once it has both
/// `min_errors` bit errors and `min_frames` completed frames, or when
/// `SimConfig::frames` trials have been attempted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingRule {
    pub min_errors: u64,
    pub min_frames: u64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            min_errors: 200,
            min_frames: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MinErrors,
    MaxFrames,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::MinErrors => "min-errors",
            StopReason::MaxFrames => "max-frames",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub scheme: Scheme,
    pub receiver: ReceiverKind,
    pub b: usize,
    pub snr_r_db: f64,
    pub snr_d_db: f64,
    pub rho_db: LoopCsi,
    /// Completed (non-aborted) frames.
    pub frames: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub aborted: u64,
    pub seed: u64,
    pub stop: StopReason,
    pub bits_per_frame: u64,
    /// Sum over frames of the squared per-frame error count.
    pub sum_sq_errors: f64,
    /// Mean measured relay transmit energy per source symbol over completed
    /// frames, when the trials measured it.
    pub relay_power: Option<f64>,
}

impl BerRecord {
    /// Standard error of `ber` from the spread of per-frame error counts,
    /// which keeps errors clustered within a frame from looking independent.
    pub fn std_error(&self) -> f64 {
        if self.frames < 2 {
            return f64::INFINITY;
        }
        let n = self.frames as f64;
        let bits = self.bits_per_frame as f64;
        let mean = self.bit_errors as f64 / n;
        let var = (self.sum_sq_errors / n - mean * mean).max(0.0) * n / (n - 1.0);
        (var / n).sqrt() / bits
    }

    pub fn attempted(&self) -> u64 {
        self.frames + self.aborted
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.scheme.name(),
            self.receiver.name(),
            self.b,
            self.snr_r_db,
            self.snr_d_db,
            self.rho_db,
            self.frames,
            self.bit_errors,
            self.ber,
            self.aborted,
            self.seed
        )
    }
}

pub fn write_csv<W: Write>(out: &mut W, records: &[BerRecord]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn to_csv(records: &[BerRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("ascii csv")
}

/// Worker count from the environment, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))
}

fn estimate_in(
    cfg: &SimConfig,
    rule: &StoppingRule,
    pool: &rayon::ThreadPool,
    trial: fn(&SimConfig, u64) -> Result<TrialOutcome>,
) -> Result<BerRecord> {
    cfg.validate()?;
    let max_frames = cfg.frames;
    let (mut frames, mut errors, mut aborted, mut sum_sq) = (0u64, 0u64, 0u64, 0.0f64);
    let (mut power_sum, mut power_n) = (0.0f64, 0u64);
    let mut attempted = 0u64;
    let stop = loop {
        if errors >= rule.min_errors && frames >= rule.min_frames {
            break StopReason::MinErrors;
        }
        if attempted >= max_frames {
            break StopReason::MaxFrames;
        }
        let end = (attempted + BATCH).min(max_frames);
        let outcomes: Vec<Result<TrialOutcome>> =
            pool.install(|| (attempted..end).into_par_iter().map(|k| trial(cfg, k)).collect());
        for o in outcomes {
            let o = o?;
            if o.aborted {
                aborted += 1;
            } else {
                frames += 1;
                errors += o.bit_errors;
                sum_sq += (o.bit_errors * o.bit_errors) as f64;
                if let Some(p) = o.relay_power {
                    power_sum += p;
                    power_n += 1;
                }
            }
        }
        attempted = end;
    };
    let bits_per_frame = cfg.bits_per_frame();
    let ber = if frames == 0 {
        0.0
    } else {
        errors as f64 / (frames * bits_per_frame) as f64
    };
    Ok(BerRecord {
        scheme: cfg.scheme,
        receiver: cfg.receiver,
        b: cfg.b,
        snr_r_db: cfg.snr_r_db,
        snr_d_db: cfg.snr_d_db,
        rho_db: cfg.rho_db,
        frames,
        bit_errors: errors,
        ber,
        aborted,
        seed: cfg.seed,
        stop,
        bits_per_frame,
        sum_sq_errors: sum_sq,
        relay_power: (power_n > 0).then(|| power_sum / power_n as f64),
    })
}

/// BER at one operating point through the time-domain engine.
pub fn estimate_ber(cfg: &SimConfig, rule: &StoppingRule, workers: usize) -> Result<BerRecord> {
    estimate_in(cfg, rule, &pool(workers)?, run_trial)
}

/// BER at one operating point through the matrix-model shortcut.
pub fn estimate_ber_matrix_model(
    cfg: &SimConfig,
    rule: &StoppingRule,
    workers: usize,
) -> Result<BerRecord> {
    estimate_in(cfg, rule, &pool(workers)?, run_trial_matrix_model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParam {
    SnrD,
    SnrR,
    Rho,
    B,
    /// `SNR_R = SNR_D` swept together.
    SnrJoint,
}

impl SweepParam {
    /// `base` with the swept parameter set to `v`. A `b = 1` Scheme 2 point
    /// is the single-tap relay code, which is delay diversity.
    pub fn apply(self, base: &SimConfig, v: f64) -> Result<SimConfig> {
        let mut cfg = base.clone();
        match self {
            SweepParam::SnrD => cfg.snr_d_db = v,
            SweepParam::SnrR => cfg.snr_r_db = v,
            SweepParam::SnrJoint => {
                cfg.snr_d_db = v;
                cfg.snr_r_db = v;
            }
            SweepParam::Rho => {
                cfg.rho_db = if v.is_infinite() && v > 0.0 {
                    LoopCsi::Perfect
                } else {
                    LoopCsi::Db(v)
                }
            }
            SweepParam::B => {
                if !(v >= 1.0 && v.fract() == 0.0) {
                    return Err(Error::Config(format!("b grid value {v} is not a positive integer")));
                }
                cfg.b = v as usize;
                if cfg.scheme == Scheme::Scheme2 && cfg.b == 1 {
                    cfg.scheme = Scheme::DelayDiversity;
                    cfg.dd_tap = 1;
                }
                if cfg.scheme == Scheme::DelayDiversity {
                    cfg.dd_tap = cfg.dd_tap.min(cfg.b);
                }
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: SimConfig,
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub stopping: StoppingRule,
    pub workers: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes selected".into()));
        }
        let up = self.values.windows(2).all(|w| w[0] < w[1]);
        let down = self.values.windows(2).all(|w| w[0] > w[1]);
        if !(up || down) {
            return Err(Error::Config("sweep grid must be strictly monotone".into()));
        }
        if self.values.iter().any(|v| v.is_nan()) {
            return Err(Error::Config("sweep grid contains NaN".into()));
        }
        Ok(())
    }
}

/// One record per (scheme, grid value), scheme-major. `progress` sees every
/// record as soon as it is done.
pub fn run_sweep_with(spec: &SweepSpec, mut progress: impl FnMut(&BerRecord)) -> Result<Vec<BerRecord>> {
    spec.validate()?;
    let pool = pool(spec.workers)?;
    let mut out = Vec::with_capacity(spec.schemes.len() * spec.values.len());
    for &scheme in &spec.schemes {
        let base = SimConfig {
            scheme,
            ..spec.base.clone()
        };
        for &v in &spec.values {
            let cfg = spec.param.apply(&base, v)?;
            let rec = estimate_in(&cfg, &spec.stopping, &pool, run_trial)?;
            progress(&rec);
            out.push(rec);
        }
    }
    Ok(out)
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<BerRecord>> {
    run_sweep_with(spec, |_| {})
}

/// Negative least-squares slope of `log10(ber)` against `snr_db / 10` over
/// the points with `lo <= snr_db <= hi` and `ber > 0`.
pub fn fit_slope(points: &[(f64, f64)], lo: f64, hi: f64) -> Result<f64> {
    let used: Vec<(f64, f64)> = points
        .iter()
        .filter(|(snr, ber)| *snr >= lo && *snr <= hi && *ber > 0.0)
        .map(|&(snr, ber)| (snr / 10.0, ber.log10()))
        .collect();
    if used.len() < 3 {
        return Err(Error::InsufficientPoints { have: used.len(), need: 3 });
    }
    let n = used.len() as f64;
    let mx = used.iter().map(|p| p.0).sum::<f64>() / n;
    let my = used.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = used.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = used.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(-sxy / sxx)
}

/// Diversity order of a joint-SNR sweep, using the destination SNR axis.
pub fn fit_diversity_order(records: &[BerRecord], lo: f64, hi: f64) -> Result<f64> {
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.snr_d_db, r.ber)).collect();
    fit_slope(&points, lo, hi)
}

/// Contents of a JSON configuration file. Every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub sim: SimConfig,
    pub stopping: StoppingRule,
    pub workers: Option<usize>,
    pub schemes: Option<Vec<Scheme>>,
    pub grid: Option<Vec<f64>>,
}

impl FileConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
