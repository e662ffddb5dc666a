//! The `fdrelay` command line.
//!
//! Settings are layered: built-in defaults, then the JSON file given with
//! `--config`, then command-line flags.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::analysis::SinrReport;
use crate::channel::draw_channel;
use crate::coding::{is_sfr, scheme1_generator, GeneratorMatrix};
use crate::harness::{
    default_workers, fit_diversity_order, run_sweep_with, BerRecord, FileConfig,
    StoppingRule, SweepParam, SweepSpec, CSV_HEADER,
};
use crate::rng::{Purpose, RngStream};
use crate::{BetaPolicy, Error, LoopCsi, ReceiverKind, Result, Sample, Scheme, SimConfig};

#[derive(Debug, Parser)]
#[command(name = "fdrelay", version, about = "Full-duplex cooperative relaying experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// BER against the destination SNR with the relay SNR fixed.
    BerVsSnrd(Common),
    /// BER against the relay SNR with the destination SNR fixed.
    BerVsSnrr(Common),
    /// BER against the loop-CSI quality.
    BerVsRho(Common),
    /// BER against the relay code length b.
    BerVsB(Common),
    /// Diversity order fitted over a joint-SNR sweep.
    Diversity(DiversityArgs),
    /// Closed-form SINRs over random channel draws.
    SinrAnalysis(SinrArgs),
    /// Shift-full-rank test of a two-row generator.
    SfrCheck(SfrArgs),
}

#[derive(Debug, Args, Clone, Default)]
struct Common {
    /// JSON configuration file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated schemes: scheme1, scheme2, delay-div, direct.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    #[arg(long)]
    receiver: Option<ReceiverKind>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    frame_len: Option<usize>,
    #[arg(long)]
    tau_max: Option<usize>,
    /// Sets both the relay and destination SNR (dB).
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    snr_r: Option<f64>,
    #[arg(long)]
    snr_d: Option<f64>,
    /// Loop-CSI quality in dB, or "perfect".
    #[arg(long)]
    rho: Option<LoopCsi>,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum attempted frames per point.
    #[arg(long)]
    frames: Option<u64>,
    #[arg(long)]
    min_errors: Option<u64>,
    #[arg(long)]
    min_frames: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Grid as "lo:step:hi" or a comma-separated list.
    #[arg(long)]
    grid: Option<String>,
    /// Scheme 2 amplifying factor: power-max, optimal or a number.
    #[arg(long)]
    beta: Option<BetaPolicy>,
    /// One-based relay tap used by delay diversity.
    #[arg(long)]
    dd_tap: Option<usize>,
    /// Scale the Scheme 1 relay output by 1/h_SR.
    #[arg(long)]
    invert_h_sr: bool,
}

#[derive(Debug, Args)]
struct DiversityArgs {
    #[command(flatten)]
    common: Common,
    /// Fit window "lo:hi" in dB.
    #[arg(long, default_value = "20:30")]
    window: String,
    /// Also write the underlying BER records here.
    #[arg(long)]
    ber_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SinrArgs {
    #[command(flatten)]
    common: Common,
    /// Number of channel draws.
    #[arg(long, default_value_t = 1000)]
    draws: u64,
}

#[derive(Debug, Args)]
struct SfrArgs {
    /// Relay-row taps, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    taps: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    tau_max: usize,
}

/// Parses "lo:step:hi" (inclusive) or "a,b,c".
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("bad grid '{text}'"));
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [lo, step, hi] => {
            let (lo, step, hi): (f64, f64, f64) = (
                lo.trim().parse().map_err(|_| bad())?,
                step.trim().parse().map_err(|_| bad())?,
                hi.trim().parse().map_err(|_| bad())?,
            );
            if !(step > 0.0) || !(hi >= lo) {
                return Err(bad());
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| lo + step * i as f64).collect())
        }
        [_] => text
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect(),
        _ => Err(bad()),
    }
}

fn parse_window(text: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("bad window '{text}', expected lo:hi"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(hi > lo) {
        return Err(bad());
    }
    Ok((lo, hi))
}

/// Fully merged settings of one run.
struct Resolved {
    sim: SimConfig,
    stopping: StoppingRule,
    workers: usize,
    schemes: Vec<Scheme>,
    grid: Vec<f64>,
}

fn resolve(c: &Common, default_schemes: &[Scheme], default_grid: &str) -> Result<Resolved> {
    let file = match &c.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut sim = file.sim;
    let mut stopping = file.stopping;
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src.clone() {
                $dst = v;
            }
        };
    }
    set!(sim.receiver, c.receiver);
    set!(sim.b, c.b);
    set!(sim.frame_len, c.frame_len);
    set!(sim.tau_max, c.tau_max);
    set!(sim.snr_r_db, c.snr);
    set!(sim.snr_d_db, c.snr);
    set!(sim.snr_r_db, c.snr_r);
    set!(sim.snr_d_db, c.snr_d);
    set!(sim.rho_db, c.rho);
    set!(sim.seed, c.seed);
    set!(sim.frames, c.frames);
    set!(sim.beta_policy, c.beta);
    set!(sim.dd_tap, c.dd_tap);
    set!(stopping.min_errors, c.min_errors);
    set!(stopping.min_frames, c.min_frames);
    if c.invert_h_sr {
        sim.invert_h_sr = true;
    }
    let workers = c.workers.or(file.workers).unwrap_or_else(default_workers);
    if workers == 0 {
        return Err(Error::Config("workers must be positive".into()));
    }
    let schemes = c
        .schemes
        .clone()
        .or(file.schemes)
        .unwrap_or_else(|| default_schemes.to_vec());
    let grid = match (&c.grid, file.grid) {
        (Some(text), _) => parse_grid(text)?,
        (None, Some(g)) => g,
        (None, None) => parse_grid(default_grid)?,
    };
    Ok(Resolved {
        sim,
        stopping,
        workers,
        schemes,
        grid,
    })
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn io_err(e: io::Error) -> Error {
    Error::Config(format!("output: {e}"))
}

fn swept_value(param: SweepParam, r: &BerRecord) -> String {
    match param {
        SweepParam::SnrD | SweepParam::SnrJoint => format!("snr_d_db={}", r.snr_d_db),
        SweepParam::SnrR => format!("snr_r_db={}", r.snr_r_db),
        SweepParam::Rho => format!("rho_db={}", r.rho_db),
        SweepParam::B => format!("b={}", r.b),
    }
}

/// Runs a sweep, streaming CSV rows to `out` and stopping metadata to stderr.
fn sweep(res: &Resolved, param: SweepParam, out: &mut dyn Write) -> Result<Vec<BerRecord>> {
    let spec = SweepSpec {
        base: res.sim.clone(),
        param,
        values: res.grid.clone(),
        schemes: res.schemes.clone(),
        stopping: res.stopping,
        workers: res.workers,
    };
    writeln!(out, "{CSV_HEADER}").map_err(io_err)?;
    let mut write_err = None;
    let records = run_sweep_with(&spec, |r| {
        eprintln!(
            "# {} {}: {} frames, {} aborted, {} bit errors, stopped by {}, relay power {}",
            r.scheme.name(),
            swept_value(param, r),
            r.frames,
            r.aborted,
            r.bit_errors,
            r.stop.name(),
            r.relay_power.map_or("n/a".to_string(), |p| format!("{p:.4}"))
        );
        if let Err(e) = writeln!(out, "{}", r.csv_row()).and_then(|_| out.flush()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(io_err(e));
    }
    Ok(records)
}

const ALL_SCHEMES: [Scheme; 4] = [
    Scheme::Scheme1,
    Scheme::Scheme2,
    Scheme::DelayDiversity,
    Scheme::DirectOnly,
];

fn ber_command(c: &Common, param: SweepParam) -> Result<()> {
    let (schemes, grid): (&[Scheme], &str) = match param {
        SweepParam::SnrD | SweepParam::SnrR => (&ALL_SCHEMES, "0:5:50"),
        SweepParam::Rho => (&ALL_SCHEMES[..3], "0:5:30"),
        SweepParam::B => (&[Scheme::Scheme2], "1:1:5"),
        SweepParam::SnrJoint => (&ALL_SCHEMES, "0:5:30"),
    };
    let res = resolve(c, schemes, grid)?;
    let mut out = open_out(&c.out)?;
    sweep(&res, param, &mut *out)?;
    Ok(())
}

fn diversity_command(a: &DiversityArgs) -> Result<()> {
    let (lo, hi) = parse_window(&a.window)?;
    let default_grid = format!("{lo}:2.5:{hi}");
    let res = resolve(
        &a.common,
        &[Scheme::Scheme1, Scheme::Scheme2, Scheme::DirectOnly],
        &default_grid,
    )?;
    let mut sink: Box<dyn Write> = match &a.ber_out {
        Some(_) => open_out(&a.ber_out)?,
        None => Box::new(io::sink()),
    };
    let records = sweep(&res, SweepParam::SnrJoint, &mut *sink)?;
    sink.flush().map_err(io_err)?;
    let mut out = open_out(&a.common.out)?;
    writeln!(out, "scheme,receiver,window_lo,window_hi,points,slope").map_err(io_err)?;
    for &scheme in &res.schemes {
        let recs: Vec<BerRecord> = records.iter().filter(|r| r.scheme == scheme).cloned().collect();
        let points = recs
            .iter()
            .filter(|r| r.snr_d_db >= lo && r.snr_d_db <= hi && r.ber > 0.0)
            .count();
        let slope = match fit_diversity_order(&recs, lo, hi) {
            Ok(s) => s.to_string(),
            Err(Error::InsufficientPoints { .. }) => {
                eprintln!("# {}: fewer than 3 nonzero BER points in window", scheme.name());
                "undefined".to_string()
            }
            Err(e) => return Err(e),
        };
        writeln!(
            out,
            "{},{},{lo},{hi},{points},{slope}",
            scheme.name(),
            res.sim.receiver.name()
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn sinr_command(a: &SinrArgs) -> Result<()> {
    let res = resolve(&a.common, &[], "0")?;
    let cfg = &res.sim;
    cfg.validate()?;
    if cfg.b < 2 {
        return Err(Error::Config("sinr-analysis needs b >= 2".into()));
    }
    let taps = scheme1_generator(cfg.b)?.relay_taps().to_vec();
    let mut out = open_out(&a.common.out)?;
    writeln!(
        out,
        "draw,p_is1,p_idd,p_is2,gamma_s1,gamma_dd,gamma_s2,beta,beta_star,phi_min,a,loop_error_dominates"
    )
    .map_err(io_err)?;
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); 11];
    for k in 0..a.draws {
        let ch = draw_channel(cfg, &mut RngStream::new(cfg.seed, k, Purpose::Channel));
        let beta = match cfg.beta_policy {
            BetaPolicy::Optimal => None,
            policy => Some(policy.resolve(&ch, cfg.b)?),
        };
        let r = SinrReport::new(&ch, &taps, cfg.b, beta)?;
        let row = [
            r.p_is1,
            r.p_idd,
            r.p_is2,
            r.gamma_s1,
            r.gamma_dd,
            r.gamma_s2,
            r.beta,
            r.beta_star,
            r.phi_min,
            r.a,
            r.loop_error_dominates as u8 as f64,
        ];
        let text: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{k},{}", text.join(",")).map_err(io_err)?;
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }
    let medians: Vec<String> = columns.iter().map(|c| median(c.clone()).to_string()).collect();
    let means: Vec<String> = columns
        .iter()
        .map(|c| (c.iter().sum::<f64>() / c.len().max(1) as f64).to_string())
        .collect();
    writeln!(out, "median,{}", medians.join(",")).map_err(io_err)?;
    writeln!(out, "mean,{}", means.join(",")).map_err(io_err)?;
    out.flush().map_err(io_err)?;
    Ok(())
}

fn sfr_command(a: &SfrArgs) -> Result<()> {
    let taps: Vec<Sample> = a.taps.iter().map(|&t| Sample::new(t, 0.0)).collect();
    let m = GeneratorMatrix::with_relay_taps(taps)?;
    let report = is_sfr(&m, a.tau_max);
    match &report.witness {
        None => println!("SFR: true"),
        Some(d) => println!("SFR: false (rank-deficient delays {:?})", d.taus()),
    }
    println!("min singular ratio: {:e}", report.min_singular_ratio);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::BerVsSnrd(c) => ber_command(c, SweepParam::SnrD),
        Command::BerVsSnrr(c) => ber_command(c, SweepParam::SnrR),
        Command::BerVsRho(c) => ber_command(c, SweepParam::Rho),
        Command::BerVsB(c) => ber_command(c, SweepParam::B),
        Command::Diversity(a) => diversity_command(a),
        Command::SinrAnalysis(a) => sinr_command(a),
        Command::SfrCheck(a) => sfr_command(a),
    }
}

/// Entry point shared by the binary and tests; returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
