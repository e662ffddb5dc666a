//! Shared domain types.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Complex baseband sample.
pub type Sample = Complex64;

/// One frame of unit-energy constellation symbols.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymbolFrame(Vec<Sample>);

impl SymbolFrame {
    pub fn new(symbols: Vec<Sample>) -> Self {
        SymbolFrame(symbols)
    }

    pub fn into_inner(self) -> Vec<Sample> {
        self.0
    }
}

impl Deref for SymbolFrame {
    type Target = [Sample];

    fn deref(&self) -> &[Sample] {
        &self.0
    }
}

/// One quasi-static draw of the four links plus noise and loop-CSI error.
///
/// The relay's loop estimate is always derived as `h_li - delta_h`, never
/// stored separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRealization {
    pub h_sr: Sample,
    pub h_rd: Sample,
    pub h_li: Sample,
    pub h_sd: Sample,
    /// Noise variance at the relay receiver.
    pub sigma2_r: f64,
    /// Noise variance at the destination.
    pub sigma2_d: f64,
    /// Variance of the loop-CSI error.
    pub sigma2_h: f64,
    /// Realised loop-CSI error.
    pub delta_h: Sample,
}

impl ChannelRealization {
    /// Loop channel as known to the relay.
    pub fn h_li_estimate(&self) -> Sample {
        self.h_li - self.delta_h
    }

    /// Same links with a perfectly known loop channel.
    pub fn with_perfect_csi(mut self) -> Self {
        self.sigma2_h = 0.0;
        self.delta_h = Sample::new(0.0, 0.0);
        self
    }
}

/// Loop-CSI quality, `rho = 10 log10(1 / sigma_h^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoopCsi {
    Perfect,
    Db(f64),
}

impl LoopCsi {
    pub fn error_variance(self) -> f64 {
        match self {
            LoopCsi::Perfect => 0.0,
            LoopCsi::Db(rho) => db_to_linear(-rho),
        }
    }
}

impl fmt::Display for LoopCsi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoopCsi::Perfect => f.write_str("perfect"),
            LoopCsi::Db(rho) => write!(f, "{rho}"),
        }
    }
}

impl FromStr for LoopCsi {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("perfect") || s.eq_ignore_ascii_case("inf") {
            return Ok(LoopCsi::Perfect);
        }
        s.parse::<f64>()
            .map(LoopCsi::Db)
            .map_err(|_| Error::Config(format!("bad loop-CSI quality '{s}'")))
    }
}

impl Serialize for LoopCsi {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LoopCsi::Perfect => serializer.serialize_str("perfect"),
            LoopCsi::Db(rho) => serializer.serialize_f64(*rho),
        }
    }
}

impl<'de> Deserialize<'de> for LoopCsi {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(LoopCsi::Db(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// How Scheme 2 picks its amplifying factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaPolicy {
    /// Unit relay-row power.
    PowerMax,
    /// Interference-minimising factor, capped by the power constraint.
    Optimal,
    Fixed(f64),
}

impl fmt::Display for BetaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaPolicy::PowerMax => f.write_str("power-max"),
            BetaPolicy::Optimal => f.write_str("optimal"),
            BetaPolicy::Fixed(beta) => write!(f, "{beta}"),
        }
    }
}

impl FromStr for BetaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power-max" | "power" | "max" => Ok(BetaPolicy::PowerMax),
            "optimal" | "opt" => Ok(BetaPolicy::Optimal),
            _ => s
                .parse::<f64>()
                .ok()
                .filter(|b| b.is_finite() && *b >= 0.0)
                .map(BetaPolicy::Fixed)
                .ok_or_else(|| Error::Config(format!("bad amplifying factor '{s}'"))),
        }
    }
}

impl Serialize for BetaPolicy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BetaPolicy::Fixed(beta) => serializer.serialize_f64(*beta),
            other => serializer.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for BetaPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(BetaPolicy::Fixed(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Complete loop cancellation followed by convolutional re-encoding.
    Scheme1,
    /// Partial loop cancellation; the loop echoes form the code.
    Scheme2,
    /// Complete cancellation with a single-tap relay row.
    #[serde(alias = "delay-div")]
    DelayDiversity,
    /// Direct link only, at doubled transmit power.
    #[serde(alias = "direct")]
    DirectOnly,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Scheme1 => "scheme1",
            Scheme::Scheme2 => "scheme2",
            Scheme::DelayDiversity => "delay-div",
            Scheme::DirectOnly => "direct",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scheme1" | "s1" => Ok(Scheme::Scheme1),
            "scheme2" | "s2" => Ok(Scheme::Scheme2),
            "delay-div" | "delay-diversity" | "dd" => Ok(Scheme::DelayDiversity),
            "direct" | "direct-only" => Ok(Scheme::DirectOnly),
            _ => Err(Error::Config(format!("unknown scheme '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReceiverKind {
    Mmse,
    MmseDfe,
    Ml,
}

impl ReceiverKind {
    pub fn name(self) -> &'static str {
        match self {
            ReceiverKind::Mmse => "mmse",
            ReceiverKind::MmseDfe => "mmse-dfe",
            ReceiverKind::Ml => "ml",
        }
    }
}

impl fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReceiverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mmse" => Ok(ReceiverKind::Mmse),
            "mmse-dfe" | "dfe" => Ok(ReceiverKind::MmseDfe),
            "ml" => Ok(ReceiverKind::Ml),
            _ => Err(Error::Config(format!("unknown receiver '{s}'"))),
        }
    }
}

/// Parameters of one simulated operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub frame_len: usize,
    /// Number of consecutive symbols combined by the relay code.
    pub b: usize,
    pub tau_max: usize,
    pub snr_r_db: f64,
    pub snr_d_db: f64,
    pub rho_db: LoopCsi,
    pub scheme: Scheme,
    pub receiver: ReceiverKind,
    pub seed: u64,
    pub frames: u64,
    /// One-based tap index carrying the relay symbol for delay diversity.
    pub dd_tap: usize,
    /// Scale the Scheme 1 relay output by `1/h_SR`.
    pub invert_h_sr: bool,
    pub beta_policy: BetaPolicy,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            frame_len: 20,
            b: 3,
            tau_max: 3,
            snr_r_db: 30.0,
            snr_d_db: 30.0,
            rho_db: LoopCsi::Perfect,
            scheme: Scheme::Scheme1,
            receiver: ReceiverKind::MmseDfe,
            seed: 1,
            frames: 10_000,
            dd_tap: 1,
            invert_h_sr: false,
            beta_policy: BetaPolicy::Optimal,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_len == 0 {
            return Err(Error::Config("frame_len must be positive".into()));
        }
        if self.b == 0 {
            return Err(Error::Config("b must be at least 1".into()));
        }
        if self.frames == 0 {
            return Err(Error::Config("frames must be positive".into()));
        }
        if self.scheme == Scheme::Scheme2 && self.b < 2 {
            return Err(Error::Config("scheme2 needs b >= 2".into()));
        }
        if self.scheme == Scheme::DelayDiversity && !(1..=self.b).contains(&self.dd_tap) {
            return Err(Error::Config(format!(
                "delay-diversity tap {} outside 1..={}",
                self.dd_tap, self.b
            )));
        }
        for (name, v) in [("snr_r_db", self.snr_r_db), ("snr_d_db", self.snr_d_db)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        if let BetaPolicy::Fixed(beta) = self.beta_policy {
            if !(beta.is_finite() && beta >= 0.0) {
                return Err(Error::Config(format!("amplifying factor {beta} must be finite and nonnegative")));
            }
        }
        if let LoopCsi::Db(rho) = self.rho_db {
            if !rho.is_finite() {
                return Err(Error::Config("rho_db must be finite or \"perfect\"".into()));
            }
        }
        Ok(())
    }

    pub fn sigma2_r(&self) -> f64 {
        db_to_linear(-self.snr_r_db)
    }

    pub fn sigma2_d(&self) -> f64 {
        db_to_linear(-self.snr_d_db)
    }

    /// Source amplitude; the direct-only reference transmits at twice the power.
    pub fn source_amplitude(&self) -> f64 {
        match self.scheme {
            Scheme::DirectOnly => std::f64::consts::SQRT_2,
            _ => 1.0,
        }
    }

    /// Number of destination samples per frame, `l + b - 1 + tau_max`.
    pub fn observation_len(&self) -> usize {
        self.frame_len + self.b - 1 + self.tau_max
    }

    pub fn bits_per_frame(&self) -> u64 {
        2 * self.frame_len as u64
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
