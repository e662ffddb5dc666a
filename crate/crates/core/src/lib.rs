//! Simulation library for full-duplex asynchronous cooperative relaying.
//!
//! A source reaches a destination over a direct link and through one
//! full-duplex amplify-and-forward relay whose own transmitter leaks back into
//! its receiver over a loop channel. The relay either cancels the loop signal
//! completely and re-encodes with a distributed linear convolutional
//! space-time code (Scheme 1), or cancels it only partially so that the
//! remaining loop echoes act as the code (Scheme 2). The destination sees the
//! relay row with an unknown integer delay and detects the whole frame with a
//! block MMSE, MMSE-DFE or ML receiver.
//!
//! Module map:
//!
//! * [`types`], [`rng`], [`modulation`], [`channel`]: shared domain types,
//!   deterministic random streams, QPSK and channel draws.
//! * [`coding`]: convolution matrices, generator matrices, shift-full-rank
//!   checks and the delay-shifted effective code.
//! * [`relay`]: the sample-by-sample relay engine and destination model.
//! * [`receiver`]: effective system construction and block detectors.
//! * [`analysis`]: closed-form interference and SINR expressions under
//!   loop-CSI error, and the amplifying-factor optimisation.
//! * [`harness`]: Monte Carlo trials, sweeps, slope fitting and CSV output.
//! * [`cli`]: the `fdrelay` command line.

pub mod analysis;
pub mod channel;
pub mod cli;
pub mod coding;
mod error;
pub mod harness;
mod linalg;
pub mod modulation;
pub mod receiver;
pub mod relay;
pub mod rng;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    BetaPolicy, ChannelRealization, LoopCsi, ReceiverKind, Sample, Scheme, SimConfig, SymbolFrame,
};
