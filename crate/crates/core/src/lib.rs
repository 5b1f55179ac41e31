//! SSVEP decoding from scalp and ear EEG recorded while standing and walking.
//!
//! The crate is organised along the processing chain:
//!
//! * [`signal`]: montages, resampling, the 3 Hz high-pass, epoching and the
//!   on-disk epoch format;
//! * [`spectral`]: per-channel DFT and band-limited magnitude features;
//! * [`nn`]: the two-stream network (channel-wise CNN over the spectrum,
//!   stacked LSTM over the raw epoch) with hand-written backpropagation;
//! * [`baselines`]: CCA frequency recognition and shrinkage LDA;
//! * [`synth`]: the synthetic ambulatory SSVEP generator;
//! * [`eval`]: session-dependent and session-to-session protocols, paired
//!   t-tests and accuracy tables;
//! * [`cli`]: the `ssvep` command-line tool.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod model;
pub mod nn;
pub mod rng;
pub mod signal;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::Matrix;
