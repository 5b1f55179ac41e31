//! The two-stream SSVEP network: a channel-wise CNN over the band-limited
//! magnitude spectrum and a stacked LSTM over the (decimated) raw epoch,
//! fused by concatenation into a softmax classifier. Forward and backward
//! passes are written out by hand and verified by finite differences.

pub mod arch;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod lstm;
pub mod net;
pub mod tensor;
pub mod train;

pub use arch::Architecture;
pub use gradcheck::{grad_check, relative_error, GradCheckOptions, GradCheckReport, TensorCheck, GRADCHECK_EPS, GRADCHECK_TOL};
pub use loss::{softmax, softmax_cross_entropy};
pub use net::{InitScheme, NetInput, Params, TwoStreamNet};
pub use tensor::{relu, Tensor};
pub use train::{raw_input, train, Normalizer, TrainConfig, TrainOutcome};
