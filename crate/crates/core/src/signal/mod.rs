//! Everything that happens to the raw EEG before feature extraction:
//! channel montages, containers, resampling to the working rate, the
//! high-pass FIR filter, epoch extraction and the on-disk epoch format.

mod epoch;
mod fir;
mod montage;
mod resample;
pub mod storage;

pub use epoch::{extract_epochs, ContinuousRecording, Epoch};
pub use fir::{design_highpass, filter_zero_phase, FirFilter};
pub use montage::{Condition, Montage, Region};
pub use resample::resample;

/// Working sample rate of the whole pipeline, Hz.
pub const WORKING_RATE: f64 = 100.0;

/// Stimulation window, seconds.
pub const EPOCH_SECONDS: f64 = 3.5;

/// Samples per epoch at the working rate.
pub const EPOCH_SAMPLES: usize = 350;

/// High-pass cutoff applied before any decoding, Hz.
pub const HIGHPASS_HZ: f64 = 3.0;

/// Tap count of the default high-pass at 100 Hz.
pub const HIGHPASS_TAPS: usize = 101;

/// Applies the standard preprocessing chain to one recording's channel
/// matrix: resample to [`WORKING_RATE`], then zero-phase high-pass.
pub fn preprocess_channels(
    data: &crate::matrix::Matrix,
    rate: f64,
) -> crate::error::Result<crate::matrix::Matrix> {
    let filter = design_highpass(HIGHPASS_HZ, WORKING_RATE, HIGHPASS_TAPS)?;
    let mut rows = Vec::with_capacity(data.rows());
    for row in data.iter_rows() {
        let resampled = resample(row, rate, WORKING_RATE)?;
        rows.push(filter_zero_phase(&filter, &resampled)?);
    }
    crate::matrix::Matrix::from_rows(&rows)
}
