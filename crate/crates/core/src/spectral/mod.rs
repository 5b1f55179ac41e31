//! Frequency-domain input path: per-channel DFT and band-limited magnitude
//! features.

pub mod fft;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::signal::Epoch;

/// Default analysis band, Hz.
pub const DEFAULT_BAND: (f64, f64) = (3.0, 45.0);

/// Non-negative half of the DFT of a real sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// `X_f` for `f = 0 ..= n / 2`.
    pub bins: Vec<Complex64>,
    /// Length of the transformed sequence.
    pub n: usize,
}

impl Spectrum {
    pub fn resolution_hz(&self, rate: f64) -> f64 {
        rate / self.n as f64
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.norm()).collect()
    }
}

/// `X_f = sum_t x_t e^{-2 pi i f t / T}` for `f = 0 ..= T/2`.
pub fn dft_real(x: &[f64]) -> Result<Spectrum> {
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid(format!("DFT needs at least 2 samples, got {n}")));
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::plan(n).forward(&mut buf);
    buf.truncate(n / 2 + 1);
    // exactly real for real input
    buf[0].im = 0.0;
    if n % 2 == 0 {
        buf[n / 2].im = 0.0;
    }
    Ok(Spectrum { bins: buf, n })
}

/// Inverse of [`dft_real`]: rebuilds the real sequence from its half
/// spectrum (Hermitian symmetry implied).
pub fn inverse_real(spectrum: &Spectrum) -> Vec<f64> {
    let n = spectrum.n;
    let mut full = vec![Complex64::new(0.0, 0.0); n];
    for (k, &b) in spectrum.bins.iter().enumerate() {
        full[k] = b;
        if k > 0 && k < n - k {
            full[n - k] = b.conj();
        }
    }
    fft::plan(n).inverse(&mut full);
    full.iter().map(|v| v.re / n as f64).collect()
}

/// Band-restricted magnitude spectrum of every channel of an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFeatures {
    /// channels x bins
    pub matrix: Matrix,
    pub band_hz: (f64, f64),
    pub bin_freqs: Vec<f64>,
}

/// DFT bin indices `k` with `lo <= k * rate / n <= hi`.
pub fn band_bins(n: usize, rate: f64, band_hz: (f64, f64)) -> Result<Vec<usize>> {
    let (lo, hi) = band_hz;
    if !(lo >= 0.0 && lo < hi && hi <= rate / 2.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "band [{lo}, {hi}] Hz must satisfy 0 <= lo < hi <= {} Hz",
            rate / 2.0
        )));
    }
    let res = rate / n as f64;
    let tol = 1e-9 * res;
    Ok((0..=n / 2)
        .filter(|&k| {
            let f = k as f64 * res;
            f >= lo - tol && f <= hi + tol
        })
        .collect())
}

pub fn magnitude_features(epoch: &Epoch, band_hz: (f64, f64)) -> Result<SpectralFeatures> {
    let n = epoch.samples();
    let bins = band_bins(n, epoch.rate, band_hz)?;
    if bins.is_empty() {
        return Err(Error::invalid(format!(
            "band [{}, {}] Hz contains no DFT bins at T = {n}",
            band_hz.0, band_hz.1
        )));
    }
    let res = epoch.rate / n as f64;
    let mut matrix = Matrix::zeros(epoch.channels(), bins.len());
    for c in 0..epoch.channels() {
        let spectrum = dft_real(epoch.data.row(c))?;
        let row = matrix.row_mut(c);
        for (dst, &k) in row.iter_mut().zip(&bins) {
            *dst = spectrum.bins[k].norm();
        }
    }
    Ok(SpectralFeatures {
        matrix,
        band_hz,
        bin_freqs: bins.iter().map(|&k| k as f64 * res).collect(),
    })
}
