//! Shrinkage linear discriminant analysis on SSVEP band magnitudes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::signal::Epoch;
use crate::spectral::dft_real;

/// Shrinkage used when the analytic estimate is undefined.
pub const FALLBACK_SHRINKAGE: f64 = 0.1;
/// Half-width of each feature band, Hz.
pub const BAND_HALF_WIDTH: f64 = 0.5;
const STD_FLOOR: f64 = 1e-12;

/// Mean DFT magnitude of every channel within `+-0.5 Hz` of each stimulus
/// frequency and of its second harmonic. Layout: channel-major, then
/// `(f_0, 2 f_0, f_1, 2 f_1, ...)`.
pub fn band_features(epoch: &Epoch, freqs: &[f64]) -> Result<Vec<f64>> {
    let res = epoch.rate / epoch.samples() as f64;
    let mut bands = Vec::with_capacity(2 * freqs.len());
    for &f in freqs {
        for centre in [f, 2.0 * f] {
            let lo = ((centre - BAND_HALF_WIDTH) / res).ceil().max(0.0) as usize;
            let hi = ((centre + BAND_HALF_WIDTH) / res).floor() as usize;
            if hi > epoch.samples() / 2 || lo > hi {
                return Err(Error::invalid(format!(
                    "band around {centre} Hz is not resolvable at {} Hz / {} samples",
                    epoch.rate,
                    epoch.samples()
                )));
            }
            bands.push((lo, hi));
        }
    }
    let mut out = Vec::with_capacity(epoch.channels() * bands.len());
    for row in epoch.data.iter_rows() {
        let mags = dft_real(row)?.magnitudes();
        for &(lo, hi) in &bands {
            out.push(mags[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub classes: usize,
    /// Per-feature z-scoring applied before the discriminants.
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    /// Class means in standardized coordinates, `classes x D`.
    pub means: Matrix,
    /// `(1 - gamma) S + gamma (tr S / D) I`, `D x D`.
    pub covariance: Matrix,
    /// `Sigma^-1 mu_c`, `classes x D`.
    pub weights: Matrix,
    /// `-mu_c' Sigma^-1 mu_c / 2 + log pi_c`.
    pub biases: Vec<f64>,
    pub priors: Vec<f64>,
    pub gamma: f64,
}

fn check_data(features: &Matrix, labels: &[usize], classes: usize) -> Result<()> {
    if features.rows() != labels.len() {
        return Err(Error::invalid(format!(
            "{} feature rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    if features.cols() == 0 {
        return Err(Error::invalid("features have no columns"));
    }
    if features.rows() < 3 * classes {
        return Err(Error::invalid(format!(
            "need at least {} samples for {classes} classes, got {}",
            3 * classes,
            features.rows()
        )));
    }
    for c in 0..classes {
        if !labels.contains(&c) {
            return Err(Error::invalid(format!("class {c} has no training samples")));
        }
    }
    if let Some(bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
    }
    if !features.is_finite() {
        return Err(Error::invalid("non-finite features"));
    }
    Ok(())
}

struct Standardized {
    z: DMatrix<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

fn standardize(features: &Matrix) -> Standardized {
    let (n, d) = (features.rows(), features.cols());
    let mut mean = vec![0.0; d];
    for row in features.iter_rows() {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for row in features.iter_rows() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|s| {
            let sd = (s / n as f64).sqrt();
            if sd < STD_FLOOR {
                1.0
            } else {
                sd
            }
        })
        .collect();
    let z = DMatrix::from_fn(n, d, |i, j| (features.get(i, j) - mean[j]) / scale[j]);
    Standardized { z, mean, scale }
}

/// Rows of `z` minus their class mean, plus the class means.
fn class_centered(z: &DMatrix<f64>, labels: &[usize], classes: usize) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let (n, d) = z.shape();
    let mut means = DMatrix::zeros(classes, d);
    let mut counts = vec![0.0; classes];
    for (i, &y) in labels.iter().enumerate() {
        counts[y] += 1.0;
        for j in 0..d {
            means[(y, j)] += z[(i, j)];
        }
    }
    for c in 0..classes {
        for j in 0..d {
            means[(c, j)] /= counts[c];
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| z[(i, j)] - means[(labels[i], j)]);
    (centered, means, counts)
}

/// Analytic Ledoit-Wolf shrinkage intensity towards `(tr S / D) I` for the
/// pooled within-class covariance of `features`; falls back to
/// [`FALLBACK_SHRINKAGE`] when the estimate is undefined.
pub fn ledoit_wolf_shrinkage(features: &Matrix, labels: &[usize], classes: usize) -> Result<f64> {
    check_data(features, labels, classes)?;
    let s = standardize(features);
    let (x, _, _) = class_centered(&s.z, labels, classes);
    Ok(ledoit_wolf_centered(&x))
}

fn ledoit_wolf_centered(x: &DMatrix<f64>) -> f64 {
    let (n, d) = x.shape();
    let nf = n as f64;
    let cov = x.transpose() * x / nf;
    let mu = cov.trace() / d as f64;
    let mut delta = cov.clone();
    for i in 0..d {
        delta[(i, i)] -= mu;
    }
    let d2 = delta.norm_squared();
    let mut b2 = 0.0;
    for row in x.row_iter() {
        let outer = row.transpose() * row;
        b2 += (outer - &cov).norm_squared();
    }
    b2 /= nf * nf;
    let gamma = b2.min(d2) / d2;
    if gamma.is_finite() && n > 1 {
        gamma.clamp(0.0, 1.0)
    } else {
        FALLBACK_SHRINKAGE
    }
}

/// Fits class means and a shrunk pooled covariance on z-scored features.
pub fn lda_fit(features: &Matrix, labels: &[usize], classes: usize, gamma: f64) -> Result<LdaModel> {
    check_data(features, labels, classes)?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!("shrinkage must be in [0, 1], got {gamma}")));
    }
    let (n, d) = (features.rows(), features.cols());
    let s = standardize(features);
    let (x, means, counts) = class_centered(&s.z, labels, classes);
    let pooled = x.transpose() * &x / n as f64;
    let target = pooled.trace() / d as f64;
    let mut sigma = pooled * (1.0 - gamma);
    for i in 0..d {
        sigma[(i, i)] += gamma * target;
    }
    let chol = sigma.clone().cholesky().ok_or_else(|| {
        Error::Numerical(format!(
            "pooled covariance is singular with shrinkage {gamma}; use a shrinkage > 0"
        ))
    })?;
    let priors: Vec<f64> = counts.iter().map(|c| c / n as f64).collect();
    let mut weights = Matrix::zeros(classes, d);
    let mut biases = Vec::with_capacity(classes);
    for c in 0..classes {
        let mu = DVector::from_fn(d, |j, _| means[(c, j)]);
        let w = chol.solve(&mu);
        weights.row_mut(c).copy_from_slice(w.as_slice());
        biases.push(-0.5 * mu.dot(&w) + priors[c].ln());
    }
    let to_matrix = |m: &DMatrix<f64>| Matrix::from_vec(m.nrows(), m.ncols(), m.transpose().as_slice().to_vec());
    Ok(LdaModel {
        classes,
        feature_mean: s.mean,
        feature_scale: s.scale,
        means: to_matrix(&means)?,
        covariance: to_matrix(&sigma)?,
        weights,
        biases,
        priors,
        gamma,
    })
}

impl LdaModel {
    pub fn dim(&self) -> usize {
        self.feature_mean.len()
    }

    /// Discriminant score of every class.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "model expects {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        let z: Vec<f64> = x
            .iter()
            .zip(self.feature_mean.iter().zip(&self.feature_scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        Ok((0..self.classes)
            .map(|c| self.weights.row(c).iter().zip(&z).map(|(w, v)| w * v).sum::<f64>() + self.biases[c])
            .collect())
    }
}

/// Highest-scoring class; ties go to the lowest index.
pub fn lda_predict(model: &LdaModel, x: &[f64]) -> Result<usize> {
    Ok(crate::nn::net::argmax(&model.scores(x)?))
}
