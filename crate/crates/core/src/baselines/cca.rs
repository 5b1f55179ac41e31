//! Canonical correlation analysis frequency recognition.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::signal::Epoch;

/// Relative eigenvalue below which a centered data matrix counts as rank
/// deficient.
const RANK_TOL: f64 = 1e-12;
/// Ridge added to a rank-deficient Gram matrix, relative to its mean
/// eigenvalue.
const RIDGE: f64 = 1e-8;

/// Sine/cosine references of every stimulus frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBank {
    pub freqs: Vec<f64>,
    pub harmonics: usize,
    pub samples: usize,
    pub rate: f64,
    /// One `2 N_h x T` matrix per frequency: rows `sin(2 pi h f t)`,
    /// `cos(2 pi h f t)` for `h = 1..=N_h`.
    pub refs: Vec<Matrix>,
    /// Centered references with orthonormal rows, precomputed.
    basis: Vec<DMatrix<f64>>,
}

pub fn build_references(freqs: &[f64], harmonics: usize, samples: usize, rate: f64) -> Result<ReferenceBank> {
    if harmonics == 0 {
        return Err(Error::invalid("need at least one harmonic"));
    }
    if samples < 2 {
        return Err(Error::invalid(format!("references need T >= 2, got {samples}")));
    }
    if freqs.is_empty() {
        return Err(Error::invalid("no stimulus frequencies"));
    }
    let nyquist = rate / 2.0;
    let mut refs = Vec::with_capacity(freqs.len());
    let mut basis = Vec::with_capacity(freqs.len());
    for &f in freqs {
        if !(f > 0.0) {
            return Err(Error::invalid(format!("stimulus frequency must be > 0, got {f}")));
        }
        if harmonics as f64 * f >= nyquist {
            return Err(Error::invalid(format!(
                "harmonic {harmonics} of {f} Hz is {} Hz, at or above Nyquist ({nyquist} Hz)",
                harmonics as f64 * f
            )));
        }
        let mut rows = Vec::with_capacity(2 * harmonics);
        for h in 1..=harmonics {
            let w = 2.0 * PI * h as f64 * f / rate;
            rows.push((0..samples).map(|t| (w * t as f64).sin()).collect());
            rows.push((0..samples).map(|t| (w * t as f64).cos()).collect());
        }
        let m = Matrix::from_rows(&rows)?;
        let (b, _) = orthonormal_rows(&m)?;
        basis.push(b);
        refs.push(m);
    }
    Ok(ReferenceBank {
        freqs: freqs.to_vec(),
        harmonics,
        samples,
        rate,
        refs,
        basis,
    })
}

/// Largest canonical correlation and whether a ridge had to be added.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub rho: f64,
    pub regularized: bool,
}

/// Centers the rows of `m` and returns `W (m - mean)` with `W` the inverse
/// square root of the row Gram matrix, so the result has orthonormal rows
/// spanning the same space. Rank-deficient inputs get a small ridge.
fn orthonormal_rows(m: &Matrix) -> Result<(DMatrix<f64>, bool)> {
    let (r, t) = (m.rows(), m.cols());
    let mut centered = DMatrix::<f64>::zeros(r, t);
    for (i, row) in m.iter_rows().enumerate() {
        let mean = row.iter().sum::<f64>() / t as f64;
        for (j, &v) in row.iter().enumerate() {
            centered[(i, j)] = v - mean;
        }
    }
    let gram = &centered * centered.transpose();
    let trace = gram.trace();
    if !trace.is_finite() {
        return Err(Error::Numerical("non-finite data in canonical correlation".into()));
    }
    if trace == 0.0 {
        return Ok((DMatrix::zeros(r, t), true));
    }
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let regularized = min <= RANK_TOL * max;
    let ridge = if regularized { RIDGE * trace / r as f64 } else { 0.0 };
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / (l.max(0.0) + ridge).sqrt());
    let w = &eig.eigenvectors * DMatrix::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
    Ok((w * centered, regularized))
}

fn largest_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Largest canonical correlation between the row spaces of `x` (`C x T`) and
/// `y` (`R x T`), both centered internally, clamped to `[0, 1]`.
pub fn max_canonical_correlation(x: &Matrix, y: &Matrix) -> Result<Correlation> {
    if x.cols() != y.cols() {
        return Err(Error::invalid(format!(
            "X has {} samples, Y has {}",
            x.cols(),
            y.cols()
        )));
    }
    if x.cols() <= x.rows() + y.rows() {
        return Err(Error::invalid(format!(
            "T = {} must exceed C + R = {}",
            x.cols(),
            x.rows() + y.rows()
        )));
    }
    let (qx, rx) = orthonormal_rows(x)?;
    let (qy, ry) = orthonormal_rows(y)?;
    let rho = largest_singular_value(&(qx * qy.transpose())).clamp(0.0, 1.0);
    Ok(Correlation {
        rho,
        regularized: rx || ry,
    })
}

/// Correlation with every reference set and the winning class. Ties go to
/// the lowest class index.
pub fn cca_classify(epoch: &Epoch, bank: &ReferenceBank) -> Result<(usize, Vec<f64>)> {
    cca_classify_matrix(&epoch.data, bank)
}

pub fn cca_classify_matrix(x: &Matrix, bank: &ReferenceBank) -> Result<(usize, Vec<f64>)> {
    if x.cols() != bank.samples {
        return Err(Error::invalid(format!(
            "epoch has {} samples, references have {}",
            x.cols(),
            bank.samples
        )));
    }
    if x.cols() <= x.rows() + 2 * bank.harmonics {
        return Err(Error::invalid(format!(
            "T = {} must exceed C + 2 N_h = {}",
            x.cols(),
            x.rows() + 2 * bank.harmonics
        )));
    }
    let (qx, _) = orthonormal_rows(x)?;
    let rhos: Vec<f64> = bank
        .basis
        .iter()
        .map(|qy| largest_singular_value(&(&qx * qy.transpose())).clamp(0.0, 1.0))
        .collect();
    Ok((crate::nn::net::argmax(&rhos), rhos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut r = rng::stream(seed, "cca-noise");
        let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut r)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn reference_rows_and_limits() {
        let bank = build_references(&crate::synth::DEFAULT_FREQS, 2, 350, 100.0).unwrap();
        assert_eq!(bank.refs.len(), 3);
        for m in &bank.refs {
            assert_eq!(m.rows(), 4);
            for row in m.iter_rows() {
                let rms = (row.iter().map(|v| v * v).sum::<f64>() / 350.0).sqrt();
                // leakage over a non-integer number of periods reaches 1.6e-3
                // at 60/11 Hz
                assert!((rms - 0.5f64.sqrt()).abs() < 2e-3);
            }
        }
        assert!(build_references(&[12.0], 5, 350, 100.0).is_err());
    }

    #[test]
    fn reference_power_matches_closed_form() {
        // mean of sin^2 / cos^2 (w t) over t < N is
        // 1/2 -+ sin(N w) cos((N - 1) w) / (2 N sin w)
        let n = 350.0;
        let bank = build_references(&crate::synth::DEFAULT_FREQS, 2, 350, 100.0).unwrap();
        for (f, m) in crate::synth::DEFAULT_FREQS.iter().zip(&bank.refs) {
            for h in 1..=2 {
                let w = 2.0 * PI * h as f64 * f / 100.0;
                let dirichlet = (n * w).sin() * ((n - 1.0) * w).cos() / (2.0 * n * w.sin());
                let ms = |row: &[f64]| row.iter().map(|v| v * v).sum::<f64>() / n;
                assert!((ms(m.row(2 * (h - 1))) - (0.5 - dirichlet)).abs() < 1e-12);
                assert!((ms(m.row(2 * (h - 1) + 1)) - (0.5 + dirichlet)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn self_correlation_is_one() {
        let x = noise(5, 200, 1);
        let c = max_canonical_correlation(&x, &x).unwrap();
        assert!((c.rho - 1.0).abs() < 1e-9);
        assert!(!c.regularized);
    }

    // direct oracle: rho^2 is the largest eigenvalue of
    // Cxx^-1 Cxy Cyy^-1 Cyx; for 1-row X this is x' Py x / x'x
    fn oracle_single_row(x: &[f64], y: &Matrix) -> f64 {
        let center = |v: &[f64]| -> Vec<f64> {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|a| a - m).collect()
        };
        let xc = center(x);
        let yc: Vec<Vec<f64>> = y.iter_rows().map(center).collect();
        let r = yc.len();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let cyy = DMatrix::from_fn(r, r, |i, j| dot(&yc[i], &yc[j]));
        let cyx = DMatrix::from_fn(r, 1, |i, _| dot(&yc[i], &xc));
        let sol = cyy.cholesky().unwrap().solve(&cyx);
        ((cyx.transpose() * sol)[(0, 0)] / dot(&xc, &xc)).sqrt()
    }

    #[test]
    fn quadrature_pairs() {
        let t: Vec<f64> = (0..350).map(|i| i as f64 / 100.0).collect();
        let sin: Vec<f64> = t.iter().map(|s| (2.0 * PI * 10.0 * s).sin()).collect();
        let cos: Vec<f64> = t.iter().map(|s| (2.0 * PI * 10.0 * s).cos()).collect();
        let x = Matrix::from_rows(&[sin.clone()]).unwrap();
        let both = Matrix::from_rows(&[sin.clone(), cos.clone()]).unwrap();
        let c = max_canonical_correlation(&x, &both).unwrap();
        assert!(c.rho >= 0.999);
        assert!((c.rho - oracle_single_row(&sin, &both)).abs() < 1e-9);
        let single = Matrix::from_rows(&[cos]).unwrap();
        let c = max_canonical_correlation(&x, &single).unwrap();
        assert!(c.rho < 1e-6, "{}", c.rho);
        assert!((c.rho - oracle_single_row(&sin, &single)).abs() < 1e-9);
    }

    #[test]
    fn matches_oracle_on_random_single_rows() {
        let bank = build_references(&[7.0], 2, 120, 100.0).unwrap();
        for seed in 0..20 {
            let x = noise(1, 120, seed);
            let c = max_canonical_correlation(&x, &bank.refs[0]).unwrap();
            assert!((c.rho - oracle_single_row(x.row(0), &bank.refs[0])).abs() < 1e-9);
        }
    }

    #[test]
    fn white_noise_null_distribution() {
        let bank = build_references(&[10.0], 2, 350, 100.0).unwrap();
        let below = (0..1000)
            .filter(|&s| max_canonical_correlation(&noise(8, 350, 1000 + s), &bank.refs[0]).unwrap().rho < 0.35)
            .count();
        assert!(below >= 990, "{below}");
    }

    #[test]
    fn invariances() {
        let bank = build_references(&crate::synth::DEFAULT_FREQS, 2, 350, 100.0).unwrap();
        let x = noise(6, 350, 5);
        let (class, rhos) = cca_classify_matrix(&x, &bank).unwrap();
        let scaled = x.map(|v| 1000.0 * v);
        let (c2, r2) = cca_classify_matrix(&scaled, &bank).unwrap();
        assert_eq!(class, c2);
        for (a, b) in rhos.iter().zip(&r2) {
            assert!((a - b).abs() < 1e-9);
        }
        // per-row affine rescaling and channel permutation
        let rows: Vec<Vec<f64>> = (0..6)
            .rev()
            .map(|r| x.row(r).iter().map(|v| (r + 1) as f64 * 0.7 * v + r as f64).collect())
            .collect();
        let (c3, r3) = cca_classify_matrix(&Matrix::from_rows(&rows).unwrap(), &bank).unwrap();
        assert_eq!(class, c3);
        for (a, b) in rhos.iter().zip(&r3) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn errors_and_degenerate_input() {
        let bank = build_references(&[10.0], 2, 100, 100.0).unwrap();
        assert!(max_canonical_correlation(&noise(2, 100, 1), &noise(2, 90, 2)).is_err());
        assert!(max_canonical_correlation(&noise(8, 10, 1), &noise(4, 10, 2)).is_err());
        assert!(cca_classify_matrix(&noise(3, 99, 1), &bank).is_err());
        // duplicated channel: rank deficient, flagged, still in [0, 1]
        let x = noise(1, 100, 3);
        let dup = Matrix::from_rows(&[x.row(0).to_vec(), x.row(0).to_vec()]).unwrap();
        let c = max_canonical_correlation(&dup, &bank.refs[0]).unwrap();
        assert!(c.regularized);
        assert!((0.0..=1.0).contains(&c.rho));
        let zero = Matrix::zeros(2, 100);
        assert_eq!(max_canonical_correlation(&zero, &bank.refs[0]).unwrap().rho, 0.0);
    }
}
