use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Kernel half-width, in samples of the lower of the two rates.
const HALF_WIDTH: f64 = 32.0;
/// Anti-aliasing cutoff as a fraction of the lower Nyquist frequency.
const CUTOFF_FRACTION: f64 = 0.9;
/// Kaiser shape parameter (about 85 dB stopband).
const KAISER_BETA: f64 = 8.6;

/// Windowed-sinc sample-rate conversion.
///
/// Output sample `m` sits at time `m / to_rate`. Each output is a
/// Kaiser-windowed sinc interpolation of the input, low-passed at 90% of the
/// lower Nyquist frequency, with the kernel weights normalised to unit sum so
/// that DC passes exactly. The input is treated as one period of a periodic
/// signal at the edges.
pub fn resample(signal: &[f64], from_rate: f64, to_rate: f64) -> Result<Vec<f64>> {
    if !(from_rate > 0.0 && from_rate.is_finite() && to_rate > 0.0 && to_rate.is_finite()) {
        return Err(Error::invalid(format!(
            "sample rates must be positive and finite (from {from_rate}, to {to_rate})"
        )));
    }
    if signal.len() < 2 {
        return Err(Error::invalid(format!(
            "cannot resample a signal of {} samples",
            signal.len()
        )));
    }
    if from_rate == to_rate {
        return Ok(signal.to_vec());
    }

    let n = signal.len() as i64;
    let ratio = to_rate / from_rate;
    let out_len = (signal.len() as f64 * ratio).round() as usize;
    let scale = ratio.min(1.0);
    // cycles per input sample
    let cutoff = 0.5 * scale * CUTOFF_FRACTION;
    let half = HALF_WIDTH / scale;
    let i0_beta = bessel_i0(KAISER_BETA);

    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let center = m as f64 / ratio;
        let lo = (center - half).ceil() as i64;
        let hi = (center + half).floor() as i64;
        let mut acc = 0.0;
        let mut norm = 0.0;
        for k in lo..=hi {
            let d = center - k as f64;
            let x = d / half;
            let window = bessel_i0(KAISER_BETA * (1.0 - x * x).max(0.0).sqrt()) / i0_beta;
            let w = 2.0 * cutoff * sinc(2.0 * cutoff * d) * window;
            acc += w * signal[k.rem_euclid(n) as usize];
            norm += w;
        }
        out.push(acc / norm);
    }
    Ok(out)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: f64, n: usize, phase: f64) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / rate + phase).sin())
            .collect()
    }

    #[test]
    fn bessel_reference_values() {
        // I0(0) = 1, I0(1) = 1.2660658777520082
        assert_eq!(bessel_i0(0.0), 1.0);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_2).abs() < 1e-15);
    }

    #[test]
    fn dc_is_preserved() {
        let out = resample(&vec![1.0; 500], 500.0, 100.0).unwrap();
        assert_eq!(out.len(), 100);
        assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn decimated_sine_matches_analytic_grid() {
        let x = tone(10.0, 500.0, 500, 0.0);
        let y = resample(&x, 500.0, 100.0).unwrap();
        let truth = tone(10.0, 100.0, 100, 0.0);
        let err = y[5..95]
            .iter()
            .zip(&truth[5..95])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "max error {err}");
    }

    #[test]
    fn identity_rate_is_a_copy() {
        let x: Vec<f64> = (0..350).map(|i| (i as f64 * 0.37).cos()).collect();
        assert_eq!(resample(&x, 100.0, 100.0).unwrap(), x);
    }

    #[test]
    fn output_length_rounds() {
        assert_eq!(resample(&[0.0; 333], 500.0, 100.0).unwrap().len(), 67);
        assert_eq!(resample(&[0.0; 10], 100.0, 128.0).unwrap().len(), 13);
    }

    #[test]
    fn round_trip_recovers_band_limited_signal() {
        // integer cycles in the window, all content below 0.8 * 50 Hz
        let n = 400;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / 100.0;
                (2.0 * PI * 2.0 * t).sin()
                    + 0.5 * (2.0 * PI * 13.25 * t + 0.3).cos()
                    + 0.3 * (2.0 * PI * 27.5 * t + 1.1).sin()
                    + 0.2 * (2.0 * PI * 39.75 * t).sin()
            })
            .collect();
        let up = resample(&x, 100.0, 500.0).unwrap();
        let back = resample(&up, 500.0, 100.0).unwrap();
        assert_eq!(back.len(), n);
        let rms = (x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(rms < 1e-3, "rms {rms}");
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(resample(&[1.0, 2.0], 0.0, 100.0).is_err());
        assert!(resample(&[1.0, 2.0], 100.0, -1.0).is_err());
        assert!(resample(&[], 500.0, 100.0).is_err());
    }

    #[test]
    fn deterministic() {
        let x = tone(7.0, 500.0, 777, 0.2);
        let a = resample(&x, 500.0, 100.0).unwrap();
        let b = resample(&x, 500.0, 100.0).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
