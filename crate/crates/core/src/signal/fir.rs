use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Linear-phase FIR filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
    cutoff_hz: f64,
    rate: f64,
}

impl FirFilter {
    pub fn new(taps: Vec<f64>, cutoff_hz: f64, rate: f64) -> Result<Self> {
        let n = taps.len();
        if n < 3 || n % 2 == 0 {
            return Err(Error::invalid(format!("FIR tap count must be odd and >= 3, got {n}")));
        }
        let asymmetric = (0..n / 2).any(|i| (taps[i] - taps[n - 1 - i]).abs() > 1e-12);
        if asymmetric {
            return Err(Error::invalid("FIR taps are not symmetric (linear phase required)"));
        }
        Ok(FirFilter {
            taps,
            cutoff_hz,
            rate,
        })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn cutoff_hz(&self) -> f64 {
        self.cutoff_hz
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// |H(f)| of a single pass.
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / self.rate;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (k, &h)| {
                (re + h * (w * k as f64).cos(), im - h * (w * k as f64).sin())
            });
        re.hypot(im)
    }
}

/// Hamming-windowed sinc high-pass, built by spectral inversion of a
/// unit-DC-gain low-pass prototype.
pub fn design_highpass(cutoff_hz: f64, rate: f64, num_taps: usize) -> Result<FirFilter> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::invalid(format!("sample rate must be positive, got {rate}")));
    }
    if !(cutoff_hz > 0.0 && cutoff_hz < rate / 2.0) {
        return Err(Error::invalid(format!(
            "cutoff {cutoff_hz} Hz must lie strictly between 0 and Nyquist ({} Hz)",
            rate / 2.0
        )));
    }
    if num_taps < 3 || num_taps % 2 == 0 {
        return Err(Error::invalid(format!("tap count must be odd and >= 3, got {num_taps}")));
    }
    let m = (num_taps - 1) / 2;
    let fc = cutoff_hz / rate;
    let mut lowpass: Vec<f64> = (0..num_taps)
        .map(|i| {
            let d = i as f64 - m as f64;
            let ideal = if i == m {
                2.0 * fc
            } else {
                (2.0 * PI * fc * d).sin() / (PI * d)
            };
            let hamming = 0.54 - 0.46 * (2.0 * PI * i as f64 / (num_taps - 1) as f64).cos();
            ideal * hamming
        })
        .collect();
    let gain: f64 = lowpass.iter().sum();
    lowpass.iter_mut().for_each(|h| *h /= gain);

    // symmetrize explicitly so rounding cannot break linear phase
    let mut taps: Vec<f64> = lowpass.iter().map(|h| -h).collect();
    taps[m] += 1.0;
    for i in 0..m {
        let avg = 0.5 * (taps[i] + taps[num_taps - 1 - i]);
        taps[i] = avg;
        taps[num_taps - 1 - i] = avg;
    }
    FirFilter::new(taps, cutoff_hz, rate)
}

/// Forward-backward (zero-phase) application with mirror padding of
/// `num_taps` samples on each side. Effective magnitude response is |H|².
pub fn filter_zero_phase(filter: &FirFilter, signal: &[f64]) -> Result<Vec<f64>> {
    let n = filter.taps.len();
    if signal.len() <= 3 * n {
        return Err(Error::invalid(format!(
            "signal of {} samples is too short for zero-phase filtering with {n} taps (need > {})",
            signal.len(),
            3 * n
        )));
    }
    let pad = n;
    let len = signal.len();
    let mut padded = Vec::with_capacity(len + 2 * pad);
    padded.extend((1..=pad).rev().map(|i| signal[i]));
    padded.extend_from_slice(signal);
    padded.extend((1..=pad).map(|i| signal[len - 1 - i]));

    let mut y = convolve_causal(&filter.taps, &padded);
    y.reverse();
    let mut y = convolve_causal(&filter.taps, &y);
    y.reverse();
    Ok(y[pad..pad + len].to_vec())
}

fn convolve_causal(taps: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let kmax = taps.len().min(i + 1);
            (0..kmax).map(|k| taps[k] * x[i - k]).sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    // direct DTFT, independent of FirFilter::magnitude_at
    fn dtft_mag(taps: &[f64], f: f64, rate: f64) -> f64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, h) in taps.iter().enumerate() {
            let phi = -2.0 * PI * f * k as f64 / rate;
            re += h * phi.cos();
            im += h * phi.sin();
        }
        (re * re + im * im).sqrt()
    }

    fn tone(freq: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / 100.0).sin()).collect()
    }

    #[test]
    fn highpass_meets_band_edges() {
        let f = design_highpass(3.0, 100.0, 101).unwrap();
        assert!(dtft_mag(f.taps(), 0.0, 100.0) <= 0.01);
        let pass = dtft_mag(f.taps(), 10.0, 100.0);
        // upper bound: Hamming passband ripple is about 0.2%
        assert!((0.89..=1.0 + 2.5e-3).contains(&pass), "{pass}");
        // -40 dB at DC, within 1 dB at twice the cutoff
        assert!(20.0 * dtft_mag(f.taps(), 0.0, 100.0).max(1e-300).log10() <= -40.0);
        assert!(20.0 * dtft_mag(f.taps(), 6.0, 100.0).log10() >= -1.0);
        assert!((f.magnitude_at(10.0) - pass).abs() < 1e-12);
    }

    #[test]
    fn taps_are_symmetric() {
        let f = design_highpass(3.0, 100.0, 101).unwrap();
        let t = f.taps();
        assert_eq!(t.len(), 101);
        for k in 0..t.len() {
            assert_eq!(t[k], t[t.len() - 1 - k]);
        }
    }

    #[test]
    fn design_rejects_cutoff_at_nyquist() {
        assert!(design_highpass(50.0, 100.0, 101).is_err());
        assert!(design_highpass(0.0, 100.0, 101).is_err());
        assert!(design_highpass(3.0, 100.0, 100).is_err());
    }

    #[test]
    fn constant_input_is_removed() {
        let f = design_highpass(3.0, 100.0, 101).unwrap();
        let y = filter_zero_phase(&f, &vec![5.0; 500]).unwrap();
        assert_eq!(y.len(), 500);
        assert!(y.iter().all(|v| v.abs() < 0.05));
    }

    #[test]
    fn passband_tone_keeps_amplitude_and_phase() {
        let f = design_highpass(3.0, 100.0, 101).unwrap();
        let x = tone(10.0, 500);
        let y = filter_zero_phase(&f, &x).unwrap();
        let central = 100..400;
        let peak_in = x[central.clone()].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let peak_out = y[central.clone()].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak_out / peak_in - 1.0).abs() < 0.05);

        // zero phase: cross-correlation peaks at lag 0
        let xc = |lag: isize| -> f64 {
            central
                .clone()
                .map(|i| x[i] * y[(i as isize + lag) as usize])
                .sum()
        };
        let best = (-5..=5).max_by(|&a, &b| xc(a).total_cmp(&xc(b))).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn zero_in_zero_out() {
        let f = design_highpass(3.0, 100.0, 101).unwrap();
        assert!(filter_zero_phase(&f, &[0.0; 400]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_signal_rejected() {
        let f = design_highpass(3.0, 100.0, 101).unwrap();
        assert!(filter_zero_phase(&f, &[1.0; 303]).is_err());
        assert!(filter_zero_phase(&f, &[1.0; 304]).is_ok());
    }

    #[test]
    fn twice_filtered_tone_scales_by_fourth_power() {
        let f = design_highpass(3.0, 100.0, 101).unwrap();
        for freq in [2.5, 3.5, 4.0, 6.0, 12.0] {
            let x = tone(freq, 2000);
            let once = filter_zero_phase(&f, &x).unwrap();
            let twice = filter_zero_phase(&f, &once).unwrap();
            let gain = dtft_mag(f.taps(), freq, 100.0).powi(4);
            let err = (600..1400)
                .map(|i| (twice[i] - gain * x[i]).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-6, "{freq} Hz: {err}");
        }
    }
}
