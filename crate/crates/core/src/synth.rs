//! Synthetic ambulatory SSVEP recordings.
//!
//! Each subject gets a fixed gain topography, background noise level,
//! artifact susceptibility and per-stimulus response phase. A trial is the
//! SSVEP of the attended frequency (fundamental plus two harmonics) mapped
//! through the channel gains, independent 1/f background noise per channel,
//! and, while walking, a shared movement artifact: a step-cadence
//! oscillation plus short broadband EMG bursts. Scalp and ear epochs of a
//! trial are generated together from the same SSVEP and artifact.
//!
//! Every trial draws from its own stream keyed by
//! `(seed, subject, condition, class, trial)`, so the dataset is a pure
//! function of [`GenConfig`] regardless of generation order.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::signal::storage::{DatasetWriter, Manifest};
use crate::signal::{Condition, Epoch, Montage, Region, EPOCH_SAMPLES, WORKING_RATE};
use crate::spectral::{dft_real, inverse_real, Spectrum};

/// Default stimulation frequencies: a 60 Hz display divided by 11, 7 and 5
/// frames.
pub const DEFAULT_FREQS: [f64; 3] = [60.0 / 11.0, 60.0 / 7.0, 60.0 / 5.0];

/// Signal-to-noise presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrPreset {
    /// No background noise and no artifacts.
    Noiseless,
    /// Occipital SSVEP amplitude twice the background RMS.
    High,
    /// Tuned so that standing ear-EEG CCA lands around 50% accuracy.
    PaperLike,
    /// Half the SSVEP amplitude of `PaperLike`.
    Hard,
}

/// SSVEP amplitude (µV at gain 1) of the paper-like preset, relative to a
/// background RMS of 1 µV.
pub const PAPER_LIKE_AMPLITUDE: f64 = 0.18;

impl SnrPreset {
    /// `(ssvep amplitude, background noise RMS)` in µV.
    pub fn levels(self) -> (f64, f64) {
        match self {
            SnrPreset::Noiseless => (1.0, 0.0),
            SnrPreset::High => (2.0, 1.0),
            SnrPreset::PaperLike => (PAPER_LIKE_AMPLITUDE, 1.0),
            SnrPreset::Hard => (0.5 * PAPER_LIKE_AMPLITUDE, 1.0),
        }
    }
}

impl std::str::FromStr for SnrPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noiseless" => Ok(SnrPreset::Noiseless),
            "high" => Ok(SnrPreset::High),
            "paper-like" => Ok(SnrPreset::PaperLike),
            "hard" => Ok(SnrPreset::Hard),
            other => Err(Error::invalid(format!(
                "unknown SNR preset {other:?} (expected noiseless, high, paper-like or hard)"
            ))),
        }
    }
}

/// Movement artifact of one walking speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkParams {
    /// Step cadence, Hz.
    pub cadence_hz: f64,
    /// Cadence oscillation amplitude in units of the background noise RMS.
    pub amplitude: f64,
    /// Mean EMG bursts per second.
    pub burst_rate: f64,
}

/// Everything the artifact model needs about one recording condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionSpec {
    pub condition: Condition,
    pub cadence_hz: f64,
    /// Cadence oscillation amplitude, µV (already multiplied by the noise RMS).
    pub amplitude: f64,
    pub burst_rate: f64,
    /// Background noise RMS, µV; EMG bursts are three times this.
    pub background_rms: f64,
}

impl ConditionSpec {
    pub fn standing() -> Self {
        ConditionSpec {
            condition: Condition::Standing,
            cadence_hz: 0.0,
            amplitude: 0.0,
            burst_rate: 0.0,
            background_rms: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub n_subjects: usize,
    pub trials_per_class: usize,
    pub stimulus_freqs: Vec<f64>,
    pub samples: usize,
    pub rate: f64,
    pub preset: SnrPreset,
    pub seed: u64,
    /// Number of SSVEP harmonics (fundamental included).
    pub harmonics: usize,
    /// Amplitude ratio between consecutive harmonics.
    pub harmonic_decay: f64,
    pub walk08: WalkParams,
    pub walk16: WalkParams,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_subjects: 13,
            trials_per_class: 30,
            stimulus_freqs: DEFAULT_FREQS.to_vec(),
            samples: EPOCH_SAMPLES,
            rate: WORKING_RATE,
            preset: SnrPreset::PaperLike,
            seed: 0,
            harmonics: 3,
            harmonic_decay: 0.5,
            walk08: WalkParams {
                cadence_hz: 1.8,
                amplitude: 0.12,
                burst_rate: 0.06,
            },
            walk16: WalkParams {
                cadence_hz: 2.4,
                amplitude: 0.25,
                burst_rate: 0.15,
            },
        }
    }
}

impl GenConfig {
    pub fn with_preset(preset: SnrPreset) -> Self {
        GenConfig {
            preset,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_subjects == 0 {
            problems.push("n_subjects must be > 0".to_string());
        }
        if self.trials_per_class == 0 {
            problems.push("trials_per_class must be > 0".to_string());
        }
        if self.stimulus_freqs.len() < 2 {
            problems.push("need at least two stimulus_freqs".to_string());
        }
        if self.samples < 2 {
            problems.push("samples must be >= 2".to_string());
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            problems.push("rate must be > 0".to_string());
        }
        let nyquist = self.rate / 2.0;
        for &f in &self.stimulus_freqs {
            if !(f > 0.0 && 2.0 * f < nyquist) {
                problems.push(format!("stimulus frequency {f} Hz: need 0 < 2f < {nyquist} Hz"));
            }
        }
        if self.harmonics == 0 {
            problems.push("harmonics must be > 0".to_string());
        }
        if !(self.harmonic_decay >= 0.0 && self.harmonic_decay.is_finite()) {
            problems.push("harmonic_decay must be >= 0".to_string());
        }
        for (name, w) in [("walk08", &self.walk08), ("walk16", &self.walk16)] {
            if !(w.cadence_hz > 0.0 && w.cadence_hz < nyquist / 4.0) {
                problems.push(format!("{name}.cadence_hz must be in (0, {})", nyquist / 4.0));
            }
            if !(w.amplitude > 0.0 && w.amplitude.is_finite()) {
                problems.push(format!("{name}.amplitude must be > 0"));
            }
            if !(w.burst_rate >= 0.0 && w.burst_rate.is_finite()) {
                problems.push(format!("{name}.burst_rate must be >= 0"));
            }
        }
        if self.walk16.amplitude <= self.walk08.amplitude {
            problems.push("walk16.amplitude must exceed walk08.amplitude".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }

    pub fn class_count(&self) -> usize {
        self.stimulus_freqs.len()
    }

    pub fn condition_spec(&self, condition: Condition) -> ConditionSpec {
        let (_, noise) = self.preset.levels();
        let walk = match condition {
            Condition::Standing => return ConditionSpec::standing(),
            Condition::Walk08 => self.walk08,
            Condition::Walk16 => self.walk16,
        };
        ConditionSpec {
            condition,
            cadence_hz: walk.cadence_hz,
            amplitude: walk.amplitude * noise,
            burst_rate: walk.burst_rate,
            background_rms: noise,
        }
    }

    /// Trials per (subject, condition) pair.
    pub fn trials_per_condition(&self) -> usize {
        self.trials_per_class * self.class_count()
    }
}

/// Fixed per-subject characteristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    pub subject_id: u32,
    /// Per-channel SSVEP gains (µV) of the scalp montage.
    pub scalp_gain: Vec<f64>,
    /// Per-channel SSVEP gains (µV) of the ear montage.
    pub ear_gain: Vec<f64>,
    /// Background noise RMS, µV.
    pub noise_scale: f64,
    /// Subject-level artifact multiplier.
    pub susceptibility: f64,
    /// Per-channel artifact multipliers.
    pub scalp_susceptibility: Vec<f64>,
    pub ear_susceptibility: Vec<f64>,
    /// Response phase of each stimulus, radians.
    pub phases: Vec<f64>,
    /// Purpose string of the profile's random stream.
    pub stream_id: String,
}

fn region_gain(region: Region) -> f64 {
    match region {
        Region::Occipital => 1.0,
        Region::Parietal => 0.6,
        Region::Central => 0.3,
        Region::Frontal => 0.15,
        Region::Ear => 0.3,
    }
}

impl SubjectProfile {
    /// Draws the profile of subject `subject_id` (1-based).
    pub fn generate(cfg: &GenConfig, subject_id: u32) -> Self {
        let stream_id = format!("profile/{subject_id}");
        let mut r = rng::stream(cfg.seed, &stream_id);
        let (amplitude, noise) = cfg.preset.levels();
        // Subject-level response strength; drives the spread of accuracies
        // across subjects.
        let strength = if noise > 0.0 {
            {
            let z: f64 = StandardNormal.sample(&mut r);
            (0.3 * z).exp()
        }
        } else {
            1.0
        };
        let scalp_gain = (0..Montage::Scalp32.channel_count())
            .map(|c| amplitude * strength * region_gain(Montage::Scalp32.region(c)))
            .collect();
        let ear_gain = (0..Montage::Ear18.channel_count())
            .map(|_| amplitude * strength * region_gain(Region::Ear) * r.random_range(0.8..=1.2))
            .collect();
        let z: f64 = StandardNormal.sample(&mut r);
        let susceptibility = (0.25 * z).exp();
        let mut jitter = |n: usize| -> Vec<f64> { (0..n).map(|_| r.random_range(0.8..=1.2)).collect() };
        let scalp_susceptibility = jitter(Montage::Scalp32.channel_count());
        let ear_susceptibility = jitter(Montage::Ear18.channel_count());
        let phases = (0..cfg.class_count()).map(|_| r.random_range(0.0..2.0 * PI)).collect();
        SubjectProfile {
            subject_id,
            scalp_gain,
            ear_gain,
            noise_scale: noise,
            susceptibility,
            scalp_susceptibility,
            ear_susceptibility,
            phases,
            stream_id,
        }
    }
}

/// `gain * sum_h decay^(h-1) sin(2 pi h f t + h phase)` over `harmonics`
/// harmonics; those at or above Nyquist are dropped.
pub fn gen_ssvep_harmonics(
    f: f64,
    gain: f64,
    phase: f64,
    samples: usize,
    rate: f64,
    harmonics: usize,
    decay: f64,
) -> Result<Vec<f64>> {
    let nyquist = rate / 2.0;
    if !(f > 0.0 && f < nyquist) {
        return Err(Error::invalid(format!("frequency {f} Hz outside (0, {nyquist}) Hz")));
    }
    let mut out = vec![0.0; samples];
    if gain == 0.0 {
        return Ok(out);
    }
    let mut weight = 1.0;
    for h in 1..=harmonics {
        let hf = h as f64 * f;
        if hf >= nyquist {
            break;
        }
        for (t, v) in out.iter_mut().enumerate() {
            *v += gain * weight * (2.0 * PI * hf * t as f64 / rate + h as f64 * phase).sin();
        }
        weight *= decay;
    }
    Ok(out)
}

/// Three-harmonic SSVEP with amplitude halving per harmonic.
pub fn gen_ssvep(f: f64, gain: f64, phase: f64, samples: usize, rate: f64) -> Result<Vec<f64>> {
    gen_ssvep_harmonics(f, gain, phase, samples, rate, 3, 0.5)
}

/// Gaussian noise with a `1/f` power spectrum (DC removed), scaled to RMS
/// `scale` exactly.
pub fn gen_pink_noise(samples: usize, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    if scale == 0.0 || samples < 2 {
        return vec![0.0; samples];
    }
    let half = samples / 2;
    let mut bins = Vec::with_capacity(half + 1);
    bins.push(Complex64::new(0.0, 0.0));
    for k in 1..=half {
        let w = 1.0 / (k as f64).sqrt();
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let im = if samples % 2 == 0 && k == half { 0.0 } else { im };
        bins.push(Complex64::new(re * w, im * w));
    }
    let mut x = inverse_real(&Spectrum { bins, n: samples });
    normalize_rms(&mut x, scale);
    x
}

fn normalize_rms(x: &mut [f64], target: f64) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    if rms > 0.0 {
        let g = target / rms;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

/// Movement artifact: a step-cadence oscillation (three harmonics, random
/// phases, amplitude `spec.amplitude * susceptibility`) plus Poisson EMG
/// bursts of 50-100 ms of differenced white noise at three times the
/// background RMS (times `susceptibility`). Zero while standing.
pub fn gen_walking_artifact(
    spec: &ConditionSpec,
    susceptibility: f64,
    samples: usize,
    rate: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let mut out = vec![0.0; samples];
    if spec.condition == Condition::Standing || (spec.amplitude == 0.0 && spec.background_rms == 0.0) {
        return out;
    }
    let amp = spec.amplitude * susceptibility;
    let mut weight = 1.0;
    for h in 1..=3 {
        let phase = rng.random_range(0.0..2.0 * PI);
        let hf = h as f64 * spec.cadence_hz;
        for (t, v) in out.iter_mut().enumerate() {
            *v += amp * weight * (2.0 * PI * hf * t as f64 / rate + phase).sin();
        }
        weight *= 0.5;
    }

    let burst_rms = 3.0 * spec.background_rms * susceptibility;
    if spec.burst_rate > 0.0 && burst_rms > 0.0 {
        let gap = Exp::new(spec.burst_rate).expect("positive rate");
        let duration_s = samples as f64 / rate;
        let mut time = gap.sample(rng);
        while time < duration_s {
            let len = ((rng.random_range(0.05..=0.10) * rate).round() as usize).max(2);
            let white: Vec<f64> = (0..=len).map(|_| StandardNormal.sample(rng)).collect();
            let mut burst: Vec<f64> = white.windows(2).map(|w| w[1] - w[0]).collect();
            normalize_rms(&mut burst, burst_rms);
            let start = (time * rate) as usize;
            for (v, b) in out[start.min(samples)..].iter_mut().zip(&burst) {
                *v += b;
            }
            time += gap.sample(rng);
        }
    }
    out
}

fn trial_stream(cfg: &GenConfig, subject: u32, condition: Condition, class: usize, trial: usize) -> rng::StreamRng {
    rng::stream(
        cfg.seed,
        &format!("trial/{subject}/{}/{class}/{trial}", condition.short_name()),
    )
}

/// One simultaneous (scalp, ear) trial of class `class`.
pub fn gen_trial(
    profile: &SubjectProfile,
    spec: &ConditionSpec,
    class: usize,
    trial: usize,
    cfg: &GenConfig,
) -> Result<(Epoch, Epoch)> {
    if class >= cfg.class_count() {
        return Err(Error::invalid(format!("class {class} out of range for {} stimuli", cfg.class_count())));
    }
    let mut r = trial_stream(cfg, profile.subject_id, spec.condition, class, trial);
    let template = gen_ssvep_harmonics(
        cfg.stimulus_freqs[class],
        1.0,
        profile.phases[class],
        cfg.samples,
        cfg.rate,
        cfg.harmonics,
        cfg.harmonic_decay,
    )?;
    let artifact = gen_walking_artifact(spec, profile.susceptibility, cfg.samples, cfg.rate, &mut r);
    let mut build = |montage: Montage, gains: &[f64], susc: &[f64]| -> Result<Epoch> {
        let rows: Vec<Vec<f64>> = gains
            .iter()
            .zip(susc)
            .map(|(&g, &s)| {
                let noise = gen_pink_noise(cfg.samples, profile.noise_scale, &mut r);
                template
                    .iter()
                    .zip(&noise)
                    .zip(&artifact)
                    .map(|((&x, &n), &a)| g * x + n + s * a)
                    .collect()
            })
            .collect();
        Ok(Epoch {
            montage,
            rate: cfg.rate,
            data: Matrix::from_rows(&rows)?,
            label: class,
            condition: spec.condition,
            subject_id: profile.subject_id,
        })
    };
    let scalp = build(Montage::Scalp32, &profile.scalp_gain, &profile.scalp_susceptibility)?;
    let ear = build(Montage::Ear18, &profile.ear_gain, &profile.ear_susceptibility)?;
    Ok((scalp, ear))
}

/// Calls `sink` with every trial in the canonical order: subject, condition,
/// then trials interleaved across classes (`trial_index = i * classes + k`).
pub fn for_each_trial(
    cfg: &GenConfig,
    mut sink: impl FnMut(usize, Epoch, Epoch) -> Result<()>,
) -> Result<()> {
    cfg.validate()?;
    for subject in 1..=cfg.n_subjects as u32 {
        let profile = SubjectProfile::generate(cfg, subject);
        for condition in Condition::ALL {
            let spec = cfg.condition_spec(condition);
            for i in 0..cfg.trials_per_class {
                for class in 0..cfg.class_count() {
                    let (scalp, ear) = gen_trial(&profile, &spec, class, i, cfg)?;
                    sink(i * cfg.class_count() + class, scalp, ear)?;
                }
            }
        }
    }
    Ok(())
}

/// Writes the full dataset (both montages) to `dir`; the manifest embeds
/// `cfg` and every subject's profile stream id.
pub fn gen_dataset(cfg: &GenConfig, dir: impl AsRef<Path>) -> Result<Manifest> {
    cfg.validate()?;
    let mut writer = DatasetWriter::create(dir, &Montage::ALL, cfg.rate, cfg.samples, cfg.class_count())?;
    for_each_trial(cfg, |index, scalp, ear| writer.push(index, &[&scalp, &ear]))?;
    let streams: Vec<String> = (1..=cfg.n_subjects).map(|s| format!("profile/{s}")).collect();
    let generator = serde_json::json!({
        "config": cfg,
        "profile_streams": streams,
        "trial_stream_pattern": "trial/{subject}/{condition}/{class}/{trial}",
    });
    writer.finish(Some(generator))
}

/// Mean DFT power in the bin nearest each of `freqs`, and mean power of the
/// bins 2 to `1 + neighbours` away on either side (the adjacent bins carry
/// leakage and are skipped).
pub fn band_powers(x: &[f64], rate: f64, freqs: &[f64], neighbours: usize) -> Result<(f64, f64)> {
    let spec = dft_real(x)?;
    let res = spec.resolution_hz(rate);
    let power: Vec<f64> = spec.bins.iter().map(|b| b.norm_sqr()).collect();
    let last = power.len() as isize - 1;
    let mut role = vec![0u8; power.len()];
    for &f in freqs {
        let k = (f / res).round() as isize;
        for d in -(1 + neighbours as isize)..=(1 + neighbours as isize) {
            let j = k + d;
            if (0..=last).contains(&j) {
                let r = &mut role[j as usize];
                // 3 signal, 2 leakage, 1 noise; the strongest role wins
                *r = (*r).max(match d.abs() {
                    0 => 3,
                    1 => 2,
                    _ => 1,
                });
            }
        }
    }
    let mean_of = |want: u8| {
        let (sum, n) = power
            .iter()
            .zip(&role)
            .filter(|(_, &r)| r == want)
            .fold((0.0, 0usize), |(s, n), (p, _)| (s + p, n + 1));
        sum / n.max(1) as f64
    };
    Ok((mean_of(3), mean_of(1)))
}
