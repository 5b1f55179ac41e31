//! Input preparation, standardization and mini-batch SGD.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::arch::Architecture;
use super::loss::softmax_cross_entropy;
use super::net::{InitScheme, NetInput, TwoStreamNet};
use crate::error::{Error, Result};
use crate::rng;
use crate::signal::Epoch;
use crate::spectral::{magnitude_features, DEFAULT_BAND};

/// Standard deviations below this are treated as 1 (constant features).
const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub init: InitScheme,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 32,
            init: InitScheme::FanIn,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be > 0"));
        }
        if let InitScheme::Normal { std } = self.init {
            if !(std.is_finite() && std > 0.0) {
                return Err(Error::invalid(format!("init std must be > 0, got {std}")));
            }
        }
        Ok(())
    }
}

/// Unstandardized network input for one epoch: band magnitudes (`C x B`)
/// and the epoch averaged over consecutive groups of `time_decimation`
/// samples, laid out time-major (`T x C`).
pub fn raw_input(epoch: &Epoch, arch: &Architecture) -> Result<NetInput> {
    if epoch.channels() != arch.channels {
        return Err(Error::shape(
            "input",
            format!("network expects {} channels, epoch has {}", arch.channels, epoch.channels()),
        ));
    }
    let features = magnitude_features(epoch, DEFAULT_BAND)?;
    if features.matrix.cols() != arch.bins {
        return Err(Error::shape(
            "input",
            format!("network expects {} bins, epoch yields {}", arch.bins, features.matrix.cols()),
        ));
    }
    let d = arch.time_decimation;
    if epoch.samples() != arch.seq_len * d {
        return Err(Error::shape(
            "input",
            format!("network expects {} samples, epoch has {}", arch.seq_len * d, epoch.samples()),
        ));
    }
    let c = arch.channels;
    let mut seq = vec![0.0; arch.seq_len * c];
    for (ch, row) in epoch.data.iter_rows().enumerate() {
        for (t, group) in row.chunks_exact(d).enumerate() {
            seq[t * c + ch] = group.iter().sum::<f64>() / d as f64;
        }
    }
    Ok(NetInput {
        freq: features.matrix.into_vec(),
        seq,
    })
}

/// Per-channel z-scoring of both inputs, with statistics taken from
/// training inputs only. Spectral statistics pool all bins of a channel, so
/// the shape of each channel's spectrum (and its SSVEP peaks) survives.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub freq_mean: Vec<f64>,
    pub freq_std: Vec<f64>,
    pub time_mean: Vec<f64>,
    pub time_std: Vec<f64>,
}

fn floor_std(var: f64) -> f64 {
    let s = var.max(0.0).sqrt();
    if s < STD_FLOOR {
        1.0
    } else {
        s
    }
}

/// Mean and floored population std per channel; `channel_of` maps a
/// position within an input to its channel.
fn channel_stats<'a>(
    values: impl Iterator<Item = &'a [f64]> + Clone,
    channels: usize,
    channel_of: impl Fn(usize) -> usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut sum = vec![0.0; channels];
    let mut count = vec![0usize; channels];
    for x in values.clone() {
        for (i, v) in x.iter().enumerate() {
            sum[channel_of(i)] += v;
            count[channel_of(i)] += 1;
        }
    }
    let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &n)| s / n.max(1) as f64).collect();
    let mut var = vec![0.0; channels];
    for x in values {
        for (i, v) in x.iter().enumerate() {
            let c = channel_of(i);
            var[c] += (v - mean[c]) * (v - mean[c]);
        }
    }
    let std = var.iter().zip(&count).map(|(s, &n)| floor_std(s / n.max(1) as f64)).collect();
    (mean, std)
}

impl Normalizer {
    pub fn fit(raw: &[NetInput], channels: usize) -> Result<Self> {
        let first = raw.first().ok_or_else(|| Error::invalid("cannot fit a normalizer on no inputs"))?;
        let nf = first.freq.len();
        let ns = first.seq.len();
        if channels == 0
            || nf % channels != 0
            || ns % channels != 0
            || raw.iter().any(|x| x.freq.len() != nf || x.seq.len() != ns)
        {
            return Err(Error::shape("normalizer", "inputs have inconsistent sizes"));
        }
        let bins = nf / channels;
        let (freq_mean, freq_std) = channel_stats(raw.iter().map(|x| x.freq.as_slice()), channels, |i| i / bins);
        let (time_mean, time_std) = channel_stats(raw.iter().map(|x| x.seq.as_slice()), channels, |i| i % channels);
        Ok(Normalizer {
            freq_mean,
            freq_std,
            time_mean,
            time_std,
        })
    }

    pub fn channels(&self) -> usize {
        self.time_mean.len()
    }

    pub fn apply(&self, raw: &NetInput) -> Result<NetInput> {
        let c = self.channels();
        if c == 0 || raw.freq.len() % c != 0 || raw.seq.len() % c != 0 {
            return Err(Error::shape("normalizer", "input does not match the fitted channel count"));
        }
        let bins = raw.freq.len() / c;
        let mut freq = raw.freq.clone();
        for ((row, m), s) in freq.chunks_exact_mut(bins).zip(&self.freq_mean).zip(&self.freq_std) {
            row.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        let mut seq = raw.seq.clone();
        for step in seq.chunks_exact_mut(c) {
            for ((v, m), s) in step.iter_mut().zip(&self.time_mean).zip(&self.time_std) {
                *v = (*v - m) / s;
            }
        }
        Ok(NetInput { freq, seq })
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: TwoStreamNet,
    /// Mean training loss of each epoch (length == configured epochs).
    pub loss_curve: Vec<f64>,
}

/// Mini-batch SGD on the mean softmax cross-entropy of each batch, with the
/// example order reshuffled every epoch from `cfg.seed`.
pub fn train(mut net: TwoStreamNet, data: &[(NetInput, usize)], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let classes = net.architecture().classes;
    if let Some((_, bad)) = data.iter().find(|(_, y)| *y >= classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffler = rng::stream(cfg.seed, "train-shuffle");
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut grads = net.zero_grads();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffler);
        let mut epoch_loss = 0.0;
        for (batch_index, batch) in order.chunks(cfg.batch_size).enumerate() {
            grads.fill(0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let (input, label) = &data[i];
                let cache = net.forward(input)?;
                let (loss, d_logits) = softmax_cross_entropy(&cache.logits, *label).map_err(|e| match e {
                    Error::Numerical(_) => Error::Diverged {
                        epoch,
                        batch: batch_index,
                        loss: f64::NAN,
                    },
                    other => other,
                })?;
                net.backward_into(&cache, &d_logits, &mut grads)?;
                batch_loss += loss;
            }
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_index,
                    loss: batch_loss / batch.len() as f64,
                });
            }
            net.sgd_step(&grads, cfg.learning_rate / batch.len() as f64);
            epoch_loss += batch_loss;
        }
        log::debug!("epoch {epoch}: loss {:.5}", epoch_loss / data.len() as f64);
        loss_curve.push(epoch_loss / data.len() as f64);
    }
    if !net.params().is_finite() {
        return Err(Error::Diverged {
            epoch: cfg.epochs.saturating_sub(1),
            batch: 0,
            loss: f64::NAN,
        });
    }
    Ok(TrainOutcome { net, loss_curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{Condition, Montage};
    use crate::synth::{for_each_trial, GenConfig, SnrPreset};

    /// Raw standing inputs of the given subjects, 3 classes interleaved.
    fn standing_inputs(
        preset: SnrPreset,
        subjects: std::ops::RangeInclusive<u32>,
        trials_per_class: usize,
        montage: Montage,
    ) -> (Vec<NetInput>, Vec<usize>, Architecture) {
        let cfg = GenConfig {
            n_subjects: *subjects.end() as usize,
            trials_per_class,
            ..GenConfig::with_preset(preset)
        };
        let arch = Architecture::standard(montage.channel_count());
        let (mut raw, mut labels) = (Vec::new(), Vec::new());
        for_each_trial(&cfg, |_, scalp, ear| {
            let e = if montage == Montage::Scalp32 { scalp } else { ear };
            if subjects.contains(&e.subject_id) && e.condition == Condition::Standing {
                labels.push(e.label);
                raw.push(raw_input(&crate::eval::highpass_epoch(e)?, &arch)?);
            }
            Ok(())
        })
        .unwrap();
        (raw, labels, arch)
    }

    fn fit(raw: &[NetInput], labels: &[usize], arch: Architecture, seed: u64) -> (Normalizer, TrainOutcome) {
        let norm = Normalizer::fit(raw, arch.channels).unwrap();
        let data: Vec<(NetInput, usize)> = raw.iter().zip(labels).map(|(x, &y)| (norm.apply(x).unwrap(), y)).collect();
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let net = TwoStreamNet::init(arch, cfg.init, &mut rng::stream(seed, "init")).unwrap();
        (norm, train(net, &data, &cfg).unwrap())
    }

    fn accuracy(net: &TwoStreamNet, norm: &Normalizer, raw: &[NetInput], labels: &[usize]) -> f64 {
        let correct = raw
            .iter()
            .zip(labels)
            .filter(|(x, &y)| net.predict(&norm.apply(x).unwrap()).unwrap().0 == y)
            .count();
        correct as f64 / labels.len() as f64
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let arch = Architecture::tiny();
        let net = TwoStreamNet::init(arch, InitScheme::FanIn, &mut rng::stream(1, "init")).unwrap();
        let data = vec![(NetInput::zeros(&arch), 1)];
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train(net.clone(), &data, &cfg).unwrap();
        assert!(out.loss_curve.is_empty());
        assert_eq!(out.net.params(), net.params());
    }

    #[test]
    fn rejects_empty_data_and_bad_labels() {
        let arch = Architecture::tiny();
        let net = TwoStreamNet::zeros(arch).unwrap();
        assert!(train(net.clone(), &[], &TrainConfig::default()).is_err());
        assert!(train(net.clone(), &[(NetInput::zeros(&arch), 3)], &TrainConfig::default()).is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(train(net, &[(NetInput::zeros(&arch), 0)], &bad).is_err());
    }

    #[test]
    fn training_is_bit_deterministic() {
        let arch = Architecture::tiny();
        let mut r = rng::stream(3, "data");
        let data: Vec<(NetInput, usize)> = (0..20)
            .map(|i| {
                let mut x = NetInput::zeros(&arch);
                x.freq.iter_mut().chain(x.seq.iter_mut()).for_each(|v| *v = rand::Rng::random_range(&mut r, -1.0..1.0));
                (x, i % 3)
            })
            .collect();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let run = || {
            let net = TwoStreamNet::init(arch, cfg.init, &mut rng::stream(4, "init")).unwrap();
            train(net, &data, &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.loss_curve.len(), 5);
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.net.params(), b.net.params());
        assert!(a.net.params().is_finite());
    }

    #[test]
    fn separable_trials_are_learned() {
        let (raw, labels, arch) = standing_inputs(SnrPreset::High, 1..=1, 20, Montage::Ear18);
        assert_eq!(raw.len(), 60);
        let (norm, out) = fit(&raw, &labels, arch, 7);
        assert_eq!(out.loss_curve.len(), 50);
        assert!(out.loss_curve[49] < out.loss_curve[0]);
        assert_eq!(accuracy(&out.net, &norm, &raw, &labels), 1.0);
    }

    #[test]
    fn shuffled_labels_do_not_generalize() {
        use rand::seq::SliceRandom;
        let (raw, mut labels, arch) = standing_inputs(SnrPreset::High, 1..=1, 30, Montage::Ear18);
        labels.shuffle(&mut rng::stream(1, "shuffle"));
        let (norm, out) = fit(&raw, &labels, arch, 8);
        let train_acc = accuracy(&out.net, &norm, &raw, &labels);
        // The network has enough capacity to memorize noise labels, so only
        // the held-out accuracy is bounded.
        assert!((0.0..=1.0).contains(&train_acc));

        let (fresh, mut fresh_labels, _) = standing_inputs(SnrPreset::High, 2..=2, 30, Montage::Ear18);
        fresh_labels.shuffle(&mut rng::stream(2, "shuffle"));
        let test_acc = accuracy(&out.net, &norm, &fresh, &fresh_labels);
        assert!((0.20..=0.47).contains(&test_acc), "test accuracy {test_acc}");
    }
}
