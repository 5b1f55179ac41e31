//! Trained classifiers bundled with everything needed to apply them to a
//! preprocessed epoch, and the binary model file they share.
//!
//! File layout (all integers and floats little-endian):
//!
//! | field | type |
//! |---|---|
//! | magic `SSVEPMDL` | 8 bytes |
//! | format version | u32 |
//! | kind (1 network, 2 LDA) | u32 |
//! | montage (0 scalp32, 1 ear18) | u32 |
//! | descriptor | u64 count, then that many u64 |
//! | payload | u64 count, then that many f64 |
//!
//! Network descriptor: channels, bins, seq_len, time_decimation, hidden,
//! lstm_layers, spatial_maps, conv_maps[0], conv_maps[1], conv_kernel,
//! conv_stride, dense_units, classes. Network payload: normalizer
//! (freq_mean, freq_std, time_mean, time_std, one value per channel each),
//! then every parameter tensor in [`Params::names`] order.
//!
//! LDA descriptor: classes, feature dimension, stimulus count. LDA payload:
//! stimulus frequencies, gamma, feature_mean, feature_scale, means,
//! covariance, weights (row-major), biases, priors.
//!
//! [`Params::names`]: crate::nn::Params::names

use std::path::Path;

use crate::baselines::{band_features, lda_fit, lda_predict, ledoit_wolf_shrinkage, LdaModel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{raw_input, train, Architecture, NetInput, Normalizer, TrainConfig, TwoStreamNet};
use crate::rng;
use crate::signal::{Epoch, Montage};

pub const MAGIC: [u8; 8] = *b"SSVEPMDL";
pub const MODEL_VERSION: u32 = 1;
const KIND_NET: u32 = 1;
const KIND_LDA: u32 = 2;

fn check_epochs(epochs: &[&Epoch], classes: usize) -> Result<Montage> {
    let first = epochs.first().ok_or_else(|| Error::invalid("no training epochs"))?;
    if let Some(e) = epochs.iter().find(|e| e.montage != first.montage) {
        return Err(Error::invalid(format!(
            "training epochs mix montages ({} and {})",
            first.montage, e.montage
        )));
    }
    let mut seen = vec![false; classes];
    for e in epochs {
        if e.label >= classes {
            return Err(Error::invalid(format!("label {} out of range for {classes} classes", e.label)));
        }
        seen[e.label] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::invalid(format!("class {missing} has no training epochs")));
    }
    Ok(first.montage)
}

fn check_montage(expected: Montage, epoch: &Epoch) -> Result<()> {
    if epoch.montage != expected {
        return Err(Error::invalid(format!(
            "model was trained on {expected}, epoch is {}",
            epoch.montage
        )));
    }
    Ok(())
}

/// The two-stream network with its input standardization.
#[derive(Debug, Clone)]
pub struct ProposedModel {
    pub montage: Montage,
    pub normalizer: Normalizer,
    pub net: TwoStreamNet,
}

impl ProposedModel {
    /// Trains a fresh standard-size network on preprocessed epochs; returns
    /// the model and the per-epoch training loss. The initial weights come
    /// from the `"init"` stream of `cfg.seed`.
    pub fn fit(epochs: &[&Epoch], classes: usize, cfg: &TrainConfig) -> Result<(Self, Vec<f64>)> {
        let montage = check_epochs(epochs, classes)?;
        let arch = Architecture {
            classes,
            ..Architecture::standard(montage.channel_count())
        };
        Self::fit_with(arch, epochs, cfg)
    }

    pub fn fit_with(arch: Architecture, epochs: &[&Epoch], cfg: &TrainConfig) -> Result<(Self, Vec<f64>)> {
        let montage = check_epochs(epochs, arch.classes)?;
        let raw: Vec<NetInput> = epochs.iter().map(|e| raw_input(e, &arch)).collect::<Result<_>>()?;
        let normalizer = Normalizer::fit(&raw, arch.channels)?;
        let data: Vec<(NetInput, usize)> = raw
            .iter()
            .zip(epochs)
            .map(|(x, e)| Ok((normalizer.apply(x)?, e.label)))
            .collect::<Result<_>>()?;
        let net = TwoStreamNet::init(arch, cfg.init, &mut rng::stream(cfg.seed, "init"))?;
        let outcome = train(net, &data, cfg)?;
        let model = ProposedModel {
            montage,
            normalizer,
            net: outcome.net,
        };
        Ok((model, outcome.loss_curve))
    }

    pub fn input(&self, epoch: &Epoch) -> Result<NetInput> {
        check_montage(self.montage, epoch)?;
        self.normalizer.apply(&raw_input(epoch, self.net.architecture())?)
    }

    /// Predicted class and softmax probabilities.
    pub fn predict(&self, epoch: &Epoch) -> Result<(usize, Vec<f64>)> {
        self.net.predict(&self.input(epoch)?)
    }
}

/// Shrinkage LDA on stimulus band magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaClassifier {
    pub montage: Montage,
    pub freqs: Vec<f64>,
    pub model: LdaModel,
}

impl LdaClassifier {
    /// Fits on preprocessed epochs with Ledoit-Wolf shrinkage.
    pub fn fit(epochs: &[&Epoch], freqs: &[f64]) -> Result<Self> {
        let classes = freqs.len();
        let montage = check_epochs(epochs, classes)?;
        let rows: Vec<Vec<f64>> = epochs.iter().map(|e| band_features(e, freqs)).collect::<Result<_>>()?;
        let features = Matrix::from_rows(&rows)?;
        let labels: Vec<usize> = epochs.iter().map(|e| e.label).collect();
        let gamma = ledoit_wolf_shrinkage(&features, &labels, classes)?;
        let model = lda_fit(&features, &labels, classes, gamma)?;
        Ok(LdaClassifier {
            montage,
            freqs: freqs.to_vec(),
            model,
        })
    }

    pub fn predict(&self, epoch: &Epoch) -> Result<usize> {
        check_montage(self.montage, epoch)?;
        lda_predict(&self.model, &band_features(epoch, &self.freqs)?)
    }
}

/// Either trained model, as stored on disk.
#[derive(Debug, Clone)]
pub enum Model {
    Proposed(ProposedModel),
    Lda(LdaClassifier),
}

impl Model {
    pub fn montage(&self) -> Montage {
        match self {
            Model::Proposed(m) => m.montage,
            Model::Lda(m) => m.montage,
        }
    }

    pub fn predict(&self, epoch: &Epoch) -> Result<usize> {
        match self {
            Model::Proposed(m) => Ok(m.predict(epoch)?.0),
            Model::Lda(m) => m.predict(epoch),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (kind, descriptor, payload) = match self {
            Model::Proposed(m) => {
                let a = m.net.architecture();
                let descriptor = vec![
                    a.channels,
                    a.bins,
                    a.seq_len,
                    a.time_decimation,
                    a.hidden,
                    a.lstm_layers,
                    a.spatial_maps,
                    a.conv_maps[0],
                    a.conv_maps[1],
                    a.conv_kernel,
                    a.conv_stride,
                    a.dense_units,
                    a.classes,
                ];
                let n = &m.normalizer;
                let mut payload = Vec::new();
                for v in [&n.freq_mean, &n.freq_std, &n.time_mean, &n.time_std] {
                    payload.extend_from_slice(v);
                }
                for t in m.net.params().tensors() {
                    payload.extend_from_slice(t.data());
                }
                (KIND_NET, descriptor, payload)
            }
            Model::Lda(m) => {
                let l = &m.model;
                let descriptor = vec![l.classes, l.dim(), m.freqs.len()];
                let mut payload = m.freqs.clone();
                payload.push(l.gamma);
                for v in [
                    &l.feature_mean[..],
                    &l.feature_scale,
                    l.means.as_slice(),
                    l.covariance.as_slice(),
                    l.weights.as_slice(),
                    &l.biases,
                    &l.priors,
                ] {
                    payload.extend_from_slice(v);
                }
                (KIND_LDA, descriptor, payload)
            }
        };
        let mut out = Vec::with_capacity(32 + 8 * (descriptor.len() + payload.len()));
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&kind.to_le_bytes());
        out.extend_from_slice(&montage_tag(self.montage()).to_le_bytes());
        out.extend_from_slice(&(descriptor.len() as u64).to_le_bytes());
        for d in descriptor {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        for v in payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a model file; `path` is only used in error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(8)? != MAGIC {
            return Err(Error::format(path, "not a model file (bad magic)"));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::format(path, format!("unsupported model version {version}")));
        }
        let kind = r.u32()?;
        let montage = match r.u32()? {
            0 => Montage::Scalp32,
            1 => Montage::Ear18,
            other => return Err(Error::format(path, format!("unknown montage tag {other}"))),
        };
        let nd = r.u64()? as usize;
        let descriptor: Vec<usize> = (0..nd).map(|_| r.u64().map(|v| v as usize)).collect::<Result<_>>()?;
        let np = r.u64()? as usize;
        if np > bytes.len() / 8 {
            return Err(Error::format(path, "payload length exceeds file size"));
        }
        let payload: Vec<f64> = (0..np).map(|_| r.f64()).collect::<Result<_>>()?;
        if r.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes after payload"));
        }
        let mut p = Payload {
            values: &payload,
            pos: 0,
            path,
        };
        let model = match kind {
            KIND_NET => {
                let [channels, bins, seq_len, time_decimation, hidden, lstm_layers, spatial_maps, c0, c1, conv_kernel, conv_stride, dense_units, classes] =
                    descriptor[..]
                else {
                    return Err(Error::format(path, format!("network descriptor has {nd} fields, expected 13")));
                };
                let arch = Architecture {
                    channels,
                    bins,
                    seq_len,
                    time_decimation,
                    hidden,
                    lstm_layers,
                    spatial_maps,
                    conv_maps: [c0, c1],
                    conv_kernel,
                    conv_stride,
                    dense_units,
                    classes,
                };
                arch.validate().map_err(|e| Error::format(path, e.to_string()))?;
                if channels != montage.channel_count() {
                    return Err(Error::format(path, format!("{channels} channels do not match {montage}")));
                }
                let normalizer = Normalizer {
                    freq_mean: p.take(channels)?,
                    freq_std: p.take(channels)?,
                    time_mean: p.take(channels)?,
                    time_std: p.take(channels)?,
                };
                let mut net = TwoStreamNet::zeros(arch).map_err(|e| Error::format(path, e.to_string()))?;
                for t in net.params_mut().tensors_mut() {
                    let n = t.len();
                    t.data_mut().copy_from_slice(&p.take(n)?);
                }
                Model::Proposed(ProposedModel {
                    montage,
                    normalizer,
                    net,
                })
            }
            KIND_LDA => {
                let [classes, dim, nfreq] = descriptor[..] else {
                    return Err(Error::format(path, format!("LDA descriptor has {nd} fields, expected 3")));
                };
                let freqs = p.take(nfreq)?;
                let gamma = p.take(1)?[0];
                let matrix = |p: &mut Payload, r: usize, c: usize| -> Result<Matrix> {
                    Matrix::from_vec(r, c, p.take(r * c)?).map_err(|e| Error::format(path, e.to_string()))
                };
                let model = LdaModel {
                    classes,
                    feature_mean: p.take(dim)?,
                    feature_scale: p.take(dim)?,
                    means: matrix(&mut p, classes, dim)?,
                    covariance: matrix(&mut p, dim, dim)?,
                    weights: matrix(&mut p, classes, dim)?,
                    biases: p.take(classes)?,
                    priors: p.take(classes)?,
                    gamma,
                };
                Model::Lda(LdaClassifier { montage, freqs, model })
            }
            other => return Err(Error::format(path, format!("unknown model kind {other}"))),
        };
        if p.pos != payload.len() {
            return Err(Error::format(
                path,
                format!("payload has {} values, model uses {}", payload.len(), p.pos),
            ));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

fn montage_tag(m: Montage) -> u32 {
    match m {
        Montage::Scalp32 => 0,
        Montage::Ear18 => 1,
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(self.path, "file is truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

struct Payload<'a> {
    values: &'a [f64],
    pos: usize,
    path: &'a Path,
}

impl Payload<'_> {
    fn take(&mut self, n: usize) -> Result<Vec<f64>> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.values.len());
        let end = end.ok_or_else(|| Error::format(self.path, "payload is too short for the descriptor"))?;
        let v = self.values[self.pos..end].to_vec();
        self.pos = end;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::InitScheme;
    use crate::signal::Condition;
    use crate::synth::{gen_trial, GenConfig, SnrPreset, SubjectProfile};

    fn epochs(montage: Montage, trials: usize) -> Vec<Epoch> {
        let cfg = GenConfig::with_preset(SnrPreset::High);
        let p = SubjectProfile::generate(&cfg, 1);
        let spec = cfg.condition_spec(Condition::Standing);
        let mut out = Vec::new();
        for i in 0..trials {
            for c in 0..3 {
                let (s, e) = gen_trial(&p, &spec, c, i, &cfg).unwrap();
                out.push(if montage == Montage::Scalp32 { s } else { e });
            }
        }
        out
    }

    fn small_arch(channels: usize) -> Architecture {
        Architecture {
            hidden: 4,
            lstm_layers: 2,
            seq_len: 35,
            time_decimation: 10,
            ..Architecture::standard(channels)
        }
    }

    #[test]
    fn network_file_round_trips_bit_exactly() {
        let data = epochs(Montage::Ear18, 2);
        let refs: Vec<&Epoch> = data.iter().collect();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let (m, curve) = ProposedModel::fit_with(small_arch(18), &refs, &cfg).unwrap();
        assert_eq!(curve.len(), 2);
        let model = Model::Proposed(m.clone());
        let bytes = model.to_bytes();
        let back = Model::from_bytes(&bytes, Path::new("mem")).unwrap();
        let Model::Proposed(b) = &back else { panic!("wrong kind") };
        assert_eq!(b.net.params(), m.net.params());
        assert_eq!(b.net.architecture(), m.net.architecture());
        assert_eq!(b.normalizer, m.normalizer);
        assert_eq!(back.to_bytes(), bytes);
        for e in &data {
            assert_eq!(b.predict(e).unwrap(), m.predict(e).unwrap());
        }
    }

    #[test]
    fn lda_file_round_trips_bit_exactly() {
        let data = epochs(Montage::Scalp32, 5);
        let refs: Vec<&Epoch> = data.iter().collect();
        let lda = LdaClassifier::fit(&refs, &crate::synth::DEFAULT_FREQS).unwrap();
        let bytes = Model::Lda(lda.clone()).to_bytes();
        let Model::Lda(back) = Model::from_bytes(&bytes, Path::new("mem")).unwrap() else {
            panic!("wrong kind")
        };
        assert_eq!(back, lda);
        assert_eq!(&bytes[..8], b"SSVEPMDL");
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let net = TwoStreamNet::init(small_arch(18), InitScheme::FanIn, &mut rng::stream(0, "init")).unwrap();
        let model = Model::Proposed(ProposedModel {
            montage: Montage::Ear18,
            normalizer: Normalizer {
                freq_mean: vec![0.0; 18],
                freq_std: vec![1.0; 18],
                time_mean: vec![0.0; 18],
                time_std: vec![1.0; 18],
            },
            net,
        });
        let bytes = model.to_bytes();
        let p = Path::new("m.bin");
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Model::from_bytes(&bad, p), Err(Error::Format { .. })));
        assert!(matches!(Model::from_bytes(&bytes[..bytes.len() - 8], p), Err(Error::Format { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(Model::from_bytes(&extra, p), Err(Error::Format { .. })));
        let mut version = bytes;
        version[8] = 9;
        assert!(matches!(Model::from_bytes(&version, p), Err(Error::Format { .. })));
    }

    #[test]
    fn fit_rejects_missing_class_and_mixed_montage() {
        let data = epochs(Montage::Scalp32, 3);
        let two: Vec<&Epoch> = data.iter().filter(|e| e.label != 2).collect();
        assert!(LdaClassifier::fit(&two, &crate::synth::DEFAULT_FREQS).is_err());
        let ear = epochs(Montage::Ear18, 1);
        let mixed: Vec<&Epoch> = data.iter().chain(&ear).collect();
        assert!(LdaClassifier::fit(&mixed, &crate::synth::DEFAULT_FREQS).is_err());
        let lda = LdaClassifier::fit(&data.iter().collect::<Vec<_>>(), &crate::synth::DEFAULT_FREQS).unwrap();
        assert!(lda.predict(&ear[0]).is_err());
    }
}
