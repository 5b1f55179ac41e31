//! The composed two-stream network.
//!
//! ```text
//! freq (C x B) -> channel-wise conv (S x B) -> conv1d (M1 x L1) -> conv1d (M2 x L2)
//!              -> dense (U) ----------------------------------------------\
//!                                                                          concat -> dense -> logits
//! seq (T x C)  -> LSTM x N -> h_T (H) ------------------------------------/
//! ```

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::arch::Architecture;
use super::layers::{ChannelwiseConv, Conv1d, Dense};
use super::loss::softmax;
use super::lstm::{LstmLayerCache, LstmStack};
use super::tensor::Tensor;
use crate::error::{Error, Result};

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

/// One network input: a standardized `C x B` magnitude spectrum and a
/// standardized `T x C` time-major sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct NetInput {
    pub freq: Vec<f64>,
    pub seq: Vec<f64>,
}

impl NetInput {
    pub fn zeros(arch: &Architecture) -> Self {
        NetInput {
            freq: vec![0.0; arch.channels * arch.bins],
            seq: vec![0.0; arch.seq_len * arch.channels],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.freq.iter().chain(&self.seq).all(|v| v.is_finite())
    }
}

/// How initial weights are drawn.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitScheme {
    /// Every weight and bias from `N(0, std^2)`.
    Normal { std: f64 },
    /// Weights from `N(0, gain^2 / fan_in)` with gain `sqrt(2)` before a
    /// ReLU and 1 elsewhere; biases zero.
    FanIn,
}

/// All learnable tensors of the network. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub spatial: ChannelwiseConv,
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub dense: Dense,
    pub lstm: LstmStack,
    pub head: Dense,
}

impl Params {
    fn zeros(arch: &Architecture) -> Self {
        Params {
            spatial: ChannelwiseConv::new(arch.spatial_maps, arch.channels),
            conv1: Conv1d::new(arch.spatial_maps, arch.conv_maps[0], arch.conv_kernel, arch.conv_stride),
            conv2: Conv1d::new(arch.conv_maps[0], arch.conv_maps[1], arch.conv_kernel, arch.conv_stride),
            dense: Dense::new(arch.flat_conv_len(), arch.dense_units, true),
            lstm: LstmStack::new(arch.channels, arch.hidden, arch.lstm_layers),
            head: Dense::new(arch.head_inputs(), arch.classes, false),
        }
    }

    /// Parameter names in serialization order.
    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = [
            "freq.spatial.weight",
            "freq.spatial.bias",
            "freq.conv1.weight",
            "freq.conv1.bias",
            "freq.conv2.weight",
            "freq.conv2.bias",
            "freq.dense.weight",
            "freq.dense.bias",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for l in 0..self.lstm.layers.len() {
            for part in ["w_x", "w_h", "bias"] {
                names.push(format!("time.lstm{l}.{part}"));
            }
        }
        names.push("head.weight".into());
        names.push("head.bias".into());
        names
    }

    /// Tensors in serialization order (matches [`Params::names`]).
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![
            &self.spatial.weight,
            &self.spatial.bias,
            &self.conv1.weight,
            &self.conv1.bias,
            &self.conv2.weight,
            &self.conv2.bias,
            &self.dense.weight,
            &self.dense.bias,
        ];
        for layer in &self.lstm.layers {
            out.extend([&layer.w_x, &layer.w_h, &layer.bias]);
        }
        out.extend([&self.head.weight, &self.head.bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.spatial.weight,
            &mut self.spatial.bias,
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.dense.weight,
            &mut self.dense.bias,
        ];
        for layer in &mut self.lstm.layers {
            out.extend([&mut layer.w_x, &mut layer.w_h, &mut layer.bias]);
        }
        out.extend([&mut self.head.weight, &mut self.head.bias]);
        out
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.tensors_mut().into_iter().for_each(|t| t.fill(v));
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors().iter().map(|t| t.max_abs()).fold(0.0, f64::max)
    }
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    stamp: u64,
    freq_in: Vec<f64>,
    spatial: Vec<f64>,
    conv1: Vec<f64>,
    conv2: Vec<f64>,
    dense: Vec<f64>,
    lstm: Vec<LstmLayerCache>,
    concat: Vec<f64>,
    pub logits: Vec<f64>,
}

impl ForwardCache {
    /// Which ReLU units are active, over all rectified layers.
    pub fn relu_pattern(&self) -> Vec<bool> {
        [&self.spatial, &self.conv1, &self.conv2, &self.dense]
            .into_iter()
            .flatten()
            .map(|&v| v > 0.0)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStreamNet {
    arch: Architecture,
    params: Params,
    /// Changes whenever the parameters may have changed; caches carry the
    /// stamp of the net that produced them.
    stamp: u64,
}

impl TwoStreamNet {
    /// A network with every parameter zero.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(TwoStreamNet {
            params: Params::zeros(&arch),
            arch,
            stamp: fresh_stamp(),
        })
    }

    /// Random initialization. LSTM forget-gate biases start at 1.
    pub fn init(arch: Architecture, scheme: InitScheme, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let h = arch.hidden;
        let p = &mut net.params;
        match scheme {
            InitScheme::Normal { std } => {
                if !(std.is_finite() && std >= 0.0) {
                    return Err(Error::invalid(format!("init std must be >= 0, got {std}")));
                }
                let dist = Normal::new(0.0, std).expect("valid std");
                for t in p.tensors_mut() {
                    t.data_mut().iter_mut().for_each(|v| *v = dist.sample(rng));
                }
            }
            InitScheme::FanIn => {
                let relu_gain = 2f64.sqrt();
                let k = arch.conv_kernel;
                let draws: [(&mut Tensor, f64); 4] = [
                    (&mut p.spatial.weight, relu_gain / (arch.channels as f64).sqrt()),
                    (&mut p.conv1.weight, relu_gain / ((arch.spatial_maps * k) as f64).sqrt()),
                    (&mut p.conv2.weight, relu_gain / ((arch.conv_maps[0] * k) as f64).sqrt()),
                    (&mut p.dense.weight, relu_gain / (arch.flat_conv_len() as f64).sqrt()),
                ];
                for (t, std) in draws {
                    fill_normal(t, std, rng);
                }
                for layer in &mut p.lstm.layers {
                    let fan_in = (layer.inputs() + layer.hidden()) as f64;
                    fill_normal(&mut layer.w_x, 1.0 / fan_in.sqrt(), rng);
                    fill_normal(&mut layer.w_h, 1.0 / fan_in.sqrt(), rng);
                }
                fill_normal(&mut p.head.weight, 1.0 / (arch.head_inputs() as f64).sqrt(), rng);
            }
        }
        for layer in &mut p.lstm.layers {
            layer.bias.data_mut()[h..2 * h].fill(1.0);
        }
        Ok(net)
    }

    pub fn from_params(arch: Architecture, params: Params) -> Result<Self> {
        let net = Self::zeros(arch)?;
        let expected: Vec<Vec<usize>> = net.params.tensors().iter().map(|t| t.shape().to_vec()).collect();
        let got: Vec<Vec<usize>> = params.tensors().iter().map(|t| t.shape().to_vec()).collect();
        if expected != got {
            return Err(Error::shape("params", "parameter shapes do not match the architecture"));
        }
        Ok(TwoStreamNet {
            arch,
            params,
            stamp: fresh_stamp(),
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Mutable parameter access. Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut Params {
        self.stamp = fresh_stamp();
        &mut self.params
    }

    /// A zeroed gradient buffer shaped like this network's parameters.
    pub fn zero_grads(&self) -> Params {
        Params::zeros(&self.arch)
    }

    /// `theta -= lr * grad`.
    pub fn sgd_step(&mut self, grads: &Params, lr: f64) {
        for (p, g) in self.params_mut().tensors_mut().into_iter().zip(grads.tensors()) {
            p.add_scaled(-lr, g);
        }
    }

    pub fn forward(&self, input: &NetInput) -> Result<ForwardCache> {
        let a = &self.arch;
        let p = &self.params;
        if input.freq.len() != a.channels * a.bins {
            return Err(Error::shape(
                "freq_input",
                format!("expected {} x {} values, got {}", a.channels, a.bins, input.freq.len()),
            ));
        }
        if input.seq.len() != a.seq_len * a.channels {
            return Err(Error::shape(
                "time_input",
                format!("expected {} x {} values, got {}", a.seq_len, a.channels, input.seq.len()),
            ));
        }
        let spatial = p.spatial.forward(&input.freq, a.bins)?;
        let conv1 = p.conv1.forward("conv1", &spatial, a.bins)?;
        let [l1, _] = a.conv_lengths();
        let conv2 = p.conv2.forward("conv2", &conv1, l1)?;
        let dense = p.dense.forward("freq_dense", &conv2)?;
        let lstm = p.lstm.forward(&input.seq, a.seq_len)?;
        let mut concat = dense.clone();
        concat.extend(LstmStack::final_hidden(&lstm, a.hidden));
        let logits = p.head.forward("head", &concat)?;
        debug_assert!(
            !input.is_finite() || logits.iter().all(|v| v.is_finite()),
            "non-finite logits from finite input"
        );
        Ok(ForwardCache {
            stamp: self.stamp,
            freq_in: input.freq.clone(),
            spatial,
            conv1,
            conv2,
            dense,
            lstm,
            concat,
            logits,
        })
    }

    /// Gradients of the loss for one example, given `dL/dlogits`.
    pub fn backward(&self, cache: &ForwardCache, d_logits: &[f64]) -> Result<Params> {
        let mut grads = self.zero_grads();
        self.backward_into(cache, d_logits, &mut grads)?;
        Ok(grads)
    }

    /// Like [`TwoStreamNet::backward`] but accumulates into `grads`.
    pub fn backward_into(&self, cache: &ForwardCache, d_logits: &[f64], grads: &mut Params) -> Result<()> {
        if cache.stamp != self.stamp {
            return Err(Error::InvalidState(
                "forward cache was produced by a different or since-modified network".into(),
            ));
        }
        if d_logits.len() != self.arch.classes {
            return Err(Error::shape(
                "head",
                format!("expected {} logit gradients, got {}", self.arch.classes, d_logits.len()),
            ));
        }
        let p = &self.params;
        let u = self.arch.dense_units;
        let d_concat = p.head.backward(&cache.concat, &cache.logits, d_logits, &mut grads.head);
        let (d_dense, d_hidden) = d_concat.split_at(u);

        let d_conv2 = p.dense.backward(&cache.conv2, &cache.dense, d_dense, &mut grads.dense);
        let d_conv1 = p.conv2.backward(&cache.conv1, &cache.conv2, &d_conv2, &mut grads.conv2);
        let d_spatial = p.conv1.backward(&cache.spatial, &cache.conv1, &d_conv1, &mut grads.conv1);
        p.spatial.backward(&cache.freq_in, &cache.spatial, &d_spatial, &mut grads.spatial);

        p.lstm.backward(&cache.lstm, d_hidden, &mut grads.lstm);
        debug_assert!(grads.is_finite(), "non-finite gradients");
        Ok(())
    }

    pub fn logits(&self, input: &NetInput) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.logits)
    }

    /// Most probable class and the softmax probabilities. Ties resolve to the
    /// lowest index.
    pub fn predict(&self, input: &NetInput) -> Result<(usize, Vec<f64>)> {
        let probs = softmax(&self.logits(input)?);
        Ok((argmax(&probs), probs))
    }
}

fn fill_normal(t: &mut Tensor, std: f64, rng: &mut impl Rng) {
    let dist = Normal::new(0.0, std).expect("valid std");
    t.data_mut().iter_mut().for_each(|v| *v = dist.sample(rng));
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
