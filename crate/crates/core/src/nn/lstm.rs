//! Stacked LSTM for the time-domain branch.
//!
//! Per layer and time step, with gates packed as `[i | f | g | o]`:
//!
//! ```text
//! z   = b + x_t W_x + h_{t-1} W_h
//! i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```
//!
//! Initial `h` and `c` are zero. The stack returns the last layer's `h_T`.

use super::tensor::{axpy, mat_vec, matmul_acc, transpose, vec_mat_acc, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    /// `[D, 4H]`
    pub w_x: Tensor,
    /// `[H, 4H]`
    pub w_h: Tensor,
    /// `[4H]`
    pub bias: Tensor,
}

/// Activations of one layer over a whole sequence, kept for BPTT.
#[derive(Debug, Clone)]
pub struct LstmLayerCache {
    /// `T x D`
    pub input: Vec<f64>,
    /// `T x 4H`, post-activation
    pub gates: Vec<f64>,
    /// `T x H`
    pub cell: Vec<f64>,
    /// `T x H`, `tanh(c_t)`
    pub cell_tanh: Vec<f64>,
    /// `T x H`
    pub hidden: Vec<f64>,
}

/// `tanh` through `expm1`, several times cheaper than `f64::tanh` and
/// accurate to a few ulps.
fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp_m1();
    (-e / (2.0 + e)).copysign(x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LstmLayer {
    pub fn new(inputs: usize, hidden: usize) -> Self {
        LstmLayer {
            w_x: Tensor::zeros(&[inputs, 4 * hidden]),
            w_h: Tensor::zeros(&[hidden, 4 * hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w_x.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.w_h.shape()[0]
    }

    /// Runs the layer over a `steps x D` sequence.
    pub fn forward(&self, input: &[f64], steps: usize) -> LstmLayerCache {
        let d = self.inputs();
        let h = self.hidden();
        debug_assert_eq!(input.len(), steps * d);
        // Input projections of every step at once; the recurrent term is
        // added step by step below, then the gates are activated in place.
        let mut gates = Vec::with_capacity(steps * 4 * h);
        for _ in 0..steps {
            gates.extend_from_slice(self.bias.data());
        }
        matmul_acc(steps, 4 * h, d, input, self.w_x.data(), &mut gates);
        let mut cell = vec![0.0; steps * h];
        let mut cell_tanh = vec![0.0; steps * h];
        let mut hidden = vec![0.0; steps * h];
        for t in 0..steps {
            let z = &mut gates[t * 4 * h..(t + 1) * 4 * h];
            if t > 0 {
                vec_mat_acc(z, &hidden[(t - 1) * h..t * h], self.w_h.data());
            }
            for k in 0..h {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h + k]);
                let g = tanh(z[2 * h + k]);
                let o = sigmoid(z[3 * h + k]);
                z[k] = i;
                z[h + k] = f;
                z[2 * h + k] = g;
                z[3 * h + k] = o;
                let c_prev = if t > 0 { cell[(t - 1) * h + k] } else { 0.0 };
                let c = f * c_prev + i * g;
                let tc = tanh(c);
                cell[t * h + k] = c;
                cell_tanh[t * h + k] = tc;
                hidden[t * h + k] = o * tc;
            }
        }
        LstmLayerCache {
            input: input.to_vec(),
            gates,
            cell,
            cell_tanh,
            hidden,
        }
    }

    /// Backpropagation through time. `d_hidden` is the loss gradient w.r.t.
    /// every `h_t` coming from above (`T x H`). Accumulates parameter
    /// gradients into `grad` and returns `dL/dx_t` (`T x D`) when asked.
    pub fn backward(
        &self,
        cache: &LstmLayerCache,
        d_hidden: &[f64],
        grad: &mut LstmLayer,
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let d = self.inputs();
        let h = self.hidden();
        let steps = cache.hidden.len() / h;
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        // Pre-activation gradients of every step; the weight gradients are
        // then two matrix products over the whole sequence.
        let mut dz_all = vec![0.0; steps * 4 * h];
        for t in (0..steps).rev() {
            let gates = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
            let dz = &mut dz_all[t * 4 * h..(t + 1) * 4 * h];
            for k in 0..h {
                let i = gates[k];
                let f = gates[h + k];
                let g = gates[2 * h + k];
                let o = gates[3 * h + k];
                let tc = cache.cell_tanh[t * h + k];
                let c_prev = if t > 0 { cache.cell[(t - 1) * h + k] } else { 0.0 };
                let dh = d_hidden[t * h + k] + dh_next[k];
                let d_o = dh * tc;
                let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
                dc_next[k] = dc * f;
                dz[k] = dc * g * i * (1.0 - i);
                dz[h + k] = dc * c_prev * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - g * g);
                dz[3 * h + k] = d_o * o * (1.0 - o);
            }
            if t > 0 {
                mat_vec(self.w_h.data(), dz, &mut dh_next);
            }
        }
        for dz in dz_all.chunks_exact(4 * h) {
            axpy(grad.bias.data_mut(), 1.0, dz);
        }
        let x_t = transpose(steps, d, &cache.input);
        matmul_acc(d, 4 * h, steps, &x_t, &dz_all, grad.w_x.data_mut());
        if steps > 1 {
            let h_prev_t = transpose(steps - 1, h, &cache.hidden[..(steps - 1) * h]);
            matmul_acc(h, 4 * h, steps - 1, &h_prev_t, &dz_all[4 * h..], grad.w_h.data_mut());
        }
        want_input_grad.then(|| {
            let w_x_t = transpose(d, 4 * h, self.w_x.data());
            let mut dx = vec![0.0; steps * d];
            matmul_acc(steps, d, 4 * h, &dz_all, &w_x_t, &mut dx);
            dx
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmStack {
    pub layers: Vec<LstmLayer>,
}

impl LstmStack {
    pub fn new(inputs: usize, hidden: usize, depth: usize) -> Self {
        let layers = (0..depth)
            .map(|l| LstmLayer::new(if l == 0 { inputs } else { hidden }, hidden))
            .collect();
        LstmStack { layers }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden()
    }

    /// Runs the stack over a `steps x D` sequence; the final hidden state of
    /// the top layer is the last `H` values of the last cache's `hidden`.
    pub fn forward(&self, input: &[f64], steps: usize) -> Result<Vec<LstmLayerCache>> {
        let d = self.layers[0].inputs();
        if steps == 0 || input.len() != steps * d {
            return Err(Error::shape(
                "lstm",
                format!("expected a non-empty sequence of {d}-vectors, got {} values for {steps} steps", input.len()),
            ));
        }
        let mut caches: Vec<LstmLayerCache> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let cache = match caches.last() {
                None => layer.forward(input, steps),
                Some(prev) => layer.forward(&prev.hidden, steps),
            };
            debug_assert!(cache.hidden.iter().all(|v| v.is_finite()), "lstm layer {l}");
            caches.push(cache);
        }
        Ok(caches)
    }

    pub fn final_hidden(caches: &[LstmLayerCache], hidden: usize) -> Vec<f64> {
        let top = &caches.last().expect("non-empty stack").hidden;
        top[top.len() - hidden..].to_vec()
    }

    /// Backpropagates a gradient on the final top-layer hidden state.
    pub fn backward(&self, caches: &[LstmLayerCache], d_final: &[f64], grad: &mut LstmStack) {
        let h = self.hidden();
        let steps = caches[0].hidden.len() / h;
        let mut d_hidden = vec![0.0; steps * h];
        d_hidden[(steps - 1) * h..].copy_from_slice(d_final);
        for l in (0..self.layers.len()).rev() {
            let want = l > 0;
            let d_in = self.layers[l].backward(&caches[l], &d_hidden, &mut grad.layers[l], want);
            if let Some(d_in) = d_in {
                d_hidden = d_in;
            }
        }
    }
}
