//! Feed-forward layers of the frequency branch and the head.

use super::tensor::{axpy, dot, matmul_acc, transpose, Tensor};
use crate::error::{Error, Result};

/// `S` spatial kernels of size `1 x C`: each collapses the channel axis at
/// one spectral bin, so a `C x B` input becomes `S x B` feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelwiseConv {
    /// `[S, C]`
    pub weight: Tensor,
    /// `[S]`
    pub bias: Tensor,
}

impl ChannelwiseConv {
    pub fn new(maps: usize, channels: usize) -> Self {
        ChannelwiseConv {
            weight: Tensor::zeros(&[maps, channels]),
            bias: Tensor::zeros(&[maps]),
        }
    }

    pub fn maps(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.weight.shape()[1]
    }

    /// `out[k][j] = relu(b_k + sum_c x[c][j] * w_k[c])`; `input` is `C x B`
    /// row-major, output `S x B`.
    pub fn forward(&self, input: &[f64], bins: usize) -> Result<Vec<f64>> {
        let channels = self.channels();
        if input.len() != channels * bins {
            return Err(Error::shape(
                "channelwise_conv",
                format!("expected {channels} x {bins} input, got {} values", input.len()),
            ));
        }
        let maps = self.maps();
        let mut out = vec![0.0; maps * bins];
        for (k, row) in out.chunks_exact_mut(bins).enumerate() {
            row.fill(self.bias.data()[k]);
        }
        matmul_acc(maps, bins, channels, self.weight.data(), input, &mut out);
        out.iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(out)
    }

    /// Accumulates parameter gradients given `d_out` w.r.t. the activated
    /// output. The input gradient is never needed (this is the first layer).
    pub fn backward(&self, input: &[f64], output: &[f64], d_out: &[f64], grad: &mut ChannelwiseConv) {
        let maps = self.maps();
        let channels = self.channels();
        let bins = output.len() / maps;
        let d_pre = relu_mask(output, d_out);
        for (k, row) in d_pre.chunks_exact(bins).enumerate() {
            grad.bias.data_mut()[k] += row.iter().sum::<f64>();
        }
        let input_t = transpose(channels, bins, input);
        matmul_acc(maps, channels, bins, &d_pre, &input_t, grad.weight.data_mut());
    }
}

fn relu_mask(output: &[f64], d_out: &[f64]) -> Vec<f64> {
    d_out
        .iter()
        .zip(output)
        .map(|(&d, &y)| if y > 0.0 { d } else { 0.0 })
        .collect()
}

/// 1-d convolution along the bin axis, valid padding, followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    /// `[out_maps, in_maps, kernel]`
    pub weight: Tensor,
    /// `[out_maps]`
    pub bias: Tensor,
    pub stride: usize,
}

impl Conv1d {
    pub fn new(in_maps: usize, out_maps: usize, kernel: usize, stride: usize) -> Self {
        Conv1d {
            weight: Tensor::zeros(&[out_maps, in_maps, kernel]),
            bias: Tensor::zeros(&[out_maps]),
            stride,
        }
    }

    pub fn in_maps(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_maps(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        if in_len < self.kernel() {
            0
        } else {
            (in_len - self.kernel()) / self.stride + 1
        }
    }

    pub fn forward(&self, name: &str, input: &[f64], in_len: usize) -> Result<Vec<f64>> {
        let (ci, co, k) = (self.in_maps(), self.out_maps(), self.kernel());
        if input.len() != ci * in_len {
            return Err(Error::shape(
                name,
                format!("expected {ci} x {in_len} input, got {} values", input.len()),
            ));
        }
        let out_len = self.out_len(in_len);
        if out_len == 0 {
            return Err(Error::shape(name, format!("input length {in_len} < kernel {k}")));
        }
        let cols = self.im2col_t(input, in_len, out_len);
        let mut out = vec![0.0; co * out_len];
        for (o, row) in out.chunks_exact_mut(out_len).enumerate() {
            row.fill(self.bias.data()[o]);
        }
        matmul_acc(co, out_len, ci * k, self.weight.data(), &cols, &mut out);
        out.iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(out)
    }

    /// Patch matrix with one row per (input map, tap) and one column per
    /// output position: `cols[(i k + j) L_out + p] = x[i][p s + j]`.
    fn im2col_t(&self, input: &[f64], in_len: usize, out_len: usize) -> Vec<f64> {
        let (ci, k, s) = (self.in_maps(), self.kernel(), self.stride);
        let mut cols = vec![0.0; ci * k * out_len];
        for i in 0..ci {
            let x = &input[i * in_len..(i + 1) * in_len];
            for j in 0..k {
                let row = &mut cols[(i * k + j) * out_len..(i * k + j + 1) * out_len];
                for (p, v) in row.iter_mut().enumerate() {
                    *v = x[p * s + j];
                }
            }
        }
        cols
    }

    /// Returns the gradient w.r.t. the input and accumulates parameter
    /// gradients into `grad`.
    pub fn backward(
        &self,
        input: &[f64],
        output: &[f64],
        d_out: &[f64],
        grad: &mut Conv1d,
    ) -> Vec<f64> {
        let (ci, co, k, s) = (self.in_maps(), self.out_maps(), self.kernel(), self.stride);
        let in_len = input.len() / ci;
        let out_len = output.len() / co;
        let d_pre = relu_mask(output, d_out);
        for (o, row) in d_pre.chunks_exact(out_len).enumerate() {
            grad.bias.data_mut()[o] += row.iter().sum::<f64>();
        }
        let cols_t = self.im2col_t(input, in_len, out_len);
        let cols = transpose(ci * k, out_len, &cols_t);
        matmul_acc(co, ci * k, out_len, &d_pre, &cols, grad.weight.data_mut());

        let w_t = transpose(co, ci * k, self.weight.data());
        let mut d_cols = vec![0.0; ci * k * out_len];
        matmul_acc(ci * k, out_len, co, &w_t, &d_pre, &mut d_cols);
        let mut d_in = vec![0.0; input.len()];
        for i in 0..ci {
            let dx = &mut d_in[i * in_len..(i + 1) * in_len];
            for j in 0..k {
                let row = &d_cols[(i * k + j) * out_len..(i * k + j + 1) * out_len];
                for (p, &v) in row.iter().enumerate() {
                    dx[p * s + j] += v;
                }
            }
        }
        d_in
    }
}

/// Fully connected layer, `y = x W + b`, optional ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `[inputs, outputs]`
    pub weight: Tensor,
    /// `[outputs]`
    pub bias: Tensor,
    pub relu: bool,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, relu: bool) -> Self {
        Dense {
            weight: Tensor::zeros(&[inputs, outputs]),
            bias: Tensor::zeros(&[outputs]),
            relu,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, name: &str, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.inputs() {
            return Err(Error::shape(
                name,
                format!("expected {} inputs, got {}", self.inputs(), input.len()),
            ));
        }
        let mut out = self.bias.data().to_vec();
        for (j, &x) in input.iter().enumerate() {
            if x != 0.0 {
                axpy(&mut out, x, self.weight.row(j));
            }
        }
        if self.relu {
            out.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        Ok(out)
    }

    pub fn backward(&self, input: &[f64], output: &[f64], d_out: &[f64], grad: &mut Dense) -> Vec<f64> {
        let d_pre: Vec<f64> = if self.relu {
            d_out
                .iter()
                .zip(output)
                .map(|(&d, &y)| if y > 0.0 { d } else { 0.0 })
                .collect()
        } else {
            d_out.to_vec()
        };
        axpy(grad.bias.data_mut(), 1.0, &d_pre);
        let mut d_in = vec![0.0; input.len()];
        for (j, &x) in input.iter().enumerate() {
            if x != 0.0 {
                axpy(grad.weight.row_mut(j), x, &d_pre);
            }
            d_in[j] = dot(self.weight.row(j), &d_pre);
        }
        d_in
    }
}
