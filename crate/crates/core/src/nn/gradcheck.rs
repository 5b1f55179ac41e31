//! Central finite-difference verification of the analytic gradients.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::arch::Architecture;
use super::loss::softmax_cross_entropy;
use super::net::{ForwardCache, InitScheme, NetInput, TwoStreamNet};
use crate::error::Result;
use crate::rng;

/// Step used for the central differences.
pub const GRADCHECK_EPS: f64 = 1e-5;
/// Largest acceptable relative error.
pub const GRADCHECK_TOL: f64 = 1e-4;
/// Floor of the relative-error denominator, so that gradients which are
/// zero up to round-off compare by absolute difference.
const REL_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Elements compared.
    pub checked: usize,
    /// Elements skipped because a perturbation flipped a ReLU on or off, where
    /// the loss is not differentiable.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub seed: u64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn failures(&self, tol: f64) -> Vec<&TensorCheck> {
        self.tensors.iter().filter(|t| !(t.max_rel_error < tol)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub arch: Architecture,
    pub eps: f64,
    /// Test hook: scale the analytic gradient of the named tensor by 1.5
    /// before comparison.
    pub corrupt: Option<String>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            arch: Architecture::tiny(),
            eps: GRADCHECK_EPS,
            corrupt: None,
        }
    }
}

fn loss_of(cache: &ForwardCache, label: usize) -> Result<f64> {
    Ok(softmax_cross_entropy(&cache.logits, label)?.0)
}

/// Checks every parameter of a randomly initialized network on one random
/// example.
pub fn grad_check(seed: u64, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let arch = opts.arch;
    let mut r = rng::stream(seed, "gradcheck");
    let mut net = TwoStreamNet::init(arch, InitScheme::Normal { std: 0.5 }, &mut r)?;
    let mut input = NetInput::zeros(&arch);
    for v in input.freq.iter_mut().chain(input.seq.iter_mut()) {
        *v = StandardNormal.sample(&mut r);
    }
    let label = r.random_range(0..arch.classes);

    let cache = net.forward(&input)?;
    let base_pattern = cache.relu_pattern();
    let (_, d_logits) = softmax_cross_entropy(&cache.logits, label)?;
    let grads = net.backward(&cache, &d_logits)?;

    let names = net.params().names();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.data().to_vec()).collect();
    let mut report = GradCheckReport {
        seed,
        tensors: Vec::with_capacity(names.len()),
    };
    for (ti, name) in names.iter().enumerate() {
        let scale = if opts.corrupt.as_deref() == Some(name.as_str()) { 1.5 } else { 1.0 };
        let mut check = TensorCheck {
            name: name.clone(),
            max_rel_error: 0.0,
            checked: 0,
            skipped: 0,
        };
        for i in 0..analytic[ti].len() {
            let original = net.params().tensors()[ti].data()[i];
            net.params_mut().tensors_mut()[ti].data_mut()[i] = original + opts.eps;
            let up_cache = net.forward(&input)?;
            net.params_mut().tensors_mut()[ti].data_mut()[i] = original - opts.eps;
            let dn_cache = net.forward(&input)?;
            net.params_mut().tensors_mut()[ti].data_mut()[i] = original;

            if up_cache.relu_pattern() != base_pattern || dn_cache.relu_pattern() != base_pattern {
                check.skipped += 1;
                continue;
            }
            let numeric = (loss_of(&up_cache, label)? - loss_of(&dn_cache, label)?) / (2.0 * opts.eps);
            let err = relative_error(scale * analytic[ti][i], numeric);
            check.max_rel_error = check.max_rel_error.max(err);
            check.checked += 1;
        }
        report.tensors.push(check);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{ChannelwiseConv, Conv1d, Dense};
    use crate::nn::lstm::LstmStack;
    use crate::nn::tensor::Tensor;

    fn randomize(t: &mut Tensor, r: &mut impl Rng) {
        t.data_mut().iter_mut().for_each(|v| *v = StandardNormal.sample(r));
    }

    fn random_vec(n: usize, r: &mut impl Rng) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(r)).collect()
    }

    /// Compares `analytic` against central differences of `f` over `params`
    /// (treated as a flat list of scalars), skipping elements where the
    /// perturbation changes `kinks`.
    fn check_scalars(
        params: &mut [f64],
        analytic: &[f64],
        mut f: impl FnMut(&[f64]) -> (f64, Vec<bool>),
    ) -> f64 {
        let (_, base) = f(params);
        let mut worst: f64 = 0.0;
        for i in 0..params.len() {
            let orig = params[i];
            params[i] = orig + GRADCHECK_EPS;
            let (up, pu) = f(params);
            params[i] = orig - GRADCHECK_EPS;
            let (dn, pd) = f(params);
            params[i] = orig;
            if pu != base || pd != base {
                continue;
            }
            worst = worst.max(relative_error(analytic[i], (up - dn) / (2.0 * GRADCHECK_EPS)));
        }
        worst
    }

    fn positive(v: &[f64]) -> Vec<bool> {
        v.iter().map(|&x| x > 0.0).collect()
    }

    fn weighted_sum(out: &[f64], w: &[f64]) -> f64 {
        out.iter().zip(w).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn channelwise_conv_in_isolation() {
        for seed in 0..10 {
            let mut r = rng::stream(seed, "iso-spatial");
            let (c, b) = (3, 6);
            let mut layer = ChannelwiseConv::new(4, c);
            randomize(&mut layer.weight, &mut r);
            randomize(&mut layer.bias, &mut r);
            let x = random_vec(c * b, &mut r);
            let w = random_vec(4 * b, &mut r);
            let out = layer.forward(&x, b).unwrap();
            let mut grad = ChannelwiseConv::new(4, c);
            layer.backward(&x, &out, &w, &mut grad);

            let mut weights = layer.weight.data().to_vec();
            let err = check_scalars(&mut weights, grad.weight.data(), |p| {
                let mut l = layer.clone();
                l.weight.data_mut().copy_from_slice(p);
                let o = l.forward(&x, b).unwrap();
                (weighted_sum(&o, &w), positive(&o))
            });
            assert!(err < GRADCHECK_TOL, "seed {seed} weight {err}");
            let mut bias = layer.bias.data().to_vec();
            let err = check_scalars(&mut bias, grad.bias.data(), |p| {
                let mut l = layer.clone();
                l.bias.data_mut().copy_from_slice(p);
                let o = l.forward(&x, b).unwrap();
                (weighted_sum(&o, &w), positive(&o))
            });
            assert!(err < GRADCHECK_TOL, "seed {seed} bias {err}");
        }
    }

    #[test]
    fn conv1d_in_isolation() {
        for seed in 0..10 {
            let mut r = rng::stream(seed, "iso-conv1d");
            let (ci, co, k, s, len) = (3, 2, 3, 2, 11);
            let mut layer = Conv1d::new(ci, co, k, s);
            randomize(&mut layer.weight, &mut r);
            randomize(&mut layer.bias, &mut r);
            let x = random_vec(ci * len, &mut r);
            let out = layer.forward("c", &x, len).unwrap();
            let w = random_vec(out.len(), &mut r);
            let mut grad = Conv1d::new(ci, co, k, s);
            let d_in = layer.backward(&x, &out, &w, &mut grad);

            let eval = |l: &Conv1d, x: &[f64]| {
                let o = l.forward("c", x, len).unwrap();
                (weighted_sum(&o, &w), positive(&o))
            };
            let mut weights = layer.weight.data().to_vec();
            let err = check_scalars(&mut weights, grad.weight.data(), |p| {
                let mut l = layer.clone();
                l.weight.data_mut().copy_from_slice(p);
                eval(&l, &x)
            });
            assert!(err < GRADCHECK_TOL, "seed {seed} weight {err}");
            let mut bias = layer.bias.data().to_vec();
            let err = check_scalars(&mut bias, grad.bias.data(), |p| {
                let mut l = layer.clone();
                l.bias.data_mut().copy_from_slice(p);
                eval(&l, &x)
            });
            assert!(err < GRADCHECK_TOL, "seed {seed} bias {err}");
            let mut xs = x.clone();
            let err = check_scalars(&mut xs, &d_in, |p| eval(&layer, p));
            assert!(err < GRADCHECK_TOL, "seed {seed} input {err}");
        }
    }

    #[test]
    fn dense_in_isolation() {
        for seed in 0..10 {
            for relu in [true, false] {
                let mut r = rng::stream(seed, "iso-dense");
                let mut layer = Dense::new(5, 4, relu);
                randomize(&mut layer.weight, &mut r);
                randomize(&mut layer.bias, &mut r);
                let x = random_vec(5, &mut r);
                let w = random_vec(4, &mut r);
                let out = layer.forward("d", &x).unwrap();
                let mut grad = Dense::new(5, 4, relu);
                let d_in = layer.backward(&x, &out, &w, &mut grad);
                let eval = |l: &Dense, x: &[f64]| {
                    let o = l.forward("d", x).unwrap();
                    (weighted_sum(&o, &w), positive(&o))
                };
                let mut weights = layer.weight.data().to_vec();
                let err = check_scalars(&mut weights, grad.weight.data(), |p| {
                    let mut l = layer.clone();
                    l.weight.data_mut().copy_from_slice(p);
                    eval(&l, &x)
                });
                assert!(err < GRADCHECK_TOL, "seed {seed} relu {relu} weight {err}");
                let mut bias = layer.bias.data().to_vec();
                let err = check_scalars(&mut bias, grad.bias.data(), |p| {
                    let mut l = layer.clone();
                    l.bias.data_mut().copy_from_slice(p);
                    eval(&l, &x)
                });
                assert!(err < GRADCHECK_TOL, "seed {seed} relu {relu} bias {err}");
                let mut xs = x.clone();
                let err = check_scalars(&mut xs, &d_in, |p| eval(&layer, p));
                assert!(err < GRADCHECK_TOL, "seed {seed} relu {relu} input {err}");
            }
        }
    }

    #[test]
    fn lstm_stack_in_isolation() {
        for seed in 0..10 {
            let mut r = rng::stream(seed, "iso-lstm");
            let (d, h, steps) = (2, 3, 6);
            let mut stack = LstmStack::new(d, h, 3);
            for layer in &mut stack.layers {
                randomize(&mut layer.w_x, &mut r);
                randomize(&mut layer.w_h, &mut r);
                randomize(&mut layer.bias, &mut r);
            }
            let x = random_vec(steps * d, &mut r);
            let w = random_vec(h, &mut r);
            let caches = stack.forward(&x, steps).unwrap();
            let mut grad = LstmStack::new(d, h, 3);
            stack.backward(&caches, &w, &mut grad);
            for l in 0..3 {
                for part in 0..3 {
                    let pick = |s: &LstmStack| -> Vec<f64> {
                        let layer = &s.layers[l];
                        [&layer.w_x, &layer.w_h, &layer.bias][part].data().to_vec()
                    };
                    let mut params = pick(&stack);
                    let err = check_scalars(&mut params, &pick(&grad), |p| {
                        let mut s = stack.clone();
                        let layer = &mut s.layers[l];
                        [&mut layer.w_x, &mut layer.w_h, &mut layer.bias][part]
                            .data_mut()
                            .copy_from_slice(p);
                        let c = s.forward(&x, steps).unwrap();
                        (weighted_sum(&LstmStack::final_hidden(&c, h), &w), Vec::new())
                    });
                    assert!(err < GRADCHECK_TOL, "seed {seed} layer {l} part {part}: {err}");
                }
            }
        }
    }

    #[test]
    fn full_network_ten_seeds() {
        let opts = GradCheckOptions::default();
        for seed in 0..10 {
            let report = grad_check(seed, &opts).unwrap();
            assert_eq!(report.tensors.len(), 8 + 9 + 2);
            assert!(report.failures(GRADCHECK_TOL).is_empty(), "seed {seed}: {report:?}");
            let checked: usize = report.tensors.iter().map(|t| t.checked).sum();
            let total: usize = report.tensors.iter().map(|t| t.checked + t.skipped).sum();
            assert_eq!(total, opts.arch.parameter_count());
            assert!(checked * 10 >= total * 9, "seed {seed}: too many kinks");
        }
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let opts = GradCheckOptions {
            corrupt: Some("time.lstm1.w_h".into()),
            ..Default::default()
        };
        let report = grad_check(1, &opts).unwrap();
        let failures = report.failures(GRADCHECK_TOL);
        assert_eq!(failures.len(), 1);
        assert_eq!(failures[0].name, "time.lstm1.w_h");
    }
}
