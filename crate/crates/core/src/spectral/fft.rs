//! Complex FFT for arbitrary lengths.
//!
//! Lengths whose prime factors are all small use recursive mixed-radix
//! decimation in time with generic radix-p butterflies. Lengths with a large
//! prime factor go through Bluestein's chirp-z algorithm on a power-of-two
//! grid.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use num_complex::Complex64;

const MAX_DIRECT_RADIX: usize = 61;

#[derive(Debug)]
pub struct FftPlan {
    n: usize,
    kind: PlanKind,
}

#[derive(Debug)]
enum PlanKind {
    MixedRadix {
        factors: Vec<usize>,
        /// e^{-2 pi i j / n}, j = 0..n
        twiddles: Vec<Complex64>,
    },
    Bluestein {
        inner: Box<FftPlan>,
        /// e^{-i pi k^2 / n}, k = 0..n
        chirp: Vec<Complex64>,
        /// forward transform of the conjugate chirp, zero-padded to inner.n
        kernel_hat: Vec<Complex64>,
    },
}

impl FftPlan {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "FFT length must be positive");
        let factors = factorize(n);
        if factors.iter().all(|&p| p <= MAX_DIRECT_RADIX) {
            let twiddles = (0..n).map(|j| unit_root(j, n)).collect();
            return FftPlan {
                n,
                kind: PlanKind::MixedRadix { factors, twiddles },
            };
        }
        let m = (2 * n - 1).next_power_of_two();
        let inner = Box::new(FftPlan::new(m));
        let chirp: Vec<Complex64> = (0..n)
            .map(|k| {
                // k^2 mod 2n keeps the angle argument small and exact
                let k2 = (k as u128 * k as u128 % (2 * n as u128)) as f64;
                Complex64::from_polar(1.0, -PI * k2 / n as f64)
            })
            .collect();
        let mut kernel = vec![Complex64::new(0.0, 0.0); m];
        kernel[0] = chirp[0].conj();
        for k in 1..n {
            kernel[k] = chirp[k].conj();
            kernel[m - k] = chirp[k].conj();
        }
        inner.forward(&mut kernel);
        FftPlan {
            n,
            kind: PlanKind::Bluestein {
                inner,
                chirp,
                kernel_hat: kernel,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform, `X_k = sum_t x_t e^{-2 pi i k t / n}`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, false);
    }

    /// In-place unnormalised inverse transform (no 1/n factor).
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, true);
    }

    fn run(&self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.n, "buffer length does not match plan");
        if inverse {
            // conj(F(conj(x))) is the unnormalised inverse
            data.iter_mut().for_each(|v| *v = v.conj());
            self.run(data, false);
            data.iter_mut().for_each(|v| *v = v.conj());
            return;
        }
        match &self.kind {
            PlanKind::MixedRadix { factors, twiddles } => {
                if self.n == 1 {
                    return;
                }
                let input = data.to_vec();
                let mut scratch = vec![Complex64::new(0.0, 0.0); factors.iter().copied().max().unwrap_or(1)];
                mixed_radix(&input, 1, data, factors, twiddles, 1, &mut scratch);
            }
            PlanKind::Bluestein {
                inner,
                chirp,
                kernel_hat,
            } => {
                let m = inner.n;
                let mut a = vec![Complex64::new(0.0, 0.0); m];
                for k in 0..self.n {
                    a[k] = data[k] * chirp[k];
                }
                inner.forward(&mut a);
                for (v, h) in a.iter_mut().zip(kernel_hat) {
                    *v *= h;
                }
                inner.inverse(&mut a);
                let scale = 1.0 / m as f64;
                for k in 0..self.n {
                    data[k] = a[k] * chirp[k] * scale;
                }
            }
        }
    }
}

fn mixed_radix(
    input: &[Complex64],
    stride: usize,
    out: &mut [Complex64],
    factors: &[usize],
    twiddles: &[Complex64],
    tw_stride: usize,
    scratch: &mut [Complex64],
) {
    let n = out.len();
    let full = twiddles.len();
    let Some((&p, rest)) = factors.split_first() else {
        out[0] = input[0];
        return;
    };
    let m = n / p;
    for r in 0..p {
        mixed_radix(
            &input[r * stride..],
            stride * p,
            &mut out[r * m..(r + 1) * m],
            rest,
            twiddles,
            tw_stride * p,
            scratch,
        );
    }
    let tmp = &mut scratch[..p];
    for k in 0..m {
        for (r, t) in tmp.iter_mut().enumerate() {
            *t = out[r * m + k] * twiddles[(r * k * tw_stride) % full];
        }
        if p == 2 {
            out[k] = tmp[0] + tmp[1];
            out[k + m] = tmp[0] - tmp[1];
            continue;
        }
        for q in 0..p {
            let mut acc = tmp[0];
            for (r, t) in tmp.iter().enumerate().skip(1) {
                acc += t * twiddles[((r * q) % p) * m * tw_stride];
            }
            out[k + q * m] = acc;
        }
    }
}

fn unit_root(j: usize, n: usize) -> Complex64 {
    let angle = -2.0 * PI * j as f64 / n as f64;
    Complex64::new(angle.cos(), angle.sin())
}

fn factorize(mut n: usize) -> Vec<usize> {
    let mut factors = Vec::new();
    let mut p = 2;
    while n > 1 {
        if p * p > n {
            factors.push(n);
            break;
        }
        while n % p == 0 {
            factors.push(p);
            n /= p;
        }
        p += 1;
    }
    factors
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Rc<FftPlan>>> = RefCell::new(HashMap::new());
}

/// Cached plan for length `n` (per thread).
pub fn plan(n: usize) -> Rc<FftPlan> {
    PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry(n)
            .or_insert_with(|| Rc::new(FftPlan::new(n)))
            .clone()
    })
}
