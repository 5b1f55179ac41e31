use crate::error::{Error, Result};

/// Dense row-major n-d array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Tensor::zeros(&self.shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Row `r` of a tensor viewed as `shape[0] x rest`.
    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.data.len() / self.shape[0];
        &self.data[r * w..(r + 1) * w]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let w = self.data.len() / self.shape[0];
        &mut self.data[r * w..(r + 1) * w]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        axpy(&mut self.data, alpha, &other.data);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Rectified linear unit, elementwise.
pub fn relu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += alpha * b;
    }
}

/// Dot product with four independent accumulators so the loop vectorises.
/// The summation order is fixed, so results are reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * i + l] * b[4 * i + l];
        }
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `C += A B` for row-major `A` (`m x k`), `B` (`k x n`), `C` (`m x n`).
///
/// Works on 4 x 4 blocks of `C` held in registers; the summation order over
/// `k` is fixed, so results are reproducible.
pub(crate) fn matmul_acc(m: usize, n: usize, k: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if k == 0 {
        return;
    }
    let mut i0 = 0;
    while i0 + 4 <= m {
        let a0 = &a[i0 * k..(i0 + 1) * k];
        let a1 = &a[(i0 + 1) * k..(i0 + 2) * k];
        let a2 = &a[(i0 + 2) * k..(i0 + 3) * k];
        let a3 = &a[(i0 + 3) * k..(i0 + 4) * k];
        let mut j0 = 0;
        while j0 + 4 <= n {
            let mut acc = [[0.0f64; 4]; 4];
            for (p, b_row) in b.chunks_exact(n).enumerate() {
                let bv: [f64; 4] = b_row[j0..j0 + 4].try_into().expect("4 columns");
                let av = [a0[p], a1[p], a2[p], a3[p]];
                for r in 0..4 {
                    for s in 0..4 {
                        acc[r][s] += av[r] * bv[s];
                    }
                }
            }
            for (r, row) in acc.iter().enumerate() {
                let out = &mut c[(i0 + r) * n + j0..(i0 + r) * n + j0 + 4];
                for s in 0..4 {
                    out[s] += row[s];
                }
            }
            j0 += 4;
        }
        for j in j0..n {
            for (r, ar) in [a0, a1, a2, a3].into_iter().enumerate() {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += ar[p] * b[p * n + j];
                }
                c[(i0 + r) * n + j] += acc;
            }
        }
        i0 += 4;
    }
    for i in i0..m {
        let ar = &a[i * k..(i + 1) * k];
        let out = &mut c[i * n..(i + 1) * n];
        for (p, b_row) in b.chunks_exact(n).enumerate() {
            axpy(out, ar[p], b_row);
        }
    }
}

/// `y += x W` for row-major `W` (`x.len() x y.len()`), four rows at a time.
pub(crate) fn vec_mat_acc(y: &mut [f64], x: &[f64], w: &[f64]) {
    let n = y.len();
    debug_assert_eq!(w.len(), x.len() * n);
    let mut rows = w.chunks_exact(n);
    let mut xs = x.chunks_exact(4);
    for xb in xs.by_ref() {
        let (w0, w1, w2, w3) = (
            rows.next().expect("row"),
            rows.next().expect("row"),
            rows.next().expect("row"),
            rows.next().expect("row"),
        );
        for j in 0..n {
            y[j] += (xb[0] * w0[j] + xb[1] * w1[j]) + (xb[2] * w2[j] + xb[3] * w3[j]);
        }
    }
    for (&xv, row) in xs.remainder().iter().zip(rows) {
        axpy(y, xv, row);
    }
}

/// `out[k] = dot(W[k], v)` for row-major `W` (`out.len() x v.len()`).
pub(crate) fn mat_vec(w: &[f64], v: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), out.len() * v.len());
    for (o, row) in out.iter_mut().zip(w.chunks_exact(v.len())) {
        *o = dot(row, v);
    }
}

/// Transpose of a row-major `rows x cols` matrix.
pub(crate) fn transpose(rows: usize, cols: usize, a: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), rows * cols);
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_definition() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::from_vec(&[2, 2], vec![-1.0, -0.5, -3.0, -1e-9]).unwrap();
        assert!(relu(&neg).data().iter().all(|&v| v == 0.0));
        assert_eq!(relu(&neg).shape(), &[2, 2]);
    }

    #[test]
    fn relu_idempotent() {
        let x = Tensor::from_vec(&[5], vec![-2.0, 3.0, -0.1, 0.7, 0.0]).unwrap();
        assert_eq!(relu(&relu(&x)), relu(&x));
    }

    #[test]
    fn shape_checked() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        for (m, n, k) in [(1, 1, 1), (4, 4, 4), (5, 7, 3), (9, 13, 17), (3, 2, 0), (8, 64, 32)] {
            let a: Vec<f64> = (0..m * k).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
            let b: Vec<f64> = (0..k * n).map(|i| ((i * 5 + 1) % 13) as f64 * 0.25).collect();
            let mut c: Vec<f64> = (0..m * n).map(|i| i as f64).collect();
            let mut expected = c.clone();
            for i in 0..m {
                for j in 0..n {
                    for p in 0..k {
                        expected[i * n + j] += a[i * k + p] * b[p * n + j];
                    }
                }
            }
            matmul_acc(m, n, k, &a, &b, &mut c);
            for (x, y) in c.iter().zip(&expected) {
                assert!((x - y).abs() < 1e-9, "{m}x{n}x{k}");
            }
        }
    }

    #[test]
    fn vector_matrix_products() {
        let (m, n) = (7, 6);
        let w: Vec<f64> = (0..m * n).map(|i| ((i * 3) % 7) as f64 - 2.0).collect();
        let x: Vec<f64> = (0..m).map(|i| i as f64 * 0.5 - 1.0).collect();
        let mut y = vec![1.0; n];
        vec_mat_acc(&mut y, &x, &w);
        for j in 0..n {
            let naive: f64 = 1.0 + (0..m).map(|i| x[i] * w[i * n + j]).sum::<f64>();
            assert!((y[j] - naive).abs() < 1e-12);
        }
        let v: Vec<f64> = (0..n).map(|j| j as f64).collect();
        let mut out = vec![0.0; m];
        mat_vec(&w, &v, &mut out);
        for i in 0..m {
            let naive: f64 = (0..n).map(|j| w[i * n + j] * v[j]).sum();
            assert!((out[i] - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_round_trip() {
        let a: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let t = transpose(3, 4, &a);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[1 * 3 + 2], a[2 * 4 + 1]);
        assert_eq!(transpose(4, 3, &t), a);
    }
}
