//! Dense row-major `f32` tensors and the handful of linear-algebra kernels
//! the rest of the crate is built on.
//!
//! Products are accumulated in `f64` and rounded once on the way out. Every
//! public operation checks its output for NaN/Inf and reports it as an
//! error rather than propagating a poisoned value.

use std::fmt;

use crate::error::{Error, Result};

/// Default `eps` for [`layer_norm`].
pub const LAYER_NORM_EPS: f32 = 1e-6;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{:?} ", self.shape)?;
        f.debug_list().entries(self.data.iter().take(PREVIEW)).finish()?;
        if self.data.len() > PREVIEW {
            write!(f, "..")?;
        }
        Ok(())
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::Shape("tensor rank must be at least 1".into()));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!("zero extent in shape {shape:?}")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Shape(format!("element count of {shape:?} overflows")))
}

pub(crate) fn ensure_finite(data: &[f32], what: &str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

impl Tensor {
    /// Builds a tensor, rejecting length mismatches and non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        ensure_finite(&data, "Tensor::new")?;
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let n = check_shape(shape).expect("invalid shape");
        assert!(value.is_finite());
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f32) -> Self {
        let n = check_shape(shape).expect("invalid shape");
        let data: Vec<f32> = (0..n).map(&mut f).collect();
        assert!(data.iter().all(|v| v.is_finite()), "from_fn produced a non-finite value");
        Self { shape: shape.to_vec(), data }
    }

    pub fn vector(data: Vec<f32>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn eye(n: usize) -> Self {
        Self::from_fn(&[n, n], |i| if i / n == i % n { 1.0 } else { 0.0 })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable access to the raw buffer. Callers must keep values finite.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn last_dim(&self) -> usize {
        *self.shape.last().expect("rank >= 1")
    }

    /// (rows, cols) of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Shape(format!("expected a matrix, got shape {:?}", self.shape))),
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let c = self.last_dim();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        let c = self.last_dim();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        Ok(Self { shape, data: self.data })
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0f32; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self { shape: vec![c, r], data: out })
    }

    /// Elementwise `self + other` (identical shapes).
    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, s: f32) -> Result<Self> {
        let data: Vec<f32> = self.data.iter().map(|v| v * s).collect();
        ensure_finite(&data, "scale")?;
        Ok(Self { shape: self.shape.clone(), data })
    }

    fn zip_with(&self, other: &Tensor, op: &str, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{op}: {:?} vs {:?}", self.shape, other.shape)));
        }
        let data: Vec<f32> = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        ensure_finite(&data, op)?;
        Ok(Self { shape: self.shape.clone(), data })
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f32, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("axpy: {:?} vs {:?}", self.shape, other.shape)));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        ensure_finite(&self.data, "axpy")
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    pub fn norm_l2(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }

    /// Rows `range` of a matrix as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        let (r, c) = self.dims2()?;
        if start >= end || end > r {
            return Err(Error::Shape(format!("row range {start}..{end} of {r}")));
        }
        Ok(Self { shape: vec![end - start, c], data: self.data[start * c..end * c].to_vec() })
    }

    /// Stacks equally wide rows into a matrix.
    pub fn stack_rows<'a>(rows: impl IntoIterator<Item = &'a [f32]>) -> Result<Self> {
        let mut data = Vec::new();
        let mut width = None;
        let mut n = 0;
        for row in rows {
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::Shape(format!("stack_rows: width {} vs {w}", row.len())))
                }
                _ => {}
            }
            data.extend_from_slice(row);
            n += 1;
        }
        let w = width.ok_or_else(|| Error::Shape("stack_rows: no rows".into()))?;
        Self::new(vec![n, w], data)
    }
}

#[derive(Clone, Copy)]
enum Layout {
    Normal,
    Transposed,
}

/// `op(a) · op(b)` where `op` optionally transposes. Inputs are widened to
/// `f64` so the inner products accumulate in double precision.
fn gemm(a: &Tensor, ta: Layout, b: &Tensor, tb: Layout, what: &str) -> Result<Tensor> {
    let (ar, ac) = a.dims2()?;
    let (br, bc) = b.dims2()?;
    let (m, k) = match ta {
        Layout::Normal => (ar, ac),
        Layout::Transposed => (ac, ar),
    };
    let (k2, n) = match tb {
        Layout::Normal => (br, bc),
        Layout::Transposed => (bc, br),
    };
    if k != k2 {
        return Err(Error::Shape(format!(
            "{what}: inner dimensions disagree ({:?} x {:?})",
            a.shape, b.shape
        )));
    }
    let a64: Vec<f64> = a.data.iter().map(|&v| v as f64).collect();
    let b64: Vec<f64> = b.data.iter().map(|&v| v as f64).collect();
    let mut c64 = vec![0.0f64; m * n];
    // Strides of op(a) and op(b) in element units.
    let (rsa, csa) = match ta {
        Layout::Normal => (ac as isize, 1),
        Layout::Transposed => (1, ac as isize),
    };
    let (rsb, csb) = match tb {
        Layout::Normal => (bc as isize, 1),
        Layout::Transposed => (1, bc as isize),
    };
    // SAFETY: the strides above describe exactly the buffers `a64` (ar x ac)
    // and `b64` (br x bc) viewed as m x k and k x n; `c64` is m x n row-major.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a64.as_ptr(),
            rsa,
            csa,
            b64.as_ptr(),
            rsb,
            csb,
            0.0,
            c64.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    let data: Vec<f32> = c64.into_iter().map(|v| v as f32).collect();
    ensure_finite(&data, what)?;
    Ok(Tensor { shape: vec![m, n], data })
}

/// Matrix product `a · b` for `a: m×k`, `b: k×n`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    gemm(a, Layout::Normal, b, Layout::Normal, "matmul")
}

/// `aᵀ · b` without materialising the transpose.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    gemm(a, Layout::Transposed, b, Layout::Normal, "matmul_tn")
}

/// `a · bᵀ` without materialising the transpose.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    gemm(a, Layout::Normal, b, Layout::Transposed, "matmul_nt")
}

/// Adds `bias` (length = last dim) to every row.
pub fn add_row_vector(x: &mut Tensor, bias: &Tensor) -> Result<()> {
    let c = x.last_dim();
    if bias.len() != c {
        return Err(Error::Shape(format!("bias of {} for rows of {c}", bias.len())));
    }
    for row in x.data.chunks_mut(c) {
        for (v, &b) in row.iter_mut().zip(&bias.data) {
            *v += b;
        }
    }
    ensure_finite(&x.data, "add_row_vector")
}

/// Column sums of a matrix, accumulated in `f64`.
pub fn sum_rows(x: &Tensor) -> Result<Tensor> {
    let (r, c) = x.dims2()?;
    let mut acc = vec![0.0f64; c];
    for i in 0..r {
        for (a, &v) in acc.iter_mut().zip(x.row(i)) {
            *a += v as f64;
        }
    }
    Tensor::vector(acc.into_iter().map(|v| v as f32).collect())
}

fn softmax_slice(src: &[f32], inv_t: f64, dst: &mut [f32]) {
    let max = src.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64 * inv_t));
    let mut sum = 0.0f64;
    let mut tmp = Vec::with_capacity(src.len());
    for &v in src {
        let e = (v as f64 * inv_t - max).exp();
        sum += e;
        tmp.push(e);
    }
    for (d, e) in dst.iter_mut().zip(tmp) {
        *d = (e / sum) as f32;
    }
}

/// Softmax over the last axis of `x / temperature`, max-stabilised.
pub fn softmax_last_dim(x: &Tensor, temperature: f32) -> Result<Tensor> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "softmax temperature must be positive, got {temperature}"
        )));
    }
    let c = x.last_dim();
    let inv_t = 1.0 / temperature as f64;
    let mut out = x.clone();
    for (src, dst) in x.data.chunks(c).zip(out.data.chunks_mut(c)) {
        softmax_slice(src, inv_t, dst);
    }
    ensure_finite(&out.data, "softmax_last_dim")?;
    Ok(out)
}

/// Per-row layer normalisation statistics, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LayerNormCache {
    /// Normalised input, before the affine transform.
    pub normalized: Tensor,
    /// `1/sqrt(var + eps)` per row; zero marks a zero-variance row.
    pub inv_std: Vec<f32>,
}

/// Normalises each last-axis slice to zero mean and unit variance, then
/// applies `gamma * x + beta`. A slice with `var + eps == 0` maps to `beta`.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor> {
    layer_norm_cached(x, gamma, beta, eps).map(|(y, _)| y)
}

pub fn layer_norm_cached(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f32,
) -> Result<(Tensor, LayerNormCache)> {
    let c = x.last_dim();
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Shape(format!(
            "layer_norm: gamma {:?} / beta {:?} against last dim {c}",
            gamma.shape, beta.shape
        )));
    }
    let rows = x.len() / c;
    let mut out = x.clone();
    let mut normalized = x.clone();
    let mut inv_std = Vec::with_capacity(rows);
    for r in 0..rows {
        let src = &x.data[r * c..(r + 1) * c];
        let mean = src.iter().map(|&v| v as f64).sum::<f64>() / c as f64;
        let var = src.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / c as f64;
        let denom = var + eps as f64;
        let rstd = if denom > 0.0 { 1.0 / denom.sqrt() } else { 0.0 };
        inv_std.push(rstd as f32);
        for j in 0..c {
            let xh = ((src[j] as f64 - mean) * rstd) as f32;
            normalized.data[r * c + j] = xh;
            out.data[r * c + j] = xh * gamma.data[j] + beta.data[j];
        }
    }
    ensure_finite(&out.data, "layer_norm")?;
    Ok((out, LayerNormCache { normalized, inv_std }))
}

/// Cholesky factorisation `a = L·Lᵀ` of a row-major `n×n` matrix, in place
/// (lower triangle). Fails on a non-positive pivot.
pub(crate) fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    let scale = (0..n).fold(0.0f64, |m, i| m.max(a[i * n + i].abs())).max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > scale * 1e-13) {
            return Err(Error::NotPositiveDefinite { row: j, pivot: d });
        }
        let ljj = d.sqrt();
        a[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
    }
    Ok(())
}

/// Solves `L·Lᵀ x = b` for `k` right-hand sides stored row-major in `b`
/// (`n×k`), overwriting `b` with the solution.
pub(crate) fn cholesky_solve_in_place(l: &[f64], n: usize, b: &mut [f64], k: usize) {
    for col in 0..k {
        for i in 0..n {
            let mut s = b[i * k + col];
            for j in 0..i {
                s -= l[i * n + j] * b[j * k + col];
            }
            b[i * k + col] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i * k + col];
            for j in i + 1..n {
                s -= l[j * n + i] * b[j * k + col];
            }
            b[i * k + col] = s / l[i * n + i];
        }
    }
}

/// Solves `a · x = b` for symmetric positive definite `a` by Cholesky
/// factorisation (no pivoting). Factorisation runs in `f64`.
pub fn solve_spd(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, n2) = a.dims2()?;
    if n != n2 {
        return Err(Error::Shape(format!("solve_spd: matrix {:?} is not square", a.shape)));
    }
    let (bn, k) = match b.shape[..] {
        [r] => (r, 1),
        [r, c] => (r, c),
        _ => return Err(Error::Shape(format!("solve_spd: rhs shape {:?}", b.shape))),
    };
    if bn != n {
        return Err(Error::Shape(format!("solve_spd: {:?} against rhs {:?}", a.shape, b.shape)));
    }
    let mut l: Vec<f64> = a.data.iter().map(|&v| v as f64).collect();
    cholesky_in_place(&mut l, n)?;
    let mut x: Vec<f64> = b.data.iter().map(|&v| v as f64).collect();
    cholesky_solve_in_place(&l, n, &mut x, k);
    let data: Vec<f32> = x.into_iter().map(|v| v as f32).collect();
    ensure_finite(&data, "solve_spd")?;
    Ok(Tensor { shape: b.shape.clone(), data })
}

/// Central-difference gradient of a scalar function.
///
/// The perturbed coordinates are rounded to `f32` before evaluation, so the
/// quotient uses the step actually taken rather than the nominal `2h`.
pub fn finite_difference_gradient<F>(mut f: F, x: &Tensor, h: f32) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = vec![0.0f32; x.len()];
    for i in 0..x.len() {
        let orig = x.data[i];
        let plus = orig + h;
        let minus = orig - h;
        probe.data[i] = plus;
        let fp = f(&probe)?;
        probe.data[i] = minus;
        let fm = f(&probe)?;
        probe.data[i] = orig;
        grad[i] = ((fp - fm) / (plus as f64 - minus as f64)) as f32;
    }
    ensure_finite(&grad, "finite_difference_gradient")?;
    Ok(Tensor { shape: x.shape.clone(), data: grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random(rng: &mut Rng, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| rng.normal() as f32)
    }

    fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
        let (m, k) = a.dims2().unwrap();
        let (_, n) = b.dims2().unwrap();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    out[i * n + j] += a.data()[i * k + p] as f64 * b.data()[p * n + j] as f64;
                }
            }
        }
        out
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut rng = Rng::new(1);
        let a = random(&mut rng, &[3, 3]);
        assert_eq!(matmul(&Tensor::eye(3), &a).unwrap(), a);

        let a = Tensor::matrix(2, 2, vec![1., 2., 3., 4.]).unwrap();
        let b = Tensor::matrix(2, 1, vec![1., 1.]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[3., 7.]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(7);
        let a = random(&mut rng, &[5, 7]);
        let b = random(&mut rng, &[7, 3]);
        let got = matmul(&a, &b).unwrap();
        for (g, e) in got.data().iter().zip(naive_matmul(&a, &b)) {
            assert!((*g as f64 - e).abs() < 1e-6, "{g} vs {e}");
        }
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let mut rng = Rng::new(3);
        let a = random(&mut rng, &[4, 6]);
        let b = random(&mut rng, &[4, 5]);
        let c = random(&mut rng, &[3, 6]);
        let tn = matmul_tn(&a, &b).unwrap();
        assert_eq!(tn, matmul(&a.transpose().unwrap(), &b).unwrap());
        let nt = matmul_nt(&a, &c).unwrap();
        assert_eq!(nt, matmul(&a, &c.transpose().unwrap()).unwrap());
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matches!(matmul(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_examples() {
        let x = Tensor::vector(vec![0.0, 0.0]).unwrap();
        assert_eq!(softmax_last_dim(&x, 1.0).unwrap().data(), &[0.5, 0.5]);
        let x = Tensor::vector(vec![2f32.ln(), 0.0]).unwrap();
        let y = softmax_last_dim(&x, 1.0).unwrap();
        assert!((y.data()[0] - 2.0 / 3.0).abs() < 1e-7);
        assert!((y.data()[1] - 1.0 / 3.0).abs() < 1e-7);
        assert!(softmax_last_dim(&x, 0.0).is_err());
        assert!(softmax_last_dim(&x, -1.0).is_err());
    }

    #[test]
    fn softmax_slices_sum_to_one() {
        let mut rng = Rng::new(11);
        for _ in 0..50 {
            let x = Tensor::from_fn(&[4, 9], |_| (rng.normal() * 10.0) as f32);
            let t = 10f32.powf(rng.uniform_range(-3.0, 3.0) as f32);
            let y = softmax_last_dim(&x, t).unwrap();
            for r in 0..4 {
                let s: f64 = y.row(r).iter().map(|&v| v as f64).sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn layer_norm_examples() {
        let one = Tensor::full(&[4], 1.0);
        let zero = Tensor::zeros(&[4]);
        let c = Tensor::full(&[4], 3.5);
        assert_eq!(layer_norm(&c, &one, &zero, LAYER_NORM_EPS).unwrap(), zero);
        // eps = 0: zero variance falls back to beta
        let beta = Tensor::vector(vec![0.5, -1., 2., 0.]).unwrap();
        assert_eq!(layer_norm(&c, &one, &beta, 0.0).unwrap(), beta);

        let x = Tensor::vector(vec![1.0, 3.0]).unwrap();
        let y = layer_norm(&x, &Tensor::full(&[2], 1.0), &Tensor::zeros(&[2]), 0.0).unwrap();
        assert_eq!(y.data(), &[-1.0, 1.0]);
        assert!(layer_norm(&x, &one, &zero, 0.0).is_err());
    }

    #[test]
    fn layer_norm_moments() {
        let mut rng = Rng::new(5);
        let x = Tensor::from_fn(&[6, 32], |_| (rng.normal() * 4.0 + 2.0) as f32);
        let gamma = Tensor::full(&[32], -1.5);
        let beta = Tensor::full(&[32], 0.25);
        let y = layer_norm(&x, &gamma, &beta, LAYER_NORM_EPS).unwrap();
        for r in 0..6 {
            let row = y.row(r);
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / 32.0;
            let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / 32.0;
            assert!((mean - 0.25).abs() < 1e-5);
            assert!((var.sqrt() - 1.5).abs() < 1e-4);
        }
    }

    #[test]
    fn solve_spd_examples() {
        let a = Tensor::eye(2).scale(2.0).unwrap();
        let b = Tensor::matrix(2, 1, vec![2.0, 4.0]).unwrap();
        assert_eq!(solve_spd(&a, &b).unwrap().data(), &[1.0, 2.0]);
        let b = Tensor::matrix(3, 2, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(solve_spd(&Tensor::eye(3), &b).unwrap(), b);
    }

    #[test]
    fn solve_spd_rejects_indefinite() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![1.0, 1.0]).unwrap();
        assert!(matches!(solve_spd(&a, &b), Err(Error::NotPositiveDefinite { .. })));
        let singular = Tensor::zeros(&[2, 2]);
        assert!(solve_spd(&singular, &b).is_err());
    }

    #[test]
    fn solve_spd_residual_on_random_systems() {
        let mut rng = Rng::new(17);
        for &n in &[1usize, 5, 40, 256] {
            let g = random(&mut rng, &[n, n]);
            let a = matmul_tn(&g, &g).unwrap().add(&Tensor::eye(n)).unwrap();
            let b = random(&mut rng, &[n, 2]);
            let x = solve_spd(&a, &b).unwrap();
            let r = matmul(&a, &x).unwrap().sub(&b).unwrap();
            let rel = r.max_abs() / b.max_abs().max(1.0);
            assert!(rel < 1e-4, "n={n}: residual {rel}");
        }
    }

    #[test]
    fn finite_difference_examples() {
        let mut rng = Rng::new(2);
        let x = random(&mut rng, &[6]);
        let half_sq = |t: &Tensor| Ok(0.5 * t.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>());
        let g = finite_difference_gradient(half_sq, &x, 1e-2).unwrap();
        for (gi, xi) in g.data().iter().zip(x.data()) {
            assert!((gi - xi).abs() < 1e-4);
        }
        let sum = |t: &Tensor| Ok(t.data().iter().map(|&v| v as f64).sum::<f64>());
        let g = finite_difference_gradient(sum, &x, 1e-2).unwrap();
        assert!(g.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
        assert!(finite_difference_gradient(sum, &x, 0.0).is_err());
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::new(vec![1], vec![f32::NAN]).is_err());
        assert!(Tensor::new(vec![], vec![]).is_err());
    }

    mod props {
        use super::*;
        use crate::rng::Rng;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn matmul_is_associative(seed in any::<u64>(), m in 1usize..8, k in 1usize..8, n in 1usize..8, p in 1usize..8) {
                let mut rng = Rng::new(seed);
                let a = random(&mut rng, &[m, k]);
                let b = random(&mut rng, &[k, n]);
                let c = random(&mut rng, &[n, p]);
                let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
                let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
                let scale = left.max_abs().max(1.0);
                prop_assert!(left.sub(&right).unwrap().max_abs() / scale < 1e-4);
            }

            #[test]
            fn softmax_positive_and_normalised(seed in any::<u64>(), width in 1usize..32, log_t in -3.0f64..3.0) {
                let mut rng = Rng::new(seed);
                let t = 10f64.powf(log_t);
                // Spread bounded so every exp(-(max - x)/t) stays above f32 underflow.
                let spread = 60.0 * t;
                let x = Tensor::from_fn(&[3, width], |_| (rng.uniform() * spread) as f32);
                let y = softmax_last_dim(&x, t as f32).unwrap();
                prop_assert!(y.data().iter().all(|&v| v > 0.0));
                for r in 0..3 {
                    let s: f64 = y.row(r).iter().map(|&v| v as f64).sum();
                    prop_assert!((s - 1.0).abs() < 1e-6);
                }
            }
        }
    }
}
