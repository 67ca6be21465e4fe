//! Dense linear algebra, activations, loss and seeded random numbers.
//!
//! All products accumulate each output element over the inner index in
//! ascending order, starting from zero. That fixed order is what makes
//! `(A·B)ᵀ` and `Bᵀ·Aᵀ` bit-identical and lets the sparse feedback path
//! reproduce the dense one exactly.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{AddAssign, DivAssign, Index, IndexMut, MulAssign, SubAssign};
use core::str::FromStr;

use num_traits::Float;
use rand::{Rng as _, RngCore as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Floating point element type. Training uses `f32`, diagnostics `f64`.
pub trait Scalar:
    Float + Default + fmt::Debug + fmt::Display + Send + Sync + 'static + AddAssign + SubAssign + MulAssign + DivAssign
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Input(alloc::format!(
                "matrix data has {} elements, expected {}x{} = {}",
                data.len(),
                rows,
                cols,
                rows * cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Input(alloc::format!("ragged rows: {} vs {}", r.len(), cols)));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    /// A single-column matrix holding `v`.
    pub fn column(v: &[T]) -> Self {
        Matrix { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column_values(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Matrix<T>) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::shape("matmul", self.shape(), rhs.shape()));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in a_row.iter().enumerate() {
                axpy(out_row, a, rhs.row(k));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    pub fn tr_matmul(&self, rhs: &Matrix<T>) -> Result<Self> {
        if self.rows != rhs.rows {
            return Err(Error::shape("tr_matmul", (self.cols, self.rows), rhs.shape()));
        }
        let mut out = Self::zeros(self.cols, rhs.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = rhs.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                axpy(&mut out.data[i * rhs.cols..(i + 1) * rhs.cols], a, b_row);
            }
        }
        Ok(out)
    }

    /// Element-wise product.
    pub fn hadamard(&self, rhs: &Matrix<T>) -> Result<Self> {
        if self.shape() != rhs.shape() {
            return Err(Error::shape("hadamard", self.shape(), rhs.shape()));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a * b).collect();
        Ok(Matrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self -= s · rhs`.
    pub fn sub_scaled(&mut self, s: T, rhs: &Matrix<T>) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::shape("sub_scaled", self.shape(), rhs.shape()));
        }
        axpy(&mut self.data, -s, &rhs.data);
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| U::of(v.as_f64())).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm_sqrt(self.data.iter().map(|&v| v.as_f64() * v.as_f64()).sum())
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (y, &x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

#[inline]
fn libm_sqrt(v: f64) -> f64 {
    Float::sqrt(v)
}

/// Free-function form of [`Matrix::matmul`].
pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    a.matmul(b)
}

pub fn transpose<T: Scalar>(a: &Matrix<T>) -> Matrix<T> {
    a.transpose()
}

/// Element-wise product of two vectors.
pub fn hadamard<T: Scalar>(a: &[T], b: &[T]) -> Result<Vec<T>> {
    if a.len() != b.len() {
        return Err(Error::shape("hadamard", (a.len(), 1), (b.len(), 1)));
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| x * y).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Tanh => y.tanh(),
            Activation::Relu => y.max(T::zero()),
            Activation::Linear => y,
        }
    }

    /// `f'(y)` expressed through the activation value `a = f(y)`.
    #[inline]
    pub fn derivative<T: Scalar>(self, a: T) -> T {
        match self {
            Activation::Tanh => T::one() - a * a,
            Activation::Relu => {
                if a > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Linear => T::one(),
        }
    }

    pub fn forward<T: Scalar>(self, y: &[T]) -> Vec<T> {
        y.iter().map(|&v| self.apply(v)).collect()
    }

    pub fn deriv<T: Scalar>(self, a: &[T]) -> Vec<T> {
        a.iter().map(|&v| self.derivative(v)).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "linear" | "identity" => Ok(Activation::Linear),
            other => Err(Error::Config(alloc::format!("unknown activation '{other}'"))),
        }
    }
}

/// Softmax cross-entropy of logits `y` against `label`.
///
/// Returns the loss and the output error `softmax(y) - onehot(label)`.
pub fn softmax_xent<T: Scalar>(y: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= y.len() {
        return Err(Error::Input(alloc::format!("label {label} out of range for {} classes", y.len())));
    }
    let mut e = vec![T::zero(); y.len()];
    let loss = softmax_xent_into(y, label, &mut e);
    Ok((loss, e))
}

/// Like [`softmax_xent`] but writes the error into `e`. `label` must be in
/// range.
pub(crate) fn softmax_xent_into<T: Scalar>(y: &[T], label: usize, e: &mut [T]) -> T {
    let max = y.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for (ei, &yi) in e.iter_mut().zip(y) {
        *ei = (yi - max).exp();
        sum += *ei;
    }
    for ei in e.iter_mut() {
        *ei /= sum;
    }
    e[label] -= T::one();
    sum.ln() - (y[label] - max)
}

/// I.i.d. uniform draws in `[-bound, bound]`, filled row-major.
///
/// Samples are drawn in `f64` and rounded, so `f32` and `f64` matrices from
/// the same stream agree to single precision.
pub fn init_uniform<T: Scalar>(rows: usize, cols: usize, bound: f64, rng: &mut Rng) -> Matrix<T> {
    assert!(bound > 0.0 && bound.is_finite(), "init bound must be positive, got {bound}");
    let data = (0..rows * cols).map(|_| T::of(rng.symmetric(bound))).collect();
    Matrix { rows, cols, data }
}

/// Purpose-specific random streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Weights,
    Feedback,
    Shuffle,
    Data,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Weights => 1,
            Stream::Feedback => 2,
            Stream::Shuffle => 3,
            Stream::Data => 4,
        }
    }
}

/// Seeded generator: ChaCha8 keyed through `rand_chacha`'s
/// `seed_from_u64`, which is specified to be platform independent.
#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream for `purpose` under `master`.
    pub fn stream(master: u64, purpose: Stream) -> Self {
        Rng::new(derive_seed(master, &[purpose.tag()]))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[lo, hi]`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.random_range(lo..=hi)
    }

    /// Uniform in `[-bound, bound]`.
    pub fn symmetric(&mut self, bound: f64) -> f64 {
        self.uniform(-bound, bound)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn coin(&mut self) -> bool {
        self.inner.random_bool(0.5)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a master seed and a key path into a child seed. Changing one key
/// never perturbs seeds derived from other keys.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(master), |h, &p| mix64(h ^ mix64(p)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        init_uniform(rows, cols, 1.0, &mut Rng::new(seed))
    }

    fn naive(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    #[test]
    fn identity_matmul() {
        let m = random(3, 4, 1);
        assert_eq!(Matrix::identity(3).matmul(&m).unwrap(), m);
    }

    #[test]
    fn small_product() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[[1.0], [1.0]]).unwrap();
        assert_eq!(a.matmul(&b).unwrap().as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(42);
        let a: Matrix<f64> = init_uniform(5, 4, 1.0, &mut rng);
        let b: Matrix<f64> = init_uniform(4, 3, 1.0, &mut rng);
        // Both accumulate over k in ascending order from zero.
        assert_eq!(a.matmul(&b).unwrap(), naive(&a, &b));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = random(2, 3, 1).matmul(&random(2, 3, 2)).unwrap_err();
        assert_eq!(err, Error::Shape { op: "matmul", left: (2, 3), right: (2, 3) });
        let msg = alloc::format!("{err}");
        assert!(msg.contains("2x3"), "{msg}");
    }

    #[test]
    fn tr_matmul_matches_explicit_transpose() {
        let a = random(6, 4, 3);
        let b = random(6, 5, 4);
        assert_eq!(a.tr_matmul(&b).unwrap(), a.transpose().matmul(&b).unwrap());
    }

    #[test]
    fn transpose_cases() {
        let m = random(3, 5, 9);
        assert_eq!(m.transpose().transpose(), m);
        let one = Matrix::from_rows(&[[2.5]]).unwrap();
        assert_eq!(one.transpose(), one);
        let r = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(r.transpose(), Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap());
    }

    #[test]
    fn product_transpose_is_bit_identical() {
        let a = random(4, 6, 5);
        let b = random(6, 3, 6);
        let lhs = a.matmul(&b).unwrap().transpose();
        let rhs = b.transpose().matmul(&a.transpose()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn hadamard_cases() {
        let a = [1.0, -2.0, 3.5];
        assert_eq!(hadamard(&a, &[1.0; 3]).unwrap(), a.to_vec());
        assert_eq!(hadamard(&a, &[0.0; 3]).unwrap(), alloc::vec![0.0; 3]);
        assert_eq!(hadamard(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), alloc::vec![3.0, 8.0]);
        assert!(matches!(hadamard(&[1.0], &[1.0, 2.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn activations() {
        assert_eq!(Activation::Tanh.apply(0.0f64), 0.0);
        assert_eq!(Activation::Tanh.derivative(0.0f64), 1.0);
        assert_eq!(Activation::Relu.forward(&[-1.0f64, 2.0]), alloc::vec![0.0, 2.0]);
        assert_eq!(Activation::Relu.deriv(&[0.0f64, 2.0]), alloc::vec![0.0, 1.0]);
        assert_eq!(Activation::Linear.derivative(7.0f64), 1.0);
        assert!(matches!("swish".parse::<Activation>(), Err(Error::Config(_))));
        assert_eq!("ReLU".parse::<Activation>().unwrap(), Activation::Relu);
    }

    #[test]
    fn tanh_derivative_matches_central_difference() {
        let y = 0.7f64;
        let h = 1e-6;
        let fd = (Activation::Tanh.apply(y + h) - Activation::Tanh.apply(y - h)) / (2.0 * h);
        let an = Activation::Tanh.derivative(Activation::Tanh.apply(y));
        assert!(((fd - an) / an).abs() < 1e-6, "fd {fd} analytic {an}");
    }

    #[test]
    fn softmax_uniform_logits() {
        let (loss, e) = softmax_xent(&[0.0f64; 10], 3).unwrap();
        assert!((loss - core::f64::consts::LN_10).abs() < 1e-15);
        for (i, &v) in e.iter().enumerate() {
            let want = if i == 3 { -0.9 } else { 0.1 };
            assert!((v - want).abs() < 1e-15, "e[{i}] = {v}");
        }
    }

    #[test]
    fn softmax_label_out_of_range() {
        assert!(matches!(softmax_xent(&[0.0f64; 3], 3), Err(Error::Input(_))));
    }

    #[test]
    fn softmax_gradient_matches_central_difference() {
        let mut rng = Rng::new(11);
        let y: Vec<f64> = (0..7).map(|_| rng.symmetric(3.0)).collect();
        let (_, e) = softmax_xent(&y, 4).unwrap();
        let h = 1e-5;
        for i in 0..y.len() {
            let mut p = y.clone();
            p[i] += h;
            let mut m = y.clone();
            m[i] -= h;
            let fd = (softmax_xent(&p, 4).unwrap().0 - softmax_xent(&m, 4).unwrap().0) / (2.0 * h);
            assert!(((fd - e[i]) / e[i]).abs() < 1e-6, "component {i}: fd {fd} analytic {}", e[i]);
        }
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let (loss, e) = softmax_xent(&[1000.0f64, 0.0, -1000.0], 0).unwrap();
        assert!(loss.is_finite() && loss.abs() < 1e-12);
        assert!(e.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn init_uniform_mnist_bound_and_range() {
        let bound = 1.0 / 400f64.sqrt();
        let w: Matrix<f32> = init_uniform(400, 784, bound, &mut Rng::new(0));
        assert_eq!(bound, 0.05);
        assert!(w.as_slice().iter().all(|&v| (v as f64).abs() <= bound + 1e-9));
    }

    #[test]
    fn init_uniform_mean_within_three_sigma() {
        let n = 1_000_000;
        let m: Matrix<f64> = init_uniform(1000, 1000, 1.0, &mut Rng::new(42));
        let mean = m.as_slice().iter().sum::<f64>() / n as f64;
        let sigma = 1.0 / (3.0 * n as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma, "mean {mean} sigma {sigma}");
    }

    #[test]
    fn rng_streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map({
            let mut r = Rng::stream(7, Stream::Weights);
            move |_| r.next_u64()
        }).collect();
        let b: Vec<u64> = (0..4).map({
            let mut r = Rng::stream(7, Stream::Weights);
            move |_| r.next_u64()
        }).collect();
        let mut other = Rng::stream(7, Stream::Feedback);
        assert_eq!(a, b);
        assert_ne!(a[0], other.next_u64());
    }

    #[test]
    fn derive_seed_depends_on_every_part() {
        let base = derive_seed(1, &[2, 3]);
        assert_ne!(base, derive_seed(1, &[2, 4]));
        assert_ne!(base, derive_seed(1, &[3, 2]));
        assert_ne!(base, derive_seed(2, &[2, 3]));
    }
}
