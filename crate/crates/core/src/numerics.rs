//! Dense complex linear algebra, the complex-to-real embedding used by the
//! conic solver, and the seeded randomness contract.
//!
//! Everything here is plain value semantics. Matrices are row-major; the
//! problem sizes in this crate (a handful of antennas, at most a few hundred
//! reflecting elements) never justify sparse storage.

use std::ops::{Add, Index, IndexMut, Sub};

use nalgebra::DMatrix;
pub use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// A dense complex column vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComplexVec(Vec<Complex64>);

impl ComplexVec {
    pub fn zeros(len: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> Complex64) -> Self {
        Self((0..len).map(f).collect())
    }

    /// Builds a vector from interleaved real and imaginary parts
    /// (`re` and `im` must have equal length).
    pub fn from_parts(re: &[f64], im: &[f64]) -> Self {
        assert_eq!(re.len(), im.len());
        Self(re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex64> {
        self.0.iter()
    }

    /// Returns `selfᴴ other`.
    pub fn hermitian_product(&self, other: &ComplexVec) -> Result<Complex64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                op: "hermitian_product",
                left: (self.len(), 1),
                right: (other.len(), 1),
            });
        }
        Ok(self.dot_conj_unchecked(other))
    }

    pub(crate) fn dot_conj_unchecked(&self, other: &ComplexVec) -> Complex64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, s: f64) -> ComplexVec {
        Self(self.0.iter().map(|z| z * s).collect())
    }

    pub fn scale_complex(&self, s: Complex64) -> ComplexVec {
        Self(self.0.iter().map(|z| z * s).collect())
    }

    pub fn conj(&self) -> ComplexVec {
        Self(self.0.iter().map(|z| z.conj()).collect())
    }

    pub fn re(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.im).collect()
    }

    /// Unit vector in the same direction, or the zero vector if the norm is zero.
    pub fn normalized(&self) -> ComplexVec {
        let n = self.norm();
        if n > 0.0 {
            self.scale(1.0 / n)
        } else {
            ComplexVec::zeros(self.len())
        }
    }
}

impl From<Vec<Complex64>> for ComplexVec {
    fn from(v: Vec<Complex64>) -> Self {
        Self(v)
    }
}

impl Index<usize> for ComplexVec {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ComplexVec {
    fn index_mut(&mut self, i: usize) -> &mut Complex64 {
        &mut self.0[i]
    }
}

impl Add for &ComplexVec {
    type Output = ComplexVec;
    fn add(self, rhs: &ComplexVec) -> ComplexVec {
        assert_eq!(self.len(), rhs.len(), "vector add: length mismatch");
        ComplexVec(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &ComplexVec {
    type Output = ComplexVec;
    fn sub(self, rhs: &ComplexVec) -> ComplexVec {
        assert_eq!(self.len(), rhs.len(), "vector sub: length mismatch");
        ComplexVec(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

/// A dense, row-major complex matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "from_row_major",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Diagonal matrix with `d` on the diagonal.
    pub fn diag(d: &ComplexVec) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, z) in d.iter().enumerate() {
            m[(i, i)] = *z;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> ComplexMat {
        ComplexMat::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn mul_mat(&self, rhs: &ComplexMat) -> Result<ComplexMat> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch {
                op: "mul_mat",
                left: self.dims(),
                right: rhs.dims(),
            });
        }
        let mut out = ComplexMat::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let rhs_row = rhs.row(k);
                let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · x`.
    pub fn mul_vec(&self, x: &ComplexVec) -> Result<ComplexVec> {
        if self.cols != x.len() {
            return Err(Error::DimensionMismatch {
                op: "mul_vec",
                left: self.dims(),
                right: (x.len(), 1),
            });
        }
        Ok(ComplexVec::from_fn(self.rows, |r| {
            self.row(r)
                .iter()
                .zip(x.iter())
                .fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a * b)
        }))
    }

    /// `selfᴴ · x`, without materializing the adjoint.
    pub fn adjoint_mul_vec(&self, x: &ComplexVec) -> Result<ComplexVec> {
        if self.rows != x.len() {
            return Err(Error::DimensionMismatch {
                op: "adjoint_mul_vec",
                left: (self.cols, self.rows),
                right: (x.len(), 1),
            });
        }
        let mut out = ComplexVec::zeros(self.cols);
        for r in 0..self.rows {
            let xr = x[r];
            for (c, a) in self.row(r).iter().enumerate() {
                out[c] += a.conj() * xr;
            }
        }
        Ok(out)
    }

    /// `diag(d) · self`, i.e. row `r` scaled by `d[r]`.
    pub fn scale_rows(&self, d: &ComplexVec) -> Result<ComplexMat> {
        if d.len() != self.rows {
            return Err(Error::DimensionMismatch {
                op: "scale_rows",
                left: (d.len(), d.len()),
                right: self.dims(),
            });
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            let s = d[r];
            for z in &mut out.data[r * self.cols..(r + 1) * self.cols] {
                *z *= s;
            }
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &ComplexMat) -> f64 {
        assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for ComplexMat {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Maps a complex `m × n` matrix to the real `2m × 2n` matrix
/// `[[Re M, −Im M], [Im M, Re M]]`.
///
/// A complex vector `x` is embedded as `[Re x; Im x]`, so that
/// `embed(M) · [Re x; Im x] = [Re(Mx); Im(Mx)]`. The conic solver only ever
/// sees complex quantities through this convention.
pub fn complex_to_real_embedding(m: &ComplexMat) -> DMatrix<f64> {
    let (rows, cols) = m.dims();
    let mut out = DMatrix::zeros(2 * rows, 2 * cols);
    for r in 0..rows {
        for c in 0..cols {
            let z = m[(r, c)];
            out[(r, c)] = z.re;
            out[(r, cols + c)] = -z.im;
            out[(rows + r, c)] = z.im;
            out[(rows + r, cols + c)] = z.re;
        }
    }
    out
}

/// Stacks a complex vector as `[Re x; Im x]`.
pub fn stack_real(x: &ComplexVec) -> Vec<f64> {
    let mut out = x.re();
    out.extend(x.im());
    out
}

/// A reproducible random stream identified by `(seed, stream id)`.
///
/// Two streams built from the same pair yield identical draw sequences; the
/// stream id selects an independent ChaCha keystream so that, for example,
/// arrivals and channel draws never share state.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    /// Builds a stream whose id is derived from a path of labels, e.g.
    /// `(repetition, slot, purpose)`.
    pub fn derived(seed: u64, path: &[u64]) -> Self {
        Self::new(seed, stream_id(path))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        // p = 1 must always fire and p = 0 never.
        self.uniform() < p
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// One circularly-symmetric complex Gaussian draw with unit variance.
    pub fn cn(&mut self) -> Complex64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let re = self.standard_normal() * s;
        let im = self.standard_normal() * s;
        Complex64::new(re, im)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Folds a label path into a 64-bit stream id (splitmix64 mixing).
pub fn stream_id(path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter()
        .fold(0x5DEE_CE66_D1CE_4E5Bu64, |acc, &p| mix(acc ^ mix(p)))
}

/// Draws a `rows × cols` matrix with i.i.d. CN(0, 1) entries in row-major order.
///
/// Row-major order means a matrix with more rows extends (rather than
/// reshuffles) one drawn with fewer rows from the same stream.
pub fn sample_cn(rows: usize, cols: usize, rng: &mut RngStream) -> Result<ComplexMat> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!(
            "sample_cn: dimensions must be positive, got {rows}x{cols}"
        )));
    }
    Ok(ComplexMat::from_fn(rows, cols, |_, _| rng.cn()))
}

/// Draws a length-`len` vector with i.i.d. CN(0, 1) entries.
pub fn sample_cn_vec(len: usize, rng: &mut RngStream) -> ComplexVec {
    ComplexVec::from_fn(len, |_| rng.cn())
}
