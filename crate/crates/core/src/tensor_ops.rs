// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense row-major matrices, the handful of kernels the model needs, and the
//! seeded random stream used for weights and token sampling.
//!
//! All arithmetic is `f64`.
//!
//! # Random stream
//!
//! [`Prng`] is ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`). A 64-bit
//! seed is expanded to the 256-bit key with `SeedableRng::seed_from_u64`
//! (the PCG32-based expansion defined by `rand_core` 0.9). Real numbers are
//! drawn as `(next_u64 >> 11) * 2^-53`, giving a uniform value on `[0, 1)`
//! with 53 bits of precision. The stream is platform independent.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a categorical distribution.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

/// Row-major matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::InvalidMatrix(format!(
                "{rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite value {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Matrix with entries uniform on `[-bound, bound)`, drawn row by row.
    pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut Prng) -> Self {
        let data = (0..rows * cols)
            .map(|_| (2.0 * rng.next_f64() - 1.0) * bound)
            .collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, and a 0-column matrix has no meaningful rows
        // to hand out anyway.
        let chunk = self.cols.max(1);
        self.data
            .chunks_exact(chunk)
            .take(if self.cols == 0 { 0 } else { self.rows })
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Standard matrix product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "matmul",
            detail: format!("{}x{} times {}x{}", a.rows, a.cols, b.rows, b.cols),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Row vector times matrix, `v · m`. Panics on a length mismatch; the model
/// only calls it with shapes fixed at construction.
pub(crate) fn vec_mat(v: &[f64], m: &Matrix) -> Vec<f64> {
    assert_eq!(v.len(), m.rows, "vec_mat: vector length vs matrix rows");
    let mut out = vec![0.0; m.cols];
    for (k, &vk) in v.iter().enumerate() {
        for (o, &mkj) in out.iter_mut().zip(m.row(k)) {
            *o += vk * mkj;
        }
    }
    out
}

/// In-place softmax of `row * scale`, stabilised by subtracting the row max.
pub fn softmax_in_place(row: &mut [f64], scale: f64) {
    if row.is_empty() {
        return;
    }
    let max = row
        .iter()
        .map(|&v| v * scale)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v * scale - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Row-wise softmax of `m * scale`.
pub fn softmax_rows(m: &Matrix, scale: f64) -> Matrix {
    let mut out = m.clone();
    if out.cols > 0 {
        for row in out.data.chunks_exact_mut(out.cols) {
            softmax_in_place(row, scale);
        }
    }
    out
}

/// Normalises `v` to zero mean and unit variance (population variance plus
/// `eps`), then applies `gain` and `bias` elementwise.
pub fn layer_norm(v: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Result<Vec<f64>> {
    if gain.len() != v.len() || bias.len() != v.len() {
        return Err(Error::DimensionMismatch {
            op: "layer_norm",
            detail: format!(
                "input {}, gain {}, bias {}",
                v.len(),
                gain.len(),
                bias.len()
            ),
        });
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "layer_norm eps must be > 0, got {eps}"
        )));
    }
    if v.is_empty() {
        return Ok(Vec::new());
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    Ok(v.iter()
        .zip(gain.iter().zip(bias))
        .map(|(x, (g, b))| (x - mean) * inv * g + b)
        .collect())
}

/// Seeded pseudo-random stream. See the module docs for the exact algorithm.
#[derive(Debug, Clone)]
pub struct Prng {
    inner: ChaCha8Rng,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`; `n` must be nonzero.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        // Lemire's multiply-shift; the bias is below 2^-64 * n, irrelevant here.
        ((self.inner.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

/// Draws one index from `probs` using a single uniform from `rng`.
///
/// The draw `u` selects the first index whose cumulative probability exceeds
/// `u`. If accumulated rounding leaves `u` past the end, the last index with
/// nonzero mass is returned.
pub fn sample_categorical(probs: &[f64], rng: &mut Prng) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::InvalidDistribution("empty distribution".into()));
    }
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "entry {p} is negative or non-finite"
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(Error::InvalidDistribution(format!(
            "probabilities sum to {total}"
        )));
    }
    let u = rng.next_f64();
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum && p > 0.0 {
            return Ok(i);
        }
    }
    Ok(probs
        .iter()
        .rposition(|&p| p > 0.0)
        .expect("a distribution summing to one has a positive entry"))
}
