//! Small dense numerical kernel: matrices, linear maps, a gated recurrent
//! cell, categorical sampling and a splittable RNG.

mod cell;
mod rng;

pub use cell::GatedCellParams;
pub use rng::SplitRng;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<(), MathError> {
    if expected == got {
        Ok(())
    } else {
        Err(MathError::DimensionMismatch { context, expected, got })
    }
}

pub(crate) fn check_finite(context: &'static str, xs: &[f32]) -> Result<(), MathError> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MathError::NonFinite { context })
    }
}

/// Row-major dense matrix of `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, MathError> {
        check_dim("Mat::from_vec", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    /// `out = self * x + bias`, no allocation.
    pub(crate) fn affine_into(&self, bias: &[f32], x: &[f32], out: &mut [f32]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, (o, b)) in out.iter_mut().zip(bias).enumerate() {
            *o = b + dot(self.row(r), x);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// `y = W x + b`.
pub fn linear(w: &Mat, b: &[f32], x: &[f32]) -> Result<Vec<f32>, MathError> {
    check_dim("linear: input", w.cols(), x.len())?;
    check_dim("linear: bias", w.rows(), b.len())?;
    let mut y = vec![0.0; w.rows()];
    w.affine_into(b, x, &mut y);
    check_finite("linear", &y)?;
    Ok(y)
}

/// Numerically stable softmax (max is subtracted before exponentiating).
pub fn softmax(logits: &[f32]) -> Result<Vec<f32>, MathError> {
    check_finite("softmax: logits", logits)?;
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut p: Vec<f32> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f32 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    Ok(p)
}

/// Inverse-CDF draw from `probs` given a uniform `u` in `[0, 1)`.
///
/// Exposed separately so two rollouts can share the same uniform draw.
pub fn categorical_from_uniform(probs: &[f32], u: f32) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the accumulated mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Sample an action from unnormalised logits; returns the action and its log-probability.
pub fn softmax_sample(logits: &[f32], rng: &mut SplitRng) -> Result<(usize, f32), MathError> {
    let probs = softmax(logits)?;
    let action = categorical_from_uniform(&probs, rng.uniform());
    Ok((action, probs[action].ln()))
}

/// Glorot (Xavier) normal initialisation: entries ~ N(0, 2 / (rows + cols)).
pub fn glorot_normal(rows: usize, cols: usize, rng: &mut SplitRng) -> Mat {
    let std = (2.0 / (rows + cols) as f32).sqrt();
    let mut m = Mat::zeros(rows, cols);
    rng.fill_normal(m.as_mut_slice(), std);
    m
}
