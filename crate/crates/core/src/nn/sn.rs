//! Spectral normalization by power iteration.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Result of [`spectral_normalize`].
#[derive(Clone, Debug, PartialEq)]
pub struct Normalized<T> {
    pub weight: Tensor<T>,
    pub u: Tensor<T>,
    pub sigma: f64,
    /// Set when the weight is all zeros; `weight` is then returned unchanged.
    pub degenerate: bool,
}

/// `(rows, cols)` of the weight viewed as a matrix `out x (in*spatial)`.
pub fn matrix_dims(shape: &[usize]) -> (usize, usize) {
    let rows = shape[0];
    (rows, shape[1..].iter().product())
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// `W^T u`, length `cols`.
pub(crate) fn wt_u(w: &[f64], u: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (r, &ur) in u.iter().enumerate() {
        for (o, &wv) in out.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *o += wv * ur;
        }
    }
    out
}

fn w_v(w: &[f64], v: &[f64], rows: usize) -> Vec<f64> {
    let cols = v.len();
    (0..rows)
        .map(|r| {
            w[r * cols..(r + 1) * cols]
                .iter()
                .zip(v)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

pub(crate) fn start_vector(u: &[f64]) -> Vec<f64> {
    let n = norm(u);
    if n > 0.0 {
        u.iter().map(|x| x / n).collect()
    } else {
        vec![1.0 / libm::sqrt(u.len() as f64); u.len()]
    }
}

/// Runs `iters` power iterations and returns `u` (unit, length `rows`), `v`, and the estimate `u^T W v`.
/// `None` when the weight annihilates the iterate.
pub(crate) fn power_iteration(
    w: &[f64],
    u: &[f64],
    rows: usize,
    iters: usize,
) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let cols = w.len() / rows;
    let mut u = start_vector(u);
    let mut v = vec![0.0; cols];
    for _ in 0..iters.max(1) {
        let wtu = wt_u(w, &u, cols);
        let n = norm(&wtu);
        if n == 0.0 {
            return None;
        }
        v = wtu.iter().map(|x| x / n).collect();
        let wv = w_v(w, &v, rows);
        let n = norm(&wv);
        if n == 0.0 {
            return None;
        }
        u = wv.iter().map(|x| x / n).collect();
    }
    let sigma = w_v(w, &v, rows).iter().zip(&u).map(|(a, b)| a * b).sum();
    Some((u, v, sigma))
}

/// Divides `weight` by the power-iteration estimate of its top singular value.
/// `u` is the persisted left vector (unit norm, or zeros to start fresh).
pub fn spectral_normalize<T: Real>(
    weight: &Tensor<T>,
    u: &Tensor<T>,
    iters: usize,
) -> Result<Normalized<T>> {
    if weight.rank() < 2 {
        return Err(Error::Shape(alloc::format!(
            "spectral norm needs rank >= 2, got {:?}",
            weight.shape()
        )));
    }
    let (rows, _) = matrix_dims(weight.shape());
    if u.len() != rows {
        return Err(Error::Shape(alloc::format!(
            "u has {} entries for {rows} rows",
            u.len()
        )));
    }
    let w: Vec<f64> = weight.data().iter().map(|v| v.to_f64()).collect();
    let u0: Vec<f64> = u.data().iter().map(|v| v.to_f64()).collect();
    match power_iteration(&w, &u0, rows, iters) {
        Some((u, _, sigma)) if sigma > 0.0 => Ok(Normalized {
            weight: weight.map(|x| T::from_f64(x.to_f64() / sigma)),
            u: Tensor::from_parts(vec![rows], u.into_iter().map(T::from_f64).collect()),
            sigma,
            degenerate: false,
        }),
        _ => Ok(Normalized {
            weight: weight.clone(),
            u: u.clone(),
            sigma: 0.0,
            degenerate: true,
        }),
    }
}
