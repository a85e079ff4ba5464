//! The adversarial objective and its auxiliary terms.
//!
//! Graph versions are what training differentiates. The tensor versions
//! evaluate the same formulas exactly and serve as references.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Added under the square root of the penalty's gradient norm.
pub const GP_EPS: f64 = 1e-12;
/// Added under the square root of the coordinate error norm.
pub const NORM_EPS: f64 = 1e-20;

/// `mean(d_real) - mean(d_fake)`.
pub fn wasserstein<T: Real>(g: &mut Graph<T>, d_real: NodeId, d_fake: NodeId) -> NodeId {
    let r = g.mean_all(d_real);
    let f = g.mean_all(d_fake);
    g.sub(r, f)
}

/// `mean((|dD/dx| - 1)^2)` with the gradient taken per sample. `score` must
/// depend on each sample of `x` independently, and the graph must be higher-order.
pub fn gradient_penalty<T: Real>(g: &mut Graph<T>, score: NodeId, x: NodeId) -> Result<NodeId> {
    let total = g.sum_all(score);
    let grad = g.grad(total, &[x])?.remove(0);
    let n = g.l2_norm_trailing(grad, 1, GP_EPS);
    let d = g.add_scalar(n, -1.0);
    let sq = g.square(d);
    Ok(g.mean_all(sq))
}

/// Mean Euclidean distance between rows of `c_true` and `c_pred`.
/// With `mask`, only flagged rows count (zero when none are flagged).
pub fn spatial<T: Real>(
    g: &mut Graph<T>,
    c_true: NodeId,
    c_pred: NodeId,
    mask: Option<&[bool]>,
) -> Result<NodeId> {
    if g.shape(c_true) != g.shape(c_pred) || g.shape(c_true).len() != 2 {
        return Err(Error::Shape(format!(
            "coordinates {:?} vs {:?}",
            g.shape(c_true),
            g.shape(c_pred)
        )));
    }
    let b = g.shape(c_true)[0];
    let diff = g.sub(c_true, c_pred);
    let n = g.l2_norm_trailing(diff, 1, NORM_EPS);
    match mask {
        None => Ok(g.mean_all(n)),
        Some(m) => {
            if m.len() != b {
                return Err(Error::Shape(format!("mask of {} for batch {b}", m.len())));
            }
            let kept = m.iter().filter(|&&k| k).count();
            let w: Vec<T> = m
                .iter()
                .map(|&k| if k { T::ONE } else { T::ZERO })
                .collect();
            let w = g.constant(Tensor::new(alloc::vec![b, 1], w)?);
            let masked = g.mul(n, w);
            let s = g.sum_all(masked);
            Ok(g.scale(s, if kept == 0 { 0.0 } else { 1.0 / kept as f64 }))
        }
    }
}

/// Mean over the batch of the L1 distance between `z` and `z_est`.
pub fn latent<T: Real>(g: &mut Graph<T>, z: NodeId, z_est: NodeId) -> Result<NodeId> {
    if g.shape(z) != g.shape(z_est) || g.shape(z).len() != 2 {
        return Err(Error::Shape(format!(
            "latents {:?} vs {:?}",
            g.shape(z),
            g.shape(z_est)
        )));
    }
    let b = g.shape(z)[0];
    let d = g.sub(z, z_est);
    let a = g.abs(d);
    let s = g.sum_all(a);
    Ok(g.scale(s, 1.0 / b as f64))
}

fn rows<T: Real>(t: &Tensor<T>) -> Result<(usize, usize)> {
    match *t.shape() {
        [b, d] if b > 0 => Ok((b, d)),
        [b] if b > 0 => Ok((b, 1)),
        ref s => Err(Error::Shape(format!("expected a batch, got {s:?}"))),
    }
}

/// `mean(d_real) - mean(d_fake)`.
pub fn loss_wasserstein<T: Real>(d_real: &Tensor<T>, d_fake: &Tensor<T>) -> Result<f64> {
    if rows(d_real)? != rows(d_fake)? {
        return Err(Error::Shape("real and fake batches differ".into()));
    }
    let mean = |t: &Tensor<T>| t.data().iter().map(|v| v.to_f64()).sum::<f64>() / t.len() as f64;
    Ok(mean(d_real) - mean(d_fake))
}

fn row_pairs<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(usize, usize)> {
    let (n, d) = rows(a)?;
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok((n, d))
}

/// Mean Euclidean distance between rows.
pub fn loss_spatial<T: Real>(c_true: &Tensor<T>, c_pred: &Tensor<T>) -> Result<f64> {
    let (n, d) = row_pairs(c_true, c_pred)?;
    let total: f64 = c_true
        .data()
        .chunks(d)
        .zip(c_pred.data().chunks(d))
        .map(|(a, b)| {
            libm::sqrt(
                a.iter()
                    .zip(b)
                    .map(|(x, y)| {
                        let d = x.to_f64() - y.to_f64();
                        d * d
                    })
                    .sum(),
            )
        })
        .sum();
    Ok(total / n as f64)
}

/// Mean L1 distance between rows.
pub fn loss_latent<T: Real>(z: &Tensor<T>, z_est: &Tensor<T>) -> Result<f64> {
    let (n, _) = row_pairs(z, z_est)?;
    Ok(z.data()
        .iter()
        .zip(z_est.data())
        .map(|(a, b)| libm::fabs(a.to_f64() - b.to_f64()))
        .sum::<f64>()
        / n as f64)
}

/// Penalty of a discriminator given as a graph builder, evaluated at `s_hat`.
pub fn loss_gradient_penalty<T: Real>(
    d: impl FnOnce(&mut Graph<T>, NodeId) -> Result<NodeId>,
    s_hat: &Tensor<T>,
) -> Result<f64> {
    let mut g = Graph::with_higher_order();
    let x = g.input("s_hat", s_hat.clone());
    let score = d(&mut g, x)?;
    let p = gradient_penalty(&mut g, score, x)?;
    g.check_finite()?;
    Ok(g.value(p).item().to_f64())
}
