//! Fréchet distance between Gaussian fits of downsampled images.

use coordgan_core::Tensor;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{AppError, Result};

/// Images are averaged down to this many pixels per side before comparison.
pub const FEATURE_SIDE: usize = 8;
/// Added to each covariance diagonal so the square root is well defined.
pub const COV_JITTER: f64 = 1e-6;

/// Area-average downsample of a `[3, H, W]` image to `[3, 8, 8]`, flattened.
pub fn features(image: &Tensor<f32>) -> Result<Vec<f64>> {
    let (c, h, w) = match *image.shape() {
        [c, h, w] if h >= FEATURE_SIDE && w >= FEATURE_SIDE => (c, h, w),
        ref s => {
            return Err(AppError::Format(format!(
                "cannot take {FEATURE_SIDE}x{FEATURE_SIDE} features of {s:?}"
            )))
        }
    };
    let d = image.data();
    let k = FEATURE_SIDE;
    let mut out = Vec::with_capacity(c * k * k);
    for ch in 0..c {
        for i in 0..k {
            let (y0, y1) = (i * h / k, (i + 1) * h / k);
            for j in 0..k {
                let (x0, x1) = (j * w / k, (j + 1) * w / k);
                let mut s = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        s += d[(ch * h + y) * w + x] as f64;
                    }
                }
                out.push(s / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
    }
    Ok(out)
}

fn mean_cov(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows();
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut cov = centered.transpose() * &centered / (n - 1) as f64;
    for i in 0..cov.nrows() {
        cov[(i, i)] += COV_JITTER;
    }
    (mean, cov)
}

fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let e = SymmetricEigen::new(sym);
    let root = e.eigenvalues.map(|l| l.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&root) * e.eigenvectors.transpose()
}

/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))` for samples in the rows of `a` and `b`.
pub fn frechet_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() < 2 || b.nrows() < 2 || a.ncols() != b.ncols() {
        return Err(AppError::Format(format!(
            "Fréchet distance needs two sets of at least 2 equal-length vectors, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let (ma, ca) = mean_cov(a);
    let (mb, cb) = mean_cov(b);
    // tr((S_a S_b)^(1/2)) equals tr((S_a^(1/2) S_b S_a^(1/2))^(1/2)), which stays symmetric
    let ra = sqrt_psd(&ca);
    let cross = sqrt_psd(&(&ra * &cb * &ra)).trace();
    let d = (ma - mb).norm_squared() + ca.trace() + cb.trace() - 2.0 * cross;
    Ok(d.max(0.0))
}

fn feature_matrix(images: &[Tensor<f32>]) -> Result<DMatrix<f64>> {
    let rows = images.iter().map(features).collect::<Result<Vec<_>>>()?;
    let d = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        d,
        rows.into_iter().flatten(),
    ))
}

/// Fréchet distance between the 8x8 feature distributions of two image sets.
pub fn eval_frechet_proxy(a: &[Tensor<f32>], b: &[Tensor<f32>]) -> Result<f64> {
    frechet_distance(&feature_matrix(a)?, &feature_matrix(b)?)
}
