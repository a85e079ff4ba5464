//! Evaluation metrics for a trained model.

use coordgan_core::coords::{crop_psi, macro_coord, PatchLayout};
use coordgan_core::data::Dataset;
use coordgan_core::metrics::{coord_head_error, seam_energy};
use coordgan_core::nn::ModelBundle;
use coordgan_core::render::generate_full;
use coordgan_core::train::{sample_latent, StepMetrics};
use coordgan_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::frechet::eval_frechet_proxy;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frechet_proxy: f64,
    pub seam_energy_generated: f64,
    pub seam_energy_real: f64,
    pub coord_head_error: f64,
}

#[derive(Serialize)]
struct CsvRow {
    step: Option<u64>,
    l_w: Option<f64>,
    l_gp: Option<f64>,
    l_s: Option<f64>,
    l_q: Option<f64>,
    wall_ms: Option<u64>,
    frechet_proxy: f64,
    seam_energy_generated: f64,
    seam_energy_real: f64,
    coord_head_error: f64,
}

impl MetricsReport {
    pub fn is_finite(&self) -> bool {
        [
            self.frechet_proxy,
            self.seam_energy_generated,
            self.seam_energy_real,
            self.coord_head_error,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain numbers serialize")
    }

    /// One CSV row: the training columns (from `last`, blank when unknown) followed by the report.
    /// `wall_ms` is always blank so the file is reproducible.
    pub fn to_csv(&self, last: Option<&StepMetrics>) -> Result<String> {
        let row = CsvRow {
            step: last.map(|m| m.step),
            l_w: last.map(|m| m.l_w),
            l_gp: last.map(|m| m.l_gp),
            l_s: last.map(|m| m.l_s),
            l_q: last.map(|m| m.l_q),
            wall_ms: None,
            frechet_proxy: self.frechet_proxy,
            seam_energy_generated: self.seam_energy_generated,
            seam_energy_real: self.seam_energy_real,
            coord_head_error: self.coord_head_error,
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.serialize(row)
            .map_err(|e| AppError::Format(e.to_string()))?;
        String::from_utf8(
            w.into_inner()
                .map_err(|e| AppError::Format(e.to_string()))?,
        )
        .map_err(|e| AppError::Format(e.to_string()))
    }
}

/// `n` full canvases from latents drawn with `seed`.
pub fn sample_images(
    bundle: &ModelBundle,
    layout: &PatchLayout,
    n: usize,
    seed: u64,
) -> Result<Vec<Tensor<f32>>> {
    let dim = bundle.arch.latent_dim;
    let z = sample_latent(dim, n, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok(z.data()
        .chunks(dim)
        .map(|z| generate_full(bundle, layout, z))
        .collect::<coordgan_core::Result<Vec<_>>>()?)
}

/// Images reserved for evaluation, or the training images when nothing was held out.
pub fn reference_images(data: &Dataset) -> Vec<Tensor<f32>> {
    let held: Vec<_> = data.held_out_images().map(|i| i.tensor().clone()).collect();
    if held.is_empty() {
        data.train_images().map(|i| i.tensor().clone()).collect()
    } else {
        held
    }
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

/// Mean coordinate-head error over every macro anchor of each reference image.
pub fn coord_error_on(
    bundle: &ModelBundle,
    layout: &PatchLayout,
    images: &[Tensor<f32>],
) -> Result<f64> {
    let anchors = layout.anchors();
    let mut patches = Vec::new();
    let mut coords = Vec::new();
    for img in images {
        for &(i, j) in &anchors {
            patches.push(crop_psi(img, layout, (i, j))?);
            coords.extend(
                macro_coord(layout, i, j)?
                    .to_vec()
                    .into_iter()
                    .map(|v| v as f32),
            );
        }
    }
    let dim = layout.coord_dim();
    let mut errs = Vec::new();
    // batches bound the memory of one forward pass
    for (p, c) in patches.chunks(256).zip(coords.chunks(256 * dim)) {
        let c = Tensor::new(vec![p.len(), dim], c.to_vec())?;
        errs.push((coord_head_error(bundle, &Tensor::stack(p)?, &c)?, p.len()));
    }
    let total: usize = errs.iter().map(|e| e.1).sum();
    Ok(errs.iter().map(|(e, n)| e * *n as f64).sum::<f64>() / total.max(1) as f64)
}

pub fn evaluate(
    bundle: &ModelBundle,
    layout: &PatchLayout,
    data: &Dataset,
    samples: usize,
    seed: u64,
) -> Result<MetricsReport> {
    let real = reference_images(data);
    let fake = sample_images(bundle, layout, samples, seed)?;
    let report = MetricsReport {
        frechet_proxy: eval_frechet_proxy(&fake, &real)?,
        seam_energy_generated: mean(
            fake.iter()
                .map(|f| seam_energy(f, layout))
                .collect::<coordgan_core::Result<Vec<_>>>()?,
        ),
        seam_energy_real: mean(
            real.iter()
                .map(|r| seam_energy(r, layout))
                .collect::<coordgan_core::Result<Vec<_>>>()?,
        ),
        coord_head_error: coord_error_on(bundle, layout, &real)?,
    };
    if !report.is_finite() {
        return Err(AppError::Format(format!("non-finite metrics: {report:?}")));
    }
    Ok(report)
}
