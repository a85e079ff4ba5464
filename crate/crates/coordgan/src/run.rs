//! Setting up and driving training runs.

use std::io::Write;
use std::time::Instant;

use coordgan_core::data::{synth_dataset, Dataset};
use coordgan_core::nn::build_models;
use coordgan_core::train::{StepMetrics, Trainer};
use serde::Serialize;

use crate::config::{DataSource, RunConfig};
use crate::error::{AppError, Result};
use crate::ingest::ingest_folder;

/// Model initialization uses its own stream so weights and batches are not drawn from the same numbers.
pub fn model_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// The configured dataset, split into training and held-out images, plus ingest warnings.
pub fn load_dataset(cfg: &RunConfig) -> Result<(Dataset, Vec<String>)> {
    let (h, w) = cfg.layout.canvas_hw();
    let (data, warnings) = match &cfg.data.source {
        DataSource::Synthetic(kind) => (
            synth_dataset(*kind, cfg.data.count, h, w, cfg.data.seed)?,
            Vec::new(),
        ),
        DataSource::Folder(dir) => {
            if !dir.is_dir() {
                return Err(AppError::Config(format!(
                    "data.path {} is not a directory",
                    dir.display()
                )));
            }
            let got = ingest_folder(dir, h, w)?;
            (got.dataset, got.warnings)
        }
    };
    Ok((data.split(cfg.data.held_out, cfg.data.seed)?, warnings))
}

/// A fresh trainer whose models and random stream both follow `cfg.train.seed`.
pub fn new_trainer(cfg: &RunConfig) -> Result<Trainer> {
    let bundle = build_models(cfg.arch, model_seed(cfg.train.seed))?;
    Ok(Trainer::new(bundle, cfg.layout, cfg.train)?)
}

#[derive(Serialize)]
struct Row {
    step: u64,
    l_w: f64,
    l_gp: f64,
    l_s: f64,
    l_q: f64,
    wall_ms: u128,
}

/// Per-step CSV lines: `step,l_w,l_gp,l_s,l_q,wall_ms`.
pub struct MetricsCsv<W: Write> {
    out: csv::Writer<W>,
    start: Instant,
}

impl<W: Write> MetricsCsv<W> {
    pub fn new(out: W) -> Self {
        Self {
            out: csv::Writer::from_writer(out),
            start: Instant::now(),
        }
    }

    pub fn record(&mut self, m: &StepMetrics) -> Result<()> {
        let row = Row {
            step: m.step,
            l_w: m.l_w,
            l_gp: m.l_gp,
            l_s: m.l_s,
            l_q: m.l_q,
            wall_ms: self.start.elapsed().as_millis(),
        };
        self.out
            .serialize(row)
            .map_err(|e| AppError::Format(e.to_string()))?;
        self.out.flush().map_err(|e| AppError::io("metrics", e))
    }
}
