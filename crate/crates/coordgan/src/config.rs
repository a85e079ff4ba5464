//! `key = value` run configuration.
//!
//! One pair per line, `#` starts a comment. Every key has a default, so an
//! empty file is a valid configuration. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use coordgan_core::coords::{PatchLayout, Topology};
use coordgan_core::data::{Sampling, SynthKind};
use coordgan_core::nn::ArchConfig;
use coordgan_core::train::{LossWeights, TrainConfig};

use crate::error::{AppError, Result};

/// Where training images come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic(SynthKind),
    Folder(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    /// Number of synthetic images.
    pub count: usize,
    pub seed: u64,
    pub held_out: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub layout: PatchLayout,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub out_dir: PathBuf,
    pub posttrain_steps: u64,
    pub extend: usize,
    /// Images written by `generate`.
    pub generate_count: usize,
    /// Generated images compared against held-out ones by `eval`.
    pub samples: usize,
    pub interp_steps: usize,
    pub panorama_laps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let layout = PatchLayout::planar(4, 2, 4).expect("valid default layout");
        Self {
            arch: arch_for(&layout, ArchConfig::default()),
            layout,
            train: TrainConfig::default(),
            data: DataConfig {
                source: DataSource::Synthetic(SynthKind::GradientHue),
                count: 2000,
                seed: 0,
                held_out: 0.1,
            },
            out_dir: PathBuf::from("out"),
            posttrain_steps: 200,
            extend: 1,
            generate_count: 4,
            samples: 64,
            interp_steps: 8,
            panorama_laps: 2,
        }
    }
}

/// Copies the layout-determined fields into `arch`.
pub fn arch_for(layout: &PatchLayout, arch: ArchConfig) -> ArchConfig {
    ArchConfig {
        coord_dim: layout.coord_dim(),
        micro_size: layout.s,
        macro_span: (layout.n, layout.m),
        ..arch
    }
}

struct Pairs {
    map: BTreeMap<String, (usize, String)>,
}

impl Pairs {
    fn take<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.map.remove(key) {
            None => Ok(default),
            Some((line, v)) => v.parse().map_err(|_| {
                AppError::Config(format!("line {line}: `{v}` is not a valid value for {key}"))
            }),
        }
    }

    fn flag(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.map.remove(key) {
            None => Ok(default),
            Some((line, v)) => match v.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(AppError::Config(format!(
                    "line {line}: `{v}` is not a boolean for {key}"
                ))),
            },
        }
    }
}

fn topology_name(t: Topology) -> &'static str {
    match t {
        Topology::Planar => "planar",
        Topology::Cylindrical => "cylindrical",
    }
}

fn sampling_name(s: Sampling) -> &'static str {
    match s {
        Sampling::Discrete => "discrete",
        Sampling::Continuous => "continuous",
    }
}

/// Parses `key = value` lines into an ordered map, rejecting duplicates and malformed lines.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, (usize, String)>> {
    let mut map = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| AppError::Config(format!("line {}: expected key = value", k + 1)))?;
        let key = key.trim().to_string();
        if map
            .insert(key.clone(), (k + 1, value.trim().to_string()))
            .is_some()
        {
            return Err(AppError::Config(format!(
                "line {}: duplicate key {key}",
                k + 1
            )));
        }
    }
    Ok(map)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = parse_pairs(text)?;
        // checkpoint state is carried in the same text but is not configuration
        map.retain(|k, _| !k.starts_with("state."));
        Self::from_pairs(Pairs { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn from_pairs(mut p: Pairs) -> Result<Self> {
        let d = RunConfig::default();
        let topology = match p.take("layout.topology", String::from("planar"))?.as_str() {
            "planar" => Topology::Planar,
            "cylindrical" => Topology::Cylindrical,
            other => return Err(AppError::Config(format!("unknown topology `{other}`"))),
        };
        let layout = PatchLayout::new(
            p.take("layout.grid_h", d.layout.grid_h)?,
            p.take("layout.grid_w", d.layout.grid_w)?,
            p.take("layout.macro_n", d.layout.n)?,
            p.take("layout.macro_m", d.layout.m)?,
            p.take("layout.micro_size", d.layout.s)?,
            topology,
        )
        .map_err(|e| AppError::Config(e.to_string()))?;
        let arch = arch_for(
            &layout,
            ArchConfig {
                latent_dim: p.take("arch.latent_dim", d.arch.latent_dim)?,
                base_channels: p.take("arch.base_channels", d.arch.base_channels)?,
                g_blocks: p.take("arch.g_blocks", d.arch.g_blocks)?,
                d_blocks: p.take("arch.d_blocks", d.arch.d_blocks)?,
                projection: p.flag("arch.projection", d.arch.projection)?,
                q_head: p.flag("arch.q_head", d.arch.q_head)?,
                ..d.arch
            },
        );
        arch.validate()
            .map_err(|e| AppError::Config(e.to_string()))?;
        let t = d.train;
        let sampling = match p.take("train.sampling", String::from("discrete"))?.as_str() {
            "discrete" => Sampling::Discrete,
            "continuous" => Sampling::Continuous,
            other => return Err(AppError::Config(format!("unknown sampling mode `{other}`"))),
        };
        let train = TrainConfig {
            lr_g: p.take("train.lr_g", t.lr_g)?,
            lr_d: p.take("train.lr_d", t.lr_d)?,
            beta1: p.take("train.beta1", t.beta1)?,
            beta2: p.take("train.beta2", t.beta2)?,
            adam_eps: p.take("train.adam_eps", t.adam_eps)?,
            batch: p.take("train.batch", t.batch)?,
            steps: p.take("train.steps", t.steps)?,
            sampling,
            weights: LossWeights {
                lambda: p.take("train.lambda", t.weights.lambda)?,
                alpha: p.take("train.alpha", t.weights.alpha)?,
                beta_q: p.take("train.beta_q", t.weights.beta_q)?,
            },
            seed: p.take("train.seed", t.seed)?,
        };
        train
            .validate()
            .map_err(|e| AppError::Config(e.to_string()))?;
        let kind = p.take("data.kind", String::from("gradient-hue"))?;
        let folder = p.take("data.path", String::new())?;
        let source = if kind == "folder" {
            if folder.is_empty() {
                return Err(AppError::Config(
                    "data.kind = folder needs data.path".into(),
                ));
            }
            DataSource::Folder(PathBuf::from(folder))
        } else {
            DataSource::Synthetic(
                kind.parse()
                    .map_err(|_| AppError::Config(format!("unknown data.kind `{kind}`")))?,
            )
        };
        let data = DataConfig {
            source,
            count: p.take("data.count", d.data.count)?,
            seed: p.take("data.seed", d.data.seed)?,
            held_out: p.take("data.held_out", d.data.held_out)?,
        };
        if !(0.0..1.0).contains(&data.held_out) {
            return Err(AppError::Config(format!(
                "data.held_out {} outside [0, 1)",
                data.held_out
            )));
        }
        let cfg = RunConfig {
            layout,
            arch,
            train,
            data,
            out_dir: PathBuf::from(p.take("out.dir", String::from("out"))?),
            posttrain_steps: p.take("posttrain.steps", d.posttrain_steps)?,
            extend: p.take("posttrain.extend", d.extend)?,
            generate_count: p.take("generate.count", d.generate_count)?,
            samples: p.take("eval.samples", d.samples)?,
            interp_steps: p.take("interp.steps", d.interp_steps)?,
            panorama_laps: p.take("panorama.laps", d.panorama_laps)?,
        };
        if let Some((key, (line, _))) = p.map.into_iter().next() {
            return Err(AppError::Config(format!("line {line}: unknown key {key}")));
        }
        if cfg.samples < 2 {
            return Err(AppError::Config("eval.samples must be at least 2".into()));
        }
        Ok(cfg)
    }

    /// Text that [`RunConfig::parse`] maps back to an equal configuration.
    pub fn to_text(&self) -> String {
        let (l, a, t) = (&self.layout, &self.arch, &self.train);
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("layout.grid_h", &l.grid_h);
        kv("layout.grid_w", &l.grid_w);
        kv("layout.macro_n", &l.n);
        kv("layout.macro_m", &l.m);
        kv("layout.micro_size", &l.s);
        kv("layout.topology", &topology_name(l.topology));
        kv("arch.latent_dim", &a.latent_dim);
        kv("arch.base_channels", &a.base_channels);
        kv("arch.g_blocks", &a.g_blocks);
        kv("arch.d_blocks", &a.d_blocks);
        kv("arch.projection", &a.projection);
        kv("arch.q_head", &a.q_head);
        kv("train.lr_g", &t.lr_g);
        kv("train.lr_d", &t.lr_d);
        kv("train.beta1", &t.beta1);
        kv("train.beta2", &t.beta2);
        kv("train.adam_eps", &t.adam_eps);
        kv("train.batch", &t.batch);
        kv("train.steps", &t.steps);
        kv("train.sampling", &sampling_name(t.sampling));
        kv("train.lambda", &t.weights.lambda);
        kv("train.alpha", &t.weights.alpha);
        kv("train.beta_q", &t.weights.beta_q);
        kv("train.seed", &t.seed);
        match &self.data.source {
            DataSource::Synthetic(k) => kv("data.kind", &k.name()),
            DataSource::Folder(p) => {
                kv("data.kind", &"folder");
                kv("data.path", &p.display());
            }
        }
        kv("data.count", &self.data.count);
        kv("data.seed", &self.data.seed);
        kv("data.held_out", &self.data.held_out);
        kv("out.dir", &self.out_dir.display());
        kv("posttrain.steps", &self.posttrain_steps);
        kv("posttrain.extend", &self.extend);
        kv("generate.count", &self.generate_count);
        kv("eval.samples", &self.samples);
        kv("interp.steps", &self.interp_steps);
        kv("panorama.laps", &self.panorama_laps);
        s
    }
}
