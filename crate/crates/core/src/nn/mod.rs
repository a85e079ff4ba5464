//! Layers, parameter storage and the generator/discriminator builders.
//!
//! Parameters live in a [`ModelBundle`] as `f32` tensors keyed by dotted names
//! (`g.` for the generator, `d.` for the discriminator and its heads). Graphs are
//! built on demand by [`Net`], which can cast the stored values to any
//! [`Real`](crate::Real) so the same builders serve training and `f64` checks.

mod models;
mod net;
mod sn;

pub use models::{
    discriminator_forward, discriminator_graph, generator_forward, generator_graph,
    merge_macro_nodes, projection_score, DiscNodes, DiscriminatorOutput,
};
pub use net::{BatchStat, BnMode, Net};
pub use sn::{matrix_dims, spectral_normalize, Normalized};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Batch-norm epsilon.
pub const BN_EPS: f64 = 1e-5;
/// Running statistics keep this fraction of their old value per update.
pub const BN_MOMENTUM: f32 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArchConfig {
    pub latent_dim: usize,
    /// 2 for planar `(y, x)`, 3 for cylindrical `(cos, sin, y)`.
    pub coord_dim: usize,
    pub base_channels: usize,
    /// Micro patch edge `S` in pixels.
    pub micro_size: usize,
    /// Micro patches per macro patch `(N, M)`.
    pub macro_span: (usize, usize),
    pub g_blocks: usize,
    pub d_blocks: usize,
    /// Add the coordinate projection term to the score.
    pub projection: bool,
    /// Build the latent head used by patch-guided generation.
    pub q_head: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            coord_dim: 2,
            base_channels: 16,
            micro_size: 4,
            macro_span: (2, 2),
            g_blocks: 2,
            d_blocks: 2,
            projection: true,
            q_head: false,
        }
    }
}

impl ArchConfig {
    /// Which generator blocks upsample. Blocks double the resolution until
    /// `S` is reached, so the first feature map is as small as the block count
    /// allows and fine detail has to be built up through the convolutions.
    pub fn stride_plan(&self) -> Result<Vec<bool>> {
        let s = self.micro_size;
        if !s.is_power_of_two() {
            return Err(Error::Invalid(format!(
                "micro size {s} is not a power of two"
            )));
        }
        let ups = (s.trailing_zeros() as usize).min(self.g_blocks);
        Ok((0..self.g_blocks).map(|k| k < ups).collect())
    }

    /// Side of the generator's first feature map.
    pub fn start_side(&self) -> Result<usize> {
        let ups = self.stride_plan()?.iter().filter(|&&u| u).count();
        Ok(self.micro_size >> ups)
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.base_channels == 0 || self.d_blocks == 0 {
            return Err(Error::Invalid(
                "latent_dim, base_channels and d_blocks must be positive".into(),
            ));
        }
        if !(2..=3).contains(&self.coord_dim) {
            return Err(Error::Invalid(format!(
                "coord_dim must be 2 or 3, got {}",
                self.coord_dim
            )));
        }
        if self.macro_span.0 == 0 || self.macro_span.1 == 0 {
            return Err(Error::Invalid("macro span must be positive".into()));
        }
        self.stride_plan().map(|_| ())
    }

    pub fn cond_dim(&self) -> usize {
        self.latent_dim + self.coord_dim
    }

    /// Width of the pooled discriminator features.
    pub fn d_features(&self) -> usize {
        self.base_channels << (self.d_blocks - 1)
    }

    pub fn macro_hw(&self) -> (usize, usize) {
        (
            self.macro_span.0 * self.micro_size,
            self.macro_span.1 * self.micro_size,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Orthogonally initialized and spectrally normalized.
    Weight,
    Bias,
    /// Bias initialized to one (the scale branch of conditional batch norm).
    UnitBias,
    RunningMean,
    RunningVar,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

struct Registry(Vec<ParamSpec>);

impl Registry {
    fn push(&mut self, name: String, shape: Vec<usize>, kind: ParamKind) {
        self.0.push(ParamSpec { name, shape, kind });
    }

    fn dense(&mut self, prefix: &str, out: usize, inp: usize, bias: ParamKind) {
        self.push(format!("{prefix}.w"), vec![out, inp], ParamKind::Weight);
        self.push(format!("{prefix}.b"), vec![out], bias);
    }

    fn conv(&mut self, prefix: &str, out: usize, inp: usize, k: usize) {
        self.push(
            format!("{prefix}.w"),
            vec![out, inp, k, k],
            ParamKind::Weight,
        );
        self.push(format!("{prefix}.b"), vec![out], ParamKind::Bias);
    }

    fn cbn(&mut self, prefix: &str, ch: usize, cond: usize) {
        for (branch, bias) in [("gamma", ParamKind::UnitBias), ("beta", ParamKind::Bias)] {
            self.dense(
                &format!("{prefix}.{branch}.l1"),
                2 * ch,
                cond,
                ParamKind::Bias,
            );
            self.dense(&format!("{prefix}.{branch}.l2"), ch, 2 * ch, bias);
        }
        self.push(format!("{prefix}.mean"), vec![ch], ParamKind::RunningMean);
        self.push(format!("{prefix}.var"), vec![ch], ParamKind::RunningVar);
    }
}

/// Every tensor the architecture owns, in a fixed order.
pub fn param_specs(arch: &ArchConfig) -> Result<Vec<ParamSpec>> {
    arch.validate()?;
    let mut r = Registry(Vec::new());
    let c = arch.base_channels;
    let cond = arch.cond_dim();
    let side = arch.start_side()?;
    r.dense("g.in", side * side * c, cond, ParamKind::Bias);
    for k in 0..arch.g_blocks {
        let p = format!("g.block{k}");
        r.cbn(&format!("{p}.bn1"), c, cond);
        r.conv(&format!("{p}.conv1"), c, c, 3);
        r.cbn(&format!("{p}.bn2"), c, cond);
        r.conv(&format!("{p}.conv2"), c, c, 3);
    }
    r.cbn("g.out.bn", c, cond);
    r.conv("g.out.conv", 3, c, 3);

    let mut cin = 3;
    for k in 0..arch.d_blocks {
        let cout = c << k;
        let p = format!("d.block{k}");
        r.conv(&format!("{p}.conv1"), cout, cin, 3);
        r.conv(&format!("{p}.conv2"), cout, cout, 3);
        r.conv(&format!("{p}.skip"), cout, cin, 1);
        cin = cout;
    }
    let f = arch.d_features();
    r.dense("d.score", 1, f, ParamKind::Bias);
    if arch.projection {
        r.push(
            "d.proj.w".into(),
            vec![f, arch.coord_dim],
            ParamKind::Weight,
        );
    }
    r.dense("d.a.l1", f, f, ParamKind::Bias);
    r.dense("d.a.l2", arch.coord_dim, f, ParamKind::Bias);
    if arch.q_head {
        r.dense("d.q.l1", f, f, ParamKind::Bias);
        r.dense("d.q.l2", arch.latent_dim, f, ParamKind::Bias);
    }
    Ok(r.0)
}

/// Parameters, spectral-norm vectors and batch-norm running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub arch: ArchConfig,
    pub params: BTreeMap<String, Tensor<f32>>,
    /// Left singular vector estimate per weight, keyed by the weight's name.
    pub sn_state: BTreeMap<String, Tensor<f32>>,
    pub buffers: BTreeMap<String, Tensor<f32>>,
}

/// Gram-Schmidt on Gaussian rows; rows orthonormal when `rows <= cols`, columns otherwise.
fn orthogonal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let (a, b) = if rows <= cols {
        (rows, cols)
    } else {
        (cols, rows)
    };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(a);
    while basis.len() < a {
        let mut v: Vec<f64> = (0..b).map(|_| StandardNormal.sample(rng)).collect();
        for q in &basis {
            let d: f64 = v.iter().zip(q).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
        }
        let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    let mut out = vec![0.0f32; rows * cols];
    for (i, q) in basis.iter().enumerate() {
        for (j, &x) in q.iter().enumerate() {
            let (r, c) = if rows <= cols { (i, j) } else { (j, i) };
            out[r * cols + c] = x as f32;
        }
    }
    out
}

/// Power iterations run at initialization so the first step sees a settled estimate.
const SN_WARMUP: usize = 20;

/// Builds freshly initialized models. The same seed always gives bitwise-identical bundles.
pub fn build_models(arch: ArchConfig, seed: u64) -> Result<ModelBundle> {
    let specs = param_specs(&arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bundle = ModelBundle {
        arch,
        params: BTreeMap::new(),
        sn_state: BTreeMap::new(),
        buffers: BTreeMap::new(),
    };
    for spec in specs {
        let shape = spec.shape.clone();
        match spec.kind {
            ParamKind::Weight => {
                let (rows, cols) = matrix_dims(&shape);
                let w = Tensor::from_parts(shape, orthogonal(rows, cols, &mut rng));
                let u0: Tensor<f32> = Tensor::from_parts(
                    vec![rows],
                    (0..rows)
                        .map(|_| StandardNormal.sample(&mut rng))
                        .collect::<Vec<f32>>(),
                );
                let n = spectral_normalize(&w, &u0, SN_WARMUP)?;
                bundle.sn_state.insert(spec.name.clone(), n.u);
                bundle.params.insert(spec.name, w);
            }
            ParamKind::Bias => {
                bundle.params.insert(spec.name, Tensor::zeros(&shape));
            }
            ParamKind::UnitBias => {
                bundle.params.insert(spec.name, Tensor::ones(&shape));
            }
            ParamKind::RunningMean => {
                bundle.buffers.insert(spec.name, Tensor::zeros(&shape));
            }
            ParamKind::RunningVar => {
                bundle.buffers.insert(spec.name, Tensor::ones(&shape));
            }
        }
    }
    Ok(bundle)
}

impl ModelBundle {
    /// Checks that the stored tensors are exactly those the architecture expects.
    pub fn validate(&self) -> Result<()> {
        for spec in param_specs(&self.arch)? {
            let store = match spec.kind {
                ParamKind::RunningMean | ParamKind::RunningVar => &self.buffers,
                _ => &self.params,
            };
            let t = store
                .get(&spec.name)
                .ok_or_else(|| Error::Missing(spec.name.clone()))?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::Shape(format!(
                    "`{}` is {:?}, expected {:?}",
                    spec.name,
                    t.shape(),
                    spec.shape
                )));
            }
            if spec.kind == ParamKind::Weight && !self.sn_state.contains_key(&spec.name) {
                return Err(Error::Missing(format!("{}#u", spec.name)));
            }
        }
        let known: Vec<String> = param_specs(&self.arch)?
            .into_iter()
            .map(|s| s.name)
            .collect();
        for name in self
            .params
            .keys()
            .chain(self.buffers.keys())
            .chain(self.sn_state.keys())
        {
            if !known.contains(name) {
                return Err(Error::Invalid(format!(
                    "tensor `{name}` does not belong to this architecture"
                )));
            }
        }
        Ok(())
    }

    /// Names of all spectrally normalized weights.
    pub fn weight_names(&self) -> Vec<String> {
        self.sn_state.keys().map(ToString::to_string).collect()
    }

    /// One power iteration for each weight accepted by `filter`.
    pub fn update_spectral_state(&mut self, filter: impl Fn(&str) -> bool) {
        let names: Vec<String> = self
            .sn_state
            .keys()
            .filter(|n| filter(n))
            .cloned()
            .collect();
        for name in names {
            let n = spectral_normalize(&self.params[&name], &self.sn_state[&name], 1)
                .expect("registered shapes");
            if !n.degenerate {
                self.sn_state.insert(name, n.u);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_plans() {
        let a = ArchConfig {
            micro_size: 32,
            g_blocks: 3,
            ..Default::default()
        };
        assert_eq!(a.stride_plan().unwrap(), vec![true, true, true]);
        let a = ArchConfig {
            micro_size: 4,
            g_blocks: 2,
            ..Default::default()
        };
        assert_eq!(a.stride_plan().unwrap(), vec![true, true]);
        assert_eq!(a.start_side().unwrap(), 1);
        let a = ArchConfig {
            micro_size: 2,
            g_blocks: 2,
            ..Default::default()
        };
        assert_eq!(a.stride_plan().unwrap(), vec![true, false]);
        let a = ArchConfig {
            micro_size: 32,
            g_blocks: 2,
            ..Default::default()
        };
        assert_eq!(a.start_side().unwrap(), 8);
        assert!(ArchConfig {
            micro_size: 6,
            ..Default::default()
        }
        .stride_plan()
        .is_err());
    }

    #[test]
    fn orthogonal_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (r, c) in [(3, 5), (5, 3)] {
            let w = orthogonal(r, c, &mut rng);
            // entry k of row i when rows are orthonormal, of column i otherwise
            let at = |i: usize, k: usize| if r <= c { w[i * c + k] } else { w[k * c + i] } as f64;
            let (a, b) = (r.min(c), r.max(c));
            for i in 0..a {
                for j in 0..a {
                    let d: f64 = (0..b).map(|k| at(i, k) * at(j, k)).sum();
                    assert!(
                        (d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-5,
                        "{r}x{c} ({i},{j}) = {d}"
                    );
                }
            }
        }
    }

    #[test]
    fn build_is_deterministic_and_complete() {
        let a = build_models(ArchConfig::default(), 3).unwrap();
        assert_eq!(a, build_models(ArchConfig::default(), 3).unwrap());
        assert_ne!(
            a.params,
            build_models(ArchConfig::default(), 4).unwrap().params
        );
        a.validate().unwrap();
        assert!(!a.params.contains_key("d.q.l1.w"));
        let q = build_models(
            ArchConfig {
                q_head: true,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        assert_eq!(q.params["d.q.l2.w"].shape(), &[16, 32]);
        for name in a.weight_names() {
            assert!(a.params.contains_key(&name));
        }
    }
}
