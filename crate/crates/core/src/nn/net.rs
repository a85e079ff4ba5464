use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::sn::{start_vector, wt_u};
use super::{matrix_dims, ModelBundle, BN_EPS};
use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Where batch norm takes its statistics from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Statistics of the current batch (training).
    Batch,
    /// Stored running statistics; every sample is processed independently.
    Running,
}

/// Batch statistics recorded during a [`BnMode::Batch`] build, for the running-average update.
#[derive(Clone, Debug)]
pub struct BatchStat {
    pub name: String,
    pub mean: NodeId,
    pub var: NodeId,
}

/// Adds layers of a [`ModelBundle`] to a graph.
pub struct Net<'a, T: Real> {
    pub g: &'a mut Graph<T>,
    pub bundle: &'a ModelBundle,
    pub bn: BnMode,
    normalized: BTreeMap<String, NodeId>,
    pub stats: Vec<BatchStat>,
}

impl<'a, T: Real> Net<'a, T> {
    pub fn new(g: &'a mut Graph<T>, bundle: &'a ModelBundle, bn: BnMode) -> Self {
        Self {
            g,
            bundle,
            bn,
            normalized: BTreeMap::new(),
            stats: Vec::new(),
        }
    }

    /// The parameter leaf `name`, created on first use.
    pub fn param(&mut self, name: &str) -> Result<NodeId> {
        if let Some(id) = self.g.leaf(name) {
            return Ok(id);
        }
        let t = self
            .bundle
            .params
            .get(name)
            .ok_or_else(|| Error::Missing(name.into()))?;
        Ok(self.g.param(name, t.cast()))
    }

    /// The spectrally normalized weight `name`: `W / (u^T W v)` with `u`, `v`
    /// held constant. An all-zero weight passes through unnormalized.
    pub fn weight(&mut self, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.normalized.get(name) {
            return Ok(id);
        }
        let w = self.param(name)?;
        let u = self
            .bundle
            .sn_state
            .get(name)
            .ok_or_else(|| Error::Missing(format!("{name}#u")))?;
        let shape = self.g.shape(w).to_vec();
        let (rows, cols) = matrix_dims(&shape);
        let wv: Vec<f64> = self.g.value(w).data().iter().map(|x| x.to_f64()).collect();
        let u = start_vector(&u.data().iter().map(|&x| x as f64).collect::<Vec<_>>());
        let wtu = wt_u(&wv, &u, cols);
        let n = libm::sqrt(wtu.iter().map(|x| x * x).sum::<f64>());
        let out = if n == 0.0 {
            w
        } else {
            let mut outer = Vec::with_capacity(rows * cols);
            for &ur in &u {
                outer.extend(wtu.iter().map(|&x| T::from_f64(ur * x / n)));
            }
            let outer = self.g.constant(Tensor::new(shape.clone(), outer)?);
            let prod = self.g.mul(w, outer);
            let sigma = self.g.sum_all(prod);
            let sigma = self.g.reshape(sigma, &vec![1; shape.len()]);
            let sigma = self.g.broadcast_to(sigma, &shape);
            self.g.div(w, sigma)
        };
        self.normalized.insert(name.into(), out);
        Ok(out)
    }

    /// `x [b,in] -> [b,out]` using `{prefix}.w` and `{prefix}.b`.
    pub fn dense(&mut self, prefix: &str, x: NodeId) -> Result<NodeId> {
        let w = self.weight(&format!("{prefix}.w"))?;
        let b = self.param(&format!("{prefix}.b"))?;
        let (xs, ws) = (self.g.shape(x), self.g.shape(w));
        if xs.len() != 2 || xs[1] != ws[1] {
            return Err(Error::Shape(format!(
                "{prefix}: input {xs:?} for weight {ws:?}"
            )));
        }
        Ok(self.g.linear(x, w, Some(b)))
    }

    /// Two dense layers with a relu between.
    pub fn mlp(&mut self, prefix: &str, x: NodeId) -> Result<NodeId> {
        let h = self.dense(&format!("{prefix}.l1"), x)?;
        let h = self.g.relu(h);
        self.dense(&format!("{prefix}.l2"), h)
    }

    pub fn conv(&mut self, prefix: &str, x: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let w = self.weight(&format!("{prefix}.w"))?;
        let b = self.param(&format!("{prefix}.b"))?;
        let (xs, ws) = (self.g.shape(x), self.g.shape(w));
        if xs.len() != 4 || xs[1] != ws[1] {
            return Err(Error::Shape(format!(
                "{prefix}: input {xs:?} for kernel {ws:?}"
            )));
        }
        let o = ws[0];
        let y = self.g.conv2d(x, w, stride, pad);
        let b = self.g.reshape(b, &[1, o, 1, 1]);
        Ok(self.g.add_broadcast(y, b))
    }

    fn channel_const(&mut self, name: &str, f: impl Fn(f32) -> f64) -> Result<NodeId> {
        let t = self
            .bundle
            .buffers
            .get(name)
            .ok_or_else(|| Error::Missing(name.into()))?;
        let c = t.len();
        let data = t.data().iter().map(|&v| T::from_f64(f(v))).collect();
        Ok(self.g.constant(Tensor::new(vec![1, c, 1, 1], data)?))
    }

    /// Per-channel normalization of `x [b,c,h,w]` without modulation.
    pub fn batch_norm(&mut self, prefix: &str, x: NodeId) -> Result<NodeId> {
        let s = self.g.shape(x).to_vec();
        if s.len() != 4 {
            return Err(Error::Shape(format!(
                "{prefix}: batch norm needs NCHW, got {s:?}"
            )));
        }
        let c = s[1];
        match self.bn {
            BnMode::Batch => {
                if s[0] < 2 {
                    return Err(Error::Invalid(format!(
                        "{prefix}: batch statistics need at least 2 samples"
                    )));
                }
                let inv_n = 1.0 / (s[0] * s[2] * s[3]) as f64;
                let sum = self.g.sum_to(x, &[1, c, 1, 1]);
                let mean = self.g.scale(sum, inv_n);
                let mb = self.g.broadcast_to(mean, &s);
                let xc = self.g.sub(x, mb);
                let sq = self.g.square(xc);
                let ss = self.g.sum_to(sq, &[1, c, 1, 1]);
                let var = self.g.scale(ss, inv_n);
                let d = self.g.add_scalar(var, BN_EPS);
                let d = self.g.sqrt(d);
                let d = self.g.broadcast_to(d, &s);
                self.stats.push(BatchStat {
                    name: prefix.into(),
                    mean,
                    var,
                });
                Ok(self.g.div(xc, d))
            }
            BnMode::Running => {
                let mean = self.channel_const(&format!("{prefix}.mean"), |m| -(m as f64))?;
                let inv = self.channel_const(&format!("{prefix}.var"), |v| {
                    1.0 / libm::sqrt(v as f64 + BN_EPS)
                })?;
                let xc = self.g.add_broadcast(x, mean);
                Ok(self.g.mul_broadcast(xc, inv))
            }
        }
    }

    /// Conditional batch norm: normalize, then scale and shift by MLPs of `cond [b,k]`.
    pub fn cbn(&mut self, prefix: &str, x: NodeId, cond: NodeId) -> Result<NodeId> {
        let s = self.g.shape(x).to_vec();
        if self.g.shape(cond)[0] != s[0] {
            return Err(Error::Shape(format!(
                "{prefix}: condition batch differs from features"
            )));
        }
        let xn = self.batch_norm(prefix, x)?;
        let gamma = self.mlp(&format!("{prefix}.gamma"), cond)?;
        let beta = self.mlp(&format!("{prefix}.beta"), cond)?;
        let gamma = self.g.reshape(gamma, &[s[0], s[1], 1, 1]);
        let beta = self.g.reshape(beta, &[s[0], s[1], 1, 1]);
        let y = self.g.mul_broadcast(xn, gamma);
        Ok(self.g.add_broadcast(y, beta))
    }
}
