use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{gradient_penalty, latent, spatial, wasserstein};
use super::{gp_mix, sample_latent, Adam, TrainConfig};
use crate::autodiff::{Graph, NodeId};
use crate::coords::{
    extended_macro_anchors, macro_coord_at, micro_coord_matrix_at, PatchLayout, Topology,
};
use crate::data::{sample_real_macro, Dataset};
use crate::error::{Error, Result};
use crate::nn::{
    discriminator_graph, generator_graph, merge_macro_nodes, BnMode, ModelBundle, Net, BN_MOMENTUM,
};
use crate::tensor::Tensor;

/// Which generator parameters an update may change.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Freeze {
    None,
    /// Only the input projection and the first residual block train.
    AllButFirstTwo,
}

impl Freeze {
    pub fn trains(self, name: &str) -> bool {
        match self {
            Freeze::None => true,
            Freeze::AllButFirstTwo => {
                !name.starts_with("g.")
                    || name.starts_with("g.in.")
                    || name.starts_with("g.block0.")
            }
        }
    }
}

/// Loss values from one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub l_w: f64,
    pub l_gp: f64,
    /// Coordinate error on real patches (the discriminator's term).
    pub l_s: f64,
    /// Coordinate error on generated patches (the generator's term).
    pub l_s_fake: f64,
    pub l_q: f64,
    pub d_loss: f64,
    /// `mean D(fake) + alpha*l_s_fake (+ beta_q*l_q)`, i.e. `-L_W` up to a term the generator cannot move.
    pub g_loss: f64,
}

/// Owns the models, optimizers and random stream of a run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub bundle: ModelBundle,
    pub layout: PatchLayout,
    pub cfg: TrainConfig,
    pub opt_g: Adam,
    pub opt_d: Adam,
    /// Latent-head updates of the discriminator trunk and `Q`.
    pub opt_q: Adam,
    pub rng: ChaCha8Rng,
    pub step: u64,
    pub freeze: Freeze,
    /// Macro positions added on each side for beyond-boundary post-training.
    pub extend: usize,
}

fn value(g: &Graph<f32>, id: NodeId) -> f64 {
    g.value(id).item() as f64
}

fn collect(g: &Graph<f32>, keep: impl Fn(&str) -> bool) -> (Vec<String>, Vec<NodeId>) {
    g.params()
        .filter(|(n, _)| keep(n))
        .map(|(n, id)| (String::from(n), id))
        .unzip()
}

fn named(names: Vec<String>, grads: Vec<Tensor<f32>>) -> Vec<(String, Tensor<f32>)> {
    names.into_iter().zip(grads).collect()
}

fn is_q(name: &str) -> bool {
    name.starts_with("d.q.")
}

fn is_trunk(name: &str) -> bool {
    name.starts_with("d.block")
}

impl Trainer {
    pub fn new(bundle: ModelBundle, layout: PatchLayout, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        bundle.validate()?;
        let a = bundle.arch;
        if a.macro_span != (layout.n, layout.m)
            || a.micro_size != layout.s
            || a.coord_dim != layout.coord_dim()
        {
            return Err(Error::Invalid(format!(
                "architecture (N{},M{},S{},dim {}) does not match layout (N{},M{},S{},dim {})",
                a.macro_span.0,
                a.macro_span.1,
                a.micro_size,
                a.coord_dim,
                layout.n,
                layout.m,
                layout.s,
                layout.coord_dim()
            )));
        }
        let adam = |lr| Adam::new(lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
        Ok(Self {
            bundle,
            layout,
            opt_g: adam(cfg.lr_g),
            opt_d: adam(cfg.lr_d),
            opt_q: adam(cfg.lr_d),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            step: 0,
            freeze: Freeze::None,
            extend: 0,
            cfg,
        })
    }

    /// Switches to beyond-boundary post-training: fresh optimizers, generated
    /// anchors over the macro grid grown by `extend`, and a frozen generator
    /// apart from its first two layers.
    pub fn begin_posttrain(&mut self, extend: usize) -> Result<()> {
        if self.layout.topology == Topology::Cylindrical && extend > 0 {
            return Err(Error::Invalid(
                "a cylindrical layout cannot be extended horizontally".into(),
            ));
        }
        extended_macro_anchors(&self.layout, extend)?;
        let c = self.cfg;
        let adam = |lr| Adam::new(lr, c.beta1, c.beta2, c.adam_eps);
        self.opt_g = adam(c.lr_g);
        self.opt_d = adam(c.lr_d);
        self.opt_q = adam(c.lr_d);
        self.freeze = Freeze::AllButFirstTwo;
        self.extend = extend;
        Ok(())
    }

    fn fake_positions(&mut self, real: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
        if self.extend == 0 {
            return Ok(real.to_vec());
        }
        let grid = extended_macro_anchors(&self.layout, self.extend)?;
        let pick = Uniform::new(0, grid.len()).expect("non-empty grid");
        Ok((0..real.len())
            .map(|_| {
                let ((i, j), _) = grid[pick.sample(&mut self.rng)];
                (i as f64, j as f64)
            })
            .collect())
    }

    /// One discriminator update followed by one generator update.
    /// On error the trainer is left exactly as before the call.
    pub fn train_step(&mut self, data: &Dataset) -> Result<StepMetrics> {
        let snapshot = self.clone();
        let out = self.step_inner(data);
        if out.is_err() {
            *self = snapshot;
        }
        out
    }

    fn step_inner(&mut self, data: &Dataset) -> Result<StepMetrics> {
        let layout = self.layout;
        let arch = self.bundle.arch;
        let b = self.cfg.batch;
        let w = self.cfg.weights;
        let nm = layout.n * layout.m;

        let reals = (0..b)
            .map(|_| sample_real_macro(data, &layout, self.cfg.sampling, &mut self.rng))
            .collect::<Result<Vec<_>>>()?;
        let x_real = Tensor::stack(&reals.iter().map(|r| r.patch.clone()).collect::<Vec<_>>())?;
        let c_real = Tensor::<f32>::new(
            alloc::vec![b, arch.coord_dim],
            reals
                .iter()
                .flat_map(|r| r.coord.to_vec())
                .map(|v| v as f32)
                .collect(),
        )?;
        let real_pos: Vec<(f64, f64)> = reals.iter().map(|r| r.pos).collect();
        let fake_pos = self.fake_positions(&real_pos)?;
        let mut c_micro = Vec::with_capacity(b * nm * arch.coord_dim);
        let mut c_fake = Vec::with_capacity(b * arch.coord_dim);
        let mut in_range = Vec::with_capacity(b);
        for &(i, j) in &fake_pos {
            let block = micro_coord_matrix_at(&layout, i, j);
            c_micro.extend(
                block
                    .entries
                    .iter()
                    .flat_map(|c| c.to_vec())
                    .map(|v| v as f32),
            );
            let c = macro_coord_at(&layout, i, j);
            in_range.push(c.in_unit_range());
            c_fake.extend(c.to_vec().into_iter().map(|v| v as f32));
        }
        let c_micro = Tensor::new(alloc::vec![b * nm, arch.coord_dim], c_micro)?;
        let c_fake = Tensor::new(alloc::vec![b, arch.coord_dim], c_fake)?;
        let z = sample_latent(arch.latent_dim, b, &mut self.rng);
        let z_micro = Tensor::new(
            alloc::vec![b * nm, arch.latent_dim],
            z.data()
                .chunks(arch.latent_dim)
                .flat_map(|row| row.repeat(nm))
                .collect(),
        )?;
        let mix = Uniform::new_inclusive(0.0f32, 1.0).expect("valid bounds");
        let eps: Vec<f32> = (0..b).map(|_| mix.sample(&mut self.rng)).collect();

        let freeze = self.freeze;
        self.bundle.update_spectral_state(|n| freeze.trains(n));

        // generator forward, kept for the generator update
        let mut gg = Graph::<f32>::new();
        let (fake, stats) = {
            let zn = gg.constant(z_micro);
            let cn = gg.constant(c_micro);
            let mut net = Net::new(&mut gg, &self.bundle, BnMode::Batch);
            let patches = generator_graph(&mut net, zn, cn)?;
            let stats = core::mem::take(&mut net.stats);
            (
                merge_macro_nodes(&mut gg, patches, layout.n, layout.m),
                stats,
            )
        };
        gg.check_finite()?;
        let fake_value = gg.value(fake).clone();

        // discriminator update
        let mut m = StepMetrics {
            step: self.step + 1,
            ..Default::default()
        };
        {
            let mut dg = Graph::<f32>::with_higher_order();
            let xr = dg.constant(x_real.clone());
            let xf = dg.constant(fake_value.clone());
            let x = dg.concat(&[xr, xf], 0);
            let cr = dg.constant(c_real.clone());
            let cf = dg.constant(c_fake.clone());
            let c = dg.concat(&[cr, cf], 0);
            let s_hat = dg.input("s_hat", gp_mix(&fake_value, &x_real, &eps)?);
            let mut net = Net::new(&mut dg, &self.bundle, BnMode::Running);
            let d = discriminator_graph(&mut net, x, Some(c))?;
            let dh = discriminator_graph(&mut net, s_hat, Some(cr))?;
            let d_real = dg.slice(d.score, 0, 0, b);
            let d_fake = dg.slice(d.score, 0, b, b);
            let l_w = wasserstein(&mut dg, d_real, d_fake);
            let gp = gradient_penalty(&mut dg, dh.score, s_hat)?;
            let coord_real = dg.slice(d.coord, 0, 0, b);
            let l_s = spatial(&mut dg, cr, coord_real, None)?;
            let t1 = dg.scale(gp, w.lambda);
            let t2 = dg.scale(l_s, w.alpha);
            let loss = dg.add(l_w, t1);
            let loss = dg.add(loss, t2);
            dg.check_finite()?;
            m.l_w = value(&dg, l_w);
            m.l_gp = value(&dg, gp);
            m.l_s = value(&dg, l_s);
            m.d_loss = value(&dg, loss);
            let (names, ids) = collect(&dg, |n| n.starts_with("d.") && !is_q(n));
            let grads = dg.gradients(loss, &ids)?;
            self.opt_d
                .step(&mut self.bundle.params, &named(names, grads))?;
        }

        // generator update (and the latent head)
        {
            let cf = gg.constant(c_fake);
            let mut net = Net::new(&mut gg, &self.bundle, BnMode::Running);
            let d = discriminator_graph(&mut net, fake, Some(cf))?;
            let adv = gg.mean_all(d.score);
            let mask = (self.extend > 0).then_some(in_range.as_slice());
            let l_s = spatial(&mut gg, cf, d.coord, mask)?;
            let t = gg.scale(l_s, w.alpha);
            let mut loss = gg.add(adv, t);
            let mut l_q = None;
            if let Some(q) = d.latent {
                let zn = gg.constant(z);
                let lq = latent(&mut gg, zn, q)?;
                let t = gg.scale(lq, w.beta_q);
                loss = gg.add(loss, t);
                l_q = Some(t);
                m.l_q = value(&gg, lq);
            }
            gg.check_finite()?;
            m.l_s_fake = value(&gg, l_s);
            m.g_loss = value(&gg, loss);
            let (names, ids) = collect(&gg, |n| n.starts_with("g.") && freeze.trains(n));
            let grads = named(names, gg.gradients(loss, &ids)?);
            let q_grads = match l_q {
                Some(t) => {
                    let (names, ids) = collect(&gg, |n| is_trunk(n) || is_q(n));
                    Some(named(names, gg.gradients(t, &ids)?))
                }
                None => None,
            };
            self.opt_g.step(&mut self.bundle.params, &grads)?;
            if let Some(qg) = q_grads {
                self.opt_q.step(&mut self.bundle.params, &qg)?;
            }
        }

        for s in stats {
            for (suffix, id) in [("mean", s.mean), ("var", s.var)] {
                let batch = gg.value(id).data().to_vec();
                let buf = self
                    .bundle
                    .buffers
                    .get_mut(&format!("{}.{suffix}", s.name))
                    .ok_or_else(|| Error::Missing(format!("{}.{suffix}", s.name)))?;
                for (r, v) in buf.data_mut().iter_mut().zip(batch) {
                    *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
                }
            }
        }
        self.step += 1;
        Ok(m)
    }

    /// Runs `steps` updates, handing each step's metrics to `observe`.
    pub fn run(
        &mut self,
        data: &Dataset,
        steps: u64,
        mut observe: impl FnMut(&StepMetrics),
    ) -> Result<()> {
        for _ in 0..steps {
            let m = self.train_step(data)?;
            observe(&m);
        }
        Ok(())
    }
}

/// Fine-tunes a trained planar model so it can render `extend` extra macro
/// positions on every side. `extend = 0` leaves the trainer untouched.
pub fn beyond_boundary_posttrain(
    trainer: &mut Trainer,
    data: &Dataset,
    extend: usize,
    steps: u64,
    observe: impl FnMut(&StepMetrics),
) -> Result<()> {
    if extend == 0 {
        return Ok(());
    }
    trainer.begin_posttrain(extend)?;
    trainer.run(data, steps, observe)
}
