use alloc::format;

use super::net::{BnMode, Net};
use super::ModelBundle;
use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

fn check_batch<T: Real>(g: &Graph<T>, x: NodeId, width: usize, what: &str) -> Result<usize> {
    match *g.shape(x) {
        [b, w] if w == width => Ok(b),
        ref s => Err(Error::Shape(format!(
            "{what} must be [batch, {width}], got {s:?}"
        ))),
    }
}

/// Micro patches `[b,3,S,S]` from latents `z [b,L]` and micro coordinates `c [b,coord_dim]`.
pub fn generator_graph<T: Real>(net: &mut Net<'_, T>, z: NodeId, c: NodeId) -> Result<NodeId> {
    let arch = net.bundle.arch;
    let b = check_batch(net.g, z, arch.latent_dim, "latent batch")?;
    if check_batch(net.g, c, arch.coord_dim, "coordinate batch")? != b {
        return Err(Error::Shape(
            "latent and coordinate batches differ in size".into(),
        ));
    }
    let ch = arch.base_channels;
    let cond = net.g.concat(&[z, c], 1);
    let h = net.dense("g.in", cond)?;
    let side = arch.start_side()?;
    let mut h = net.g.reshape(h, &[b, ch, side, side]);
    for (k, up) in arch.stride_plan()?.into_iter().enumerate() {
        let p = format!("g.block{k}");
        let t = net.cbn(&format!("{p}.bn1"), h, cond)?;
        let t = net.g.relu(t);
        let t = if up { net.g.upsample2x(t) } else { t };
        let t = net.conv(&format!("{p}.conv1"), t, 1, 1)?;
        let t = net.cbn(&format!("{p}.bn2"), t, cond)?;
        let t = net.g.relu(t);
        let t = net.conv(&format!("{p}.conv2"), t, 1, 1)?;
        let skip = if up { net.g.upsample2x(h) } else { h };
        h = net.g.add(skip, t);
    }
    let h = net.cbn("g.out.bn", h, cond)?;
    let h = net.g.relu(h);
    let h = net.conv("g.out.conv", h, 1, 1)?;
    Ok(net.g.tanh(h))
}

/// Assembles `[b*N*M,3,S,S]` micro patches (row-major within each macro) into `[b,3,N*S,M*S]`.
pub fn merge_macro_nodes<T: Real>(g: &mut Graph<T>, patches: NodeId, n: usize, m: usize) -> NodeId {
    let s = g.shape(patches).to_vec();
    let (ph, pw) = (s[2], s[3]);
    let b = s[0] / (n * m);
    let x = g.reshape(patches, &[b, n, m, s[1], ph, pw]);
    let x = g.permute(x, &[0, 3, 1, 4, 2, 5]);
    g.reshape(x, &[b, s[1], n * ph, m * pw])
}

/// `<embed(c), pooled>` per sample, `[b,1]`. `embed` maps coordinates to feature space, `[features, coord_dim]`.
pub fn projection_score<T: Real>(
    g: &mut Graph<T>,
    pooled: NodeId,
    c: NodeId,
    embed: NodeId,
) -> Result<NodeId> {
    let (ps, cs, es) = (
        g.shape(pooled).to_vec(),
        g.shape(c).to_vec(),
        g.shape(embed).to_vec(),
    );
    if ps.len() != 2
        || cs.len() != 2
        || es.len() != 2
        || ps[0] != cs[0]
        || es[0] != ps[1]
        || es[1] != cs[1]
    {
        return Err(Error::Shape(format!(
            "projection of {cs:?} by {es:?} onto {ps:?}"
        )));
    }
    let e = g.linear(c, embed, None);
    let prod = g.mul(e, pooled);
    Ok(g.sum_to(prod, &[ps[0], 1]))
}

/// Node handles produced by [`discriminator_graph`].
#[derive(Clone, Copy, Debug)]
pub struct DiscNodes {
    /// `[b,1]`
    pub score: NodeId,
    /// `[b,coord_dim]`, inside (-1, 1).
    pub coord: NodeId,
    /// `[b,latent_dim]` when the latent head exists.
    pub latent: Option<NodeId>,
    /// Pooled trunk features `[b,features]`.
    pub pooled: NodeId,
}

/// Scores macro patches `x [b,3,N*S,M*S]`. The projection term is added when
/// `c` is given and the architecture enables it.
pub fn discriminator_graph<T: Real>(
    net: &mut Net<'_, T>,
    x: NodeId,
    c: Option<NodeId>,
) -> Result<DiscNodes> {
    let arch = net.bundle.arch;
    let (mh, mw) = arch.macro_hw();
    let b = match *net.g.shape(x) {
        [b, 3, h, w] if h == mh && w == mw => b,
        ref s => {
            return Err(Error::Shape(format!(
                "macro patches must be [batch,3,{mh},{mw}], got {s:?}"
            )))
        }
    };
    let mut h = x;
    for k in 0..arch.d_blocks {
        let p = format!("d.block{k}");
        let pre = if k == 0 { h } else { net.g.relu(h) };
        let t = net.conv(&format!("{p}.conv1"), pre, 1, 1)?;
        let t = net.g.relu(t);
        let t = net.conv(&format!("{p}.conv2"), t, 2, 1)?;
        let skip = net.conv(&format!("{p}.skip"), h, 2, 0)?;
        h = net.g.add(t, skip);
    }
    let h = net.g.relu(h);
    let f = arch.d_features();
    let pooled = net.g.sum_to(h, &[b, f, 1, 1]);
    let pooled = net.g.reshape(pooled, &[b, f]);
    let mut score = net.dense("d.score", pooled)?;
    if let (Some(c), true) = (c, arch.projection) {
        check_batch(net.g, c, arch.coord_dim, "macro coordinates")?;
        let embed = net.weight("d.proj.w")?;
        let proj = projection_score(net.g, pooled, c, embed)?;
        score = net.g.add(score, proj);
    }
    let coord = net.mlp("d.a", pooled)?;
    let coord = net.g.tanh(coord);
    let latent = if arch.q_head {
        let q = net.mlp("d.q", pooled)?;
        Some(net.g.tanh(q))
    } else {
        None
    };
    Ok(DiscNodes {
        score,
        coord,
        latent,
        pooled,
    })
}

/// Inference-mode micro patches for `z [b,L]` and `c [b,coord_dim]`.
pub fn generator_forward(
    bundle: &ModelBundle,
    z: &Tensor<f32>,
    c: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    let mut g = Graph::new();
    let zn = g.constant(z.clone());
    let cn = g.constant(c.clone());
    let mut net = Net::new(&mut g, bundle, BnMode::Running);
    let out = generator_graph(&mut net, zn, cn)?;
    g.check_finite()?;
    Ok(g.value(out).clone())
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorOutput {
    /// `[b,1]`
    pub score: Tensor<f32>,
    /// `[b,coord_dim]`
    pub coord_pred: Tensor<f32>,
    /// `[b,latent_dim]` when the latent head exists.
    pub latent_pred: Option<Tensor<f32>>,
}

pub fn discriminator_forward(
    bundle: &ModelBundle,
    macro_patches: &Tensor<f32>,
    c: Option<&Tensor<f32>>,
) -> Result<DiscriminatorOutput> {
    let mut g = Graph::new();
    let x = g.constant(macro_patches.clone());
    let c = c.map(|c| g.constant(c.clone()));
    let mut net = Net::new(&mut g, bundle, BnMode::Running);
    let d = discriminator_graph(&mut net, x, c)?;
    g.check_finite()?;
    Ok(DiscriminatorOutput {
        score: g.value(d.score).clone(),
        coord_pred: g.value(d.coord).clone(),
        latent_pred: d.latent.map(|q| g.value(q).clone()),
    })
}
