//! Inference: assembling canvases from independently generated micro patches.

use alloc::format;
use alloc::vec::Vec;

use crate::coords::{
    coord_window, extrapolated_coord_matrix, full_coord_matrix, interp_coords, merge_phi,
    micro_coord_matrix, CoordMatrix, PatchLayout, Topology,
};
use crate::error::{Error, Result};
use crate::nn::{discriminator_forward, generator_forward, ModelBundle};
use crate::tensor::Tensor;
use crate::train::slerp;

fn check_latent(bundle: &ModelBundle, z: &[f32]) -> Result<()> {
    if z.len() != bundle.arch.latent_dim {
        return Err(Error::Shape(format!(
            "latent of length {} for dimension {}",
            z.len(),
            bundle.arch.latent_dim
        )));
    }
    Ok(())
}

/// Generates one micro patch per entry of `coords` with the shared latent `z`.
/// Returns `[rows*cols, 3, S, S]` in row-major cell order.
pub fn generate_cells(
    bundle: &ModelBundle,
    z: &[f32],
    coords: &CoordMatrix,
) -> Result<Tensor<f32>> {
    check_latent(bundle, z)?;
    let n = coords.entries.len();
    let zs = Tensor::new(alloc::vec![n, z.len()], z.repeat(n))?;
    let c = coords.to_tensor::<f32>();
    if c.shape()[1] != bundle.arch.coord_dim {
        return Err(Error::Shape(format!(
            "{}-d coordinates for a {}-d model",
            c.shape()[1],
            bundle.arch.coord_dim
        )));
    }
    generator_forward(bundle, &zs, &c)
}

/// Generates every cell of `coords` and merges them into one image.
pub fn render_coords(bundle: &ModelBundle, z: &[f32], coords: &CoordMatrix) -> Result<Tensor<f32>> {
    let cells = generate_cells(bundle, z, coords)?;
    let patches: Vec<_> = (0..coords.entries.len())
        .map(|k| cells.index_outer(k))
        .collect();
    merge_phi(&patches, coords.rows, coords.cols)
}

/// The full training canvas for latent `z`.
pub fn generate_full(bundle: &ModelBundle, layout: &PatchLayout, z: &[f32]) -> Result<Tensor<f32>> {
    render_coords(bundle, z, &full_coord_matrix(layout))
}

/// The macro patch at `anchor`, generated on its own.
pub fn generate_macro(
    bundle: &ModelBundle,
    layout: &PatchLayout,
    z: &[f32],
    anchor: (usize, usize),
) -> Result<Tensor<f32>> {
    render_coords(bundle, z, &micro_coord_matrix(layout, anchor.0, anchor.1)?)
}

/// The canvas grown by `extend` cells on every side (vertically only on a cylinder).
pub fn generate_extended(
    bundle: &ModelBundle,
    layout: &PatchLayout,
    z: &[f32],
    extend: usize,
) -> Result<Tensor<f32>> {
    let h = if layout.topology == Topology::Planar {
        extend
    } else {
        0
    };
    render_coords(bundle, z, &extrapolated_coord_matrix(layout, extend, h)?)
}

/// `repeats` horizontal laps around a cylindrical canvas.
pub fn generate_panorama(
    bundle: &ModelBundle,
    layout: &PatchLayout,
    z: &[f32],
    repeats: usize,
) -> Result<Tensor<f32>> {
    if layout.topology != Topology::Cylindrical {
        return Err(Error::Invalid("panoramas need a cylindrical layout".into()));
    }
    if repeats == 0 {
        return Err(Error::Invalid("panorama with zero laps".into()));
    }
    render_coords(
        bundle,
        z,
        &coord_window(layout, 0, 0, layout.grid_h, repeats * layout.grid_w),
    )
}

/// Result of generating from a guide patch.
#[derive(Clone, Debug, PartialEq)]
pub struct Guided {
    pub image: Tensor<f32>,
    /// Predicted macro coordinate of the guide.
    pub coord: Vec<f32>,
    /// Latent recovered from the guide.
    pub z_est: Vec<f32>,
}

/// Recovers a latent and a position from `guide` (`[3, N*S, M*S]`) and renders the full canvas from that latent.
pub fn patch_guided_generate(
    bundle: &ModelBundle,
    layout: &PatchLayout,
    guide: &Tensor<f32>,
) -> Result<Guided> {
    if !bundle.arch.q_head {
        return Err(Error::Invalid("the model has no latent head".into()));
    }
    let (mh, mw) = layout.macro_hw();
    if guide.shape() != [3, mh, mw] {
        return Err(Error::Shape(format!(
            "guide {:?} is not a {mh}x{mw} macro patch",
            guide.shape()
        )));
    }
    let out = discriminator_forward(bundle, &guide.clone().reshape(&[1, 3, mh, mw])?, None)?;
    let z_est = out
        .latent_pred
        .ok_or_else(|| Error::Missing("d.q".into()))?
        .into_data();
    let image = generate_full(bundle, layout, &z_est)?;
    Ok(Guided {
        image,
        coord: out.coord_pred.into_data(),
        z_est,
    })
}

fn steps_t(steps: usize) -> Result<Vec<f64>> {
    if steps < 2 {
        return Err(Error::Invalid(format!(
            "interpolation needs at least 2 steps, got {steps}"
        )));
    }
    Ok((0..steps)
        .map(|k| {
            if k + 1 == steps {
                1.0
            } else {
                k as f64 / (steps - 1) as f64
            }
        })
        .collect())
}

/// Full canvases along the slerp path from `z1` to `z2`, stacked top to bottom.
pub fn latent_filmstrip(
    bundle: &ModelBundle,
    layout: &PatchLayout,
    z1: &[f32],
    z2: &[f32],
    steps: usize,
) -> Result<Tensor<f32>> {
    let frames = steps_t(steps)?
        .into_iter()
        .map(|t| generate_full(bundle, layout, &slerp(z1, z2, t)?))
        .collect::<Result<Vec<_>>>()?;
    merge_phi(&frames, steps, 1)
}

/// Macro patches for one latent while the position slides from anchor `a` to anchor `b`, stacked top to bottom.
pub fn coord_filmstrip(
    bundle: &ModelBundle,
    layout: &PatchLayout,
    z: &[f32],
    a: (usize, usize),
    b: (usize, usize),
    steps: usize,
) -> Result<Tensor<f32>> {
    let ca = micro_coord_matrix(layout, a.0, a.1)?;
    let cb = micro_coord_matrix(layout, b.0, b.1)?;
    let frames = steps_t(steps)?
        .into_iter()
        .map(|t| {
            let entries = ca
                .entries
                .iter()
                .zip(&cb.entries)
                .map(|(&p, &q)| interp_coords(p, q, t))
                .collect::<Result<Vec<_>>>()?;
            render_coords(
                bundle,
                z,
                &CoordMatrix {
                    entries,
                    ..ca.clone()
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    merge_phi(&frames, steps, 1)
}
