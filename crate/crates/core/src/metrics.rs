//! Seam statistics and the coordinate-head error.

use alloc::format;
use alloc::vec::Vec;

use crate::coords::PatchLayout;
use crate::error::{Error, Result};
use crate::nn::{discriminator_forward, ModelBundle};
use crate::tensor::Tensor;

#[derive(Default)]
struct Acc {
    boundary: (f64, usize),
    interior: (f64, usize),
}

impl Acc {
    fn add(&mut self, crosses: bool, d: f64) {
        let slot = if crosses {
            &mut self.boundary
        } else {
            &mut self.interior
        };
        slot.0 += d;
        slot.1 += 1;
    }

    fn energy(&self) -> f64 {
        let mean = |(s, n): (f64, usize)| if n == 0 { 0.0 } else { s / n as f64 };
        mean(self.boundary) - mean(self.interior)
    }
}

/// Mean absolute difference over adjacent pixel pairs that straddle a cell
/// boundary, minus the same over pairs inside a cell. Only pairs for which
/// `keep(cell_a, cell_b)` holds are counted.
pub fn seam_energy_where(
    image: &Tensor<f32>,
    cell: usize,
    keep: impl Fn((usize, usize), (usize, usize)) -> bool,
) -> Result<f64> {
    let (ch, h, w) = match *image.shape() {
        [c, h, w] => (c, h, w),
        ref s => return Err(Error::Shape(format!("image must be [C,H,W], got {s:?}"))),
    };
    if cell == 0 || h % cell != 0 || w % cell != 0 {
        return Err(Error::Shape(format!(
            "{h}x{w} image is not a grid of {cell}-pixel cells"
        )));
    }
    let d = image.data();
    let mut acc = Acc::default();
    for c in 0..ch {
        for y in 0..h {
            for x in 0..w {
                let v = d[(c * h + y) * w + x] as f64;
                let here = (y / cell, x / cell);
                if x + 1 < w {
                    let there = (y / cell, (x + 1) / cell);
                    if keep(here, there) {
                        acc.add(
                            here != there,
                            libm::fabs(v - d[(c * h + y) * w + x + 1] as f64),
                        );
                    }
                }
                if y + 1 < h {
                    let there = ((y + 1) / cell, x / cell);
                    if keep(here, there) {
                        acc.add(
                            here != there,
                            libm::fabs(v - d[(c * h + y + 1) * w + x] as f64),
                        );
                    }
                }
            }
        }
    }
    Ok(acc.energy())
}

/// Seam energy of a full canvas; positive values mean visible seams.
pub fn seam_energy(image: &Tensor<f32>, layout: &PatchLayout) -> Result<f64> {
    let (h, w) = layout.canvas_hw();
    if image.shape().get(1..) != Some(&[h, w][..]) {
        return Err(Error::Shape(format!(
            "image {:?} does not match canvas {h}x{w}",
            image.shape()
        )));
    }
    seam_energy_where(image, layout.s, |_, _| true)
}

/// Seam energy of an extended canvas restricted to pairs touching the outer
/// `extend` rings of cells, i.e. the region outside the training canvas.
pub fn ring_seam_energy(image: &Tensor<f32>, layout: &PatchLayout, extend: usize) -> Result<f64> {
    let (rows, cols) = (layout.grid_h + 2 * extend, layout.grid_w + 2 * extend);
    if image.shape().get(1..) != Some(&[rows * layout.s, cols * layout.s][..]) {
        return Err(Error::Shape(format!(
            "image {:?} is not the extended canvas",
            image.shape()
        )));
    }
    let outer = |(r, c): (usize, usize)| {
        r < extend || c < extend || r >= rows - extend || c >= cols - extend
    };
    seam_energy_where(image, layout.s, |a, b| outer(a) || outer(b))
}

/// Mean Euclidean distance between true macro coordinates and the coordinate head's predictions.
pub fn coord_head_error(
    bundle: &ModelBundle,
    patches: &Tensor<f32>,
    coords: &Tensor<f32>,
) -> Result<f64> {
    let out = discriminator_forward(bundle, patches, Some(coords))?;
    let dim = coords.shape()[1];
    let pred = out.coord_pred.data();
    let errs: Vec<f64> = coords
        .data()
        .chunks(dim)
        .zip(pred.chunks(dim))
        .map(|(a, b)| {
            libm::sqrt(
                a.iter()
                    .zip(b)
                    .map(|(x, y)| {
                        let d = (x - y) as f64;
                        d * d
                    })
                    .sum(),
            )
        })
        .collect();
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}
