//! Micro/macro coordinate systems and the merge/crop pair that ties generated
//! patches to real image crops.
//!
//! Every axis is normalized to `[-1, 1]`. A planar axis with `K` cells puts
//! cell `k` at `(2k - (K-1)) / (K-1)`, which is exactly antisymmetric. A
//! cylindrical horizontal axis with `W` columns puts column `j` at
//! `(2j - W) / W` and embeds it on the unit circle, so the last column is as far
//! from the first as from its other neighbour.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    Planar,
    /// Horizontally periodic; used for panoramas.
    Cylindrical,
}

/// Geometry binding micro patches, macro patches and the full canvas.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchLayout {
    pub grid_h: usize,
    pub grid_w: usize,
    /// Micro patches per macro patch, vertically.
    pub n: usize,
    /// Micro patches per macro patch, horizontally.
    pub m: usize,
    /// Micro patch edge in pixels.
    pub s: usize,
    pub topology: Topology,
}

impl PatchLayout {
    pub fn new(
        grid_h: usize,
        grid_w: usize,
        n: usize,
        m: usize,
        s: usize,
        topology: Topology,
    ) -> Result<Self> {
        if s == 0 || n == 0 || m == 0 || n > grid_h || m > grid_w {
            return Err(Error::Invalid(format!(
                "layout needs 1 <= N <= grid_h and 1 <= M <= grid_w, got N={n} M={m} grid={grid_h}x{grid_w} S={s}"
            )));
        }
        Ok(Self {
            grid_h,
            grid_w,
            n,
            m,
            s,
            topology,
        })
    }

    pub fn planar(grid: usize, n: usize, s: usize) -> Result<Self> {
        Self::new(grid, grid, n, n, s, Topology::Planar)
    }

    /// Canvas size in pixels, `(height, width)`.
    pub fn canvas_hw(&self) -> (usize, usize) {
        (self.grid_h * self.s, self.grid_w * self.s)
    }

    pub fn macro_hw(&self) -> (usize, usize) {
        (self.n * self.s, self.m * self.s)
    }

    /// Number of distinct macro anchors per axis.
    pub fn macro_positions(&self) -> (usize, usize) {
        let rows = self.grid_h - self.n + 1;
        match self.topology {
            Topology::Planar => (rows, self.grid_w - self.m + 1),
            Topology::Cylindrical => (rows, self.grid_w),
        }
    }

    pub fn anchors(&self) -> Vec<(usize, usize)> {
        let (r, c) = self.macro_positions();
        (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).collect()
    }

    /// Dimensionality of a coordinate vector fed to the networks.
    pub fn coord_dim(&self) -> usize {
        match self.topology {
            Topology::Planar => 2,
            Topology::Cylindrical => 3,
        }
    }

    fn check_anchor(&self, i: usize, j: usize) -> Result<()> {
        let (r, c) = self.macro_positions();
        if i >= r || j >= c {
            return Err(Error::Invalid(format!(
                "macro anchor ({i},{j}) outside {r}x{c} positions"
            )));
        }
        Ok(())
    }
}

/// A micro (`c''`) or macro (`c'`) coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coord {
    Planar { y: f64, x: f64 },
    Cylindrical { cos: f64, sin: f64, y: f64 },
}

impl Coord {
    pub fn dim(&self) -> usize {
        match self {
            Coord::Planar { .. } => 2,
            Coord::Cylindrical { .. } => 3,
        }
    }

    /// Network-facing vector: `(y, x)` or `(cos, sin, y)`.
    pub fn to_vec(&self) -> Vec<f64> {
        match *self {
            Coord::Planar { y, x } => vec![y, x],
            Coord::Cylindrical { cos, sin, y } => vec![cos, sin, y],
        }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match *v {
            [y, x] => Ok(Coord::Planar { y, x }),
            [cos, sin, y] => Ok(Coord::Cylindrical { cos, sin, y }),
            _ => Err(Error::Invalid(format!(
                "coordinate of dimension {}",
                v.len()
            ))),
        }
    }

    /// True when every planar component lies in `[-1, 1]`.
    pub fn in_unit_range(&self) -> bool {
        self.to_vec().iter().all(|v| (-1.0..=1.0).contains(v))
    }
}

pub type MicroCoordinate = Coord;
pub type MacroCoordinate = Coord;

/// A rectangular block of micro coordinates (`C''`), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordMatrix {
    pub rows: usize,
    pub cols: usize,
    pub anchor: (usize, usize),
    pub entries: Vec<Coord>,
}

impl CoordMatrix {
    pub fn get(&self, r: usize, c: usize) -> Coord {
        self.entries[r * self.cols + c]
    }

    /// `[rows*cols, dim]` values, row-major over cells.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let dim = self.entries[0].dim();
        let data = self
            .entries
            .iter()
            .flat_map(|c| c.to_vec())
            .map(T::from_f64)
            .collect();
        Tensor::from_parts(vec![self.entries.len(), dim], data)
    }
}

pub type MicroCoordMatrix = CoordMatrix;
pub type FullCoordMatrix = CoordMatrix;

/// Normalized position of (possibly fractional or out-of-range) index `pos`
/// on an axis of `count` evenly spaced cells.
pub fn axis_value(count: usize, pos: f64) -> f64 {
    if count <= 1 {
        return 0.0;
    }
    let span = (count - 1) as f64;
    (2.0 * pos - span) / span
}

/// `K` evenly spaced values from -1 to 1; `[0]` when `K = 1`.
pub fn axis_coords(count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::Invalid("axis with zero cells".into()));
    }
    Ok((0..count).map(|k| axis_value(count, k as f64)).collect())
}

fn wrap_unit(v: f64) -> f64 {
    v - 2.0 * libm::floor((v + 1.0) / 2.0)
}

/// Maps a normalized horizontal value to the unit circle with `θ = π·v`.
/// The value is first wrapped into `[-1, 1)` so `v = 1` and `v = -1` coincide bitwise.
pub fn cylindrical_embed(v: f64) -> (f64, f64) {
    let theta = PI * wrap_unit(v);
    (libm::cos(theta), libm::sin(theta))
}

fn cyl_value(grid_w: usize, j: f64) -> f64 {
    let w = grid_w as f64;
    let j = j - w * libm::floor(j / w);
    (2.0 * j - w) / w
}

/// Micro coordinate of cell `(r, c)` at fractional indices (planar continuation beyond the grid).
fn micro_at(layout: &PatchLayout, r: f64, c: f64) -> Coord {
    let y = axis_value(layout.grid_h, r);
    match layout.topology {
        Topology::Planar => Coord::Planar {
            y,
            x: axis_value(layout.grid_w, c),
        },
        Topology::Cylindrical => {
            let (cos, sin) = cylindrical_embed(cyl_value(layout.grid_w, c));
            Coord::Cylindrical { cos, sin, y }
        }
    }
}

fn macro_at(layout: &PatchLayout, i: f64, j: f64) -> Coord {
    let (rows, cols) = layout.macro_positions();
    let y = axis_value(rows, i);
    match layout.topology {
        Topology::Planar => Coord::Planar {
            y,
            x: axis_value(cols, j),
        },
        Topology::Cylindrical => {
            let (cos, sin) = cylindrical_embed(cyl_value(layout.grid_w, j));
            Coord::Cylindrical { cos, sin, y }
        }
    }
}

/// The `N x M` block of micro coordinates that composes the macro patch anchored at `(i, j)`.
pub fn micro_coord_matrix(layout: &PatchLayout, i: usize, j: usize) -> Result<CoordMatrix> {
    layout.check_anchor(i, j)?;
    Ok(micro_block(
        layout,
        i as f64,
        j as f64,
        layout.n,
        layout.m,
        (i, j),
    ))
}

fn micro_block(
    layout: &PatchLayout,
    i: f64,
    j: f64,
    rows: usize,
    cols: usize,
    anchor: (usize, usize),
) -> CoordMatrix {
    let entries = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| micro_at(layout, i + r as f64, j + c as f64))
        .collect();
    CoordMatrix {
        rows,
        cols,
        anchor,
        entries,
    }
}

/// Micro coordinates for a macro patch at fractional anchor `(i, j)`, used by continuous sampling.
pub fn micro_coord_matrix_at(layout: &PatchLayout, i: f64, j: f64) -> CoordMatrix {
    micro_block(
        layout,
        i,
        j,
        layout.n,
        layout.m,
        (libm::floor(i) as usize, libm::floor(j) as usize),
    )
}

/// Normalized position of macro anchor `(i, j)` over the macro-position grid.
pub fn macro_coord(layout: &PatchLayout, i: usize, j: usize) -> Result<Coord> {
    layout.check_anchor(i, j)?;
    Ok(macro_at(layout, i as f64, j as f64))
}

pub fn macro_coord_at(layout: &PatchLayout, i: f64, j: f64) -> Coord {
    macro_at(layout, i, j)
}

/// All `grid_h x grid_w` micro coordinates.
pub fn full_coord_matrix(layout: &PatchLayout) -> CoordMatrix {
    micro_block(layout, 0.0, 0.0, layout.grid_h, layout.grid_w, (0, 0))
}

/// Micro coordinates for `rows x cols` cells starting at cell `(r0, c0)`; columns wrap on a cylinder.
pub fn coord_window(
    layout: &PatchLayout,
    r0: isize,
    c0: isize,
    rows: usize,
    cols: usize,
) -> CoordMatrix {
    micro_block(layout, r0 as f64, c0 as f64, rows, cols, (0, 0))
}

/// The full grid grown by `extend_v` cells above and below and `extend_h`
/// cells left and right, continuing the axis spacing past ±1. A cylinder
/// already wraps horizontally, so only vertical growth is allowed there.
pub fn extrapolated_coord_matrix(
    layout: &PatchLayout,
    extend_v: usize,
    extend_h: usize,
) -> Result<CoordMatrix> {
    if layout.topology == Topology::Cylindrical && extend_h > 0 {
        return Err(Error::Invalid(
            "horizontal extrapolation on a cylinder".into(),
        ));
    }
    if (extend_v > 0 && layout.grid_h < 2) || (extend_h > 0 && layout.grid_w < 2) {
        return Err(Error::Invalid(
            "cannot extrapolate an axis with a single cell".into(),
        ));
    }
    Ok(coord_window(
        layout,
        -(extend_v as isize),
        -(extend_h as isize),
        layout.grid_h + 2 * extend_v,
        layout.grid_w + 2 * extend_h,
    ))
}

/// Anchors and macro coordinates of the macro grid grown by `extend` positions per side (planar).
pub fn extended_macro_anchors(
    layout: &PatchLayout,
    extend: usize,
) -> Result<Vec<((isize, isize), Coord)>> {
    if layout.topology != Topology::Planar {
        return Err(Error::Invalid(
            "extended macro grid needs a planar layout".into(),
        ));
    }
    let (rows, cols) = layout.macro_positions();
    if extend > 0 && (rows < 2 || cols < 2) {
        return Err(Error::Invalid(
            "cannot extrapolate a macro axis with a single position".into(),
        ));
    }
    let e = extend as isize;
    let mut out = Vec::new();
    for i in -e..rows as isize + e {
        for j in -e..cols as isize + e {
            out.push(((i, j), macro_at(layout, i as f64, j as f64)));
        }
    }
    Ok(out)
}

/// Micro coordinates of the macro patch at a (possibly out-of-grid) anchor.
pub fn micro_coord_matrix_extended(layout: &PatchLayout, i: isize, j: isize) -> CoordMatrix {
    micro_block(layout, i as f64, j as f64, layout.n, layout.m, (0, 0))
}

/// Linear interpolation of coordinates; cylindrical coordinates interpolate the angle.
pub fn interp_coords(a: Coord, b: Coord, t: f64) -> Result<Coord> {
    if t == 0.0 {
        return Ok(a);
    }
    if t == 1.0 {
        return Ok(b);
    }
    let lerp = |p: f64, q: f64| (1.0 - t) * p + t * q;
    match (a, b) {
        (Coord::Planar { y: ya, x: xa }, Coord::Planar { y: yb, x: xb }) => Ok(Coord::Planar {
            y: lerp(ya, yb),
            x: lerp(xa, xb),
        }),
        (
            Coord::Cylindrical {
                cos: ca,
                sin: sa,
                y: ya,
            },
            Coord::Cylindrical {
                cos: cb,
                sin: sb,
                y: yb,
            },
        ) => {
            let theta = lerp(libm::atan2(sa, ca), libm::atan2(sb, cb));
            Ok(Coord::Cylindrical {
                cos: libm::cos(theta),
                sin: libm::sin(theta),
                y: lerp(ya, yb),
            })
        }
        _ => Err(Error::Invalid(
            "cannot interpolate between planar and cylindrical coordinates".into(),
        )),
    }
}

/// Non-overlapping spatial concatenation of a row-major `rows x cols` grid of `[C,h,w]` patches.
pub fn merge_phi<T: Real>(patches: &[Tensor<T>], rows: usize, cols: usize) -> Result<Tensor<T>> {
    if rows == 0 || cols == 0 || patches.len() != rows * cols {
        return Err(Error::Shape(format!(
            "{} patches for a {rows}x{cols} grid",
            patches.len()
        )));
    }
    let shape = patches[0].shape().to_vec();
    if shape.len() != 3 {
        return Err(Error::Shape(format!(
            "patch must be [C,h,w], got {shape:?}"
        )));
    }
    if let Some(p) = patches.iter().find(|p| p.shape() != shape.as_slice()) {
        return Err(Error::Shape(format!(
            "patch shapes differ: {:?} vs {shape:?}",
            p.shape()
        )));
    }
    let (ch, h, w) = (shape[0], shape[1], shape[2]);
    let (oh, ow) = (rows * h, cols * w);
    let mut out = vec![T::ZERO; ch * oh * ow];
    for r in 0..rows {
        for c in 0..cols {
            let p = patches[r * cols + c].data();
            for k in 0..ch {
                for y in 0..h {
                    let dst = (k * oh + r * h + y) * ow + c * w;
                    out[dst..dst + w].copy_from_slice(&p[(k * h + y) * w..(k * h + y + 1) * w]);
                }
            }
        }
    }
    Tensor::new(vec![ch, oh, ow], out)
}

/// Pixel window `[C, h, w]` at `(y0, x0)`; columns wrap when `wrap_x`.
pub fn crop_pixels<T: Real>(
    full: &Tensor<T>,
    y0: usize,
    x0: usize,
    h: usize,
    w: usize,
    wrap_x: bool,
) -> Result<Tensor<T>> {
    let s = full.shape();
    if s.len() != 3 {
        return Err(Error::Shape(format!("image must be [C,H,W], got {s:?}")));
    }
    let (ch, fh, fw) = (s[0], s[1], s[2]);
    if y0 + h > fh || (!wrap_x && x0 + w > fw) || w > fw {
        return Err(Error::Shape(format!(
            "crop {h}x{w} at ({y0},{x0}) outside {fh}x{fw}"
        )));
    }
    let d = full.data();
    let mut out = Vec::with_capacity(ch * h * w);
    for k in 0..ch {
        for y in 0..h {
            let row = (k * fh + y0 + y) * fw;
            for x in 0..w {
                out.push(d[row + (x0 + x) % fw]);
            }
        }
    }
    Tensor::new(vec![ch, h, w], out)
}

/// Crops the macro patch whose micro cells are `i..i+N` x `j..j+M` from a full canvas.
pub fn crop_psi<T: Real>(
    full: &Tensor<T>,
    layout: &PatchLayout,
    anchor: (usize, usize),
) -> Result<Tensor<T>> {
    let (ch, cw) = layout.canvas_hw();
    if full.rank() != 3 || full.shape()[1] != ch || full.shape()[2] != cw {
        return Err(Error::Shape(format!(
            "image {:?} does not match canvas {ch}x{cw}",
            full.shape()
        )));
    }
    layout.check_anchor(anchor.0, anchor.1)?;
    let (mh, mw) = layout.macro_hw();
    crop_pixels(
        full,
        anchor.0 * layout.s,
        anchor.1 * layout.s,
        mh,
        mw,
        layout.topology == Topology::Cylindrical,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout4() -> PatchLayout {
        PatchLayout::planar(4, 2, 4).unwrap()
    }

    #[test]
    fn axis_values() {
        let v = axis_coords(4).unwrap();
        assert_eq!(v, vec![-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0]);
        assert_eq!(axis_coords(2).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(axis_coords(1).unwrap(), vec![0.0]);
        assert!(axis_coords(0).is_err());
    }

    #[test]
    fn micro_matrix_blocks() {
        let l = layout4();
        let m = micro_coord_matrix(&l, 0, 0).unwrap();
        assert_eq!(m.get(0, 0), Coord::Planar { y: -1.0, x: -1.0 });
        assert_eq!(
            m.get(1, 1),
            Coord::Planar {
                y: -1.0 / 3.0,
                x: -1.0 / 3.0
            }
        );
        let m = micro_coord_matrix(&l, 2, 2).unwrap();
        assert_eq!(
            m.get(0, 0),
            Coord::Planar {
                y: 1.0 / 3.0,
                x: 1.0 / 3.0
            }
        );
        assert_eq!(m.get(1, 1), Coord::Planar { y: 1.0, x: 1.0 });
        assert!(micro_coord_matrix(&l, 3, 0).is_err());
        let one = PatchLayout::planar(4, 1, 4).unwrap();
        let m = micro_coord_matrix(&one, 1, 2).unwrap();
        assert_eq!(
            m.entries,
            vec![Coord::Planar {
                y: -1.0 / 3.0,
                x: 1.0 / 3.0
            }]
        );
    }

    #[test]
    fn macro_grid_spacing_is_one() {
        let l = layout4();
        assert_eq!(l.macro_positions(), (3, 3));
        assert_eq!(
            macro_coord(&l, 0, 2).unwrap(),
            Coord::Planar { y: -1.0, x: 1.0 }
        );
        assert_eq!(
            macro_coord(&l, 1, 1).unwrap(),
            Coord::Planar { y: 0.0, x: 0.0 }
        );
        let single = PatchLayout::planar(2, 2, 4).unwrap();
        assert_eq!(single.anchors(), vec![(0, 0)]);
        assert_eq!(
            macro_coord(&single, 0, 0).unwrap(),
            Coord::Planar { y: 0.0, x: 0.0 }
        );
    }

    #[test]
    fn full_matrix_corners() {
        let l = PatchLayout::planar(2, 1, 4).unwrap();
        let f = full_coord_matrix(&l);
        let want = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)];
        for (e, (y, x)) in f.entries.iter().zip(want) {
            assert_eq!(*e, Coord::Planar { y, x });
        }
    }

    #[test]
    fn cylinder_columns_are_equidistant() {
        let l = PatchLayout::new(2, 12, 1, 2, 4, Topology::Cylindrical).unwrap();
        let f = full_coord_matrix(&l);
        let chord = |a: Coord, b: Coord| {
            let (a, b) = (a.to_vec(), b.to_vec());
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        };
        let first = chord(f.get(0, 0), f.get(0, 1));
        for j in 0..12 {
            let d = chord(f.get(0, j), f.get(0, (j + 1) % 12));
            assert!((d - first).abs() < 1e-12, "column {j}");
        }
        let mut distinct = f.entries[..12].to_vec();
        distinct.dedup();
        assert_eq!(distinct.len(), 12);
    }

    #[test]
    fn embed_endpoints_coincide() {
        assert_eq!(cylindrical_embed(-1.0), cylindrical_embed(1.0));
        let (c, s) = cylindrical_embed(1.0);
        assert_eq!(c, -1.0);
        assert!(s.abs() < 1e-15);
        let (c, s) = cylindrical_embed(0.0);
        assert_eq!((c, s), (1.0, 0.0));
        let (c, s) = cylindrical_embed(0.5);
        assert!(c.abs() < 1e-15 && (s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn extrapolation_ranges() {
        let l = layout4();
        let e = extrapolated_coord_matrix(&l, 1, 1).unwrap();
        assert_eq!((e.rows, e.cols), (6, 6));
        let xs: Vec<f64> = (0..6).map(|c| e.get(0, c).to_vec()[1]).collect();
        let want = [-5.0 / 3.0, -1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0, 5.0 / 3.0];
        for (a, b) in xs.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(
            extrapolated_coord_matrix(&l, 0, 0).unwrap().entries,
            full_coord_matrix(&l).entries
        );
        let macros = extended_macro_anchors(&l, 1).unwrap();
        assert_eq!(macros.len(), 25);
        let mut ys: Vec<f64> = macros.iter().map(|(_, c)| c.to_vec()[0]).collect();
        ys.dedup();
        assert_eq!(ys, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let cyl = PatchLayout::new(4, 8, 2, 2, 4, Topology::Cylindrical).unwrap();
        assert!(extrapolated_coord_matrix(&cyl, 0, 1).is_err());
        assert!(extrapolated_coord_matrix(&cyl, 1, 0).is_ok());
    }

    #[test]
    fn interpolation() {
        let a = Coord::Planar { y: -1.0, x: -1.0 };
        let b = Coord::Planar { y: 1.0, x: 1.0 };
        assert_eq!(interp_coords(a, b, 0.0).unwrap(), a);
        assert_eq!(interp_coords(a, b, 1.0).unwrap(), b);
        assert_eq!(
            interp_coords(a, b, 0.5).unwrap(),
            Coord::Planar { y: 0.0, x: 0.0 }
        );
        let ca = Coord::Cylindrical {
            cos: 1.0,
            sin: 0.0,
            y: 0.0,
        };
        let cb = Coord::Cylindrical {
            cos: 0.0,
            sin: 1.0,
            y: 0.0,
        };
        let Coord::Cylindrical { cos, sin, .. } = interp_coords(ca, cb, 0.5).unwrap() else {
            panic!()
        };
        let q = core::f64::consts::FRAC_PI_4;
        assert!((cos - q.cos()).abs() < 1e-12 && (sin - q.sin()).abs() < 1e-12);
        assert!((cos * cos + sin * sin - 1.0).abs() < 1e-12);
        assert!(interp_coords(a, ca, 0.5).is_err());
    }

    fn const_patch(v: f64) -> Tensor<f64> {
        Tensor::full(&[3, 4, 4], v)
    }

    #[test]
    fn merge_constant_quadrants() {
        let img = merge_phi(
            &[
                const_patch(1.0),
                const_patch(2.0),
                const_patch(3.0),
                const_patch(4.0),
            ],
            2,
            2,
        )
        .unwrap();
        assert_eq!(img.shape(), &[3, 8, 8]);
        let at = |k: usize, y: usize, x: usize| img.data()[(k * 8 + y) * 8 + x];
        assert_eq!(
            (at(0, 0, 0), at(1, 0, 7), at(2, 7, 0), at(0, 7, 7)),
            (1.0, 2.0, 3.0, 4.0)
        );
        let p = const_patch(0.5);
        assert_eq!(merge_phi(core::slice::from_ref(&p), 1, 1).unwrap(), p);
        assert!(merge_phi(&[p.clone(), Tensor::full(&[3, 2, 2], 0.0)], 1, 2).is_err());
        assert!(merge_phi(&[p], 2, 2).is_err());
    }

    #[test]
    fn cylindrical_crop_wraps() {
        let l = PatchLayout::new(1, 4, 1, 2, 1, Topology::Cylindrical).unwrap();
        let full = Tensor::<f64>::from_f64_slice(&[1, 1, 4], &[0.0, 1.0, 2.0, 3.0]).unwrap();
        let c = crop_psi(&full, &l, (0, 3)).unwrap();
        assert_eq!(c.data(), &[3.0, 0.0]);
        let planar = PatchLayout::new(1, 4, 1, 2, 1, Topology::Planar).unwrap();
        assert!(crop_psi(&full, &planar, (0, 3)).is_err());
    }
}
