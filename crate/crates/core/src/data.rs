//! Images, synthetic datasets and the real macro-patch sampler.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coords::{crop_pixels, macro_coord_at, Coord, PatchLayout, Topology};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A 3-channel image with values in `[-1, 1]`, stored `[3, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    tensor: Tensor<f32>,
}

impl ImageBuffer {
    /// Values are clamped into `[-1, 1]`; non-finite values are rejected.
    pub fn new(height: usize, width: usize, mut values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue("image pixel".into()));
        }
        values.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        Ok(Self {
            tensor: Tensor::new(vec![3, height, width], values)?,
        })
    }

    pub fn from_tensor(t: Tensor<f32>) -> Result<Self> {
        match *t.shape() {
            [3, h, w] => Self::new(h, w, t.into_data()),
            ref s => Err(Error::Shape(format!("image must be [3,H,W], got {s:?}"))),
        }
    }

    pub fn height(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.tensor
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.tensor.data()[(c * self.height() + y) * self.width() + x]
    }

    /// Mean of the three channels.
    pub fn luminance(&self, y: usize, x: usize) -> f32 {
        (self.get(0, y, x) + self.get(1, y, x) + self.get(2, y, x)) / 3.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// Left-to-right luminance ramp with a per-image hue.
    GradientHue,
    /// Gaussian blobs at fixed canvas positions with random amplitudes.
    PlacedBlobs,
    /// Concentric rings about the canvas centre with random spacing and phase.
    Rings,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::GradientHue => "gradient-hue",
            SynthKind::PlacedBlobs => "placed-blobs",
            SynthKind::Rings => "rings",
        }
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient-hue" => Ok(SynthKind::GradientHue),
            "placed-blobs" => Ok(SynthKind::PlacedBlobs),
            "rings" => Ok(SynthKind::Rings),
            _ => Err(Error::Invalid(format!("unknown synthetic dataset `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    Synthetic { kind: SynthKind, seed: u64 },
    Folder(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<ImageBuffer>,
    pub provenance: Provenance,
    /// Indices used for training, ascending.
    pub train: Vec<usize>,
    /// Indices kept for evaluation, ascending.
    pub held_out: Vec<usize>,
}

impl Dataset {
    /// All images start in the training split.
    pub fn new(images: Vec<ImageBuffer>, provenance: Provenance) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Invalid("dataset has no images".into()));
        }
        let (h, w) = (images[0].height(), images[0].width());
        if images.iter().any(|im| im.height() != h || im.width() != w) {
            return Err(Error::Shape("dataset images differ in size".into()));
        }
        let train = (0..images.len()).collect();
        Ok(Self {
            images,
            provenance,
            train,
            held_out: Vec::new(),
        })
    }

    /// Moves a seeded random `fraction` of the images to the held-out split.
    pub fn split(mut self, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::Invalid(format!(
                "held-out fraction {fraction} outside [0, 1)"
            )));
        }
        let n = self.images.len();
        let k = libm::round(n as f64 * fraction) as usize;
        let k = if fraction > 0.0 { k.max(1) } else { 0 };
        if k >= n {
            return Err(Error::Invalid(format!(
                "held-out split of {n} images leaves nothing to train on"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut held: Vec<usize> = order[..k].to_vec();
        let mut train: Vec<usize> = order[k..].to_vec();
        held.sort_unstable();
        train.sort_unstable();
        self.held_out = held;
        self.train = train;
        Ok(self)
    }

    pub fn canvas_hw(&self) -> (usize, usize) {
        (self.images[0].height(), self.images[0].width())
    }

    pub fn train_images(&self) -> impl Iterator<Item = &ImageBuffer> {
        self.train.iter().map(|&i| &self.images[i])
    }

    pub fn held_out_images(&self) -> impl Iterator<Item = &ImageBuffer> {
        self.held_out.iter().map(|&i| &self.images[i])
    }
}

fn unit(k: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * k as f64 / (n - 1) as f64
    }
}

fn render(h: usize, w: usize, f: impl Fn(usize, f64, f64) -> f64) -> Result<ImageBuffer> {
    let mut v = Vec::with_capacity(3 * h * w);
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                v.push(f(c, unit(y, h), unit(x, w)) as f32);
            }
        }
    }
    ImageBuffer::new(h, w, v)
}

fn gradient_hue(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Result<ImageBuffer> {
    let hue = rng.random_range(0.0..2.0 * PI);
    let phase = rng.random_range(0.0..2.0 * PI);
    let (fx, fy) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
    // The ramp bends on both axes, so the local slopes give away the position:
    // d/du = 0.35 + 0.2u and d/dv = 0.2 + 0.2v. The horizontal slope never drops
    // below 0.15, above the wiggle's largest slope (0.03*pi).
    render(h, w, |c, v, u| {
        let ramp = 0.35 * u + 0.2 * v + 0.1 * (u * u + v * v) - 0.1;
        let lum = ramp + 0.015 * libm::sin(PI * (fx * u + fy * v) + phase);
        lum + 0.25 * libm::cos(hue - 2.0 * PI * c as f64 / 3.0)
    })
}

const BLOBS: [((f64, f64), [f64; 3]); 3] = [
    ((-0.45, -0.4), [1.0, 0.35, 0.3]),
    ((0.4, -0.3), [0.3, 1.0, 0.4]),
    ((0.0, 0.5), [0.35, 0.4, 1.0]),
];

fn placed_blobs(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Result<ImageBuffer> {
    let amp: Vec<f64> = (0..BLOBS.len())
        .map(|_| rng.random_range(0.4..1.4))
        .collect();
    let sigma2 = 2.0 * 0.3 * 0.3;
    render(h, w, |c, v, u| {
        let mut s = -0.7;
        for (((bx, by), col), a) in BLOBS.iter().zip(&amp) {
            let d2 = (u - bx) * (u - bx) + (v - by) * (v - by);
            s += a * col[c] * libm::exp(-d2 / sigma2);
        }
        s
    })
}

fn rings(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Result<ImageBuffer> {
    let spacing = rng.random_range(0.35..0.7);
    let phase = rng.random_range(0.0..2.0 * PI);
    let tint = [1.0, 0.8, 0.55];
    render(h, w, |c, v, u| {
        let r = libm::sqrt(u * u + v * v);
        0.75 * tint[c] * libm::cos(2.0 * PI * r / spacing + phase)
    })
}

/// `n` synthetic `height x width` images. The same arguments always give the same dataset.
pub fn synth_dataset(
    kind: SynthKind,
    n: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || height == 0 || width == 0 {
        return Err(Error::Invalid(
            "synthetic dataset needs n, height and width >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = (0..n)
        .map(|_| match kind {
            SynthKind::GradientHue => gradient_hue(height, width, &mut rng),
            SynthKind::PlacedBlobs => placed_blobs(height, width, &mut rng),
            SynthKind::Rings => rings(height, width, &mut rng),
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(images, Provenance::Synthetic { kind, seed })
}

/// How macro anchors are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// Anchors on the micro-cell grid.
    Discrete,
    /// Anchors at any pixel offset (planar layouts only).
    Continuous,
}

/// A real macro patch `x'` and where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct RealSample {
    pub patch: Tensor<f32>,
    pub coord: Coord,
    /// Anchor in micro-cell units; integral for discrete sampling.
    pub pos: (f64, f64),
    pub image: usize,
}

impl RealSample {
    /// The grid anchor, when the sample was drawn on the grid.
    pub fn anchor(&self) -> Option<(usize, usize)> {
        let (i, j) = self.pos;
        (libm::floor(i) == i && libm::floor(j) == j).then_some((i as usize, j as usize))
    }
}

/// Uniform macro anchor in micro-cell units.
pub fn sample_anchor(
    layout: &PatchLayout,
    mode: Sampling,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    let (rows, cols) = layout.macro_positions();
    match mode {
        Sampling::Discrete => Ok((
            rng.random_range(0..rows) as f64,
            rng.random_range(0..cols) as f64,
        )),
        Sampling::Continuous => {
            if layout.topology != Topology::Planar {
                return Err(Error::Invalid(
                    "continuous sampling needs a planar layout".into(),
                ));
            }
            let s = layout.s;
            let y = rng.random_range(0..=(rows - 1) * s);
            let x = rng.random_range(0..=(cols - 1) * s);
            Ok((y as f64 / s as f64, x as f64 / s as f64))
        }
    }
}

/// Crops the macro patch at anchor `pos` (micro-cell units) from `image`.
pub fn crop_at(image: &ImageBuffer, layout: &PatchLayout, pos: (f64, f64)) -> Result<Tensor<f32>> {
    let (h, w) = layout.canvas_hw();
    if image.height() != h || image.width() != w {
        return Err(Error::Shape(format!(
            "image is {}x{}, layout canvas is {h}x{w}",
            image.height(),
            image.width()
        )));
    }
    let (mh, mw) = layout.macro_hw();
    let s = layout.s as f64;
    let (y0, x0) = (
        libm::round(pos.0 * s) as usize,
        libm::round(pos.1 * s) as usize,
    );
    crop_pixels(
        image.tensor(),
        y0,
        x0,
        mh,
        mw,
        layout.topology == Topology::Cylindrical,
    )
}

/// Draws a training image and an anchor uniformly and returns the crop with its macro coordinate.
pub fn sample_real_macro(
    data: &Dataset,
    layout: &PatchLayout,
    mode: Sampling,
    rng: &mut impl Rng,
) -> Result<RealSample> {
    if data.train.is_empty() {
        return Err(Error::Invalid("no training images".into()));
    }
    let image = data.train[rng.random_range(0..data.train.len())];
    let pos = sample_anchor(layout, mode, rng)?;
    let patch = crop_at(&data.images[image], layout, pos)?;
    Ok(RealSample {
        patch,
        coord: macro_coord_at(layout, pos.0, pos.1),
        pos,
        image,
    })
}
