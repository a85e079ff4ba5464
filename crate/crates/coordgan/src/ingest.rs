//! Loading a folder of PPM images as a dataset.

use std::path::Path;

use coordgan_core::data::{Dataset, ImageBuffer, Provenance};

use crate::error::{AppError, Result};
use crate::ppm;

/// Center-crops `image` to the aspect ratio of `height x width`, then resizes with nearest-neighbour sampling.
pub fn fit_canvas(image: &ImageBuffer, height: usize, width: usize) -> Result<ImageBuffer> {
    let (h, w) = (image.height(), image.width());
    // largest centered window with the target aspect ratio
    let (ch, cw) = if w * height > h * width {
        (h, (h * width / height).max(1))
    } else {
        ((w * height / width).max(1), w)
    };
    let (y0, x0) = ((h - ch) / 2, (w - cw) / 2);
    let mut v = Vec::with_capacity(3 * height * width);
    for c in 0..3 {
        for y in 0..height {
            let sy = y0 + (2 * y + 1) * ch / (2 * height);
            for x in 0..width {
                let sx = x0 + (2 * x + 1) * cw / (2 * width);
                v.push(image.get(c, sy, sx));
            }
        }
    }
    Ok(ImageBuffer::new(height, width, v)?)
}

/// A dataset plus one message per skipped file.
#[derive(Debug)]
pub struct Ingested {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

/// Reads every `*.ppm` file in `dir` (sorted by name) and fits it to the canvas.
/// Unreadable files are skipped with a warning; no usable image at all is an error.
pub fn ingest_folder(dir: &Path, height: usize, width: usize) -> Result<Ingested> {
    let entries = std::fs::read_dir(dir).map_err(|e| AppError::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ppm")))
        .collect();
    paths.sort();
    let mut images = Vec::new();
    let mut warnings = Vec::new();
    for p in paths {
        match ppm::read(&p).and_then(|img| fit_canvas(&img, height, width)) {
            Ok(img) => images.push(img),
            Err(e) => warnings.push(format!("skipping {}: {e}", p.display())),
        }
    }
    if images.is_empty() {
        return Err(AppError::Format(format!(
            "no usable images in {}",
            dir.display()
        )));
    }
    let dataset = Dataset::new(images, Provenance::Folder(dir.display().to_string()))?;
    Ok(Ingested { dataset, warnings })
}
