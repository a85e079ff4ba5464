//! Binary PPM (P6, maxval 255) images.

use std::path::Path;

use coordgan_core::data::ImageBuffer;

use crate::error::{AppError, Result};

/// `v` in `[-1, 1]` to a byte, rounding halves up so 0 becomes 128.
pub fn encode_value(v: f32) -> u8 {
    let p = ((v as f64 + 1.0) / 2.0 * 255.0 + 0.5).floor();
    p.clamp(0.0, 255.0) as u8
}

pub fn decode_value(p: u8) -> f32 {
    (2.0 * p as f64 / 255.0 - 1.0) as f32
}

/// Serializes a `[3, H, W]` image.
pub fn encode(image: &ImageBuffer) -> Vec<u8> {
    let (h, w) = (image.height(), image.width());
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * h * w);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out.push(encode_value(image.get(c, y, x)));
            }
        }
    }
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.at) {
            if b == b'#' {
                while self.bytes.get(self.at).is_some_and(|&b| b != b'\n') {
                    self.at += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.at += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.at;
        while self.bytes.get(self.at).is_some_and(u8::is_ascii_digit) {
            self.at += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.at])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| AppError::Format(format!("PPM header: bad {what}")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ImageBuffer> {
    if !bytes.starts_with(b"P6") {
        return Err(AppError::Format(
            "not a binary PPM (missing P6 magic)".into(),
        ));
    }
    let mut hdr = Header { bytes, at: 2 };
    let w = hdr.number("width")?;
    let h = hdr.number("height")?;
    let max = hdr.number("maxval")?;
    if max != 255 {
        return Err(AppError::Format(format!(
            "PPM maxval {max}, only 255 is supported"
        )));
    }
    if w == 0 || h == 0 {
        return Err(AppError::Format("PPM with zero size".into()));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(hdr.at).is_some_and(u8::is_ascii_whitespace) {
        return Err(AppError::Format("PPM header not terminated".into()));
    }
    let raster = &bytes[hdr.at + 1..];
    let n = 3 * w * h;
    if raster.len() < n {
        return Err(AppError::Format(format!(
            "PPM payload truncated: {} of {n} bytes",
            raster.len()
        )));
    }
    let mut v = vec![0.0f32; n];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                v[(c * h + y) * w + x] = decode_value(raster[(y * w + x) * 3 + c]);
            }
        }
    }
    Ok(ImageBuffer::new(h, w, v)?)
}

pub fn read(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode(&bytes)
}

pub fn write(path: &Path, image: &ImageBuffer) -> Result<()> {
    std::fs::write(path, encode(image)).map_err(|e| AppError::io(path, e))
}
