//! Binary grayscale PGM (P5) export for importance maps, patterns and reconstructions.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// A grayscale image with intensities in `[0, 1]` (0 = black, 1 = white).
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Dimension {
                context: "image pixels",
                expected: width * height,
                found: pixels.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// P5 bytes, maxval 255, `round(255·v)` after clamping to `[0, 1]`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(
            self.pixels
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }

    /// Lays out equally sized tiles row by row, `columns` per row, separated
    /// by `pad` pixels of `background`.
    pub fn grid(
        tiles: &[Vec<f64>],
        tile: (usize, usize),
        columns: usize,
        pad: usize,
        background: f64,
    ) -> Result<Self> {
        let (th, tw) = tile;
        let columns = columns.max(1).min(tiles.len().max(1));
        let rows = tiles.len().div_ceil(columns).max(1);
        let width = columns * tw + (columns - 1) * pad;
        let height = rows * th + (rows - 1) * pad;
        let mut pixels = vec![background; width * height];
        for (n, t) in tiles.iter().enumerate() {
            if t.len() != th * tw {
                return Err(Error::Dimension {
                    context: "image tile",
                    expected: th * tw,
                    found: t.len(),
                });
            }
            let (r0, c0) = ((n / columns) * (th + pad), (n % columns) * (tw + pad));
            for y in 0..th {
                let dst = (r0 + y) * width + c0;
                pixels[dst..dst + tw].copy_from_slice(&t[y * tw..(y + 1) * tw]);
            }
        }
        GrayImage::new(width, height, pixels)
    }
}

/// Min-max rescales `v` into `[0, 1]`; a constant vector maps to 0.5.
pub fn rescale_unit(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.5; v.len()];
    }
    v.iter().map(|&x| (x - lo) / (hi - lo)).collect()
}
