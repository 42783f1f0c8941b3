//! Binary PGM (P5) rendering of centroids tiled on their grid.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::MixtureModel;
use crate::topology::GridTopology;

/// Gray level of the one-pixel separators between tiles.
pub const SEPARATOR: u8 = 255;
/// Gray level of every pixel of a constant tile.
pub const FLAT_TILE: u8 = 128;

/// 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Maps one centroid linearly onto `0..=255` (min → 0, max → 255). A
/// constant centroid maps to uniform `FLAT_TILE`.
pub fn tile_pixels(values: &[f64]) -> Vec<u8> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return vec![FLAT_TILE; values.len()];
    }
    values
        .iter()
        .map(|v| ((v - min) / (max - min) * 255.0).round() as u8)
        .collect()
}

/// Tiles every centroid, reshaped to `(height, width)`, in grid order with
/// one-pixel separators between neighbouring tiles.
pub fn render_centroid_grid(
    model: &MixtureModel,
    topology: &GridTopology,
    image_shape: (usize, usize),
) -> Result<GrayImage> {
    let (h, w) = image_shape;
    if h * w != model.dim() {
        return Err(Error::usage(format!(
            "image shape {h}x{w} does not match dimension {}",
            model.dim()
        )));
    }
    if topology.components() != model.components() {
        return Err(Error::usage("grid size does not match the model"));
    }
    let (rows, cols) = (topology.rows(), topology.cols());
    let width = cols * w + cols - 1;
    let height = rows * h + rows - 1;
    let mut pixels = vec![SEPARATOR; width * height];
    for k in 0..model.components() {
        let (gr, gc) = topology.coord(k);
        let tile = tile_pixels(model.centroid(k));
        let (x0, y0) = (gc * (w + 1), gr * (h + 1));
        for y in 0..h {
            let start = (y0 + y) * width + x0;
            pixels[start..start + w].copy_from_slice(&tile[y * w..(y + 1) * w]);
        }
    }
    Ok(GrayImage {
        width,
        height,
        pixels,
    })
}

pub fn emit_centroid_grid(
    model: &MixtureModel,
    topology: &GridTopology,
    image_shape: (usize, usize),
    path: impl AsRef<Path>,
) -> Result<()> {
    let image = render_centroid_grid(model, topology, image_shape)?;
    std::fs::write(path, image.to_pgm())?;
    Ok(())
}

/// Parses a P5 file with maxval 255 (used to check emitted images).
pub fn parse_pgm(bytes: &[u8]) -> Option<GrayImage> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return None;
    }
    let width: usize = fields[1].parse().ok()?;
    let height: usize = fields[2].parse().ok()?;
    let pixels = bytes.get(pos + 1..)?.to_vec();
    (pixels.len() == width * height).then_some(GrayImage {
        width,
        height,
        pixels,
    })
}
