//! Point cloud → grayscale raster by grid binning.
//!
//! Each axis is scaled independently to span the grid. Bins are half-open
//! `[lo, hi)`; the upper bound is pushed out by `1e-9` of the extent so the
//! maximum lands in the last bin. Row index follows the y bin, column index
//! the x bin, both counted from the minimum.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::Points2D;
use crate::error::{Error, Result};

pub const DEFAULT_GRID: usize = 48;
const MAX_SIDE_NUDGE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intensity {
    /// `count / max_count`
    #[default]
    Max,
    /// `ln(1 + count) / ln(1 + max_count)`
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub grid: usize,
    /// Row-major `grid x grid`, values in `[0, 1]`.
    pub pixels: Vec<f64>,
    pub raw_counts: Vec<u32>,
    pub bounds: Bounds,
}

impl GrayImage {
    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.grid + col]
    }

    pub fn count(&self, row: usize, col: usize) -> u32 {
        self.raw_counts[row * self.grid + col]
    }

    pub fn total_count(&self) -> u64 {
        self.raw_counts.iter().map(|&c| c as u64).sum()
    }

    /// 8-bit levels `round(255 * pixel)`.
    pub fn quantized(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| (255.0 * p).round().clamp(0.0, 255.0) as u8).collect()
    }
}

/// Bin index of `v` on an axis spanning `[lo, hi]` split into `grid` bins.
fn axis_bin(v: f64, lo: f64, hi: f64, grid: usize) -> usize {
    let extent = hi - lo;
    if extent <= 0.0 {
        return 0;
    }
    let t = (v - lo) / extent;
    let idx = (t * grid as f64 / (1.0 + MAX_SIDE_NUDGE)).floor();
    (idx.max(0.0) as usize).min(grid - 1)
}

fn validate(points: &Points2D, grid: usize) -> Result<Bounds> {
    if grid < 2 {
        return Err(Error::InvalidParams(format!("grid must be >= 2, got {grid}")));
    }
    if points.is_empty() {
        return Err(Error::Empty("no points to rasterize"));
    }
    let mut b = Bounds {
        x_min: f64::INFINITY,
        x_max: f64::NEG_INFINITY,
        y_min: f64::INFINITY,
        y_max: f64::NEG_INFINITY,
    };
    for (i, &[x, y]) in points.points.iter().enumerate() {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::BadRecord { index: i, reason: "non-finite coordinate".into() });
        }
        b.x_min = b.x_min.min(x);
        b.x_max = b.x_max.max(x);
        b.y_min = b.y_min.min(y);
        b.y_max = b.y_max.max(y);
    }
    Ok(b)
}

/// `(row, col)` bin of every point, in input order.
pub fn bin_indices(points: &Points2D, grid: usize) -> Result<Vec<(usize, usize)>> {
    let b = validate(points, grid)?;
    Ok(points
        .points
        .iter()
        .map(|&[x, y]| (axis_bin(y, b.y_min, b.y_max, grid), axis_bin(x, b.x_min, b.x_max, grid)))
        .collect())
}

pub fn rasterize(points: &Points2D, grid: usize) -> Result<GrayImage> {
    rasterize_with(points, grid, Intensity::Max)
}

pub fn rasterize_with(points: &Points2D, grid: usize, intensity: Intensity) -> Result<GrayImage> {
    let bounds = validate(points, grid)?;
    let mut raw_counts = vec![0u32; grid * grid];
    for (r, c) in bin_indices(points, grid)? {
        raw_counts[r * grid + c] += 1;
    }
    let max = raw_counts.iter().copied().max().unwrap_or(0);
    let pixels = raw_counts
        .iter()
        .map(|&c| match (max, intensity) {
            (0, _) => 0.0,
            (_, Intensity::Max) => c as f64 / max as f64,
            (_, Intensity::Log) => (c as f64).ln_1p() / (max as f64).ln_1p(),
        })
        .collect();
    Ok(GrayImage { grid, pixels, raw_counts, bounds })
}

/// Portable graymap, binary (`P5`) or plain (`P2`), rows in image order.
pub fn encode_pgm(width: usize, height: usize, levels: &[u8], plain: bool) -> Vec<u8> {
    assert_eq!(levels.len(), width * height);
    let mut out = Vec::with_capacity(levels.len() * if plain { 4 } else { 1 } + 20);
    if plain {
        out.extend_from_slice(format!("P2\n{width} {height}\n255\n").as_bytes());
        for row in levels.chunks(width) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    } else {
        out.extend_from_slice(format!("P5\n{width} {height}\n255\n").as_bytes());
        out.extend_from_slice(levels);
    }
    out
}

pub fn write_pgm(image: &GrayImage, path: &Path, plain: bool) -> Result<()> {
    write_levels_pgm(image.grid, image.grid, &image.quantized(), path, plain)
}

pub fn write_levels_pgm(width: usize, height: usize, levels: &[u8], path: &Path, plain: bool) -> Result<()> {
    let bytes = encode_pgm(width, height, levels, plain);
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
