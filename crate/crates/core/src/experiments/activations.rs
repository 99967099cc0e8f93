//! Back-projection of layer-1 feature maps onto network nodes.
//!
//! A pooled layer-1 cell `(r, c)` sees conv outputs `r*pool .. r*pool+pool-1`
//! on each axis, and each of those sees `kernel` input pixels, so the cell
//! covers input rows `r*pool ..= r*pool + pool + kernel - 2` (same for
//! columns). Nodes whose raster bin falls in a covered pixel are active.

use super::DatasetSample;
use crate::cnn::CnnModel;
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::raster::bin_indices;

/// Inclusive input-pixel rectangle `(row_lo, row_hi, col_lo, col_hi)`.
pub type Patch = (usize, usize, usize, usize);

/// Nodes placed on the raster grid plus the highlighted subset, for drawing.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub grid: usize,
    /// `(row, col)` bin of each node.
    pub node_bins: Vec<(usize, usize)>,
    pub active: Vec<bool>,
    pub edges: Vec<(NodeId, NodeId)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    pub filter: usize,
    pub quantile: f64,
    pub threshold: f64,
    /// Highlighted pooled cells, row-major order.
    pub cells: Vec<(usize, usize)>,
    /// Sorted node ids.
    pub active: Vec<NodeId>,
    pub overlay: Overlay,
}

pub fn receptive_patch(cell: (usize, usize), pool: usize, kernel: usize) -> Patch {
    let span = pool + kernel - 2;
    let (r, c) = (cell.0 * pool, cell.1 * pool);
    (r, r + span, c, c + span)
}

/// Cells whose value reaches the `quantile` threshold, taken as the sorted
/// value at index `floor(quantile * (len - 1))`. Ties with the threshold are
/// included, so a constant map highlights every cell.
pub fn highlight_cells(map: &[f64], side: usize, quantile: f64) -> Result<(f64, Vec<(usize, usize)>)> {
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::InvalidParams(format!("quantile {quantile} outside [0, 1]")));
    }
    if map.len() != side * side || map.is_empty() {
        return Err(Error::Shape { expected: format!("{side}x{side} map"), actual: format!("{} values", map.len()) });
    }
    let mut sorted = map.to_vec();
    sorted.sort_by(f64::total_cmp);
    let threshold = sorted[(quantile * (sorted.len() - 1) as f64).floor() as usize];
    let cells = (0..map.len()).filter(|&i| map[i] >= threshold).map(|i| (i / side, i % side)).collect();
    Ok((threshold, cells))
}

fn in_patch(bin: (usize, usize), p: &Patch) -> bool {
    (p.0..=p.1).contains(&bin.0) && (p.2..=p.3).contains(&bin.1)
}

/// Thresholds layer-1 filter `filter` of `model` on `sample` and returns the
/// nodes under the highlighted receptive fields. Only layer 1 is supported.
pub fn map_activations(
    model: &CnnModel,
    sample: &DatasetSample,
    layer: usize,
    filter: usize,
    quantile: f64,
) -> Result<ActivationMap> {
    if layer != 1 {
        return Err(Error::InvalidParams(format!("only layer 1 can be mapped, got layer {layer}")));
    }
    let (Some(graph), Some(points)) = (&sample.graph, &sample.points) else {
        return Err(Error::InvalidParams("sample does not retain its graph and 2D points".into()));
    };
    let cache = model.forward(&sample.image.pixels)?;
    let map = model.layer1_feature_map(&cache, filter)?;
    let side = model.geometry.pool1;
    let (threshold, cells) = highlight_cells(map, side, quantile)?;
    let cfg = &model.config;
    let patches: Vec<Patch> = cells.iter().map(|&cell| receptive_patch(cell, cfg.pool, cfg.kernel)).collect();
    let node_bins = bin_indices(points, sample.image.grid)?;
    let active: Vec<bool> = node_bins.iter().map(|&b| patches.iter().any(|p| in_patch(b, p))).collect();
    let edges = graph.edges().iter().map(|e| (e.src, e.dst)).collect();
    Ok(ActivationMap {
        filter,
        quantile,
        threshold,
        cells,
        active: (0..active.len()).filter(|&v| active[v]).collect(),
        overlay: Overlay { grid: sample.image.grid, node_bins, active, edges },
    })
}

pub const EDGE_LEVEL: u8 = 64;
pub const NODE_LEVEL: u8 = 128;
pub const ACTIVE_LEVEL: u8 = 255;

/// Draws the overlay at `scale` pixels per raster bin: edges as lines,
/// nodes as 3x3 dots, active nodes brightest. Returns `(side, levels)`.
pub fn render_overlay(overlay: &Overlay, scale: usize) -> (usize, Vec<u8>) {
    let scale = scale.max(1);
    let side = overlay.grid * scale;
    let mut img = vec![0u8; side * side];
    let centre = |v: NodeId| {
        let (r, c) = overlay.node_bins[v];
        ((r * scale + scale / 2) as i64, (c * scale + scale / 2) as i64)
    };
    let plot = |r: i64, c: i64, level: u8, img: &mut Vec<u8>| {
        if (0..side as i64).contains(&r) && (0..side as i64).contains(&c) {
            let px = &mut img[r as usize * side + c as usize];
            *px = (*px).max(level);
        }
    };
    for &(a, b) in &overlay.edges {
        let ((mut r0, mut c0), (r1, c1)) = (centre(a), centre(b));
        let (dr, dc) = ((r1 - r0).abs(), -(c1 - c0).abs());
        let (sr, sc) = (if r0 < r1 { 1 } else { -1 }, if c0 < c1 { 1 } else { -1 });
        let mut err = dr + dc;
        loop {
            plot(r0, c0, EDGE_LEVEL, &mut img);
            if r0 == r1 && c0 == c1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dc {
                err += dc;
                r0 += sr;
            }
            if e2 <= dr {
                err += dr;
                c0 += sc;
            }
        }
    }
    for v in 0..overlay.node_bins.len() {
        let (r, c) = centre(v);
        let level = if overlay.active[v] { ACTIVE_LEVEL } else { NODE_LEVEL };
        for dr in -1..=1 {
            for dc in -1..=1 {
                plot(r + dr, c + dc, level, &mut img);
            }
        }
    }
    (side, img)
}
