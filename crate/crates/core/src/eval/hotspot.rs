use std::fmt::Write as _;

use super::Predictions;
use crate::channel::{Aabb, Vec3};
use crate::error::{Error, Result};

/// Mean error per square cell of the horizontal plane.
#[derive(Clone, Debug, PartialEq)]
pub struct HotspotGrid {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major `ny × nx`.
    pub sums: Vec<f64>,
    pub counts: Vec<usize>,
}

impl HotspotGrid {
    pub fn mean(&self, ix: usize, iy: usize) -> Option<f64> {
        let i = iy * self.nx + ix;
        (self.counts[i] > 0).then(|| self.sums[i] / self.counts[i] as f64)
    }

    pub fn occupied(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0).count()
    }

    /// Comma-separated matrix: the header row holds cell-center x coordinates,
    /// each following row starts with its cell-center y. Empty cells are `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("y\\x");
        for ix in 0..self.nx {
            let _ = write!(out, ",{}", self.origin[0] + (ix as f64 + 0.5) * self.cell_size);
        }
        out.push('\n');
        for iy in 0..self.ny {
            let _ = write!(out, "{}", self.origin[1] + (iy as f64 + 0.5) * self.cell_size);
            for ix in 0..self.nx {
                match self.mean(ix, iy) {
                    Some(m) => {
                        let _ = write!(out, ",{m}");
                    }
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Bins `errors` by the horizontal cell of the matching true position.
/// Positions outside the box are clamped onto its border cells.
pub fn hotspot_grid(positions: &[Vec3], errors: &[f64], volume: &Aabb, cell_size: f64) -> Result<HotspotGrid> {
    if !(cell_size > 0.0) {
        return Err(Error::Contract(format!("cell size must be positive, got {cell_size}")));
    }
    if positions.len() != errors.len() {
        return Err(Error::shape("hotspot_grid", &[positions.len()], &[errors.len()]));
    }
    let e = volume.extent();
    let nx = ((e[0] / cell_size).ceil() as usize).max(1);
    let ny = ((e[1] / cell_size).ceil() as usize).max(1);
    let mut grid = HotspotGrid {
        origin: [volume.min[0], volume.min[1]],
        cell_size,
        nx,
        ny,
        sums: vec![0.0; nx * ny],
        counts: vec![0; nx * ny],
    };
    let cell = |v: f64, lo: f64, n: usize| (((v - lo) / cell_size).floor().max(0.0) as usize).min(n - 1);
    for (p, err) in positions.iter().zip(errors) {
        let i = cell(p[1], volume.min[1], ny) * nx + cell(p[0], volume.min[0], nx);
        grid.sums[i] += err;
        grid.counts[i] += 1;
    }
    Ok(grid)
}

pub fn hotspot_grid_for(preds: &Predictions, volume: &Aabb, cell_size: f64) -> Result<HotspotGrid> {
    hotspot_grid(&preds.truth, &preds.final_errors()?, volume, cell_size)
}
