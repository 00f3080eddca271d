use crate::error::{invalid, Result};

/// Uniform cell grid in one or two dimensions with equal spacing on every axis.
///
/// Cells are indexed row-major with the first axis varying slowest; `centers` are cell
/// midpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    lo: Vec<f64>,
    n: Vec<usize>,
    h: f64,
}

pub const MIN_CELLS_PER_AXIS: usize = 16;

impl Grid {
    /// Grid on the box `[lo_k, lo_k + n_k h]` per axis.
    pub fn new(lo: Vec<f64>, n: Vec<usize>, h: f64) -> Result<Self> {
        let dim = lo.len();
        if !(dim == 1 || dim == 2) || n.len() != dim {
            return Err(invalid("grids are one- or two-dimensional"));
        }
        if n.iter().any(|&k| k < MIN_CELLS_PER_AXIS) {
            return Err(invalid(format!("need at least {MIN_CELLS_PER_AXIS} cells per axis")));
        }
        if !(h > 0.0) || !h.is_finite() || lo.iter().any(|x| !x.is_finite()) {
            return Err(invalid("grid spacing must be positive and bounds finite"));
        }
        Ok(Self { dim, lo, n, h })
    }

    /// Grid over `[lo, hi]^dim` with `cells` cells per axis.
    pub fn uniform(dim: usize, lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if !(hi > lo) {
            return Err(invalid("need hi > lo"));
        }
        Self::new(vec![lo; dim], vec![cells; dim], (hi - lo) / cells as f64)
    }

    /// Grid whose cell edges fall on `+-radius`, with `cells_across` cells spanning the ball's
    /// diameter and whole extra cells on every side covering at least `margin`.
    pub fn for_ball(dim: usize, radius: f64, cells_across: usize, margin: f64) -> Result<Self> {
        if !(radius > 0.0) || cells_across == 0 || !(margin >= 0.0) {
            return Err(invalid("need radius > 0, cells_across >= 1, margin >= 0"));
        }
        let h = 2.0 * radius / cells_across as f64;
        let extra = (margin / h - 1e-9).ceil().max(0.0) as usize;
        let n = cells_across + 2 * extra;
        Self::new(vec![-radius - extra as f64 * h; dim], vec![n; dim], h)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.n
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.lo[axis] + self.n[axis] as f64 * self.h
    }

    pub fn num_cells(&self) -> usize {
        self.n.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Multi-index of a flat cell index.
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.n[1], idx % self.n[1]]
        }
    }

    pub fn flatten(&self, ix: [usize; 2]) -> usize {
        if self.dim == 1 {
            ix[0]
        } else {
            ix[0] * self.n[1] + ix[1]
        }
    }

    /// Per-axis bounds of a cell.
    pub fn cell_bounds(&self, idx: usize) -> [(f64, f64); 2] {
        let m = self.unflatten(idx);
        let mut out = [(0.0, 0.0); 2];
        for a in 0..self.dim {
            let lo = self.lo[a] + m[a] as f64 * self.h;
            out[a] = (lo, lo + self.h);
        }
        out
    }

    pub fn center(&self, idx: usize) -> Vec<f64> {
        let m = self.unflatten(idx);
        (0..self.dim).map(|a| self.lo[a] + (m[a] as f64 + 0.5) * self.h).collect()
    }

    /// Cell containing `x`, if any. Points on an interior edge belong to the upper cell.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut m = [0usize; 2];
        for a in 0..self.dim {
            let t = (x[a] - self.lo[a]) / self.h;
            if t < 0.0 || t > self.n[a] as f64 {
                return None;
            }
            m[a] = (t.floor() as usize).min(self.n[a] - 1);
        }
        Some(self.flatten(m))
    }

    /// Smallest distance from the ball `B(0, radius)` to the grid boundary (negative if the
    /// grid does not cover the ball).
    pub fn margin(&self, radius: f64) -> f64 {
        (0..self.dim)
            .map(|a| (-radius - self.lo[a]).min(self.hi(a) - radius))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Distance from the origin to the nearest point of an axis-aligned box.
pub(crate) fn box_min_norm(b: &[(f64, f64)]) -> f64 {
    b.iter()
        .map(|&(lo, hi)| if lo > 0.0 { lo } else if hi < 0.0 { -hi } else { 0.0 })
        .map(|t| t * t)
        .sum::<f64>()
        .sqrt()
}
