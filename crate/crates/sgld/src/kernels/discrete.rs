use crate::error::{invalid, Error, Result};
use crate::kernels::engine::KernelEngine;
use crate::kernels::grid::{box_min_norm, Grid};
use crate::kernels::region::{integrate, Region};
use crate::linalg::norm;
use crate::par::map_range;
use crate::targets::TargetModel;

/// Sparse row-stochastic matrix in compressed-row form with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseRows {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self { row_ptr, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.cols[a..b].binary_search(&j) {
            Ok(k) => self.vals[a + k],
            Err(_) => 0.0,
        }
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n()).flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j))).max().unwrap_or(0)
    }

    /// `x^T M`.
    pub fn left_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (i, xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                out[j] += xi * v;
            }
        }
        out
    }
}

/// How the states of a kernel are arranged, which decides the cut families used for conductance.
#[derive(Clone, Debug, PartialEq)]
pub enum Layout {
    /// States ordered along a line; interval cuts apply.
    Path,
    /// States on a planar grid, with coordinates per state.
    Plane { coords: Vec<[f64; 2]> },
}

/// Which chain a discretized kernel represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiscreteKind {
    Lazy,
    Metropolized,
    Custom,
}

/// Finite-state transition matrix on grid cells inside the truncation ball.
///
/// Entry `(i, j)` is the probability of moving from the representative point of cell `i` into
/// cell `j`; all atoms (lazy coin, region rejection, Metropolis rejection) are lumped into the
/// diagonal.
#[derive(Clone, Debug)]
pub struct DiscretizedKernel {
    kind: DiscreteKind,
    dim: usize,
    points: Vec<f64>,
    matrix: SparseRows,
    stationary: Option<Vec<f64>>,
    layout: Layout,
    /// Largest `|row sum before lumping - 1|` seen during construction.
    pub max_row_deviation: f64,
}

/// Largest tolerated row-sum deviation before the diagonal absorbs it.
pub const ROW_SUM_TOLERANCE: f64 = 1e-8;

impl DiscretizedKernel {
    /// Kernel from a dense matrix, for hand-built chains. States are taken to lie on a path.
    pub fn from_dense(matrix: &[Vec<f64>], stationary: Option<Vec<f64>>) -> Result<Self> {
        let n = matrix.len();
        if n == 0 || matrix.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidKernel("matrix must be square and nonempty".into()));
        }
        let rows = matrix
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect())
            .collect();
        let k = Self {
            kind: DiscreteKind::Custom,
            dim: 1,
            points: (0..n).map(|i| i as f64).collect(),
            matrix: SparseRows::from_rows(rows),
            stationary,
            layout: Layout::Path,
            max_row_deviation: 0.0,
        };
        k.validate()?;
        Ok(k)
    }

    /// Checks entries are nonnegative and rows sum to one within `1e-10`.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.matrix.n() {
            let mut s = 0.0;
            for (j, v) in self.matrix.row(i) {
                if !(v >= 0.0) || j >= self.matrix.n() {
                    return Err(Error::InvalidKernel(format!("bad entry ({i}, {j}) = {v}")));
                }
                s += v;
            }
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidKernel(format!("row {i} sums to {s}")));
            }
        }
        if let Some(pi) = &self.stationary {
            if pi.len() != self.matrix.n() {
                return Err(Error::InvalidKernel("stationary vector has the wrong length".into()));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> DiscreteKind {
        self.kind
    }
    pub fn num_states(&self) -> usize {
        self.matrix.n()
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
    pub fn matrix(&self) -> &SparseRows {
        &self.matrix
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }
    pub fn stationary(&self) -> Option<&[f64]> {
        self.stationary.as_deref()
    }
    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn with_stationary(mut self, pi: Vec<f64>) -> Result<Self> {
        self.stationary = Some(pi);
        self.validate()?;
        Ok(self)
    }

    /// Dense copy of the matrix.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.num_states();
        let mut out = vec![vec![0.0; n]; n];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.matrix.row(i) {
                row[j] = v;
            }
        }
        out
    }

    /// `max |pi_i T_ij - pi_j T_ji| / max pi_i T_ij` over off-diagonal pairs.
    pub fn detailed_balance_residual(&self, pi: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..self.num_states() {
            for (j, v) in self.matrix.row(i) {
                if i == j {
                    continue;
                }
                let f = pi[i] * v;
                scale = scale.max(f);
                worst = worst.max((f - pi[j] * self.matrix.get(j, i)).abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Smallest diagonal entry.
    pub fn min_diagonal(&self) -> f64 {
        (0..self.num_states()).map(|i| self.get(i, i)).fold(f64::INFINITY, f64::min)
    }

    /// Left eigenvector for eigenvalue one by power iteration from `start`.
    /// Returns the vector and whether the L1 change fell below `tol`.
    pub fn power_stationary(&self, start: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, bool) {
        let mut x = start.to_vec();
        for _ in 0..max_iter {
            let y = self.matrix.left_mul(&x);
            let s: f64 = y.iter().sum();
            let y: Vec<f64> = y.into_iter().map(|v| v / s).collect();
            let change: f64 = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
            x = y;
            if change < tol {
                return (x, true);
            }
        }
        (x, false)
    }
}

/// The target restricted to `B(0, R)` and discretized on grid cells.
#[derive(Clone, Debug)]
pub struct TruncatedTarget {
    grid: Grid,
    radius: f64,
    /// Grid cells meeting the ball, in grid order.
    cells: Vec<usize>,
    /// Representative point per state: the cell center, pulled onto the ball when outside it.
    points: Vec<f64>,
    /// `pi*(cell ∩ Omega)`, summing to one.
    masses: Vec<f64>,
    /// `pi*` density at the representative points.
    density: Vec<f64>,
    /// `Z_Omega = int_Omega exp(-beta (f - f_ref))`.
    log_normalizer: f64,
    f_ref: f64,
}

/// Shift so that `exp(-beta (f - f_ref))` stays representable.
pub(crate) fn reference_level(model: &TargetModel) -> f64 {
    model.minimizer().map(|m| m.value).unwrap_or_else(|| model.value(&vec![0.0; model.dim()]))
}

/// Length scale of the density `exp(-beta f)` for quadrature panels.
pub(crate) fn density_scale(model: &TargetModel, beta: f64) -> f64 {
    0.25 / (beta * model.constants().l).sqrt()
}

impl TruncatedTarget {
    /// Quadrature of `exp(-beta f)` over each grid cell intersected with `B(0, R)`.
    pub fn new(model: &TargetModel, beta: f64, grid: &Grid, radius: f64) -> Result<Self> {
        if grid.dim() != model.dim() {
            return Err(invalid("grid and model dimensions differ"));
        }
        if !(radius > 0.0) || grid.margin(radius) < -1e-12 * radius {
            return Err(invalid("the grid must cover the truncation ball"));
        }
        let d = model.dim();
        let f_ref = reference_level(model);
        let cells: Vec<usize> = (0..grid.num_cells())
            .filter(|&c| {
                let b = grid.cell_bounds(c);
                box_min_norm(&b[..d]) < radius * (1.0 - 1e-13)
            })
            .collect();
        let scale = density_scale(model, beta).min(grid.spacing());
        let raw = map_range(cells.len(), |k| {
            let b = grid.cell_bounds(cells[k]);
            let region = Region::new(d, b).with_ball(&[0.0, 0.0][..d], radius);
            integrate(&region, scale, (f64::NEG_INFINITY, f64::INFINITY), |x| (-beta * (model.value(x) - f_ref)).exp())
        });
        let z: f64 = raw.iter().sum();
        if !(z > 0.0) || !z.is_finite() {
            return Err(invalid("target mass on the grid is zero or not finite"));
        }
        let mut points = Vec::with_capacity(cells.len() * d);
        for &c in &cells {
            let mut p = grid.center(c);
            let np = norm(&p);
            if np > radius {
                let s = radius * (1.0 - 1e-12) / np;
                p.iter_mut().for_each(|x| *x *= s);
            }
            points.extend(p);
        }
        let density = points.chunks(d).map(|p| (-beta * (model.value(p) - f_ref)).exp() / z).collect();
        Ok(Self {
            grid: grid.clone(),
            radius,
            cells,
            points,
            masses: raw.into_iter().map(|m| m / z).collect(),
            density,
            log_normalizer: z.ln(),
            f_ref,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }
    pub fn num_states(&self) -> usize {
        self.cells.len()
    }
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.points[i * d..(i + 1) * d]
    }
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
    pub fn density(&self) -> &[f64] {
        &self.density
    }
    /// `log Z_Omega` where `Z_Omega = int_Omega exp(-beta f)`.
    pub fn log_normalizer(&self, beta: f64) -> f64 {
        self.log_normalizer - beta * self.f_ref
    }

    /// State index of the cell containing `x`.
    pub fn state_of(&self, x: &[f64]) -> Option<usize> {
        let c = self.grid.locate(x)?;
        self.cells.binary_search(&c).ok()
    }

    /// Cell-averaged density on the full grid (zero off the ball), for Cheeger computations.
    pub fn grid_density(&self) -> crate::kernels::cheeger::GridDensity {
        let mut v = vec![0.0; self.grid.num_cells()];
        let vol = self.grid.cell_volume();
        for (k, &c) in self.cells.iter().enumerate() {
            v[c] = self.masses[k] / vol;
        }
        crate::kernels::cheeger::GridDensity::new_unchecked(self.grid.clone(), v)
    }
}

/// Builds the discretized lazy or metropolized kernel on the states of `target`.
///
/// Row `i` starts from the representative point `u_i`. The continuous part of the lazy kernel
/// puts `1/2 int_{cell_j ∩ S_u} P(w|u) dw` on cell `j`; the remaining `1/2 + (1 - p(u))/2` is the
/// atom at `u`. The row sum of the cell masses is compared with an independent evaluation of
/// `p(u)` and a deviation above [`ROW_SUM_TOLERANCE`] is an error.
///
/// The metropolized kernel replaces each off-diagonal `Q_ij` by `min(Q_ij, pi_j Q_ji / pi_i)` with
/// `pi` the cell masses of the truncated target, the cell-level analogue of
/// `alpha_u(w) = min{1, T_w(u) pi(w) / (T_u(w) pi(u))}`. It is reversible with respect to `pi`
/// exactly, and the rejected mass goes to the diagonal.
pub fn build_discretized_kernel(engine: &KernelEngine, target: &TruncatedTarget, kind: DiscreteKind) -> Result<DiscretizedKernel> {
    let d = engine.dim();
    let grid = target.grid();
    if grid.dim() != d {
        return Err(invalid("grid and model dimensions differ"));
    }
    if (target.radius() - engine.big_r()).abs() > 1e-12 * engine.big_r() {
        return Err(invalid("target and engine use different truncation radii"));
    }
    let min_margin = 3.0 * engine.sigma();
    if grid.margin(engine.big_r()) < min_margin - 1e-12 {
        return Err(invalid(format!(
            "grid margin {} around the ball is below 3 sqrt(2 eta / beta) = {min_margin}",
            grid.margin(engine.big_r())
        )));
    }
    if kind == DiscreteKind::Custom {
        return Err(invalid("custom kernels are built with from_dense"));
    }
    let h = grid.spacing();
    let reach = (engine.r() / h).ceil() as isize + 1;
    let n_axis = grid.cells_per_axis().to_vec();
    let ns = target.num_states();

    let rows: Vec<Result<(Vec<(usize, f64)>, f64)>> = map_range(ns, |i| {
        let u = target.point(i);
        let means = engine.proposal_means(u);
        let mut s_box = [(0.0, 0.0); 2];
        for a in 0..d {
            s_box[a] = (u[a] - engine.r(), u[a] + engine.r());
        }
        let p = engine.continuous_mass_with(u, &means, &s_box);
        let home = grid.unflatten(target.cells()[i]);
        let mut entries = Vec::new();
        let mut cont = 0.0;
        let range = |a: usize| {
            let lo = (home[a] as isize - reach).max(0) as usize;
            let hi = ((home[a] as isize + reach) as usize).min(n_axis[a] - 1);
            lo..=hi
        };
        let ys: Vec<usize> = if d == 2 { range(1).collect() } else { vec![0] };
        for ix in range(0) {
            for &iy in &ys {
                let c = grid.flatten([ix, iy]);
                let Ok(j) = target.cells().binary_search(&c) else { continue };
                let m = 0.5 * engine.continuous_mass_with(u, &means, &grid.cell_bounds(c));
                if m > 0.0 {
                    entries.push((j, m));
                    cont += m;
                }
            }
        }
        let deviation = (0.5 + 0.5 * (1.0 - p) + cont - 1.0).abs();
        if deviation > ROW_SUM_TOLERANCE {
            return Err(Error::DiscretizationTooCoarse { row: i, deviation });
        }
        let off: f64 = entries.iter().filter(|e| e.0 != i).map(|e| e.1).sum();
        entries.retain(|e| e.0 != i);
        entries.push((i, 1.0 - off));
        Ok((entries, deviation))
    });
    let mut lazy_rows = Vec::with_capacity(ns);
    let mut max_dev: f64 = 0.0;
    for r in rows {
        let (row, dev) = r?;
        max_dev = max_dev.max(dev);
        lazy_rows.push(row);
    }
    let lazy = SparseRows::from_rows(lazy_rows);
    let pi = target.masses();
    let layout = if d == 1 {
        Layout::Path
    } else {
        Layout::Plane { coords: (0..ns).map(|i| [target.point(i)[0], target.point(i)[1]]).collect() }
    };
    let (matrix, stationary) = match kind {
        DiscreteKind::Lazy => {
            let k = DiscretizedKernel {
                kind,
                dim: d,
                points: target.points.clone(),
                matrix: lazy.clone(),
                stationary: None,
                layout: layout.clone(),
                max_row_deviation: max_dev,
            };
            let (st, _) = k.power_stationary(pi, 1e-13, 5_000);
            (lazy, st)
        }
        DiscreteKind::Metropolized => {
            let rows: Vec<Vec<(usize, f64)>> = map_range(ns, |i| {
                let mut out = Vec::new();
                let mut off = 0.0;
                for (j, q) in lazy.row(i) {
                    if j == i {
                        continue;
                    }
                    let back = lazy.get(j, i);
                    let t = if pi[i] > 0.0 { q.min(pi[j] * back / pi[i]) } else { 0.0 };
                    if t > 0.0 {
                        out.push((j, t));
                        off += t;
                    }
                }
                out.push((i, 1.0 - off));
                out
            });
            (SparseRows::from_rows(rows), pi.to_vec())
        }
        DiscreteKind::Custom => unreachable!(),
    };
    let k = DiscretizedKernel {
        kind,
        dim: d,
        points: target.points.clone(),
        matrix,
        stationary: Some(stationary),
        layout,
        max_row_deviation: max_dev,
    };
    k.validate()?;
    Ok(k)
}
