use crate::error::{invalid, Result};
use crate::kernels::grid::Grid;

/// Piecewise-constant density on grid cells.
#[derive(Clone, Debug)]
pub struct GridDensity {
    grid: Grid,
    values: Vec<f64>,
}

/// Allowed deviation of the total mass from one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-8;

impl GridDensity {
    /// Errors unless values are nonnegative and `sum(values) * cell_volume = 1`.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(invalid("one density value per cell expected"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("density values must be finite and nonnegative"));
        }
        let total: f64 = values.iter().sum::<f64>() * grid.cell_volume();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(invalid(format!("density integrates to {total}, not 1")));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn new_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    /// Evaluates `f` at cell centers and normalizes.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let raw: Vec<f64> = (0..grid.num_cells()).map(|c| f(&grid.center(c))).collect();
        let z: f64 = raw.iter().sum::<f64>() * grid.cell_volume();
        if !(z > 0.0) || !z.is_finite() {
            return Err(invalid("density has zero or infinite mass on the grid"));
        }
        Self::new(grid, raw.into_iter().map(|v| v / z).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation between cell centers, zero off the grid.
    fn interpolate(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let h = g.spacing();
        let mut idx = [(0usize, 0usize, 0.0f64); 2];
        for a in 0..g.dim() {
            let t = (x[a] - g.lo()[a]) / h - 0.5;
            let n = g.cells_per_axis()[a];
            if t < -0.5 || t > n as f64 - 0.5 {
                return 0.0;
            }
            let t = t.clamp(0.0, (n - 1) as f64);
            let i0 = (t.floor() as usize).min(n - 2);
            idx[a] = (i0, i0 + 1, t - i0 as f64);
        }
        if g.dim() == 1 {
            let (i0, i1, s) = idx[0];
            return (1.0 - s) * self.values[i0] + s * self.values[i1];
        }
        let v = |i: usize, j: usize| self.values[g.flatten([i, j])];
        let (i0, i1, s) = idx[0];
        let (j0, j1, t) = idx[1];
        (1.0 - s) * ((1.0 - t) * v(i0, j0) + t * v(i0, j1)) + s * ((1.0 - t) * v(i1, j0) + t * v(i1, j1))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CheegerCut {
    /// 1D: cut positions; the set is the union of `[c_0, c_1], [c_2, c_3], ...` or a half-line
    /// when the count is odd.
    Cuts(Vec<f64>),
    /// 2D half-plane `<x, normal> <= offset`.
    HalfPlane { normal: [f64; 2], offset: f64 },
    /// 2D disk.
    Disk { center: [f64; 2], radius: f64 },
}

#[derive(Clone, Debug)]
pub struct CheegerResult {
    pub rho: f64,
    /// True when the minimum was searched beyond the exhaustively enumerated families.
    pub heuristic: bool,
    pub cut: CheegerCut,
}

/// Candidate endpoints for unions of intervals.
const UNION_CANDIDATES: usize = 40;

/// Discretized `inf_A pi(boundary A) / min(pi(A), pi(A^c))`.
///
/// In 1D every threshold and every single interval between cell edges is tried exactly; unions
/// of two and three intervals use endpoints drawn from the lowest-density edges and the mass
/// quantiles, which makes that part a heuristic. The density on a cut is the mean of the two
/// adjacent cells. In 2D the family is half-planes in eight directions and disks centred on a
/// coarse lattice, with boundary density from linear interpolation; the result is an upper bound.
pub fn cheeger_constant(density: &GridDensity) -> Result<CheegerResult> {
    match density.grid.dim() {
        1 => Ok(cheeger_1d(density)),
        _ => Ok(cheeger_2d(density)),
    }
}

fn cheeger_1d(dens: &GridDensity) -> CheegerResult {
    let g = &dens.grid;
    let n = g.num_cells();
    let h = g.spacing();
    let v = &dens.values;
    // prefix[k] = mass of cells 0..k
    let mut prefix = vec![0.0; n + 1];
    for k in 0..n {
        prefix[k + 1] = prefix[k] + v[k] * h;
    }
    let total = prefix[n];
    // interior edge k (1..n) sits between cells k-1 and k
    let edge_density = |k: usize| 0.5 * (v[k - 1] + v[k]);
    let edge_x = |k: usize| g.lo()[0] + k as f64 * h;
    let ratio = |boundary: f64, mass: f64| {
        let m = mass.min(total - mass);
        if m <= 1e-12 * total {
            f64::INFINITY
        } else {
            boundary / m
        }
    };
    let mut best = (f64::INFINITY, Vec::new());
    for k in 1..n {
        let r = ratio(edge_density(k), prefix[k]);
        if r < best.0 {
            best = (r, vec![k]);
        }
    }
    for a in 1..n {
        for b in a + 1..n {
            let r = ratio(edge_density(a) + edge_density(b), prefix[b] - prefix[a]);
            if r < best.0 {
                best = (r, vec![a, b]);
            }
        }
    }
    // unions of up to three intervals, i.e. three to six cut edges
    let mut cand: Vec<usize> = (1..n).collect();
    cand.sort_by(|&a, &b| edge_density(a).total_cmp(&edge_density(b)));
    cand.truncate(UNION_CANDIDATES / 2);
    for q in 1..UNION_CANDIDATES / 2 {
        let target = total * q as f64 / (UNION_CANDIDATES / 2) as f64;
        let k = prefix.partition_point(|&p| p < target).clamp(1, n - 1);
        cand.push(k);
    }
    cand.sort_unstable();
    cand.dedup();
    let mut chosen = Vec::with_capacity(6);
    for size in 3..=6 {
        union_search(&cand, size, 0, &mut chosen, &mut |cuts: &[usize]| {
            let mut mass = 0.0;
            let mut boundary = 0.0;
            for (i, &k) in cuts.iter().enumerate() {
                boundary += edge_density(k);
                // alternate in/out starting from the left end being outside
                let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
                mass += sign * prefix[k];
            }
            if cuts.len() % 2 == 1 {
                mass += total;
            }
            let r = ratio(boundary, mass);
            if r < best.0 {
                best = (r, cuts.to_vec());
            }
        });
    }
    CheegerResult {
        rho: best.0,
        heuristic: true,
        cut: CheegerCut::Cuts(best.1.iter().map(|&k| edge_x(k)).collect()),
    }
}

fn union_search(cand: &[usize], size: usize, start: usize, chosen: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if chosen.len() == size {
        visit(chosen);
        return;
    }
    for i in start..cand.len() {
        if cand.len() - i < size - chosen.len() {
            break;
        }
        chosen.push(cand[i]);
        union_search(cand, size, i + 1, chosen, visit);
        chosen.pop();
    }
}

fn cheeger_2d(dens: &GridDensity) -> CheegerResult {
    let g = &dens.grid;
    let h = g.spacing();
    let vol = g.cell_volume();
    let centers: Vec<Vec<f64>> = (0..g.num_cells()).map(|c| g.center(c)).collect();
    let masses: Vec<f64> = dens.values.iter().map(|v| v * vol).collect();
    let total: f64 = masses.iter().sum();
    let (xlo, xhi, ylo, yhi) = (g.lo()[0], g.hi(0), g.lo()[1], g.hi(1));
    let diag = (xhi - xlo).hypot(yhi - ylo);
    let step = 0.5 * h;
    let line_integral = |p0: [f64; 2], dir: [f64; 2], len: f64| -> f64 {
        let k = (len / step).ceil().max(1.0) as usize;
        let ds = len / k as f64;
        (0..k)
            .map(|i| {
                let s = (i as f64 + 0.5) * ds;
                dens.interpolate(&[p0[0] + s * dir[0], p0[1] + s * dir[1]])
            })
            .sum::<f64>()
            * ds
    };
    let mut best = (f64::INFINITY, CheegerCut::HalfPlane { normal: [1.0, 0.0], offset: 0.0 });
    for q in 0..8 {
        let th = q as f64 * std::f64::consts::PI / 8.0;
        let nrm = [th.cos(), th.sin()];
        let tangent = [-nrm[1], nrm[0]];
        let mut proj: Vec<(f64, f64)> = centers.iter().zip(&masses).map(|(c, m)| (c[0] * nrm[0] + c[1] * nrm[1], *m)).collect();
        proj.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (pmin, pmax) = (proj[0].0, proj[proj.len() - 1].0);
        let cuts = (2.0 * (pmax - pmin) / h).ceil() as usize;
        let mut acc = 0.0;
        let mut k = 0;
        for c in 1..cuts {
            let off = pmin + (pmax - pmin) * c as f64 / cuts as f64;
            while k < proj.len() && proj[k].0 <= off {
                acc += proj[k].1;
                k += 1;
            }
            let m = acc.min(total - acc);
            if m <= 1e-12 * total {
                continue;
            }
            let origin = [off * nrm[0] - diag * tangent[0], off * nrm[1] - diag * tangent[1]];
            let b = line_integral(origin, tangent, 2.0 * diag);
            let r = b / m;
            if r < best.0 {
                best = (r, CheegerCut::HalfPlane { normal: nrm, offset: off });
            }
        }
    }
    let lattice = 9;
    for i in 0..lattice {
        for j in 0..lattice {
            let c = [
                xlo + (xhi - xlo) * (i as f64 + 0.5) / lattice as f64,
                ylo + (yhi - ylo) * (j as f64 + 0.5) / lattice as f64,
            ];
            let mut dist: Vec<(f64, f64)> = centers.iter().zip(&masses).map(|(p, m)| ((p[0] - c[0]).hypot(p[1] - c[1]), *m)).collect();
            dist.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut acc = 0.0;
            let mut k = 0;
            let radii = (diag / h).ceil() as usize;
            for q in 1..radii {
                let rad = q as f64 * h;
                while k < dist.len() && dist[k].0 <= rad {
                    acc += dist[k].1;
                    k += 1;
                }
                let m = acc.min(total - acc);
                if m <= 1e-12 * total {
                    continue;
                }
                let arcs = ((2.0 * std::f64::consts::PI * rad) / step).ceil().max(16.0) as usize;
                let dt = 2.0 * std::f64::consts::PI / arcs as f64;
                let b: f64 = (0..arcs)
                    .map(|a| {
                        let t = a as f64 * dt;
                        dens.interpolate(&[c[0] + rad * t.cos(), c[1] + rad * t.sin()])
                    })
                    .sum::<f64>()
                    * dt
                    * rad;
                let r = b / m;
                if r < best.0 {
                    best = (r, CheegerCut::Disk { center: c, radius: rad });
                }
            }
        }
    }
    CheegerResult { rho: best.0, heuristic: true, cut: best.1 }
}
