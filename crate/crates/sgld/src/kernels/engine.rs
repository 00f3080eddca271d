use crate::error::{invalid, Error, Result};
use crate::kernels::grid::Grid;
use crate::kernels::region::{gauss_mixture_mass, integrate, Boxed, Region};
use crate::linalg::{dist, dist_sq, norm};
use crate::samplers::ChainConfig;
use crate::special::log_sum_exp;
use crate::stochastic_gradient::{enumerate_batches, stochastic_grad_into, BatchEnumeration};
use crate::targets::TargetModel;

/// Exact transition densities of SGLD, its lazy restricted kernel and the metropolized kernel
/// for a model small enough to enumerate every mini-batch, in one or two dimensions.
///
/// The SGLD proposal from `u` is the equal-weight mixture over batches `I` of
/// `N(u - eta g(u, I), (2 eta / beta) I)`. The lazy kernel stays put with probability one half,
/// otherwise proposes and keeps the proposal only inside `S_u = B(u, r) ∩ B(0, R)`.
#[derive(Clone, Debug)]
pub struct KernelEngine<'a> {
    model: &'a TargetModel,
    eta: f64,
    beta: f64,
    r: f64,
    big_r: f64,
    sigma: f64,
    batches: BatchEnumeration,
}

/// A measurable set for kernel masses: a finite union of intervals (1D) or boxes (2D), or all of
/// the truncation ball.
#[derive(Clone, Debug, PartialEq)]
pub enum SetSpec {
    Intervals(Vec<(f64, f64)>),
    Boxes(Vec<Boxed>),
    Omega,
}

impl SetSpec {
    /// Checks the set lies in `[-R, R]^d`, merges overlapping intervals and rejects overlapping boxes.
    pub fn normalized(&self, dim: usize, big_r: f64) -> Result<Vec<Boxed>> {
        let tol = 1e-12 * (1.0 + big_r);
        let inside = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo < hi && lo >= -big_r - tol && hi <= big_r + tol;
        match self {
            SetSpec::Omega => Ok(vec![[(-big_r, big_r), (-big_r, big_r)]]),
            SetSpec::Intervals(iv) => {
                if dim != 1 {
                    return Err(invalid("interval sets need a one-dimensional model"));
                }
                let mut v = iv.clone();
                if v.is_empty() || v.iter().any(|&(a, b)| !inside(a, b)) {
                    return Err(invalid(format!("malformed interval set {iv:?} for R = {big_r}")));
                }
                v.sort_by(|p, q| p.0.total_cmp(&q.0));
                let mut merged: Vec<(f64, f64)> = Vec::new();
                for (a, b) in v {
                    match merged.last_mut() {
                        Some(last) if a <= last.1 => last.1 = last.1.max(b),
                        _ => merged.push((a, b)),
                    }
                }
                Ok(merged.into_iter().map(|iv| [iv, (0.0, 0.0)]).collect())
            }
            SetSpec::Boxes(bs) => {
                if dim != 2 {
                    return Err(invalid("box sets need a two-dimensional model"));
                }
                if bs.is_empty() || bs.iter().any(|b| !inside(b[0].0, b[0].1) || !inside(b[1].0, b[1].1)) {
                    return Err(invalid(format!("malformed box set {bs:?} for R = {big_r}")));
                }
                for (i, p) in bs.iter().enumerate() {
                    for q in &bs[i + 1..] {
                        let ox = p[0].1.min(q[0].1) - p[0].0.max(q[0].0);
                        let oy = p[1].1.min(q[1].1) - p[1].0.max(q[1].0);
                        if ox > 0.0 && oy > 0.0 {
                            return Err(invalid("boxes in a set must not overlap"));
                        }
                    }
                }
                Ok(bs.clone())
            }
        }
    }
}

fn piece_contains(p: &Boxed, u: &[f64]) -> bool {
    u.iter().enumerate().all(|(a, x)| *x >= p[a].0 && *x <= p[a].1)
}

impl<'a> KernelEngine<'a> {
    /// Builds the engine. Errors if `d > 2`, if the batches cannot be enumerated, or on
    /// non-positive parameters.
    pub fn new(model: &'a TargetModel, eta: f64, beta: f64, batch_size: usize, r: f64, big_r: f64) -> Result<Self> {
        if model.dim() > 2 {
            return Err(Error::Unsupported(format!(
                "exact kernels need d <= 2, got d = {}",
                model.dim()
            )));
        }
        for (name, v) in [("eta", eta), ("beta", beta), ("r", r), ("R", big_r)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be positive and finite")));
            }
        }
        let batches = enumerate_batches(model.n(), batch_size)?;
        Ok(Self { model, eta, beta, r, big_r, sigma: (2.0 * eta / beta).sqrt(), batches })
    }

    /// Engine for the step size, temperature, batch size and radii of a chain configuration.
    pub fn from_config(model: &'a TargetModel, cfg: &ChainConfig) -> Result<Self> {
        let (Some(big_r), Some(r)) = (cfg.big_r, cfg.r) else {
            return Err(Error::InvalidConfig("metropolized kernels need both R and r".into()));
        };
        Self::new(model, cfg.eta, cfg.beta, cfg.batch_size, r, big_r)
    }

    pub fn model(&self) -> &TargetModel {
        self.model
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn big_r(&self) -> f64 {
        self.big_r
    }
    /// Proposal standard deviation `sqrt(2 eta / beta)`.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn dim(&self) -> usize {
        self.model.dim()
    }
    pub fn batches(&self) -> &BatchEnumeration {
        &self.batches
    }

    /// Proposal means `u - eta g(u, I)` for every batch, flattened.
    pub fn proposal_means(&self, u: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; self.batches.len() * d];
        let mut tmp = vec![0.0; d];
        for (k, b) in self.batches.batches().iter().enumerate() {
            let g = &mut out[k * d..(k + 1) * d];
            stochastic_grad_into(self.model, u, b.indices(), g, &mut tmp);
            for (gi, ui) in g.iter_mut().zip(u) {
                *gi = ui - self.eta * *gi;
            }
        }
        out
    }

    fn log_density_with(&self, means: &[f64], v: &[f64]) -> f64 {
        let d = self.dim();
        let s2 = self.sigma * self.sigma;
        let k = means.len() / d;
        let lse = log_sum_exp(means.chunks(d).map(|m| -0.5 * dist_sq(v, m) / s2));
        lse - (k as f64).ln() - 0.5 * d as f64 * (2.0 * std::f64::consts::PI * s2).ln()
    }

    /// `log P(v | u)`.
    pub fn log_density(&self, u: &[f64], v: &[f64]) -> f64 {
        self.log_density_with(&self.proposal_means(u), v)
    }

    /// SGLD transition density `P(v | u)`, exact over all batches.
    pub fn sgld_density(&self, u: &[f64], v: &[f64]) -> f64 {
        self.log_density(u, v).exp()
    }

    pub fn in_omega(&self, x: &[f64]) -> bool {
        norm(x) <= self.big_r * (1.0 + 1e-12)
    }

    /// Whether `w` lies in `S_u = B(u, r) ∩ B(0, R)`.
    pub fn in_region(&self, u: &[f64], w: &[f64]) -> bool {
        dist(u, w) <= self.r && self.in_omega(w)
    }

    fn check_domain(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(invalid("point dimension does not match the model"));
        }
        if !self.in_omega(u) {
            return Err(Error::Domain(format!("|u| = {} > R = {}", norm(u), self.big_r)));
        }
        Ok(())
    }

    fn region(&self, u: &[f64], piece: &Boxed) -> Region {
        Region::new(self.dim(), *piece).with_ball(u, self.r).with_ball(&[0.0, 0.0][..self.dim()], self.big_r)
    }

    fn s_u_box(&self, u: &[f64]) -> Boxed {
        let mut b = [(0.0, 0.0); 2];
        for a in 0..self.dim() {
            b[a] = (u[a] - self.r, u[a] + self.r);
        }
        b
    }

    /// `int_{piece ∩ S_u} P(w | u) dw` given the proposal means at `u`.
    pub fn continuous_mass_with(&self, u: &[f64], means: &[f64], piece: &Boxed) -> f64 {
        gauss_mixture_mass(&self.region(u, piece), means, self.sigma)
    }

    /// `int_{piece ∩ S_u} (1 - alpha_u(w)) P(w | u) dw`.
    fn continuous_rejection_with(&self, u: &[f64], means: &[f64], fu: f64, piece: &Boxed) -> f64 {
        let d = self.dim();
        let (mut wlo, mut whi) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in means.chunks(d) {
            wlo = wlo.min(c[0] - 12.0 * self.sigma);
            whi = whi.max(c[0] + 12.0 * self.sigma);
        }
        integrate(&self.region(u, piece), 0.5 * self.sigma, (wlo, whi), |w| {
            let lf = self.log_density_with(means, w);
            let lb = self.log_density(w, u);
            let lr = lb - lf - self.beta * (self.model.value(w) - fu);
            let one_minus = if lr >= 0.0 { 0.0 } else { -lr.exp_m1() };
            one_minus * lf.exp()
        })
    }

    /// `int_{piece ∩ S_u} alpha_u(w) P(w | u) dw`.
    pub fn continuous_alpha_mass_with(&self, u: &[f64], means: &[f64], piece: &Boxed) -> f64 {
        let m = self.continuous_mass_with(u, means, piece);
        if m == 0.0 {
            return 0.0;
        }
        (m - self.continuous_rejection_with(u, means, self.model.value(u), piece)).max(0.0)
    }

    /// `p(u) = P[v in S_u]` for `v ~ P(. | u)`.
    pub fn accept_prob(&self, u: &[f64]) -> Result<f64> {
        self.check_domain(u)?;
        let means = self.proposal_means(u);
        Ok(self.continuous_mass_with(u, &means, &self.s_u_box(u)))
    }

    /// Metropolis acceptance `min{1, P(u|w) e^{-beta f(w)} / (P(w|u) e^{-beta f(u)})}`.
    /// Equal points give 1; points outside `S_u` give 0.
    pub fn mh_accept(&self, u: &[f64], w: &[f64]) -> f64 {
        if u == w {
            return 1.0;
        }
        if !self.in_omega(u) || !self.in_region(u, w) {
            return 0.0;
        }
        let lr = self.log_density(w, u) - self.log_density(u, w) - self.beta * (self.model.value(w) - self.model.value(u));
        if lr >= 0.0 {
            1.0
        } else {
            lr.exp()
        }
    }

    /// Lazy kernel mass `T_u(A) = 1/2 1[u in A] + 1/2 [(1 - p(u)) 1[u in A] + int_{A ∩ S_u} P(w|u) dw]`.
    pub fn lazy_kernel_mass(&self, u: &[f64], set: &SetSpec) -> Result<f64> {
        self.check_domain(u)?;
        let pieces = set.normalized(self.dim(), self.big_r)?;
        let means = self.proposal_means(u);
        let p = self.continuous_mass_with(u, &means, &self.s_u_box(u));
        let cont: f64 = pieces.iter().map(|pc| self.continuous_mass_with(u, &means, pc)).sum();
        let atom = if pieces.iter().any(|pc| piece_contains(pc, u)) { 1.0 - 0.5 * p } else { 0.0 };
        Ok(atom + 0.5 * cont)
    }

    /// Metropolized kernel mass `T*_u(A)`: continuous part `1/2 alpha_u(w) P(w|u)` on `S_u`, the
    /// rest of the mass as an atom at `u`.
    pub fn metropolized_kernel_mass(&self, u: &[f64], set: &SetSpec) -> Result<f64> {
        self.check_domain(u)?;
        let pieces = set.normalized(self.dim(), self.big_r)?;
        let ctx = self.point_context(u);
        Ok(self.metropolized_mass_in(&ctx, &pieces))
    }

    /// Per-point quantities reused across many sets.
    pub(crate) fn point_context(&self, u: &[f64]) -> PointContext {
        let means = self.proposal_means(u);
        let sbox = self.s_u_box(u);
        let p = self.continuous_mass_with(u, &means, &sbox);
        let p_alpha = self.continuous_alpha_mass_with(u, &means, &sbox);
        PointContext { u: u.to_vec(), means, p, p_alpha }
    }

    pub(crate) fn lazy_mass_in(&self, ctx: &PointContext, pieces: &[Boxed]) -> f64 {
        let cont: f64 = pieces.iter().map(|pc| self.continuous_mass_with(&ctx.u, &ctx.means, pc)).sum();
        let atom = if pieces.iter().any(|pc| piece_contains(pc, &ctx.u)) { 1.0 - 0.5 * ctx.p } else { 0.0 };
        atom + 0.5 * cont
    }

    pub(crate) fn metropolized_mass_in(&self, ctx: &PointContext, pieces: &[Boxed]) -> f64 {
        let cont: f64 = pieces.iter().map(|pc| self.continuous_alpha_mass_with(&ctx.u, &ctx.means, pc)).sum();
        let atom = if pieces.iter().any(|pc| piece_contains(pc, &ctx.u)) { 1.0 - 0.5 * ctx.p_alpha } else { 0.0 };
        atom + 0.5 * cont
    }
}

pub(crate) struct PointContext {
    pub u: Vec<f64>,
    pub means: Vec<f64>,
    pub p: f64,
    pub p_alpha: f64,
}

/// Worst case of the two-sided bound `(1 - delta) T*_u(A) <= T_u(A) <= (1 + delta) T*_u(A)`.
#[derive(Clone, Debug)]
pub struct SandwichReport {
    pub delta: f64,
    pub tolerance: f64,
    pub pairs_checked: usize,
    pub violations: usize,
    /// Largest `|T_u(A) / T*_u(A) - 1|` over pairs with `T*_u(A) > 0`.
    pub worst_ratio_deviation: f64,
    /// Smallest `T_u(A) - (1 - delta) T*_u(A)`.
    pub worst_lower_margin: f64,
    /// Smallest `(1 + delta) T*_u(A) - T_u(A)`.
    pub worst_upper_margin: f64,
    pub worst_point: Vec<f64>,
    pub worst_set: Option<SetSpec>,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Quadrature tolerance for the sandwich inequalities.
pub const SANDWICH_TOLERANCE: f64 = 1e-8;

/// Checks the `delta`-closeness of the lazy and metropolized kernels on every `(point, set)` pair.
pub fn delta_sandwich_check(engine: &KernelEngine, delta: f64, points: &[Vec<f64>], sets: &[SetSpec]) -> Result<SandwichReport> {
    let normalized: Vec<Vec<Boxed>> =
        sets.iter().map(|s| s.normalized(engine.dim(), engine.big_r())).collect::<Result<_>>()?;
    for u in points {
        engine.check_domain(u)?;
    }
    let rows = crate::par::map_range(points.len(), |k| {
        let ctx = engine.point_context(&points[k]);
        normalized
            .iter()
            .map(|pieces| (engine.lazy_mass_in(&ctx, pieces), engine.metropolized_mass_in(&ctx, pieces)))
            .collect::<Vec<_>>()
    });
    let mut rep = SandwichReport {
        delta,
        tolerance: SANDWICH_TOLERANCE,
        pairs_checked: 0,
        violations: 0,
        worst_ratio_deviation: 0.0,
        worst_lower_margin: f64::INFINITY,
        worst_upper_margin: f64::INFINITY,
        worst_point: Vec::new(),
        worst_set: None,
    };
    for (k, row) in rows.iter().enumerate() {
        for (s, &(t, ts)) in row.iter().enumerate() {
            rep.pairs_checked += 1;
            let lower = t - (1.0 - delta) * ts;
            let upper = (1.0 + delta) * ts - t;
            rep.worst_lower_margin = rep.worst_lower_margin.min(lower);
            rep.worst_upper_margin = rep.worst_upper_margin.min(upper);
            if lower < -SANDWICH_TOLERANCE || upper < -SANDWICH_TOLERANCE {
                rep.violations += 1;
            }
            if ts > 0.0 {
                let dev = (t / ts - 1.0).abs();
                if dev > rep.worst_ratio_deviation {
                    rep.worst_ratio_deviation = dev;
                    rep.worst_point = points[k].clone();
                    rep.worst_set = Some(sets[s].clone());
                }
            }
        }
    }
    Ok(rep)
}

/// Which kernel a TV distance compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    /// Plain SGLD proposal `P(. | u)` without laziness or restriction.
    Unlazy,
    Lazy,
    Metropolized,
}

/// TV distance between the kernels at two points, with the closed-form bound for the plain
/// proposal kernels.
#[derive(Clone, Debug)]
pub struct KernelTv {
    pub tv: f64,
    /// `(1 + L eta) |u - v| / sqrt(2 eta / beta)`.
    pub bound: f64,
}

/// Half the L1 distance between the cell-mass vectors of the two kernels on `grid`; atoms are
/// lumped into the cells holding `u` and `v`, and mass off the grid into one overflow cell.
pub fn kernel_tv_distance(engine: &KernelEngine, grid: &Grid, u: &[f64], v: &[f64], kind: KernelKind) -> Result<KernelTv> {
    if grid.dim() != engine.dim() {
        return Err(invalid("grid and model dimensions differ"));
    }
    let masses = |x: &[f64]| -> Result<Vec<f64>> {
        let mut out = vec![0.0; grid.num_cells() + 1];
        let means = engine.proposal_means(x);
        match kind {
            KernelKind::Unlazy => {
                let big = 1e300;
                for c in 0..grid.num_cells() {
                    let b = grid.cell_bounds(c);
                    let reg = Region::new(engine.dim(), b);
                    out[c] = gauss_mixture_mass(&reg, &means, engine.sigma());
                }
                let all = Region::new(engine.dim(), [(-big, big), (-big, big)]);
                let on_grid: f64 = out.iter().sum();
                out[grid.num_cells()] = (gauss_mixture_mass(&all, &means, engine.sigma()) - on_grid).max(0.0);
            }
            KernelKind::Lazy | KernelKind::Metropolized => {
                engine.check_domain(x)?;
                let ctx = engine.point_context(x);
                let mut cont = 0.0;
                for c in 0..grid.num_cells() {
                    let b = grid.cell_bounds(c);
                    let m = if kind == KernelKind::Lazy {
                        engine.continuous_mass_with(x, &ctx.means, &b)
                    } else {
                        engine.continuous_alpha_mass_with(x, &ctx.means, &b)
                    };
                    out[c] = 0.5 * m;
                    cont += 0.5 * m;
                }
                let atom = 1.0 - cont;
                match grid.locate(x) {
                    Some(c) => out[c] += atom,
                    None => out[grid.num_cells()] += atom,
                }
            }
        }
        Ok(out)
    };
    let a = masses(u)?;
    let b = masses(v)?;
    let tv = 0.5 * a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum::<f64>();
    let l = engine.model().constants().l;
    let bound = (1.0 + l * engine.eta()) * dist(u, v) / engine.sigma();
    Ok(KernelTv { tv: tv.min(1.0), bound })
}
