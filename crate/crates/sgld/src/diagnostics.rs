//! Histograms, TV estimates against quadrature, and the step-size scaling sweeps.

use std::io::{self, Write};

use crate::error::{invalid, Error, Result};
use crate::kernels::truncation::{quadrature_cutoff, radial_mass};
use crate::kernels::{build_discretized_kernel, cheeger_constant, conductance, DiscreteKind, Grid, KernelEngine, TruncatedTarget};
use crate::par::map_range;
use crate::samplers::{run_chain_visit, ChainConfig, SamplerKind};
use crate::schedule::{log_warm_start_bound, proj_radii};
use crate::special::gl_composite;
use crate::targets::TargetModel;

/// Fixed-bin histogram on `[lo, hi]` with under- and overflow counts.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    lo: f64,
    hi: f64,
    counts: Vec<u64>,
    underflow: u64,
    overflow: u64,
    burn_in_discarded: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(hi > lo) || bins == 0 || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid("histograms need finite lo < hi and at least one bin"));
        }
        Ok(Self { lo, hi, counts: vec![0; bins], underflow: 0, overflow: 0, burn_in_discarded: 0 })
    }

    pub fn add(&mut self, x: f64) {
        if x < self.lo {
            self.underflow += 1;
        } else if x >= self.hi {
            // the top edge belongs to the last bin
            if x == self.hi {
                *self.counts.last_mut().expect("nonempty") += 1;
            } else {
                self.overflow += 1;
            }
        } else {
            let n = self.counts.len();
            let k = ((x - self.lo) / (self.hi - self.lo) * n as f64) as usize;
            self.counts[k.min(n - 1)] += 1;
        }
    }

    pub fn from_samples(lo: f64, hi: f64, bins: usize, samples: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut h = Self::new(lo, hi, bins)?;
        samples.into_iter().for_each(|x| h.add(x));
        Ok(h)
    }

    /// Records a discarded burn-in sample.
    pub fn skip(&mut self) {
        self.burn_in_discarded += 1;
    }

    /// Adds the counts of another histogram with the same bins.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if !self.same_bins(other.lo, other.hi, other.counts.len()) {
            return Err(invalid("histograms have different bins"));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        self.burn_in_discarded += other.burn_in_discarded;
        Ok(())
    }

    fn same_bins(&self, lo: f64, hi: f64, bins: usize) -> bool {
        self.lo == lo && self.hi == hi && self.counts.len() == bins
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }
    pub fn lo(&self) -> f64 {
        self.lo
    }
    pub fn hi(&self) -> f64 {
        self.hi
    }
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
    pub fn underflow(&self) -> u64 {
        self.underflow
    }
    pub fn overflow(&self) -> u64 {
        self.overflow
    }
    pub fn burn_in_discarded(&self) -> u64 {
        self.burn_in_discarded
    }

    /// Samples counted, including under- and overflow.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    pub fn edges(&self) -> Vec<f64> {
        let k = self.counts.len();
        (0..=k).map(|i| self.lo + (self.hi - self.lo) * i as f64 / k as f64).collect()
    }

    /// `[underflow, bins..., overflow]` as probabilities.
    pub fn probabilities(&self) -> Vec<f64> {
        let t = self.total().max(1) as f64;
        std::iter::once(self.underflow).chain(self.counts.iter().copied()).chain(std::iter::once(self.overflow)).map(|c| c as f64 / t).collect()
    }

    /// CSV with columns `left, right, count`; under- and overflow rows use infinite edges.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "left,right,count")?;
        let e = self.edges();
        writeln!(w, "-inf,{:?},{}", self.lo, self.underflow)?;
        for (k, c) in self.counts.iter().enumerate() {
            writeln!(w, "{:?},{:?},{c}", e[k], e[k + 1])?;
        }
        writeln!(w, "{:?},inf,{}", self.hi, self.overflow)
    }
}

/// Target probabilities on the bins of a histogram, with the two tails.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedDensity {
    pub lo: f64,
    pub hi: f64,
    /// `[P(x < lo), bins..., P(x >= hi)]`.
    pub probs: Vec<f64>,
}

impl BinnedDensity {
    pub fn bins(&self) -> usize {
        self.probs.len() - 2
    }
}

/// Bin probabilities of `pi ∝ exp(-beta f)` for a one-dimensional model, by quadrature.
pub fn binned_target(model: &TargetModel, beta: f64, lo: f64, hi: f64, bins: usize) -> Result<BinnedDensity> {
    if model.dim() != 1 {
        return Err(Error::Unsupported("binned targets are one-dimensional".into()));
    }
    if !(hi > lo) || bins == 0 {
        return Err(invalid("need lo < hi and at least one bin"));
    }
    let (cutoff, f_star) = quadrature_cutoff(model, beta, lo.abs().max(hi.abs()))?;
    let dens = |x: f64| (-beta * (model.value(&[x]) - f_star)).exp();
    let scale = crate::kernels::discrete::density_scale(model, beta);
    let piece = |a: f64, b: f64| -> f64 {
        if b <= a {
            return 0.0;
        }
        gl_composite(a, b, ((b - a) / scale).ceil().max(1.0) as usize, 16, dens)
    };
    let mut probs = Vec::with_capacity(bins + 2);
    probs.push(piece(-cutoff, lo));
    for k in 0..bins {
        let a = lo + (hi - lo) * k as f64 / bins as f64;
        let b = lo + (hi - lo) * (k + 1) as f64 / bins as f64;
        probs.push(piece(a, b));
    }
    probs.push(piece(hi, cutoff));
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(BinnedDensity { lo, hi, probs })
}

/// `1/2 sum |p_hat - pi|` over the bins and both tails.
pub fn tv_estimate(hist: &Histogram, target: &BinnedDensity) -> Result<f64> {
    if !hist.same_bins(target.lo, target.hi, target.bins()) {
        return Err(invalid("histogram and target use different bins"));
    }
    let p = hist.probabilities();
    Ok((0.5 * p.iter().zip(&target.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()).min(1.0))
}

/// TV distance between two histograms on the same bins.
pub fn tv_between(a: &Histogram, b: &Histogram) -> Result<f64> {
    if !a.same_bins(b.lo, b.hi, b.bins()) {
        return Err(invalid("histograms have different bins"));
    }
    let (p, q) = (a.probabilities(), b.probabilities());
    Ok((0.5 * p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>()).min(1.0))
}

/// Outcome of [`poly_growth_gap`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthGap {
    pub gap: f64,
    pub sample_mean: f64,
    pub target_mean: f64,
    /// Standard error of the sample mean.
    pub std_error: f64,
}

/// `|mean of h over the samples - int h dpi|` with the integral by quadrature.
/// `h` must satisfy `|h(x)| <= c (1 + |x|^degree)`.
pub fn poly_growth_gap(
    samples: &[Vec<f64>],
    h: &(dyn Fn(&[f64]) -> f64 + Sync),
    c: f64,
    degree: u32,
    model: &TargetModel,
    beta: f64,
) -> Result<GrowthGap> {
    if samples.is_empty() {
        return Err(invalid("no samples"));
    }
    let (cutoff, f_star) = quadrature_cutoff(model, beta, 0.0)?;
    // the Gaussian-type tail beyond the cutoff is small enough to absorb a polynomial factor
    // only when the growth bound at the cutoff stays moderate
    if !(c * (1.0 + cutoff.powi(degree as i32)) * 1e-13 < 1e-6) {
        return Err(Error::DomainTooSmall(format!("growth bound at the quadrature cutoff {cutoff} is too large")));
    }
    let z = radial_mass(model, beta, f_star, 0.0, cutoff, &|_| 1.0);
    let num = radial_mass(model, beta, f_star, 0.0, cutoff, &|x| h(x));
    let target_mean = num / z;
    if !target_mean.is_finite() {
        return Err(Error::DomainTooSmall("target expectation of h is not finite".into()));
    }
    let vals: Vec<f64> = samples.iter().map(|x| h(x)).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = if vals.len() > 1 { vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(GrowthGap { gap: (mean - target_mean).abs(), sample_mean: mean, target_mean, std_error: (var / n).sqrt() })
}

/// Least-squares line through log-log points with a jackknife half-width.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFit {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square residual.
    pub residual: f64,
    /// Two jackknife standard errors of the slope (zero without replicate data).
    pub half_width: f64,
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res = (x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    (slope, intercept, res)
}

impl ScalingFit {
    /// Fit of `y` against `x` (already on log scale).
    pub fn fit(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 4 {
            return Err(invalid("scaling fits need at least four points"));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(invalid("scaling fit points must be finite"));
        }
        let (slope, intercept, residual) = ols(&x, &y);
        if !slope.is_finite() {
            return Err(invalid("degenerate abscissae"));
        }
        Ok(Self { x, y, slope, intercept, residual, half_width: 0.0 })
    }

    /// Fit of the log of the replicate mean against `log eta`; `values[s][i]` is replicate `s` at
    /// `etas[i]`. The half-width comes from leaving out one replicate at a time.
    pub fn fit_replicates(etas: &[f64], values: &[Vec<f64>]) -> Result<Self> {
        let x: Vec<f64> = etas.iter().map(|e| e.ln()).collect();
        let mean_log = |rows: &[&Vec<f64>]| -> Vec<f64> {
            (0..etas.len()).map(|i| (rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64).ln()).collect()
        };
        let all: Vec<&Vec<f64>> = values.iter().collect();
        let mut fit = Self::fit(x.clone(), mean_log(&all))?;
        let s = values.len();
        if s >= 2 {
            let slopes: Vec<f64> = (0..s)
                .map(|k| {
                    let rows: Vec<&Vec<f64>> = values.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, r)| r).collect();
                    ols(&x, &mean_log(&rows)).0
                })
                .collect();
            let m = slopes.iter().sum::<f64>() / s as f64;
            let var = (s as f64 - 1.0) / s as f64 * slopes.iter().map(|v| (v - m).powi(2)).sum::<f64>();
            fit.half_width = 2.0 * var.sqrt();
        }
        Ok(fit)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "log_x,log_y")?;
        for (a, b) in self.x.iter().zip(&self.y) {
            writeln!(w, "{a:?},{b:?}")?;
        }
        writeln!(w, "# slope={:?} intercept={:?} residual={:?} half_width={:?}", self.slope, self.intercept, self.residual, self.half_width)
    }
}

/// `points` values from `lo` to `hi` with a constant ratio.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || points < 2 {
        return Err(invalid("need 0 < lo < hi and at least two points"));
    }
    let r = (hi / lo).ln() / (points - 1) as f64;
    Ok((0..points).map(|i| if i + 1 == points { hi } else { lo * (r * i as f64).exp() }).collect())
}

/// Errors unless the grid is increasing with a constant ratio (to `1e-9` relative) and has at
/// least four points.
pub fn check_geometric(grid: &[f64]) -> Result<()> {
    if grid.len() < 4 || grid.iter().any(|v| !(*v > 0.0)) {
        return Err(invalid("sweeps need at least four positive step sizes"));
    }
    let r0 = grid[1] / grid[0];
    if !(r0 > 1.0) || grid.windows(2).any(|w| ((w[1] / w[0]) / r0 - 1.0).abs() > 1e-9) {
        return Err(invalid("step-size grid is not geometric"));
    }
    Ok(())
}

/// How long each sweep chain runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepsRule {
    Fixed(usize),
    /// `ceil(10 log(lambda 10^3) / (C0 eta))` with `C0 = c0^2 rho^2 / (8 beta)`, long enough for
    /// the geometric decay term to be negligible.
    Mixing { c0: f64, rho: f64 },
}

/// Steps for one sweep chain at step size `eta`.
pub fn sweep_steps(model: &TargetModel, beta: f64, eta: f64, rule: StepsRule) -> Result<f64> {
    match rule {
        StepsRule::Fixed(k) => Ok(k as f64),
        StepsRule::Mixing { c0, rho } => {
            let log_lambda = log_warm_start_bound(model, beta)?;
            let c0_rate = c0 * c0 * rho * rho / (8.0 * beta);
            Ok((10.0 * (log_lambda + 1e3f64.ln()) / (c0_rate * eta)).ceil())
        }
    }
}

/// Settings of an [`eta_sweep`].
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    pub kind: SamplerKind,
    pub steps: StepsRule,
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    /// Fraction of each chain discarded before histogramming.
    pub burn_in: f64,
}

/// One `(eta, seed)` cell of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub eta: f64,
    pub seed: u64,
    pub steps: usize,
    pub tv: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EtaSweep {
    pub cells: Vec<SweepCell>,
    pub fit: ScalingFit,
}

impl EtaSweep {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "eta,seed,steps,tv")?;
        for c in &self.cells {
            writeln!(w, "{:?},{},{},{:?}", c.eta, c.seed, c.steps, c.tv)?;
        }
        writeln!(w, "# slope={:?} intercept={:?} residual={:?} half_width={:?}", self.fit.slope, self.fit.intercept, self.fit.residual, self.fit.half_width)
    }
}

/// Stationary TV error of a 1D chain for every step size and seed, and the log-log fit of its
/// seed average against `eta`. Each chain discards the first `burn_in` fraction and histograms
/// the rest; cells run in parallel and are reduced in grid order.
pub fn eta_sweep(model: &TargetModel, template: &ChainConfig, etas: &[f64], seeds: &[u64], plan: &SweepPlan) -> Result<EtaSweep> {
    check_geometric(etas)?;
    if seeds.is_empty() {
        return Err(invalid("sweeps need at least one seed"));
    }
    if !(0.0..1.0).contains(&plan.burn_in) {
        return Err(invalid("burn-in fraction must lie in [0, 1)"));
    }
    let target = binned_target(model, template.beta, plan.lo, plan.hi, plan.bins)?;
    let mut steps = Vec::with_capacity(etas.len());
    for &eta in etas {
        let k = sweep_steps(model, template.beta, eta, plan.steps)?;
        if !(k < 1e15) {
            return Err(invalid(format!("{k} steps at eta = {eta} is beyond any budget")));
        }
        steps.push(k as usize);
    }
    let cells: Vec<Result<SweepCell>> = map_range(etas.len() * seeds.len(), |idx| {
        let (i, s) = (idx / seeds.len(), idx % seeds.len());
        let cfg = ChainConfig { eta: etas[i], steps: steps[i], seed: seeds[s], ..template.clone() };
        let burn = (plan.burn_in * steps[i] as f64).floor() as usize;
        let mut hist = Histogram::new(plan.lo, plan.hi, plan.bins)?;
        run_chain_visit(model, &cfg, plan.kind, |k, x| {
            if k <= burn {
                hist.skip();
            } else {
                hist.add(x[0]);
            }
        })?;
        Ok(SweepCell { eta: etas[i], seed: seeds[s], steps: steps[i], tv: tv_estimate(&hist, &target)? })
    });
    let cells: Vec<SweepCell> = cells.into_iter().collect::<Result<_>>()?;
    let values: Vec<Vec<f64>> = (0..seeds.len()).map(|s| (0..etas.len()).map(|i| cells[i * seeds.len() + s].tv).collect()).collect();
    let fit = ScalingFit::fit_replicates(etas, &values)?;
    Ok(EtaSweep { cells, fit })
}

/// How the move radius follows the step size in a conductance sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RadiusRule {
    Fixed(f64),
    /// `sqrt(10 eta d / beta) (1 + sqrt(log(8K/eps)/d))`.
    Lemma63 { k: f64, eps: f64 },
    /// `sqrt(2 eta d / beta) (2 + sqrt(2 log(8K/eps)/d))`.
    Lemma62 { k: f64, eps: f64 },
}

impl RadiusRule {
    pub fn radius(&self, eta: f64, d: usize, beta: f64) -> Result<f64> {
        match *self {
            RadiusRule::Fixed(r) => Ok(r),
            RadiusRule::Lemma63 { k, eps } => Ok(proj_radii(eta, d, beta, k, eps)?.1),
            RadiusRule::Lemma62 { k, eps } => Ok(proj_radii(eta, d, beta, k, eps)?.0),
        }
    }
}

/// Settings of a [`conductance_sweep`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConductanceSweepPlan {
    pub big_r: f64,
    pub radius: RadiusRule,
    /// Cell width as a multiple of the proposal scale `sqrt(2 eta / beta)`.
    pub cells_per_sigma: f64,
    /// Cells across the ball for the grid on which the Cheeger constant of `pi*` is computed.
    pub cheeger_cells: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConductanceSweep {
    pub etas: Vec<f64>,
    pub phis: Vec<f64>,
    pub states: Vec<usize>,
    pub rho: f64,
    pub beta: f64,
    pub fit: ScalingFit,
    /// `min_eta phi / (rho sqrt(eta / beta))`.
    pub c0: f64,
}

impl ConductanceSweep {
    /// Builds the fit and constant from measured conductances.
    pub fn from_measurements(etas: Vec<f64>, phis: Vec<f64>, states: Vec<usize>, rho: f64, beta: f64) -> Result<Self> {
        if phis.iter().any(|p| !(*p > 0.0)) {
            return Err(invalid("conductances must be positive to fit on a log scale"));
        }
        let fit = ScalingFit::fit(etas.iter().map(|e| e.ln()).collect(), phis.iter().map(|p| p.ln()).collect())?;
        let c0 = etas.iter().zip(&phis).map(|(e, p)| p / (rho * (e / beta).sqrt())).fold(f64::INFINITY, f64::min);
        Ok(Self { etas, phis, states, rho, beta, fit, c0 })
    }

    /// Whether `phi >= c0 rho sqrt(eta / beta)` at every step size.
    pub fn lower_bound_holds(&self) -> bool {
        self.etas.iter().zip(&self.phis).all(|(e, p)| *p >= self.c0 * self.rho * (e / self.beta).sqrt() * (1.0 - 1e-12))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "eta,phi,states")?;
        for ((e, p), s) in self.etas.iter().zip(&self.phis).zip(&self.states) {
            writeln!(w, "{e:?},{p:?},{s}")?;
        }
        writeln!(w, "# slope={:?} half_width={:?} c0={:?} rho={:?}", self.fit.slope, self.fit.half_width, self.c0, self.rho)
    }
}

/// Conductance of the discretized metropolized kernel for every step size, its log-log slope
/// and the fitted constant `c0`. The grid spacing shrinks with `sqrt(eta)` so every kernel is
/// resolved on the scale of its own proposal; `rho` is the Cheeger constant of `pi*`.
pub fn conductance_sweep(model: &TargetModel, template: &ChainConfig, etas: &[f64], plan: &ConductanceSweepPlan) -> Result<ConductanceSweep> {
    check_geometric(etas)?;
    let beta = template.beta;
    let d = model.dim();
    let cheeger_grid = Grid::for_ball(d, plan.big_r, plan.cheeger_cells, 0.0)?;
    let rho_target = TruncatedTarget::new(model, beta, &cheeger_grid, plan.big_r)?;
    let rho = cheeger_constant(&rho_target.grid_density())?.rho;
    let mut phis = Vec::with_capacity(etas.len());
    let mut states = Vec::with_capacity(etas.len());
    for &eta in etas {
        let r = plan.radius.radius(eta, d, beta)?;
        let engine = KernelEngine::new(model, eta, beta, template.batch_size, r, plan.big_r)?;
        let h = engine.sigma() / plan.cells_per_sigma;
        let across = (2.0 * plan.big_r / h).ceil() as usize;
        let grid = Grid::for_ball(d, plan.big_r, across, 3.0 * engine.sigma())?;
        let target = TruncatedTarget::new(model, beta, &grid, plan.big_r)?;
        let kernel = build_discretized_kernel(&engine, &target, DiscreteKind::Metropolized)?;
        phis.push(conductance(&kernel)?.phi);
        states.push(kernel.num_states());
    }
    ConductanceSweep::from_measurements(etas.to_vec(), phis, states, rho, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::DiscretizedKernel;
    use crate::rng::stream_rng;
    use crate::targets::make_gaussian;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn histogram_totals_and_overflow() {
        let h = Histogram::from_samples(-1.0, 1.0, 4, [-2.0, -1.0, -0.1, 0.0, 0.99, 1.0, 3.0]).unwrap();
        assert_eq!(h.counts(), &[1, 1, 1, 2]);
        assert_eq!((h.underflow(), h.overflow(), h.total()), (1, 1, 7));
    }

    #[test]
    fn tv_properties() {
        let a = Histogram::from_samples(0.0, 1.0, 2, [0.1, 0.2]).unwrap();
        let b = Histogram::from_samples(0.0, 1.0, 2, [0.7, 0.8]).unwrap();
        assert_eq!(tv_between(&a, &b).unwrap(), 1.0);
        assert_eq!(tv_between(&a, &a).unwrap(), 0.0);
        let c = Histogram::from_samples(0.0, 1.0, 2, [0.1, 0.8, 0.9]).unwrap();
        assert_eq!(tv_between(&a, &c).unwrap(), tv_between(&c, &a).unwrap());
        let other = Histogram::new(0.0, 2.0, 2).unwrap();
        assert!(tv_between(&a, &other).is_err());
    }

    #[test]
    fn exact_samples_give_small_tv() {
        let g = make_gaussian(&[0.0], 1.0, 1).unwrap();
        let target = binned_target(&g, 1.0, -5.0, 5.0, 50).unwrap();
        assert!((target.probs.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        let mut rng = stream_rng(1, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 400_000;
        let h = Histogram::from_samples(-5.0, 5.0, 50, (0..n).map(|_| normal.sample(&mut rng))).unwrap();
        let tv = tv_estimate(&h, &target).unwrap();
        // E TV is of order sqrt(bins / n)
        assert!(tv < 2.0 * (50.0 / n as f64).sqrt(), "{tv}");
    }

    #[test]
    fn fit_recovers_exact_slope() {
        let etas = geometric_grid(1e-4, 1e-1, 7).unwrap();
        let f = ScalingFit::fit(etas.iter().map(|e| e.ln()).collect(), etas.iter().map(|e| (3.0 * e.sqrt()).ln()).collect()).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12 && f.residual < 1e-12);
        assert!(check_geometric(&etas).is_ok());
        assert!(check_geometric(&[1e-3, 2e-3, 5e-3, 1e-2]).is_err());
        assert!(check_geometric(&[1e-3, 1e-2, 1e-1]).is_err());
    }

    #[test]
    fn two_state_conductance_family() {
        // cross-mass proportional to sqrt(eta) by construction
        let etas = geometric_grid(1e-6, 1e-2, 5).unwrap();
        let phis: Vec<f64> = etas
            .iter()
            .map(|e| {
                let p = 0.3 * e.sqrt();
                let k = DiscretizedKernel::from_dense(&[vec![1.0 - p, p], vec![p, 1.0 - p]], Some(vec![0.5, 0.5])).unwrap();
                conductance(&k).unwrap().phi
            })
            .collect();
        let s = ConductanceSweep::from_measurements(etas, phis, vec![2; 5], 1.0, 1.0).unwrap();
        assert!((s.fit.slope - 0.5).abs() < 1e-12);
        assert!((s.c0 - 0.3).abs() < 1e-12 && s.lower_bound_holds());
        assert!(s.phis.iter().all(|p| *p <= 1.0));
    }

    #[test]
    fn poly_growth_constant_and_odd() {
        let g = make_gaussian(&[0.0], 1.0, 1).unwrap();
        let samples: Vec<Vec<f64>> = (0..100).map(|i| vec![(i as f64 - 49.5) / 10.0]).collect();
        let one = poly_growth_gap(&samples, &|_| 1.0, 1.0, 0, &g, 1.0).unwrap();
        assert!(one.gap < 1e-12);
        let lin = poly_growth_gap(&samples, &|x| x[0], 1.0, 1, &g, 1.0).unwrap();
        assert!(lin.gap < 1e-12, "{}", lin.gap);
        let sq = poly_growth_gap(&samples, &|x| x[0] * x[0], 1.0, 2, &g, 1.0).unwrap();
        assert!((sq.target_mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_is_deterministic() {
        let g = make_gaussian(&[0.0], 1.0, 1).unwrap();
        let cfg = ChainConfig::new(0.1, 1.0, 1, 0);
        let plan = SweepPlan { kind: SamplerKind::Lmc, steps: StepsRule::Fixed(2000), bins: 20, lo: -4.0, hi: 4.0, burn_in: 0.5 };
        let etas = geometric_grid(0.01, 0.08, 4).unwrap();
        let a = eta_sweep(&g, &cfg, &etas, &[1, 2], &plan).unwrap();
        let b = eta_sweep(&g, &cfg, &etas, &[1, 2], &plan).unwrap();
        assert_eq!(a, b);
        assert!(a.cells.iter().all(|c| (0.0..=1.0).contains(&c.tv)));
        assert!(eta_sweep(&g, &cfg, &[0.01, 0.02, 0.05, 0.06], &[1], &plan).is_err());
    }
}
