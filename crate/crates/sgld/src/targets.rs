//! Finite-sum potentials `f = (1/n) sum_i f_i` with declared regularity constants.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::linalg::{dist, dist_sq, dot, norm, norm_sq, sym_spectral_norm};
use crate::par::map_range;
use crate::rng::stream_rng;
use crate::special::log_sum_exp;

/// Regularity constants declared on a [`TargetModel`].
///
/// * `m`, `b`: dissipativity, `<grad f(x), x> >= m |x|^2 - b`.
/// * `l`: Lipschitz constant of every `grad f_i`.
/// * `h`: Lipschitz constant of every Hessian, when known.
/// * `g`: bound on `|grad f_i(0)|`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constants {
    pub m: f64,
    pub b: f64,
    pub l: f64,
    pub h: Option<f64>,
    pub g: f64,
}

/// A global minimizer `x*` of `f` together with `f(x*)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Minimizer {
    pub x: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug)]
enum Family {
    Gaussian {
        mean: Vec<f64>,
        precision: f64,
    },
    Mixture {
        log_w: Vec<f64>,
        // centers[i][j] = mode j shifted by zeta_i, flattened as (i * J + j) * d
        centers: Vec<f64>,
        modes: Vec<Vec<f64>>,
        weights: Vec<f64>,
        shifts: Vec<Vec<f64>>,
    },
    NoiseSplit {
        base: Box<TargetModel>,
        noise: Vec<Vec<f64>>,
    },
}

/// Finite-sum target potential. Immutable once built, so it can be shared across threads.
#[derive(Clone, Debug)]
pub struct TargetModel {
    n: usize,
    dim: usize,
    family: Family,
    constants: Constants,
    minimizer: Option<Minimizer>,
}

/// Describes the family a model belongs to, for reports and config echo.
#[derive(Clone, Debug, PartialEq)]
pub enum FamilyKind {
    Gaussian,
    ShiftedMixture,
    NoiseSplit,
}

fn check_vec(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{what} has non-finite entries")))
    }
}

fn zero_sum(rows: &[Vec<f64>], d: usize, what: &str) -> Result<()> {
    let mut s = vec![0.0; d];
    let mut scale: f64 = 1.0;
    for r in rows {
        if r.len() != d {
            return Err(invalid(format!("{what}: row of length {} in dimension {d}", r.len())));
        }
        check_vec(r, what)?;
        for (a, x) in s.iter_mut().zip(r) {
            *a += x;
        }
        scale = scale.max(norm(r));
    }
    if norm(&s) > 1e-12 * scale * rows.len() as f64 {
        return Err(invalid(format!("{what} must sum to the zero vector (sum norm {:.3e})", norm(&s))));
    }
    Ok(())
}

/// `f_i(x) = (precision/2)|x - mean|^2` for every `i`.
pub fn make_gaussian(mean: &[f64], precision: f64, n: usize) -> Result<TargetModel> {
    if !(precision > 0.0) || !precision.is_finite() {
        return Err(invalid("precision must be positive"));
    }
    if n == 0 || mean.is_empty() {
        return Err(invalid("need n >= 1 and dimension >= 1"));
    }
    check_vec(mean, "mean")?;
    let mn = norm(mean);
    // <p(x - mu), x> >= p|x|^2 - p|mu||x| >= (p/2)|x|^2 - (p/2)|mu|^2
    let (m, b) = if mn == 0.0 { (precision, 0.0) } else { (0.5 * precision, 0.5 * precision * mn * mn) };
    Ok(TargetModel {
        n,
        dim: mean.len(),
        family: Family::Gaussian { mean: mean.to_vec(), precision },
        constants: Constants { m, b, l: precision, h: Some(0.0), g: precision * mn },
        minimizer: Some(Minimizer { x: mean.to_vec(), value: 0.0 }),
    })
}

/// `f_i(x) = -log sum_j w_j exp(-|x - mu_j - zeta_i|^2 / 2)` with zero-sum shifts `zeta_i`.
///
/// Declared constants: the mixture Hessian is `I - Cov_r(mu)` for the responsibility
/// weights `r`, so with `D` the largest distance between modes its eigenvalues lie in
/// `[1 - D^2/4, 1]`, giving `L = max(1, D^2/4 - 1)`. The third derivative is minus the
/// third central moment of the modes under `r`, bounded by `D^3 / (6 sqrt 3)`.
/// Dissipativity holds with `m = 1/2`, `b = max_j |mu_j|^2 / 2` (or `m = 1`, `b = 0` when
/// every mode sits at the origin). `G` is evaluated exactly.
pub fn make_shifted_mixture(weights: &[f64], modes: &[Vec<f64>], shifts: &[Vec<f64>]) -> Result<TargetModel> {
    if weights.is_empty() || weights.len() != modes.len() {
        return Err(invalid("need one weight per mode"));
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(invalid("weights must be positive"));
    }
    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("weights sum to {wsum}, not 1")));
    }
    let d = modes[0].len();
    if d == 0 || shifts.is_empty() {
        return Err(invalid("need dimension >= 1 and at least one shift"));
    }
    for mu in modes {
        if mu.len() != d {
            return Err(invalid("modes must share a dimension"));
        }
        check_vec(mu, "mode")?;
    }
    zero_sum(shifts, d, "shifts")?;

    let j = modes.len();
    let n = shifts.len();
    let mut centers = Vec::with_capacity(n * j * d);
    for z in shifts {
        for mu in modes {
            centers.extend(mu.iter().zip(z).map(|(a, b)| a + b));
        }
    }
    let mut diam: f64 = 0.0;
    for a in modes {
        for b in modes {
            diam = diam.max(dist(a, b));
        }
    }
    let mmax = modes.iter().map(|m| norm(m)).fold(0.0, f64::max);
    let (m, b) = if mmax == 0.0 { (1.0, 0.0) } else { (0.5, 0.5 * mmax * mmax) };
    let l = (0.25 * diam * diam - 1.0).max(1.0);
    let h = diam.powi(3) / (6.0 * 3f64.sqrt());

    let mut model = TargetModel {
        n,
        dim: d,
        family: Family::Mixture {
            log_w: weights.iter().map(|w| w.ln()).collect(),
            centers,
            modes: modes.to_vec(),
            weights: weights.to_vec(),
            shifts: shifts.to_vec(),
        },
        constants: Constants { m, b, l, h: Some(h), g: 0.0 },
        minimizer: None,
    };
    let zero = vec![0.0; d];
    let g = (0..n).map(|i| norm(&model.component_grad(i, &zero))).fold(0.0, f64::max);
    model.constants.g = g;
    model.minimizer = Some(model.mixture_minimizer());
    Ok(model)
}

/// `f_i = f_base + <xi_i, x>` with `sum_i xi_i = 0`: same full gradient, controllable batch noise.
pub fn make_noise_split(base: TargetModel, noise_vectors: &[Vec<f64>]) -> Result<TargetModel> {
    if noise_vectors.is_empty() {
        return Err(invalid("need at least one noise vector"));
    }
    zero_sum(noise_vectors, base.dim, "noise vectors")?;
    let xi_max = noise_vectors.iter().map(|v| norm(v)).fold(0.0, f64::max);
    let mut constants = base.constants.clone();
    constants.g += xi_max;
    Ok(TargetModel {
        n: noise_vectors.len(),
        dim: base.dim,
        minimizer: base.minimizer.clone(),
        constants,
        family: Family::NoiseSplit { base: Box::new(base), noise: noise_vectors.to_vec() },
    })
}

impl TargetModel {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constants(&self) -> &Constants {
        &self.constants
    }

    pub fn minimizer(&self) -> Option<&Minimizer> {
        self.minimizer.as_ref()
    }

    pub fn family(&self) -> FamilyKind {
        match self.family {
            Family::Gaussian { .. } => FamilyKind::Gaussian,
            Family::Mixture { .. } => FamilyKind::ShiftedMixture,
            Family::NoiseSplit { .. } => FamilyKind::NoiseSplit,
        }
    }

    /// Replaces the declared constants, e.g. to build deliberately wrong counterexamples.
    pub fn with_constants(mut self, constants: Constants) -> Self {
        self.constants = constants;
        self
    }

    pub fn with_minimizer(mut self, minimizer: Option<Minimizer>) -> Self {
        self.minimizer = minimizer;
        self
    }

    /// Short human-readable description of the family and its parameters.
    pub fn describe(&self) -> String {
        match &self.family {
            Family::Gaussian { mean, precision } => {
                format!("gaussian(mean={mean:?}, precision={precision}, n={})", self.n)
            }
            Family::Mixture { modes, weights, shifts, .. } => {
                format!("shifted_mixture(weights={weights:?}, modes={modes:?}, shifts={shifts:?})")
            }
            Family::NoiseSplit { base, noise } => format!("noise_split({}, noise={noise:?})", base.describe()),
        }
    }

    fn mix_centers(&self, i: usize) -> (&[f64], &[f64]) {
        match &self.family {
            Family::Mixture { log_w, centers, .. } => {
                let j = log_w.len();
                (log_w, &centers[i * j * self.dim..(i + 1) * j * self.dim])
            }
            _ => unreachable!(),
        }
    }

    fn mix_exponents<'a>(&self, lw: &'a [f64], c: &'a [f64], x: &'a [f64]) -> impl Iterator<Item = f64> + Clone + 'a {
        let d = self.dim;
        lw.iter().enumerate().map(move |(j, w)| w - 0.5 * dist_sq(x, &c[j * d..(j + 1) * d]))
    }

    /// `f_i(x)`.
    pub fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        debug_assert!(i < self.n && x.len() == self.dim);
        match &self.family {
            Family::Gaussian { mean, precision } => 0.5 * precision * dist_sq(x, mean),
            Family::Mixture { .. } => {
                let (lw, c) = self.mix_centers(i);
                -log_sum_exp(self.mix_exponents(lw, c, x))
            }
            Family::NoiseSplit { base, noise } => base.value(x) + dot(&noise[i], x),
        }
    }

    /// Writes `grad f_i(x)` into `out`.
    pub fn component_grad_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        debug_assert!(i < self.n && x.len() == self.dim && out.len() == self.dim);
        match &self.family {
            Family::Gaussian { mean, precision } => {
                for ((o, a), m) in out.iter_mut().zip(x).zip(mean) {
                    *o = precision * (a - m);
                }
            }
            Family::Mixture { .. } => {
                let (lw, c) = self.mix_centers(i);
                let d = self.dim;
                let mx = self.mix_exponents(lw, c, x).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                out.copy_from_slice(x);
                // grad = x - sum_j r_j c_j; accumulate unnormalized weights first
                let mut acc = [0.0f64; 8];
                let mut heap;
                let acc: &mut [f64] = if d <= 8 {
                    &mut acc[..d]
                } else {
                    heap = vec![0.0; d];
                    &mut heap
                };
                for (j, e) in self.mix_exponents(lw, c, x).enumerate() {
                    let w = (e - mx).exp();
                    z += w;
                    for (a, cj) in acc.iter_mut().zip(&c[j * d..(j + 1) * d]) {
                        *a += w * cj;
                    }
                }
                for (o, a) in out.iter_mut().zip(acc.iter()) {
                    *o -= a / z;
                }
            }
            Family::NoiseSplit { base, noise } => {
                base.grad_into(x, out);
                for (o, xi) in out.iter_mut().zip(&noise[i]) {
                    *o += xi;
                }
            }
        }
    }

    /// `grad f_i(x)`.
    pub fn component_grad(&self, i: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.component_grad_into(i, x, &mut out);
        out
    }

    /// `Hess f_i(x)` as a row-major `d x d` matrix. Every built-in family provides it.
    pub fn component_hessian(&self, i: usize, x: &[f64]) -> Option<Vec<f64>> {
        let d = self.dim;
        match &self.family {
            Family::Gaussian { precision, .. } => {
                let mut h = vec![0.0; d * d];
                for k in 0..d {
                    h[k * d + k] = *precision;
                }
                Some(h)
            }
            Family::Mixture { .. } => {
                let (lw, c) = self.mix_centers(i);
                let lz = log_sum_exp(self.mix_exponents(lw, c, x));
                let r: Vec<f64> = self.mix_exponents(lw, c, x).map(|e| (e - lz).exp()).collect();
                let mut mean = vec![0.0; d];
                for (j, rj) in r.iter().enumerate() {
                    for k in 0..d {
                        mean[k] += rj * c[j * d + k];
                    }
                }
                let mut h = vec![0.0; d * d];
                for a in 0..d {
                    h[a * d + a] = 1.0;
                }
                for (j, rj) in r.iter().enumerate() {
                    for a in 0..d {
                        for b in 0..d {
                            h[a * d + b] -= rj * (c[j * d + a] - mean[a]) * (c[j * d + b] - mean[b]);
                        }
                    }
                }
                Some(h)
            }
            Family::NoiseSplit { base, .. } => base.hessian(x),
        }
    }

    /// `f(x) = (1/n) sum_i f_i(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.family {
            Family::Gaussian { .. } => self.component_value(0, x),
            Family::Mixture { .. } => (0..self.n).map(|i| self.component_value(i, x)).sum::<f64>() / self.n as f64,
            Family::NoiseSplit { base, .. } => base.value(x),
        }
    }

    /// Writes `grad f(x)` into `out`.
    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.family {
            Family::Gaussian { .. } => self.component_grad_into(0, x, out),
            Family::Mixture { .. } => {
                if self.n == 1 {
                    return self.component_grad_into(0, x, out);
                }
                let mut tmp = vec![0.0; self.dim];
                out.iter_mut().for_each(|o| *o = 0.0);
                for i in 0..self.n {
                    self.component_grad_into(i, x, &mut tmp);
                    for (o, t) in out.iter_mut().zip(&tmp) {
                        *o += t;
                    }
                }
                let inv = 1.0 / self.n as f64;
                out.iter_mut().for_each(|o| *o *= inv);
            }
            Family::NoiseSplit { base, .. } => base.grad_into(x, out),
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.grad_into(x, &mut out);
        out
    }

    /// Hessian of the average potential.
    pub fn hessian(&self, x: &[f64]) -> Option<Vec<f64>> {
        let d = self.dim;
        let mut acc = vec![0.0; d * d];
        for i in 0..self.n {
            let h = self.component_hessian(i, x)?;
            for (a, v) in acc.iter_mut().zip(h) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= self.n as f64);
        Some(acc)
    }

    /// Spectral norm of the largest component Hessian at `x`.
    pub fn max_component_curvature(&self, x: &[f64]) -> Option<f64> {
        let mut best: f64 = 0.0;
        for i in 0..self.n {
            best = best.max(sym_spectral_norm(&self.component_hessian(i, x)?, self.dim));
        }
        Some(best)
    }

    fn mixture_minimizer(&self) -> Minimizer {
        // fixed point x = (1/n) sum_i sum_j r_ij(x) c_ij; each iteration is a majorize-minimize
        // step on the log-sum-exp terms, so f never increases
        let Family::Mixture { modes, .. } = &self.family else { unreachable!() };
        let d = self.dim;
        let mut starts: Vec<Vec<f64>> = modes.clone();
        starts.push(vec![0.0; d]);
        let mut best: Option<Minimizer> = None;
        let mut g = vec![0.0; d];
        for mut x in starts {
            for _ in 0..100_000 {
                self.grad_into(&x, &mut g);
                let step = norm(&g);
                for (a, b) in x.iter_mut().zip(&g) {
                    *a -= b;
                }
                if step < 1e-15 * (1.0 + norm(&x)) {
                    break;
                }
            }
            let v = self.value(&x);
            if best.as_ref().is_none_or(|b| v < b.value) {
                best = Some(Minimizer { x, value: v });
            }
        }
        best.expect("at least one start")
    }
}

/// Worst-case margin of one assumption over the probed points.
#[derive(Clone, Debug)]
pub struct AssumptionMargin {
    pub assumption: &'static str,
    /// Smallest observed `rhs - lhs`; negative means the declared constant is violated.
    pub worst_margin: f64,
    pub arg_point: Vec<f64>,
    pub arg_partner: Option<Vec<f64>>,
    pub pass: bool,
}

/// Result of [`probe_assumptions`].
#[derive(Clone, Debug)]
pub struct ProbeReport {
    pub margins: Vec<AssumptionMargin>,
    pub num_points: usize,
    pub region_radius: f64,
}

impl ProbeReport {
    pub fn valid(&self) -> bool {
        self.margins.iter().all(|m| m.pass)
    }

    pub fn get(&self, assumption: &str) -> Option<&AssumptionMargin> {
        self.margins.iter().find(|m| m.assumption == assumption)
    }
}

pub const PROBE_TOLERANCE: f64 = 1e-9;

pub const DISSIPATIVITY: &str = "dissipativity";
pub const SMOOTHNESS: &str = "smoothness";
pub const GRADIENT_BOUND: &str = "gradient_bound";
pub const QUADRATIC_LOWER_BOUND: &str = "quadratic_lower_bound";

fn uniform_in_ball<R: Rng>(rng: &mut R, d: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let nv = norm(&v);
        if nv > 0.0 {
            let s = radius * rng.random::<f64>().powf(1.0 / d as f64) / nv;
            return v.into_iter().map(|a| a * s).collect();
        }
    }
}

struct PointMargins {
    x: Vec<f64>,
    // (margin, partner) per assumption
    diss: f64,
    smooth: (f64, Vec<f64>),
    gbound: f64,
    quad: Option<f64>,
}

/// Samples points uniformly in a ball and records the worst margin of every declared assumption.
///
/// Smoothness is probed on two partners per point: another uniform point and a nearby point at
/// distance `1e-3 * region_radius`, so that local curvature is seen as well as global spread.
pub fn probe_assumptions(model: &TargetModel, region_radius: f64, num_points: usize, seed: u64) -> Result<ProbeReport> {
    if !(region_radius > 0.0) || num_points == 0 {
        return Err(invalid("need region_radius > 0 and num_points >= 1"));
    }
    let c = model.constants().clone();
    let d = model.dim();
    let fstar = model.minimizer().map(|m| m.value);
    let per_point = map_range(num_points, |k| {
        let mut rng = stream_rng(seed, k as u64);
        let x = uniform_in_ball(&mut rng, d, region_radius);
        let far = uniform_in_ball(&mut rng, d, region_radius);
        let dir = uniform_in_ball(&mut rng, d, 1.0);
        let scale = 1e-3 * region_radius / norm(&dir).max(1e-300);
        let near: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + scale * b).collect();

        let g = model.grad(&x);
        let xx = norm_sq(&x);
        let diss = dot(&g, &x) - (c.m * xx - c.b);

        let mut smooth = (f64::INFINITY, far.clone());
        let mut gbound = f64::INFINITY;
        for i in 0..model.n() {
            let gi = model.component_grad(i, &x);
            gbound = gbound.min(c.l * xx.sqrt() + c.g - norm(&gi));
            for y in [&far, &near] {
                let gy = model.component_grad(i, y);
                let m = c.l * dist(&x, y) - dist(&gi, &gy);
                if m < smooth.0 {
                    smooth = (m, y.clone());
                }
            }
        }
        let quad = fstar.map(|fs| model.value(&x) - (0.25 * c.m * xx + fs - 0.5 * c.b));
        PointMargins { x, diss, smooth, gbound, quad }
    });

    let mut margins = Vec::new();
    let mut push = |name: &'static str, pick: &dyn Fn(&PointMargins) -> Option<(f64, Option<Vec<f64>>)>| {
        let mut worst: Option<(f64, Vec<f64>, Option<Vec<f64>>)> = None;
        for p in &per_point {
            if let Some((m, partner)) = pick(p) {
                if worst.as_ref().is_none_or(|w| m < w.0) {
                    worst = Some((m, p.x.clone(), partner));
                }
            }
        }
        if let Some((m, x, partner)) = worst {
            margins.push(AssumptionMargin {
                assumption: name,
                worst_margin: m,
                arg_point: x,
                arg_partner: partner,
                pass: m >= -PROBE_TOLERANCE,
            });
        }
    };
    push(DISSIPATIVITY, &|p| Some((p.diss, None)));
    push(SMOOTHNESS, &|p| Some((p.smooth.0, Some(p.smooth.1.clone()))));
    push(GRADIENT_BOUND, &|p| Some((p.gbound, None)));
    push(QUADRATIC_LOWER_BOUND, &|p| p.quad.map(|q| (q, None)));
    Ok(ProbeReport { margins, num_points, region_radius })
}
