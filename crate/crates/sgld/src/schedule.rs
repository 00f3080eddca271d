//! Radii, closeness constants, warm-start bounds and step-size schedules in closed form.

use crate::error::{invalid, Error, Result};
use crate::linalg::norm_sq;
use crate::targets::TargetModel;

fn check_pos(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(invalid(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(invalid(format!("{name} must lie in (0, 1), got {v}")));
    }
    Ok(())
}

/// Radius capturing all but `z` of the target mass:
/// `sqrt(max{625 d log(4/z), 4 d log(4L/m) + 4 beta b, 4d + 8 sqrt(d log(1/z)) + 8 log(1/z)} / (m beta))`.
pub fn bar_r(z: f64, m: f64, b: f64, l: f64, beta: f64, d: usize) -> Result<f64> {
    check_unit("z", z)?;
    check_pos("m", m)?;
    check_pos("L", l)?;
    check_pos("beta", beta)?;
    if !(b >= 0.0) || d == 0 {
        return Err(invalid("need b >= 0 and d >= 1"));
    }
    let d = d as f64;
    let lz = (1.0 / z).ln();
    let t1 = 625.0 * d * (4.0 / z).ln();
    let t2 = 4.0 * d * (4.0 * l / m).ln() + 4.0 * beta * b;
    let t3 = 4.0 * d + 8.0 * (d * lz).sqrt() + 8.0 * lz;
    Ok((t1.max(t2).max(t3) / (m * beta)).sqrt())
}

/// [`bar_r`] with the constants of a model.
pub fn bar_r_for(model: &TargetModel, z: f64, beta: f64) -> Result<f64> {
    let c = model.constants();
    bar_r(z, c.m, c.b, c.l, beta, model.dim())
}

/// `1 + sqrt(log(8K/eps) / d)`, the factor shared by the radii and closeness bounds.
pub fn log_factor(d: usize, k: f64, eps: f64) -> f64 {
    1.0 + ((8.0 * k / eps).ln() / d as f64).sqrt()
}

/// The two move radii: `r62 = sqrt(2 eta d / beta) (2 + sqrt(2 log(8K/eps) / d))`, which makes
/// projected SGLD agree with SGLD with high probability, and
/// `r63 = sqrt(10 eta d / beta) (1 + sqrt(log(8K/eps) / d))`, used for kernel closeness.
pub fn proj_radii(eta: f64, d: usize, beta: f64, k: f64, eps: f64) -> Result<(f64, f64)> {
    check_pos("eta", eta)?;
    check_pos("beta", beta)?;
    check_pos("K", k)?;
    check_unit("eps", eps)?;
    if d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    let df = d as f64;
    let lk = (8.0 * k / eps).ln();
    let r62 = (2.0 * eta * df / beta).sqrt() * (2.0 + (2.0 * lk / df).sqrt());
    let r63 = (10.0 * eta * df / beta).sqrt() * (1.0 + (lk / df).sqrt());
    Ok((r62, r63))
}

/// Inputs of the closeness constant `delta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaParams {
    pub eta: f64,
    pub d: usize,
    pub beta: f64,
    pub batch_size: usize,
    pub l: f64,
    pub big_r: f64,
    pub g: f64,
    pub k: f64,
    pub eps: f64,
}

impl DeltaParams {
    fn validate(&self) -> Result<()> {
        check_pos("eta", self.eta)?;
        check_pos("beta", self.beta)?;
        check_pos("L", self.l)?;
        check_pos("R", self.big_r)?;
        check_pos("K", self.k)?;
        check_unit("eps", self.eps)?;
        if self.d == 0 || self.batch_size == 0 || !(self.g >= 0.0) {
            return Err(invalid("need d >= 1, B >= 1 and G >= 0"));
        }
        Ok(())
    }

    /// The three terms shared by both variants and the squared log factor.
    fn shared(&self) -> ([f64; 3], f64) {
        let (eta, d, beta, b) = (self.eta, self.d as f64, self.beta, self.batch_size as f64);
        let m = self.l * self.big_r + self.g;
        let t2 = 10.0 * self.l * m * d.sqrt() * beta.sqrt() * eta.powf(1.5);
        let t3 = 12.0 * beta * m * m * d * eta / b;
        let t4 = 2.0 * beta * beta * m.powi(4) * eta * eta / b;
        ([t2, t3, t4], log_factor(self.d, self.k, self.eps).powi(2))
    }
}

/// `[10 L d eta + 10 L (LR+G) d^{1/2} beta^{1/2} eta^{3/2} + 12 beta (LR+G)^2 d eta / B
///  + 2 beta^2 (LR+G)^4 eta^2 / B] (1 + sqrt(log(8K/eps)/d))^2`.
pub fn delta_bound(p: &DeltaParams) -> Result<f64> {
    p.validate()?;
    let ([t2, t3, t4], f) = p.shared();
    let t1 = 10.0 * p.l * p.d as f64 * p.eta;
    Ok((t1 + t2 + t3 + t4) * f)
}

/// As [`delta_bound`] with the first term replaced by `28 H d^{3/2} beta^{-1/2} eta^{3/2}`.
pub fn delta_bound_hessian(p: &DeltaParams, h: Option<f64>) -> Result<f64> {
    p.validate()?;
    let h = h.ok_or(Error::MissingConstant("H"))?;
    if !(h >= 0.0) {
        return Err(invalid("H must be nonnegative"));
    }
    let ([t2, t3, t4], f) = p.shared();
    let t1 = 28.0 * h * (p.d as f64).powf(1.5) * p.beta.powf(-0.5) * p.eta.powf(1.5);
    Ok((t1 + t2 + t3 + t4) * f)
}

/// `ln` of the warm-start bound `(4L/m)^{d/2} exp(beta [L |x*|^2 + b/2])` for `N(0, I/(2 beta L))`.
pub fn log_warm_start_bound(model: &TargetModel, beta: f64) -> Result<f64> {
    check_pos("beta", beta)?;
    let x = model.minimizer().ok_or(Error::MissingConstant("minimizer"))?;
    let c = model.constants();
    Ok(0.5 * model.dim() as f64 * (4.0 * c.l / c.m).ln() + beta * (c.l * norm_sq(&x.x) + c.b / 2.0))
}

/// Warm-start bound `(4L/m)^{d/2} exp(beta [L |x*|^2 + b/2])`.
pub fn warm_start_bound(model: &TargetModel, beta: f64) -> Result<f64> {
    Ok(log_warm_start_bound(model, beta)?.exp())
}

/// Largest step size under which the acceptance probability stays at least 0.4:
/// `eta <= d / (40 (LR+G)^2 beta)`.
pub fn acceptance_floor_eta(d: usize, l: f64, big_r: f64, g: f64, beta: f64) -> f64 {
    let m = l * big_r + g;
    d as f64 / (40.0 * m * m * beta)
}

/// `(1 + L eta) |u - v| / sqrt(2 eta / beta)`, the TV bound between two plain proposal kernels.
pub fn kernel_tv_bound(l: f64, eta: f64, beta: f64, distance: f64) -> f64 {
    (1.0 + l * eta) * distance / (2.0 * eta / beta).sqrt()
}

/// Constants of the polynomial-growth bound `|E h(x_K) - E_pi h| <= C (5 + R~^D) eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakConvergence {
    /// `R~ = [max{8(d + 2 sqrt(d log(1/eps)) + 2 log(1/eps)), 8 D d} / (m beta)]^{1/2}`, raised if
    /// needed to `[4 (d log(4L/m) / beta + b) / m]^{1/2}` so the tail comparison applies.
    pub tilde_r: f64,
    /// `C (5 + R~^D)`.
    pub c_prime: f64,
}

pub fn weak_convergence_constant(model: &TargetModel, beta: f64, c: f64, degree: u32, eps: f64) -> Result<WeakConvergence> {
    check_unit("eps", eps)?;
    check_pos("beta", beta)?;
    let k = model.constants();
    let d = model.dim() as f64;
    let le = (1.0 / eps).ln();
    let a = 8.0 * (d + 2.0 * (d * le).sqrt() + 2.0 * le) / (k.m * beta);
    let b = 8.0 * degree as f64 * d / (k.m * beta);
    let tail = 4.0 * (d * (4.0 * k.l / k.m).ln() / beta + k.b) / k.m;
    let tilde_r = a.max(b).max(tail).sqrt();
    Ok(WeakConvergence { tilde_r, c_prime: c * (5.0 + tilde_r.powi(degree as i32)) })
}

/// Which constraint set a schedule uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleMode {
    Plain,
    Hessian,
}

impl ScheduleMode {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleMode::Plain => "plain",
            ScheduleMode::Hessian => "hessian",
        }
    }
}

/// Inputs echoed by a [`ScheduleReport`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleInputs {
    pub m: f64,
    pub b: f64,
    pub l: f64,
    pub h: Option<f64>,
    pub g: f64,
    pub beta: f64,
    pub d: usize,
    pub batch_size: usize,
    pub eps: f64,
    pub c0: f64,
    pub rho: f64,
}

/// Derived hyperparameters of a schedule.
///
/// The error bound behind the schedule is `lambda (1 - C0 eta)^K + (C1/B + C2) eta^{1/2} + eps/2`
/// in plain mode and `lambda (1 - C0 eta)^K + C1 eta^{1/2} / B + C2 eta + eps/2` in Hessian mode,
/// with
///
/// * `C0 = c0^2 rho^2 / (8 beta)`,
/// * `C1 = 224 F^4 (LR+G)^2 beta^{3/2} d / (rho c0)`,
/// * plain `C2 = 224 F^4 L d beta^{1/2} / (rho c0)`,
/// * Hessian `C2 = F^4 [448 H d^{3/2} + 160 L (LR+G) d^{1/2} beta] / (rho c0)`,
///
/// where `F = 1 + sqrt(log(8K/eps)/d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleReport {
    pub mode: ScheduleMode,
    /// Truncation radius `R = bar_r(eps / (12 K))`.
    pub big_r: f64,
    pub r_lemma62: f64,
    pub r_lemma63: f64,
    pub delta: f64,
    pub delta_hessian: Option<f64>,
    pub eta: f64,
    pub k: u128,
    pub lambda_bound: f64,
    pub log_lambda_bound: f64,
    pub c0_rate: f64,
    pub c1: f64,
    pub c2: f64,
    /// Every step-size constraint by name, already including the log factor where it applies.
    pub constraints: Vec<(&'static str, f64)>,
    pub binding: &'static str,
    pub iterations: usize,
    pub inputs: ScheduleInputs,
}

/// Starting iteration count of the fixed point.
pub const K_START: f64 = 1e3;
pub const FIXED_POINT_TOL: f64 = 1e-6;
pub const FIXED_POINT_MAX_ROUNDS: usize = 100;

/// Step size and iteration count under gradient smoothness alone.
///
/// `eta` is the minimum of `1/(25 beta (LR+G)^2)`, `1/(35 (L d + (LR+G)^2 beta d / B))` and
/// `(c0 rho / (16 sqrt(beta) (14 L d + 14 (LR+G)^2 beta d / B)))^2`, each scaled by `F^{-4}`,
/// together with the accuracy requirement `(C1/B + C2) eta^{1/2} <= eps/4`.
/// `K = ceil(log(4 lambda / eps) / (C0 eta))`. `R`, `F` and `K` depend on one another; they are
/// iterated from `K = 1000` until `K` changes by less than `1e-6` relative.
pub fn schedule_plain(model: &TargetModel, beta: f64, batch_size: usize, eps: f64, c0: f64, rho: f64) -> Result<ScheduleReport> {
    schedule(model, beta, batch_size, eps, c0, rho, ScheduleMode::Plain)
}

/// As [`schedule_plain`] with the Hessian-Lipschitz constraint set: the minimum of
/// `1/(25 beta (LR+G)^2)`, `1/(35 (L d + (LR+G)^2 beta d / B))`,
/// `(c0 rho / (224 (LR+G)^2 beta^{3/2} d / B))^2` and
/// `c0 rho / (16 sqrt(beta) [28 H d^{3/2} beta^{-1/2} + 10 L (LR+G) d^{1/2} beta^{1/2}])`, scaled
/// by `F^{-4}`, with the accuracy requirements `C1 eta^{1/2} / B <= eps/6`, `C2 eta <= eps/6` and
/// `K = ceil(log(6 lambda / eps) / (C0 eta))`.
pub fn schedule_hessian(model: &TargetModel, beta: f64, batch_size: usize, eps: f64, c0: f64, rho: f64) -> Result<ScheduleReport> {
    schedule(model, beta, batch_size, eps, c0, rho, ScheduleMode::Hessian)
}

fn schedule(model: &TargetModel, beta: f64, batch_size: usize, eps: f64, c0: f64, rho: f64, mode: ScheduleMode) -> Result<ScheduleReport> {
    check_unit("eps", eps)?;
    check_pos("beta", beta)?;
    check_pos("c0", c0)?;
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(invalid(format!("rho must be positive, got {rho}")));
    }
    if batch_size == 0 || batch_size > model.n() {
        return Err(invalid(format!("batch size {batch_size} not in [1, {}]", model.n())));
    }
    let c = model.constants().clone();
    let h = match mode {
        ScheduleMode::Hessian => Some(c.h.ok_or(Error::MissingConstant("H"))?),
        ScheduleMode::Plain => None,
    };
    let log_lambda = log_warm_start_bound(model, beta)?;
    let d = model.dim() as f64;
    let bs = batch_size as f64;
    let c0_rate = c0 * c0 * rho * rho / (8.0 * beta);
    let share = match mode {
        ScheduleMode::Plain => 4.0,
        ScheduleMode::Hessian => 6.0,
    };

    struct Round {
        big_r: f64,
        eta: f64,
        k: f64,
        c1: f64,
        c2: f64,
        constraints: Vec<(&'static str, f64)>,
    }
    let round = |k: f64| -> Result<Round> {
        let big_r = bar_r(eps / (12.0 * k), c.m, c.b, c.l, beta, model.dim())?;
        let f4 = log_factor(model.dim(), k, eps).powi(4);
        let lr = c.l * big_r + c.g;
        let lr2 = lr * lr;
        let c1 = 224.0 * f4 * lr2 * beta.powf(1.5) * d / (rho * c0);
        let mut constraints = vec![
            ("step_stability", 1.0 / (25.0 * beta * lr2) / f4),
            ("acceptance", 1.0 / (35.0 * (c.l * d + lr2 * beta * d / bs)) / f4),
        ];
        let c2 = match mode {
            ScheduleMode::Plain => {
                let conductance = (c0 * rho / (16.0 * beta.sqrt() * (14.0 * c.l * d + 14.0 * lr2 * beta * d / bs))).powi(2);
                constraints.push(("conductance", conductance / f4));
                let c2 = 224.0 * f4 * c.l * d * beta.sqrt() / (rho * c0);
                constraints.push(("accuracy", (eps / share / (c1 / bs + c2)).powi(2)));
                c2
            }
            ScheduleMode::Hessian => {
                let h = h.expect("checked above");
                let noise = (c0 * rho / (224.0 * lr2 * beta.powf(1.5) * d / bs)).powi(2);
                let curvature = c0 * rho
                    / (16.0 * beta.sqrt() * (28.0 * h * d.powf(1.5) / beta.sqrt() + 10.0 * c.l * lr * d.sqrt() * beta.sqrt()));
                constraints.push(("conductance_noise", noise / f4));
                constraints.push(("conductance_curvature", curvature / f4));
                let c2 = f4 * (448.0 * h * d.powf(1.5) + 160.0 * c.l * lr * d.sqrt() * beta) / (rho * c0);
                constraints.push(("accuracy_noise", (eps / share * bs / c1).powi(2)));
                constraints.push(("accuracy_drift", eps / share / c2));
                c2
            }
        };
        let eta = constraints.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let k_next = (log_lambda + (share / eps).ln()) / (c0_rate * eta);
        Ok(Round { big_r, eta, k: k_next.max(1.0), c1, c2, constraints })
    };

    let mut k = K_START;
    for it in 1..=FIXED_POINT_MAX_ROUNDS {
        let r = round(k)?;
        let converged = ((r.k - k) / k).abs() < FIXED_POINT_TOL;
        k = r.k;
        if converged {
            let k_int = k.ceil();
            if !(k_int < u128::MAX as f64) {
                return Err(invalid(format!("iteration count {k_int} does not fit in 128 bits")));
            }
            let (r62, r63) = proj_radii(r.eta, model.dim(), beta, k_int, eps)?;
            let dp = DeltaParams { eta: r.eta, d: model.dim(), beta, batch_size, l: c.l, big_r: r.big_r, g: c.g, k: k_int, eps };
            let delta = delta_bound(&dp)?;
            let delta_hessian = c.h.map(|h| delta_bound_hessian(&dp, Some(h))).transpose()?;
            let binding = r.constraints.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|c| c.0).unwrap_or("none");
            return Ok(ScheduleReport {
                mode,
                big_r: r.big_r,
                r_lemma62: r62,
                r_lemma63: r63,
                delta,
                delta_hessian,
                eta: r.eta,
                k: k_int as u128,
                lambda_bound: log_lambda.exp(),
                log_lambda_bound: log_lambda,
                c0_rate,
                c1: r.c1,
                c2: r.c2,
                constraints: r.constraints,
                binding,
                iterations: it,
                inputs: ScheduleInputs {
                    m: c.m,
                    b: c.b,
                    l: c.l,
                    h: c.h,
                    g: c.g,
                    beta,
                    d: model.dim(),
                    batch_size,
                    eps,
                    c0,
                    rho,
                },
            });
        }
    }
    Err(Error::NoConvergence(FIXED_POINT_MAX_ROUNDS))
}

impl ScheduleReport {
    /// `(name, value)` rows in a fixed order, for text and CSV output.
    pub fn rows(&self) -> Vec<(String, String)> {
        let i = &self.inputs;
        let mut out: Vec<(String, String)> = vec![
            ("mode".into(), self.mode.name().into()),
            ("R".into(), format!("{:?}", self.big_r)),
            ("r_lemma62".into(), format!("{:?}", self.r_lemma62)),
            ("r_lemma63".into(), format!("{:?}", self.r_lemma63)),
            ("delta".into(), format!("{:?}", self.delta)),
            ("delta_hessian".into(), self.delta_hessian.map(|v| format!("{v:?}")).unwrap_or_default()),
            ("eta".into(), format!("{:?}", self.eta)),
            ("K".into(), self.k.to_string()),
            ("lambda_bound".into(), format!("{:?}", self.lambda_bound)),
            ("C0".into(), format!("{:?}", self.c0_rate)),
            ("C1".into(), format!("{:?}", self.c1)),
            ("C2".into(), format!("{:?}", self.c2)),
            ("binding".into(), self.binding.into()),
            ("iterations".into(), self.iterations.to_string()),
        ];
        for (name, v) in &self.constraints {
            out.push((format!("constraint_{name}"), format!("{v:?}")));
        }
        out.extend([
            ("m".into(), format!("{:?}", i.m)),
            ("b".into(), format!("{:?}", i.b)),
            ("L".into(), format!("{:?}", i.l)),
            ("H".into(), i.h.map(|v| format!("{v:?}")).unwrap_or_default()),
            ("G".into(), format!("{:?}", i.g)),
            ("beta".into(), format!("{:?}", i.beta)),
            ("d".into(), i.d.to_string()),
            ("B".into(), i.batch_size.to_string()),
            ("eps".into(), format!("{:?}", i.eps)),
            ("c0".into(), format!("{:?}", i.c0)),
            ("rho".into(), format!("{:?}", i.rho)),
        ]);
        out
    }
}
