//! LMC, SGLD, projected SGLD and metropolized SGLD chains.
//!
//! Every step draws its randomness in a fixed order: batch indices, then the Gaussian vector.
//! A full batch draws no indices, so SGLD with `B = n` reproduces LMC bit for bit.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::kernels::KernelEngine;
use crate::linalg::{dist_sq, norm_sq};
use crate::par::map_range;
use crate::rng::{stream_rng, ChainRng};
use crate::stochastic_gradient::{stochastic_grad_into, BatchDrawer, MiniBatch};
use crate::targets::TargetModel;

/// Law of the initial state.
#[derive(Clone, Debug, PartialEq)]
pub enum Initial {
    PointMass(Vec<f64>),
    /// `N(0, I / (2 beta L))`.
    Gaussian,
}

/// Hyperparameters of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig {
    pub eta: f64,
    pub beta: f64,
    pub batch_size: usize,
    /// Number of steps `K`; a trajectory holds `K + 1` states.
    pub steps: usize,
    /// Truncation radius `R`.
    pub big_r: Option<f64>,
    /// Move radius `r`.
    pub r: Option<f64>,
    pub seed: u64,
    /// Stream index; ensembles use the chain's position.
    pub chain_id: u64,
    pub initial: Initial,
}

impl ChainConfig {
    pub fn new(eta: f64, beta: f64, batch_size: usize, steps: usize) -> Self {
        Self { eta, beta, batch_size, steps, big_r: None, r: None, seed: 0, chain_id: 0, initial: Initial::Gaussian }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_chain_id(mut self, chain_id: u64) -> Self {
        self.chain_id = chain_id;
        self
    }

    pub fn with_radii(mut self, big_r: f64, r: f64) -> Self {
        self.big_r = Some(big_r);
        self.r = Some(r);
        self
    }

    pub fn with_initial(mut self, initial: Initial) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    /// Checks the configuration against a model.
    pub fn validate(&self, model: &TargetModel) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidConfig(format!("eta must be positive and finite, got {}", self.eta)));
        }
        if !(self.beta >= 1.0) || !self.beta.is_finite() {
            return Err(Error::InvalidConfig(format!("beta must be finite and at least 1, got {}", self.beta)));
        }
        if self.batch_size == 0 || self.batch_size > model.n() {
            return Err(Error::InvalidConfig(format!("batch size {} not in [1, {}]", self.batch_size, model.n())));
        }
        for (name, v) in [("R", self.big_r), ("r", self.r)] {
            if let Some(v) = v {
                if !(v > 0.0) || v.is_nan() {
                    return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if let (Some(big_r), Some(r)) = (self.big_r, self.r) {
            if !(big_r > r) {
                return Err(Error::InvalidConfig(format!("need R > r, got R = {big_r}, r = {r}")));
            }
        }
        if let Initial::PointMass(x) = &self.initial {
            if x.len() != model.dim() || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("initial point has the wrong dimension or is not finite".into()));
            }
        }
        Ok(())
    }

    fn radii(&self) -> Result<(f64, f64)> {
        match (self.big_r, self.r) {
            (Some(big_r), Some(r)) => Ok((big_r, r)),
            _ => Err(Error::InvalidConfig("projected and metropolized chains need both R and r".into())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    Lmc,
    Sgld,
    ProjectedSgld,
    MetropolizedSgld,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Lmc => "lmc",
            SamplerKind::Sgld => "sgld",
            SamplerKind::ProjectedSgld => "projected_sgld",
            SamplerKind::MetropolizedSgld => "metropolized_sgld",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lmc" => Some(SamplerKind::Lmc),
            "sgld" => Some(SamplerKind::Sgld),
            "projected_sgld" => Some(SamplerKind::ProjectedSgld),
            "metropolized_sgld" => Some(SamplerKind::MetropolizedSgld),
            _ => None,
        }
    }
}

/// States `x_0, ..., x_K` of one chain with per-step metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    dim: usize,
    states: Vec<f64>,
    /// `rejected[k]` refers to the move from `x_k` to `x_{k+1}`.
    rejected: Option<Vec<bool>>,
    accept_probs: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of states, `K + 1`.
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks(self.dim)
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn rejection_events(&self) -> Option<&[bool]> {
        self.rejected.as_deref()
    }

    pub fn accept_probs(&self) -> Option<&[f64]> {
        self.accept_probs.as_deref()
    }

    pub fn rejection_count(&self) -> usize {
        self.rejected.as_ref().map_or(0, |r| r.iter().filter(|&&b| b).count())
    }

    /// One row per state: `step, x_0, ..., x_{d-1}, rejected, alpha`. Metadata of step `k`
    /// describes the move into state `k`; the initial row leaves both empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "step")?;
        for a in 0..self.dim {
            write!(w, ",x_{a}")?;
        }
        writeln!(w, ",rejected,alpha")?;
        for k in 0..self.len() {
            write!(w, "{k}")?;
            for v in self.state(k) {
                write!(w, ",{v:?}")?;
            }
            match (&self.rejected, k) {
                (Some(r), k) if k > 0 => write!(w, ",{}", u8::from(r[k - 1]))?,
                _ => write!(w, ",")?,
            }
            match (&self.accept_probs, k) {
                (Some(a), k) if k > 0 => writeln!(w, ",{:?}", a[k - 1])?,
                _ => writeln!(w, ",")?,
            }
        }
        Ok(())
    }
}

/// `x - eta grad f(x) + sqrt(2 eta / beta) noise` with the noise supplied.
pub fn lmc_update(model: &TargetModel, x: &[f64], eta: f64, beta: f64, noise: &[f64]) -> Vec<f64> {
    let g = model.grad(x);
    let s = (2.0 * eta / beta).sqrt();
    x.iter().zip(&g).zip(noise).map(|((xi, gi), e)| xi - eta * gi + s * e).collect()
}

/// `x - eta g(x, I) + sqrt(2 eta / beta) noise` with batch and noise supplied.
pub fn sgld_update(model: &TargetModel, x: &[f64], batch: &MiniBatch, eta: f64, beta: f64, noise: &[f64]) -> Result<Vec<f64>> {
    let g = crate::stochastic_gradient::stochastic_grad(model, x, batch)?;
    let s = (2.0 * eta / beta).sqrt();
    Ok(x.iter().zip(&g).zip(noise).map(|((xi, gi), e)| xi - eta * gi + s * e).collect())
}

#[derive(Clone, Copy, Debug, Default)]
struct StepInfo {
    rejected: bool,
    alpha: f64,
}

/// Per-chain buffers so that steps do not allocate.
struct Stepper<'a> {
    model: &'a TargetModel,
    kind: SamplerKind,
    eta: f64,
    sigma: f64,
    radii: (f64, f64),
    drawer: BatchDrawer,
    g: Vec<f64>,
    tmp: Vec<f64>,
    prop: Vec<f64>,
    engine: Option<KernelEngine<'a>>,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a TargetModel, cfg: &ChainConfig, kind: SamplerKind, engine: Option<KernelEngine<'a>>) -> Result<Self> {
        cfg.validate(model)?;
        let radii = match kind {
            SamplerKind::ProjectedSgld | SamplerKind::MetropolizedSgld => cfg.radii()?,
            _ => (f64::INFINITY, f64::INFINITY),
        };
        let batch = if kind == SamplerKind::Lmc { model.n() } else { cfg.batch_size };
        let engine = match (kind, engine) {
            (SamplerKind::MetropolizedSgld, Some(e)) => Some(e),
            (SamplerKind::MetropolizedSgld, None) => Some(KernelEngine::from_config(model, cfg).map_err(|e| match e {
                Error::EnumerationTooLarge { .. } => Error::Unsupported(format!("metropolized SGLD needs exact kernels: {e}")),
                other => other,
            })?),
            _ => None,
        };
        let d = model.dim();
        Ok(Self {
            model,
            kind,
            eta: cfg.eta,
            sigma: (2.0 * cfg.eta / cfg.beta).sqrt(),
            radii,
            drawer: BatchDrawer::new(model.n(), batch)?,
            g: vec![0.0; d],
            tmp: vec![0.0; d],
            prop: vec![0.0; d],
            engine,
        })
    }

    /// SGLD proposal from `x` into `self.prop`.
    fn propose(&mut self, x: &[f64], rng: &mut ChainRng) {
        if self.kind == SamplerKind::Lmc {
            self.model.grad_into(x, &mut self.g);
        } else {
            let batch = self.drawer.draw(rng);
            stochastic_grad_into(self.model, x, batch, &mut self.g, &mut self.tmp);
        }
        for ((p, xi), gi) in self.prop.iter_mut().zip(x).zip(&self.g) {
            let e: f64 = rng.sample(StandardNormal);
            *p = xi - self.eta * gi + self.sigma * e;
        }
    }

    fn in_region(&self, x: &[f64], w: &[f64]) -> bool {
        let (big_r, r) = self.radii;
        dist_sq(x, w) <= r * r && norm_sq(w) <= big_r * big_r
    }

    fn step(&mut self, x: &mut [f64], rng: &mut ChainRng) -> StepInfo {
        match self.kind {
            SamplerKind::Lmc | SamplerKind::Sgld => {
                self.propose(x, rng);
                x.copy_from_slice(&self.prop);
                StepInfo { rejected: false, alpha: 1.0 }
            }
            SamplerKind::ProjectedSgld => {
                self.propose(x, rng);
                if self.in_region(x, &self.prop) {
                    x.copy_from_slice(&self.prop);
                    StepInfo { rejected: false, alpha: 1.0 }
                } else {
                    StepInfo { rejected: true, alpha: 1.0 }
                }
            }
            SamplerKind::MetropolizedSgld => {
                // lazy coin, then the proposal, then the acceptance draw
                if rng.random::<f64>() < 0.5 {
                    return StepInfo { rejected: false, alpha: 1.0 };
                }
                self.propose(x, rng);
                if !self.in_region(x, &self.prop) {
                    return StepInfo { rejected: true, alpha: 1.0 };
                }
                let engine = self.engine.as_ref().expect("engine present for metropolized chains");
                let alpha = engine.mh_accept(x, &self.prop);
                if rng.random::<f64>() < alpha {
                    x.copy_from_slice(&self.prop);
                    StepInfo { rejected: false, alpha }
                } else {
                    StepInfo { rejected: true, alpha }
                }
            }
        }
    }
}

fn check_point(model: &TargetModel, x: &[f64]) -> Result<()> {
    if x.len() != model.dim() {
        return Err(invalid("point dimension does not match the model"));
    }
    Ok(())
}

/// One LMC step from `x`.
pub fn lmc_step(model: &TargetModel, x: &[f64], cfg: &ChainConfig, rng: &mut ChainRng) -> Result<Vec<f64>> {
    check_point(model, x)?;
    let mut s = Stepper::new(model, cfg, SamplerKind::Lmc, None)?;
    let mut y = x.to_vec();
    s.step(&mut y, rng);
    Ok(y)
}

/// One SGLD step from `x`.
pub fn sgld_step(model: &TargetModel, x: &[f64], cfg: &ChainConfig, rng: &mut ChainRng) -> Result<Vec<f64>> {
    check_point(model, x)?;
    let mut s = Stepper::new(model, cfg, SamplerKind::Sgld, None)?;
    let mut y = x.to_vec();
    s.step(&mut y, rng);
    Ok(y)
}

/// One projected SGLD step: the SGLD proposal is kept only inside `B(x, r) ∩ B(0, R)`.
/// Returns the next state and whether the proposal was rejected.
pub fn projected_sgld_step(model: &TargetModel, x: &[f64], cfg: &ChainConfig, rng: &mut ChainRng) -> Result<(Vec<f64>, bool)> {
    check_point(model, x)?;
    let mut s = Stepper::new(model, cfg, SamplerKind::ProjectedSgld, None)?;
    let mut y = x.to_vec();
    let info = s.step(&mut y, rng);
    Ok((y, info.rejected))
}

/// One metropolized SGLD step: a draw from the lazy kernel `T_x`, accepted with the Metropolis
/// probability computed from the engine's exact densities. Returns the next state and `alpha`
/// (one for the lazy self-loop and for region rejections).
pub fn metropolized_sgld_step(
    model: &TargetModel,
    x: &[f64],
    cfg: &ChainConfig,
    engine: &KernelEngine,
    rng: &mut ChainRng,
) -> Result<(Vec<f64>, f64)> {
    check_point(model, x)?;
    let (big_r, _) = cfg.radii()?;
    if norm_sq(x) > big_r * big_r * (1.0 + 1e-12) {
        return Err(Error::Domain("metropolized chains start inside the truncation ball".into()));
    }
    let mut s = Stepper::new(model, cfg, SamplerKind::MetropolizedSgld, Some(engine.clone()))?;
    let mut y = x.to_vec();
    let info = s.step(&mut y, rng);
    Ok((y, info.alpha))
}

/// Draws the initial state from the configured law.
pub fn initial_state(model: &TargetModel, cfg: &ChainConfig, rng: &mut ChainRng) -> Vec<f64> {
    match &cfg.initial {
        Initial::PointMass(x) => x.clone(),
        Initial::Gaussian => {
            let sd = (1.0 / (2.0 * cfg.beta * model.constants().l)).sqrt();
            (0..model.dim()).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
        }
    }
}

/// Summary of a chain run without stored states.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSummary {
    pub last: Vec<f64>,
    pub steps: usize,
    pub rejections: usize,
}

/// Runs a chain, calling `visit(k, x_k)` for every state `k = 0..=K`, without storing them.
pub fn run_chain_visit(
    model: &TargetModel,
    cfg: &ChainConfig,
    kind: SamplerKind,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<ChainSummary> {
    let mut stepper = Stepper::new(model, cfg, kind, None)?;
    let mut rng = stream_rng(cfg.seed, cfg.chain_id);
    let mut x = initial_state(model, cfg, &mut rng);
    if matches!(kind, SamplerKind::ProjectedSgld | SamplerKind::MetropolizedSgld) && norm_sq(&x) > stepper.radii.0.powi(2) {
        return Err(Error::Domain("the initial state lies outside the truncation ball".into()));
    }
    visit(0, &x);
    let mut rejections = 0;
    for k in 1..=cfg.steps {
        let info = stepper.step(&mut x, &mut rng);
        rejections += usize::from(info.rejected);
        visit(k, &x);
    }
    Ok(ChainSummary { last: x, steps: cfg.steps, rejections })
}

/// Runs a chain and records all states. Deterministic in `(model, cfg, kind)`.
pub fn run_chain(model: &TargetModel, cfg: &ChainConfig, kind: SamplerKind) -> Result<Trajectory> {
    let mut stepper = Stepper::new(model, cfg, kind, None)?;
    let mut rng = stream_rng(cfg.seed, cfg.chain_id);
    let d = model.dim();
    let mut x = initial_state(model, cfg, &mut rng);
    if matches!(kind, SamplerKind::ProjectedSgld | SamplerKind::MetropolizedSgld) && norm_sq(&x) > stepper.radii.0.powi(2) {
        return Err(Error::Domain("the initial state lies outside the truncation ball".into()));
    }
    let mut states = Vec::with_capacity((cfg.steps + 1) * d);
    states.extend_from_slice(&x);
    let tracks_rejections = matches!(kind, SamplerKind::ProjectedSgld | SamplerKind::MetropolizedSgld);
    let mut rejected = tracks_rejections.then(|| Vec::with_capacity(cfg.steps));
    let mut alphas = (kind == SamplerKind::MetropolizedSgld).then(|| Vec::with_capacity(cfg.steps));
    for _ in 0..cfg.steps {
        let info = stepper.step(&mut x, &mut rng);
        states.extend_from_slice(&x);
        if let Some(r) = rejected.as_mut() {
            r.push(info.rejected);
        }
        if let Some(a) = alphas.as_mut() {
            a.push(info.alpha);
        }
    }
    Ok(Trajectory { dim: d, states, rejected, accept_probs: alphas })
}

/// Runs `chains` independent chains; chain `i` uses stream `cfg.chain_id + i`.
pub fn run_ensemble(model: &TargetModel, cfg: &ChainConfig, kind: SamplerKind, chains: usize) -> Result<Vec<Trajectory>> {
    map_range(chains, |i| run_chain(model, &cfg.clone().with_chain_id(cfg.chain_id + i as u64), kind)).into_iter().collect()
}

/// Like [`run_ensemble`] but keeps only each chain's summary.
pub fn run_ensemble_summaries(model: &TargetModel, cfg: &ChainConfig, kind: SamplerKind, chains: usize) -> Result<Vec<ChainSummary>> {
    map_range(chains, |i| run_chain_visit(model, &cfg.clone().with_chain_id(cfg.chain_id + i as u64), kind, |_, _| {}))
        .into_iter()
        .collect()
}
