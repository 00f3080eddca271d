//! Experiment configuration: a sectioned key-value file in TOML syntax.
//!
//! Every section and key is checked; unknown keys are rejected. After defaults are filled in,
//! [`Config::echo`] prints a file that parses back to the same configuration.

use serde::{Deserialize, Serialize};
use sgld::samplers::{ChainConfig, Initial, SamplerKind};
use sgld::targets::{make_gaussian, make_noise_split, make_shifted_mixture, Constants, TargetModel};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub target: Target,
    /// Optional overrides of the declared regularity constants.
    #[serde(default, skip_serializing_if = "ConstantOverrides::is_empty")]
    pub constants: ConstantOverrides,
    pub sampler: Sampler,
    #[serde(default)]
    pub run: Run,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub kernel: Kernel,
    #[serde(default)]
    pub check: Check,
    #[serde(default)]
    pub sweep: Sweep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    Gaussian {
        mean: Vec<f64>,
        precision: f64,
        #[serde(default = "one")]
        n: usize,
    },
    ShiftedMixture {
        weights: Vec<f64>,
        modes: Vec<Vec<f64>>,
        shifts: Vec<Vec<f64>>,
    },
    NoiseSplit {
        noise: Vec<Vec<f64>>,
        base: Box<Target>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    /// A number, or `"none"` to declare no Hessian-Lipschitz constant.
    #[serde(rename = "H", skip_serializing_if = "Option::is_none")]
    pub h: Option<HSpec>,
    #[serde(rename = "G", skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoneName {
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HSpec {
    Value(f64),
    Absent(NoneName),
}

impl ConstantOverrides {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Lmc,
    Sgld,
    ProjectedSgld,
    MetropolizedSgld,
}

impl Kind {
    pub fn sampler(self) -> SamplerKind {
        match self {
            Kind::Lmc => SamplerKind::Lmc,
            Kind::Sgld => SamplerKind::Sgld,
            Kind::ProjectedSgld => SamplerKind::ProjectedSgld,
            Kind::MetropolizedSgld => SamplerKind::MetropolizedSgld,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auto {
    Auto,
}

/// Truncation radius: a number, or `"auto"` for `bar_r(eps / (4 K))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BigR {
    Value(f64),
    Auto(Auto),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusName {
    Lemma62,
    Lemma63,
}

/// Move radius: a number or one of the two closed forms at the sampler's `steps` and `eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MoveRadius {
    Value(f64),
    Named(RadiusName),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialName {
    Gaussian,
}

/// `"gaussian"` for `N(0, I/(2 beta L))` or a point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Named(InitialName),
    Point(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampler {
    pub kind: Kind,
    pub eta: f64,
    #[serde(default = "one_f")]
    pub beta: f64,
    #[serde(default = "one")]
    pub batch_size: usize,
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub big_r: Option<BigR>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<MoveRadius>,
    /// Accuracy used by the closed-form radii.
    #[serde(default = "tenth")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "gaussian_initial")]
    pub initial: InitialSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Run {
    pub chains: usize,
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    /// Leading steps of every chain left out of the histogram.
    pub burn_in: usize,
}

impl Default for Run {
    fn default() -> Self {
        Self { chains: 1, bins: 50, lo: -5.0, hi: 5.0, burn_in: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Plain,
    Hessian,
}

/// A positive number, or `"auto"` for the Cheeger constant of the target on a grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rho {
    Value(f64),
    Auto(Auto),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub mode: Mode,
    pub eps: f64,
    pub c0: f64,
    pub rho: Rho,
    /// Half-width of the grid used when `rho = "auto"`.
    pub rho_radius: f64,
    pub rho_cells: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { mode: Mode::Plain, eps: 0.1, c0: 1.0, rho: Rho::Auto(Auto::Auto), rho_radius: 12.0, rho_cells: 2400 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKindSpec {
    Lazy,
    Metropolized,
}

/// `delta` for the sandwich check: a number or `"auto"` for the closed-form bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaSpec {
    Value(f64),
    Auto(Auto),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Kernel {
    pub kind: KernelKindSpec,
    /// Grid cells across the ball, per axis.
    pub cells: usize,
    pub delta: DeltaSpec,
    /// Points per axis at which the sandwich is checked.
    pub sandwich_points: usize,
    pub sets_per_point: usize,
    pub scan_points: usize,
    pub cheeger_cells: usize,
}

impl Default for Kernel {
    fn default() -> Self {
        Self {
            kind: KernelKindSpec::Metropolized,
            cells: 201,
            delta: DeltaSpec::Auto(Auto::Auto),
            sandwich_points: 20,
            sets_per_point: 50,
            scan_points: 101,
            cheeger_cells: 800,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Check {
    pub radius: f64,
    pub points: usize,
}

impl Default for Check {
    fn default() -> Self {
        Self { radius: 50.0, points: 10_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Eta,
    Conductance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepsName {
    Mixing,
}

/// Chain length in an eta sweep: a fixed count or `"mixing"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepsSpec {
    Fixed(usize),
    Named(StepsName),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    #[serde(rename = "type")]
    pub kind: SweepKind,
    pub eta_lo: f64,
    pub eta_hi: f64,
    pub points: usize,
    pub seeds: usize,
    pub steps: StepsSpec,
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    /// Fraction of every chain discarded.
    pub burn_in: f64,
    pub radius: MoveRadius,
    /// `K` and `eps` fed to the closed-form move radius.
    pub k: f64,
    pub eps: f64,
    pub big_r: f64,
    pub cells_per_sigma: f64,
    pub cheeger_cells: usize,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            kind: SweepKind::Eta,
            eta_lo: 1e-4,
            eta_hi: 1e-1,
            points: 7,
            seeds: 32,
            steps: StepsSpec::Named(StepsName::Mixing),
            bins: 200,
            lo: -5.0,
            hi: 5.0,
            burn_in: 0.5,
            radius: MoveRadius::Named(RadiusName::Lemma63),
            k: 1e4,
            eps: 0.1,
            big_r: 4.0,
            cells_per_sigma: 4.0,
            cheeger_cells: 800,
        }
    }
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

fn tenth() -> f64 {
    0.1
}

fn gaussian_initial() -> InitialSpec {
    InitialSpec::Named(InitialName::Gaussian)
}

/// Line of `key` inside `[section]`, or of the section header when `key` is `None`.
pub fn locate(src: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if key.is_none() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let (Some(k), Some((lhs, _))) = (key, line.split_once('=')) {
                if lhs.trim() == k {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

impl Config {
    /// Parses and validates a configuration.
    pub fn parse(src: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(src).map_err(|e| {
            let line = e.span().map(|s| src[..s.start.min(src.len())].matches('\n').count() + 1);
            CliError::config(line, e.message().trim().to_string())
        })?;
        cfg.validate(src)?;
        Ok(cfg)
    }

    /// Canonical text with every default spelled out.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("configurations always serialize")
    }

    fn validate(&self, src: &str) -> Result<(), CliError> {
        let at = |section: &str, key: &str, msg: String| CliError::config(locate(src, section, Some(key)).or(locate(src, section, None)), msg);
        let s = &self.sampler;
        if !(s.eta > 0.0 && s.eta.is_finite()) {
            return Err(at("sampler", "eta", format!("eta must be positive and finite, got {}", s.eta)));
        }
        if !(s.beta >= 1.0 && s.beta.is_finite()) {
            return Err(at("sampler", "beta", format!("beta must be finite and at least 1, got {}", s.beta)));
        }
        if !(s.eps > 0.0 && s.eps < 1.0) {
            return Err(at("sampler", "eps", format!("eps must lie in (0, 1), got {}", s.eps)));
        }
        if i64::try_from(s.seed).is_err() {
            return Err(at("sampler", "seed", "seed must fit in a signed 64-bit integer".into()));
        }
        let model = self.model().map_err(|e| CliError::config(locate(src, "target", None), e.to_string()))?;
        if s.batch_size == 0 || s.batch_size > model.n() {
            return Err(at("sampler", "batch_size", format!("batch_size {} not in [1, {}]", s.batch_size, model.n())));
        }
        if let InitialSpec::Point(p) = &s.initial {
            if p.len() != model.dim() {
                return Err(at("sampler", "initial", format!("initial point has {} coordinates, the target has {}", p.len(), model.dim())));
            }
        }
        if let Some(BigR::Value(v)) = s.big_r {
            if !(v > 0.0 && v.is_finite()) {
                return Err(at("sampler", "big_r", format!("big_r must be positive, got {v}")));
            }
        }
        if let Some(MoveRadius::Value(v)) = s.r {
            if !(v > 0.0 && v.is_finite()) {
                return Err(at("sampler", "r", format!("r must be positive, got {v}")));
            }
        }
        let r = &self.run;
        if r.chains == 0 || r.bins == 0 || !(r.hi > r.lo) {
            return Err(at("run", "chains", "run needs chains >= 1, bins >= 1 and lo < hi".into()));
        }
        let sc = &self.schedule;
        if !(sc.eps > 0.0 && sc.eps < 1.0) {
            return Err(at("schedule", "eps", format!("eps must lie in (0, 1), got {}", sc.eps)));
        }
        if !(sc.c0 > 0.0) {
            return Err(at("schedule", "c0", "c0 must be positive".into()));
        }
        if let Rho::Value(v) = sc.rho {
            if !(v > 0.0) {
                return Err(at("schedule", "rho", "rho must be positive".into()));
            }
        }
        let k = &self.kernel;
        if k.cells < 16 || k.sandwich_points == 0 || k.scan_points < 2 || k.cheeger_cells < 16 {
            return Err(at("kernel", "cells", "kernel needs cells >= 16, cheeger_cells >= 16, sandwich_points >= 1, scan_points >= 2".into()));
        }
        let w = &self.sweep;
        if !(w.eta_lo > 0.0 && w.eta_hi > w.eta_lo) || w.points < 4 || w.seeds == 0 {
            return Err(at("sweep", "eta_lo", "sweep needs 0 < eta_lo < eta_hi, points >= 4 and seeds >= 1".into()));
        }
        Ok(())
    }

    /// Builds the target with any constant overrides applied.
    pub fn model(&self) -> sgld::Result<TargetModel> {
        let model = build_target(&self.target)?;
        let o = &self.constants;
        let c = model.constants().clone();
        let c = Constants {
            m: o.m.unwrap_or(c.m),
            b: o.b.unwrap_or(c.b),
            l: o.l.unwrap_or(c.l),
            h: match o.h {
                None => c.h,
                Some(HSpec::Value(v)) => Some(v),
                Some(HSpec::Absent(_)) => None,
            },
            g: o.g.unwrap_or(c.g),
        };
        Ok(model.with_constants(c))
    }

    /// Chain settings with the radii resolved against the model.
    pub fn chain(&self, model: &TargetModel) -> sgld::Result<ChainConfig> {
        let s = &self.sampler;
        let initial = match &s.initial {
            InitialSpec::Named(InitialName::Gaussian) => Initial::Gaussian,
            InitialSpec::Point(p) => Initial::PointMass(p.clone()),
        };
        let mut cfg = ChainConfig::new(s.eta, s.beta, s.batch_size, s.steps).with_seed(s.seed).with_initial(initial);
        let k = s.steps.max(1) as f64;
        cfg.big_r = match s.big_r {
            None => None,
            Some(BigR::Value(v)) => Some(v),
            Some(BigR::Auto(_)) => Some(sgld::schedule::bar_r_for(model, s.eps / (4.0 * k), s.beta)?),
        };
        cfg.r = match s.r {
            None => None,
            Some(MoveRadius::Value(v)) => Some(v),
            Some(MoveRadius::Named(name)) => {
                let (r62, r63) = sgld::schedule::proj_radii(s.eta, model.dim(), s.beta, k, s.eps)?;
                Some(if name == RadiusName::Lemma62 { r62 } else { r63 })
            }
        };
        Ok(cfg)
    }
}

fn build_target(t: &Target) -> sgld::Result<TargetModel> {
    match t {
        Target::Gaussian { mean, precision, n } => make_gaussian(mean, *precision, *n),
        Target::ShiftedMixture { weights, modes, shifts } => make_shifted_mixture(weights, modes, shifts),
        Target::NoiseSplit { noise, base } => make_noise_split(build_target(base)?, noise),
    }
}
