//! Stochastic gradient Langevin dynamics for finite-sum, possibly non-log-concave targets.
//!
//! * [`targets`]: finite-sum potentials with declared regularity constants and probes.
//! * [`stochastic_gradient`]: mini-batches without replacement and the gradients built on them.
//! * [`samplers`]: LMC, SGLD, projected SGLD and metropolized SGLD chains.
//! * [`kernels`]: exact transition kernels in one and two dimensions, conductance and Cheeger
//!   constants, truncation error.
//! * [`schedule`]: closed-form radii, closeness constants and step-size schedules.
//! * [`diagnostics`]: histograms, TV estimates and scaling sweeps.
//!
//! With the default `parallel` feature, ensembles, kernel rows and sweeps are spread over a
//! rayon pool; results never depend on the number of threads.

pub mod diagnostics;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod par;
pub mod rng;
pub mod samplers;
pub mod schedule;
pub mod special;
pub mod stochastic_gradient;
pub mod targets;

pub use error::{Error, Result};
