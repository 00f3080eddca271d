//! Exact transition kernels in one and two dimensions, and the quantities built on them.

pub mod cheeger;
pub mod conductance;
pub mod discrete;
pub mod engine;
pub mod grid;
pub mod region;
pub mod truncation;

pub use cheeger::{cheeger_constant, CheegerCut, CheegerResult, GridDensity};
pub use conductance::{conductance, ConductanceResult};
pub use discrete::{build_discretized_kernel, DiscreteKind, DiscretizedKernel, Layout, SparseRows, TruncatedTarget};
pub use engine::{delta_sandwich_check, kernel_tv_distance, KernelEngine, KernelKind, KernelTv, SandwichReport, SetSpec, SANDWICH_TOLERANCE};
pub use grid::Grid;
pub use truncation::{tail_mass, truncation_tv};
