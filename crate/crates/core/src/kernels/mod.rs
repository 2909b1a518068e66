//! Distributions, transition kernels with an explicit atom, and path
//! simulation.

mod builtin;
mod distribution;
mod kernel;
mod scaling;

pub use builtin::{list_builtin_kernels, BuiltKernel, BuiltinInfo, BuiltinKernel, ParamDoc};
pub use distribution::TailDistribution;
pub use kernel::{
    ChainPath, DomainReport, DomainRow, ExtremalBoundary, Init, KernelSpec, Perturbation,
    DEFAULT_CYCLE_CAP, SPEC_VERSION,
};
pub use scaling::{ScalingFunction, ScalingMode, PILOT_SIZE};
