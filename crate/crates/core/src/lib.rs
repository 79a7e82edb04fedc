//! Numerical laboratory for bump-neuron networks trained by projected SGD
//! and for the Wasserstein gradient flows describing their many-neuron limit.

pub mod error;
pub mod features;
pub mod geometry;
pub mod grid;
pub mod kernel;
pub mod pde;
pub mod metrics;
pub mod particle_sgd;
pub mod quadrature;
pub mod rng;
pub mod target;

pub use error::{Error, Result};
pub use geometry::{shrink, Domain, Shape, ShrunkenDomain};
pub use grid::DensityGrid;
pub use kernel::{KernelSpec, Profile, RadialProfile};
pub use metrics::{wasserstein_1d, EmpiricalMeasure};
pub use particle_sgd::{run_sgd, DataSource, InitSpec, ParticleState, Problem, SgdConfig, SgdRun};
pub use rng::SimRng;
pub use target::{ScalarField, TargetFunction, TargetKind};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
