//! Sequential Monte Carlo samplers with information-geometric kernels.
pub mod dual;
pub mod error;
pub mod geodesic;
pub mod kernels;
pub mod metric;
pub mod models;
pub mod ode;
pub mod population;
pub mod presets;
pub mod rng;
pub mod smc;
pub mod stats;

pub use error::{Error, Result};
pub use kernels::{DriftForm, KernelChoice, KernelProposal, MoveRecord, Proposal};
pub use models::{Geometry, Need, PointEval, TargetSequence, Tempered, TemperedModel};
pub use population::{ParameterPoint, Particle, Population, ResamplingScheme, TemperingSchedule};
pub use smc::{run, SmcConfig, SmcResult, WeightMode};
