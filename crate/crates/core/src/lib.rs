//! Wave-function ensembles on finite-dimensional Hilbert spaces.
//!
//! States are points `c = x + ip` of the unit sphere in `C^N`. The crate
//! samples canonical and microcanonical distributions over those points,
//! drives them with time-dependent Hamiltonians, and measures work both as
//! the change of the energy expectation and through the two-measurement
//! scheme.

pub mod dynamics;
pub mod ensembles;
pub mod error;
pub mod lzmodel;
pub mod rng;
pub mod statespace;
pub mod stats;
pub mod thermo;
pub mod workstats;

pub use dynamics::{Convergence, PropagatorResult, Protocol, StepPolicy, WorkMeter};
pub use ensembles::{ChainConfig, Ensemble, EnsembleKind, EnsembleSpec, SampleBatch, SamplerDiagnostics};
pub use error::{Error, Result};
pub use lzmodel::LzParams;
pub use statespace::{
    BlochPoint, HermitianOperator, LinearHamiltonian, ParameterizedHamiltonian, Spectrum,
    StateVector, C64,
};
pub use thermo::{Evaluation, ThermoPoint};
pub use workstats::{AtomicWorkPdf, WorkHistogram, WorkSampleSet};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
