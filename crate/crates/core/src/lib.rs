//! Slow-fast McKean-Vlasov systems: particle simulation, homogenized
//! coefficients from the explicit one-dimensional cell problem, and the
//! weak-error experiments built on top of them.

pub mod coeffs;
pub mod config;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod frozen;
pub mod homogenize;
pub mod measure;
pub mod output;
pub mod quad;
pub mod reference;
pub mod rng;
pub mod sde;

pub use coeffs::{
    build_aggdiff_model, build_periodic_rough_model, AggDiffPotentials, Coefficient,
    CompiledModel, ModelKind, ModelSpec, PeriodicRough,
};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use experiments::{
    effective_potential_table, ergodic_deviation, fit_rate, weak_error_curve, Functional,
    WeakErrorReport,
};
pub use frozen::{FrozenSolution, FrozenSolver, Grid1D};
pub use homogenize::{FieldValue, HomogenizedField, PeriodicTheta, Provenance};
pub use expr::{parse, parse_potential, Expr};
pub use measure::EmpiricalMeasure;
pub use sde::{InitialLaw, PathEnsemble, SimConfig};
