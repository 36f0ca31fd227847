//! Numerical laboratory for geodesic solutions of the evolutionary Faddeev model.

pub mod data;
pub mod energy_diagnostics;
pub mod error;
pub mod experiments;
pub mod faddeev;
pub mod grid;
pub mod integrator;
pub mod jet;
pub mod linear_wave;
pub mod null_forms;
pub mod quadrature;
pub mod taylor;
pub mod vector_fields;

pub use data::{BumpSet, BumpSpec, SmoothData};
pub use error::{Error, Result};
pub use experiments::{
    parse_config, resolve, run_experiment, ExperimentConfig, ExperimentKind, Outcome, Resolved, Row, RunOptions,
    Summary,
};
pub use grid::{ScalarField, UniformGrid};
pub use integrator::{StateHistory, StateSnapshot};
pub use linear_wave::{BackgroundConfig, BackgroundField, BackgroundSpec};
