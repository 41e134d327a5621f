//! Differentially private synthetic trajectory generation.
//!
//! The pipeline discretizes space with a density-adaptive two-layer grid,
//! learns noisy first- and second-order Markov models over the grid cells,
//! estimates where trips start and end, and random-walks the models to
//! produce synthetic trajectories. [`pipeline`] ties the stages together;
//! [`metrics`] scores a synthetic dataset against the original.

pub mod discretization;
pub mod error;
pub mod generation;
pub mod geometry;
pub mod io;
pub mod markov;
pub mod metrics;
pub mod pipeline;
pub mod privacy;
pub mod rng;
pub mod synthgen;
pub mod trip;

pub use error::{Error, Result};
pub use geometry::{BBox, Point, Trajectory, TrajectoryDataset};
pub use pipeline::{run_experiment, validate_config, RunConfig};
pub use privacy::PrivacyBudget;
pub use rng::Rng;
