//! Simulation and parameter estimation for the hit-phenomenon model of
//! public interest driven by media exposure and word of mouth.
//!
//! ```text
//! dI/dt = sum_k c_k A_k(t) + D I + P I^2
//! ```
//!
//! * [`model`]: domain types and forward simulation.
//! * [`estimator`]: least-squares fitting over one or per-episode windows.
//! * [`dataio`]: count/exposure/schedule files and plot-ready exports.
//! * [`synth`]: synthetic data and a grid-search oracle.
//! * [`cli`]: the `hitfit` command-line tool.

pub mod cli;
pub mod dataio;
pub mod error;
pub mod estimator;
pub mod model;
pub mod synth;

pub use error::{HitError, Result};
pub use estimator::{fit, fit_full_run, fit_per_episode, objective, FitConfig, FitResult, InitialInterest, Window};
pub use model::{rhs, simulate, ExposureSet, HitParams, Integrator, SimOptions, TimeGrid, TimeSeries};
