//! Densities attached to real Lévy processes: the transition density
//! `p_t(x)`, the Lévy density `ν(x)`, the entrance-law density `q_t*(x)` of
//! the excursions reflected at the running infimum, and the density `f_t(x)`
//! of the running supremum.
//!
//! The crate implements four concrete models (Brownian motion, subordinated
//! Brownian motion with drift, a stable subordinator minus a drift, and the
//! symmetric stable process), solves the Volterra convolution identities
//! linking `p`, `q*` and `f` on graded grids, and cross-checks everything
//! against closed forms and seeded Monte Carlo.
//!
//! Modules follow the pipeline order:
//!
//! * [`grid`] — graded time grids, space grids, sampled fields.
//! * [`specfun`] — Gamma, modified Bessel K, one-sided stable densities.
//! * [`model`] / [`models`] — model descriptors and their densities.
//! * [`entrance`] — the entrance-law solver and excursion functionals.
//! * [`supremum`] — supremum density assembly and mass accounting.
//! * [`montecarlo`] — exact-increment samplers and histogram estimates.
//! * [`asymptotics`] — ratio-convergence and comparability reports.
//! * [`config`] / [`output`] — batch configuration and artifact writers.

pub mod asymptotics;
pub mod config;
pub mod entrance;
pub mod error;
pub mod grid;
pub mod model;
pub mod models;
pub mod montecarlo;
pub mod output;
pub mod quad;
pub mod specfun;
pub mod supremum;

pub use error::{Error, Result};
pub use grid::{Field2D, GridMode, SpaceGrid, TimeGrid};
pub use model::{ModelCapabilities, ModelKind, ModelSpec};
