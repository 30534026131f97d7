//! Mean-field analysis of least-loaded-of-d (LL(d)) load balancing.
//!
//! The crate computes the limiting workload and response-time distributions of LL(d) for
//! general job sizes by three independent routes (fixed-point iteration of the stationary
//! integral equation, closed forms for exponential jobs, and ODE/DDE systems for phase-type
//! and deterministic jobs), computes the shortest-queue-of-d (SQ(d)) baseline, and validates
//! both against a finite-N discrete-event simulator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod config;
pub mod conv;
pub mod curve;
pub mod error;
pub mod fixed_point;
pub mod jobsize;
pub mod model;
pub mod ph_ode;
pub mod sim;
pub mod sq_cavity;
pub mod sweep;
pub mod transient;

pub use curve::{kolmogorov_distance, CcdfCurve};
pub use error::{Error, Result};
pub use jobsize::{fit_hyperexp, HexpFitSpec, JobSizeLaw, PhRep};
pub use model::ModelParams;
