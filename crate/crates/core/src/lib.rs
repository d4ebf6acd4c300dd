//! Safe offline policy learning with stability-corrected confidence bounds.
//!
//! A learner scans a finite policy class with a sparse-vector mechanism,
//! keeps at most `eta` candidates, and returns the best one whose guardrail
//! outcomes are jointly certified not to fall below a weighted baseline.
//! Data-splitting and Bonferroni learners, a synthetic benchmark with exact
//! policy values, and a replicated-simulation harness are included.

// `!(x > 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bounds;
pub mod data;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod method;
pub mod normal;
pub mod nuisance;
pub mod policy;
pub mod seed;
pub mod snpl;
pub mod spec;
pub mod stability;
pub mod synthetic;

pub use data::{Dataset, Observation, PropensityModel};
pub use error::{Error, Result};
pub use method::{run_method, Decision, Method, Trace};
pub use policy::{Policy, PolicyRef};
pub use snpl::{snpl_run, InLoopBound, SnplConfig, SnplTrace};
pub use spec::{Hyperparams, Mode, SafetySpec, Sense};
