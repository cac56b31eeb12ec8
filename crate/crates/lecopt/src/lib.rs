//! Join-order optimization under uncertainty: instead of costing plans
//! at single parameter estimates, run-time parameters (memory, relation
//! sizes, selectivities) carry bucketed probability distributions and
//! the optimizer picks the left-deep plan of least expected cost.
//!
//! The crate provides:
//!
//! * [`distributions`]: bucketed distributions, prefix tables, Markov
//!   transition models.
//! * [`cost_models`]: join and sort cost formulas plus fast linear
//!   expected-cost evaluators.
//! * [`catalog`]: catalog, query, and environment types and their JSON
//!   ingestion.
//! * [`optimizer`]: the System-R baseline and the four expected-cost
//!   algorithms.
//! * [`oracle`]: brute-force enumeration and exact expectation for
//!   ground truth.
//! * [`simulator`]: Monte Carlo validation of analytic expectations.

pub mod catalog;
pub mod cost_models;
pub mod distributions;
pub mod error;
pub mod optimizer;
pub mod oracle;
pub mod simulator;

pub mod cli;

pub use error::{Error, Result};
