//! Robust proxy-regressed factor models.
//!
//! Estimation of latent factor models whose factors are partly explained by
//! observed proxies, with Huber-regressed sieve projections that tolerate
//! heavy-tailed idiosyncratic noise, a specification test for the
//! proxy-explained part, multi-index forecasting, and a Monte Carlo harness.

pub mod data;
pub mod error;
pub mod estimate;
pub mod factor;
pub mod forecast;
pub mod huber;
pub mod interactive;
pub mod kurtosis;
pub mod linalg;
pub mod link;
pub mod par;
pub mod sieve;
pub mod sim;
pub mod spectest;
pub mod sir;
pub mod subspace;

pub use data::{Orientation, PanelMatrix, ProxyMatrix};
pub use error::{Error, ErrorClass, Result};
pub use huber::{HuberConfig, SolverControls, TuningConstant};
pub use sieve::{BasisFamily, SieveDesign, SieveSpec};
