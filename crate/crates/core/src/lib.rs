//! Deterministic simulator of a cloud-native 4G testbed: container
//! orchestration of core and RAN network functions, a flow-level transport
//! model, RAN slicing and scenario execution.

pub mod catalog;
pub mod manifest;
pub mod netmodel;
pub mod orchestrator;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod slicing;

pub use scalar::Scalar;

/// Rates in Mb/s.
pub type Mbps = f64;
/// Exact rate arithmetic for fairness checks.
pub type ExactRate = num_rational::Ratio<i64>;
pub type RateParams = netmodel::RateParams<f64>;
pub type RateParams32 = netmodel::RateParams<f32>;
