//! Cluster-randomized experiments under interference.
//!
//! The crate covers the whole chain: potential-outcome models and
//! clusterings, cluster-based and experiment-of-experiments designs,
//! Horvitz-Thompson estimation with a Neyman variance bound, a linear
//! interference model with closed-form bias, reserve-price auction models,
//! restreaming balanced partitioning, bid-log IO and a config-driven harness.

pub mod auction;
pub mod data;
pub mod design;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod interference;
pub mod model;
pub mod partition;
pub mod rng;

pub use error::{Error, Result};
pub use model::{Assignment, Clustering, NeighborhoodGraph, Noise, OutcomeModel};
