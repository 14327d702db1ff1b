//! Deterministic simulator for federated learning under system heterogeneity.
//!
//! Devices that run fewer local SGD steps than requested (stragglers) send a
//! truncated update. The aggregator can compensate for the missing steps with
//! a first-order Taylor correction whose Hessian is replaced by the outer
//! product of the device's averaged gradient (FedLGA). FedAvg, FedProx and
//! FedNova are available as baselines on the same round protocol.
//!
//! Module map:
//! - [`model`]: small classifiers with analytic gradients over flat parameters
//! - [`data`]: synthetic blobs, IDX loading, non-i.i.d. partitioning, batching
//! - [`device`]: local training and the update payload sent to the aggregator
//! - [`server`]: sampling, straggler planning, correction and aggregation
//! - [`simulation`]: the synchronous round loop and its metrics
//! - [`verify`]: oracle-based empirical studies
//! - [`config`], [`checkpoint`], [`metrics`]: file formats used by the CLI

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod device;
pub mod error;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod server;
pub mod simulation;
pub mod verify;

pub use error::{Error, Result};
pub use model::{ModelKind, ModelSpec, ParamVector};
