//! Distributed multi-target tracking with multi-Bernoulli posteriors fused
//! by generalized covariance intersection.

pub mod config;
pub mod error;
pub mod filter;
pub mod fusion;
pub mod kde;
pub mod math;
pub mod metrics;
pub mod rfs;
pub mod simnet;
pub mod tbd;

pub use config::ScenarioConfig;
pub use error::{Error, Result};
pub use filter::{FilterConfig, MotionModel};
pub use fusion::{gci_mb_fuse, moment_match, sequential_fuse, FusionConfig, FusionMap, FusionWeights};
pub use metrics::{approximation_error, ospa, OspaParams};
pub use rfs::{BernoulliTrack, GaussianMixture, GmbPosterior, MbPosterior, ParticleDensity, SingleState};
pub use simnet::{monte_carlo, run_scenario, NetworkTopology, StepRecord, WorkMode};
pub use tbd::{ImageFrame, SensorModel};
