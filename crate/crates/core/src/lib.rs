//! Hotspot forecasting for sparse spatiotemporal point events.
//!
//! Events are binned on a rotated rectangular grid, described by lagged
//! kernel density features and random Fourier features, and fed to an
//! elastic-net Poisson regression. The highest-intensity cells under an area
//! budget form the forecast, scored by hit rate, PAI and PEI. Hyperparameters
//! are tuned by cross-validated PEI with grid search and Bayesian optimization.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar type. Search and the end-to-end pipeline work in `f64`.

pub mod config;
pub mod error;
pub mod events;
pub mod geometry;
pub mod glm;
pub mod kde;
pub mod metrics;
pub mod pipeline;
pub mod rff;
mod scalar;
pub mod search;
pub mod seeds;
pub mod stats;
pub mod synth;

pub use config::HyperParams;
pub use error::{Error, Result};
pub use scalar::Real;

pub type Region = geometry::StudyRegion<f64>;
pub type Grid = geometry::GridSpec<f64>;
pub type Event = events::EventRecord<f64>;
pub type Windowing = events::TemporalWindowing<f64>;
pub type Cube = events::AggregatedCube<f64>;
pub type Kde = kde::KdeConfig<f64>;
pub type Rff = rff::RffConfig<f64>;
pub type Frequencies = rff::FrequencyMatrix<f64>;
pub type Design = glm::DesignMatrix<f64>;
pub type Params = glm::ModelParams<f64>;

pub type RegionF32 = geometry::StudyRegion<f32>;
pub type GridF32 = geometry::GridSpec<f32>;
pub type EventF32 = events::EventRecord<f32>;
pub type KdeF32 = kde::KdeConfig<f32>;
pub type RffF32 = rff::RffConfig<f32>;
pub type DesignF32 = glm::DesignMatrix<f32>;
pub type ParamsF32 = glm::ModelParams<f32>;
