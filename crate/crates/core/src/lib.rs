//! Crowd-sourced soft labels for facial-expression images: label model,
//! vote aggregation, worker quality pools, soft-label training, evaluation
//! statistics and synthetic corpora.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

pub mod aggregation;
pub mod evalstat;
pub mod event;
pub mod label_model;
pub mod scalar;
pub mod synthgen;
pub mod trainer;
pub mod worker_quality;

pub use label_model::{EmotionClass, ItemRecord, LabelCountVector, Manifest, NUM_CLASSES};
pub use scalar::Scalar;

pub type SoftTargetF64 = label_model::SoftTarget<f64>;
pub type SoftTargetF32 = label_model::SoftTarget<f32>;
pub type RasterF64 = trainer::Raster<f64>;
pub type ModelParamsF64 = trainer::ModelParams<f64>;
pub type ModelParamsF32 = trainer::ModelParams<f32>;
pub type TrainSampleF64 = trainer::TrainSample<f64>;
pub type SyntheticItemF64 = synthgen::SyntheticItem<f64>;
pub type MetricsReportF64 = evalstat::MetricsReport<f64>;
