//! Wi-Fi CSI to image reconstruction with threshold-gated continual learning.
//!
//! The pipeline runs: simulated capture ([`sim`], [`dataset`]) → preprocessing
//! and alignment ([`ingest`]) → encoder–decoder network ([`model`]) → quality
//! scoring ([`metrics`]) → gated adaptation loop ([`clloop`]).
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the `f64` instantiation used for training.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clloop;
pub mod dataset;
pub mod error;
pub mod image;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ImageFrame = image::ImageFrame<f64>;
pub type AmplitudeWindow = ingest::AmplitudeWindow<f64>;
pub type AlignedPair = ingest::AlignedPair<f64>;
pub type SlotBatch = ingest::SlotBatch<f64>;
pub type Model = model::Model<f64>;
pub type ServingState = clloop::ServingState<f64>;
/// Capture streams as stored on disk (32-bit).
pub type CaptureDataset = sim::CaptureDataset<f32>;
pub type CsiRecord = sim::CsiRecord<f32>;

pub type ImageFrameF32 = image::ImageFrame<f32>;
pub type ModelF32 = model::Model<f32>;
