//! Curricular dynamic forgery augmentation for deepfake-detector training.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`]: landmark hulls and blending masks,
//! * [`augment`]: the BI / SBI / SSBI operators and policy-driven pseudo-fakes,
//! * [`curriculum`]: the sine schedule over the pseudo-fake share of a batch,
//! * [`nets`]: a small explicit-gradient detector and policy network,
//! * [`trainer`]: the alternating detector / policy optimization loop,
//! * [`data`]: the on-disk corpus format and a synthetic face-video generator,
//! * [`metrics`]: frame- and video-level AUC and policy summaries.

pub mod augment;
pub mod curriculum;
pub mod data;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod nets;
pub mod trainer;

pub use error::{CdfaError, ErrorClass, Result};
