//! Dataset fingerprinting, rule-based U-Net configuration and the deterministic
//! parts of a self-configuring volumetric segmentation pipeline.
//!
//! The typical flow is [`fingerprint`] → [`planner`] → [`preprocess`], with
//! [`augment`], [`tiling`] and [`evalselect`] covering training-time sampling,
//! sliding-window assembly and empirical model selection.

pub mod augment;
pub mod error;
pub mod evalselect;
pub mod fingerprint;
pub mod grid;
pub mod morphology;
pub mod planner;
pub mod preprocess;
pub mod rng;
pub mod tiling;
pub mod volume_io;

pub use error::{Error, ErrorCategory, Result};
pub use grid::Grid;
