//! Reconstruction toolkit for video snapshot compressive imaging.
//!
//! The crate simulates the mask-modulated (optionally Bayer-mosaicked)
//! forward model and recovers a video cube from one coded snapshot with
//! GAP-TV, a two-stage plug-and-play ADMM, and an online variant that
//! fine-tunes a learned denoiser against measurement consistency while it
//! reconstructs.
//!
//! Everything numeric is generic over [`Real`]; the aliases below pin the
//! common double-precision instantiations.

pub mod adaptive;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod priors;
pub mod scalar;
pub mod solvers;

pub use error::{Result, SciError};
pub use scalar::Real;

pub type Cube = model::VideoCube<f64>;
pub type Cube32 = model::VideoCube<f32>;
pub type Plane64 = model::Plane<f64>;
pub type Masks = model::MaskStack<f64>;
pub type Snapshot = model::Measurement<f64>;
