//! File formats, synthetic scenes and run configuration.
//!
//! Tensors are stored as a raw little-endian `f32` payload (`.bin`) next to
//! a JSON sidecar (`.json`) carrying kind, shape and metadata.

pub mod checkpoint;
pub mod config;
pub mod frames;
pub mod synthetic;
pub mod tensor;

pub use checkpoint::{load_ddnet, load_prior_params, save_ddnet, save_prior_params, CheckpointInfo};
pub use config::{thread_count, DemosaicerKind, RunConfig, ScheduleSpec, SolverKind};
pub use frames::{export_frames, import_frames, FrameFormat};
pub use synthetic::{gen_synthetic, ColorOrbits, MovingSquare, SyntheticKind};
pub use tensor::{
    load_cube, load_masks, load_measurement, payload_digest, read_raw, save_cube, save_masks, save_measurement,
    write_raw, RawTensor, TensorKind,
};
