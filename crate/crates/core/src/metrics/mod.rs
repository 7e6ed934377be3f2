//! Quality metrics and the benchmark harness.

pub mod bench;
pub mod quality;

pub use bench::{benchmark_run, benchmark_scenes, BenchmarkConfig, BenchmarkReport, EvalReport, SceneResult};
pub use quality::{psnr, psnr_per_frame, ssim, ssim_plane, PSNR_CAP_DB};
