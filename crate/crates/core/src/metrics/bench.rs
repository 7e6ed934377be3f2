//! Benchmark harness: reconstruct every scene of a dataset and tabulate
//! PSNR / SSIM.
//!
//! A dataset directory holds ground-truth cubes (tensor kind `cube`), an
//! optional `masks` tensor and optional pre-simulated measurements named
//! `{scene}_meas{i}`. A cube with `F` frames is cut into `F / B` consecutive
//! groups of `B` frames, one measurement each. Without a `masks` file the
//! masks are fixed-seed binary (p = 0.5) and the run is labelled
//! non-official.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::quality::{psnr_per_frame, ssim};
use crate::error::{Result, SciError};
use crate::io::{load_cube, load_masks, load_measurement, read_raw, thread_count, RunConfig, TensorKind};
use crate::model::{encode, CfaOperator, MaskStack, VideoCube};
use crate::pipeline;

/// How PSNR is aggregated, stamped into every report.
pub const PSNR_AGGREGATION: &str = "per-frame mean";

#[derive(Clone, Debug)]
pub struct BenchmarkConfig {
    pub run: RunConfig,
    /// Frames per measurement when masks are generated.
    pub frames: usize,
    /// Upper bound on measurements per scene.
    pub max_measurements: Option<usize>,
    pub mask_seed: u64,
    pub noise_std: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            run: RunConfig::default(),
            frames: 8,
            max_measurements: None,
            mask_seed: 0,
            noise_std: 0.0,
        }
    }
}

/// Scores of one reconstructed measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scene: String,
    pub measurement: usize,
    pub solver: String,
    pub psnr_db: f64,
    pub psnr_frames: Vec<f64>,
    pub ssim: f64,
    pub seconds: f64,
    pub iterations: usize,
    pub config_digest: String,
    pub psnr_aggregation: String,
}

impl EvalReport {
    /// Scores `recon` against `truth`.
    pub fn score(
        recon: &VideoCube<f64>,
        truth: &VideoCube<f64>,
        scene: &str,
        solver: &str,
        config_digest: &str,
    ) -> Result<Self> {
        let frames = psnr_per_frame(recon, truth)?;
        Ok(EvalReport {
            scene: scene.into(),
            measurement: 0,
            solver: solver.into(),
            psnr_db: frames.iter().sum::<f64>() / frames.len() as f64,
            psnr_frames: frames,
            ssim: ssim(recon, truth)?,
            seconds: 0.0,
            iterations: 0,
            config_digest: config_digest.into(),
            psnr_aggregation: PSNR_AGGREGATION.into(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneResult {
    pub scene: String,
    pub solver: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub seconds: f64,
    pub iterations: usize,
    pub official: bool,
    pub measurements: Vec<EvalReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub scenes: Vec<SceneResult>,
    pub psnr_db: f64,
    pub ssim: f64,
    pub official: bool,
    pub config_digest: String,
    pub psnr_aggregation: String,
}

impl BenchmarkReport {
    /// `scene, solver, psnr_db, ssim, seconds, iterations, official`, one row
    /// per scene plus an `average` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scene,solver,psnr_db,ssim,seconds,iterations,official\n");
        for s in &self.scenes {
            out += &format!(
                "{},{},{:.4},{:.4},{:.3},{},{}\n",
                s.scene, s.solver, s.psnr_db, s.ssim, s.seconds, s.iterations, s.official
            );
        }
        let solver = self.scenes.first().map(|s| s.solver.as_str()).unwrap_or("");
        let secs: f64 = self.scenes.iter().map(|s| s.seconds).sum();
        let iters: usize = self.scenes.iter().map(|s| s.iterations).sum();
        out += &format!(
            "average,{solver},{:.4},{:.4},{secs:.3},{iters},{}\n",
            self.psnr_db, self.ssim, self.official
        );
        out
    }

    /// Scenes as columns, `PSNR, SSIM` per cell, average last.
    pub fn table(&self) -> String {
        let mut head = format!("{:<16}", "Algorithm");
        let solver = self.scenes.first().map(|s| s.solver.clone()).unwrap_or_default();
        let mut row = format!("{solver:<16}");
        for s in &self.scenes {
            head += &format!(" | {:>14}", s.scene);
            row += &format!(" | {:>6.2}, {:.4}", s.psnr_db, s.ssim);
        }
        head += &format!(" | {:>14}", "Average");
        row += &format!(" | {:>6.2}, {:.4}", self.psnr_db, self.ssim);
        let label = if self.official { "official" } else { "non-official" };
        format!("{head}\n{}\n{row}\n({label} masks, PSNR {PSNR_AGGREGATION})\n", "-".repeat(head.len()))
    }
}

/// Reconstructs one scene: every measurement group, in order.
fn run_scene(
    name: &str,
    truth: &VideoCube<f64>,
    masks: &MaskStack<f64>,
    measured: &[Option<crate::model::Measurement<f64>>],
    cfg: &BenchmarkConfig,
    official: bool,
) -> Result<SceneResult> {
    let b = masks.frames();
    let groups = truth.frames() / b;
    if groups == 0 {
        return Err(SciError::DimensionMismatch(format!(
            "scene '{name}' has {} frames, masks need {b}",
            truth.frames()
        )));
    }
    let count = cfg.max_measurements.map_or(groups, |m| m.min(groups));
    let cfa = if truth.channels() == 3 {
        Some(CfaOperator::new(truth.height(), truth.width())?)
    } else {
        None
    };
    let digest = cfg.run.digest();
    let mut reports = Vec::with_capacity(count);
    for g in 0..count {
        let gt = truth.frame_range(g * b, b)?;
        let y = match measured.get(g).and_then(Option::as_ref) {
            Some(m) => m.y.clone(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed ^ ((g as u64) << 32));
                encode(&gt, masks, cfa.as_ref(), cfg.noise_std, &mut rng)?.y
            }
        };
        let t0 = Instant::now();
        let out = pipeline::solve(&cfg.run, &y, masks, cfa.as_ref(), None)?;
        let seconds = t0.elapsed().as_secs_f64();
        let mut r = EvalReport::score(&out.cube, &gt, name, cfg.run.solver.name(), &digest)?;
        r.measurement = g;
        r.seconds = seconds;
        r.iterations = out.trace.iterations();
        reports.push(r);
    }
    let n = reports.len() as f64;
    Ok(SceneResult {
        scene: name.into(),
        solver: cfg.run.solver.name().into(),
        psnr_db: reports.iter().map(|r| r.psnr_db).sum::<f64>() / n,
        ssim: reports.iter().map(|r| r.ssim).sum::<f64>() / n,
        seconds: reports.iter().map(|r| r.seconds).sum(),
        iterations: reports.iter().map(|r| r.iterations).sum(),
        official,
        measurements: reports,
    })
}

type SceneInput = (String, VideoCube<f64>, Vec<Option<crate::model::Measurement<f64>>>);

/// Runs a list of in-memory scenes. `masks = None` generates the
/// non-official binary masks.
pub fn benchmark_scenes(
    scenes: Vec<(String, VideoCube<f64>)>,
    masks: Option<MaskStack<f64>>,
    cfg: &BenchmarkConfig,
) -> Result<BenchmarkReport> {
    let inputs = scenes.into_iter().map(|(n, c)| (n, c, Vec::new())).collect();
    run_all(inputs, masks, cfg)
}

fn run_all(mut scenes: Vec<SceneInput>, masks: Option<MaskStack<f64>>, cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    cfg.run.validate()?;
    if scenes.is_empty() {
        return Err(SciError::EmptyDataset);
    }
    scenes.sort_by(|a, b| a.0.cmp(&b.0));
    let (h, w) = (scenes[0].1.height(), scenes[0].1.width());
    if scenes.iter().any(|s| s.1.height() != h || s.1.width() != w) {
        return Err(SciError::DimensionMismatch("scenes differ in frame size".into()));
    }
    let official = masks.is_some();
    let masks = match masks {
        Some(m) => m,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.mask_seed);
            MaskStack::random_binary(h, w, cfg.frames, 0.5, &mut rng)
        }
    };
    let threads = thread_count().min(scenes.len()).max(1);
    let mut results: Vec<Option<Result<SceneResult>>> = (0..scenes.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunk = scenes.len().div_ceil(threads);
        for (jobs, slots) in scenes.chunks(chunk).zip(results.chunks_mut(chunk)) {
            let masks = &masks;
            s.spawn(move || {
                for ((name, cube, meas), slot) in jobs.iter().zip(slots) {
                    *slot = Some(run_scene(name, cube, masks, meas, cfg, official));
                }
            });
        }
    });
    let scenes: Vec<SceneResult> = results
        .into_iter()
        .map(|r| r.expect("every scene ran"))
        .collect::<Result<_>>()?;
    let n = scenes.len() as f64;
    Ok(BenchmarkReport {
        psnr_db: scenes.iter().map(|s| s.psnr_db).sum::<f64>() / n,
        ssim: scenes.iter().map(|s| s.ssim).sum::<f64>() / n,
        scenes,
        official,
        config_digest: cfg.run.digest(),
        psnr_aggregation: PSNR_AGGREGATION.into(),
    })
}

/// Loads a dataset directory and benchmarks it.
pub fn benchmark_run(dir: &Path, cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    let entries = std::fs::read_dir(dir).map_err(|e| SciError::io(dir, e))?;
    let mut sidecars: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    sidecars.sort();
    let mut masks = None;
    let mut cubes = Vec::new();
    let mut measurements = Vec::new();
    for path in &sidecars {
        let Ok(raw) = read_raw(path) else {
            log::warn!("skipping unreadable tensor {}", path.display());
            continue;
        };
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        match raw.kind {
            TensorKind::Mask if masks.is_none() => masks = Some(load_masks::<f64>(path)?),
            TensorKind::Cube => cubes.push((stem, load_cube::<f64>(path)?)),
            TensorKind::Measurement => measurements.push((stem, path.clone())),
            _ => {}
        }
    }
    if cubes.is_empty() {
        return Err(SciError::EmptyDataset);
    }
    let mut scenes = Vec::with_capacity(cubes.len());
    for (name, cube) in cubes {
        let prefix = format!("{name}_meas");
        let mut meas = Vec::new();
        for (stem, path) in &measurements {
            if let Some(i) = stem.strip_prefix(&prefix).and_then(|s| s.parse::<usize>().ok()) {
                let Some(m) = masks.as_ref() else {
                    return Err(SciError::MissingMasks(format!(
                        "{} needs the masks it was simulated with",
                        path.display()
                    )));
                };
                if meas.len() <= i {
                    meas.resize(i + 1, None);
                }
                meas[i] = Some(load_measurement(path, Some(m))?);
            }
        }
        scenes.push((name, cube, meas));
    }
    run_all(scenes, masks, cfg)
}
