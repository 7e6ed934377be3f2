//! Command-line front end for the snapshot reconstruction toolkit.
//!
//! Failures print one line `error[E_CODE]: message` on stderr and exit 2.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use snapsci::adaptive::OnlineConfig;
use snapsci::io::{
    export_frames, gen_synthetic, load_cube, load_masks, load_measurement, save_cube, save_ddnet, save_masks,
    save_measurement, save_prior_params, CheckpointInfo, DemosaicerKind, FrameFormat, RunConfig, ScheduleSpec,
    SolverKind, SyntheticKind,
};
use snapsci::metrics::{benchmark_run, benchmark_scenes, BenchmarkConfig, EvalReport};
use snapsci::model::{encode, CfaOperator, MaskStack};
use snapsci::priors::{train_demosaic, train_denoiser, CnnDenoiser, DdnetSpec, DenoiserSpec, TrainConfig};
use snapsci::{pipeline, Cube, Masks, SciError};

use rand_chacha::rand_core::SeedableRng;

#[derive(Parser)]
#[command(name = "snapsci", version, about = "Video snapshot compressive imaging toolkit")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene, masks and its coded snapshot.
    Simulate(SimulateArgs),
    /// Reconstruct a video cube from a measurement and masks.
    Reconstruct(ReconstructArgs),
    /// Train the learned demosaicer on colour cubes.
    TrainDemosaic(TrainArgs),
    /// Train the CNN denoiser on cubes.
    TrainDenoiser(TrainArgs),
    /// Score a reconstruction against ground truth.
    Evaluate(EvaluateArgs),
    /// Reconstruct a dataset directory (or a synthetic suite) and tabulate.
    Benchmark(BenchmarkArgs),
    /// Grid over schedules and penalties; one trace per combination.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "moving_square")]
    kind: String,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    /// Frames per snapshot.
    #[arg(long = "B", default_value_t = 8)]
    frames: usize,
    /// Gaussian noise std on the snapshot.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Mask density of the binary masks.
    #[arg(long, default_value_t = 0.5)]
    density: f64,
    #[arg(long, env = "SCI_OUTPUT_DIR", default_value = "sim")]
    out: PathBuf,
}

#[derive(Args, Clone, Default)]
struct SolveFlags {
    /// Run configuration (JSON); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    solver: Option<String>,
    /// tv, cnn or identity.
    #[arg(long)]
    denoiser: Option<String>,
    #[arg(long)]
    tv_weight: Option<f64>,
    #[arg(long)]
    tv_iters: Option<usize>,
    #[arg(long)]
    cnn_checkpoint: Option<String>,
    /// closed, bilinear, malvar or ddnet.
    #[arg(long)]
    demosaicer: Option<String>,
    #[arg(long)]
    ddnet_checkpoint: Option<String>,
    /// a, b, c, d or 80.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    early_stop: Option<f64>,
    #[arg(long)]
    online_k0: Option<usize>,
    #[arg(long)]
    online_warmup: Option<usize>,
    #[arg(long)]
    online_lr: Option<f64>,
    #[arg(long)]
    adapt_demosaicer: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    solve: SolveFlags,
    #[arg(long)]
    measurement: Option<PathBuf>,
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Ground truth, for the trace PSNR column and the report.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "png")]
    frames_format: String,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of training cubes; synthetic scenes are used when absent.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Synthetic training scenes generated when no dataset is given.
    #[arg(long, default_value_t = 8)]
    synthetic: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 64)]
    patch: usize,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    /// Training noise levels (0-255 scale) for the denoiser.
    #[arg(long, value_delimiter = ',', default_value = "10,25,50")]
    sigmas: Vec<f64>,
    /// Checkpoint path (`.bin`, sidecar alongside).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    recon: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    solve: SolveFlags,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Synthetic suite kind when no dataset is given.
    #[arg(long, default_value = "moving_square")]
    kind: String,
    #[arg(long, default_value_t = 3)]
    scenes: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long = "B", default_value_t = 8)]
    frames: usize,
    #[arg(long)]
    max_measurements: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    solve: SolveFlags,
    #[arg(long)]
    measurement: Option<PathBuf>,
    #[arg(long)]
    masks: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "a,b,c,d")]
    schedules: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    rhos: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    taus: Vec<f64>,
}

type Res<T> = Result<T, SciError>;

fn write_text(path: &Path, text: &str) -> Res<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> SciError {
    SciError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_json(path: &Path, v: &Value) -> Res<()> {
    write_text(path, &(serde_json::to_string_pretty(v).expect("json serializes") + "\n"))
}

/// Config file, then `SCI_OUTPUT_DIR`, then explicit flags.
fn build_config(flags: &SolveFlags, seed: Option<u64>) -> Res<RunConfig> {
    let mut cfg = match &flags.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env();
    if let Some(s) = &flags.solver {
        cfg.solver = SolverKind::parse(s)?;
        if cfg.solver == SolverKind::Adaptive && flags.denoiser.is_none() {
            cfg.denoiser = DenoiserSpec::Cnn { checkpoint: None };
        }
    }
    if let Some(d) = &flags.denoiser {
        cfg.denoiser = match d.as_str() {
            "tv" => DenoiserSpec::default(),
            "cnn" => DenoiserSpec::Cnn { checkpoint: None },
            "identity" => DenoiserSpec::Identity,
            other => return Err(SciError::InvalidParameter(format!("unknown denoiser '{other}'"))),
        };
    }
    if let DenoiserSpec::Tv { weight, iters, .. } = &mut cfg.denoiser {
        if let Some(w) = flags.tv_weight {
            *weight = w;
        }
        if let Some(i) = flags.tv_iters {
            *iters = i;
        }
    }
    if let Some(c) = &flags.cnn_checkpoint {
        cfg.denoiser = DenoiserSpec::Cnn { checkpoint: Some(c.clone()) };
    }
    if let Some(d) = &flags.demosaicer {
        cfg.demosaicer = DemosaicerKind::parse(d)?;
    }
    if let Some(c) = &flags.ddnet_checkpoint {
        cfg.demosaicer_checkpoint = Some(c.clone());
    }
    if let Some(s) = &flags.schedule {
        cfg.schedule = ScheduleSpec::Named(s.clone());
    }
    if let Some(v) = flags.rho {
        cfg.rho = v;
    }
    if let Some(v) = flags.tau {
        cfg.tau = v;
    }
    if flags.early_stop.is_some() {
        cfg.early_stop = flags.early_stop;
    }
    let online: &mut OnlineConfig = &mut cfg.online;
    if let Some(v) = flags.online_k0 {
        online.k0 = v;
    }
    if let Some(v) = flags.online_warmup {
        online.warmup = v;
    }
    if let Some(v) = flags.online_lr {
        online.lr = v;
    }
    online.adapt_demosaicer |= flags.adapt_demosaicer;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = &flags.out {
        cfg.output_dir = o.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn seed_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

fn simulate(args: SimulateArgs, seed: u64) -> Res<()> {
    let kind = SyntheticKind::parse(&args.kind)?;
    let truth: Cube = gen_synthetic(kind, args.height, args.width, args.frames, seed)?;
    let mut rng = seed_rng(seed ^ 0x6d61736b);
    let masks: Masks = MaskStack::random_binary(args.height, args.width, args.frames, args.density, &mut rng);
    let cfa = if kind.channels() == 3 {
        Some(CfaOperator::new(args.height, args.width)?)
    } else {
        None
    };
    let m = encode(&truth, &masks, cfa.as_ref(), args.noise, &mut rng)?;
    save_cube(&args.out.join("truth.bin"), &truth)?;
    save_masks(&args.out.join("masks.bin"), &masks)?;
    save_measurement(&args.out.join("measurement.bin"), &m, Some(&masks))?;
    write_json(
        &args.out.join("simulate.json"),
        &json!({
            "command": "simulate", "kind": kind.name(), "height": args.height, "width": args.width,
            "B": args.frames, "noise": args.noise, "density": args.density, "seed": seed,
        }),
    )?;
    println!("wrote {}", args.out.display());
    Ok(())
}

struct Inputs {
    y: snapsci::Plane64,
    masks: Masks,
    cfa: Option<CfaOperator>,
    truth: Option<Cube>,
}

fn load_inputs(cfg: &RunConfig, measurement: &Option<PathBuf>, masks: &Option<PathBuf>, truth: &Option<PathBuf>) -> Res<Inputs> {
    let masks_path = masks
        .clone()
        .or_else(|| cfg.masks.as_ref().map(PathBuf::from))
        .ok_or_else(|| SciError::MissingMasks("pass --masks or set \"masks\" in the config".into()))?;
    if !masks_path.with_extension("json").exists() {
        return Err(SciError::MissingMasks(format!("{} not found", masks_path.display())));
    }
    let masks: Masks = load_masks(&masks_path)?;
    let meas_path = measurement
        .clone()
        .or_else(|| cfg.measurement.as_ref().map(PathBuf::from))
        .ok_or_else(|| SciError::InvalidParameter("pass --measurement or set \"measurement\" in the config".into()))?;
    let m = load_measurement(&meas_path, Some(&masks))?;
    let cfa = if m.mosaicked {
        Some(CfaOperator::new(masks.height(), masks.width())?)
    } else {
        None
    };
    let truth = match truth.clone().or_else(|| cfg.truth.as_ref().map(PathBuf::from)) {
        Some(p) => Some(load_cube(&p)?),
        None => None,
    };
    Ok(Inputs { y: m.y, masks, cfa, truth })
}

fn reconstruct(args: ReconstructArgs, seed: Option<u64>) -> Res<()> {
    let mut cfg = build_config(&args.solve, seed)?;
    let inputs = load_inputs(&cfg, &args.measurement, &args.masks, &args.truth)?;
    cfg.measurement = args.measurement.as_ref().map(|p| p.display().to_string()).or(cfg.measurement);
    cfg.masks = args.masks.as_ref().map(|p| p.display().to_string()).or(cfg.masks);
    cfg.truth = args.truth.as_ref().map(|p| p.display().to_string()).or(cfg.truth);
    let format = FrameFormat::parse(&args.frames_format)?;
    let out_dir = PathBuf::from(&cfg.output_dir);
    let t0 = std::time::Instant::now();
    let out = pipeline::solve(&cfg, &inputs.y, &inputs.masks, inputs.cfa.as_ref(), inputs.truth.as_ref())?;
    let seconds = t0.elapsed().as_secs_f64();
    save_cube(&out_dir.join("recon.bin"), &out.cube)?;
    export_frames(&out.cube, &out_dir.join("frames"), "frame", format)?;
    write_text(&out_dir.join("trace.csv"), &out.trace.to_csv())?;
    let digest = cfg.digest();
    let mut run = json!({
        "command": "reconstruct",
        "config": serde_json::to_value(&cfg).expect("config serializes"),
        "config_digest": digest,
        "seed": cfg.seed,
        "seconds": seconds,
        "iterations": out.trace.iterations(),
    });
    if let Some(t) = &inputs.truth {
        let r = EvalReport::score(&out.cube, t, "input", cfg.solver.name(), &digest)?;
        println!("psnr {:.2} dB  ssim {:.4}", r.psnr_db, r.ssim);
        run["report"] = serde_json::to_value(&r).expect("report serializes");
    }
    if let Some(den) = &out.adapted {
        let events: Vec<Value> = out
            .events
            .iter()
            .map(|(k, e)| json!({"iter": k, "event": format!("{e:?}")}))
            .collect();
        let mut info = CheckpointInfo {
            seed: cfg.seed,
            ..Default::default()
        };
        info.extra.insert(
            "source_checkpoint".into(),
            match &cfg.denoiser {
                DenoiserSpec::Cnn { checkpoint } => json!(checkpoint),
                _ => Value::Null,
            },
        );
        info.extra.insert("measurement_index".into(), json!(0));
        info.extra.insert("update_events".into(), Value::Array(events.clone()));
        save_prior_params(&out_dir.join("adapted_denoiser.bin"), &den.params, &info)?;
        run["update_events"] = Value::Array(events);
    }
    write_json(&out_dir.join("run.json"), &run)?;
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn load_dir_cubes(dir: &Path) -> Res<Vec<Cube>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let cubes: Vec<Cube> = paths.iter().filter_map(|p| load_cube(p).ok()).collect();
    if cubes.is_empty() {
        return Err(SciError::EmptyDataset);
    }
    Ok(cubes)
}

fn training_set(args: &TrainArgs, kind: SyntheticKind, seed: u64) -> Res<Vec<Cube>> {
    match &args.dataset {
        Some(d) => load_dir_cubes(d),
        None => (0..args.synthetic as u64)
            .map(|i| gen_synthetic(kind, args.size, args.size, 4, seed.wrapping_add(1000 + i)))
            .collect(),
    }
}

fn train_cfg(args: &TrainArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        steps: args.steps,
        lr: args.lr,
        batch: args.batch,
        patch: args.patch,
        seed,
    }
}

fn train_info(args: &TrainArgs, seed: u64, losses: (f64, f64)) -> CheckpointInfo {
    let mut info = CheckpointInfo {
        seed,
        steps: args.steps,
        ..Default::default()
    };
    info.extra.insert("lr".into(), json!(args.lr));
    info.extra.insert("batch".into(), json!(args.batch));
    info.extra.insert("patch".into(), json!(args.patch));
    info.extra.insert("initial_loss".into(), json!(losses.0));
    info.extra.insert("final_loss".into(), json!(losses.1));
    info
}

fn train_demosaic_cmd(args: TrainArgs, seed: u64) -> Res<()> {
    let data = training_set(&args, SyntheticKind::ColorOrbits, seed)?;
    let d = DdnetSpec::default();
    let spec = DdnetSpec {
        width: args.width.unwrap_or(d.width),
        depth: args.depth.unwrap_or(d.depth),
        ..d
    };
    let (params, report) = train_demosaic(spec, &data, &train_cfg(&args, seed))?;
    let losses = (report.initial().unwrap_or(f64::NAN), report.last().unwrap_or(f64::NAN));
    save_ddnet(&args.out, &params, &train_info(&args, seed, losses))?;
    println!("loss {:.6} -> {:.6}; wrote {}", losses.0, losses.1, args.out.display());
    Ok(())
}

fn train_denoiser_cmd(args: TrainArgs, seed: u64) -> Res<()> {
    let data = training_set(&args, SyntheticKind::TexturePan, seed)?;
    let init = match (args.width, args.depth) {
        (None, None) => CnnDenoiser::<f64>::new(seed),
        (w, d) => CnnDenoiser::with_shape(w.unwrap_or(snapsci::priors::cnn::CNN_WIDTH), d.unwrap_or(snapsci::priors::cnn::CNN_DEPTH), seed),
    };
    let (params, report) = train_denoiser(init.params, &data, &args.sigmas, &train_cfg(&args, seed))?;
    let losses = (report.initial().unwrap_or(f64::NAN), report.last().unwrap_or(f64::NAN));
    let mut info = train_info(&args, seed, losses);
    info.extra.insert("sigmas".into(), json!(args.sigmas));
    save_prior_params(&args.out, &params, &info)?;
    println!("loss {:.6} -> {:.6}; wrote {}", losses.0, losses.1, args.out.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs, seed: u64) -> Res<()> {
    let recon: Cube = load_cube(&args.recon)?;
    let truth: Cube = load_cube(&args.truth)?;
    let r = EvalReport::score(&recon, &truth, &args.recon.display().to_string(), "external", "")?;
    let v = json!({"command": "evaluate", "seed": seed, "report": r});
    match &args.out {
        Some(p) => write_json(p, &v)?,
        None => println!("{}", serde_json::to_string_pretty(&v).expect("json serializes")),
    }
    Ok(())
}

fn benchmark(args: BenchmarkArgs, seed: Option<u64>) -> Res<()> {
    let run = build_config(&args.solve, seed)?;
    let out_dir = PathBuf::from(&run.output_dir);
    let cfg = BenchmarkConfig {
        frames: args.frames,
        max_measurements: args.max_measurements,
        mask_seed: run.seed,
        run,
        ..Default::default()
    };
    let report = match &args.dataset {
        Some(d) => benchmark_run(d, &cfg)?,
        None => {
            let kind = SyntheticKind::parse(&args.kind)?;
            let scenes = (0..args.scenes as u64)
                .map(|i| {
                    let name = format!("{}_{i}", kind.name());
                    gen_synthetic(kind, args.size, args.size, args.frames, cfg.run.seed.wrapping_add(i)).map(|c| (name, c))
                })
                .collect::<Res<Vec<_>>>()?;
            benchmark_scenes(scenes, None, &cfg)?
        }
    };
    write_text(&out_dir.join("benchmark.csv"), &report.to_csv())?;
    write_text(&out_dir.join("benchmark.txt"), &report.table())?;
    write_json(
        &out_dir.join("run.json"),
        &json!({
            "command": "benchmark",
            "config": serde_json::to_value(&cfg.run).expect("config serializes"),
            "config_digest": cfg.run.digest(),
            "seed": cfg.run.seed,
            "B": cfg.frames,
            "report": report,
        }),
    )?;
    print!("{}", report.table());
    Ok(())
}

fn sweep(args: SweepArgs, seed: Option<u64>) -> Res<()> {
    let base = build_config(&args.solve, seed)?;
    let inputs = load_inputs(&base, &args.measurement, &args.masks, &args.truth)?;
    let out_dir = PathBuf::from(&base.output_dir);
    let rhos = if args.rhos.is_empty() { vec![base.rho] } else { args.rhos.clone() };
    let taus = if args.taus.is_empty() { vec![base.tau] } else { args.taus.clone() };
    let mut combined = String::from("schedule,rho,tau,iter,sigma,fidelity,psnr\n");
    let mut runs = Vec::new();
    for s in &args.schedules {
        for &rho in &rhos {
            for &tau in &taus {
                let cfg = RunConfig {
                    schedule: ScheduleSpec::Named(s.clone()),
                    rho,
                    tau,
                    ..base.clone()
                };
                let out = pipeline::solve(&cfg, &inputs.y, &inputs.masks, inputs.cfa.as_ref(), inputs.truth.as_ref())?;
                let name = format!("trace_{s}_rho{rho}_tau{tau}.csv");
                write_text(&out_dir.join(&name), &out.trace.to_csv())?;
                for r in &out.trace.rows {
                    let p = r.psnr.map(|p| format!("{p:.4}")).unwrap_or_default();
                    combined += &format!("{s},{rho},{tau},{},{},{:.6e},{p}\n", r.iter, r.sigma, r.fidelity);
                }
                runs.push(json!({"trace": name, "config_digest": cfg.digest()}));
            }
        }
    }
    write_text(&out_dir.join("psnr_vs_iter.csv"), &combined)?;
    write_json(
        &out_dir.join("run.json"),
        &json!({
            "command": "sweep",
            "config": serde_json::to_value(&base).expect("config serializes"),
            "config_digest": base.digest(),
            "seed": base.seed,
            "runs": runs,
        }),
    )?;
    println!("wrote {} traces to {}", runs.len(), out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Res<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Simulate(a) => simulate(a, seed.unwrap_or(0)),
        Command::Reconstruct(a) => reconstruct(a, seed),
        Command::TrainDemosaic(a) => train_demosaic_cmd(a, seed.unwrap_or(0)),
        Command::TrainDenoiser(a) => train_denoiser_cmd(a, seed.unwrap_or(0)),
        Command::Evaluate(a) => evaluate(a, seed.unwrap_or(0)),
        Command::Benchmark(a) => benchmark(a, seed),
        Command::Sweep(a) => sweep(a, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.code());
            ExitCode::from(2)
        }
    }
}
