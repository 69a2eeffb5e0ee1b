use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc::sync_channel;
use std::thread;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use bitvo::eval::{align_umeyama_sim3, associate, compute_ate, EvalError, Trajectory, DEFAULT_MAX_DT};
use bitvo::frame::FeatureFrame;
use bitvo::geometry::euler_zyx_degrees;
use bitvo::io::{
    open_dataset, read_tum, write_tum, ConfigError, DatasetError, DatasetHeader, DatasetWriter, RunConfig,
    TrajectoryFileError,
};
use bitvo::sim::{default_scene, SequenceGenerator, SimError, TrajectoryKind, TrajectoryModel};
use bitvo::vo::VisualOdometry;

const EXIT_FAILURE: u8 = 1;
const EXIT_INIT_FAILED: u8 = 3;
/// Frames buffered between the dataset reader and the pipeline.
const QUEUE_CAPACITY: usize = 4;

#[derive(Parser)]
#[command(name = "bitvo", version, about = "Visual odometry on binary edge bitmaps and corner events")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset and its ground-truth trajectory.
    Simulate(SimulateArgs),
    /// Run odometry over a dataset and write the estimated trajectory.
    Run(RunArgs),
    /// Absolute trajectory error of an estimate against ground truth.
    Eval(EvalArgs),
    /// Aligned estimate and ground truth as CSV for plotting.
    Plot(PlotArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// circle, shake, jump or long; overrides the configuration.
    #[arg(long)]
    trajectory: Option<TrajectoryKind>,
    /// Seconds; overrides the configuration.
    #[arg(long)]
    duration: Option<f64>,
    /// Dataset output path.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth TUM output path.
    #[arg(long)]
    gt: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    dataset: PathBuf,
    /// Estimated TUM trajectory output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    est: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Name printed in the report; defaults to the estimate's file stem.
    #[arg(long)]
    sequence: Option<String>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    est: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// CSV output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryFileError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("initialization failed: no map after {0} frames")]
    InitializationFailed(u64),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::InitializationFailed(_) => EXIT_INIT_FAILED,
            _ => EXIT_FAILURE,
        }
    }
}

fn load_config(arg: &ConfigArg) -> Result<RunConfig, CliError> {
    Ok(match &arg.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let kind = args.trajectory.unwrap_or(cfg.sim.trajectory);
    let duration = args.duration.unwrap_or(cfg.sim.duration_s);
    let scene = default_scene(args.seed);
    let model = TrajectoryModel::default_for(kind);
    let mut generator = SequenceGenerator::new(&scene, model, cfg.camera, cfg.noise, cfg.sim.fps, duration, args.seed)?;
    write_tum(&args.gt, &generator.ground_truth_trajectory())?;

    let header = DatasetHeader {
        frame_count: generator.frame_count() as u32,
        fps: cfg.sim.fps,
    };
    let file = std::fs::File::create(&args.out).map_err(|source| CliError::Write {
        path: args.out.display().to_string(),
        source,
    })?;
    let mut writer = DatasetWriter::new(std::io::BufWriter::new(file), header)?;
    let (mut sum, mut lo, mut hi) = (0.0, f64::INFINITY, 0.0f64);
    let mut frames = 0usize;
    for frame in generator.by_ref() {
        let d = frame.edges.density();
        sum += d;
        lo = lo.min(d);
        hi = hi.max(d);
        frames += 1;
        writer.write_frame(&frame)?;
    }
    writer.finish()?;
    println!("trajectory = {kind}");
    println!("frames = {frames}");
    if frames > 0 {
        println!("edge_density_mean = {:.4}", sum / frames as f64);
        println!("edge_density_min = {lo:.4}");
        println!("edge_density_max = {hi:.4}");
    }
    Ok(())
}

fn run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let mut reader = open_dataset(&args.dataset)?;
    let (tx, rx) = sync_channel::<Result<FeatureFrame, DatasetError>>(QUEUE_CAPACITY);
    let producer = thread::spawn(move || {
        for item in reader.by_ref() {
            let stop = item.is_err();
            if tx.send(item).is_err() || stop {
                break;
            }
        }
    });

    let mut vo = VisualOdometry::new(cfg.camera, cfg.vo);
    let mut estimate = Trajectory::new();
    let mut times_ms = Vec::new();
    let mut result: Result<(), CliError> = Ok(());
    for item in rx {
        let frame = match item {
            Ok(f) => f,
            Err(e) => {
                result = Err(e.into());
                break;
            }
        };
        let start = Instant::now();
        let out = vo.process(&frame);
        times_ms.push(start.elapsed().as_secs_f64() * 1e3);
        if let Some(pose) = out.pose {
            if let Err(e) = estimate.push(frame.timestamp_secs(), pose.inverse()) {
                result = Err(e.into());
                break;
            }
        }
    }
    producer.join().expect("dataset reader thread panicked");
    result?;

    let stats = vo.stats();
    let Some(init_frame) = stats.initialized_at else {
        return Err(CliError::InitializationFailed(stats.frames));
    };
    write_tum(&args.out, &estimate)?;

    let total_ms: f64 = times_ms.iter().sum();
    let mut sorted = times_ms.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    println!("frames = {}", stats.frames);
    println!("initialized_at_frame = {init_frame}");
    println!("poses_written = {}", estimate.len());
    println!("mean_ms = {:.4}", total_ms / n as f64);
    println!("median_ms = {median:.4}");
    println!("fps = {:.1}", n as f64 / (total_ms * 1e-3));
    println!("keyframes = {}", stats.keyframes);
    println!("map_points = {}", vo.map().map_or(0, |m| m.point_count()));
    println!("tracking_lost = {}", stats.lost_frames);
    Ok(())
}

fn aligned_pairs(est: &Path, gt: &Path) -> Result<(Vec<bitvo::eval::PosePair>, bitvo::eval::SimilarityAlignment), CliError> {
    let est = read_tum(est)?;
    let gt = read_tum(gt)?;
    let pairs = associate(&est, &gt, DEFAULT_MAX_DT)?;
    let alignment = align_umeyama_sim3(&pairs)?;
    Ok((pairs, alignment))
}

fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let (pairs, alignment) = aligned_pairs(&args.est, &args.gt)?;
    let ate = compute_ate(&pairs, &alignment);
    let sequence = args
        .sequence
        .clone()
        .or_else(|| args.est.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_default();
    println!("sequence = {sequence}");
    println!("length_m = {:.3}", ate.length);
    println!("rmse_m = {:.3}", ate.rmse);
    println!("median_m = {:.3}", ate.median);
    Ok(())
}

fn plot(args: &PlotArgs) -> Result<(), CliError> {
    let (pairs, alignment) = aligned_pairs(&args.est, &args.gt)?;
    let mut csv = String::from("t,x_est,y_est,z_est,x_gt,y_gt,z_gt,roll_est,pitch_est,yaw_est,roll_gt,pitch_gt,yaw_gt\n");
    for p in &pairs {
        let est = alignment.apply_pose(&p.estimate);
        let (re, pe, ye) = euler_zyx_degrees(&est.rotation);
        let (rg, pg, yg) = euler_zyx_degrees(&p.ground_truth.rotation);
        let (a, b) = (est.translation, p.ground_truth.translation);
        csv.push_str(&format!(
            "{:.9},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
            p.timestamp, a.x, a.y, a.z, b.x, b.y, b.z, re, pe, ye, rg, pg, yg
        ));
    }
    write_text(&args.out, &csv)?;
    println!("rows = {}", pairs.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Plot(a) => plot(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
