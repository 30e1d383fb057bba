//! `dare-reg`: joint registration of 3D point sets with density-adaptive
//! observation weights, plus the supporting tooling (weight export,
//! re-sampling, synthetic scan generation, batch experiments).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};

use dare_core::error::Error;
use dare_core::evalkit::{run_experiment, ExperimentConfig, MethodConfig};
use dare_core::geom::PointCloud;
use dare_core::io::{
    read_point_cloud, write_point_cloud, CloudFormat, GroundTruthFile, TransformFile,
};
use dare_core::mixture::{register, RegistrationConfig};
use dare_core::resample::ResampleSpec;
use dare_core::synth::{make_multi, make_room_scene, PerturbSpec, ScanSpec, Thinning};
use dare_core::weights::{compute_weights, regularize_weights, WeightMethod};

#[derive(Parser)]
#[command(
    name = "dare-reg",
    version,
    about = "Density-adaptive probabilistic registration of 3D point sets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register two or more point clouds into a common frame
    Register(RegisterArgs),
    /// Compute observation weights and export them as ASCII, one per line
    Weights(WeightsArgs),
    /// Re-sample a point cloud (voxel grid, FPS, or GSS)
    Resample(ResampleArgs),
    /// Generate synthetic scans of an indoor scene with ground truth
    Synth(SynthArgs),
    /// Run a batch registration experiment on synthetic pairs
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Pairwise,
    Joint,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightsArg {
    Uniform,
    Empirical,
    EmpiricalFull,
    Sensor,
}

impl From<WeightsArg> for WeightMethod {
    fn from(w: WeightsArg) -> Self {
        match w {
            WeightsArg::Uniform => WeightMethod::Uniform,
            WeightsArg::Empirical => WeightMethod::Empirical,
            WeightsArg::EmpiricalFull => WeightMethod::EmpiricalFull,
            WeightsArg::Sensor => WeightMethod::Sensor,
        }
    }
}

#[derive(Args)]
struct RegisterArgs {
    /// Input point clouds (PLY or XYZ), two or more
    #[arg(required = true, num_args = 2..)]
    inputs: Vec<PathBuf>,
    /// Pairwise defaults to K=200; joint raises the default to K=300
    #[arg(long, value_enum, default_value = "pairwise")]
    mode: ModeArg,
    /// Observation weighting method
    #[arg(long, value_enum, default_value = "empirical")]
    weights: WeightsArg,
    /// Mixture components [default: 200 pairwise, 300 joint]
    #[arg(long)]
    k: Option<usize>,
    /// EM iterations
    #[arg(long, default_value_t = 50)]
    iters: usize,
    /// Sensor-model incidence regularization
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    /// Neighborhood size L for weights and their median filter
    #[arg(long, default_value_t = 10)]
    neighbors: usize,
    /// Weight clipping factor (times the mean weight)
    #[arg(long, default_value_t = 8.0)]
    clip: f64,
    /// Prior mass of the uniform outlier component
    #[arg(long, default_value_t = 0.005)]
    outlier_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output transform file (JSON)
    #[arg(long, default_value = "transforms.json")]
    out: PathBuf,
    /// Re-sample inputs first, e.g. voxel:0.25, fps:0.05, gss:0.1:100.
    /// Only valid with --weights uniform (the re-sampling baselines).
    #[arg(long)]
    resample: Option<String>,
}

#[derive(Args)]
struct WeightsArgs {
    input: PathBuf,
    #[arg(long, value_enum, default_value = "empirical")]
    method: WeightsArg,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 10)]
    neighbors: usize,
    #[arg(long, default_value_t = 8.0)]
    clip: f64,
    /// Skip the median filter and clipping
    #[arg(long)]
    raw: bool,
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ResampleMethodArg {
    Voxel,
    Fps,
    Gss,
}

#[derive(Args)]
struct ResampleArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long, value_enum)]
    method: ResampleMethodArg,
    /// Voxel side length in meters (voxel method)
    #[arg(long)]
    voxel: Option<f64>,
    /// Fraction of points to keep (fps / gss methods)
    #[arg(long)]
    rate: Option<f64>,
    /// Candidate pool per GSS step
    #[arg(long, default_value_t = 100)]
    pool: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write ASCII PLY instead of binary
    #[arg(long)]
    ascii: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene kind (only "room" is available)
    #[arg(long, default_value = "room")]
    scene: String,
    #[arg(long, default_value_t = 2)]
    sensors: usize,
    /// Uniform surface samples per scan before thinning
    #[arg(long, default_value_t = 10_000)]
    points: usize,
    /// Maximum ground-truth rotation angle in degrees
    #[arg(long, default_value_t = 90.0)]
    angle_max: f64,
    /// Ground-truth translation standard deviation in meters
    #[arg(long, default_value_t = 1.0)]
    tsigma: f64,
    /// Thinning reference distance d0 in meters
    #[arg(long, default_value_t = 1.5)]
    d0: f64,
    /// Thin by distance only, without the incidence factor
    #[arg(long)]
    distance_only: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Write ASCII PLY instead of binary
    #[arg(long)]
    ascii: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Methods to compare; entries may carry a re-sampling suffix like
    /// uniform:fps=0.05 or uniform:voxel=0.25
    #[arg(long, default_value = "uniform,empirical")]
    methods: String,
    #[arg(long, default_value_t = 10_000)]
    points: usize,
    #[arg(long, default_value_t = 200)]
    k: usize,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 90.0)]
    angle_max: f64,
    #[arg(long, default_value_t = 1.0)]
    tsigma: f64,
    #[arg(long, default_value_t = 1.5)]
    d0: f64,
    /// Include the incidence factor in the thinning model
    #[arg(long)]
    incidence: bool,
    /// Record wall-clock runtimes (makes the CSV non-reproducible)
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Json(_)
        | Error::InvalidConfig(_)
        | Error::InvalidCloud(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Register(args) => cmd_register(args),
        Command::Weights(args) => cmd_weights(args),
        Command::Resample(args) => cmd_resample(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Experiment(args) => cmd_experiment(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// `DARE_THREADS` caps worker threads; 0 or unset picks the default.
fn init_thread_pool() {
    if let Ok(v) = std::env::var("DARE_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn parse_resample_spec(spec: &str) -> Result<ResampleSpec, Error> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::InvalidConfig(format!("invalid resample spec {spec:?}"));
    match parts.as_slice() {
        ["voxel", size] => Ok(ResampleSpec::Voxel {
            size: size.parse().map_err(|_| bad())?,
        }),
        ["fps", rate] => Ok(ResampleSpec::Fps {
            rate: rate.parse().map_err(|_| bad())?,
        }),
        ["gss", rate] => Ok(ResampleSpec::Gss {
            rate: rate.parse().map_err(|_| bad())?,
            candidate_pool: 100,
        }),
        ["gss", rate, pool] => Ok(ResampleSpec::Gss {
            rate: rate.parse().map_err(|_| bad())?,
            candidate_pool: pool.parse().map_err(|_| bad())?,
        }),
        _ => Err(bad()),
    }
}

fn cmd_register(args: RegisterArgs) -> Result<(), Error> {
    let components = args.k.unwrap_or(match args.mode {
        ModeArg::Pairwise => 200,
        ModeArg::Joint => 300,
    });
    let cfg = RegistrationConfig {
        components,
        iterations: args.iters,
        outlier_ratio: args.outlier_ratio,
        gamma: args.gamma,
        neighbors: args.neighbors,
        clip_factor: args.clip,
        weight_method: args.weights.into(),
        seed: args.seed,
        variance_floor: 1e-6,
        convergence_tol: None,
    };

    let mut clouds = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        clouds.push(read_point_cloud(path)?);
    }
    if let Some(spec_str) = &args.resample {
        if cfg.weight_method != WeightMethod::Uniform {
            return Err(Error::InvalidConfig(
                "--resample applies to the uniform-weight baseline only".into(),
            ));
        }
        let spec = parse_resample_spec(spec_str)?;
        clouds = clouds
            .iter()
            .enumerate()
            .map(|(i, c)| spec.apply(c, args.seed.wrapping_add(i as u64)))
            .collect::<Result<_, _>>()?;
    }

    let result = register(&clouds, &cfg, None)?;
    TransformFile::from_result(&result, &cfg).write(&args.out)?;
    eprintln!(
        "registered {} sets in {} iterations -> {}",
        clouds.len(),
        result.converged_iterations,
        args.out.display()
    );
    Ok(())
}

fn cmd_weights(args: WeightsArgs) -> Result<(), Error> {
    let cloud = read_point_cloud(&args.input)?;
    let raw = compute_weights(&cloud, args.method.into(), args.gamma, args.neighbors)?;
    let weights = if args.raw {
        raw
    } else {
        regularize_weights(&raw, &cloud, args.neighbors, args.clip)?
    };
    let mut text = String::with_capacity(weights.len() * 12);
    for v in &weights.values {
        text.push_str(&format!("{v}\n"));
    }
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_resample(args: ResampleArgs) -> Result<(), Error> {
    let spec = match (args.method, args.voxel, args.rate) {
        (ResampleMethodArg::Voxel, Some(size), None) => ResampleSpec::Voxel { size },
        (ResampleMethodArg::Fps, None, Some(rate)) => ResampleSpec::Fps { rate },
        (ResampleMethodArg::Gss, None, Some(rate)) => ResampleSpec::Gss {
            rate,
            candidate_pool: args.pool,
        },
        (ResampleMethodArg::Voxel, _, _) => {
            return Err(Error::InvalidConfig(
                "voxel method takes --voxel <meters> (and no --rate)".into(),
            ))
        }
        _ => {
            return Err(Error::InvalidConfig(
                "fps/gss methods take --rate <fraction> (and no --voxel)".into(),
            ))
        }
    };
    let cloud = read_point_cloud(&args.input)?;
    let out = spec.apply(&cloud, args.seed)?;
    let format = output_format(&args.output, args.ascii);
    write_point_cloud(&out, &args.output, format)?;
    eprintln!("{} -> {} points", cloud.len(), out.len());
    Ok(())
}

fn output_format(path: &Path, ascii: bool) -> CloudFormat {
    let is_xyz = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("xyz") || e.eq_ignore_ascii_case("txt"))
        .unwrap_or(false);
    if is_xyz {
        CloudFormat::Xyz
    } else if ascii {
        CloudFormat::PlyAscii
    } else {
        CloudFormat::PlyBinary
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    if args.scene != "room" {
        return Err(Error::InvalidConfig(format!(
            "unknown scene {:?}; available: room",
            args.scene
        )));
    }
    if args.sensors < 1 {
        return Err(Error::InvalidConfig("need at least one sensor".into()));
    }
    let mesh = make_room_scene(args.seed);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed ^ 0x5E2508);
    let thinning = Thinning::InverseSquare {
        incidence: !args.distance_only,
    };
    let specs: Vec<ScanSpec> = (0..args.sensors)
        .map(|_| ScanSpec {
            sensor_position: nalgebra_sensor(&mut rng),
            n_points: args.points,
            min_distance: args.d0,
            thinning,
        })
        .collect();
    let perturb = PerturbSpec {
        max_angle_deg: args.angle_max,
        translation_sigma: args.tsigma,
    };
    let (clouds, truths) = make_multi(&mesh, &specs, &perturb, args.seed)?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.display().to_string(),
        source: e,
    })?;
    let format = if args.ascii {
        CloudFormat::PlyAscii
    } else {
        CloudFormat::PlyBinary
    };
    for (i, cloud) in clouds.iter().enumerate() {
        let path = args.out_dir.join(format!("scan_{i}.ply"));
        write_point_cloud(cloud, &path, format)?;
        eprintln!("wrote {} ({} points)", path.display(), cloud.len());
    }
    let gt_path = args.out_dir.join("gt.json");
    GroundTruthFile::from_transforms(&truths).write(&gt_path)?;
    eprintln!("wrote {}", gt_path.display());
    Ok(())
}

fn nalgebra_sensor(rng: &mut rand_chacha::ChaCha8Rng) -> dare_core::geom::Point3 {
    dare_core::geom::Point3::new(
        rng.random_range(1.0..dare_core::synth::ROOM_WIDTH - 1.0),
        rng.random_range(1.0..dare_core::synth::ROOM_DEPTH - 1.0),
        rng.random_range(1.0..2.0),
    )
}

fn parse_method_entry(entry: &str, k: usize, iters: usize) -> Result<MethodConfig, Error> {
    let (name, resample) = match entry.split_once(':') {
        None => (entry, None),
        Some((base, spec)) => {
            let spec = spec.replace('=', ":");
            (base, Some(parse_resample_spec(&format!("{spec}"))?))
        }
    };
    let weight_method = match name {
        "uniform" => WeightMethod::Uniform,
        "empirical" => WeightMethod::Empirical,
        "empirical-full" => WeightMethod::EmpiricalFull,
        "sensor" => WeightMethod::Sensor,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown method {other:?}; available: uniform, empirical, empirical-full, sensor"
            )))
        }
    };
    Ok(MethodConfig {
        name: entry.to_string(),
        registration: RegistrationConfig {
            components: k,
            iterations: iters,
            weight_method,
            ..RegistrationConfig::pairwise()
        },
        resample,
    })
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), Error> {
    let methods: Vec<MethodConfig> = args
        .methods
        .split(',')
        .map(|entry| parse_method_entry(entry.trim(), args.k, args.iters))
        .collect::<Result<_, _>>()?;
    let gen = ExperimentConfig {
        n_trials: args.trials,
        seed: args.seed,
        points_per_scan: args.points,
        min_distance: args.d0,
        incidence: args.incidence,
        max_angle_deg: args.angle_max,
        translation_sigma: args.tsigma,
        failure_threshold_deg: 4.0,
        measure_runtime: args.timing,
    };
    let out = run_experiment(&gen, &methods)?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.display().to_string(),
        source: e,
    })?;
    let csv_path = args.out_dir.join("trials.csv");
    std::fs::write(&csv_path, out.to_csv()).map_err(|e| Error::Io {
        path: csv_path.display().to_string(),
        source: e,
    })?;
    for summary in &out.summaries {
        let name = summary.method.replace([':', '=', '/'], "_");
        let path = args.out_dir.join(format!("summary_{name}.json"));
        let mut text = serde_json::to_string_pretty(summary).map_err(Error::Json)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        eprintln!(
            "{}: failure {:.1}%, inlier {:.2} +/- {:.2} deg",
            summary.method, summary.failure_rate, summary.mean_inlier_error,
            summary.inlier_error_std
        );
    }
    eprintln!("wrote {}", csv_path.display());
    Ok(())
}
