//! `photoxform`: command line front end for pattern/feature training,
//! synthetic scenes, feature extraction and matching.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "photoxform", version, arg_required_else_help = true)]
#[command(about = "Learn lighting patterns and photometric features, then extract and match them")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "PHOTOXFORM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a lumitexel dataset of random points, two views each.
    Synth(SynthArgs),
    /// Train a network (pre-train each branch, then jointly).
    Train(TrainArgs),
    /// Write a light-stage network's patterns as non-negative pairs.
    ExportPatterns(ExportArgs),
    /// Build a synthetic scene and its measurement stacks.
    Scene(SceneArgs),
    /// Turn measurement stacks into feature maps, optionally PCA-reduced.
    Extract(ExtractArgs),
    /// Mutual nearest-neighbour matching against scene ground truth.
    Match(MatchArgs),
    /// Render a feature map as a PNG.
    Viz(VizArgs),
    /// Check analytic gradients of the full network by finite differences.
    Gradcheck(GradcheckArgs),
    /// Final training loss per measurement budget.
    EvalTrend(TrendArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Lightstage,
    Pointlight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    Sphere,
    Cloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputArg {
    Combined,
    Sensitive,
    Insensitive,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `desk`, `full`, or a JSON layout file.
    #[arg(long, default_value = "desk")]
    pub layout: String,
    /// Number of points; the file holds two records per point.
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Lightstage)]
    pub mode: ModeArg,
    /// `Ms,Mi`, or a total that is split between the branches.
    #[arg(long, default_value = "3,5")]
    pub budget: String,
    #[arg(long, default_value_t = 32)]
    pub k: usize,
    /// Iterations per pre-trained branch [default: 20000, 100000 with --paper-scale].
    #[arg(long)]
    pub iters_pre: Option<u64>,
    /// Joint iterations [default: 60000, 300000 with --paper-scale].
    #[arg(long)]
    pub iters_joint: Option<u64>,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Multiplicative measurement noise.
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,
    /// Weight of the last-layer L1 regularizer.
    #[arg(long, default_value_t = photoxform::objective::DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Train from a stored dataset instead of fresh samples.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// 24,576 emitters and the long schedule.
    #[arg(long)]
    pub paper_scale: bool,
    /// Train only the sensitive branch, carrying the whole budget.
    #[arg(long)]
    pub sensitive_only: bool,
    /// Point-light rig JSON [default: 96-light hemisphere].
    #[arg(long)]
    pub rig: Option<PathBuf>,
    /// Keep only this many well-spread rig lights.
    #[arg(long)]
    pub lights: Option<usize>,
    /// Loss curve CSV [default: <out>.curve.csv].
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Save intermediate checkpoints every N iterations of each phase.
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: u64,
    /// Directory for intermediate checkpoints [default: next to --out].
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SceneArgs {
    /// Network whose patterns (or rig) produce the measurements.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, value_enum, default_value_t = ShapeArg::Cloud)]
    pub shape: ShapeArg,
    #[arg(long, default_value_t = 500)]
    pub points: usize,
    /// Turntable stops (of 24) to capture.
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    pub stops: Vec<usize>,
    /// Multiplicative test noise applied to every measurement.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Render a sphere image of this resolution instead of a point scene
    /// (no ground truth).
    #[arg(long)]
    pub image: Option<usize>,
    /// Point-light rig JSON, for point-light networks.
    #[arg(long)]
    pub rig: Option<PathBuf>,
    #[arg(long)]
    pub lights: Option<usize>,
    /// Receives `view_<stop>.mstk` and `scene.json`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Measurement stack; repeat for several views.
    #[arg(long, required = true)]
    pub stack: Vec<PathBuf>,
    /// Feature map per stack, in the same order.
    #[arg(long, required = true)]
    pub out: Vec<PathBuf>,
    /// PCA model: loaded if present, otherwise fitted on these stacks and saved.
    #[arg(long)]
    pub pca: Option<PathBuf>,
    /// Components kept when fitting.
    #[arg(long, default_value_t = photoxform::features::DEFAULT_COMPONENTS)]
    pub dims: usize,
    #[arg(long, default_value_t = photoxform::features::DEFAULT_MAX_SAMPLES)]
    pub pca_samples: usize,
    #[arg(long, value_enum, default_value_t = OutputArg::Combined)]
    pub output: OutputArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Feature map, or a measurement stack for the raw-SSD baseline.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Lowe ratio threshold for the precision metric.
    #[arg(long, default_value_t = photoxform::matching::DEFAULT_RATIO)]
    pub ratio: f64,
    /// Also write every mutual match as CSV.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Project with this model instead of a per-map PCA.
    #[arg(long)]
    pub pca: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Lightstage)]
    pub mode: ModeArg,
    #[arg(long, default_value = "3,5")]
    pub budget: String,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,
    #[arg(long, default_value_t = photoxform::objective::DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Report JSON [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrendArgs {
    #[arg(long, value_delimiter = ',', default_value = "6,8,10")]
    pub budgets: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 32)]
    pub k: usize,
    #[arg(long, default_value_t = 20_000)]
    pub iters_pre: u64,
    #[arg(long, default_value_t = 60_000)]
    pub iters_joint: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.01)]
    pub sigma: f64,
    /// Also train the sensitive-only baseline at each budget.
    #[arg(long)]
    pub sensitive_only: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::ExportPatterns(a) => commands::export_patterns(a),
        Command::Scene(a) => commands::scene(a),
        Command::Extract(a) => commands::extract(a),
        Command::Match(a) => commands::match_maps(a),
        Command::Viz(a) => commands::viz(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::EvalTrend(a) => commands::eval_trend(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(commands::Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
