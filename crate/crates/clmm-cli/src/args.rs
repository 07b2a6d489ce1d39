use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clmm_core::UnreachedPolicy;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "clmm",
    version,
    about = "Simulate, fit, and evaluate closed-loop Markov-modulated Markov chains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Sample one trajectory from a model, or trips from a scenario
    Simulate(SimulateArgs),
    /// Fit a model to trajectory data by EM with random restarts
    Estimate(EstimateArgs),
    /// Score an estimated model against the model that generated the data
    Evaluate(EvaluateArgs),
    /// Export the hidden Markov model with the same visible law
    Lift(LiftArgs),
    /// Re-run one of the bundled experiments and emit its tables
    Repro(ReproArgs),
}

#[derive(Args, Serialize)]
pub struct SimulateArgs {
    /// Model JSON file; samples one trajectory of --steps transitions
    #[arg(long)]
    pub model: Option<PathBuf>,

    /// Scenario JSON file; samples --trips origin-to-origin trips
    #[arg(long)]
    pub scenario: Option<PathBuf>,

    /// Number of transitions (the output line holds steps + 1 states)
    #[arg(long)]
    pub steps: Option<usize>,

    /// Number of trips (one output line per trip)
    #[arg(long)]
    pub trips: Option<usize>,

    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output trajectory file; the run manifest lands next to it
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Serialize)]
pub struct EstimateArgs {
    /// Trajectory data file: one line fits a single long trajectory,
    /// several lines fit independent trajectories jointly
    #[arg(long)]
    pub data: PathBuf,

    /// Number of visible states
    #[arg(long = "R")]
    pub num_visible: usize,

    /// Number of latent states
    #[arg(long = "S")]
    pub num_latent: usize,

    /// Visible-state partition controlling the feedback loop, e.g.
    /// "8,9|1-7" (1-based, blocks separated by '|'); default one block
    #[arg(long)]
    pub gamma: Option<String>,

    /// Known page held fixed during fitting, as AR:K=file.json or
    /// AS:K=file.json with K 1-based and the file a JSON array of rows;
    /// repeatable
    #[arg(long)]
    pub known: Vec<String>,

    /// Independent random starts; the best final log-likelihood wins
    #[arg(long, default_value_t = 5)]
    pub starts: usize,

    /// Iteration cap per start
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,

    /// Stop once the log-likelihood improves by less than this
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,

    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// What to do with states the data never leaves from: error out, keep
    /// the current rows, or reset them to uniform. Defaults to error for a
    /// single trajectory and keep for several.
    #[arg(long, value_enum)]
    pub unreached: Option<UnreachedChoice>,

    /// Output model file; the fitting report and manifest land next to it
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnreachedChoice {
    Error,
    Keep,
    Uniform,
}

impl From<UnreachedChoice> for UnreachedPolicy {
    fn from(c: UnreachedChoice) -> Self {
        match c {
            UnreachedChoice::Error => UnreachedPolicy::Error,
            UnreachedChoice::Keep => UnreachedPolicy::KeepRow,
            UnreachedChoice::Uniform => UnreachedPolicy::Uniform,
        }
    }
}

#[derive(Args, Serialize)]
pub struct EvaluateArgs {
    /// Estimated model JSON file
    #[arg(long)]
    pub est: PathBuf,

    /// Ground-truth model JSON file
    #[arg(long)]
    pub truth: PathBuf,

    /// Trajectory file for the log-likelihood comparison
    #[arg(long)]
    pub holdout: PathBuf,

    /// Read the engagement probability from the stationary distribution of
    /// one latent page: "PAGE,STATE" (1-based)
    #[arg(long, conflicts_with = "pr_initial")]
    pub pr_stationary: Option<String>,

    /// Read the engagement probability from the latent initial
    /// distribution: STATE (1-based)
    #[arg(long)]
    pub pr_initial: Option<usize>,

    /// Output report JSON file
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Serialize)]
pub struct LiftArgs {
    /// Model JSON file
    #[arg(long)]
    pub model: PathBuf,

    /// Check both computations of the log-likelihood of this trajectory
    /// file and fail if they disagree beyond 1e-10 relative
    #[arg(long)]
    pub verify: Option<PathBuf>,

    /// Output HMM JSON file
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Serialize)]
pub struct ReproArgs {
    /// Which experiment to run
    #[arg(long, value_enum)]
    pub experiment: Experiment,

    /// Independent instances (datasets)
    #[arg(long, default_value_t = 20)]
    pub instances: usize,

    /// Trajectory length in transitions; synthetic experiments only
    /// (default 5000)
    #[arg(long)]
    pub steps: Option<usize>,

    /// Trips per dataset; driver experiments only (default 200
    /// concatenated, 80 separate)
    #[arg(long)]
    pub trips: Option<usize>,

    /// Random restarts per fit
    #[arg(long, default_value_t = 3)]
    pub starts: usize,

    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output directory for the CSV tables and manifest
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Fit fully unknown open-loop models to one long trajectory
    SyntheticOpen,
    /// Same with a random two-block feedback partition
    SyntheticClosed,
    /// Open-loop with the second visible page known
    SyntheticKnown,
    /// Trip graph, trips concatenated, switch-on-return feedback model
    DriverConcat,
    /// Trip graph, trips kept as separate trajectories
    DriverMulti,
}
