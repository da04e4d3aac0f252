mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Exit codes: 0 success, 1 usage or parse error, 2 invalid input data,
/// 3 runtime abort.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Input(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<shellcond::Error> for Failure {
    fn from(e: shellcond::Error) -> Self {
        use shellcond::Error as E;
        let msg = e.to_string();
        match e {
            E::Expr(_) | E::InvalidArgument(_) => Failure::Usage(msg),
            E::Mesh(_) | E::Json(_) | E::Io(_) | E::EmptyLevelSet | E::ShellSelfIntersection(_) => {
                Failure::Input(msg)
            }
            E::Solve(_) | E::Quadrature { .. } => Failure::Runtime(msg),
        }
    }
}

#[derive(Parser, Debug, Clone, Serialize)]
#[command(name = "shellcond", version, about = "Asymptotic conductivity of periodic shell lattices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a periodic surface mesh.
    Gen(GenArgs),
    /// Evaluate the ADC matrix of a mesh.
    Eval(EvalArgs),
    /// Optimize a mesh against an ADC objective.
    Optimize(OptimizeArgs),
    /// Run a convergence study or a preconditioner sweep.
    Study(StudyArgs),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceType {
    Plane,
    Cylinder,
    SchwarzP,
    Gyroid,
    Diamond,
    Iwp,
    Revolve,
    Perturb,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GenArgs {
    #[arg(long = "type", value_enum)]
    pub kind: SurfaceType,
    /// Grid resolution; ignored by `perturb`.
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Radius profile R(x) for `revolve`, e.g. "(2+cos(pi*x))/4".
    #[arg(long)]
    pub profile: Option<String>,
    /// Cylinder radius.
    #[arg(long, default_value_t = 0.3)]
    pub radius: f64,
    /// Level value for implicit surfaces.
    #[arg(long, default_value_t = 0.0)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.3)]
    pub strength: f64,
    /// Largest wavevector norm of the perturbation field.
    #[arg(long, default_value_t = 2)]
    pub cutoff: u32,
    /// Input mesh for `perturb`.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Remesh the result to this target edge length.
    #[arg(long)]
    pub remesh_length: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of directions, spread over the unit sphere, at which to report
    /// directional values and bounds.
    #[arg(long, default_value_t = 0)]
    pub directions: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SenseArg {
    Max,
    Min,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OptimizeArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// Objective, e.g. "k11 + aac", "k33 + aac - 4*isogap", "target(t.json)".
    #[arg(long)]
    pub objective: String,
    /// Override the objective's default sense.
    #[arg(long, value_enum)]
    pub sense: Option<SenseArg>,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    pub precondition: f64,
    #[arg(long, default_value_t = 0.1)]
    pub fairing: f64,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1.0)]
    pub initial_step: f64,
    /// Remesh to this edge length every iteration.
    #[arg(long)]
    pub remesh_length: Option<f64>,
    /// Neck radius below which handles are cut.
    #[arg(long)]
    pub surgery_threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Iteration log, one JSON record per line.
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    HConv,
    EpsOrder,
    PreconSweep,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StudyArgs {
    #[arg(long, value_enum)]
    pub kind: StudyKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    /// Radius profile for `h-conv` and `eps-order`.
    #[arg(long, default_value = "(2+cos(pi*x))/4")]
    pub profile: String,
    /// Tube resolutions for `h-conv`.
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128,256")]
    pub resolutions: Vec<usize>,
    /// Half-thicknesses for `eps-order`.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025,0.0125")]
    pub eps: Vec<f64>,
    /// Axial grid divisions for `eps-order`.
    #[arg(long, default_value_t = 4096)]
    pub n: usize,
    /// Normal grid divisions for `eps-order`.
    #[arg(long, default_value_t = 16)]
    pub m: usize,
    /// Input mesh for `precon-sweep`.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long, default_value = "k11")]
    pub objective: String,
    /// Screening strengths for `precon-sweep`.
    #[arg(long, value_delimiter = ',', default_value = "0,1,10")]
    pub c: Vec<f64>,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 16.0)]
    pub initial_step: f64,
    #[arg(long)]
    pub remesh_length: Option<f64>,
}

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "SHELLCOND_THREADS";

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = configure_threads().and_then(|()| commands::run(cli, &args[1..]));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
