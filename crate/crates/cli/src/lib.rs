//! Command-line front end for the Doi–Onsager solver: bifurcation tables,
//! multistart solves, bifurcation diagrams, oracle runs and energy scans.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod config;
pub mod output;

pub use config::RunConfig;

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "ONSAGER_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] onsager_core::Error),
    /// A computation finished but missed a bound it is checked against.
    #[error("check failed: {0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "onsager", version, about = "Spectral solver and bifurcation toolkit for the 2D Doi–Onsager equation")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory [default: $ONSAGER_OUT_DIR or ./out]
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate bifurcation points and their criticality.
    Bifurcations(ModelArgs),
    /// Multistart solve at a single λ.
    Solve(SolveArgs),
    /// Trace the trivial branch and the first bifurcated branches.
    Diagram(DiagramArgs),
    /// Run every oracle.
    Verify(VerifyArgs),
    /// Free energy along the points of a branch file.
    Energy(EnergyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Onsager,
    File,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    /// Kernel file with `mean` + `coeffs` or `samples`.
    #[arg(long, value_name = "FILE")]
    pub kernel_file: Option<PathBuf>,
    /// Onsager truncation order [default: 2 * modes]
    #[arg(long)]
    pub order: Option<usize>,
    /// Number of retained cosine modes M.
    #[arg(long)]
    pub modes: Option<usize>,
    /// Quadrature grid size N [default: max(256, 8M)]
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub starts: Option<usize>,
    /// H¹ radius of the random initial guesses.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DiagramArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// Number of bifurcation points to branch from (two signs each).
    #[arg(long)]
    pub branches: Option<usize>,
    #[arg(long)]
    pub ds: Option<f64>,
    /// Onset amplitude used for branch switching.
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EnergyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Branch file written by `diagram`.
    #[arg(long, value_name = "FILE")]
    pub branch_file: Option<PathBuf>,
}

impl ModelArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(k) = self.kernel {
            cfg.kernel.kind = match k {
                KernelArg::Onsager => config::KernelKind::Onsager,
                KernelArg::File => config::KernelKind::File,
            };
        }
        if let Some(f) = &self.kernel_file {
            cfg.kernel.file = Some(f.clone());
            if self.kernel.is_none() {
                cfg.kernel.kind = config::KernelKind::File;
            }
        }
        if self.order.is_some() {
            cfg.kernel.order = self.order;
        }
        if let Some(m) = self.modes {
            cfg.discretization.modes = m;
        }
        if self.grid.is_some() {
            cfg.discretization.grid = self.grid;
        }
    }
}

impl Cli {
    /// Merges defaults, the config file, the environment and the flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        } else if cfg.output_dir.is_none() {
            cfg.output_dir = Some(
                std::env::var_os(OUT_DIR_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("out")),
            );
        }
        match &self.command {
            Command::Bifurcations(m) => m.apply(&mut cfg),
            Command::Solve(a) => {
                a.model.apply(&mut cfg);
                let s = &mut cfg.solve;
                s.lambda = a.lambda.unwrap_or(s.lambda);
                s.starts = a.starts.unwrap_or(s.starts);
                s.radius = a.radius.unwrap_or(s.radius);
                s.seed = a.seed.unwrap_or(s.seed);
                s.tol = a.tol.unwrap_or(s.tol);
            }
            Command::Diagram(a) => {
                a.model.apply(&mut cfg);
                let d = &mut cfg.diagram;
                d.lambda_max = a.lambda_max.unwrap_or(d.lambda_max);
                d.branches = a.branches.unwrap_or(d.branches);
                d.ds = a.ds.unwrap_or(d.ds);
                d.t0 = a.t0.unwrap_or(d.t0);
                d.tol = a.tol.unwrap_or(d.tol);
            }
            Command::Verify(a) => {
                cfg.verify.seed = a.seed.unwrap_or(cfg.verify.seed);
            }
            Command::Energy(a) => {
                a.model.apply(&mut cfg);
                if a.branch_file.is_some() {
                    cfg.energy.branch_file = a.branch_file.clone();
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match cli.resolve().and_then(|cfg| commands::run(&cli.command, &cfg)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("onsager: {e}");
            e.exit_code()
        }
    }
}
