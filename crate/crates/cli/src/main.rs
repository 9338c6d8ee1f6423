use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use homogbl_cli::config::{CoefficientSpec, RunConfig, Study};
use homogbl_cli::{run_and_summarize, run_config_file, EXIT_ERROR};
use homogbl_core::grid::CoefficientFamily;

#[derive(Parser)]
#[command(
    name = "homogbl",
    version,
    about = "Periodic homogenization and boundary-layer convergence studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the studies selected in a TOML config file.
    Run { config: PathBuf },
    /// Cell problems and the homogenized tensor.
    Cell(Common),
    /// Corrector error sweep over ε (plus the oscillating-data study with --oscillating).
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        oscillating: bool,
    },
    /// Eigenvalue corrector study.
    Spectral(Common),
    /// Unfolding identities and averaging ratios.
    CheckUnfolding(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Identity,
    TrigIsotropic,
    Layered,
    Checkerboard,
}

#[derive(Args)]
struct Common {
    #[arg(long, value_enum, default_value = "trig-isotropic")]
    family: Family,
    #[arg(long, default_value_t = 2.0)]
    a0: f64,
    #[arg(long, default_value_t = 1.0)]
    a1: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 4.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Cell grid resolution of the cell study.
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Fine elements per ε-cell side.
    #[arg(long, default_value_t = 16)]
    k: usize,
    /// Comma-separated ε values, each the reciprocal of an integer.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-10)]
    rel_tol: f64,
    #[arg(long, default_value = "homogbl-out")]
    out: PathBuf,
    #[arg(long)]
    no_cache: bool,
}

impl Common {
    fn config(&self, studies: Vec<Study>) -> RunConfig {
        let family = match self.family {
            Family::Identity => CoefficientFamily::Identity,
            Family::TrigIsotropic => CoefficientFamily::TrigIsotropic {
                a0: self.a0,
                a1: self.a1,
            },
            Family::Layered => CoefficientFamily::Layered {
                alpha: self.alpha,
                beta: self.beta,
            },
            Family::Checkerboard => CoefficientFamily::Checkerboard {
                alpha: self.alpha,
                beta: self.beta,
            },
        };
        let mut cfg = RunConfig::new(CoefficientSpec {
            family,
            scale: self.scale,
        });
        cfg.grid.cell_n = self.n;
        cfg.grid.points_per_cell = self.k;
        if let Some(eps) = &self.eps {
            cfg.grid.eps = eps.clone();
        }
        cfg.solver.rel_tol = self.rel_tol;
        cfg.run.studies = studies;
        cfg.run.output_dir = self.out.clone();
        cfg.run.cache = !self.no_cache;
        cfg
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config } => run_config_file(&config),
        Command::Cell(c) => run_and_summarize(&c.config(vec![Study::Cell])),
        Command::Sweep {
            common,
            oscillating,
        } => {
            let mut studies = vec![Study::Sweep];
            if oscillating {
                studies.push(Study::Oscillating);
            }
            run_and_summarize(&common.config(studies))
        }
        Command::Spectral(c) => run_and_summarize(&c.config(vec![Study::Spectral])),
        Command::CheckUnfolding(c) => run_and_summarize(&c.config(vec![Study::UnfoldingChecks])),
    };
    ExitCode::from(u8::try_from(code).unwrap_or(EXIT_ERROR as u8))
}
