//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use homogbl_core::corrector::{DataDerivative, SweepConfig};
use homogbl_core::grid::{CoefficientFamily, CoefficientField};
use homogbl_core::solver::{Preconditioner, SolverConfig};
use homogbl_core::unfolding::cells_per_side;
use homogbl_core::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    Cell,
    Sweep,
    Oscillating,
    Spectral,
    UnfoldingChecks,
}

impl Study {
    pub const ALL: [Study; 5] = [
        Study::Cell,
        Study::Sweep,
        Study::Oscillating,
        Study::Spectral,
        Study::UnfoldingChecks,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    #[serde(flatten)]
    pub family: CoefficientFamily,
    #[serde(default = "one")]
    pub scale: f64,
}

impl CoefficientSpec {
    pub fn field(&self) -> Result<CoefficientField, Error> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(CoefficientField::new(self.family)?.scaled(self.scale))
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Resolution of the standalone cell study.
    #[serde(default = "default_cell_n")]
    pub cell_n: usize,
    /// Fine elements per ε-cell side.
    #[serde(default = "default_k")]
    pub points_per_cell: usize,
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    /// Cell resolution used inside sweeps; a multiple of `points_per_cell`.
    #[serde(default)]
    pub sweep_cell_n: Option<usize>,
}

fn default_cell_n() -> usize {
    64
}
fn default_k() -> usize {
    16
}
fn default_eps() -> Vec<f64> {
    vec![0.25, 0.125, 0.0625, 0.03125]
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            cell_n: default_cell_n(),
            points_per_cell: default_k(),
            eps: default_eps(),
            sweep_cell_n: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default = "default_pre")]
    pub preconditioner: Preconditioner,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_pre() -> Preconditioner {
    Preconditioner::Jacobi
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            rel_tol: default_tol(),
            max_iter: None,
            preconditioner: default_pre(),
        }
    }
}

impl SolverSection {
    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            rel_tol: self.rel_tol,
            max_iter: self.max_iter,
            preconditioner: self.preconditioner,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "all_studies")]
    pub studies: Vec<Study>,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "yes")]
    pub cache: bool,
    /// Defaults to `<output_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

fn all_studies() -> Vec<Study> {
    Study::ALL.to_vec()
}
fn default_out() -> PathBuf {
    PathBuf::from("homogbl-out")
}
fn yes() -> bool {
    true
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            studies: all_studies(),
            output_dir: default_out(),
            cache: true,
            cache_dir: None,
        }
    }
}

/// Oscillating Dirichlet data `εΦ*(x/ε) z(x)` with `Φ* = χ_ab` and
/// `z = ∂²u₀/∂x_c∂x_d`; indices are 1-based as in the usual notation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatingSection {
    #[serde(default = "one_one")]
    pub phi_star: [usize; 2],
    #[serde(default = "one_one")]
    pub z: [usize; 2],
}

fn one_one() -> [usize; 2] {
    [1, 1]
}

impl Default for OscillatingSection {
    fn default() -> Self {
        Self {
            phi_star: one_one(),
            z: one_one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub coefficient: CoefficientSpec,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub oscillating: OscillatingSection,
}

impl RunConfig {
    pub fn new(coefficient: CoefficientSpec) -> Self {
        Self {
            coefficient,
            grid: GridSection::default(),
            solver: SolverSection::default(),
            run: RunSection::default(),
            oscillating: OscillatingSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), Error> {
        let coeff = self.coefficient.field()?;
        self.solver.solver().validate()?;
        let k = self.grid.points_per_cell;
        if k < 8 || !k.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "grid.points_per_cell must be even and >= 8, got {k}"
            )));
        }
        if self.grid.eps.is_empty() {
            return Err(Error::InvalidConfig("grid.eps must not be empty".into()));
        }
        for &e in &self.grid.eps {
            cells_per_side(e).map_err(|_| {
                Error::InvalidConfig(format!(
                    "grid.eps entry {e} is not the reciprocal of an integer"
                ))
            })?;
        }
        if let Some(n) = self.grid.sweep_cell_n {
            if n % k != 0 {
                return Err(Error::InvalidConfig(format!(
                    "grid.sweep_cell_n = {n} is not a multiple of points_per_cell = {k}"
                )));
            }
        }
        if self.grid.cell_n < 2 || (coeff.is_discontinuous() && !self.grid.cell_n.is_multiple_of(2)) {
            return Err(Error::InvalidConfig(format!(
                "grid.cell_n = {} cannot resolve the {} coefficient",
                self.grid.cell_n,
                coeff.name()
            )));
        }
        for (name, pair) in [
            ("phi_star", self.oscillating.phi_star),
            ("z", self.oscillating.z),
        ] {
            if pair.iter().any(|&i| !(1..=2).contains(&i)) {
                return Err(Error::InvalidConfig(format!(
                    "oscillating.{name} indices must be 1 or 2"
                )));
            }
        }
        if self.run.studies.is_empty() {
            return Err(Error::InvalidConfig("run.studies must not be empty".into()));
        }
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.run
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.run.output_dir.join("cache"))
    }

    pub fn sweep_config(&self, threads: usize) -> SweepConfig {
        SweepConfig {
            eps_list: self.grid.eps.clone(),
            points_per_cell: self.grid.points_per_cell,
            cell_n: self.grid.sweep_cell_n,
            solver: self.solver.solver(),
            threads,
        }
    }

    pub fn phi_star(&self) -> (usize, usize) {
        (
            self.oscillating.phi_star[0] - 1,
            self.oscillating.phi_star[1] - 1,
        )
    }

    pub fn z(&self) -> DataDerivative {
        DataDerivative(self.oscillating.z[0] - 1, self.oscillating.z[1] - 1)
    }
}

/// Parallelism cap: `HOMOGBL_THREADS` if set, else the available cores.
pub fn thread_cap() -> usize {
    let avail = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    match std::env::var("HOMOGBL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        Some(n) if n >= 1 => n,
        _ => avail,
    }
}
