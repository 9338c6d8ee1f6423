//! Fine-scale solves, two-scale expansions, boundary layers, error norms and
//! rate fits.
//!
//! Everything for one ε lives on a single fine domain grid with `k` elements
//! per ε-cell side. Cell fields are transferred to that grid by re-indexing
//! nodes, never by interpolation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::assembly::{
    apply_dirichlet, assemble_load, assemble_mass, assemble_stiffness, assemble_stiffness_tensor,
    BoundaryCondition,
};
use crate::cell::{solve_cell_problems, CellSolutions};
use crate::error::{Error, Result};
use crate::field::{Analytic, Dual, ScalarField};
use crate::grid::{build_cell_grid, CoefficientField, Grid, Mat2, Point, IDENTITY};
use crate::parallel::par_map;
use crate::solver::SolverConfig;
use crate::sparse::SparseMatrix;
use crate::unfolding::{cell_average, cells_per_side, q_interp, QInterp};

/// `u₀ = sin(πx₁) sin(πx₂)` with the load making it solve the homogenized
/// problem for a given constant tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured {
    pub a_hom: Mat2,
}

pub fn manufacture_problem(a_hom: Mat2) -> Manufactured {
    Manufactured { a_hom }
}

impl Manufactured {
    pub fn u0(&self, x: Point) -> f64 {
        (PI * x[0]).sin() * (PI * x[1]).sin()
    }

    pub fn gradient(&self, x: Point) -> [f64; 2] {
        let (s1, c1) = (PI * x[0]).sin_cos();
        let (s2, c2) = (PI * x[1]).sin_cos();
        [PI * c1 * s2, PI * s1 * c2]
    }

    pub fn hessian(&self, x: Point) -> Mat2 {
        let (s1, c1) = (PI * x[0]).sin_cos();
        let (s2, c2) = (PI * x[1]).sin_cos();
        let p2 = PI * PI;
        [[-p2 * s1 * s2, p2 * c1 * c2], [p2 * c1 * c2, -p2 * s1 * s2]]
    }

    /// `f = −∇·(A^hom ∇u₀)`.
    pub fn load(&self, x: Point) -> f64 {
        let h = self.hessian(x);
        let a = self.a_hom;
        -(a[0][0] * h[0][0] + a[0][1] * h[1][0] + a[1][0] * h[0][1] + a[1][1] * h[1][1])
    }

    /// `∂u₀/∂x_j` as an analytic field, usable outside the square.
    pub fn derivative_field(&self, j: usize) -> impl ScalarField {
        Analytic::new(move |x: [Dual; 2]| {
            let a = (x[0] * PI).sin();
            let b = (x[1] * PI).sin();
            if j == 0 {
                (x[0] * PI).cos() * b * PI
            } else {
                a * (x[1] * PI).cos() * PI
            }
        })
    }
}

/// Operators shared by every solve at one ε.
pub struct FineProblem {
    pub eps: f64,
    pub grid: Grid,
    pub stiffness: SparseMatrix,
    pub mass: SparseMatrix,
    pub laplacian: SparseMatrix,
}

impl FineProblem {
    /// Fine grid with `k` elements per ε-cell side.
    pub fn new(coeff: &CoefficientField, eps: f64, k: usize) -> Result<Self> {
        let m = cells_per_side(eps)?;
        if k < 2 || (coeff.is_discontinuous() && !k.is_multiple_of(2)) {
            return Err(Error::InterfaceMisalignment(k));
        }
        let grid = Grid::domain(m * k)?;
        let stiffness = assemble_stiffness(&grid, coeff, Some(eps))?;
        let mass = assemble_mass(&grid);
        let laplacian = assemble_stiffness_tensor(&grid, IDENTITY);
        Ok(Self {
            eps,
            grid,
            stiffness,
            mass,
            laplacian,
        })
    }

    pub fn points_per_cell(&self) -> usize {
        (self.grid.n() as f64 * self.eps).round() as usize
    }

    /// Solves `−∇·(A(x/ε)∇u) = f` with the given boundary values, taken from
    /// the boundary nodes of a full nodal vector.
    pub fn solve(&self, load: &[f64], boundary: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
        let bc = BoundaryCondition::from_nodal(&self.grid, boundary);
        apply_dirichlet(&self.grid, &self.stiffness, load, &bc)?.solve(cfg)
    }

    pub fn norms(&self, v: &[f64]) -> ErrorNorms {
        error_norms(&self.mass, &self.laplacian, v)
    }
}

/// `u_ε` with zero boundary values.
pub fn solve_fine<F: Fn(Point) -> f64>(
    fine: &FineProblem,
    f: F,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let load = assemble_load(&fine.grid, f);
    fine.solve(&load, &vec![0.0; fine.grid.node_count()], cfg)
}

/// Discrete `A(x/ε)`-harmonic field with the boundary values of `data`.
pub fn solve_boundary_layer(
    fine: &FineProblem,
    data: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    if data.len() != fine.grid.node_count() {
        return Err(Error::DimensionMismatch(format!(
            "boundary data has {} entries for {} nodes",
            data.len(),
            fine.grid.node_count()
        )));
    }
    if fine.grid.boundary_nodes().iter().all(|&b| data[b] == 0.0) {
        return Ok(vec![0.0; data.len()]);
    }
    fine.solve(&vec![0.0; data.len()], data, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1: f64,
}

/// `l2 = √(vᵀMv)` and `h1 = √(vᵀMv + vᵀK_I v)`.
pub fn error_norms(mass: &SparseMatrix, laplacian: &SparseMatrix, v: &[f64]) -> ErrorNorms {
    let l2sq = mass.bilinear(v, v).max(0.0);
    let semi = laplacian.bilinear(v, v).max(0.0);
    ErrorNorms {
        l2: l2sq.sqrt(),
        h1: (l2sq + semi).sqrt(),
    }
}

/// Maps fine nodes to cell-grid dofs. Fine node `(I, J)` sits at cell node
/// `((I mod k)·s, (J mod k)·s)` with `s = n_cell / k`.
pub struct CellTransfer<'a> {
    cells: &'a CellSolutions,
    k: usize,
    stride: usize,
    np: usize,
}

impl<'a> CellTransfer<'a> {
    pub fn new(cells: &'a CellSolutions, fine: &FineProblem) -> Result<Self> {
        let k = fine.points_per_cell();
        if k == 0 || !fine.grid.n().is_multiple_of(k) || !cells.n.is_multiple_of(k) {
            return Err(Error::GridIncompatibility(format!(
                "cell resolution {} is not a multiple of {} points per cell",
                cells.n, k
            )));
        }
        Ok(Self {
            cells,
            k,
            stride: cells.n / k,
            np: fine.grid.n() + 1,
        })
    }

    fn cell_node(&self, node: usize) -> (usize, usize) {
        let (i, j) = (node % self.np, node / self.np);
        ((i % self.k) * self.stride, (j % self.k) * self.stride)
    }

    pub fn chi(&self, j: usize, node: usize) -> f64 {
        let (a, b) = self.cell_node(node);
        self.cells.chi_at(j, a, b)
    }

    pub fn chi2(&self, i: usize, j: usize, node: usize) -> f64 {
        let (a, b) = self.cell_node(node);
        self.cells.chi2_at(i, j, a, b)
    }
}

/// Expansion fields on the fine grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansions {
    /// `χ_j(x/ε) ∂_j u₀`
    pub w1: Vec<f64>,
    /// `χ_j(x/ε) Q_ε(∂_j u₀)`
    pub u1_q: Vec<f64>,
    /// `χ_ij(x/ε) ∂_ij u₀`
    pub u2: Vec<f64>,
}

/// Sample resolution for the cell averages behind `Q_ε`.
const AVERAGE_SAMPLES: usize = 4;

pub fn q_interpolants(u0: &Manufactured, eps: f64) -> Result<[QInterp; 2]> {
    let sample = Grid::cell(AVERAGE_SAMPLES)?;
    Ok([
        q_interp(cell_average(&u0.derivative_field(0), eps, &sample)?),
        q_interp(cell_average(&u0.derivative_field(1), eps, &sample)?),
    ])
}

pub fn evaluate_expansions(
    cells: &CellSolutions,
    u0: &Manufactured,
    fine: &FineProblem,
) -> Result<Expansions> {
    let t = CellTransfer::new(cells, fine)?;
    let q = q_interpolants(u0, fine.eps)?;
    let has_second = cells.chi2.is_some();
    let n = fine.grid.node_count();
    let (mut w1, mut u1_q, mut u2) = (Vec::with_capacity(n), Vec::with_capacity(n), vec![0.0; n]);
    for v in 0..n {
        let x = fine.grid.node_coords(v);
        let g = u0.gradient(x);
        let c = [t.chi(0, v), t.chi(1, v)];
        w1.push(c[0] * g[0] + c[1] * g[1]);
        u1_q.push(c[0] * q[0].value(x) + c[1] * q[1].value(x));
        if has_second {
            let h = u0.hessian(x);
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += t.chi2(i, j, v) * h[i][j];
                }
            }
            u2[v] = s;
        }
    }
    Ok(Expansions { w1, u1_q, u2 })
}

/// All fields of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionBundle {
    pub eps: f64,
    pub fine_n: usize,
    pub u_eps: Vec<f64>,
    /// Nodal samples of the analytic `u₀`.
    pub u0: Vec<f64>,
    pub expansions: Expansions,
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub phi: Vec<f64>,
    /// `|∫A∇u_ε·∇u_ε − ∫f u_ε| / ∫f u_ε`.
    pub energy_gap: f64,
}

pub fn build_bundle(
    cells: &CellSolutions,
    u0: &Manufactured,
    fine: &FineProblem,
    cfg: &SolverConfig,
) -> Result<ExpansionBundle> {
    let load = assemble_load(&fine.grid, |x| u0.load(x));
    let n = fine.grid.node_count();
    let u_eps = fine.solve(&load, &vec![0.0; n], cfg)?;
    let energy = fine.stiffness.bilinear(&u_eps, &u_eps);
    let work: f64 = load.iter().zip(&u_eps).map(|(a, b)| a * b).sum();
    let energy_gap = (energy - work).abs() / work.abs().max(f64::MIN_POSITIVE);
    let expansions = evaluate_expansions(cells, u0, fine)?;
    let theta = solve_boundary_layer(fine, &expansions.w1, cfg)?;
    let beta = solve_boundary_layer(fine, &expansions.u1_q, cfg)?;
    let phi = solve_boundary_layer(fine, &expansions.u2, cfg)?;
    let u0_nodal = crate::field::interpolate(&fine.grid, |x| u0.u0(x));
    Ok(ExpansionBundle {
        eps: fine.eps,
        fine_n: fine.grid.n(),
        u_eps,
        u0: u0_nodal,
        expansions,
        theta,
        beta,
        phi,
        energy_gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpansionKind {
    /// `u_ε − u₀ − εw₁`
    PlainFirst,
    /// `u_ε − u₀ − εw₁ + εθ_ε`
    FirstWithTheta,
    /// `u_ε − u₀ − εu₁ + εβ_ε` with the `Q_ε` corrector
    FirstWithBetaQ,
    /// `u_ε − u₀ − εw₁ + εθ_ε − ε²u₂ + ε²φ_ε`
    SecondWithBoth,
    /// `u_ε − u₀ − εw₁ + εθ_ε − ε²u₂`
    SecondWithoutPhi,
    /// `εφ_ε` itself
    EpsPhi,
    /// `y_ε − y* − εχ_j Q_ε(∂_j y*)` for oscillating Dirichlet data
    OscillatingData,
}

impl ExpansionKind {
    pub const SWEEP: [ExpansionKind; 6] = [
        Self::PlainFirst,
        Self::FirstWithTheta,
        Self::FirstWithBetaQ,
        Self::SecondWithBoth,
        Self::SecondWithoutPhi,
        Self::EpsPhi,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::PlainFirst => "plain-first",
            Self::FirstWithTheta => "first-with-theta",
            Self::FirstWithBetaQ => "first-with-beta-q",
            Self::SecondWithBoth => "second-with-both",
            Self::SecondWithoutPhi => "second-without-phi",
            Self::EpsPhi => "eps-phi",
            Self::OscillatingData => "oscillating-data",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub eps: f64,
    pub kind: ExpansionKind,
    pub l2_error: f64,
    pub h1_error: f64,
}

/// Error fields of every sweep variant.
pub fn error_records(bundle: &ExpansionBundle, fine: &FineProblem) -> Vec<ErrorRecord> {
    let e = bundle.eps;
    let ex = &bundle.expansions;
    let n = bundle.u_eps.len();
    let first: Vec<f64> = (0..n)
        .map(|v| bundle.u_eps[v] - bundle.u0[v] - e * ex.w1[v])
        .collect();
    let with_theta: Vec<f64> = (0..n).map(|v| first[v] + e * bundle.theta[v]).collect();
    let with_beta: Vec<f64> = (0..n)
        .map(|v| bundle.u_eps[v] - bundle.u0[v] - e * ex.u1_q[v] + e * bundle.beta[v])
        .collect();
    let no_phi: Vec<f64> = (0..n).map(|v| with_theta[v] - e * e * ex.u2[v]).collect();
    let both: Vec<f64> = (0..n).map(|v| no_phi[v] + e * e * bundle.phi[v]).collect();
    let eps_phi: Vec<f64> = bundle.phi.iter().map(|p| e * p).collect();
    let fields = [&first, &with_theta, &with_beta, &both, &no_phi, &eps_phi];
    ExpansionKind::SWEEP
        .iter()
        .zip(fields)
        .map(|(&kind, f)| {
            let nm = fine.norms(f);
            ErrorRecord {
                eps: e,
                kind,
                l2_error: nm.l2,
                h1_error: nm.h1,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub eps_list: Vec<f64>,
    /// Fine elements per ε-cell side.
    pub points_per_cell: usize,
    /// Cell grid used for `χ`; must be a multiple of `points_per_cell`.
    /// `None` solves the cell problems at `points_per_cell`.
    pub cell_n: Option<usize>,
    pub solver: SolverConfig,
    /// Upper bound on ε-points run concurrently.
    #[serde(default = "one_thread")]
    pub threads: usize,
}

fn one_thread() -> usize {
    1
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            eps_list: vec![0.25, 0.125, 0.0625, 0.03125],
            points_per_cell: 16,
            cell_n: None,
            solver: SolverConfig::default(),
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eps: f64,
    pub records: Vec<ErrorRecord>,
    pub energy_gap: f64,
    /// Largest boundary-trace mismatch over θ_ε, β_ε, φ_ε.
    pub trace_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub family: String,
    pub a_hom: Mat2,
    pub points: Vec<SweepPoint>,
    /// ε-points that failed, with the reason.
    pub failures: Vec<(f64, String)>,
}

impl SweepReport {
    pub fn series(&self, kind: ExpansionKind) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut eps = Vec::new();
        let mut l2 = Vec::new();
        let mut h1 = Vec::new();
        for p in &self.points {
            if let Some(r) = p.records.iter().find(|r| r.kind == kind) {
                eps.push(p.eps);
                l2.push(r.l2_error);
                h1.push(r.h1_error);
            }
        }
        (eps, l2, h1)
    }
}

pub fn sweep_cells(coeff: &CoefficientField, config: &SweepConfig) -> Result<CellSolutions> {
    let n = config.cell_n.unwrap_or(config.points_per_cell);
    if !n.is_multiple_of(config.points_per_cell) {
        return Err(Error::GridIncompatibility(format!(
            "cell resolution {n} is not a multiple of {} points per cell",
            config.points_per_cell
        )));
    }
    let grid = build_cell_grid(n, coeff)?;
    solve_cell_problems(&grid, coeff, &config.solver)
}

fn trace_error(grid: &Grid, field: &[f64], data: &[f64]) -> f64 {
    grid.boundary_nodes()
        .iter()
        .map(|&b| (field[b] - data[b]).abs())
        .fold(0.0, f64::max)
}

pub fn sweep_point(
    coeff: &CoefficientField,
    cells: &CellSolutions,
    u0: &Manufactured,
    eps: f64,
    config: &SweepConfig,
) -> Result<SweepPoint> {
    let fine = FineProblem::new(coeff, eps, config.points_per_cell)?;
    let bundle = build_bundle(cells, u0, &fine, &config.solver)?;
    let ex = &bundle.expansions;
    let trace = trace_error(&fine.grid, &bundle.theta, &ex.w1)
        .max(trace_error(&fine.grid, &bundle.beta, &ex.u1_q))
        .max(trace_error(&fine.grid, &bundle.phi, &ex.u2));
    Ok(SweepPoint {
        eps,
        records: error_records(&bundle, &fine),
        energy_gap: bundle.energy_gap,
        trace_error: trace,
    })
}

/// Runs every ε-point; a failing point is recorded and skipped.
pub fn run_sweep(coeff: &CoefficientField, config: &SweepConfig) -> Result<SweepReport> {
    let cells = sweep_cells(coeff, config)?;
    run_sweep_with(coeff, &cells, config)
}

pub fn run_sweep_with(
    coeff: &CoefficientField,
    cells: &CellSolutions,
    config: &SweepConfig,
) -> Result<SweepReport> {
    let a_hom = cells.a_hom()?;
    let u0 = manufacture_problem(a_hom);
    let mut points = Vec::new();
    let mut failures = Vec::new();
    let results = par_map(&config.eps_list, config.threads, |&eps| {
        sweep_point(coeff, cells, &u0, eps, config)
    });
    for (&eps, r) in config.eps_list.iter().zip(results) {
        match r {
            Ok(p) => points.push(p),
            Err(e) => failures.push((eps, e.to_string())),
        }
    }
    Ok(SweepReport {
        family: coeff.name().to_string(),
        a_hom,
        points,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub used: usize,
    /// Points dropped for a non-positive or non-finite error.
    pub excluded: Vec<f64>,
}

/// Least-squares slope of `log(error)` against `log(ε)`.
pub fn fit_rate(eps: &[f64], errors: &[f64]) -> Result<RateFit> {
    if eps.len() != errors.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} eps vs {} errors",
            eps.len(),
            errors.len()
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = Vec::new();
    for (&e, &r) in eps.iter().zip(errors) {
        if r > 0.0 && r.is_finite() && e > 0.0 {
            xs.push(e.ln());
            ys.push(r.ln());
        } else {
            excluded.push(e);
        }
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData { usable: xs.len() });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(RateFit {
        slope: sxy / sxx,
        used: xs.len(),
        excluded,
    })
}

/// Which second derivative of `u₀` multiplies the oscillating data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataDerivative(pub usize, pub usize);

/// Error of `y_ε − u₀ − εχ_j Q_ε(∂_j u₀)` where `y_ε` carries the boundary
/// data `εΦ*(x/ε) z(x)`, `Φ* = χ_ab` and `z = ∂_cd u₀`.
///
/// The load is the manufactured one, so the homogenized solution with zero
/// trace is `u₀` itself.
pub fn oscillating_dirichlet_study(
    coeff: &CoefficientField,
    cells: &CellSolutions,
    phi_star: (usize, usize),
    z: DataDerivative,
    config: &SweepConfig,
) -> Result<(Vec<ErrorRecord>, Vec<(f64, String)>)> {
    let u0 = manufacture_problem(cells.a_hom()?);
    cells.chi2()?;
    let point = |&eps: &f64| -> Result<ErrorRecord> {
        let fine = FineProblem::new(coeff, eps, config.points_per_cell)?;
        let t = CellTransfer::new(cells, &fine)?;
        let n = fine.grid.node_count();
        let data: Vec<f64> = (0..n)
            .map(|v| {
                if !fine.grid.is_boundary(v) {
                    return 0.0;
                }
                let h = u0.hessian(fine.grid.node_coords(v));
                eps * t.chi2(phi_star.0, phi_star.1, v) * h[z.0][z.1]
            })
            .collect();
        let load = assemble_load(&fine.grid, |x| u0.load(x));
        let y = fine.solve(&load, &data, &config.solver)?;
        let q = q_interpolants(&u0, eps)?;
        let diff: Vec<f64> = (0..n)
            .map(|v| {
                let x = fine.grid.node_coords(v);
                let corr = t.chi(0, v) * q[0].value(x) + t.chi(1, v) * q[1].value(x);
                y[v] - u0.u0(x) - eps * corr
            })
            .collect();
        let nm = fine.norms(&diff);
        Ok(ErrorRecord {
            eps,
            kind: ExpansionKind::OscillatingData,
            l2_error: nm.l2,
            h1_error: nm.h1,
        })
    };
    let mut out = Vec::new();
    let mut failures = Vec::new();
    for (&eps, r) in config
        .eps_list
        .iter()
        .zip(par_map(&config.eps_list, config.threads, point))
    {
        match r {
            Ok(r) => out.push(r),
            Err(e) => failures.push((eps, e.to_string())),
        }
    }
    Ok((out, failures))
}
