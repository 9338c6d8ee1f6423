//! Lowest Dirichlet eigenpairs of the oscillating and homogenized operators
//! and the first-order eigenvalue corrector `ελ∫θ̄_ε v`.

use serde::{Deserialize, Serialize};

use crate::assembly::assemble_stiffness_tensor;
use crate::cell::CellSolutions;
use crate::corrector::{
    fit_rate, solve_boundary_layer, CellTransfer, FineProblem, RateFit, SweepConfig,
};
use crate::error::Result;
use crate::field::interpolate;
use crate::grid::{CoefficientField, Grid, Mat2};
use crate::parallel::par_map;
use crate::solver::{smallest_eigenpair_from, EigenPair, SolverConfig};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPair {
    pub lambda_eps: f64,
    pub lambda_hom: f64,
    /// Homogenized eigenfunction on all fine nodes, `∫v² = 1`, `∫v > 0`.
    pub v: Vec<f64>,
    /// Eigenvector of the oscillating problem, normalised the same way.
    pub v_eps: Vec<f64>,
    pub residual_eps: f64,
    pub residual_hom: f64,
}

fn expand(grid: &Grid, interior: &[usize], x: &[f64]) -> Vec<f64> {
    let mut full = vec![0.0; grid.node_count()];
    for (k, &v) in interior.iter().enumerate() {
        full[v] = x[k];
    }
    full
}

/// Flips `v` so that `∫v > 0`.
fn fix_sign(mass: &SparseMatrix, v: &mut [f64]) {
    let integral: f64 = mass.mul_vec(v).iter().sum();
    if integral < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn eigen_on_interior(
    stiffness: &SparseMatrix,
    mass: &SparseMatrix,
    interior: &[usize],
    start: &[f64],
    cfg: &SolverConfig,
) -> Result<EigenPair> {
    let k = stiffness.submatrix(interior, interior);
    let m = mass.submatrix(interior, interior);
    let s: Vec<f64> = interior.iter().map(|&v| start[v]).collect();
    smallest_eigenpair_from(&k, &m, &s, cfg)
}

/// Lowest eigenpairs of `−∇·(A(x/ε)∇·)` and `−∇·(A^hom∇·)` on the fine grid.
///
/// The homogenized iteration starts from `sin(πx₁)sin(πx₂)` and the
/// oscillating one from the homogenized eigenvector.
pub fn solve_spectral_pair(
    fine: &FineProblem,
    a_hom: Mat2,
    cfg: &SolverConfig,
) -> Result<SpectralPair> {
    let grid = &fine.grid;
    let interior = grid.interior_nodes();
    let k_hom = assemble_stiffness_tensor(grid, a_hom);
    let start = interpolate(grid, |x| {
        (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin()
    });
    let hom = eigen_on_interior(&k_hom, &fine.mass, &interior, &start, cfg)?;
    let mut v = expand(grid, &interior, &hom.vector);
    fix_sign(&fine.mass, &mut v);
    let osc = eigen_on_interior(&fine.stiffness, &fine.mass, &interior, &v, cfg)?;
    let mut v_eps = expand(grid, &interior, &osc.vector);
    fix_sign(&fine.mass, &mut v_eps);
    Ok(SpectralPair {
        lambda_eps: osc.lambda,
        lambda_hom: hom.lambda,
        v,
        v_eps,
        residual_eps: osc.residual,
        residual_hom: hom.residual,
    })
}

/// Gradient of a nodal field at boundary nodes: the inward normal component
/// by one-sided second-order differences, the tangential one zero since the
/// field vanishes on the boundary. Corners get zero.
pub fn boundary_gradient(grid: &Grid, v: &[f64]) -> Vec<[f64; 2]> {
    let n = grid.n();
    let h = grid.h();
    let mut out = vec![[0.0; 2]; grid.node_count()];
    let at = |i: usize, j: usize| v[grid.node_index(i, j)];
    let one_sided = |a: f64, b: f64, c: f64| (-3.0 * a + 4.0 * b - c) / (2.0 * h);
    for &b in grid.boundary_nodes() {
        let (i, j) = grid.node_ij(b);
        let corner = (i == 0 || i == n) && (j == 0 || j == n);
        if corner {
            continue;
        }
        if i == 0 {
            out[b][0] = one_sided(at(0, j), at(1, j), at(2, j));
        } else if i == n {
            out[b][0] = -one_sided(at(n, j), at(n - 1, j), at(n - 2, j));
        } else if j == 0 {
            out[b][1] = one_sided(at(i, 0), at(i, 1), at(i, 2));
        } else {
            out[b][1] = -one_sided(at(i, n), at(i, n - 1), at(i, n - 2));
        }
    }
    out
}

/// `θ̄_ε`: `A(x/ε)`-harmonic with trace `χ_j(x/ε)∂_j v`.
pub fn eigen_boundary_layer(
    cells: &CellSolutions,
    v: &[f64],
    fine: &FineProblem,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let t = CellTransfer::new(cells, fine)?;
    let grad = boundary_gradient(&fine.grid, v);
    let mut data = vec![0.0; fine.grid.node_count()];
    for &b in fine.grid.boundary_nodes() {
        data[b] = t.chi(0, b) * grad[b][0] + t.chi(1, b) * grad[b][1];
    }
    solve_boundary_layer(fine, &data, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralRow {
    pub eps: f64,
    pub lambda_eps: f64,
    pub lambda_hom: f64,
    /// `λ∫θ̄_ε v`
    pub corrector_integral: f64,
    /// `λ^ε − λ − ελ∫θ̄_ε v`
    pub residual: f64,
    pub theta_bar_l2: f64,
    pub eigen_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub family: String,
    pub rows: Vec<SpectralRow>,
    pub failures: Vec<(f64, String)>,
    /// Slope of `|λ^ε − λ|`.
    pub gap_rate: Option<RateFit>,
    /// Slope of `|λ^ε − λ − ελ∫θ̄_ε v|`.
    pub residual_rate: Option<RateFit>,
    /// `max/min` of `|λ^ε − λ|/ε` over the sweep.
    pub gap_ratio_spread: f64,
    /// Set when the residual rate fails but `|residual|/ε` stays bounded,
    /// which is what several weak limit points of `θ̄_ε` would produce.
    pub possible_non_uniqueness: bool,
}

pub fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if values.is_empty() || min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn spectral_point(
    coeff: &CoefficientField,
    cells: &CellSolutions,
    eps: f64,
    config: &SweepConfig,
) -> Result<SpectralRow> {
    let fine = FineProblem::new(coeff, eps, config.points_per_cell)?;
    let pair = solve_spectral_pair(&fine, cells.a_hom()?, &config.solver)?;
    let theta = eigen_boundary_layer(cells, &pair.v, &fine, &config.solver)?;
    let integral = fine.mass.bilinear(&theta, &pair.v);
    let corrector_integral = pair.lambda_hom * integral;
    Ok(SpectralRow {
        eps,
        lambda_eps: pair.lambda_eps,
        lambda_hom: pair.lambda_hom,
        corrector_integral,
        residual: pair.lambda_eps - pair.lambda_hom - eps * corrector_integral,
        theta_bar_l2: fine.mass.bilinear(&theta, &theta).sqrt(),
        eigen_residual: pair.residual_eps,
    })
}

pub fn eigen_corrector_study(
    coeff: &CoefficientField,
    cells: &CellSolutions,
    config: &SweepConfig,
) -> Result<SpectralReport> {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let results = par_map(&config.eps_list, config.threads, |&eps| {
        spectral_point(coeff, cells, eps, config)
    });
    for (&eps, r) in config.eps_list.iter().zip(results) {
        match r {
            Ok(r) => rows.push(r),
            Err(e) => failures.push((eps, e.to_string())),
        }
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let gaps: Vec<f64> = rows
        .iter()
        .map(|r| (r.lambda_eps - r.lambda_hom).abs())
        .collect();
    let res: Vec<f64> = rows.iter().map(|r| r.residual.abs()).collect();
    let gap_rate = fit_rate(&eps, &gaps).ok();
    let residual_rate = fit_rate(&eps, &res).ok();
    let gap_ratio_spread = spread(
        &gaps
            .iter()
            .zip(&eps)
            .map(|(g, e)| g / e)
            .collect::<Vec<_>>(),
    );
    let res_spread = spread(&res.iter().zip(&eps).map(|(g, e)| g / e).collect::<Vec<_>>());
    let possible_non_uniqueness =
        residual_rate.as_ref().is_some_and(|r| r.slope <= 1.0) && res_spread <= 4.0;
    Ok(SpectralReport {
        family: coeff.name().to_string(),
        rows,
        failures,
        gap_rate,
        residual_rate,
        gap_ratio_spread,
        possible_non_uniqueness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_gradient_of_quadratic_is_exact() {
        // v = x(1−x) y(1−y) is quadratic along every normal line
        let g = Grid::domain(8).unwrap();
        let v = interpolate(&g, |x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]));
        let grad = boundary_gradient(&g, &v);
        for &b in g.boundary_nodes() {
            let x = g.node_coords(b);
            let (i, j) = g.node_ij(b);
            let corner = (i == 0 || i == 8) && (j == 0 || j == 8);
            let exact = if corner {
                [0.0, 0.0]
            } else if i == 0 || i == 8 {
                [(1.0 - 2.0 * x[0]) * x[1] * (1.0 - x[1]), 0.0]
            } else {
                [0.0, (1.0 - 2.0 * x[1]) * x[0] * (1.0 - x[0])]
            };
            assert!((grad[b][0] - exact[0]).abs() < 1e-13 && (grad[b][1] - exact[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn spread_of_constant_is_one() {
        assert_eq!(spread(&[2.0, 2.0]), 1.0);
        assert_eq!(spread(&[1.0, 0.0]), f64::INFINITY);
    }
}
