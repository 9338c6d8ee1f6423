//! First- and second-order cell problems on the periodic unit cell, the
//! homogenized tensor, and the `b_ij` data feeding the second-order problem.
//!
//! All cell fields are stored as vectors over periodic classes of the cell
//! grid. Gradients live at the four Gauss points of each element, indexed
//! `4 * element + q`.

use serde::{Deserialize, Serialize};

use crate::assembly::{
    apply_periodic_zero_mean, assemble_load_with, assemble_stiffness, gauss_ref, weighted_mean,
};
use crate::error::{Error, Result};
use crate::grid::{q1_grad, q1_shape, sample_coefficient, CoefficientField, Grid, Mat2};
use crate::solver::SolverConfig;

/// Tolerance of the `M_Y(b_ij) = −A^hom_ij` consistency check.
pub const B_AVERAGE_TOL: f64 = 1e-6;

pub type QpVectors = Vec<[f64; 2]>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedTensor {
    pub a_hom: Mat2,
    /// `M_Y((∇χ_i + e_i)ᵀ A (∇χ_j + e_j))`, the energy form of the same tensor.
    pub energy_form: Mat2,
    pub eigenvalues: [f64; 2],
    /// Ellipticity bounds `(m, M)` of the input coefficient.
    pub bounds: (f64, f64),
}

impl HomogenizedTensor {
    pub fn asymmetry(&self) -> f64 {
        (self.a_hom[0][1] - self.a_hom[1][0]).abs()
    }

    pub fn is_elliptic_within_bounds(&self, slack: f64) -> bool {
        let (m, big_m) = self.bounds;
        self.eigenvalues
            .iter()
            .all(|&l| l >= m - slack && l <= big_m + slack)
    }
}

/// `b_ij = P_ij − ∂_k D_ijk`, stored per Gauss point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BData {
    /// Pointwise part `−A_ij − A_ik ∂_k χ_j`.
    pub pointwise: [[Vec<f64>; 2]; 2],
    /// Divergence field `D_ijk = A_ik χ_j`, only ever used against `∇ψ`.
    pub divergence: [[QpVectors; 2]; 2],
    /// `M_Y(b_ij)` from the pointwise part.
    pub mean: Mat2,
    /// `M_Y` of the weak divergence term, i.e. its load tested with `ψ = 1`.
    pub divergence_mean: Mat2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSolutions {
    pub n: usize,
    pub chi: [Vec<f64>; 2],
    pub grad_chi: [QpVectors; 2],
    pub chi2: Option<[[Vec<f64>; 2]; 2]>,
    pub grad_chi2: Option<[[QpVectors; 2]; 2]>,
    pub a_hom: Option<HomogenizedTensor>,
    pub b: Option<BData>,
}

/// Gradients at the Gauss points of every element of a periodic dof field.
pub fn qp_gradients(grid: &Grid, field: &[f64]) -> QpVectors {
    let inv_h = 1.0 / grid.h();
    let grads: [[[f64; 2]; 4]; 4] = std::array::from_fn(|q| {
        let (s, t) = gauss_ref(q);
        q1_grad(s, t)
    });
    let mut out = Vec::with_capacity(grid.element_count() * 4);
    for e in 0..grid.element_count() {
        let dofs = grid.element_dofs(e);
        for g in &grads {
            let mut v = [0.0; 2];
            for a in 0..4 {
                v[0] += field[dofs[a]] * g[a][0] * inv_h;
                v[1] += field[dofs[a]] * g[a][1] * inv_h;
            }
            out.push(v);
        }
    }
    out
}

/// Values at the Gauss points of every element.
pub fn qp_values(grid: &Grid, field: &[f64]) -> Vec<f64> {
    let shapes: [[f64; 4]; 4] = std::array::from_fn(|q| {
        let (s, t) = gauss_ref(q);
        q1_shape(s, t)
    });
    let mut out = Vec::with_capacity(grid.element_count() * 4);
    for e in 0..grid.element_count() {
        let dofs = grid.element_dofs(e);
        for phi in &shapes {
            out.push((0..4).map(|a| field[dofs[a]] * phi[a]).sum());
        }
    }
    out
}

/// Coefficient matrices at every Gauss point of a cell grid.
fn qp_coefficients(grid: &Grid, coeff: &CoefficientField) -> Vec<Mat2> {
    (0..grid.element_count())
        .flat_map(|e| {
            grid.gauss_points(e)
                .map(|y| sample_coefficient(coeff, y, None))
        })
        .collect()
}

fn require_cell(grid: &Grid, coeff: &CoefficientField) -> Result<()> {
    if !grid.is_periodic() {
        return Err(Error::GridIncompatibility(
            "cell problems need a periodic cell grid".into(),
        ));
    }
    grid.check_coefficient(coeff)
}

/// Solves `−∇·(A(∇χ_j + e_j)) = 0` for `j = 1, 2` in `W_per(Y)`.
pub fn solve_first_cell(
    grid: &Grid,
    coeff: &CoefficientField,
    cfg: &SolverConfig,
) -> Result<CellSolutions> {
    require_cell(grid, coeff)?;
    let k = assemble_stiffness(grid, coeff, None)?;
    let mut chi: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (j, slot) in chi.iter_mut().enumerate() {
        // ∫ A∇χ_j·∇ψ = −∫ A e_j·∇ψ
        let load = assemble_load_with(grid, |_, _, y| {
            let a = sample_coefficient(coeff, y, None);
            (0.0, [-a[0][j], -a[1][j]])
        });
        *slot = apply_periodic_zero_mean(&k, &load, grid)?.solve(cfg)?;
    }
    let grad_chi = [qp_gradients(grid, &chi[0]), qp_gradients(grid, &chi[1])];
    Ok(CellSolutions {
        n: grid.n(),
        chi,
        grad_chi,
        chi2: None,
        grad_chi2: None,
        a_hom: None,
        b: None,
    })
}

/// `A^hom_ij = M_Y(A_ij + A_ik ∂_k χ_j)` by Gauss quadrature.
pub fn homogenized_tensor(
    grid: &Grid,
    coeff: &CoefficientField,
    cells: &CellSolutions,
) -> HomogenizedTensor {
    let coefs = qp_coefficients(grid, coeff);
    let w = grid.h() * grid.h() * 0.25;
    let mut a_hom = [[0.0; 2]; 2];
    let mut energy = [[0.0; 2]; 2];
    for (p, a) in coefs.iter().enumerate() {
        let col = |j: usize| {
            let g = cells.grad_chi[j][p];
            [
                g[0] + if j == 0 { 1.0 } else { 0.0 },
                g[1] + if j == 1 { 1.0 } else { 0.0 },
            ]
        };
        let cols = [col(0), col(1)];
        for i in 0..2 {
            for j in 0..2 {
                let aj = [
                    a[0][0] * cols[j][0] + a[0][1] * cols[j][1],
                    a[1][0] * cols[j][0] + a[1][1] * cols[j][1],
                ];
                a_hom[i][j] += w * aj[i];
                energy[i][j] += w * (cols[i][0] * aj[0] + cols[i][1] * aj[1]);
            }
        }
    }
    HomogenizedTensor {
        a_hom,
        energy_form: energy,
        eigenvalues: sym_eigenvalues(a_hom),
        bounds: coeff.bounds(),
    }
}

/// Eigenvalues of the symmetric part of a 2×2 matrix, ascending.
pub fn sym_eigenvalues(a: Mat2) -> [f64; 2] {
    let off = 0.5 * (a[0][1] + a[1][0]);
    let mean = 0.5 * (a[0][0] + a[1][1]);
    let rad = (0.25 * (a[0][0] - a[1][1]).powi(2) + off * off).sqrt();
    [mean - rad, mean + rad]
}

/// Builds the `b_ij` data and checks `M_Y(b_ij) = −A^hom_ij`.
pub fn compute_b(
    grid: &Grid,
    coeff: &CoefficientField,
    cells: &CellSolutions,
    a_hom: &HomogenizedTensor,
) -> Result<BData> {
    let coefs = qp_coefficients(grid, coeff);
    let chi_qp = [
        qp_values(grid, &cells.chi[0]),
        qp_values(grid, &cells.chi[1]),
    ];
    let w = grid.h() * grid.h() * 0.25;
    let mut pointwise: [[Vec<f64>; 2]; 2] = Default::default();
    let mut divergence: [[QpVectors; 2]; 2] = Default::default();
    let mut mean = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let (pw, dv): (Vec<f64>, QpVectors) = coefs
                .iter()
                .enumerate()
                .map(|(p, a)| {
                    let g = cells.grad_chi[j][p];
                    let pw = -a[i][j] - (a[i][0] * g[0] + a[i][1] * g[1]);
                    let c = chi_qp[j][p];
                    (pw, [a[i][0] * c, a[i][1] * c])
                })
                .unzip();
            mean[i][j] = w * pw.iter().sum::<f64>();
            pointwise[i][j] = pw;
            divergence[i][j] = dv;
        }
    }
    let mut divergence_mean = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let d = &divergence[i][j];
            let load = assemble_load_with(grid, |e, q, _| (0.0, d[4 * e + q]));
            divergence_mean[i][j] = load.iter().sum();
        }
    }
    for i in 0..2 {
        for j in 0..2 {
            let gap = (mean[i][j] + a_hom.a_hom[i][j]).abs();
            if gap > B_AVERAGE_TOL {
                return Err(Error::Inconsistency(format!(
                    "M_Y(b_{}{}) = {:e} but −A^hom = {:e}",
                    i + 1,
                    j + 1,
                    mean[i][j],
                    -a_hom.a_hom[i][j]
                )));
            }
        }
    }
    Ok(BData {
        pointwise,
        divergence,
        mean,
        divergence_mean,
    })
}

/// Solves `∇·(A∇χ_ij) = b_ij + A^hom_ij` with the divergence part of `b_ij`
/// moved onto the test function.
pub fn solve_second_cell(
    grid: &Grid,
    coeff: &CoefficientField,
    cells: &CellSolutions,
    cfg: &SolverConfig,
) -> Result<[[Vec<f64>; 2]; 2]> {
    require_cell(grid, coeff)?;
    let (b, a_hom) = match (&cells.b, &cells.a_hom) {
        (Some(b), Some(t)) => (b, t),
        _ => {
            return Err(Error::Inconsistency(
                "b_ij data missing; run compute_b first".into(),
            ))
        }
    };
    let k = assemble_stiffness(grid, coeff, None)?;
    let mut chi2: [[Vec<f64>; 2]; 2] = [[Vec::new(), Vec::new()], [Vec::new(), Vec::new()]];
    for i in 0..2 {
        for j in 0..2 {
            let pw = &b.pointwise[i][j];
            let dv = &b.divergence[i][j];
            let ah = a_hom.a_hom[i][j];
            // ∫ A∇χ_ij·∇ψ = −∫ (P_ij + A^hom_ij) ψ − ∫ D_ij·∇ψ
            let load = assemble_load_with(grid, |e, q, _| {
                let p = 4 * e + q;
                (-(pw[p] + ah), [-dv[p][0], -dv[p][1]])
            });
            chi2[i][j] = apply_periodic_zero_mean(&k, &load, grid)?.solve(cfg)?;
        }
    }
    Ok(chi2)
}

/// Runs the whole cell pipeline: `χ_j`, `A^hom`, `b_ij`, `χ_ij`.
pub fn solve_cell_problems(
    grid: &Grid,
    coeff: &CoefficientField,
    cfg: &SolverConfig,
) -> Result<CellSolutions> {
    let mut cells = solve_first_cell(grid, coeff, cfg)?;
    let a_hom = homogenized_tensor(grid, coeff, &cells);
    cells.b = Some(compute_b(grid, coeff, &cells, &a_hom)?);
    cells.a_hom = Some(a_hom);
    let chi2 = solve_second_cell(grid, coeff, &cells, cfg)?;
    let grad_chi2 =
        std::array::from_fn(|i| std::array::from_fn(|j| qp_gradients(grid, &chi2[i][j])));
    cells.chi2 = Some(chi2);
    cells.grad_chi2 = Some(grad_chi2);
    Ok(cells)
}

impl CellSolutions {
    pub fn grid(&self) -> Grid {
        Grid::cell(self.n).expect("stored cell resolution is valid")
    }

    /// `A^hom`, available once the tensor has been computed.
    pub fn a_hom(&self) -> Result<Mat2> {
        self.a_hom
            .as_ref()
            .map(|t| t.a_hom)
            .ok_or_else(|| Error::Inconsistency("homogenized tensor not computed".into()))
    }

    pub fn chi2(&self) -> Result<&[[Vec<f64>; 2]; 2]> {
        self.chi2
            .as_ref()
            .ok_or_else(|| Error::Inconsistency("second-order cell problems not solved".into()))
    }

    /// `χ_j` at cell node `(i, k)`, indices taken modulo `n`.
    pub fn chi_at(&self, j: usize, i: usize, k: usize) -> f64 {
        self.chi[j][(k % self.n) * self.n + (i % self.n)]
    }

    /// `χ_ab` at cell node `(i, k)`.
    pub fn chi2_at(&self, a: usize, b: usize, i: usize, k: usize) -> f64 {
        self.chi2
            .as_ref()
            .map_or(0.0, |c| c[a][b][(k % self.n) * self.n + (i % self.n)])
    }

    /// Largest mass-weighted mean over all solved fields.
    pub fn max_mean(&self) -> f64 {
        let grid = self.grid();
        let w = crate::assembly::assemble_mass(&grid).mul_vec(&vec![1.0; grid.dof_count()]);
        let mut worst = self
            .chi
            .iter()
            .map(|c| weighted_mean(c, &w).abs())
            .fold(0.0, f64::max);
        if let Some(c2) = &self.chi2 {
            for row in c2 {
                for c in row {
                    worst = worst.max(weighted_mean(c, &w).abs());
                }
            }
        }
        worst
    }

    /// The first-order flux `A(∇χ_j + e_j)` at every Gauss point.
    pub fn flux(&self, coeff: &CoefficientField, j: usize) -> QpVectors {
        let grid = self.grid();
        qp_coefficients(&grid, coeff)
            .iter()
            .zip(&self.grad_chi[j])
            .map(|(a, g)| {
                let v = [
                    g[0] + if j == 0 { 1.0 } else { 0.0 },
                    g[1] + if j == 1 { 1.0 } else { 0.0 },
                ];
                [
                    a[0][0] * v[0] + a[0][1] * v[1],
                    a[1][0] * v[0] + a[1][1] * v[1],
                ]
            })
            .collect()
    }
}
