//! Q1 finite-element assembly on structured grids and imposition of
//! Dirichlet and periodic zero-mean constraints.
//!
//! Every integral uses the 2×2 Gauss rule per element with the coefficient
//! sampled pointwise. Elements are visited in index order and duplicate
//! contributions are summed in that order, so assembly is bit-reproducible.

use crate::error::{Error, Result};
use crate::grid::{
    q1_grad, q1_shape, sample_coefficient, CoefficientField, Grid, Mat2, Point, GAUSS_1D,
};
use crate::solver::{cg_solve_detailed, Constraint, SolverConfig};
use crate::sparse::SparseMatrix;

/// Reference-square Gauss point `q` as `(s, t)`.
pub fn gauss_ref(q: usize) -> (f64, f64) {
    (GAUSS_1D[q % 2], GAUSS_1D[q / 2])
}

/// Stiffness matrix for a coefficient supplied per element and Gauss point.
///
/// `coef(e, q, x)` returns the matrix at Gauss point `q` of element `e`,
/// located at `x`.
pub fn assemble_stiffness_with<F>(grid: &Grid, mut coef: F) -> SparseMatrix
where
    F: FnMut(usize, usize, Point) -> Mat2,
{
    let grads: [[[f64; 2]; 4]; 4] = std::array::from_fn(|q| {
        let (s, t) = gauss_ref(q);
        q1_grad(s, t)
    });
    let mut trip = Vec::with_capacity(grid.element_count() * 16);
    for e in 0..grid.element_count() {
        let dofs = grid.element_dofs(e);
        let pts = grid.gauss_points(e);
        let mut ke = [[0.0; 4]; 4];
        for q in 0..4 {
            let a = coef(e, q, pts[q]);
            let g = &grads[q];
            for (i, gi) in g.iter().enumerate() {
                let agi = [
                    a[0][0] * gi[0] + a[0][1] * gi[1],
                    a[1][0] * gi[0] + a[1][1] * gi[1],
                ];
                for (j, gj) in g.iter().enumerate() {
                    // weight 1/4; the Jacobian h² cancels the two 1/h gradient factors in 2D
                    ke[i][j] += 0.25 * (agi[0] * gj[0] + agi[1] * gj[1]);
                }
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                trip.push((dofs[i], dofs[j], ke[i][j]));
            }
        }
    }
    let n = grid.dof_count();
    SparseMatrix::from_triplets(n, n, &trip)
}

/// Stiffness of `A(x/ε)` on a domain grid, or of `A(y)` on a cell grid.
///
/// On a domain grid an oscillating coefficient needs `eps`; on a cell grid
/// `eps` is ignored and `A` is read directly at the cell point.
pub fn assemble_stiffness(
    grid: &Grid,
    coeff: &CoefficientField,
    eps: Option<f64>,
) -> Result<SparseMatrix> {
    let eps = if grid.is_periodic() {
        None
    } else {
        match eps {
            Some(e) if e > 0.0 && e.is_finite() => Some(e),
            Some(e) => {
                return Err(Error::InvalidConfig(format!(
                    "eps must be positive, got {e}"
                )))
            }
            None if coeff.is_constant() => None,
            None => return Err(Error::MissingScale),
        }
    };
    Ok(assemble_stiffness_with(grid, |_, _, x| {
        sample_coefficient(coeff, x, eps)
    }))
}

/// Stiffness for a constant tensor such as `A^hom`.
pub fn assemble_stiffness_tensor(grid: &Grid, a: Mat2) -> SparseMatrix {
    assemble_stiffness_with(grid, |_, _, _| a)
}

pub fn assemble_mass(grid: &Grid) -> SparseMatrix {
    let h2 = grid.h() * grid.h();
    let shapes: [[f64; 4]; 4] = std::array::from_fn(|q| {
        let (s, t) = gauss_ref(q);
        q1_shape(s, t)
    });
    let mut me = [[0.0; 4]; 4];
    for phi in &shapes {
        for i in 0..4 {
            for j in 0..4 {
                me[i][j] += 0.25 * h2 * phi[i] * phi[j];
            }
        }
    }
    let mut trip = Vec::with_capacity(grid.element_count() * 16);
    for e in 0..grid.element_count() {
        let dofs = grid.element_dofs(e);
        for i in 0..4 {
            for j in 0..4 {
                trip.push((dofs[i], dofs[j], me[i][j]));
            }
        }
    }
    let n = grid.dof_count();
    SparseMatrix::from_triplets(n, n, &trip)
}

/// Load vector `∫ g φ_i + ∫ G·∇φ_i` with `(g, G)` supplied per Gauss point.
pub fn assemble_load_with<F>(grid: &Grid, mut src: F) -> Vec<f64>
where
    F: FnMut(usize, usize, Point) -> (f64, [f64; 2]),
{
    let h = grid.h();
    let shape: [([f64; 4], [[f64; 2]; 4]); 4] = std::array::from_fn(|q| {
        let (s, t) = gauss_ref(q);
        (q1_shape(s, t), q1_grad(s, t))
    });
    let mut load = vec![0.0; grid.dof_count()];
    for e in 0..grid.element_count() {
        let dofs = grid.element_dofs(e);
        let pts = grid.gauss_points(e);
        let mut le = [0.0; 4];
        for q in 0..4 {
            let (g, flux) = src(e, q, pts[q]);
            let (phi, grad) = &shape[q];
            for i in 0..4 {
                // ∫ g φ: weight h²/4; ∫ G·∇φ: weight h²/4 · (1/h)
                le[i] += 0.25 * h * h * g * phi[i]
                    + 0.25 * h * (flux[0] * grad[i][0] + flux[1] * grad[i][1]);
            }
        }
        for i in 0..4 {
            load[dofs[i]] += le[i];
        }
    }
    load
}

pub fn assemble_load<F>(grid: &Grid, f: F) -> Vec<f64>
where
    F: Fn(Point) -> f64,
{
    assemble_load_with(grid, |_, _, x| (f(x), [0.0, 0.0]))
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCondition {
    /// Prescribed values on every boundary node of a domain grid.
    Dirichlet(Vec<(usize, f64)>),
    /// Periodic identification with a zero mass-weighted mean.
    PeriodicZeroMean,
}

impl BoundaryCondition {
    pub fn homogeneous(grid: &Grid) -> Self {
        Self::Dirichlet(grid.boundary_nodes().iter().map(|&b| (b, 0.0)).collect())
    }

    pub fn from_fn<F: Fn(Point) -> f64>(grid: &Grid, g: F) -> Self {
        Self::Dirichlet(
            grid.boundary_nodes()
                .iter()
                .map(|&b| (b, g(grid.node_coords(b))))
                .collect(),
        )
    }

    /// Boundary values taken from a full nodal field.
    pub fn from_nodal(grid: &Grid, values: &[f64]) -> Self {
        Self::Dirichlet(
            grid.boundary_nodes()
                .iter()
                .map(|&b| (b, values[b]))
                .collect(),
        )
    }
}

/// Interior system after eliminating prescribed boundary values.
#[derive(Debug, Clone)]
pub struct DirichletSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    pub interior: Vec<usize>,
    /// Full nodal vector holding the boundary values (zeros elsewhere).
    pub lifting: Vec<f64>,
}

impl DirichletSystem {
    /// Scatters an interior solution into a full nodal field.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full = self.lifting.clone();
        for (k, &v) in self.interior.iter().enumerate() {
            full[v] = x[k];
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.interior.iter().map(|&v| full[v]).collect()
    }

    pub fn solve(&self, cfg: &SolverConfig) -> Result<Vec<f64>> {
        let x = cg_solve_detailed(&self.matrix, &self.rhs, None, cfg, Constraint::None, None)?;
        Ok(self.expand(&x.solution))
    }
}

/// Eliminates boundary values by lifting: `rhs = f_I − K_IB g_B`.
pub fn apply_dirichlet(
    grid: &Grid,
    stiffness: &SparseMatrix,
    load: &[f64],
    bc: &BoundaryCondition,
) -> Result<DirichletSystem> {
    let values = match bc {
        BoundaryCondition::Dirichlet(v) => v,
        BoundaryCondition::PeriodicZeroMean => {
            return Err(Error::BadConstraint(
                "periodic constraint passed to apply_dirichlet".into(),
            ))
        }
    };
    if grid.is_periodic() {
        return Err(Error::BadConstraint(
            "Dirichlet data on a periodic cell grid".into(),
        ));
    }
    let n = grid.node_count();
    if stiffness.rows() != n || load.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "stiffness {}x{} / load {} vs {} grid nodes",
            stiffness.rows(),
            stiffness.cols(),
            load.len(),
            n
        )));
    }
    let mut lifting = vec![0.0; n];
    let mut seen = vec![false; n];
    for &(node, v) in values {
        if node >= n || !grid.is_boundary(node) {
            return Err(Error::BadConstraint(format!(
                "node {node} is not a boundary node"
            )));
        }
        if !v.is_finite() {
            return Err(Error::BadConstraint(format!(
                "non-finite value at node {node}"
            )));
        }
        lifting[node] = v;
        seen[node] = true;
    }
    if let Some(&missing) = grid.boundary_nodes().iter().find(|&&b| !seen[b]) {
        return Err(Error::BadConstraint(format!(
            "no value for boundary node {missing}"
        )));
    }
    let interior = grid.interior_nodes();
    let matrix = stiffness.submatrix(&interior, &interior);
    let rhs = interior
        .iter()
        .map(|&r| {
            let lift: f64 = stiffness
                .row(r)
                .filter(|(c, _)| seen[*c])
                .map(|(c, v)| v * lifting[c])
                .sum();
            load[r] - lift
        })
        .collect();
    Ok(DirichletSystem {
        matrix,
        rhs,
        interior,
        lifting,
    })
}

/// Periodic cell system restricted to zero-mean functions.
#[derive(Debug, Clone)]
pub struct PeriodicSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    /// `M·1`, the mass weights defining the mean.
    pub weights: Vec<f64>,
}

impl PeriodicSystem {
    pub fn solve(&self, cfg: &SolverConfig) -> Result<Vec<f64>> {
        let out = cg_solve_detailed(
            &self.matrix,
            &self.rhs,
            None,
            cfg,
            Constraint::ZeroMean(&self.weights),
            None,
        )?;
        Ok(out.solution)
    }
}

/// Relative tolerance on `|Σ rhs|` for the compatibility check.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

pub fn apply_periodic_zero_mean(
    stiffness: &SparseMatrix,
    load: &[f64],
    grid: &Grid,
) -> Result<PeriodicSystem> {
    if !grid.is_periodic() {
        return Err(Error::BadConstraint(
            "zero-mean constraint needs a periodic cell grid".into(),
        ));
    }
    if stiffness.rows() != grid.dof_count() || load.len() != grid.dof_count() {
        return Err(Error::DimensionMismatch(format!(
            "periodic system of size {} / load {} vs {} classes",
            stiffness.rows(),
            load.len(),
            grid.dof_count()
        )));
    }
    let sum: f64 = load.iter().sum();
    let scale: f64 = load.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    let tol = COMPATIBILITY_TOL * scale;
    if sum.abs() > tol {
        return Err(Error::IncompatibleRhs { sum, tol });
    }
    let mass = assemble_mass(grid);
    let weights = mass.mul_vec(&vec![1.0; grid.dof_count()]);
    Ok(PeriodicSystem {
        matrix: stiffness.clone(),
        rhs: load.to_vec(),
        weights,
    })
}

/// Mass-weighted mean `(Σ w_i x_i) / Σ w_i`.
pub fn weighted_mean(x: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    x.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() / total
}
