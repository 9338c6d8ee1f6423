use approx::assert_relative_eq;
use homogbl_core::assembly::{
    apply_dirichlet, apply_periodic_zero_mean, assemble_load, assemble_mass, assemble_stiffness,
    BoundaryCondition,
};
use homogbl_core::cell::solve_cell_problems;
use homogbl_core::corrector::FineProblem;
use homogbl_core::grid::{build_cell_grid, CoefficientField, Grid};
use homogbl_core::solver::{cg_solve, smallest_eigenpair, SolverConfig};
use homogbl_core::sparse::SparseMatrix;
use homogbl_core::spectral::solve_spectral_pair;
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

fn tight() -> SolverConfig {
    SolverConfig {
        rel_tol: 1e-13,
        ..Default::default()
    }
}

fn dense(a: &SparseMatrix) -> DMatrix<f64> {
    let d = a.to_dense();
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| d[i][j])
}

#[test]
fn dirichlet_solve_matches_dense_lu() {
    let g = Grid::domain(8).unwrap();
    let coeff = CoefficientField::trig_isotropic(2.0, 1.0).unwrap();
    let k = assemble_stiffness(&g, &coeff, Some(0.5)).unwrap();
    let load = assemble_load(&g, |x| 1.0 + x[0] * x[1]);
    let bc = BoundaryCondition::from_fn(&g, |x| x[0] - 0.5 * x[1]);
    let sys = apply_dirichlet(&g, &k, &load, &bc).unwrap();
    let ours = sys.solve(&tight()).unwrap();
    let lu = dense(&sys.matrix)
        .lu()
        .solve(&DVector::from_vec(sys.rhs.clone()))
        .unwrap();
    let full = sys.expand(lu.as_slice());
    for (a, b) in ours.iter().zip(&full) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn cg_matches_cholesky_on_random_spd() {
    let n = 12;
    let b = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) as f64).sin());
    let a = &b * b.transpose() + DMatrix::identity(n, n) * 0.5;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)]).collect())
        .collect();
    let sp = SparseMatrix::from_dense(&rows);
    let rhs: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
    let x = cg_solve(&sp, &rhs, &tight()).unwrap();
    let exact = a.cholesky().unwrap().solve(&DVector::from_vec(rhs));
    for (p, q) in x.iter().zip(exact.iter()) {
        assert_relative_eq!(*p, *q, epsilon = 1e-9, max_relative = 1e-9);
    }
}

/// Zero-mean periodic solve against the bordered dense system.
#[test]
fn cell_problem_matches_bordered_dense_system() {
    let coeff = CoefficientField::trig_isotropic(2.0, 1.0).unwrap();
    let g = build_cell_grid(8, &coeff).unwrap();
    let cells = solve_cell_problems(&g, &coeff, &tight()).unwrap();
    let k = assemble_stiffness(&g, &coeff, None).unwrap();
    let n = g.dof_count();
    let w = assemble_mass(&g).mul_vec(&vec![1.0; n]);
    // load of the first cell problem: −∫A e₁·∇ψ, recovered from K applied to y₁
    let load = homogbl_core::assembly::assemble_load_with(&g, |_, _, y| {
        let a = homogbl_core::grid::sample_coefficient(&coeff, y, None);
        (0.0, [-a[0][0], -a[1][0]])
    });
    apply_periodic_zero_mean(&k, &load, &g).unwrap();
    let kd = dense(&k);
    let mut big = DMatrix::zeros(n + 1, n + 1);
    big.view_mut((0, 0), (n, n)).copy_from(&kd);
    for i in 0..n {
        big[(i, n)] = w[i];
        big[(n, i)] = w[i];
    }
    let mut rhs = DVector::zeros(n + 1);
    for i in 0..n {
        rhs[i] = load[i];
    }
    let sol = big.lu().solve(&rhs).unwrap();
    for i in 0..n {
        assert!((sol[i] - cells.chi[0][i]).abs() < 1e-9, "dof {i}");
    }
}

/// `λ` of `Kv = λMv` via `L⁻¹KL⁻ᵀ` with `M = LLᵀ`.
fn dense_smallest(k: &SparseMatrix, m: &SparseMatrix) -> f64 {
    let l = dense(m).cholesky().unwrap().l();
    let li = l.try_inverse().unwrap();
    let c = &li * dense(k) * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    c.symmetric_eigen().eigenvalues.min()
}

#[test]
fn eigenpair_matches_dense_generalized_problem() {
    let g = Grid::domain(8).unwrap();
    let coeff = CoefficientField::layered(1.0, 4.0).unwrap();
    let interior = g.interior_nodes();
    let k = assemble_stiffness(&g, &coeff, Some(0.25))
        .unwrap()
        .submatrix(&interior, &interior);
    let m = assemble_mass(&g).submatrix(&interior, &interior);
    let ours = smallest_eigenpair(&k, &m, &tight()).unwrap();
    let exact = dense_smallest(&k, &m);
    assert_relative_eq!(ours.lambda, exact, max_relative = 1e-9);
    // Rayleigh quotient of the returned vector
    let rq = k.bilinear(&ours.vector, &ours.vector) / m.bilinear(&ours.vector, &ours.vector);
    assert_relative_eq!(rq, ours.lambda, max_relative = 1e-9);
}

#[test]
fn identity_eigenvalue_is_two_pi_squared() {
    let id = CoefficientField::identity();
    let fine = FineProblem::new(&id, 0.25, 16).unwrap();
    assert_eq!(fine.grid.n(), 64);
    let pair = solve_spectral_pair(&fine, [[1.0, 0.0], [0.0, 1.0]], &tight()).unwrap();
    let target = 2.0 * PI * PI;
    assert!(
        (pair.lambda_hom / target - 1.0).abs() < 5e-3,
        "{}",
        pair.lambda_hom
    );
    assert!((pair.lambda_eps / pair.lambda_hom - 1.0).abs() < 1e-10);
    // amplitude scaling: A = 2I doubles λ
    let two = id.scaled(2.0);
    let fine2 = FineProblem::new(&two, 0.25, 16).unwrap();
    let pair2 = solve_spectral_pair(&fine2, [[2.0, 0.0], [0.0, 2.0]], &tight()).unwrap();
    assert_relative_eq!(pair2.lambda_eps, 2.0 * pair.lambda_eps, max_relative = 1e-9);
}

#[test]
fn eigenvalue_lies_between_ellipticity_bounds() {
    let coeff = CoefficientField::trig_isotropic(2.0, 1.0).unwrap();
    let (m, big_m) = coeff.bounds();
    let fine = FineProblem::new(&coeff, 0.25, 8).unwrap();
    let id = FineProblem::new(&CoefficientField::identity(), 0.25, 8).unwrap();
    let a_hom = [[1.9, 0.0], [0.0, 1.9]];
    let lam = solve_spectral_pair(&fine, a_hom, &tight())
        .unwrap()
        .lambda_eps;
    let lam_id = solve_spectral_pair(&id, [[1.0, 0.0], [0.0, 1.0]], &tight())
        .unwrap()
        .lambda_eps;
    assert!(lam >= m * lam_id * (1.0 - 1e-12) && lam <= big_m * lam_id * (1.0 + 1e-12));
}

#[test]
fn manufactured_load_reproduces_u0_for_constant_coefficient() {
    // with A = A^hom constant, u_ε is the Q1 approximation of u₀
    let c = CoefficientField::identity().scaled(1.5);
    let fine = FineProblem::new(&c, 0.25, 16).unwrap();
    let u0 = homogbl_core::corrector::manufacture_problem([[1.5, 0.0], [0.0, 1.5]]);
    let u = homogbl_core::corrector::solve_fine(&fine, |x| u0.load(x), &tight()).unwrap();
    let worst = (0..fine.grid.node_count())
        .map(|v| (u[v] - u0.u0(fine.grid.node_coords(v))).abs())
        .fold(0.0, f64::max);
    assert!(worst < 2e-3, "{worst}");
}
