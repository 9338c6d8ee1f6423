//! Preconditioned conjugate gradients and inverse power iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preconditioner {
    Jacobi,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rel_tol: f64,
    /// `None` means `max(500, 20·√dof)`.
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: None,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-4) {
            return Err(Error::InvalidConfig(format!(
                "rel_tol must lie in (0, 1e-4], got {}",
                self.rel_tol
            )));
        }
        if self.max_iter == Some(0) {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn max_iter_for(&self, dof: usize) -> usize {
        self.max_iter
            .unwrap_or_else(|| ((20.0 * (dof as f64).sqrt()) as usize).max(500))
    }
}

/// Subspace constraint applied during CG.
#[derive(Debug, Clone, Copy)]
pub enum Constraint<'a> {
    None,
    /// Singular periodic system with constants in the kernel: residuals are
    /// kept orthogonal to constants and the result has zero weighted mean.
    ZeroMean(&'a [f64]),
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Final `‖b − Kx‖ / ‖b‖`.
    pub residual: f64,
}

pub type Observer<'o> = &'o mut dyn FnMut(usize, &[f64]);

pub fn cg_solve(k: &SparseMatrix, rhs: &[f64], cfg: &SolverConfig) -> Result<Vec<f64>> {
    cg_solve_detailed(k, rhs, None, cfg, Constraint::None, None).map(|o| o.solution)
}

fn project_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Jacobi- (or un-) preconditioned CG with optional warm start.
///
/// `observer`, when given, sees every iterate (iteration 0 is the start).
pub fn cg_solve_detailed(
    k: &SparseMatrix,
    rhs: &[f64],
    x0: Option<&[f64]>,
    cfg: &SolverConfig,
    constraint: Constraint<'_>,
    mut observer: Option<Observer<'_>>,
) -> Result<CgOutcome> {
    cfg.validate()?;
    k.check_square("cg_solve")?;
    let n = k.rows();
    if rhs.len() != n || x0.is_some_and(|x| x.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "cg_solve: matrix {n}, rhs {}",
            rhs.len()
        )));
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalBreakdown(
            "non-finite right-hand side".into(),
        ));
    }
    let mut b = rhs.to_vec();
    if let Constraint::ZeroMean(_) = constraint {
        project_mean(&mut b);
    }
    let bnorm = norm2(&b);
    if bnorm == 0.0 {
        let solution = vec![0.0; n];
        if let Some(obs) = observer.as_mut() {
            obs(0, &solution);
        }
        return Ok(CgOutcome {
            solution,
            iterations: 0,
            residual: 0.0,
        });
    }

    let inv_diag: Vec<f64> = match cfg.preconditioner {
        Preconditioner::Jacobi => {
            let d = k.diagonal();
            if d.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::NumericalBreakdown(
                    "non-positive diagonal entry".into(),
                ));
            }
            d.iter().map(|v| 1.0 / v).collect()
        }
        Preconditioner::None => vec![1.0; n],
    };

    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = vec![0.0; n];
    k.mul_vec_into(&x, &mut r);
    r.iter_mut().zip(&b).for_each(|(ri, bi)| *ri = bi - *ri);
    if let Constraint::ZeroMean(_) = constraint {
        project_mean(&mut r);
    }
    if let Some(obs) = observer.as_mut() {
        obs(0, &x);
    }

    let tol = cfg.rel_tol * bnorm;
    let max_iter = cfg.max_iter_for(n);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut kp = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rnorm = norm2(&r);
    let mut it = 0;
    while rnorm > tol {
        if it == max_iter {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: rnorm / bnorm,
            });
        }
        k.mul_vec_into(&p, &mut kp);
        let pkp = dot(&p, &kp);
        if !pkp.is_finite() || pkp <= 0.0 {
            return Err(Error::NumericalBreakdown(format!(
                "pᵀKp = {pkp:e} at iteration {it}; matrix not positive definite on the search space"
            )));
        }
        let alpha = rz / pkp;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        if let Constraint::ZeroMean(_) = constraint {
            project_mean(&mut r);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rnorm = norm2(&r);
        if !rnorm.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "non-finite residual at iteration {it}"
            )));
        }
        it += 1;
        if let Some(obs) = observer.as_mut() {
            obs(it, &x);
        }
    }
    if let Constraint::ZeroMean(w) = constraint {
        let total: f64 = w.iter().sum();
        let mean = dot(&x, w) / total;
        x.iter_mut().for_each(|v| *v -= mean);
    }
    Ok(CgOutcome {
        solution: x,
        iterations: it,
        residual: rnorm / bnorm,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda: f64,
    /// Mass-normalised: `vᵀMv = 1`.
    pub vector: Vec<f64>,
    /// `‖Kv − λMv‖_{M⁻¹}`.
    pub residual: f64,
    pub iterations: usize,
}

const MAX_OUTER: usize = 1000;

/// Smallest eigenpair of `K v = λ M v` started from the all-ones vector.
pub fn smallest_eigenpair(
    k: &SparseMatrix,
    m: &SparseMatrix,
    cfg: &SolverConfig,
) -> Result<EigenPair> {
    let ones = vec![1.0; k.rows()];
    smallest_eigenpair_from(k, m, &ones, cfg)
}

/// Inverse power iteration from a given start vector.
///
/// Each step solves `K w = M v` by CG warm-started at `v/λ` and updates `λ`
/// by the Rayleigh quotient. Iteration stops once successive eigenvalue
/// estimates agree to `rel_tol · λ`.
pub fn smallest_eigenpair_from(
    k: &SparseMatrix,
    m: &SparseMatrix,
    start: &[f64],
    cfg: &SolverConfig,
) -> Result<EigenPair> {
    cfg.validate()?;
    k.check_square("eigen K")?;
    m.check_square("eigen M")?;
    let n = k.rows();
    if m.rows() != n || start.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "K is {n}, M is {}, start is {}",
            m.rows(),
            start.len()
        )));
    }
    let m_norm = |v: &[f64]| -> Result<f64> {
        let q = m.bilinear(v, v);
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "vᵀMv = {q:e}; M is not positive definite"
            )));
        }
        Ok(q.sqrt())
    };
    let s = m_norm(start)?;
    let mut v: Vec<f64> = start.iter().map(|x| x / s).collect();
    let mut lambda = k.bilinear(&v, &v);
    if !(lambda > 0.0) {
        return Err(Error::NumericalBreakdown(format!(
            "start Rayleigh quotient {lambda:e} <= 0"
        )));
    }
    let mut iterations = 0;
    loop {
        if iterations == MAX_OUTER {
            return Err(Error::NoConvergence {
                iterations,
                residual: f64::NAN,
            });
        }
        iterations += 1;
        let b = m.mul_vec(&v);
        let guess: Vec<f64> = v.iter().map(|x| x / lambda).collect();
        let w = cg_solve_detailed(k, &b, Some(&guess), cfg, Constraint::None, None)?.solution;
        let wn = m_norm(&w)?;
        let next = k.bilinear(&w, &w) / (wn * wn);
        v = w.iter().map(|x| x / wn).collect();
        let change = (next - lambda).abs();
        lambda = next;
        if change <= cfg.rel_tol * lambda {
            break;
        }
    }
    let residual = eigen_residual(k, m, lambda, &v)?;
    Ok(EigenPair {
        lambda,
        vector: v,
        residual,
        iterations,
    })
}

/// `‖Kv − λMv‖_{M⁻¹}`, with the mass solve done by tight CG.
pub fn eigen_residual(k: &SparseMatrix, m: &SparseMatrix, lambda: f64, v: &[f64]) -> Result<f64> {
    let kv = k.mul_vec(v);
    let mv = m.mul_vec(v);
    let r: Vec<f64> = kv.iter().zip(&mv).map(|(a, b)| a - lambda * b).collect();
    let tight = SolverConfig {
        rel_tol: 1e-13,
        max_iter: None,
        preconditioner: Preconditioner::Jacobi,
    };
    let z = cg_solve_detailed(m, &r, None, &tight, Constraint::None, None)?.solution;
    Ok(dot(&r, &z).max(0.0).sqrt())
}
