//! Periodic unfolding `T_ε`, cell averages `M_Y^ε`, the interpolation `Q_ε`
//! of cell averages and the boundary cutoff `ρ_ε`.
//!
//! Only `ε = 1/m` is supported, so the square is an exact union of `m × m`
//! ε-cells. Cell `ξ = (ξ₁, ξ₂)` is stored at index `ξ₂ m + ξ₁`.

use crate::assembly::gauss_ref;
use crate::cell::qp_gradients;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{q1_grad, Grid, Point};

/// `m` with `eps = 1/m`, or an error when `eps` is not a reciprocal integer.
pub fn cells_per_side(eps: f64) -> Result<usize> {
    if !(eps.is_finite() && eps > 0.0 && eps <= 1.0) {
        return Err(Error::UnsupportedScale(eps));
    }
    let m = (1.0 / eps).round();
    if (m * eps - 1.0).abs() > 1e-12 {
        return Err(Error::UnsupportedScale(eps));
    }
    Ok(m as usize)
}

fn cell_point(m: usize, xi: (usize, usize), y: Point) -> Point {
    let mf = m as f64;
    [(xi.0 as f64 + y[0]) / mf, (xi.1 as f64 + y[1]) / mf]
}

/// `T_ε(φ)(x, y) = φ(ε[x/ε] + εy)` for `x` in cell `ξ`.
pub fn unfolded_value(
    field: &dyn ScalarField,
    eps: f64,
    xi: (usize, usize),
    y: Point,
) -> Result<f64> {
    let m = cells_per_side(eps)?;
    if xi.0 >= m || xi.1 >= m {
        return Err(Error::DimensionMismatch(format!(
            "cell {xi:?} outside {m}×{m}"
        )));
    }
    Ok(field.value(cell_point(m, xi, y)))
}

/// Samples of `φ(εξ + εy)` at the Gauss points `y` of a cell sample grid,
/// with the `y`-gradient of the same map.
#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldedField {
    pub eps: f64,
    pub m: usize,
    pub sample_n: usize,
    pub values: Vec<f64>,
    pub grad_y: Vec<[f64; 2]>,
}

impl UnfoldedField {
    pub fn samples_per_cell(&self) -> usize {
        4 * self.sample_n * self.sample_n
    }

    pub fn cell_count(&self) -> usize {
        self.m * self.m
    }

    /// Sample `p` (`4 e + q` on the sample grid) of cell `ξ`.
    pub fn sample(&self, xi: (usize, usize), p: usize) -> f64 {
        self.values[(xi.1 * self.m + xi.0) * self.samples_per_cell() + p]
    }

    pub fn cell_samples(&self, cell: usize) -> &[f64] {
        let s = self.samples_per_cell();
        &self.values[cell * s..(cell + 1) * s]
    }

    /// Quadrature weight of one sample relative to `|Y| = 1`.
    pub fn sample_weight(&self) -> f64 {
        0.25 / (self.sample_n * self.sample_n) as f64
    }

    /// Pointwise combination of two unfoldings on the same layout.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.m != other.m || self.sample_n != other.sample_n {
            return Err(Error::GridIncompatibility(
                "unfoldings use different layouts".into(),
            ));
        }
        Ok(Self {
            eps: self.eps,
            m: self.m,
            sample_n: self.sample_n,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
            grad_y: Vec::new(),
        })
    }
}

/// Unfolds `field` with respect to `eps`, sampling on the Gauss points of
/// `sample_grid`.
///
/// For analytic fields the `y`-gradient comes from differentiating the
/// composed map. For piecewise-Q1 fields it is the gradient of the Q1
/// interpolant on the sample grid, which reproduces the field exactly when
/// the field's per-cell resolution divides the sample resolution.
pub fn unfold(field: &dyn ScalarField, eps: f64, sample_grid: &Grid) -> Result<UnfoldedField> {
    let m = cells_per_side(eps)?;
    let ns = sample_grid.n();
    let nodal = match field.nodal_resolution() {
        Some(nf) => {
            if nf % m != 0 || !ns.is_multiple_of(nf / m) {
                return Err(Error::GridIncompatibility(format!(
                    "field resolution {nf} is not compatible with {m} cells of {ns} samples"
                )));
            }
            true
        }
        None => false,
    };
    let spc = 4 * ns * ns;
    let mut values = Vec::with_capacity(m * m * spc);
    let mut grad_y = Vec::with_capacity(m * m * spc);
    let grads: [[[f64; 2]; 4]; 4] = std::array::from_fn(|q| {
        let (s, t) = gauss_ref(q);
        q1_grad(s, t)
    });
    let origin = |xi: (usize, usize)| [xi.0 as f64 * eps, xi.1 as f64 * eps];
    for x2 in 0..m {
        for x1 in 0..m {
            let xi = (x1, x2);
            for e in 0..sample_grid.element_count() {
                let pts = sample_grid.gauss_points(e);
                if nodal {
                    let corners = sample_grid
                        .element_nodes(e)
                        .map(|v| field.value(cell_point(m, xi, sample_grid.node_coords(v))));
                    for (q, y) in pts.iter().enumerate() {
                        values.push(field.value(cell_point(m, xi, *y)));
                        let mut g = [0.0; 2];
                        for a in 0..4 {
                            g[0] += corners[a] * grads[q][a][0] * ns as f64;
                            g[1] += corners[a] * grads[q][a][1] * ns as f64;
                        }
                        grad_y.push(g);
                    }
                } else {
                    for y in pts {
                        let (v, g) = field.composed(origin(xi), eps, y);
                        values.push(v);
                        grad_y.push(g);
                    }
                }
            }
        }
    }
    Ok(UnfoldedField {
        eps,
        m,
        sample_n: ns,
        values,
        grad_y,
    })
}

/// `(1/|Y|) ∫_{Ω×Y} T_ε(u)`, which equals `∫_Ω u`.
pub fn integrate_unfolded(u: &UnfoldedField) -> f64 {
    let w = u.sample_weight() * u.eps * u.eps;
    (0..u.cell_count())
        .map(|c| u.cell_samples(c).iter().sum::<f64>() * w)
        .sum()
}

/// `max |∇_y T_ε(u) − ε T_ε(∇u)|` over all samples.
pub fn gradient_rule_check(field: &dyn ScalarField, eps: f64, sample_grid: &Grid) -> Result<f64> {
    let u = unfold(field, eps, sample_grid)?;
    let mut worst = 0.0f64;
    let mut k = 0;
    for x2 in 0..u.m {
        for x1 in 0..u.m {
            for e in 0..sample_grid.element_count() {
                for y in sample_grid.gauss_points(e) {
                    let g = field.gradient(cell_point(u.m, (x1, x2), y));
                    let gy = u.grad_y[k];
                    worst = worst
                        .max((gy[0] - eps * g[0]).abs())
                        .max((gy[1] - eps * g[1]).abs());
                    k += 1;
                }
            }
        }
    }
    Ok(worst)
}

/// Cell averages `M_Y^ε(φ)` on the cells `0 ≤ ξ₁, ξ₂ ≤ m`, including the
/// layer just outside the top and right edges that `Q_ε` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAverageField {
    pub eps: f64,
    pub m: usize,
    averages: Vec<f64>,
}

impl CellAverageField {
    /// `M_Y^ε(φ)(εξ)`; indices up to `m` reach the exterior layer.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.averages[j * (self.m + 1) + i]
    }

    /// Value of the piecewise-constant function `M_Y^ε(φ)` at `x ∈ Ω`.
    pub fn value(&self, x: Point) -> f64 {
        let (i, _) = locate(self.m, x[0]);
        let (j, _) = locate(self.m, x[1]);
        self.at(i, j)
    }
}

fn locate(m: usize, c: f64) -> (usize, f64) {
    let s = c * m as f64;
    let i = (s.floor().max(0.0) as usize).min(m - 1);
    (i, s - i as f64)
}

/// Per-cell Gauss means of `field`.
///
/// Exterior cells are evaluated directly when the field extends beyond the
/// square and copy the nearest interior average otherwise.
pub fn cell_average(
    field: &dyn ScalarField,
    eps: f64,
    sample_grid: &Grid,
) -> Result<CellAverageField> {
    let m = cells_per_side(eps)?;
    let outside = field.extends_outside();
    let ns = sample_grid.n();
    let w = 0.25 / (ns * ns) as f64;
    let pts: Vec<Point> = (0..sample_grid.element_count())
        .flat_map(|e| sample_grid.gauss_points(e))
        .collect();
    let mean = |xi: (usize, usize)| {
        pts.iter()
            .map(|y| field.value(cell_point(m, xi, *y)))
            .sum::<f64>()
            * w
    };
    let mut averages = vec![0.0; (m + 1) * (m + 1)];
    for j in 0..m {
        for i in 0..m {
            averages[j * (m + 1) + i] = mean((i, j));
        }
    }
    for j in 0..=m {
        for i in 0..=m {
            if i < m && j < m {
                continue;
            }
            averages[j * (m + 1) + i] = if outside {
                mean((i, j))
            } else {
                averages[j.min(m - 1) * (m + 1) + i.min(m - 1)]
            };
        }
    }
    Ok(CellAverageField { eps, m, averages })
}

/// `Q_ε(φ)`: the continuous multilinear interpolation of cell averages,
/// taking `M_Y^ε(φ)(ε(ξ + i))` at the corner `ε(ξ + i)` of cell `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct QInterp {
    pub averages: CellAverageField,
}

pub fn q_interp(averages: CellAverageField) -> QInterp {
    QInterp { averages }
}

impl QInterp {
    fn corners(&self, x: Point) -> ([f64; 4], f64, f64) {
        let m = self.averages.m;
        let (i, s) = locate(m, x[0]);
        let (j, t) = locate(m, x[1]);
        let a = &self.averages;
        (
            [
                a.at(i, j),
                a.at(i + 1, j),
                a.at(i + 1, j + 1),
                a.at(i, j + 1),
            ],
            s,
            t,
        )
    }
}

impl ScalarField for QInterp {
    fn value(&self, x: Point) -> f64 {
        let (c, s, t) = self.corners(x);
        let phi = crate::grid::q1_shape(s, t);
        (0..4).map(|a| c[a] * phi[a]).sum()
    }

    fn gradient(&self, x: Point) -> [f64; 2] {
        let (c, s, t) = self.corners(x);
        let g = q1_grad(s, t);
        let inv = self.averages.m as f64;
        let mut out = [0.0; 2];
        for a in 0..4 {
            out[0] += c[a] * g[a][0] * inv;
            out[1] += c[a] * g[a][1] * inv;
        }
        out
    }
}

/// `ρ_ε = min(dist(x, ∂Ω)/ε, 1)` on the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoCutoff {
    pub eps: f64,
}

pub fn rho_cutoff(eps: f64) -> RhoCutoff {
    RhoCutoff { eps }
}

impl RhoCutoff {
    fn distance(x: Point) -> (f64, [f64; 2]) {
        let cands = [
            (x[0], [1.0, 0.0]),
            (1.0 - x[0], [-1.0, 0.0]),
            (x[1], [0.0, 1.0]),
            (1.0 - x[1], [0.0, -1.0]),
        ];
        cands
            .into_iter()
            .fold((f64::INFINITY, [0.0, 0.0]), |best, c| {
                if c.0 < best.0 {
                    c
                } else {
                    best
                }
            })
    }
}

impl ScalarField for RhoCutoff {
    fn value(&self, x: Point) -> f64 {
        (Self::distance(x).0 / self.eps).min(1.0)
    }

    /// Gradient almost everywhere.
    fn gradient(&self, x: Point) -> [f64; 2] {
        let (d, g) = Self::distance(x);
        if d >= self.eps {
            [0.0, 0.0]
        } else {
            [g[0] / self.eps, g[1] / self.eps]
        }
    }
}

/// The three local-average estimates for a smooth `v`, each divided by
/// `ε‖∇v‖_{L²}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragingRatios {
    /// `‖v − M_Y^ε(v)‖_{L²(Ω)}`
    pub mean: f64,
    /// `‖v − T_ε(v)‖_{L²(Ω×Y)}`
    pub unfolding: f64,
    /// `‖Q_ε(v) − M_Y^ε(v)‖_{L²(Ω)}`
    pub interpolation: f64,
}

pub fn averaging_ratios(
    v: &dyn ScalarField,
    eps: f64,
    sample_grid: &Grid,
) -> Result<AveragingRatios> {
    let u = unfold(v, eps, sample_grid)?;
    let avg = cell_average(v, eps, sample_grid)?;
    let q = q_interp(avg.clone());
    let m = u.m;
    let w = u.sample_weight() * eps * eps;
    let pts: Vec<Point> = (0..sample_grid.element_count())
        .flat_map(|e| sample_grid.gauss_points(e))
        .collect();
    let (mut grad2, mut mean2, mut unf2, mut interp2) = (0.0, 0.0, 0.0, 0.0);
    for x2 in 0..m {
        for x1 in 0..m {
            let c = x2 * m + x1;
            let samples = u.cell_samples(c);
            let mv = avg.at(x1, x2);
            for (p, y) in pts.iter().enumerate() {
                let gy = u.grad_y[c * pts.len() + p];
                grad2 += w * (gy[0] * gy[0] + gy[1] * gy[1]) / (eps * eps);
                mean2 += w * (samples[p] - mv).powi(2);
                interp2 += w * (q.value(cell_point(m, (x1, x2), *y)) - mv).powi(2);
                // x ranges over this cell, y over Y: both sampled the same way
                let sw = u.sample_weight();
                unf2 += w * samples
                    .iter()
                    .map(|s| sw * (samples[p] - s).powi(2))
                    .sum::<f64>();
            }
        }
    }
    let scale = eps * grad2.sqrt();
    Ok(AveragingRatios {
        mean: mean2.sqrt() / scale,
        unfolding: unf2.sqrt() / scale,
        interpolation: interp2.sqrt() / scale,
    })
}

/// `∫_Ω |∇_yΦ(x/ε)|² (ψ − M_Y^ε ψ)² dx / (ε² ‖ψ‖²_{H¹})` for a periodic cell
/// field `Φ` given as dofs on `cell_grid`; the cell grid also serves as the
/// sample grid.
pub fn local_average_ratio(
    cell_grid: &Grid,
    phi: &[f64],
    psi: &dyn ScalarField,
    eps: f64,
) -> Result<f64> {
    if !cell_grid.is_periodic() || phi.len() != cell_grid.dof_count() {
        return Err(Error::GridIncompatibility(
            "Φ must be a dof vector on a periodic cell grid".into(),
        ));
    }
    let grad_phi = qp_gradients(cell_grid, phi);
    let u = unfold(psi, eps, cell_grid)?;
    let avg = cell_average(psi, eps, cell_grid)?;
    let w = u.sample_weight() * eps * eps;
    let spc = u.samples_per_cell();
    let (mut lhs, mut h1) = (0.0, 0.0);
    for x2 in 0..u.m {
        for x1 in 0..u.m {
            let c = x2 * u.m + x1;
            let mv = avg.at(x1, x2);
            for p in 0..spc {
                let s = u.values[c * spc + p];
                let gp = grad_phi[p];
                lhs += w * (gp[0] * gp[0] + gp[1] * gp[1]) * (s - mv).powi(2);
                let gy = u.grad_y[c * spc + p];
                h1 += w * (s * s + (gy[0] * gy[0] + gy[1] * gy[1]) / (eps * eps));
            }
        }
    }
    Ok(lhs / (eps * eps * h1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Analytic, Dual};

    #[test]
    fn reciprocal_integers_only() {
        assert_eq!(cells_per_side(0.25).unwrap(), 4);
        assert_eq!(cells_per_side(1.0 / 3.0).unwrap(), 3);
        assert!(matches!(
            cells_per_side(0.3),
            Err(Error::UnsupportedScale(_))
        ));
        assert!(cells_per_side(0.0).is_err());
    }

    #[test]
    fn unfolding_definition_sample() {
        // the only Gauss-free sample we can read off: use a 1×1 grid's centre via averages
        let f = Analytic::new(|x: [Dual; 2]| x[0]);
        let g = Grid::cell(2).unwrap();
        let avg = cell_average(&f, 0.5, &g).unwrap();
        assert!((avg.at(0, 0) - 0.25).abs() < 1e-15);
        assert!((avg.at(1, 0) - 0.75).abs() < 1e-15);
        // exterior layer evaluated analytically
        assert!((avg.at(2, 0) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn unfolded_value_of_x1() {
        let f = Analytic::new(|x: [Dual; 2]| x[0]);
        assert_eq!(unfolded_value(&f, 0.5, (1, 0), [0.5, 0.5]).unwrap(), 0.75);
        assert!(unfolded_value(&f, 0.5, (2, 0), [0.5, 0.5]).is_err());
    }

    #[test]
    fn constants_survive_everything() {
        let f = Analytic::new(|_: [Dual; 2]| Dual::constant(3.5));
        let g = Grid::cell(2).unwrap();
        let u = unfold(&f, 0.25, &g).unwrap();
        assert!(u.values.iter().all(|&v| v == 3.5));
        let q = q_interp(cell_average(&f, 0.25, &g).unwrap());
        assert!((q.value([0.37, 0.91]) - 3.5).abs() < 1e-15);
    }

    #[test]
    fn affine_shift_identity() {
        let f = Analytic::new(|x: [Dual; 2]| x[0] * 2.0 - x[1] * 3.0 + 1.0);
        let g = Grid::cell(2).unwrap();
        let eps = 0.125;
        let q = q_interp(cell_average(&f, eps, &g).unwrap());
        for p in [[0.1, 0.2], [0.93, 0.05], [0.5, 0.999]] {
            let shifted = f.value([p[0] + eps / 2.0, p[1] + eps / 2.0]);
            assert!((q.value(p) - shifted).abs() < 1e-13);
        }
    }

    #[test]
    fn rho_examples() {
        let r = rho_cutoff(0.25);
        assert_eq!(r.value([0.5, 0.5]), 1.0);
        assert!((r.value([0.125, 0.5]) - 0.5).abs() < 1e-15);
        assert!((r.gradient([0.1, 0.5])[0] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn local_average_trivial_cases() {
        let g = Grid::cell(4).unwrap();
        let psi = Analytic::new(|x: [Dual; 2]| (x[0] * 3.0).sin());
        let flat = vec![1.0; g.dof_count()];
        assert_eq!(local_average_ratio(&g, &flat, &psi, 0.25).unwrap(), 0.0);
        let c = Analytic::new(|_: [Dual; 2]| Dual::constant(2.0));
        let phi: Vec<f64> = (0..g.dof_count()).map(|i| (i as f64).sin()).collect();
        assert!(local_average_ratio(&g, &phi, &c, 0.25).unwrap() < 1e-28);
    }
}
