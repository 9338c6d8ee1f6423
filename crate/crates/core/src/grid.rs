//! Structured uniform quadrilateral grids on the unit square and the periodic
//! coefficient families sampled on them.
//!
//! Raw nodes are numbered row by row, `index = j * (n + 1) + i`, with `i`
//! running along `x₁`. Element `(ei, ej)` has index `ej * n + ei` and its
//! nodes are listed counter-clockwise starting at the lower-left corner.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Point = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

/// Abscissae of the two-point Gauss rule on `[0, 1]`; both weights are 1/2.
pub const GAUSS_1D: [f64; 2] = [
    0.5 - 0.5 / 1.732_050_807_568_877_2,
    0.5 + 0.5 / 1.732_050_807_568_877_2,
];

/// Fractional part with the half-open convention `{y} ∈ [0, 1)`.
pub fn frac(y: f64) -> f64 {
    let f = y - y.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum CoefficientFamily {
    Identity,
    /// `a(y) = a0 + a1 sin(2πy₁) sin(2πy₂)`
    TrigIsotropic {
        a0: f64,
        a1: f64,
    },
    /// `a(y) = alpha` for `{y₁} < 1/2`, `beta` otherwise.
    Layered {
        alpha: f64,
        beta: f64,
    },
    /// `alpha` on the two diagonal quarter cells, `beta` on the others.
    Checkerboard {
        alpha: f64,
        beta: f64,
    },
}

/// A Y-periodic isotropic coefficient `A(y) = scale · a(y) · I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    pub family: CoefficientFamily,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl CoefficientField {
    pub fn new(family: CoefficientFamily) -> Result<Self> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let ok = match family {
            CoefficientFamily::Identity => true,
            CoefficientFamily::TrigIsotropic { a0, a1 } => {
                a0.is_finite() && a1.is_finite() && a0 > a1.abs()
            }
            CoefficientFamily::Layered { alpha, beta }
            | CoefficientFamily::Checkerboard { alpha, beta } => positive(alpha) && positive(beta),
        };
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "coefficient parameters are not uniformly elliptic: {family:?}"
            )));
        }
        Ok(Self { family, scale: 1.0 })
    }

    pub fn identity() -> Self {
        Self {
            family: CoefficientFamily::Identity,
            scale: 1.0,
        }
    }

    pub fn trig_isotropic(a0: f64, a1: f64) -> Result<Self> {
        Self::new(CoefficientFamily::TrigIsotropic { a0, a1 })
    }

    pub fn layered(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(CoefficientFamily::Layered { alpha, beta })
    }

    pub fn checkerboard(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(CoefficientFamily::Checkerboard { alpha, beta })
    }

    /// The same field multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            family: self.family,
            scale: self.scale * c,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            CoefficientFamily::Identity => "identity",
            CoefficientFamily::TrigIsotropic { .. } => "trig-isotropic",
            CoefficientFamily::Layered { .. } => "layered",
            CoefficientFamily::Checkerboard { .. } => "checkerboard",
        }
    }

    /// True for the families with jumps across `y₁ = 1/2` (and `y₂ = 1/2`).
    pub fn is_discontinuous(&self) -> bool {
        matches!(
            self.family,
            CoefficientFamily::Layered { .. } | CoefficientFamily::Checkerboard { .. }
        )
    }

    /// True when `A` does not depend on `y`.
    pub fn is_constant(&self) -> bool {
        match self.family {
            CoefficientFamily::Identity => true,
            CoefficientFamily::TrigIsotropic { a1, .. } => a1 == 0.0,
            CoefficientFamily::Layered { alpha, beta }
            | CoefficientFamily::Checkerboard { alpha, beta } => alpha == beta,
        }
    }

    /// Scalar conductivity at a cell point; `y` is reduced modulo 1.
    pub fn scalar(&self, y: Point) -> f64 {
        let (y1, y2) = (frac(y[0]), frac(y[1]));
        let a = match self.family {
            CoefficientFamily::Identity => 1.0,
            CoefficientFamily::TrigIsotropic { a0, a1 } => {
                a0 + a1 * (2.0 * PI * y1).sin() * (2.0 * PI * y2).sin()
            }
            CoefficientFamily::Layered { alpha, beta } => {
                if y1 < 0.5 {
                    alpha
                } else {
                    beta
                }
            }
            CoefficientFamily::Checkerboard { alpha, beta } => {
                if (y1 < 0.5) == (y2 < 0.5) {
                    alpha
                } else {
                    beta
                }
            }
        };
        self.scale * a
    }

    pub fn evaluate(&self, y: Point) -> Mat2 {
        let a = self.scalar(y);
        [[a, 0.0], [0.0, a]]
    }

    /// Ellipticity bounds `(m, M)`.
    pub fn bounds(&self) -> (f64, f64) {
        let (lo, hi) = match self.family {
            CoefficientFamily::Identity => (1.0, 1.0),
            CoefficientFamily::TrigIsotropic { a0, a1 } => (a0 - a1.abs(), a0 + a1.abs()),
            CoefficientFamily::Layered { alpha, beta }
            | CoefficientFamily::Checkerboard { alpha, beta } => (alpha.min(beta), alpha.max(beta)),
        };
        (self.scale * lo, self.scale * hi)
    }
}

/// `A({x/ε}_Y)`, or `A(x)` read directly on the cell when `eps` is `None`.
pub fn sample_coefficient(coeff: &CoefficientField, x: Point, eps: Option<f64>) -> Mat2 {
    match eps {
        Some(e) => coeff.evaluate([x[0] / e, x[1] / e]),
        None => coeff.evaluate(x),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKind {
    CellPeriodic,
    DomainDirichlet,
}

/// Uniform `n × n` quadrilateral grid of the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: usize,
    kind: GridKind,
    boundary_nodes: Vec<usize>,
    /// Raw node -> periodic class (cell kind); identity map for domain grids.
    dof_map: Vec<usize>,
}

impl Grid {
    pub fn cell(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidResolution(n));
        }
        let np = n + 1;
        let dof_map = (0..np * np)
            .map(|idx| {
                let (i, j) = (idx % np, idx / np);
                (j % n) * n + (i % n)
            })
            .collect();
        Ok(Self {
            n,
            kind: GridKind::CellPeriodic,
            boundary_nodes: Vec::new(),
            dof_map,
        })
    }

    pub fn domain(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidResolution(n));
        }
        let np = n + 1;
        let boundary_nodes = (0..np * np)
            .filter(|&idx| {
                let (i, j) = (idx % np, idx / np);
                i == 0 || j == 0 || i == n || j == n
            })
            .collect();
        Ok(Self {
            n,
            kind: GridKind::DomainDirichlet,
            boundary_nodes,
            dof_map: (0..np * np).collect(),
        })
    }

    pub fn dimension(&self) -> usize {
        2
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn is_periodic(&self) -> bool {
        self.kind == GridKind::CellPeriodic
    }

    pub fn node_count(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    pub fn element_count(&self) -> usize {
        self.n * self.n
    }

    /// Number of unknowns: periodic classes for cell grids, raw nodes otherwise.
    pub fn dof_count(&self) -> usize {
        match self.kind {
            GridKind::CellPeriodic => self.n * self.n,
            GridKind::DomainDirichlet => self.node_count(),
        }
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    pub fn node_ij(&self, idx: usize) -> (usize, usize) {
        (idx % (self.n + 1), idx / (self.n + 1))
    }

    /// Coordinates computed as `i / n` so no spacing error accumulates.
    pub fn node_coords(&self, idx: usize) -> Point {
        let (i, j) = self.node_ij(idx);
        [i as f64 / self.n as f64, j as f64 / self.n as f64]
    }

    pub fn element_ij(&self, e: usize) -> (usize, usize) {
        (e % self.n, e / self.n)
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (ei, ej) = self.element_ij(e);
        [
            self.node_index(ei, ej),
            self.node_index(ei + 1, ej),
            self.node_index(ei + 1, ej + 1),
            self.node_index(ei, ej + 1),
        ]
    }

    pub fn element_dofs(&self, e: usize) -> [usize; 4] {
        self.element_nodes(e).map(|v| self.dof_map[v])
    }

    /// Lower-left corner of element `e`.
    pub fn element_origin(&self, e: usize) -> Point {
        let (ei, ej) = self.element_ij(e);
        [ei as f64 / self.n as f64, ej as f64 / self.n as f64]
    }

    /// Physical coordinates of the four Gauss points of element `e`.
    pub fn gauss_points(&self, e: usize) -> [Point; 4] {
        let o = self.element_origin(e);
        let h = self.h();
        let mut pts = [[0.0; 2]; 4];
        for (q, p) in pts.iter_mut().enumerate() {
            *p = [o[0] + GAUSS_1D[q % 2] * h, o[1] + GAUSS_1D[q / 2] * h];
        }
        pts
    }

    pub fn dof_of_node(&self, idx: usize) -> usize {
        self.dof_map[idx]
    }

    pub fn dof_map(&self) -> &[usize] {
        &self.dof_map
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let (i, j) = self.node_ij(idx);
        self.kind == GridKind::DomainDirichlet && (i == 0 || j == 0 || i == self.n || j == self.n)
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&v| !self.is_boundary(v))
            .collect()
    }

    /// Raw nodes identified with each periodic class (empty for domain grids).
    pub fn periodic_classes(&self) -> Vec<Vec<usize>> {
        if !self.is_periodic() {
            return Vec::new();
        }
        let mut classes = vec![Vec::new(); self.dof_count()];
        for (raw, &c) in self.dof_map.iter().enumerate() {
            classes[c].push(raw);
        }
        classes
    }

    /// Interfaces of discontinuous families must fall on grid lines.
    pub fn check_coefficient(&self, coeff: &CoefficientField) -> Result<()> {
        if coeff.is_discontinuous() && !self.n.is_multiple_of(2) {
            return Err(Error::InterfaceMisalignment(self.n));
        }
        Ok(())
    }

    /// Expands a dof vector to one value per raw node.
    pub fn to_nodal(&self, dofs: &[f64]) -> Vec<f64> {
        self.dof_map.iter().map(|&d| dofs[d]).collect()
    }
}

pub fn build_cell_grid(n: usize, coeff: &CoefficientField) -> Result<Grid> {
    let grid = Grid::cell(n)?;
    grid.check_coefficient(coeff)?;
    Ok(grid)
}

pub fn build_domain_grid(n: usize) -> Result<Grid> {
    Grid::domain(n)
}

/// Bilinear shape functions on the reference square `[0,1]²` at `(s, t)`.
pub fn q1_shape(s: f64, t: f64) -> [f64; 4] {
    [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t]
}

/// Reference gradients `(∂/∂s, ∂/∂t)` of the bilinear shape functions.
pub fn q1_grad(s: f64, t: f64) -> [[f64; 2]; 4] {
    [
        [-(1.0 - t), -(1.0 - s)],
        [1.0 - t, -s],
        [t, s],
        [-t, 1.0 - s],
    ]
}
