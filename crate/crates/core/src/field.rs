//! Scalar fields on the unit square: Q1 nodal fields on a domain grid and
//! analytic functions differentiated in forward mode.

use std::ops::{Add, Mul, Neg, Sub};

use crate::grid::{q1_grad, q1_shape, Grid, Point};

/// Forward-mode dual number carrying a value and a gradient in two variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; 2],
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0, 0.0] }
    }

    /// The `k`-th independent variable with value `v`.
    pub fn variable(v: f64, k: usize) -> Self {
        let mut d = [0.0, 0.0];
        d[k] = 1.0;
        Self { v, d }
    }

    pub fn sin(self) -> Self {
        let c = self.v.cos();
        Self {
            v: self.v.sin(),
            d: [c * self.d[0], c * self.d[1]],
        }
    }

    pub fn cos(self) -> Self {
        let s = -self.v.sin();
        Self {
            v: self.v.cos(),
            d: [s * self.d[0], s * self.d[1]],
        }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        Self {
            v: e,
            d: [e * self.d[0], e * self.d[1]],
        }
    }

    pub fn scale(self, c: f64) -> Self {
        Self {
            v: c * self.v,
            d: [c * self.d[0], c * self.d[1]],
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: [self.d[0] + o.d[0], self.d[1] + o.d[1]],
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            d: [self.d[0] - o.d[0], self.d[1] - o.d[1]],
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + self.v * o.d[0],
                self.d[1] * o.v + self.v * o.d[1],
            ],
        }
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(self, o: f64) -> Dual {
        Dual {
            v: self.v + o,
            d: self.d,
        }
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(self, o: f64) -> Dual {
        self.scale(o)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        self.scale(-1.0)
    }
}

pub trait ScalarField {
    fn value(&self, x: Point) -> f64;

    fn gradient(&self, x: Point) -> [f64; 2];

    /// Whether the field can be evaluated outside `[0,1]²`.
    fn extends_outside(&self) -> bool {
        false
    }

    /// Element count per side of the underlying grid, for piecewise-Q1 fields.
    fn nodal_resolution(&self) -> Option<usize> {
        None
    }

    /// Value and `y`-gradient of `y ↦ φ(origin + scale·y)` at `y`.
    ///
    /// The default applies the chain rule; analytic fields override it with
    /// a dual-number evaluation of the composed map.
    fn composed(&self, origin: Point, scale: f64, y: Point) -> (f64, [f64; 2]) {
        let x = [origin[0] + scale * y[0], origin[1] + scale * y[1]];
        let g = self.gradient(x);
        (self.value(x), [scale * g[0], scale * g[1]])
    }
}

/// An analytic field given as a function of dual numbers.
pub struct Analytic<F> {
    f: F,
}

impl<F: Fn([Dual; 2]) -> Dual> Analytic<F> {
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F: Fn([Dual; 2]) -> Dual> ScalarField for Analytic<F> {
    fn value(&self, x: Point) -> f64 {
        (self.f)([Dual::constant(x[0]), Dual::constant(x[1])]).v
    }

    fn gradient(&self, x: Point) -> [f64; 2] {
        (self.f)([Dual::variable(x[0], 0), Dual::variable(x[1], 1)]).d
    }

    fn extends_outside(&self) -> bool {
        true
    }

    fn composed(&self, origin: Point, scale: f64, y: Point) -> (f64, [f64; 2]) {
        let yd = [Dual::variable(y[0], 0), Dual::variable(y[1], 1)];
        let x = [
            yd[0].scale(scale) + origin[0],
            yd[1].scale(scale) + origin[1],
        ];
        let r = (self.f)(x);
        (r.v, r.d)
    }
}

/// A Q1 field given by its values at the raw nodes of a domain grid.
#[derive(Debug, Clone, Copy)]
pub struct NodalField<'a> {
    pub grid: &'a Grid,
    pub values: &'a [f64],
}

impl<'a> NodalField<'a> {
    pub fn new(grid: &'a Grid, values: &'a [f64]) -> Self {
        assert_eq!(values.len(), grid.node_count(), "nodal field length");
        Self { grid, values }
    }

    /// Element containing `x` (half-open, `x = 1` goes to the last element)
    /// and the local coordinates within it.
    fn locate(&self, x: Point) -> (usize, f64, f64) {
        let n = self.grid.n();
        let loc = |c: f64| {
            let s = c * n as f64;
            let i = (s.floor().max(0.0) as usize).min(n - 1);
            (i, s - i as f64)
        };
        let (i, s) = loc(x[0]);
        let (j, t) = loc(x[1]);
        (j * n + i, s, t)
    }
}

impl ScalarField for NodalField<'_> {
    fn nodal_resolution(&self) -> Option<usize> {
        Some(self.grid.n())
    }

    fn value(&self, x: Point) -> f64 {
        let (e, s, t) = self.locate(x);
        let nodes = self.grid.element_nodes(e);
        let phi = q1_shape(s, t);
        (0..4).map(|a| self.values[nodes[a]] * phi[a]).sum()
    }

    fn gradient(&self, x: Point) -> [f64; 2] {
        let (e, s, t) = self.locate(x);
        let nodes = self.grid.element_nodes(e);
        let g = q1_grad(s, t);
        let n = self.grid.n() as f64;
        let mut out = [0.0; 2];
        for a in 0..4 {
            out[0] += self.values[nodes[a]] * g[a][0] * n;
            out[1] += self.values[nodes[a]] * g[a][1] * n;
        }
        out
    }
}

/// Nodal samples of any field on a domain grid.
pub fn interpolate<F: Fn(Point) -> f64>(grid: &Grid, f: F) -> Vec<f64> {
    (0..grid.node_count())
        .map(|v| f(grid.node_coords(v)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn dual_derivatives() {
        let f = Analytic::new(|x: [Dual; 2]| (x[0] * PI).sin() * (x[1] * 2.0).cos() + x[0] * x[1]);
        let p = [0.3, 0.7];
        let g = f.gradient(p);
        let e1 = PI * (PI * 0.3).cos() * (1.4f64).cos() + 0.7;
        let e2 = -2.0 * (PI * 0.3).sin() * (1.4f64).sin() + 0.3;
        assert!((g[0] - e1).abs() < 1e-14 && (g[1] - e2).abs() < 1e-14);
    }

    #[test]
    fn nodal_field_reproduces_bilinear() {
        let g = Grid::domain(5).unwrap();
        let vals = interpolate(&g, |x| 1.0 + 2.0 * x[0] - x[1] + 3.0 * x[0] * x[1]);
        let f = NodalField::new(&g, &vals);
        for p in [[0.13, 0.77], [1.0, 1.0], [0.0, 0.5], [0.4, 0.4]] {
            let exact = 1.0 + 2.0 * p[0] - p[1] + 3.0 * p[0] * p[1];
            assert!((f.value(p) - exact).abs() < 1e-13);
        }
    }
}
