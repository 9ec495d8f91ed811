//! Periodic cubic-spline interpolation on uniformly spaced samples.
//!
//! The spline is C² across the wrap point; coefficients come from the cyclic
//! tridiagonal system for the nodal second derivatives, solved by the Thomas
//! algorithm plus a rank-one (Sherman–Morrison) correction for the corner
//! entries. Used for coarse-graining lattice spins onto a continuum grid and
//! for arc-length reparametrisation of closed curves.

use crate::grid::Field3;
use crate::{CoreError, Result};

/// C² interpolant of one real periodic sample set with uniform spacing `h`;
/// the period is `n·h`.
#[derive(Clone, Debug)]
pub struct PeriodicSpline {
    y: Vec<f64>,
    /// nodal second derivatives
    m: Vec<f64>,
    h: f64,
}

/// Solves the cyclic tridiagonal system with constant stencil
/// (a, b, a) and wrap-around corners, via Thomas + Sherman–Morrison.
fn solve_cyclic_constant(a: f64, b: f64, d: &[f64]) -> Vec<f64> {
    let n = d.len();
    debug_assert!(n >= 3);
    let gamma = -b;
    // modified diagonal for the non-cyclic solve
    let mut diag = vec![b; n];
    diag[0] = b - gamma;
    diag[n - 1] = b - a * a / gamma;

    let thomas = |rhs: &[f64], diag: &[f64]| -> Vec<f64> {
        let mut c_star = vec![0.0; n];
        let mut d_star = vec![0.0; n];
        c_star[0] = a / diag[0];
        d_star[0] = rhs[0] / diag[0];
        for i in 1..n {
            let denom = diag[i] - a * c_star[i - 1];
            c_star[i] = if i + 1 < n { a / denom } else { 0.0 };
            d_star[i] = (rhs[i] - a * d_star[i - 1]) / denom;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d_star[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d_star[i] - c_star[i] * x[i + 1];
        }
        x
    };

    let x1 = thomas(d, &diag);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = a;
    let x2 = thomas(&u, &diag);
    // v = (1, 0, …, 0, a/γ)
    let vx1 = x1[0] + a / gamma * x1[n - 1];
    let vx2 = x2[0] + a / gamma * x2[n - 1];
    let factor = vx1 / (1.0 + vx2);
    (0..n).map(|i| x1[i] - factor * x2[i]).collect()
}

impl PeriodicSpline {
    pub fn new(values: &[f64], h: f64) -> Result<Self> {
        let n = values.len();
        if n < 4 {
            return Err(CoreError::InvalidInput(format!(
                "periodic spline needs at least 4 samples, got {n}"
            )));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(CoreError::InvalidInput(format!("spline spacing h = {h}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("spline input samples".into()));
        }
        // continuity of y' at the nodes:
        //   (h/6) M_{i-1} + (2h/3) M_i + (h/6) M_{i+1} = (y_{i+1} - 2y_i + y_{i-1}) / h
        let d: Vec<f64> = (0..n)
            .map(|i| {
                let ym = values[(i + n - 1) % n];
                let yp = values[(i + 1) % n];
                (yp - 2.0 * values[i] + ym) / h
            })
            .collect();
        let m = solve_cyclic_constant(h / 6.0, 2.0 * h / 3.0, &d);
        Ok(PeriodicSpline { y: values.to_vec(), m, h })
    }

    pub fn period(&self) -> f64 {
        self.h * self.y.len() as f64
    }

    fn locate(&self, s: f64) -> (usize, usize, f64) {
        let l = self.period();
        let mut sw = s % l;
        if sw < 0.0 {
            sw += l;
        }
        let mut i = (sw / self.h).floor() as usize;
        if i >= self.y.len() {
            i = self.y.len() - 1;
        }
        let xi = sw - i as f64 * self.h;
        (i, (i + 1) % self.y.len(), xi)
    }

    /// Interpolated value at arc position `s` (wrapped into the period).
    pub fn eval(&self, s: f64) -> f64 {
        let (i, j, xi) = self.locate(s);
        let h = self.h;
        let (mi, mj) = (self.m[i], self.m[j]);
        let (yi, yj) = (self.y[i], self.y[j]);
        let a = h - xi;
        mi * a * a * a / (6.0 * h)
            + mj * xi * xi * xi / (6.0 * h)
            + (yi / h - mi * h / 6.0) * a
            + (yj / h - mj * h / 6.0) * xi
    }

    /// First derivative of the interpolant at `s`.
    pub fn eval_deriv(&self, s: f64) -> f64 {
        let (i, j, xi) = self.locate(s);
        let h = self.h;
        let (mi, mj) = (self.m[i], self.m[j]);
        let (yi, yj) = (self.y[i], self.y[j]);
        let a = h - xi;
        -mi * a * a / (2.0 * h) + mj * xi * xi / (2.0 * h) + (yj - yi) / h - (mj - mi) * h / 6.0
    }
}

/// Component-wise periodic splines for a 3-vector field.
#[derive(Clone, Debug)]
pub struct PeriodicSpline3 {
    comps: [PeriodicSpline; 3],
}

impl PeriodicSpline3 {
    pub fn new(samples: &[[f64; 3]], h: f64) -> Result<Self> {
        let col = |c: usize| samples.iter().map(|v| v[c]).collect::<Vec<_>>();
        Ok(PeriodicSpline3 {
            comps: [
                PeriodicSpline::new(&col(0), h)?,
                PeriodicSpline::new(&col(1), h)?,
                PeriodicSpline::new(&col(2), h)?,
            ],
        })
    }

    pub fn from_field(f: &Field3) -> Result<Self> {
        let samples: Vec<[f64; 3]> = (0..f.n()).map(|i| f.at(i)).collect();
        Self::new(&samples, f.dx())
    }

    pub fn period(&self) -> f64 {
        self.comps[0].period()
    }

    pub fn eval(&self, s: f64) -> [f64; 3] {
        [self.comps[0].eval(s), self.comps[1].eval(s), self.comps[2].eval(s)]
    }

    pub fn eval_deriv(&self, s: f64) -> [f64; 3] {
        [
            self.comps[0].eval_deriv(s),
            self.comps[1].eval_deriv(s),
            self.comps[2].eval_deriv(s),
        ]
    }
}
