//! Lax connections as λ-Laurent polynomials with matrix-field coefficients,
//! and the per-order zero-curvature residual
//!
//! ```text
//!     F_tx = A_t - B_x + [A, B],          F_tx = 0 per λ-order.
//! ```
//!
//! λ is a formal grading label: a [`LaurentMatrixField`] maps each integer
//! order to a [`MatrixGridField`] and all arithmetic (addition, x-derivative,
//! commutator convolution) is exact in the grading. Nothing here ever
//! substitutes a number for λ.
//!
//! Two families of connections are built:
//!
//! * the Schrödinger pair `A = -iλσ3 + ρ*q*σ+ + ρqσ-`,
//!   `B = i(2λ² - η|q|²)σ3 - (2λρ*q* + iρ*q*_x)σ+ - (2λρq - iρq_x)σ-`,
//! * the spin pair `U = iλS`, `V = 2iλ²S - λS_xS` with `S² = I`.
//!
//! Time derivatives of connections are assembled by the chain rule from
//! caller-supplied rates (q_t, ρ_t); they are never finite-differenced in
//! time, so flatness checks are independent of any time integrator.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::grid::{validate_len, C64, DerivMethod, GridField, I};
use crate::su2::{self, Matrix2, PauliCoeffs};
use crate::{CoreError, Result};

/// A 2×2 matrix at every node of a periodic grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixGridField {
    nodes: Vec<Matrix2>,
    dx: f64,
}

impl MatrixGridField {
    pub fn new(nodes: Vec<Matrix2>, dx: f64) -> Result<Self> {
        validate_len(nodes.len())?;
        if !(dx.is_finite() && dx > 0.0) {
            return Err(CoreError::InvalidGrid(format!("spacing {dx} must be positive")));
        }
        let f = MatrixGridField { nodes, dx };
        if !f.is_finite() {
            return Err(CoreError::NonFinite("MatrixGridField constructor input".into()));
        }
        Ok(f)
    }

    pub fn zeros(n: usize, dx: f64) -> Result<Self> {
        Self::new(vec![su2::ZERO; n], dx)
    }

    pub fn constant(n: usize, dx: f64, m: Matrix2) -> Result<Self> {
        Self::new(vec![m; n], dx)
    }

    pub fn from_fn(n: usize, dx: f64, f: impl Fn(f64) -> Matrix2) -> Result<Self> {
        Self::new((0..n).map(|i| f(i as f64 * dx)).collect(), dx)
    }

    /// Builds c3·σ3 + cp·σ+ + cm·σ- from coefficient fields (traceless).
    pub fn from_coeff_fields(c3: &GridField, cp: &GridField, cm: &GridField) -> Result<Self> {
        c3.require_same_grid(cp, "from_coeff_fields")?;
        c3.require_same_grid(cm, "from_coeff_fields")?;
        let nodes = (0..c3.n())
            .map(|i| {
                Matrix2::from_pauli(PauliCoeffs {
                    c0: C64::new(0.0, 0.0),
                    c3: c3.get(i),
                    cp: cp.get(i),
                    cm: cm.get(i),
                })
            })
            .collect();
        Self::new(nodes, c3.dx())
    }

    /// S(x) = t(x)·(σ1, σ2, σ3) for a unit 3-vector field.
    pub fn from_spin_field(t: &crate::grid::Field3) -> Result<Self> {
        Self::new((0..t.n()).map(|i| Matrix2::from_spin(t.at(i))).collect(), t.dx())
    }

    /// Real spin components at every node plus the worst non-Hermitian defect.
    pub fn to_spin_field(&self) -> (crate::grid::Field3, f64) {
        let n = self.n();
        let mut comps = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let mut defect = 0.0f64;
        for i in 0..n {
            let (v, d) = self.nodes[i].to_spin();
            defect = defect.max(d);
            for c in 0..3 {
                comps[c][i] = v[c];
            }
        }
        // constructor cannot fail: lengths/spacing come from a valid field
        (crate::grid::Field3::new(comps, self.dx).expect("valid grid"), defect)
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn node(&self, i: usize) -> Matrix2 {
        self.nodes[i]
    }

    pub fn nodes(&self) -> &[Matrix2] {
        &self.nodes
    }

    pub fn same_grid(&self, other: &MatrixGridField) -> bool {
        self.n() == other.n() && self.dx == other.dx
    }

    fn require_same_grid(&self, other: &MatrixGridField, ctx: &str) -> Result<()> {
        if !self.same_grid(other) {
            return Err(CoreError::GridMismatch(format!(
                "{ctx}: ({}, dx={}) vs ({}, dx={})",
                self.n(),
                self.dx,
                other.n(),
                other.dx
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(Matrix2) -> Matrix2) -> MatrixGridField {
        MatrixGridField {
            nodes: self.nodes.iter().map(|&m| f(m)).collect(),
            dx: self.dx,
        }
    }

    pub fn zip_with(&self, other: &MatrixGridField, f: impl Fn(Matrix2, Matrix2) -> Matrix2) -> MatrixGridField {
        assert!(self.same_grid(other), "zip_with on mismatched grids");
        MatrixGridField {
            nodes: self.nodes.iter().zip(&other.nodes).map(|(&a, &b)| f(a, b)).collect(),
            dx: self.dx,
        }
    }

    pub fn add(&self, other: &MatrixGridField) -> MatrixGridField {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &MatrixGridField) -> MatrixGridField {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: C64) -> MatrixGridField {
        self.map(|m| m.scale(s))
    }

    /// Pointwise matrix product.
    pub fn mul(&self, other: &MatrixGridField) -> MatrixGridField {
        self.zip_with(other, |a, b| a * b)
    }

    /// Pointwise commutator.
    pub fn commutator(&self, other: &MatrixGridField) -> MatrixGridField {
        self.zip_with(other, |a, b| a.commutator(&b))
    }

    /// Entrywise spatial derivative (four scalar derivative passes).
    pub fn deriv_x(&self, order: u32, method: DerivMethod) -> MatrixGridField {
        let n = self.n();
        let entry = |pick: fn(&Matrix2) -> C64| -> Vec<C64> {
            let vals: Vec<C64> = self.nodes.iter().map(pick).collect();
            let g = GridField::new(vals, self.dx).expect("valid grid");
            g.deriv(order, method).values().to_vec()
        };
        let (a, b) = (entry(|m| m.a), entry(|m| m.b));
        let (c, d) = (entry(|m| m.c), entry(|m| m.d));
        MatrixGridField {
            nodes: (0..n).map(|i| Matrix2::new(a[i], b[i], c[i], d[i])).collect(),
            dx: self.dx,
        }
    }

    /// One named coefficient of the pointwise Pauli decomposition.
    pub fn coeff_field(&self, pick: impl Fn(&PauliCoeffs) -> C64) -> GridField {
        let vals = self.nodes.iter().map(|m| pick(&m.pauli_decompose())).collect();
        GridField::new(vals, self.dx).expect("valid grid")
    }

    pub fn max_abs(&self) -> f64 {
        self.nodes.iter().fold(0.0f64, |m, x| m.max(x.max_abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.nodes.iter().all(|m| m.is_finite())
    }

    /// Worst-node ‖S² - I‖_max.
    pub fn involution_defect(&self) -> f64 {
        self.nodes.iter().fold(0.0f64, |m, x| m.max(x.involution_defect()))
    }

    /// Worst-node ‖M + M†‖_max.
    pub fn anti_hermitian_defect(&self) -> f64 {
        self.nodes.iter().fold(0.0f64, |m, x| m.max(x.anti_hermitian_defect()))
    }
}

/// λ-Laurent polynomial with matrix-field coefficients. Absent order ≡ zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaurentMatrixField {
    n: usize,
    dx: f64,
    terms: BTreeMap<i32, MatrixGridField>,
}

impl LaurentMatrixField {
    pub fn empty(n: usize, dx: f64) -> Result<Self> {
        validate_len(n)?;
        if !(dx.is_finite() && dx > 0.0) {
            return Err(CoreError::InvalidGrid(format!("spacing {dx} must be positive")));
        }
        Ok(LaurentMatrixField { n, dx, terms: BTreeMap::new() })
    }

    /// Adds `field` at λ-order `order` (accumulating if already present).
    pub fn add_term(&mut self, order: i32, field: MatrixGridField) -> Result<()> {
        if field.n() != self.n || field.dx() != self.dx {
            return Err(CoreError::GridMismatch(format!(
                "order {order}: ({}, dx={}) vs ({}, dx={})",
                field.n(),
                field.dx(),
                self.n,
                self.dx
            )));
        }
        match self.terms.remove(&order) {
            Some(existing) => {
                self.terms.insert(order, existing.add(&field));
            }
            None => {
                self.terms.insert(order, field);
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn term(&self, order: i32) -> Option<&MatrixGridField> {
        self.terms.get(&order)
    }

    pub fn term_or_zero(&self, order: i32) -> MatrixGridField {
        self.terms
            .get(&order)
            .cloned()
            .unwrap_or_else(|| MatrixGridField::zeros(self.n, self.dx).expect("valid grid"))
    }

    /// Stored orders in ascending order (including numerically tiny ones).
    pub fn orders(&self) -> Vec<i32> {
        self.terms.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, &MatrixGridField)> {
        self.terms.iter().map(|(&k, v)| (k, v))
    }

    pub fn same_grid(&self, other: &LaurentMatrixField) -> bool {
        self.n == other.n && self.dx == other.dx
    }

    fn require_same_grid(&self, other: &LaurentMatrixField, ctx: &str) -> Result<()> {
        if !self.same_grid(other) {
            return Err(CoreError::GridMismatch(format!(
                "{ctx}: ({}, dx={}) vs ({}, dx={})",
                self.n,
                self.dx,
                other.n,
                other.dx
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &LaurentMatrixField) -> Result<LaurentMatrixField> {
        self.require_same_grid(other, "Laurent add")?;
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.add_term(k, v.clone())?;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &LaurentMatrixField) -> Result<LaurentMatrixField> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> LaurentMatrixField {
        LaurentMatrixField {
            n: self.n,
            dx: self.dx,
            terms: self.terms.iter().map(|(&k, v)| (k, v.scale(s))).collect(),
        }
    }

    /// Entrywise spatial derivative at every order.
    pub fn deriv_x(&self, order: u32, method: DerivMethod) -> LaurentMatrixField {
        LaurentMatrixField {
            n: self.n,
            dx: self.dx,
            terms: self.terms.iter().map(|(&k, v)| (k, v.deriv_x(order, method))).collect(),
        }
    }

    /// Graded commutator: order n of the result is Σ_{p+q=n} [A_p, B_q].
    pub fn commutator(&self, other: &LaurentMatrixField) -> Result<LaurentMatrixField> {
        self.require_same_grid(other, "Laurent commutator")?;
        let mut out = LaurentMatrixField::empty(self.n, self.dx)?;
        for (p, ap) in self.iter() {
            for (q, bq) in other.iter() {
                out.add_term(p + q, ap.commutator(bq))?;
            }
        }
        Ok(out)
    }

    pub fn max_abs_per_order(&self) -> BTreeMap<i32, f64> {
        self.terms.iter().map(|(&k, v)| (k, v.max_abs())).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().fold(0.0f64, |m, v| m.max(v.max_abs()))
    }

    /// Orders whose max-norm exceeds tol·(overall max-norm of the field).
    /// An identically zero field has empty support at any tolerance.
    pub fn order_support(&self, tol: f64) -> BTreeSet<i32> {
        let scale = self.max_abs();
        self.order_support_with_scale(tol, scale)
    }

    /// Same with an external scale (e.g. the size of the inputs that
    /// produced a residual).
    pub fn order_support_with_scale(&self, tol: f64, scale: f64) -> BTreeSet<i32> {
        assert!(tol > 0.0, "tolerance must be positive");
        self.terms
            .iter()
            .filter(|(_, v)| v.max_abs() > tol * scale)
            .map(|(&k, _)| k)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.terms.values().all(|v| v.is_finite())
    }
}

/// Schrödinger-family Lax pair on a common grid:
///
/// ```text
///     A = -iλσ3 + ρ*q*σ+ + ρqσ-
///     B = i(2λ² - η|q|²)σ3 - (2λρ*q* + iρ*q*_x)σ+ - (2λρq - iρq_x)σ-
/// ```
pub fn build_nls_lax(
    q: &GridField,
    rho: &GridField,
    eta: &GridField,
    method: DerivMethod,
) -> Result<(LaurentMatrixField, LaurentMatrixField)> {
    q.require_same_grid(rho, "build_nls_lax(q, rho)")?;
    q.require_same_grid(eta, "build_nls_lax(q, eta)")?;
    let (n, dx) = (q.n(), q.dx());
    let zero = GridField::zeros(n, dx)?;

    let p = rho * q; // ρq
    let p_conj = p.conj(); // ρ*q*
    let qx = q.deriv(1, method);
    let rho_qx = rho * &qx; // ρ q_x
    let rho_qx_conj = rho_qx.conj(); // ρ* q*_x

    let mut a = LaurentMatrixField::empty(n, dx)?;
    a.add_term(0, MatrixGridField::from_coeff_fields(&zero, &p_conj, &p)?)?;
    a.add_term(
        1,
        MatrixGridField::constant(n, dx, su2::SIGMA3.scale(-I))?,
    )?;

    let mut b = LaurentMatrixField::empty(n, dx)?;
    // order 0: -iη|q|² σ3 - iρ*q*_x σ+ + iρq_x σ-
    let b0_s3 = (eta * &q.abs2()).scale(-I);
    let b0_sp = rho_qx_conj.scale(-I);
    let b0_sm = rho_qx.scale(I);
    b.add_term(0, MatrixGridField::from_coeff_fields(&b0_s3, &b0_sp, &b0_sm)?)?;
    // order 1: -2ρ*q* σ+ - 2ρq σ-
    let minus_two = C64::new(-2.0, 0.0);
    b.add_term(
        1,
        MatrixGridField::from_coeff_fields(&zero, &p_conj.scale(minus_two), &p.scale(minus_two))?,
    )?;
    // order 2: 2i σ3 (x-independent)
    b.add_term(
        2,
        MatrixGridField::constant(n, dx, su2::SIGMA3.scale(C64::new(0.0, 2.0)))?,
    )?;
    Ok((a, b))
}

/// ∂_t of the Schrödinger connection A by the chain rule:
/// order 0 is (ρq)_t σ- + (ρ*q*)_t σ+ with (ρq)_t = ρ_t q + ρ q_t;
/// the order-1 coefficient is constant, so its rate is zero.
pub fn nls_a_time_derivative(
    q: &GridField,
    q_t: &GridField,
    rho: &GridField,
    rho_t: Option<&GridField>,
) -> Result<LaurentMatrixField> {
    q.require_same_grid(q_t, "nls_a_time_derivative(q, q_t)")?;
    q.require_same_grid(rho, "nls_a_time_derivative(q, rho)")?;
    let mut p_t = rho * q_t;
    if let Some(rt) = rho_t {
        q.require_same_grid(rt, "nls_a_time_derivative(q, rho_t)")?;
        p_t = &p_t + &(rt * q);
    }
    let zero = GridField::zeros(q.n(), q.dx())?;
    let mut a_t = LaurentMatrixField::empty(q.n(), q.dx())?;
    a_t.add_term(0, MatrixGridField::from_coeff_fields(&zero, &p_t.conj(), &p_t)?)?;
    Ok(a_t)
}

/// Spin-chain continuum Lax pair `U = iλS`, `V = 2iλ²S - λS_xS`. Requires
/// S² = I at every node within 1e-10.
pub fn build_ll_lax(
    s: &MatrixGridField,
    method: DerivMethod,
) -> Result<(LaurentMatrixField, LaurentMatrixField)> {
    let defect = s.involution_defect();
    if defect > 1e-10 {
        return Err(CoreError::InvalidInput(format!(
            "S² deviates from identity by {defect:.3e} (allowed 1e-10)"
        )));
    }
    let (n, dx) = (s.n(), s.dx());
    let mut u = LaurentMatrixField::empty(n, dx)?;
    u.add_term(1, s.scale(I))?;

    let sx = s.deriv_x(1, method);
    let mut v = LaurentMatrixField::empty(n, dx)?;
    v.add_term(1, sx.mul(s).scale(C64::new(-1.0, 0.0)))?;
    v.add_term(2, s.scale(C64::new(0.0, 2.0)))?;
    Ok((u, v))
}

/// ∂_t of `U = iλS` from a supplied rate S_t.
pub fn ll_u_time_derivative(s_t: &MatrixGridField) -> Result<LaurentMatrixField> {
    let mut u_t = LaurentMatrixField::empty(s_t.n(), s_t.dx())?;
    u_t.add_term(1, s_t.scale(I))?;
    Ok(u_t)
}

/// Per-order zero-curvature residual `A_t - B_x + [A, B]`.
pub fn zcc_residual(
    a: &LaurentMatrixField,
    b: &LaurentMatrixField,
    a_t: &LaurentMatrixField,
    method: DerivMethod,
) -> Result<LaurentMatrixField> {
    a.require_same_grid(b, "zcc_residual(a, b)")?;
    a.require_same_grid(a_t, "zcc_residual(a, a_t)")?;
    let bx = b.deriv_x(1, method);
    let comm = a.commutator(b)?;
    a_t.sub(&bx)?.add(&comm)
}
