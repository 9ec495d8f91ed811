//! 2×2 complex matrices and the sl(2)/su(2) basis conventions.
//!
//! The basis is pinned once for the whole crate:
//!
//! ```text
//!     σ3 = [[1, 0], [0, -1]],   σ+ = [[0, 1], [0, 0]],   σ- = [[0, 0], [1, 0]],
//!     [σ3, σ±] = ±2 σ±,         [σ+, σ-] = σ3.
//! ```
//!
//! Spin densities use the Hermitian basis σ1 = σ+ + σ-, σ2 = -i(σ+ - σ-),
//! so a unit vector t maps to S = t·σ with S² = I.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::grid::{C64, I};

const ZERO_C: C64 = C64::new(0.0, 0.0);
const ONE_C: C64 = C64::new(1.0, 0.0);

/// Row-major 2×2 complex matrix [[a, b], [c, d]].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix2 {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
}

/// Coefficients of M = c0·I + c3·σ3 + cp·σ+ + cm·σ-.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PauliCoeffs {
    pub c0: C64,
    pub c3: C64,
    pub cp: C64,
    pub cm: C64,
}

pub const ZERO: Matrix2 = Matrix2 { a: ZERO_C, b: ZERO_C, c: ZERO_C, d: ZERO_C };
pub const IDENTITY: Matrix2 = Matrix2 { a: ONE_C, b: ZERO_C, c: ZERO_C, d: ONE_C };
pub const SIGMA3: Matrix2 = Matrix2 { a: ONE_C, b: ZERO_C, c: ZERO_C, d: C64::new(-1.0, 0.0) };
pub const SIGMA_PLUS: Matrix2 = Matrix2 { a: ZERO_C, b: ONE_C, c: ZERO_C, d: ZERO_C };
pub const SIGMA_MINUS: Matrix2 = Matrix2 { a: ZERO_C, b: ZERO_C, c: ONE_C, d: ZERO_C };
pub const SIGMA1: Matrix2 = Matrix2 { a: ZERO_C, b: ONE_C, c: ONE_C, d: ZERO_C };
pub const SIGMA2: Matrix2 = Matrix2 {
    a: ZERO_C,
    b: C64::new(0.0, -1.0),
    c: C64::new(0.0, 1.0),
    d: ZERO_C,
};

impl Matrix2 {
    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Matrix2 { a, b, c, d }
    }

    /// c0·I + c3·σ3 + cp·σ+ + cm·σ-.
    pub fn from_pauli(p: PauliCoeffs) -> Self {
        Matrix2 {
            a: p.c0 + p.c3,
            b: p.cp,
            c: p.cm,
            d: p.c0 - p.c3,
        }
    }

    /// Inverse of [`Matrix2::from_pauli`]; the decomposition is unique.
    pub fn pauli_decompose(&self) -> PauliCoeffs {
        PauliCoeffs {
            c0: (self.a + self.d) * 0.5,
            c3: (self.a - self.d) * 0.5,
            cp: self.b,
            cm: self.c,
        }
    }

    /// S = v·(σ1, σ2, σ3) for a real 3-vector (Hermitian, traceless).
    pub fn from_spin(v: [f64; 3]) -> Self {
        Matrix2 {
            a: C64::new(v[2], 0.0),
            b: C64::new(v[0], -v[1]),
            c: C64::new(v[0], v[1]),
            d: C64::new(-v[2], 0.0),
        }
    }

    /// Real σ1/σ2/σ3 coefficients plus the non-Hermitian defect that was
    /// discarded to obtain them.
    pub fn to_spin(&self) -> ([f64; 3], f64) {
        let v = [
            0.5 * (self.b + self.c).re,
            0.5 * (self.c - self.b).im,
            0.5 * (self.a - self.d).re,
        ];
        let rebuilt = Matrix2::from_spin(v);
        let defect = (*self - rebuilt).max_abs();
        (v, defect)
    }

    pub fn scale(&self, s: C64) -> Self {
        Matrix2 {
            a: self.a * s,
            b: self.b * s,
            c: self.c * s,
            d: self.d * s,
        }
    }

    pub fn trace(&self) -> C64 {
        self.a + self.d
    }

    pub fn det(&self) -> C64 {
        self.a * self.d - self.b * self.c
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        Matrix2 {
            a: self.a.conj(),
            b: self.c.conj(),
            c: self.b.conj(),
            d: self.d.conj(),
        }
    }

    /// [self, other] = self·other - other·self.
    pub fn commutator(&self, other: &Matrix2) -> Matrix2 {
        *self * *other - *other * *self
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.a
            .norm()
            .max(self.b.norm())
            .max(self.c.norm())
            .max(self.d.norm())
    }

    pub fn is_finite(&self) -> bool {
        [self.a, self.b, self.c, self.d]
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// ‖M + M†‖_max — zero exactly when M is anti-Hermitian.
    pub fn anti_hermitian_defect(&self) -> f64 {
        (*self + self.dagger()).max_abs()
    }

    /// ‖M² - I‖_max — zero exactly for an involution.
    pub fn involution_defect(&self) -> f64 {
        (*self * *self - IDENTITY).max_abs()
    }
}

impl std::ops::Add for Matrix2 {
    type Output = Matrix2;
    fn add(self, r: Matrix2) -> Matrix2 {
        Matrix2 {
            a: self.a + r.a,
            b: self.b + r.b,
            c: self.c + r.c,
            d: self.d + r.d,
        }
    }
}

impl std::ops::Sub for Matrix2 {
    type Output = Matrix2;
    fn sub(self, r: Matrix2) -> Matrix2 {
        Matrix2 {
            a: self.a - r.a,
            b: self.b - r.b,
            c: self.c - r.c,
            d: self.d - r.d,
        }
    }
}

impl std::ops::Neg for Matrix2 {
    type Output = Matrix2;
    fn neg(self) -> Matrix2 {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl std::ops::Mul for Matrix2 {
    type Output = Matrix2;
    fn mul(self, r: Matrix2) -> Matrix2 {
        Matrix2 {
            a: self.a * r.a + self.b * r.c,
            b: self.a * r.b + self.b * r.d,
            c: self.c * r.a + self.d * r.c,
            d: self.c * r.b + self.d * r.d,
        }
    }
}

impl std::ops::Mul<Matrix2> for Complex64 {
    type Output = Matrix2;
    fn mul(self, m: Matrix2) -> Matrix2 {
        m.scale(self)
    }
}

/// i·M convenience (shows up in every Lax builder).
pub fn i_times(m: Matrix2) -> Matrix2 {
    m.scale(I)
}
