//! Periodic complex fields on uniform grids, plus the spectral machinery
//! every other module leans on.
//!
//! A [`GridField`] holds N complex samples f[0..N) with spacing dx on the
//! periodic domain [0, N·dx). N is a power of two (>= 8) so FFT-based
//! derivatives are always available. Derivatives default to the Fourier
//! multiplier (ik)^m with the Nyquist mode zeroed for odd orders; a 4th-order
//! central finite difference is available as a cross-check fallback.
//!
//! Cumulative integrals are composite trapezoid sums anchored at the left
//! edge (or the domain centre, selectable), matching the ∫₀ˣ convention used
//! by the deformation closures.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

/// Shorthand used throughout the crate.
pub type C64 = Complex64;

/// i as a constant.
pub const I: C64 = C64::new(0.0, 1.0);

/// Derivative backend. Spectral is the default everywhere; Fd4 exists so the
/// two routes can be compared, not as a performance option.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivMethod {
    /// Fourier multiplier (ik)^m, Nyquist zeroed for odd m.
    #[default]
    Spectral,
    /// 4th-order central finite differences with periodic wrap.
    Fd4,
}

/// Anchor for cumulative integrals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralOrigin {
    /// F(x) = ∫₀ˣ f, so F(0) = 0.
    #[default]
    LeftEdge,
    /// Same antiderivative shifted so F(L/2) = 0.
    DomainCenter,
}

/// L², L∞ and mass ∫|f|² dx of a field, reduced in index order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2: f64,
    pub linf: f64,
    pub mass: f64,
}

/// Complex samples on a uniform periodic grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    values: Vec<C64>,
    dx: f64,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if forward {
            p.plan_fft_forward(n)
        } else {
            p.plan_fft_inverse(n)
        }
    })
}

pub(crate) fn fft_forward(buf: &mut [C64]) {
    plan(buf.len(), true).process(buf);
}

/// Inverse FFT including the 1/N normalisation.
pub(crate) fn fft_inverse(buf: &mut [C64]) {
    plan(buf.len(), false).process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Signed mode index for bin j of an N-point transform.
fn signed_mode(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

pub(crate) fn validate_len(n: usize) -> Result<()> {
    if n < 8 || !n.is_power_of_two() {
        return Err(CoreError::InvalidGrid(format!(
            "field length {n} must be a power of two >= 8"
        )));
    }
    Ok(())
}

impl GridField {
    /// Wraps samples; rejects bad lengths, spacings and non-finite data.
    pub fn new(values: Vec<C64>, dx: f64) -> Result<Self> {
        validate_len(values.len())?;
        if !(dx.is_finite() && dx > 0.0) {
            return Err(CoreError::InvalidGrid(format!("spacing {dx} must be positive")));
        }
        let f = GridField { values, dx };
        f.check_finite("constructor input")?;
        Ok(f)
    }

    pub fn zeros(n: usize, dx: f64) -> Result<Self> {
        Self::new(vec![C64::new(0.0, 0.0); n], dx)
    }

    pub fn constant(n: usize, dx: f64, c: C64) -> Result<Self> {
        Self::new(vec![c; n], dx)
    }

    /// Samples f at the nodes x_i = i·dx.
    pub fn from_fn(n: usize, dx: f64, f: impl Fn(f64) -> C64) -> Result<Self> {
        Self::new((0..n).map(|i| f(i as f64 * dx)).collect(), dx)
    }

    /// Random band-limited field: modes |m| <= max_mode with ~1/(1+m²)
    /// weighted complex Gaussian amplitudes. Deterministic under `rng`.
    pub fn random_band_limited(n: usize, dx: f64, max_mode: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        validate_len(n)?;
        if max_mode >= n / 3 {
            return Err(CoreError::InvalidInput(format!(
                "max_mode {max_mode} must stay below n/3 = {} so products remain alias-free",
                n / 3
            )));
        }
        let mut spec = vec![C64::new(0.0, 0.0); n];
        // standard normal via Box-Muller on the seeded stream
        let mut gauss = || {
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random::<f64>();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        for m in -(max_mode as i64)..=max_mode as i64 {
            let j = m.rem_euclid(n as i64) as usize;
            let w = 1.0 / (1.0 + (m * m) as f64);
            spec[j] = C64::new(gauss(), gauss()) * w;
        }
        let mut buf = spec;
        // values scale: inverse transform without 1/N so amplitudes stay O(1)
        plan(n, false).process(&mut buf);
        GridField::new(buf, dx)
    }

    /// Real-valued variant of [`GridField::random_band_limited`] (conjugate-
    /// symmetric spectrum), offset so the field stays near `offset`.
    pub fn random_real_band_limited(
        n: usize,
        dx: f64,
        max_mode: usize,
        amplitude: f64,
        offset: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let f = Self::random_band_limited(n, dx, max_mode, rng)?;
        let peak = f.values.iter().map(|v| v.re.abs()).fold(0.0f64, f64::max).max(1e-300);
        let vals = f
            .values
            .iter()
            .map(|v| C64::new(offset + amplitude * v.re / peak, 0.0))
            .collect();
        GridField::new(vals, dx)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Domain length L = N·dx.
    pub fn length(&self) -> f64 {
        self.values.len() as f64 * self.dx
    }

    /// Node coordinate x_i = i·dx.
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn get(&self, i: usize) -> C64 {
        self.values[i]
    }

    /// True when both fields share (N, dx) exactly.
    pub fn same_grid(&self, other: &GridField) -> bool {
        self.values.len() == other.values.len() && self.dx == other.dx
    }

    pub(crate) fn require_same_grid(&self, other: &GridField, ctx: &str) -> Result<()> {
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

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn check_finite(&self, ctx: &str) -> Result<()> {
        if !self.is_finite() {
            return Err(CoreError::NonFinite(ctx.to_string()));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> GridField {
        GridField {
            values: self.values.iter().map(|&v| f(v)).collect(),
            dx: self.dx,
        }
    }

    /// Pointwise combination; panics on grid mismatch (internal plumbing —
    /// public entry points validate grids first).
    pub fn zip_with(&self, other: &GridField, f: impl Fn(C64, C64) -> C64) -> GridField {
        assert!(self.same_grid(other), "zip_with on mismatched grids");
        GridField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            dx: self.dx,
        }
    }

    pub fn conj(&self) -> GridField {
        self.map(|v| v.conj())
    }

    /// |f|² as a real-valued field.
    pub fn abs2(&self) -> GridField {
        self.map(|v| C64::new(v.norm_sqr(), 0.0))
    }

    pub fn scale(&self, c: C64) -> GridField {
        self.map(|v| c * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }

    pub fn max_imag_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.im.abs()))
    }

    /// Real-valuedness is decided, not stored: a field counts as real when
    /// every imaginary part is below tol·max|f|.
    pub fn is_real_valued(&self, tol: f64) -> bool {
        self.max_imag_abs() <= tol * self.max_abs().max(f64::MIN_POSITIVE)
    }

    /// L², L∞, mass. Mass uses the periodic rectangle rule dx·Σ|f|², which is
    /// the trapezoid rule on a periodic domain.
    pub fn norms(&self) -> Norms {
        let mut sum = 0.0;
        let mut linf: f64 = 0.0;
        for v in &self.values {
            sum += v.norm_sqr();
            linf = linf.max(v.norm());
        }
        let mass = sum * self.dx;
        Norms {
            l2: mass.sqrt(),
            linf,
            mass,
        }
    }

    /// Periodic integral ∮ f dx (rectangle = trapezoid on a circle).
    pub fn integral(&self) -> C64 {
        self.values.iter().sum::<C64>() * self.dx
    }

    /// m-th spatial derivative (m = 1 or 2).
    pub fn deriv(&self, order: u32, method: DerivMethod) -> GridField {
        assert!(order == 1 || order == 2, "only first and second derivatives are provided");
        match method {
            DerivMethod::Spectral => self.deriv_spectral(order),
            DerivMethod::Fd4 => self.deriv_fd4(order),
        }
    }

    fn deriv_spectral(&self, order: u32) -> GridField {
        let n = self.values.len();
        let l = self.length();
        let mut buf = self.values.clone();
        fft_forward(&mut buf);
        for (j, v) in buf.iter_mut().enumerate() {
            let m = signed_mode(j, n);
            let k = std::f64::consts::TAU * m as f64 / l;
            // The Nyquist bin has no well-defined sign; zero it for every
            // derivative order so that the derivative of a real field stays
            // real and the discrete identity deriv(2) = deriv(1)∘deriv(1)
            // holds exactly, which the flatness-residual assembly relies on.
            let mult = if j == n / 2 {
                C64::new(0.0, 0.0)
            } else {
                match order {
                    1 => C64::new(0.0, k),
                    2 => C64::new(-k * k, 0.0),
                    _ => unreachable!(),
                }
            };
            *v *= mult;
        }
        fft_inverse(&mut buf);
        GridField { values: buf, dx: self.dx }
    }

    fn deriv_fd4(&self, order: u32) -> GridField {
        let n = self.values.len();
        let f = &self.values;
        let at = |i: i64| f[i.rem_euclid(n as i64) as usize];
        let values = (0..n as i64)
            .map(|i| match order {
                1 => (at(i - 2) - at(i - 1) * 8.0 + at(i + 1) * 8.0 - at(i + 2)) / (12.0 * self.dx),
                2 => (-at(i - 2) + at(i - 1) * 16.0 - at(i) * 30.0 + at(i + 1) * 16.0 - at(i + 2))
                    / (12.0 * self.dx * self.dx),
                _ => unreachable!(),
            })
            .collect();
        GridField { values, dx: self.dx }
    }

    /// Trapezoid antiderivative F with F anchored at the chosen origin.
    pub fn cumint(&self, origin: IntegralOrigin) -> GridField {
        let n = self.values.len();
        let mut out = Vec::with_capacity(n);
        let mut acc = C64::new(0.0, 0.0);
        out.push(acc);
        for i in 1..n {
            acc += (self.values[i - 1] + self.values[i]) * (0.5 * self.dx);
            out.push(acc);
        }
        if origin == IntegralOrigin::DomainCenter {
            let mid = out[n / 2];
            for v in out.iter_mut() {
                *v -= mid;
            }
        }
        GridField { values: out, dx: self.dx }
    }

    /// Exact periodic antiderivative of the zero-mean part: spectrum divided
    /// by ik for every nonzero mode, zero mode dropped. Returns the
    /// antiderivative (itself zero-mean) and the removed mean value — a
    /// nonzero mean means no periodic antiderivative exists.
    pub fn antiderivative_periodic(&self) -> (GridField, C64) {
        let n = self.values.len();
        let l = self.length();
        let mut buf = self.values.clone();
        fft_forward(&mut buf);
        let mean = buf[0] / n as f64;
        buf[0] = C64::new(0.0, 0.0);
        for (j, v) in buf.iter_mut().enumerate().skip(1) {
            let m = signed_mode(j, n);
            if m == 0 {
                continue;
            }
            let k = std::f64::consts::TAU * m as f64 / l;
            *v /= I * k;
        }
        fft_inverse(&mut buf);
        (GridField { values: buf, dx: self.dx }, mean)
    }

    /// Im(f* f_x) as a real-valued field (spectral derivative).
    pub fn momentum_density(&self) -> GridField {
        let fx = self.deriv(1, DerivMethod::Spectral);
        self.zip_with(&fx, |f, fx| C64::new((f.conj() * fx).im, 0.0))
    }

    /// 2/3-rule spectral mask: zeroes every mode with |m| > N/3.
    pub fn dealias_two_thirds(&self) -> GridField {
        let n = self.values.len();
        let cut = n as i64 / 3;
        let mut buf = self.values.clone();
        fft_forward(&mut buf);
        for (j, v) in buf.iter_mut().enumerate() {
            if signed_mode(j, n).abs() > cut {
                *v = C64::new(0.0, 0.0);
            }
        }
        fft_inverse(&mut buf);
        GridField { values: buf, dx: self.dx }
    }

    /// Spectral interpolation onto a grid refined by `factor` (zero-padding).
    pub fn refine(&self, factor: usize) -> GridField {
        assert!(factor.is_power_of_two() && factor >= 1);
        let n = self.values.len();
        let m = n * factor;
        let mut spec = self.values.clone();
        fft_forward(&mut spec);
        let mut big = vec![C64::new(0.0, 0.0); m];
        for j in 0..n {
            let mode = signed_mode(j, n);
            let tgt = mode.rem_euclid(m as i64) as usize;
            // split the Nyquist bin symmetrically so real fields stay real
            if j == n / 2 {
                big[tgt] = spec[j] * 0.5;
                big[(-(mode)).rem_euclid(m as i64) as usize] = spec[j] * 0.5;
            } else {
                big[tgt] = spec[j];
            }
        }
        plan(m, false).process(&mut big);
        let scale = 1.0 / n as f64;
        for v in big.iter_mut() {
            *v *= scale;
        }
        GridField {
            values: big,
            dx: self.dx / factor as f64,
        }
    }

    /// Mass in the outer L/16 strip at each boundary — a radiation monitor
    /// for localised initial data centred in the box.
    pub fn tail_mass(&self) -> f64 {
        let n = self.values.len();
        let strip = (n / 16).max(1);
        let mut sum = 0.0;
        for i in 0..strip {
            sum += self.values[i].norm_sqr();
            sum += self.values[n - 1 - i].norm_sqr();
        }
        sum * self.dx
    }

    /// Writes `x,Re,Im` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,Re,Im")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", self.x(i), v.re, v.im)?;
        }
        Ok(())
    }

    /// Reads a field written by [`GridField::write_csv`]. The spacing is
    /// recovered from the first two x values.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut xs: Vec<f64> = Vec::new();
        let mut vals: Vec<C64> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| CoreError::InvalidInput(format!("csv read: {e}")))?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('x')) {
                continue;
            }
            let mut parts = line.split(',');
            let mut next = || -> Result<f64> {
                parts
                    .next()
                    .ok_or_else(|| CoreError::InvalidInput(format!("csv line {lineno}: missing column")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| CoreError::InvalidInput(format!("csv line {lineno}: {e}")))
            };
            xs.push(next()?);
            let re = next()?;
            let im = next()?;
            vals.push(C64::new(re, im));
        }
        if vals.len() < 2 {
            return Err(CoreError::InvalidInput("csv: fewer than two rows".into()));
        }
        let dx = xs[1] - xs[0];
        GridField::new(vals, dx)
    }
}

impl std::ops::Add for &GridField {
    type Output = GridField;
    fn add(self, rhs: &GridField) -> GridField {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl std::ops::Sub for &GridField {
    type Output = GridField;
    fn sub(self, rhs: &GridField) -> GridField {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl std::ops::Mul for &GridField {
    type Output = GridField;
    fn mul(self, rhs: &GridField) -> GridField {
        self.zip_with(rhs, |a, b| a * b)
    }
}

impl std::ops::Neg for &GridField {
    type Output = GridField;
    fn neg(self) -> GridField {
        self.map(|v| -v)
    }
}

/// Either a spatially constant coefficient or a full profile. Constants are
/// materialised onto the grid on demand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficient {
    Constant { re: f64, im: f64 },
    Field(GridField),
}

impl Coefficient {
    pub fn constant(c: C64) -> Self {
        Coefficient::Constant { re: c.re, im: c.im }
    }

    pub fn real(v: f64) -> Self {
        Coefficient::Constant { re: v, im: 0.0 }
    }

    /// The coefficient as a field on the given grid.
    pub fn sample(&self, n: usize, dx: f64) -> Result<GridField> {
        match self {
            Coefficient::Constant { re, im } => GridField::constant(n, dx, C64::new(*re, *im)),
            Coefficient::Field(f) => {
                if f.n() != n || f.dx() != dx {
                    return Err(CoreError::GridMismatch(format!(
                        "coefficient field ({}, dx={}) vs target ({n}, dx={dx})",
                        f.n(),
                        f.dx()
                    )));
                }
                Ok(f.clone())
            }
        }
    }
}

/// Three real periodic component fields (e.g. a tangent or spin density).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field3 {
    comps: [Vec<f64>; 3],
    dx: f64,
}

impl Field3 {
    pub fn new(comps: [Vec<f64>; 3], dx: f64) -> Result<Self> {
        validate_len(comps[0].len())?;
        if comps[1].len() != comps[0].len() || comps[2].len() != comps[0].len() {
            return Err(CoreError::GridMismatch("Field3 component lengths differ".into()));
        }
        if !(dx.is_finite() && dx > 0.0) {
            return Err(CoreError::InvalidGrid(format!("spacing {dx} must be positive")));
        }
        let f = Field3 { comps, dx };
        if !f.is_finite() {
            return Err(CoreError::NonFinite("Field3 constructor input".into()));
        }
        Ok(f)
    }

    pub fn from_fn(n: usize, dx: f64, f: impl Fn(f64) -> [f64; 3]) -> Result<Self> {
        let mut comps = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
        for i in 0..n {
            let v = f(i as f64 * dx);
            for c in 0..3 {
                comps[c].push(v[c]);
            }
        }
        Self::new(comps, dx)
    }

    pub fn n(&self) -> usize {
        self.comps[0].len()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn at(&self, i: usize) -> [f64; 3] {
        [self.comps[0][i], self.comps[1][i], self.comps[2][i]]
    }

    pub fn set(&mut self, i: usize, v: [f64; 3]) {
        for c in 0..3 {
            self.comps[c][i] = v[c];
        }
    }

    pub fn zeros_like(&self) -> Field3 {
        Field3 {
            comps: [vec![0.0; self.n()], vec![0.0; self.n()], vec![0.0; self.n()]],
            dx: self.dx,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// Per-component spatial derivative.
    pub fn deriv(&self, order: u32, method: DerivMethod) -> Field3 {
        let comps = [0, 1, 2].map(|c| {
            let embed: Vec<C64> = self.comps[c].iter().map(|&v| C64::new(v, 0.0)).collect();
            let g = GridField { values: embed, dx: self.dx };
            g.deriv(order, method).values.iter().map(|v| v.re).collect()
        });
        Field3 { comps, dx: self.dx }
    }

    /// Per-component 2/3-rule spectral mask (see [`GridField::dealias_two_thirds`]).
    pub fn dealias_two_thirds(&self) -> Field3 {
        let comps = [0, 1, 2].map(|c| {
            let embed: Vec<C64> = self.comps[c].iter().map(|&v| C64::new(v, 0.0)).collect();
            let g = GridField { values: embed, dx: self.dx };
            g.dealias_two_thirds().values.iter().map(|v| v.re).collect()
        });
        Field3 { comps, dx: self.dx }
    }

    /// Pointwise cross product self × other.
    pub fn cross(&self, other: &Field3) -> Field3 {
        assert!(self.n() == other.n() && self.dx == other.dx);
        let n = self.n();
        let mut out = self.zeros_like();
        for i in 0..n {
            out.set(i, cross3(self.at(i), other.at(i)));
        }
        out
    }

    pub fn axpy(&self, a: f64, other: &Field3) -> Field3 {
        assert!(self.n() == other.n() && self.dx == other.dx);
        let comps = [0, 1, 2].map(|c| {
            self.comps[c]
                .iter()
                .zip(&other.comps[c])
                .map(|(&x, &y)| x + a * y)
                .collect()
        });
        Field3 { comps, dx: self.dx }
    }

    /// Largest deviation of |v_i| from 1.
    pub fn unit_defect(&self) -> f64 {
        (0..self.n()).fold(0.0f64, |m, i| {
            let v = self.at(i);
            m.max((norm3(v) - 1.0).abs())
        })
    }

    /// Rescales every node to unit magnitude.
    pub fn normalized(&self) -> Result<Field3> {
        let mut out = self.clone();
        for i in 0..self.n() {
            let v = self.at(i);
            let n = norm3(v);
            if n < 1e-12 {
                return Err(CoreError::NonUnit(format!("node {i} has magnitude {n:.3e}")));
            }
            out.set(i, [v[0] / n, v[1] / n, v[2] / n]);
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.n()).fold(0.0f64, |m, i| m.max(norm3(self.at(i))))
    }
}

pub fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

/// Seeded RNG used by every randomised routine in the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Max-norm distance per λ-order between two order→norm maps (test helper
/// for report comparisons).
pub fn norm_map_max_delta(a: &BTreeMap<i32, f64>, b: &BTreeMap<i32, f64>) -> f64 {
    let mut keys: Vec<i32> = a.keys().chain(b.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    keys.iter().fold(0.0f64, |m, k| {
        let av = a.get(k).copied().unwrap_or(0.0);
        let bv = b.get(k).copied().unwrap_or(0.0);
        m.max((av - bv).abs())
    })
}
