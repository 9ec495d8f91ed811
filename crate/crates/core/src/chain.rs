//! Classical lattice spin dynamics with per-bond couplings, coarse-graining
//! onto the continuum tangent grid, and the discrete side of the
//! spectral-order bookkeeping.
//!
//! The lattice Hamiltonian is H = −Σ_i ρ_i S_i·S_{i+1} (periodic), giving
//!
//!     dS_i/du = S_i × (ρ_{i−1} S_{i−1} + ρ_i S_{i+1}),
//!
//! which conserves every |S_i|, the energy, and the total spin. With ρ_i ≡ J
//! and lattice constant a the long-wavelength limit is the tangent flow
//! t_u = (Ja²)·t × t_ss, so the normalization Ja² = 1 reproduces `solve`'s
//! continuum dynamics; for inhomogeneous bonds we adopt ρ(x_i) = ρ_i·a²,
//! recorded in run metadata by the callers.
//!
//! The deformation types at the bottom probe the tangent-side zero-curvature
//! identity (U = iλS, V = 2iλ²S − λS_x·S) with extra temporal terms λⁿ·Λ^(n)
//! and report which Laurent orders can reach the equation-of-motion row.

use std::collections::BTreeMap;
use std::io::{BufRead, Write as IoWrite};
use std::path::Path;

use crate::grid::{cross3, dot3, norm3, seeded_rng, C64, DerivMethod, Field3, GridField, I};
use crate::interp::PeriodicSpline3;
use crate::lax::MatrixGridField;
use crate::report::{
    Classification, ConstraintRelation, Mechanism, ScanDomain, ScanEntry, ScanReport,
};
use crate::{CoreError, Result};

/// Periodic chain of unit spins with per-bond couplings.
/// Bond `i` couples sites `i` and `i+1 (mod N)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinLattice {
    sites: Vec<[f64; 3]>,
    rho_bond: Vec<f64>,
    a: f64,
}

fn renorm_site(v: [f64; 3], what: &str) -> Result<[f64; 3]> {
    let n = norm3(v);
    if !n.is_finite() || n < 0.5 {
        return Err(CoreError::NonUnit(format!("{what}: |S| = {n}")));
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

impl SpinLattice {
    /// Builds a lattice from unit spins (within 1e-6; renormalised exactly),
    /// one coupling per bond, and spacing `a`.
    pub fn new(sites: Vec<[f64; 3]>, rho_bond: Vec<f64>, a: f64) -> Result<Self> {
        if sites.len() < 4 {
            return Err(CoreError::InvalidInput(format!(
                "lattice needs at least 4 sites, got {}",
                sites.len()
            )));
        }
        if rho_bond.len() != sites.len() {
            return Err(CoreError::InvalidInput(format!(
                "{} bonds for {} sites (need one per site, cyclic)",
                rho_bond.len(),
                sites.len()
            )));
        }
        if !(a.is_finite() && a > 0.0) {
            return Err(CoreError::InvalidInput(format!("lattice spacing a = {a}")));
        }
        if rho_bond.iter().any(|r| !r.is_finite()) {
            return Err(CoreError::NonFinite("bond couplings".into()));
        }
        let mut unit_sites = Vec::with_capacity(sites.len());
        for (i, s) in sites.into_iter().enumerate() {
            let n = norm3(s);
            if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
                return Err(CoreError::NonUnit(format!("site {i}: |S| = {n}")));
            }
            unit_sites.push(renorm_site(s, "constructor")?);
        }
        Ok(SpinLattice { sites: unit_sites, rho_bond, a })
    }

    /// All spins along `dir`, homogeneous coupling.
    pub fn aligned(n: usize, a: f64, rho: f64, dir: [f64; 3]) -> Result<Self> {
        let d = renorm_site(dir, "aligned direction")?;
        SpinLattice::new(vec![d; n], vec![rho; n], a)
    }

    /// Exact spiral state: transverse amplitude `amplitude` (= sin of the
    /// polar tilt) winding `mode` times around the ring. This family precesses
    /// rigidly under the homogeneous flow at frequency 2ρ·cosθ·(1 − cos ka).
    pub fn spiral(n: usize, a: f64, rho: f64, mode: i64, amplitude: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&amplitude) {
            return Err(CoreError::InvalidInput(format!(
                "spiral amplitude {amplitude} outside [0, 1)"
            )));
        }
        let k = std::f64::consts::TAU * mode as f64 / (n as f64 * a);
        let sz = (1.0 - amplitude * amplitude).sqrt();
        let sites = (0..n)
            .map(|i| {
                let ph = k * i as f64 * a;
                [amplitude * ph.cos(), amplitude * ph.sin(), sz]
            })
            .collect();
        SpinLattice::new(sites, vec![rho; n], a)
    }

    /// Samples a continuum tangent field at the site positions (periodic
    /// spline, renormalised), keeping the field's total length.
    pub fn from_tangent_field(f: &Field3, n_sites: usize, rho: f64) -> Result<Self> {
        let sp = PeriodicSpline3::from_field(f)?;
        let a = sp.period() / n_sites as f64;
        let sites = (0..n_sites)
            .map(|i| renorm_site(sp.eval(i as f64 * a), "tangent sample"))
            .collect::<Result<Vec<_>>>()?;
        SpinLattice::new(sites, vec![rho; n_sites], a)
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn spacing(&self) -> f64 {
        self.a
    }

    pub fn length(&self) -> f64 {
        self.a * self.sites.len() as f64
    }

    pub fn site(&self, i: usize) -> [f64; 3] {
        self.sites[i % self.sites.len()]
    }

    pub fn sites(&self) -> &[[f64; 3]] {
        &self.sites
    }

    pub fn rho(&self, bond: usize) -> f64 {
        self.rho_bond[bond % self.rho_bond.len()]
    }

    pub fn rho_bonds(&self) -> &[f64] {
        &self.rho_bond
    }

    pub fn max_rho(&self) -> f64 {
        self.rho_bond.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }

    /// H = −Σ_i ρ_i S_i·S_{i+1}.
    pub fn energy(&self) -> f64 {
        let n = self.sites.len();
        -(0..n)
            .map(|i| self.rho_bond[i] * dot3(self.sites[i], self.sites[(i + 1) % n]))
            .sum::<f64>()
    }

    pub fn total_spin(&self) -> [f64; 3] {
        self.sites
            .iter()
            .fold([0.0; 3], |acc, s| [acc[0] + s[0], acc[1] + s[1], acc[2] + s[2]])
    }

    /// max_i |S_{i+1} − S_i| — the slow-variation measure.
    pub fn max_neighbor_gap(&self) -> f64 {
        let n = self.sites.len();
        (0..n).fold(0.0f64, |m, i| {
            let (s, t) = (self.sites[i], self.sites[(i + 1) % n]);
            m.max(norm3([t[0] - s[0], t[1] - s[1], t[2] - s[2]]))
        })
    }

    pub fn unit_defect(&self) -> f64 {
        self.sites.iter().fold(0.0f64, |m, s| m.max((norm3(*s) - 1.0).abs()))
    }

    /// Snapshot CSV: `i,Sx,Sy,Sz,rho_bond` with full-precision floats.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io_err = |e: std::io::Error| CoreError::InvalidInput(format!("write {path:?}: {e}"));
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
        writeln!(out, "i,Sx,Sy,Sz,rho_bond").map_err(io_err)?;
        for (i, s) in self.sites.iter().enumerate() {
            writeln!(
                out,
                "{i},{:.16e},{:.16e},{:.16e},{:.16e}",
                s[0], s[1], s[2], self.rho_bond[i]
            )
            .map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }

    /// Reads a snapshot written by [`write_csv`]; spacing is not stored in the
    /// file and must be supplied.
    pub fn read_csv(path: &Path, a: f64) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| CoreError::InvalidInput(format!("open {path:?}: {e}")))?;
        let mut sites = Vec::new();
        let mut rho = Vec::new();
        for (ln, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| CoreError::InvalidInput(format!("read {path:?}: {e}")))?;
            if ln == 0 {
                continue;
            }
            let cols: Vec<&str> = line.trim().split(',').collect();
            if cols.len() != 5 {
                return Err(CoreError::InvalidInput(format!(
                    "{path:?} line {}: expected 5 columns",
                    ln + 1
                )));
            }
            let f = |c: &str| -> Result<f64> {
                c.parse::<f64>()
                    .map_err(|e| CoreError::InvalidInput(format!("{path:?} line {}: {e}", ln + 1)))
            };
            sites.push([f(cols[1])?, f(cols[2])?, f(cols[3])?]);
            rho.push(f(cols[4])?);
        }
        SpinLattice::new(sites, rho, a)
    }
}

/// dS_i/du = S_i × (ρ_{i−1} S_{i−1} + ρ_i S_{i+1}).
pub fn chain_rhs(lat: &SpinLattice) -> Vec<[f64; 3]> {
    chain_rhs_raw(lat.sites(), lat.rho_bonds())
}

fn chain_rhs_raw(sites: &[[f64; 3]], rho: &[f64]) -> Vec<[f64; 3]> {
    let n = sites.len();
    (0..n)
        .map(|i| {
            let prev = sites[(i + n - 1) % n];
            let next = sites[(i + 1) % n];
            let rp = rho[(i + n - 1) % n];
            let rn = rho[i];
            let field = [
                rp * prev[0] + rn * next[0],
                rp * prev[1] + rn * next[1],
                rp * prev[2] + rn * next[2],
            ];
            cross3(sites[i], field)
        })
        .collect()
}

/// One RK4 step followed by per-site renormalisation.
/// Rejects dt above the precession-resolving bound 0.1/max|ρ|.
pub fn step_chain(lat: &SpinLattice, dt: f64) -> Result<SpinLattice> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CoreError::InvalidInput(format!("dt = {dt} must be positive")));
    }
    let max_rho = lat.max_rho();
    if max_rho > 0.0 {
        let ceiling = 0.1 / max_rho;
        if dt > ceiling {
            return Err(CoreError::StepTooLarge { dt, ceiling });
        }
    }
    let n = lat.n_sites();
    let shift = |base: &[[f64; 3]], k: &[[f64; 3]], h: f64| -> Vec<[f64; 3]> {
        (0..n)
            .map(|i| {
                [
                    base[i][0] + h * k[i][0],
                    base[i][1] + h * k[i][1],
                    base[i][2] + h * k[i][2],
                ]
            })
            .collect()
    };
    let rho = lat.rho_bonds();
    let k1 = chain_rhs_raw(lat.sites(), rho);
    let k2 = chain_rhs_raw(&shift(lat.sites(), &k1, 0.5 * dt), rho);
    let k3 = chain_rhs_raw(&shift(lat.sites(), &k2, 0.5 * dt), rho);
    let k4 = chain_rhs_raw(&shift(lat.sites(), &k3, dt), rho);
    let mut sites = Vec::with_capacity(n);
    for i in 0..n {
        let v = [0, 1, 2].map(|c| {
            lat.sites()[i][c]
                + dt / 6.0 * (k1[i][c] + 2.0 * k2[i][c] + 2.0 * k3[i][c] + k4[i][c])
        });
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::NonFinite(format!("step_chain site {i}")));
        }
        sites.push(renorm_site(v, "step_chain")?);
    }
    Ok(SpinLattice { sites, rho_bond: lat.rho_bonds().to_vec(), a: lat.spacing() })
}

/// One monitor sample of a chain run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainSample {
    pub t: f64,
    pub energy: f64,
    pub total_spin: [f64; 3],
    pub unit_defect: f64,
}

/// Fixed-step driver; monitors sampled every `snapshot_every` steps
/// (0 means first/last only).
pub fn run_chain(
    lat: &SpinLattice,
    dt: f64,
    n_steps: usize,
    snapshot_every: usize,
) -> Result<(SpinLattice, Vec<ChainSample>)> {
    let mut samples = Vec::new();
    let probe = |t: f64, l: &SpinLattice| ChainSample {
        t,
        energy: l.energy(),
        total_spin: l.total_spin(),
        unit_defect: l.unit_defect(),
    };
    let mut cur = lat.clone();
    samples.push(probe(0.0, &cur));
    for s in 0..n_steps {
        cur = step_chain(&cur, dt)?;
        if snapshot_every != 0 && (s + 1) % snapshot_every == 0 && s + 1 != n_steps {
            samples.push(probe((s + 1) as f64 * dt, &cur));
        }
    }
    samples.push(probe(n_steps as f64 * dt, &cur));
    Ok((cur, samples))
}

/// Closed-form small-amplitude dispersion 2J(1 − cos ka) of the homogeneous
/// chain; serves as the oracle for the measured value.
pub fn magnon_frequency(j: f64, ka: f64) -> f64 {
    2.0 * j * (1.0 - ka.cos())
}

/// Measures the spin-wave frequency of the homogeneous chain by evolving a
/// small spiral and regressing the phase of its winding-`mode` projection.
/// Rejects amplitudes outside the linear regime (> 0.1).
pub fn magnon_dispersion(n_sites: usize, a: f64, j: f64, mode: i64, amplitude: f64) -> Result<f64> {
    if !(amplitude > 0.0 && amplitude <= 0.1) {
        return Err(CoreError::InvalidInput(format!(
            "amplitude {amplitude} outside the linear-regime window (0, 0.1]"
        )));
    }
    if j == 0.0 {
        return Ok(0.0);
    }
    let lat0 = SpinLattice::spiral(n_sites, a, j, mode, amplitude)?;
    let ka = std::f64::consts::TAU * mode as f64 / n_sites as f64;
    let omega_nominal = magnon_frequency(j.abs(), ka).abs();
    // long enough for ≥ 1.5 rad of phase, capped for the k→0 end
    let t_total = (1.5 / omega_nominal.max(1e-9)).min(60.0 / j.abs());
    let dt = 0.05 / j.abs();
    let steps = (t_total / dt).ceil() as usize;
    let k = ka / a;
    let project = |lat: &SpinLattice| -> C64 {
        (0..n_sites)
            .map(|i| {
                let s = lat.site(i);
                C64::new(s[0], s[1]) * (-I * k * (i as f64 * a)).exp()
            })
            .sum()
    };
    let mut lat = lat0;
    let mut phases = Vec::with_capacity(steps + 1);
    let mut prev = project(&lat);
    let mut acc = 0.0f64;
    phases.push((0.0, 0.0));
    for s in 0..steps {
        lat = step_chain(&lat, dt)?;
        let cur = project(&lat);
        acc += (cur / prev).arg();
        prev = cur;
        phases.push(((s + 1) as f64 * dt, acc));
    }
    // least-squares slope of unwrapped phase vs time
    let m = phases.len() as f64;
    let tbar = phases.iter().map(|(t, _)| t).sum::<f64>() / m;
    let pbar = phases.iter().map(|(_, p)| p).sum::<f64>() / m;
    let num: f64 = phases.iter().map(|(t, p)| (t - tbar) * (p - pbar)).sum();
    let den: f64 = phases.iter().map(|(t, _)| (t - tbar) * (t - tbar)).sum();
    Ok((num / den).abs())
}

/// Interpolates the lattice onto a power-of-two continuum grid spanning the
/// same ring, renormalising the sampled vectors. Requires slow variation
/// (|S_{i+1} − S_i| ≤ 0.2).
pub fn coarse_grain(lat: &SpinLattice) -> Result<Field3> {
    let gap = lat.max_neighbor_gap();
    if gap > 0.2 {
        return Err(CoreError::InvalidInput(format!(
            "slow-variation check failed: max neighbor gap {gap:.3} > 0.2"
        )));
    }
    let sp = PeriodicSpline3::new(lat.sites(), lat.spacing())?;
    let m = lat.n_sites().next_power_of_two().max(8);
    let dx = lat.length() / m as f64;
    let f = Field3::from_fn(m, dx, |x| sp.eval(x))?;
    f.normalized()
}

/// Largest pointwise angle (radians) between two unit tangent fields.
pub fn max_angle_between(f: &Field3, g: &Field3) -> Result<f64> {
    if f.n() != g.n() || f.dx() != g.dx() {
        return Err(CoreError::GridMismatch("tangent fields on different grids".into()));
    }
    Ok((0..f.n()).fold(0.0f64, |m, i| {
        let c = dot3(f.at(i), g.at(i)).clamp(-1.0, 1.0);
        m.max(c.acos())
    }))
}

// ---------------------------------------------------------------------------
// tangent-side deformations
// ---------------------------------------------------------------------------

/// Coefficient vectors of the deformation terms: order n ↦ three complex
/// component fields (c₁, c₂, c₃), realising the matrix c₁σ₁ + c₂σ₂ + c₃σ₃ on
/// the chain's continuum embedding grid.
#[derive(Clone, Debug, Default)]
pub struct DiscreteDeformation {
    terms: BTreeMap<i32, [GridField; 3]>,
}

/// (c₁, c₂, c₃) ↦ c₁σ₁ + c₂σ₂ + c₃σ₃ as a matrix field.
pub fn vector_to_matrix(comps: &[GridField; 3]) -> Result<MatrixGridField> {
    let [c1, c2, c3] = comps;
    c1.require_same_grid(c2, "deformation components")?;
    c1.require_same_grid(c3, "deformation components")?;
    // off-diagonals: upper = c1 − i c2, lower = c1 + i c2
    let cp = c1.zip_with(c2, |a, b| a - I * b);
    let cm = c1.zip_with(c2, |a, b| a + I * b);
    MatrixGridField::from_coeff_fields(c3, &cp, &cm)
}

/// Inverse of [`vector_to_matrix`] (ignores any trace part).
pub fn matrix_to_vector(m: &MatrixGridField) -> [GridField; 3] {
    let c1 = m.coeff_field(|pc| (pc.cp + pc.cm) * 0.5);
    let c2 = m.coeff_field(|pc| I * (pc.cp - pc.cm) * 0.5);
    let c3 = m.coeff_field(|pc| pc.c3);
    [c1, c2, c3]
}

impl DiscreteDeformation {
    pub fn empty() -> Self {
        DiscreteDeformation { terms: BTreeMap::new() }
    }

    pub fn insert(&mut self, order: i32, comps: [GridField; 3]) -> Result<()> {
        comps[0].require_same_grid(&comps[1], "deformation components")?;
        comps[0].require_same_grid(&comps[2], "deformation components")?;
        if let Some((_, existing)) = self.terms.iter().next() {
            existing[0].require_same_grid(&comps[0], "deformation terms")?;
        }
        self.terms.insert(order, comps);
        Ok(())
    }

    pub fn get(&self, order: i32) -> Option<&[GridField; 3]> {
        self.terms.get(&order)
    }

    pub fn orders(&self) -> Vec<i32> {
        self.terms.keys().copied().collect()
    }

    /// Matrix realisation of the order-`n` term on the given grid
    /// (zero when absent).
    pub fn matrix(&self, order: i32, n_nodes: usize, dx: f64) -> Result<MatrixGridField> {
        match self.terms.get(&order) {
            None => MatrixGridField::zeros(n_nodes, dx),
            Some(comps) => {
                if comps[0].n() != n_nodes || comps[0].dx() != dx {
                    return Err(CoreError::GridMismatch(format!(
                        "deformation order {order} lives on a different grid"
                    )));
                }
                vector_to_matrix(comps)
            }
        }
    }
}

/// Deformed tangent-flow right side:
///
///     S_t = (1/2i)[S, S_xx] + (1/2)Λ^(1)_x − i[S, Λ^(0)]
///
/// Only the order-0 and order-1 deformation entries are read; S must satisfy
/// S² = I within 1e-8.
pub fn deformed_ll_rhs(s: &MatrixGridField, d: &DiscreteDeformation) -> Result<MatrixGridField> {
    let defect = s.involution_defect();
    if defect > 1e-8 {
        return Err(CoreError::InvalidInput(format!(
            "spin matrix field is not involutive: ‖S²−I‖ = {defect:.3e}"
        )));
    }
    let base = crate::solve::ll_matrix_rhs(s, DerivMethod::Spectral);
    let l1 = d.matrix(1, s.n(), s.dx())?;
    let l0 = d.matrix(0, s.n(), s.dx())?;
    let flux = l1.deriv_x(1, DerivMethod::Spectral).scale(C64::new(0.5, 0.0));
    let bracket = s.commutator(&l0).scale(-I);
    Ok(base.add(&flux).add(&bracket))
}

/// Recursion residual Λ^(n)_s − i[S, Λ^(n−1)]; absent orders count as zero.
pub fn recursive_constraint_residual(
    s: &MatrixGridField,
    d: &DiscreteDeformation,
    n: i32,
) -> Result<MatrixGridField> {
    let ln = d.matrix(n, s.n(), s.dx())?;
    let lprev = d.matrix(n - 1, s.n(), s.dx())?;
    let deriv = ln.deriv_x(1, DerivMethod::Spectral);
    Ok(deriv.sub(&s.commutator(&lprev).scale(I)))
}

fn recursion_relation(subject: i32) -> ConstraintRelation {
    ConstraintRelation {
        row_order: subject,
        subject_order: subject,
        linked_order: subject - 1,
        equation: format!("Lambda^({subject})_s - i[S, Lambda^({})] = 0", subject - 1),
    }
}

/// Probes each Laurent order with generic random coefficients, assembles its
/// contribution to the tangent-side zero-curvature rows, and classifies it.
/// The EOM row is the order-1 row (where U_t = iλS_t lives). Classification is
/// verified identical across 3 random probes per order.
pub fn discrete_spectral_scan(
    s: &MatrixGridField,
    orders: &[i32],
    seed: u64,
) -> Result<ScanReport> {
    let defect = s.involution_defect();
    if defect > 1e-8 {
        return Err(CoreError::InvalidInput(format!(
            "spin matrix field is not involutive: ‖S²−I‖ = {defect:.3e}"
        )));
    }
    const EOM_ROW: i32 = 1;
    const SAMPLES: u32 = 3;
    let mut rng = seeded_rng(seed);
    let max_mode = (s.n() / 3).saturating_sub(1).clamp(1, 4);
    let mut entries = Vec::new();
    for &n in orders {
        let mut agreed: Option<(Classification, BTreeMap<i32, f64>)> = None;
        for _ in 0..SAMPLES {
            let comps = [
                GridField::random_band_limited(s.n(), s.dx(), max_mode, &mut rng)?,
                GridField::random_band_limited(s.n(), s.dx(), max_mode, &mut rng)?,
                GridField::random_band_limited(s.n(), s.dx(), max_mode, &mut rng)?,
            ];
            let probe = vector_to_matrix(&comps)?;
            let scale = probe.max_abs().max(1e-300);
            // δV = λⁿ·Λ contributes −Λ_x at row n and i[S,Λ] at row n+1
            let row_deriv = probe.deriv_x(1, DerivMethod::Spectral).scale(C64::new(-1.0, 0.0));
            let row_bracket = s.commutator(&probe).scale(I);
            let mut norms = BTreeMap::new();
            norms.insert(n, row_deriv.max_abs() / scale);
            norms.insert(n + 1, row_bracket.max_abs() / scale);
            let eom_norm = norms.get(&EOM_ROW).copied().unwrap_or(0.0);
            let classification = if eom_norm > 1e-10 {
                let mechanism = if n == EOM_ROW {
                    Mechanism::DerivativeFlux
                } else {
                    Mechanism::TangentBracket
                };
                Classification::EomModifying { mechanism }
            } else if norms.values().all(|v| *v <= 1e-10) {
                Classification::Inert
            } else {
                let depth = if n > EOM_ROW {
                    (n - EOM_ROW) as u32
                } else {
                    (-n) as u32
                };
                Classification::PureConstraint { recursion_depth: depth }
            };
            match &agreed {
                None => agreed = Some((classification, norms)),
                Some((prev, _)) => {
                    if *prev != classification {
                        return Err(CoreError::InvalidInput(format!(
                            "order {n}: classification unstable across random probes"
                        )));
                    }
                }
            }
        }
        let (classification, norms) = agreed.expect("at least one sample");
        let mut constraint_structure = Vec::new();
        if n != EOM_ROW {
            constraint_structure.push(recursion_relation(n));
        }
        if n + 1 != EOM_ROW {
            constraint_structure.push(recursion_relation(n + 1));
        }
        entries.push(ScanEntry {
            order: n,
            classification,
            residual_norms: norms,
            constraint_structure,
        });
    }
    Ok(ScanReport { domain: ScanDomain::Discrete, entries, samples: SAMPLES, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::su2;
    use std::f64::consts::TAU;

    #[test]
    fn aligned_chain_is_stationary() {
        let lat = SpinLattice::aligned(16, 0.5, 1.3, [0.0, 0.0, 1.0]).unwrap();
        for v in chain_rhs(&lat) {
            assert!(norm3(v) <= 1e-15);
        }
        let stepped = step_chain(&lat, 0.05).unwrap();
        assert_eq!(stepped.sites(), lat.sites());
    }

    #[test]
    fn hand_checked_cross_products_and_bond_placement() {
        let z = [0.0, 0.0, 1.0];
        let x = [1.0, 0.0, 0.0];
        // homogeneous ρ=1: site 0 feels both neighbors along x̂
        let lat = SpinLattice::new(vec![z, x, z, x], vec![1.0; 4], 1.0).unwrap();
        let r = chain_rhs(&lat);
        assert!(norm3([r[0][0], r[0][1] - 2.0, r[0][2]]) <= 1e-15, "ẑ×2x̂ = 2ŷ");
        assert!(norm3([r[1][0], r[1][1] + 2.0, r[1][2]]) <= 1e-15, "x̂×2ẑ = −2ŷ");

        // only bond 0 active: couples sites 0 and 1, nothing else
        let lat = SpinLattice::new(vec![z, x, z, x], vec![1.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        let r = chain_rhs(&lat);
        assert!(norm3([r[0][0], r[0][1] - 1.0, r[0][2]]) <= 1e-15);
        assert!(norm3([r[1][0], r[1][1] + 1.0, r[1][2]]) <= 1e-15);
        assert!(norm3(r[2]) <= 1e-15);
        assert!(norm3(r[3]) <= 1e-15);
    }

    #[test]
    fn zero_coupling_freezes_the_chain() {
        let lat = SpinLattice::spiral(32, 1.0, 0.0, 3, 0.4).unwrap();
        for v in chain_rhs(&lat) {
            assert!(norm3(v) == 0.0);
        }
        // no coupling bound on dt either
        let stepped = step_chain(&lat, 123.0).unwrap();
        assert_eq!(stepped.sites(), lat.sites());
    }

    #[test]
    fn step_rejects_dt_above_the_coupling_bound() {
        let lat = SpinLattice::aligned(8, 1.0, 2.0, [0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            step_chain(&lat, 0.06),
            Err(CoreError::StepTooLarge { .. })
        ));
        assert!(step_chain(&lat, 0.05).is_ok());
    }

    #[test]
    fn tilted_spin_precesses_at_the_local_field_frequency() {
        // background ẑ, one spin tilted: local field 2ρẑ → |ω| = 2ρ, measured
        // over a window short enough that neighbor back-reaction stays tiny
        let n = 32;
        let theta: f64 = 0.05;
        let mut sites = vec![[0.0, 0.0, 1.0]; n];
        sites[0] = [theta.sin(), 0.0, theta.cos()];
        let lat0 = SpinLattice::new(sites, vec![1.0; n], 1.0).unwrap();
        let dt = 1e-3;
        let steps = 20;
        let mut lat = lat0;
        for _ in 0..steps {
            lat = step_chain(&lat, dt).unwrap();
        }
        let s0 = lat.site(0);
        let phase = s0[1].atan2(s0[0]);
        let omega = (phase / (steps as f64 * dt)).abs();
        assert!((omega - 2.0).abs() / 2.0 <= 0.02, "measured ω = {omega}");
    }

    #[test]
    fn spiral_precesses_rigidly_at_the_analytic_frequency() {
        let (n, a, rho, mode, amp) = (64, 1.0, 1.0, 4i64, 0.3);
        let lat0 = SpinLattice::spiral(n, a, rho, mode, amp).unwrap();
        let ka = TAU * mode as f64 / n as f64;
        let cos_theta = (1.0f64 - amp * amp).sqrt();
        let omega = 2.0 * rho * cos_theta * (1.0 - ka.cos());
        let dt = 0.05;
        let steps = 20;
        let mut lat = lat0.clone();
        for _ in 0..steps {
            lat = step_chain(&lat, dt).unwrap();
        }
        let t = steps as f64 * dt;
        // exact solution: transverse phase advances by −ωt everywhere
        for i in 0..n {
            let ph0 = ka * i as f64 - omega * t;
            let expect = [amp * ph0.cos(), amp * ph0.sin(), cos_theta];
            let got = lat.site(i);
            let gap = norm3([got[0] - expect[0], got[1] - expect[1], got[2] - expect[2]]);
            assert!(gap <= 1e-6, "site {i} gap {gap}");
        }
    }

    #[test]
    fn energy_and_total_spin_are_conserved_on_random_smooth_states() {
        let n = 64;
        let mut rng = seeded_rng(11);
        let base = SpinLattice::spiral(n, 1.0, 1.0, 2, 0.5).unwrap();
        let wobble = GridField::random_real_band_limited(n, 1.0, 4, 0.15, 0.0, &mut rng).unwrap();
        let sites: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let s = base.site(i);
                let w = wobble.get(i).re;
                let v = [s[0] + w, s[1], s[2]];
                let nv = norm3(v);
                [v[0] / nv, v[1] / nv, v[2] / nv]
            })
            .collect();
        let lat0 = SpinLattice::new(sites, vec![1.0; n], 1.0).unwrap();
        let (lat, samples) = run_chain(&lat0, 1e-3, 10_000, 1000).unwrap();
        let e0 = samples[0].energy;
        let drift = samples.iter().fold(0.0f64, |m, s| m.max((s.energy - e0).abs()));
        assert!(drift <= 1e-6, "energy drift {drift}");
        let s0 = samples[0].total_spin;
        let sf = lat.total_spin();
        let spin_drift = norm3([sf[0] - s0[0], sf[1] - s0[1], sf[2] - s0[2]]);
        assert!(spin_drift <= 1e-8, "total spin drift {spin_drift}");
        assert!(lat.unit_defect() <= 1e-12);
    }

    #[test]
    fn measured_dispersion_matches_the_closed_form() {
        // ka = π/4
        let omega = magnon_dispersion(64, 1.0, 1.0, 8, 0.02).unwrap();
        let expect = magnon_frequency(1.0, TAU / 8.0);
        assert!((expect - 2.0 * (1.0 - (std::f64::consts::PI / 4.0).cos())).abs() <= 1e-15);
        assert!((omega - expect).abs() / expect <= 0.02, "ω = {omega}, expect {expect}");
    }

    #[test]
    fn long_wavelength_dispersion_approaches_the_continuum_quadratic() {
        // ka = π/16 with Ja² = 1: measured ω vs k² within 5%
        let (n, a, j) = (64, 1.0, 1.0);
        let mode = 2; // ka = 2π·2/64 = π/16
        let omega = magnon_dispersion(n, a, j, mode, 0.02).unwrap();
        let k = TAU * mode as f64 / (n as f64 * a);
        assert!((omega - k * k).abs() / (k * k) <= 0.05, "ω = {omega}, k² = {}", k * k);
    }

    #[test]
    fn zero_mode_has_zero_frequency_and_large_amplitudes_are_rejected() {
        let omega = magnon_dispersion(32, 1.0, 1.0, 0, 0.02).unwrap();
        assert!(omega.abs() <= 1e-8, "global rotation must not precess, got {omega}");
        assert!(magnon_dispersion(32, 1.0, 1.0, 4, 0.5).is_err());
    }

    #[test]
    fn coarse_grain_reproduces_constants_and_twists() {
        let lat = SpinLattice::aligned(100, 0.3, 1.0, [0.0, 0.6, 0.8]).unwrap();
        let f = coarse_grain(&lat).unwrap();
        assert_eq!(f.n(), 128);
        for i in 0..f.n() {
            let gap = norm3([f.at(i)[0], f.at(i)[1] - 0.6, f.at(i)[2] - 0.8]);
            assert!(gap <= 1e-12);
        }

        // single long-wavelength twist vs analytic profile
        let (n, a, amp) = (100, 0.3, 0.6);
        let lat = SpinLattice::spiral(n, a, 1.0, 1, amp).unwrap();
        let f = coarse_grain(&lat).unwrap();
        let k = TAU / (n as f64 * a);
        let sz = (1.0f64 - amp * amp).sqrt();
        let mut worst = 0.0f64;
        for i in 0..f.n() {
            let x = i as f64 * f.dx();
            let expect = [amp * (k * x).cos(), amp * (k * x).sin(), sz];
            let got = f.at(i);
            worst = worst
                .max(norm3([got[0] - expect[0], got[1] - expect[1], got[2] - expect[2]]));
        }
        assert!(worst <= 1e-4, "interpolation error {worst}");
    }

    #[test]
    fn coarse_grain_round_trips_on_a_power_of_two_chain() {
        let lat = SpinLattice::spiral(128, 0.25, 1.0, 3, 0.5).unwrap();
        let f = coarse_grain(&lat).unwrap();
        // grid nodes coincide with sites, so sampling back is node-exact
        let back = SpinLattice::from_tangent_field(&f, 128, 1.0).unwrap();
        let mut worst = 0.0f64;
        for i in 0..128 {
            let (s, b) = (lat.site(i), back.site(i));
            worst = worst.max(norm3([s[0] - b[0], s[1] - b[1], s[2] - b[2]]));
        }
        assert!(worst <= 1e-6, "round trip error {worst}");
    }

    #[test]
    fn coarse_grain_rejects_fast_variation() {
        let lat = SpinLattice::spiral(100, 1.0, 1.0, 25, 0.9).unwrap();
        assert!(matches!(coarse_grain(&lat), Err(CoreError::InvalidInput(_))));
    }

    #[test]
    fn chain_agrees_with_the_continuum_tangent_flow() {
        // a/λ_wave = 1/32 at mode 4 on 128 sites; Ja² = 1
        let (n, a, mode, amp) = (128usize, 1.0, 4i64, 0.15);
        let lat0 = SpinLattice::spiral(n, a, 1.0, mode, amp).unwrap();
        let f0 = coarse_grain(&lat0).unwrap();

        let t_final: f64 = 1.0;
        let dt_chain = 0.05;
        let mut lat = lat0;
        for _ in 0..(t_final / dt_chain).round() as usize {
            lat = step_chain(&lat, dt_chain).unwrap();
        }
        let from_chain = coarse_grain(&lat).unwrap();

        let dt_ll = crate::solve::default_dt(f0.dx());
        let steps = (t_final / dt_ll).ceil() as usize;
        let dt_ll = t_final / steps as f64;
        let mut f = f0;
        for _ in 0..steps {
            f = crate::solve::step_ll(&f, dt_ll).unwrap();
        }
        let angle = max_angle_between(&from_chain, &f).unwrap();
        assert!(angle <= 0.05, "max angular discrepancy {angle} rad");
    }

    #[test]
    fn lattice_csv_round_trips() {
        let dir = std::env::temp_dir().join("zerocurve-chain-csv");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("lat.csv");
        let lat = SpinLattice::spiral(16, 0.7, 1.4, 2, 0.3).unwrap();
        lat.write_csv(&path).unwrap();
        let back = SpinLattice::read_csv(&path, 0.7).unwrap();
        assert_eq!(back.n_sites(), 16);
        for i in 0..16 {
            let (s, b) = (lat.site(i), back.site(i));
            assert!(norm3([s[0] - b[0], s[1] - b[1], s[2] - b[2]]) <= 1e-15);
            assert!((lat.rho(i) - back.rho(i)).abs() <= 1e-18);
        }
        // byte-identical rewrite
        let second = dir.join("lat2.csv");
        back.write_csv(&second).unwrap();
        let a = std::fs::read(&path).unwrap();
        let b = std::fs::read(&second).unwrap();
        assert_eq!(a, b);
    }

    // ---- deformation machinery ----

    fn smooth_spin_matrix(n: usize, l: f64) -> MatrixGridField {
        let f = Field3::from_fn(n, l / n as f64, |x| {
            let th = 0.4 * (TAU * x / l).sin();
            let ph = TAU * x / l + 0.3;
            [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]
        })
        .unwrap()
        .normalized()
        .unwrap();
        MatrixGridField::from_spin_field(&f).unwrap()
    }

    #[test]
    fn vector_matrix_round_trip() {
        let n = 32;
        let dx = 0.2;
        let mut rng = seeded_rng(3);
        let comps = [
            GridField::random_band_limited(n, dx, 4, &mut rng).unwrap(),
            GridField::random_band_limited(n, dx, 4, &mut rng).unwrap(),
            GridField::random_band_limited(n, dx, 4, &mut rng).unwrap(),
        ];
        let m = vector_to_matrix(&comps).unwrap();
        let back = matrix_to_vector(&m);
        for c in 0..3 {
            assert!((&back[c] - &comps[c]).max_abs() <= 1e-13);
        }
    }

    #[test]
    fn empty_deformation_reduces_to_the_plain_tangent_rhs() {
        let s = smooth_spin_matrix(64, 16.0);
        let got = deformed_ll_rhs(&s, &DiscreteDeformation::empty()).unwrap();
        let base = crate::solve::ll_matrix_rhs(&s, DerivMethod::Spectral);
        let gap = (0..s.n()).fold(0.0f64, |m, i| m.max((got.node(i) - base.node(i)).max_abs()));
        assert!(gap <= 1e-15);
    }

    #[test]
    fn order_zero_equal_to_s_and_constant_order_one_do_nothing() {
        let s = smooth_spin_matrix(64, 16.0);
        let base = crate::solve::ll_matrix_rhs(&s, DerivMethod::Spectral);

        // Λ^(0) = S: commutator vanishes
        let mut d = DiscreteDeformation::empty();
        d.insert(0, matrix_to_vector(&s)).unwrap();
        let got = deformed_ll_rhs(&s, &d).unwrap();
        let gap = (0..s.n()).fold(0.0f64, |m, i| m.max((got.node(i) - base.node(i)).max_abs()));
        assert!(gap <= 1e-12);

        // Λ^(1) = const σ3: flux derivative vanishes
        let one = GridField::constant(s.n(), s.dx(), C64::new(0.7, 0.1)).unwrap();
        let zero = GridField::zeros(s.n(), s.dx()).unwrap();
        let mut d = DiscreteDeformation::empty();
        d.insert(1, [zero.clone(), zero, one]).unwrap();
        let got = deformed_ll_rhs(&s, &d).unwrap();
        let gap = (0..s.n()).fold(0.0f64, |m, i| m.max((got.node(i) - base.node(i)).max_abs()));
        assert!(gap <= 1e-12);
    }

    #[test]
    fn deformation_terms_enter_with_the_stated_coefficients() {
        let s = smooth_spin_matrix(64, 16.0);
        let (n, dx) = (s.n(), s.dx());
        let l = n as f64 * dx;
        let base = crate::solve::ll_matrix_rhs(&s, DerivMethod::Spectral);

        // Λ^(1) = c3(x)·σ3 adds (1/2)c3'(x)·σ3
        let c3 = GridField::from_fn(n, dx, |x| C64::new((TAU * x / l).sin(), 0.0)).unwrap();
        let zero = GridField::zeros(n, dx).unwrap();
        let mut d = DiscreteDeformation::empty();
        d.insert(1, [zero.clone(), zero.clone(), c3.clone()]).unwrap();
        let got = deformed_ll_rhs(&s, &d).unwrap();
        let c3x = c3.deriv(1, DerivMethod::Spectral);
        for i in 0..n {
            let expect = base.node(i) + (0.5 * c3x.get(i)) * su2::SIGMA3;
            assert!((got.node(i) - expect).max_abs() <= 1e-10, "node {i}");
        }

        // Λ^(0) = const c·σ adds −i[S, c·σ], checked against a nodewise oracle
        let c = [C64::new(0.3, 0.0), C64::new(-0.2, 0.1), C64::new(0.5, 0.0)];
        let consts = [
            GridField::constant(n, dx, c[0]).unwrap(),
            GridField::constant(n, dx, c[1]).unwrap(),
            GridField::constant(n, dx, c[2]).unwrap(),
        ];
        let mut d = DiscreteDeformation::empty();
        d.insert(0, consts).unwrap();
        let got = deformed_ll_rhs(&s, &d).unwrap();
        let cmat = c[0] * su2::SIGMA1 + c[1] * su2::SIGMA2 + c[2] * su2::SIGMA3;
        for i in 0..n {
            let expect = base.node(i) + C64::new(0.0, -1.0) * s.node(i).commutator(&cmat);
            assert!((got.node(i) - expect).max_abs() <= 1e-10, "node {i}");
        }
    }

    #[test]
    fn deformed_rhs_rejects_non_involutive_input() {
        let bad = MatrixGridField::constant(16, 0.5, su2::SIGMA3.scale(C64::new(1.1, 0.0))).unwrap();
        assert!(deformed_ll_rhs(&bad, &DiscreteDeformation::empty()).is_err());
    }

    #[test]
    fn recursion_residual_trivial_cases() {
        let s = smooth_spin_matrix(32, 8.0);
        let d = DiscreteDeformation::empty();
        let r = recursive_constraint_residual(&s, &d, 2).unwrap();
        assert!(r.max_abs() == 0.0);

        let (n, dx) = (s.n(), s.dx());
        let one = GridField::constant(n, dx, C64::new(0.4, -0.2)).unwrap();
        let zero = GridField::zeros(n, dx).unwrap();
        let mut d = DiscreteDeformation::empty();
        d.insert(2, [one, zero.clone(), zero]).unwrap();
        let r = recursive_constraint_residual(&s, &d, 2).unwrap();
        assert!(r.max_abs() <= 1e-12);
    }

    #[test]
    fn integrating_the_recursion_annihilates_the_residual() {
        // constant tangent x̂ (S = σ1) with Λ^(1) = c3(s)σ3 zero-mean:
        // i[S, Λ^(1)] = 2c3·σ2 is mean-free, so its exact periodic
        // antiderivative defines a Λ^(2) satisfying the recursion.
        let n = 64;
        let l = 8.0;
        let dx = l / n as f64;
        let s = MatrixGridField::constant(n, dx, su2::SIGMA1).unwrap();
        let c3 = GridField::from_fn(n, dx, |x| {
            C64::new((TAU * x / l).sin(), 0.2 * (2.0 * TAU * x / l).cos())
        })
        .unwrap();
        let zero = GridField::zeros(n, dx).unwrap();
        let mut d = DiscreteDeformation::empty();
        d.insert(1, [zero.clone(), zero.clone(), c3.clone()]).unwrap();

        let bracket = s
            .commutator(&d.matrix(1, n, dx).unwrap())
            .scale(I);
        let comps = matrix_to_vector(&bracket);
        let mut anti = Vec::new();
        for c in comps.iter() {
            let (a, mean) = c.antiderivative_periodic();
            assert!(mean.norm() <= 1e-12, "integrand must be mean-free");
            anti.push(a);
        }
        d.insert(2, [anti[0].clone(), anti[1].clone(), anti[2].clone()]).unwrap();
        let r = recursive_constraint_residual(&s, &d, 2).unwrap();
        assert!(r.max_abs() <= 1e-10, "residual {}", r.max_abs());
    }

    #[test]
    fn discrete_scan_finds_the_eom_window() {
        let s = smooth_spin_matrix(64, 16.0);
        let orders: Vec<i32> = (-2..=3).collect();
        let report = discrete_spectral_scan(&s, &orders, 42).unwrap();
        assert_eq!(report.eom_modifying_orders(), vec![0, 1]);
        assert_eq!(
            report.entry(0).unwrap().classification,
            Classification::EomModifying { mechanism: Mechanism::TangentBracket }
        );
        assert_eq!(
            report.entry(1).unwrap().classification,
            Classification::EomModifying { mechanism: Mechanism::DerivativeFlux }
        );
        for (order, depth) in [(-1, 1u32), (-2, 2), (2, 1), (3, 2)] {
            assert_eq!(
                report.entry(order).unwrap().classification,
                Classification::PureConstraint { recursion_depth: depth },
                "order {order}"
            );
        }
        // the canonical recursion pattern is emitted for n = 2
        let e2 = report.entry(2).unwrap();
        assert!(e2
            .constraint_structure
            .iter()
            .any(|c| c.subject_order == 2
                && c.linked_order == 1
                && c.equation == "Lambda^(2)_s - i[S, Lambda^(1)] = 0"));
    }

    #[test]
    fn discrete_scan_is_deterministic_and_empty_range_is_empty() {
        let s = smooth_spin_matrix(32, 8.0);
        let a = discrete_spectral_scan(&s, &[-1, 0, 2], 7).unwrap();
        let b = discrete_spectral_scan(&s, &[-1, 0, 2], 7).unwrap();
        assert_eq!(a, b);
        let empty = discrete_spectral_scan(&s, &[], 7).unwrap();
        assert!(empty.entries.is_empty());
    }
}
