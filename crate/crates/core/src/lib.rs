//! Zero-curvature toolkit for su(2) integrable systems.
//!
//! The crate is organised around the flatness condition of a Lax connection
//! (A, B) with spectral parameter λ,
//!
//! ```text
//!     F_tx = A_t - B_x + [A, B] = 0 ,
//! ```
//!
//! expanded order by order in λ. λ is never given a numerical value: Laurent
//! fields carry a map `order -> matrix field` and all algebra is exact in the
//! grading. On top of that sit
//!
//! * pseudo-spectral evolution for the nonlinear Schrödinger family and the
//!   Landau–Lifshitz / spin-chain hierarchy ([`solve`], [`chain`]),
//! * curve geometry: Frenet frames, the Hasimoto map and vortex-filament
//!   motion ([`curve`]),
//! * non-holonomic deformations of the temporal Lax component, their closed-
//!   form closures, constraint calculus and spectral-order scans ([`nhd`]).
//!
//! All reductions (norms, supports, report ordering) are sequential and
//! deterministic; random inputs are always drawn from a caller-seeded
//! ChaCha stream.

pub mod chain;
pub mod curve;
pub mod grid;
pub mod interp;
pub mod lax;
pub mod nhd;
pub mod report;
pub mod solve;
pub mod su2;

use thiserror::Error;

/// Unified error type for every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Two fields that must share (n, dx) do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    /// A grid that violates the sampling contract (power-of-two length >= 8,
    /// positive spacing, finite samples).
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    /// Inputs outside an operation's documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Explicit time step above the hard stability ceiling.
    #[error("time step {dt:.3e} exceeds stability ceiling {ceiling:.3e}")]
    StepTooLarge { dt: f64, ceiling: f64 },
    /// NaN/Inf appeared where finite data is guaranteed.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    /// Spin or tangent magnitude drifted outside tolerance before a step.
    #[error("unit-magnitude invariant violated: {0}")]
    NonUnit(String),
    /// A filament developed a self-intersection; the run must halt.
    #[error("curve self-intersection: {0}")]
    SelfIntersection(String),
    /// Deformation order outside the supported window [-3, 3].
    #[error("deformation order {0} outside supported range [-3, 3]")]
    OrderOutOfRange(i32),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;
