//! Run configuration: one flat, fully optional key set shared by every
//! subcommand. JSON configs and CLI flags populate the same struct (flags
//! win), unknown JSON keys are rejected, and each subcommand validates the
//! keys it actually consumes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Everything a run can be told. `None` means "use the subcommand default".
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Subcommand name (`simulate`, `zcc-check`, ...). Filled from argv when
    /// launched from flags; required in sweep templates.
    pub subcommand: Option<String>,
    /// Subcommand variant (`nls`, `continuum`, `forward`, ...).
    pub variant: Option<String>,

    // grid
    pub n: Option<usize>,
    pub l: Option<f64>,

    // time
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub snapshot_every: Option<usize>,

    // problem parameters
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub alpha_prime: Option<f64>,
    pub drag: Option<f64>,
    /// Density profile: `const` or `tanh`.
    pub rho: Option<String>,
    /// Step height of the `tanh` profile.
    pub rho_epsilon: Option<f64>,
    /// Centre of the `tanh` transition (defaults to L/2).
    pub rho_center: Option<f64>,
    /// Real/imaginary parts of the `const` profile.
    pub rho_re: Option<f64>,
    pub rho_im: Option<f64>,
    /// Uniform initial amplitude; when set it replaces the default soliton.
    pub uniform: Option<f64>,
    /// Soliton amplitude/width parameter of the default initial state.
    pub soliton_a: Option<f64>,

    // deformation spec for zcc-check: `none`, `locality`, `inhomogeneous`.
    pub deformation: Option<String>,

    // curve / amplitude-map parameters
    pub kappa_base: Option<f64>,
    pub kappa_amp: Option<f64>,
    pub tau: Option<f64>,
    pub radius: Option<f64>,
    pub kappa_floor: Option<f64>,

    // lattice parameters
    pub sites: Option<usize>,
    pub spacing: Option<f64>,
    pub coupling: Option<f64>,
    pub mode: Option<i64>,
    pub amplitude: Option<f64>,

    // scan / constraint parameters
    /// Inclusive order range for scans, e.g. `-3..3`.
    pub range: Option<String>,
    pub refine: Option<u32>,

    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,

    /// Per-check tolerance overrides, keyed by the outcome name that appears
    /// in `meta.json`.
    pub tolerances: Option<BTreeMap<String, f64>>,

    // sweep-only keys
    /// Template config path (CLI) — sweeps given fully in JSON use `template`.
    pub template: Option<Box<RunConfig>>,
    /// Name of the numeric field the sweep varies.
    pub param: Option<String>,
    /// Values the sweep assigns to `param`, in order.
    pub values: Option<Vec<f64>>,
}

impl RunConfig {
    /// Loads a JSON config, rejecting unknown keys.
    pub fn from_json_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }

    /// Overlays `other` (CLI flags) on `self` (file config): every `Some`
    /// field of `other` wins.
    pub fn overlay(mut self, other: RunConfig) -> RunConfig {
        macro_rules! take {
            ($($f:ident),+ $(,)?) => { $( if other.$f.is_some() { self.$f = other.$f; } )+ };
        }
        take!(
            subcommand, variant, n, l, dt, t_final, snapshot_every, eta, alpha, alpha_prime,
            drag, rho, rho_epsilon, rho_center, rho_re, rho_im, uniform, soliton_a, deformation,
            kappa_base, kappa_amp, tau, radius, kappa_floor, sites, spacing, coupling, mode,
            amplitude, range, refine, seed, out_dir, tolerances, template, param, values,
        );
        self
    }

    /// Tolerance for `name`, falling back to the subcommand default.
    pub fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.tolerances
            .as_ref()
            .and_then(|m| m.get(name).copied())
            .unwrap_or(default)
    }

    pub fn grid(&self) -> (usize, f64) {
        (self.n.unwrap_or(256), self.l.unwrap_or(25.6))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(7)
    }
}

/// Parses an inclusive order range written `a..b` or `a..=b`.
pub fn parse_order_range(s: &str) -> Result<(i32, i32), String> {
    let (lo, hi) = s
        .split_once("..")
        .ok_or_else(|| format!("range `{s}` must look like -3..3"))?;
    let hi = hi.strip_prefix('=').unwrap_or(hi);
    let lo: i32 = lo.trim().parse().map_err(|e| format!("range start `{lo}`: {e}"))?;
    let hi: i32 = hi.trim().parse().map_err(|e| format!("range end `{hi}`: {e}"))?;
    if lo > hi {
        return Err(format!("range `{s}` is empty (start > end)"));
    }
    Ok((lo, hi))
}
