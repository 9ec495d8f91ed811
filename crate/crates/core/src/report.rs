//! Structured reports for the spectral-order scans.
//!
//! Both scanners (continuum Schrödinger-side and discrete tangent-side) probe
//! one Laurent order at a time with a generic coefficient, assemble the
//! deformed zero-curvature residual per order, and classify the probe by
//! which rows it actually reaches. The report carries the classification, the
//! per-row residual norms of the probe, and any constraint equations emitted
//! for rows outside the equation-of-motion sector — structured, not prose.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// How an EOM-modifying order reaches the equation of motion.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Order-0 coefficients enter the EOM row directly and reshape the
    /// order-1 locality rows (continuum scan, n = 0).
    LocalCoefficients,
    /// λ⁻¹ coefficients act as pure source terms on the EOM row
    /// (continuum scan, n = −1).
    InverseOrderSource,
    /// Order-1 coefficients survive only as scalar sources of the
    /// T(t)·q / G(t)·q_x form; their order-2 rows contain no original
    /// parameters (continuum scan, n = 1).
    ScalarSources,
    /// Enters as the commutator −i[S, Λ] on the EOM row (discrete scan, n = 0).
    TangentBracket,
    /// Enters as the flux derivative (1/2)Λ_x on the EOM row (discrete scan, n = 1).
    DerivativeFlux,
}

/// Outcome for one probed Laurent order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Classification {
    /// The probe reaches the EOM row.
    EomModifying { mechanism: Mechanism },
    /// The probe only generates recursion-type constraint rows;
    /// `recursion_depth` is the number of recursion steps separating it from
    /// the EOM-modifying sector.
    PureConstraint { recursion_depth: u32 },
    /// The probe touches no row at all.
    Inert,
}

/// One emitted constraint equation, in structured form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRelation {
    /// λ-order of the residual row the relation lives in.
    pub row_order: i32,
    /// Laurent order of the coefficient being constrained.
    pub subject_order: i32,
    /// Laurent order of the lower coefficient it recurses onto.
    pub linked_order: i32,
    /// Canonical rendering of the relation.
    pub equation: String,
}

/// Scan result for a single probed order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub order: i32,
    pub classification: Classification,
    /// Max-norm of the probe's contribution to each residual row, keyed by
    /// row order (normalised by the probe scale).
    pub residual_norms: BTreeMap<i32, f64>,
    /// Constraint equations emitted for the non-EOM rows.
    pub constraint_structure: Vec<ConstraintRelation>,
}

impl ScanEntry {
    pub fn enters_eom(&self) -> bool {
        matches!(self.classification, Classification::EomModifying { .. })
    }
}

/// Which side of the correspondence was scanned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanDomain {
    /// Deformations of the temporal component of the Schrödinger-side pair.
    Continuum,
    /// Deformations of the temporal component of the tangent-side pair.
    Discrete,
}

/// Full scan over a range of Laurent orders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub domain: ScanDomain,
    pub entries: Vec<ScanEntry>,
    /// Number of independent random field samples the classification was
    /// verified to be identical across.
    pub samples: u32,
    pub seed: u64,
}

impl ScanReport {
    /// Orders classified as EOM-modifying, ascending.
    pub fn eom_modifying_orders(&self) -> Vec<i32> {
        self.entries
            .iter()
            .filter(|e| e.enters_eom())
            .map(|e| e.order)
            .collect()
    }

    pub fn entry(&self, order: i32) -> Option<&ScanEntry> {
        self.entries.iter().find(|e| e.order == order)
    }
}
