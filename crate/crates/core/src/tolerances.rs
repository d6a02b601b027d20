//! Named numerical defaults. Every threshold used by the library lives here so
//! that a run manifest can record exactly which values were in force.

use serde::{Deserialize, Serialize};

pub const TOLERANCE_TABLE_VERSION: &str = "1";

/// Factorization round-trip `||G^T J G - V||`.
pub const FACTORIZATION: f64 = 1e-12;
/// Symmetry check on matrices entering the dense eigensolver.
pub const INPUT_SYMMETRY: f64 = 1e-10;
/// Symmetry of boundary-value matrices.
pub const OUTPUT_SYMMETRY: f64 = 1e-10;
pub const PSD: f64 = 1e-10;
pub const PROJECTION_IDEMPOTENCE: f64 = 1e-9;
pub const INVERSION_IDENTITY: f64 = 1e-9;
pub const RESONANCE_CONDITION: f64 = 1e12;
pub const STATIONARY_FACTOR: f64 = 1e-9;
pub const UNITARITY_ASSERT: f64 = 1e-8;
pub const UNITARITY_ERROR: f64 = 1e-6;
pub const ALPHA_UPPER_SLACK: f64 = 1e-6;
pub const ALPHA_LOWER_SLACK: f64 = 1e-10;
pub const D_SQUARED_IDENTITY: f64 = 1e-9;
pub const PAIR_SYMMETRY: f64 = 1e-6;
pub const UNIT_EIGENVALUE: f64 = 1e-6;
pub const CLOUD_BOUND: f64 = 1e-8;
pub const CARLEMAN_SLACK: f64 = 1e-6;

pub const EXTRAPOLATION_EPS0: f64 = 0.1;
pub const EXTRAPOLATION_LEVELS: usize = 10;
pub const RICHARDSON_ORDER: usize = 2;

pub const GEOMETRIC_RATIO: f64 = 1.15;

/// Defaults that experiment configs may override.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tunables {
    pub band_margin: f64,
    pub kernel_tol: f64,
    pub eps_n_min: f64,
    pub transient_displacement: f64,
    pub accumulation_radius: f64,
}

impl Default for Tunables {
    fn default() -> Self {
        Self {
            band_margin: 0.1,
            kernel_tol: 1e-6,
            eps_n_min: 50.0,
            transient_displacement: 0.1,
            accumulation_radius: 0.02,
        }
    }
}

/// Full table as written into run manifests.
#[derive(Debug, Clone, Serialize)]
pub struct ToleranceTable {
    pub version: &'static str,
    pub tunables: Tunables,
    pub fixed: Vec<(&'static str, f64)>,
}

impl ToleranceTable {
    pub fn with(tunables: Tunables) -> Self {
        Self {
            version: TOLERANCE_TABLE_VERSION,
            tunables,
            fixed: vec![
                ("factorization", FACTORIZATION),
                ("input_symmetry", INPUT_SYMMETRY),
                ("output_symmetry", OUTPUT_SYMMETRY),
                ("psd", PSD),
                ("projection_idempotence", PROJECTION_IDEMPOTENCE),
                ("inversion_identity", INVERSION_IDENTITY),
                ("resonance_condition", RESONANCE_CONDITION),
                ("stationary_factor", STATIONARY_FACTOR),
                ("unitarity_assert", UNITARITY_ASSERT),
                ("unitarity_error", UNITARITY_ERROR),
                ("alpha_upper_slack", ALPHA_UPPER_SLACK),
                ("d_squared_identity", D_SQUARED_IDENTITY),
                ("pair_symmetry", PAIR_SYMMETRY),
                ("unit_eigenvalue", UNIT_EIGENVALUE),
                ("extrapolation_eps0", EXTRAPOLATION_EPS0),
                ("extrapolation_levels", EXTRAPOLATION_LEVELS as f64),
                ("richardson_order", RICHARDSON_ORDER as f64),
                ("geometric_ratio", GEOMETRIC_RATIO),
            ],
        }
    }
}
