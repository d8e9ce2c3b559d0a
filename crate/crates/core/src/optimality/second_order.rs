//! Second-order sufficient test (Ag, g) ≥ β‖g‖² over Ψ²f(x₀) and G.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::subdiff::MatrixSetApprox;

/// Default β floor relative to L.
pub const BETA_FLOOR_REL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientTest {
    pub pass: bool,
    /// min over A, g of (Ag, g) − β‖g‖².
    pub margin: f64,
    /// min over A, g of (Ag, g)/‖g‖².
    pub beta_observed: f64,
    pub beta_floor: f64,
    /// The matrices came from smallest-scale snapshots of an unbounded set.
    pub used_snapshots: bool,
}

/// Checks (Ag, g) ≥ β_floor·‖g‖² for every matrix of Ψ² and every g ∈ G.
/// Unbounded sets are tested on their smallest-scale snapshots and flagged.
pub fn sufficient_second_order(psi2: &MatrixSetApprox, g_set: &[DVector<f64>], beta_floor: f64) -> Result<SufficientTest> {
    if g_set.is_empty() {
        return Err(Error::InvalidArgument("no suspicious directions".into()));
    }
    let (mats, used_snapshots): (Vec<DMatrix<f64>>, bool) = if psi2.limits.is_empty() && psi2.unbounded {
        (psi2.smallest_scale_snapshots(), true)
    } else if psi2.unbounded {
        let mut m = psi2.limits.clone();
        m.extend(psi2.smallest_scale_snapshots());
        (m, true)
    } else {
        (psi2.limits.clone(), false)
    };
    if mats.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut beta_observed = f64::INFINITY;
    let mut margin = f64::INFINITY;
    for a in &mats {
        for g in g_set {
            let gg = g.norm_squared();
            let q = g.dot(&(a * g));
            beta_observed = beta_observed.min(q / gg);
            margin = margin.min(q - beta_floor * gg);
        }
    }
    Ok(SufficientTest {
        pass: margin >= 0.0,
        margin,
        beta_observed,
        beta_floor,
        used_snapshots,
    })
}
