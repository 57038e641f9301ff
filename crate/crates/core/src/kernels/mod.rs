//! Fundamental solutions, coefficient fields and the kernels built from them.

mod constant;
mod expr;
pub mod fem;
mod field;
mod kernel;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::linear_fit;

pub use constant::{
    flux_through_sphere, gauss_legendre, grad_theta0, omega_n, sphere_quadrature, theta0, ConstMatrix,
};
pub use expr::Expr;
pub use fem::{solve_corrector, solve_fundamental, CorrectorSolution, GridSolution, Q1Grid, SolveStats};
pub use field::{
    audit_field, build_periodic_matrix, change_of_variables, normalize_at, periodicity_residual, reflect_map,
    symmetric_part, FieldAudit, FieldMeta, FieldSpec, MatrixField,
};
pub use kernel::{
    chi_tilde, frozen_kernel, gauge_lipschitz, suppressed_kernel, ConstKernel, FreezeMode, FrozenKernel, Gauge,
    Kernel, KernelSpec, NumericKernel, SuppressedKernel,
};

/// Least-squares line through `(log r, log err)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square of the log residuals.
    pub residual: f64,
    pub r2: f64,
}

pub fn fit_decay_exponent(samples: &[(f64, f64)]) -> Result<DecayFit> {
    if samples.len() < 4 {
        return Err(Error::InvalidParameter(format!("need at least 4 samples, got {}", samples.len())));
    }
    if let Some((r, e)) = samples.iter().find(|(r, e)| !(*r > 0.0) || !(*e > 0.0)) {
        return Err(Error::InvalidParameter(format!("nonpositive sample ({r}, {e})")));
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    Ok(DecayFit {
        slope,
        intercept,
        residual: (rss / xs.len() as f64).sqrt(),
        r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let s: Vec<(f64, f64)> = (1..8).map(|i| (i as f64, (i as f64).powi(2))).collect();
        assert!((fit_decay_exponent(&s).unwrap().slope - 2.0).abs() < 1e-10);
        let s: Vec<(f64, f64)> = (1..8).map(|i| (i as f64 * 0.3, 3.0 * (i as f64 * 0.3).powf(-2.5))).collect();
        let f = fit_decay_exponent(&s).unwrap();
        assert!((f.slope + 2.5).abs() < 1e-10 && (f.intercept - 3f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_samples() {
        assert!(fit_decay_exponent(&[(1.0, 1.0); 3]).is_err());
        assert!(fit_decay_exponent(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0), (4.0, 1.0)]).is_err());
    }
}
