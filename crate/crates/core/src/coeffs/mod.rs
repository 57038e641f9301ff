//! Scalar geometric coefficients of a measure: densities, β₁, `d_Q`, α,
//! thin-boundary constants and pointwise density diagnostics.

mod beta;
mod dual;
pub mod flow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{Ball, Cube, DiscreteMeasure, Region};

pub use beta::{beta1, beta1_plane, normal_grid, Beta1, Beta1Options, Hyperplane, PlaneMode};
pub use dual::{
    alpha_plane, alpha_plane_frame, dist_dual, plane_lattice, transport_to_boundary, AlphaResult, DualDistance,
    DualGrid, Frame, EXACT_NODE_LIMIT,
};

/// `Θ_μ(B) = μ(B)/r(B)ⁿ`.
pub fn theta(mu: &DiscreteMeasure, ball: &Ball) -> f64 {
    mu.mass_in(&Region::Ball(ball.clone())) / ball.radius.powi(mu.n() as i32)
}

/// `P_{μ,γ}(R) = Σ_{j≥0} 2^{-jγ} μ(2^j R)/s(2^j R)ⁿ` with `s` the radius or side.
///
/// Once `2^J R` swallows the bounding box of the support the remaining terms
/// form a geometric series and are summed in closed form.
pub fn p_density(mu: &DiscreteMeasure, region: &Region, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} must be positive")));
    }
    let n = mu.n() as i32;
    let Some((lo, hi)) = mu.bounding_box() else {
        return Ok(0.0);
    };
    let total = mu.total_mass();
    let s0 = region.size();
    let mut sum = 0.0;
    let mut j = 0i32;
    loop {
        let scale = 2f64.powi(j);
        let r = region.dilate(scale);
        let sj = s0 * scale;
        if r.contains_box(&lo, &hi) {
            let q = 2f64.powf(-(gamma + n as f64));
            sum += total / s0.powi(n) * q.powi(j) / (1.0 - q);
            return Ok(sum);
        }
        sum += 2f64.powf(-gamma * j as f64) * mu.mass_in(&r) / sj.powi(n);
        j += 1;
        if j > 2000 {
            return Err(Error::Internal("p_density failed to swallow support".into()));
        }
    }
}

/// Smallest `t` with `μ{x ∈ 2Q : dist(x,∂Q) ≤ λℓ(Q)} ≤ tλμ(2Q)` over `lambdas`.
pub fn thin_boundary_constant(mu: &DiscreteMeasure, q: &Cube, lambdas: &[f64]) -> Result<f64> {
    let idx = mu.atoms_in(&Region::Cube(q.dilate(2.0)));
    let mass2: f64 = idx.iter().map(|&i| mu.weight(i)).sum();
    if !(mass2 > 0.0) {
        return Err(Error::ZeroMass("2Q".into()));
    }
    let dists: Vec<(f64, f64)> = idx.iter().map(|&i| (q.dist_to_boundary(mu.point(i)), mu.weight(i))).collect();
    let mut t = 0.0f64;
    for &lam in lambdas {
        let collar: f64 = dists.iter().filter(|(d, _)| *d <= lam * q.side).map(|(_, w)| w).sum();
        t = t.max(collar / (lam * mass2));
    }
    Ok(t)
}

/// Default λ grid `{2^{-k}}_{k=1..12}`.
pub fn default_lambdas() -> Vec<f64> {
    (1..=12).map(|k| 2f64.powi(-k)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointwiseDensity {
    pub upper: f64,
    pub lower: f64,
    /// `(r, μ(B(x,r))/(2r)ⁿ)` for the radii that were kept.
    pub sequence: Vec<(f64, f64)>,
    /// Radii below this local atom-separation scale were dropped.
    pub cutoff: f64,
}

/// Upper and lower values of `μ(B(x,r))/(2r)ⁿ` over a radius window.
pub fn pointwise_density(mu: &DiscreteMeasure, x: &[f64], radii: &[f64]) -> Result<PointwiseDensity> {
    if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::InvalidParameter("radii must be finite and positive".into()));
    }
    let rmax = radii.iter().fold(0.0f64, |a, &b| a.max(b));
    let near = mu.restrict(&Region::Ball(Ball {
        center: x.to_vec(),
        radius: rmax,
    }));
    let gap = if near.len() >= 2 { near.min_gap() } else { 0.0 };
    let n = mu.n() as i32;
    let mut seq = Vec::new();
    for &r in radii {
        if r < gap {
            continue;
        }
        let m = mu.mass_in(&Region::Ball(Ball {
            center: x.to_vec(),
            radius: r,
        }));
        seq.push((r, m / (2.0 * r).powi(n)));
    }
    let upper = seq.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let lower = seq.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(PointwiseDensity {
        upper: if seq.is_empty() { 0.0 } else { upper },
        lower: if seq.is_empty() { 0.0 } else { lower },
        sequence: seq,
        cutoff: gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(n: usize, pts: &[Vec<f64>], w: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(n, pts, w.to_vec()).unwrap()
    }

    #[test]
    fn theta_quotient() {
        let mu = dm(2, &[vec![0.0; 3]], &[8.0]);
        assert_eq!(theta(&mu, &Ball::new(vec![0.0; 3], 2.0).unwrap()), 2.0);
        assert_eq!(theta(&mu, &Ball::new(vec![9.0; 3], 2.0).unwrap()), 0.0);
    }

    #[test]
    fn p_density_single_atom_geometric_series() {
        let mu = dm(2, &[vec![0.0; 3]], &[1.0]);
        let b = Region::Ball(Ball::new(vec![0.0; 3], 1.0).unwrap());
        let p = p_density(&mu, &b, 1.0).unwrap();
        assert!((p - 8.0 / 7.0).abs() < 1e-14);
        assert_eq!(p_density(&DiscreteMeasure::empty(2), &b, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn p_density_matches_long_direct_sum() {
        let mu = dm(1, &[vec![3.0, 0.0], vec![0.2, 0.1], vec![-7.0, 2.0]], &[1.0, 2.0, 0.5]);
        let b = Region::Ball(Ball::new(vec![0.0; 2], 0.5).unwrap());
        let gamma = 0.3;
        let direct: f64 = (0..200)
            .map(|j| {
                let s = 2f64.powi(j);
                2f64.powf(-gamma * j as f64) * mu.mass_in(&b.dilate(s)) / (0.5 * s)
            })
            .sum();
        let p = p_density(&mu, &b, gamma).unwrap();
        assert!((p - direct).abs() < 1e-12 * direct, "{p} {direct}");
    }

    #[test]
    fn thin_boundary_examples() {
        let q = Cube::new(vec![0.0; 2], 1.0).unwrap();
        // Every point of 2Q is within ℓ/2 of ∂Q, so an empty collar needs λ < 1/2.
        let center = dm(1, &[vec![0.0, 0.0], vec![0.1, -0.1]], &[1.0, 1.0]);
        assert_eq!(thin_boundary_constant(&center, &q, &[0.25]).unwrap(), 0.0);
        let collar = dm(1, &[vec![0.45, 0.0], vec![0.0, 0.7]], &[1.0, 1.0]);
        assert_eq!(thin_boundary_constant(&collar, &q, &[0.5]).unwrap(), 2.0);
        let far = dm(1, &[vec![5.0, 0.0]], &[1.0]);
        assert!(thin_boundary_constant(&far, &q, &[0.5]).is_err());
    }

    #[test]
    fn pointwise_density_examples() {
        let mu = dm(2, &[vec![0.0; 3]], &[2.0]);
        let far = pointwise_density(&mu, &[10.0, 0.0, 0.0], &[1.0, 0.5, 0.25]).unwrap();
        assert_eq!((far.upper, far.lower), (0.0, 0.0));
        let at = pointwise_density(&mu, &[0.0; 3], &[1.0, 0.5, 0.25]).unwrap();
        let vals: Vec<f64> = at.sequence.iter().map(|p| p.1).collect();
        assert!(vals.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(at.upper, 2.0 / (0.5 * 0.5));
    }
}
