//! Deterministic synthetic measures.
//!
//! Calibration: surface-type clouds carry `𝓗ⁿ` weights (atom weight equals
//! the area of its cell), so `μ(B(x,r)) ≈ ω r^n` on the support and
//! `Θ_μ ≈ 1` up to the constant of a unit `n`-ball. The Cantor cloud has
//! total mass 1 on the unit square.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// `[-side/2, side/2]ⁿ × {0}` on a regular grid of `≈ count` cell centers.
    Plane { n: usize, count: usize, side: f64 },
    /// `[-length/2, length/2] × {0}` in the plane.
    Segment { count: usize, length: f64 },
    /// Graph of a smooth function with Lipschitz constant `≤ slope` over the plane grid.
    LipschitzGraph {
        n: usize,
        count: usize,
        side: f64,
        slope: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Generation `generation` of the planar four-corner Cantor set on `[-1/2,1/2]²`.
    FourCornerCantor { generation: u32 },
    Circle { count: usize, radius: f64 },
    /// A dense segment plus isolated light atoms at height `height` above it.
    TwoPopulation {
        count: usize,
        length: f64,
        dust: usize,
        height: f64,
        dust_weight: f64,
    },
    /// Plane grid keeping only the atoms within `width` of the boundary of `[-side/2, side/2]ⁿ`.
    Collar { n: usize, count: usize, side: f64, width: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must be positive and finite")))
    }
}

fn nonzero(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::InvalidParameter(format!("{name} must be at least 1")))
    } else {
        Ok(())
    }
}

/// Cell-centered grid on `[-side/2, side/2]ⁿ`; returns the base points and the cell side.
fn grid(n: usize, count: usize, side: f64) -> Result<(Vec<Vec<f64>>, f64)> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    nonzero("count", count)?;
    positive("side", side)?;
    let m = ((count as f64).powf(1.0 / n as f64).round() as usize).max(1);
    let cell = side / m as f64;
    let total = m.checked_pow(n as u32).ok_or_else(|| Error::InvalidParameter("grid too large".into()))?;
    let pts = (0..total)
        .map(|mut k| {
            let mut p = Vec::with_capacity(n);
            for _ in 0..n {
                p.push(-0.5 * side + (k % m) as f64 * cell + 0.5 * cell);
                k /= m;
            }
            p
        })
        .collect();
    Ok((pts, cell))
}

pub fn generate(spec: &GeneratorSpec) -> Result<DiscreteMeasure> {
    match *spec {
        GeneratorSpec::Plane { n, count, side } => graph(n, count, side, 0.0, 0),
        GeneratorSpec::Segment { count, length } => graph(1, count, length, 0.0, 0),
        GeneratorSpec::LipschitzGraph { n, count, side, slope, seed } => {
            if !(slope >= 0.0 && slope.is_finite()) {
                return Err(Error::InvalidParameter(format!("slope = {slope} must be nonnegative")));
            }
            graph(n, count, side, slope, seed)
        }
        GeneratorSpec::FourCornerCantor { generation } => cantor(generation),
        GeneratorSpec::Circle { count, radius } => {
            nonzero("count", count)?;
            positive("radius", radius)?;
            let pts: Vec<Vec<f64>> = (0..count)
                .map(|i| {
                    let t = 2.0 * PI * (i as f64 + 0.5) / count as f64;
                    vec![radius * t.cos(), radius * t.sin()]
                })
                .collect();
            DiscreteMeasure::new(1, &pts, vec![2.0 * PI * radius / count as f64; count])
        }
        GeneratorSpec::TwoPopulation {
            count,
            length,
            dust,
            height,
            dust_weight,
        } => {
            positive("height", height)?;
            positive("dust_weight", dust_weight)?;
            let base = graph(1, count, length, 0.0, 0)?;
            if dust == 0 {
                return Ok(base);
            }
            // Dust spread over the middle half of the segment.
            let pts: Vec<Vec<f64>> = (0..dust)
                .map(|i| {
                    let x = if dust == 1 {
                        0.0
                    } else {
                        -0.25 * length + 0.5 * length * i as f64 / (dust - 1) as f64
                    };
                    vec![x, height]
                })
                .collect();
            base.union(&DiscreteMeasure::new(1, &pts, vec![dust_weight; dust])?)
        }
        GeneratorSpec::Collar { n, count, side, width } => {
            positive("width", width)?;
            let (base, cell) = grid(n, count, side)?;
            let pts: Vec<Vec<f64>> = base
                .into_iter()
                .filter(|p| p.iter().any(|x| 0.5 * side - x.abs() <= width))
                .map(|mut p| {
                    p.push(0.0);
                    p
                })
                .collect();
            if pts.is_empty() {
                return Err(Error::InvalidParameter("collar keeps no atoms".into()));
            }
            let w = vec![cell.powi(n as i32); pts.len()];
            DiscreteMeasure::new(n, &pts, w)
        }
    }
}

/// Graph of `h(u) = slope · Σ_j c_j sin(⟨ω_j,u⟩ + φ_j)` with `Σ_j c_j|ω_j| = 1`,
/// weighted by the area element `√(1+|∇h|²)`.
fn graph(n: usize, count: usize, side: f64, slope: f64, seed: u64) -> Result<DiscreteMeasure> {
    let (base, cell) = grid(n, count, side)?;
    const FREQS: [f64; 4] = [1.0, 2.0, 3.0, 5.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(Vec<f64>, f64, f64)> = FREQS
        .iter()
        .map(|&f| {
            let mut dir: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let k = 2.0 * PI * f / side;
            dir.iter_mut().for_each(|v| *v *= k / len);
            let phase = 2.0 * PI * rng.gen::<f64>();
            (dir, phase, 1.0 / (FREQS.len() as f64 * k))
        })
        .collect();
    let area = cell.powi(n as i32);
    let mut coords = Vec::with_capacity(base.len() * (n + 1));
    let mut weights = Vec::with_capacity(base.len());
    for u in &base {
        let mut h = 0.0;
        let mut grad = vec![0.0; n];
        for (om, ph, c) in &modes {
            let arg: f64 = om.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() + ph;
            h += c * arg.sin();
            for (g, o) in grad.iter_mut().zip(om) {
                *g += c * o * arg.cos();
            }
        }
        coords.extend_from_slice(u);
        // `+ 0.0` normalizes a negative zero.
        coords.push(slope * h + 0.0);
        let g2: f64 = grad.iter().map(|g| g * g).sum::<f64>() * slope * slope;
        weights.push(area * (1.0 + g2).sqrt());
    }
    DiscreteMeasure::from_flat(n, coords, weights)
}

fn cantor(generation: u32) -> Result<DiscreteMeasure> {
    if generation > 10 {
        return Err(Error::InvalidParameter(format!("generation {generation} exceeds 10")));
    }
    let count = 4usize.pow(generation);
    let side = 0.25f64.powi(generation as i32);
    let mut coords = Vec::with_capacity(2 * count);
    for k in 0..count {
        let mut p = [-0.5 + 0.5 * side; 2];
        let mut digits = k;
        let mut scale = 1.0;
        for _ in 0..generation {
            let q = digits & 3;
            digits >>= 2;
            if q & 1 == 1 {
                p[0] += 0.75 * scale;
            }
            if q & 2 == 2 {
                p[1] += 0.75 * scale;
            }
            scale *= 0.25;
        }
        coords.extend_from_slice(&p);
    }
    DiscreteMeasure::from_flat(1, coords, vec![1.0 / count as f64; count])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_is_flat_and_calibrated() {
        let mu = generate(&GeneratorSpec::Plane {
            n: 2,
            count: 10_000,
            side: 2.0,
        })
        .unwrap();
        assert_eq!(mu.len(), 10_000);
        assert!(mu.points().all(|p| p[2] == 0.0));
        assert!((mu.total_mass() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn flat_graph_equals_plane() {
        let a = generate(&GeneratorSpec::Plane {
            n: 1,
            count: 500,
            side: 2.0,
        })
        .unwrap();
        let b = generate(&GeneratorSpec::LipschitzGraph {
            n: 1,
            count: 500,
            side: 2.0,
            slope: 0.0,
            seed: 7,
        })
        .unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn cantor_generation_six() {
        let mu = generate(&GeneratorSpec::FourCornerCantor { generation: 6 }).unwrap();
        assert_eq!(mu.len(), 4096);
        assert!((mu.total_mass() - 1.0).abs() < 1e-12);
        assert!(mu.points().all(|p| p.iter().all(|x| x.abs() < 0.5)));
        assert!(mu.min_gap() > 0.0);
    }

    #[test]
    fn graph_slope_is_bounded() {
        let mu = generate(&GeneratorSpec::LipschitzGraph {
            n: 1,
            count: 2000,
            side: 2.0,
            slope: 0.3,
            seed: 1,
        })
        .unwrap();
        for i in 1..mu.len() {
            let (p, q) = (mu.point(i - 1), mu.point(i));
            assert!((q[1] - p[1]).abs() <= 0.3 * (q[0] - p[0]) + 1e-12);
        }
    }

    #[test]
    fn invalid_params() {
        assert!(generate(&GeneratorSpec::Segment { count: 0, length: 1.0 }).is_err());
        assert!(generate(&GeneratorSpec::Circle {
            count: 3,
            radius: -1.0
        })
        .is_err());
        assert!(generate(&GeneratorSpec::FourCornerCantor { generation: 11 }).is_err());
    }
}
