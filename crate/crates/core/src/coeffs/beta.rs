//! β₁-numbers: scaled L¹ distance of `μ|_B` to the best hyperplane.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, weighted_median};
use crate::measure::{Ball, DiscreteMeasure, Region};
use crate::optim::nelder_mead;

/// `{x : ⟨normal, x⟩ = offset}` with a unit normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Hyperplane {
    /// Normalizes `normal`; the offset is taken relative to the normalized vector.
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let l = norm(&normal);
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidParameter("hyperplane normal must be nonzero".into()));
        }
        Ok(Hyperplane {
            normal: normal.iter().map(|v| v / l).collect(),
            offset,
        })
    }

    pub fn through(point: &[f64], normal: Vec<f64>) -> Result<Self> {
        let mut h = Self::new(normal, 0.0)?;
        h.offset = dot(&h.normal, point);
        Ok(h)
    }

    pub fn dist(&self, x: &[f64]) -> f64 {
        (dot(&self.normal, x) - self.offset).abs()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let s = dot(&self.normal, x) - self.offset;
        x.iter().zip(&self.normal).map(|(a, b)| a - s * b).collect()
    }

    /// Orthonormal basis of the direction space of the plane.
    pub fn tangent_basis(&self) -> Vec<Vec<f64>> {
        let d = self.normal.len();
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| self.normal[a].abs().partial_cmp(&self.normal[b].abs()).unwrap());
        for &k in &order {
            if basis.len() == d - 1 {
                break;
            }
            let mut v = vec![0.0; d];
            v[k] = 1.0;
            for u in std::iter::once(&self.normal).chain(basis.iter()) {
                let c = dot(&v, u);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= c * ui;
                }
            }
            let l = norm(&v);
            if l > 1e-8 {
                basis.push(v.into_iter().map(|x| x / l).collect());
            }
        }
        basis
    }
}

/// `β^L_{μ,1}(B) = r^{-n} Σ_{x∈B} w_x dist(x,L)/r`.
pub fn beta1_plane(mu: &DiscreteMeasure, ball: &Ball, plane: &Hyperplane) -> f64 {
    let r = ball.radius;
    let n = mu.n() as i32;
    let idx = mu.atoms_in(&Region::Ball(ball.clone()));
    let s: f64 = idx.iter().map(|&i| mu.weight(i) * plane.dist(mu.point(i))).sum();
    s / (r * r.powi(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneMode {
    Heuristic,
    Exhaustive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Beta1 {
    pub value: f64,
    pub plane: Hyperplane,
    /// Certified lower bound on the true infimum (exhaustive mode only).
    pub lower_bound: Option<f64>,
    /// Chordal covering radius of the normal grid (exhaustive mode only).
    pub normal_gap: Option<f64>,
    pub atoms: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Beta1Options {
    pub restarts: usize,
    /// Normal-grid refinement level for the exhaustive search.
    pub level: u32,
    pub seed: u64,
}

impl Default for Beta1Options {
    fn default() -> Self {
        Beta1Options {
            restarts: 20,
            level: 4,
            seed: 0,
        }
    }
}

struct Local {
    pts: Vec<Vec<f64>>,
    w: Vec<f64>,
    scale: f64,
}

impl Local {
    /// Best offset for a fixed normal (weighted median) and the resulting β.
    fn best_for(&self, normal: &[f64]) -> (f64, f64) {
        let proj: Vec<f64> = self.pts.iter().map(|p| dot(normal, p)).collect();
        let c = weighted_median(&proj, &self.w);
        let s: f64 = proj.iter().zip(&self.w).map(|(p, w)| w * (p - c).abs()).sum();
        (s / self.scale, c)
    }
}

/// `β_{μ,1}(B) = inf_L β^L_{μ,1}(B)`.
pub fn beta1(mu: &DiscreteMeasure, ball: &Ball, mode: PlaneMode, opts: &Beta1Options) -> Result<Beta1> {
    let idx = mu.atoms_in(&Region::Ball(ball.clone()));
    if idx.is_empty() {
        return Err(Error::ZeroMass("beta1 ball".into()));
    }
    let d = mu.dim();
    let r = ball.radius;
    // Work relative to the ball center for conditioning.
    let local = Local {
        pts: idx
            .iter()
            .map(|&i| mu.point(i).iter().zip(&ball.center).map(|(a, b)| a - b).collect())
            .collect(),
        w: idx.iter().map(|&i| mu.weight(i)).collect(),
        scale: r * r.powi(mu.n() as i32),
    };
    let to_global = |normal: Vec<f64>, c: f64| -> Hyperplane {
        let offset = c + dot(&normal, &ball.center);
        Hyperplane { normal, offset }
    };
    match mode {
        PlaneMode::Exhaustive => {
            let (normals, gap) = normal_grid(d, opts.level);
            let mut best = (f64::INFINITY, 0usize, 0.0);
            for (k, v) in normals.iter().enumerate() {
                let (val, c) = local.best_for(v);
                if val < best.0 {
                    best = (val, k, c);
                }
            }
            let mass: f64 = local.w.iter().sum();
            // Tilting the optimal normal by ≤ gap moves each atom of B by ≤ gap·r.
            let slack = mass * gap * r / local.scale;
            Ok(Beta1 {
                value: best.0,
                plane: to_global(normals[best.1].clone(), best.2),
                lower_bound: Some((best.0 - slack).max(0.0)),
                normal_gap: Some(gap),
                atoms: idx.len(),
            })
        }
        PlaneMode::Heuristic => {
            let pca = pca_normal(&local);
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut best = {
                let (v, c) = local.best_for(&pca);
                (v, pca.clone(), c)
            };
            let base = to_angles(&pca);
            for k in 0..opts.restarts.max(1) {
                let start: Vec<f64> = if k == 0 {
                    base.clone()
                } else {
                    base.iter().map(|a| a + rng.gen_range(-0.6..0.6)).collect()
                };
                let (ang, _, _) = nelder_mead(|a| local.best_for(&from_angles(a)).0, &start, 0.2, 1e-12, 400 * d);
                let v = from_angles(&ang);
                let (val, c) = local.best_for(&v);
                if val < best.0 {
                    best = (val, v, c);
                }
            }
            for k in 0..d {
                let mut e = vec![0.0; d];
                e[k] = 1.0;
                let (val, c) = local.best_for(&e);
                if val < best.0 {
                    best = (val, e, c);
                }
            }
            Ok(Beta1 {
                value: best.0,
                plane: to_global(best.1, best.2),
                lower_bound: None,
                normal_gap: None,
                atoms: idx.len(),
            })
        }
    }
}

fn pca_normal(local: &Local) -> Vec<f64> {
    let d = local.pts[0].len();
    let mass: f64 = local.w.iter().sum();
    let mut mean = vec![0.0; d];
    for (p, w) in local.pts.iter().zip(&local.w) {
        for k in 0..d {
            mean[k] += w * p[k] / mass;
        }
    }
    let mut cov = nalgebra::DMatrix::<f64>::zeros(d, d);
    for (p, w) in local.pts.iter().zip(&local.w) {
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += w * (p[a] - mean[a]) * (p[b] - mean[b]);
            }
        }
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let k = (0..d)
        .min_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap())
        .unwrap();
    eig.eigenvectors.column(k).iter().copied().collect()
}

/// Hyperspherical angles of a unit vector.
fn to_angles(v: &[f64]) -> Vec<f64> {
    let d = v.len();
    let mut out = Vec::with_capacity(d - 1);
    for k in 0..d - 1 {
        let tail: f64 = v[k + 1..].iter().map(|x| x * x).sum::<f64>().sqrt();
        out.push(tail.atan2(v[k]));
    }
    if d >= 2 && v[d - 1] < 0.0 {
        let last = out.len() - 1;
        out[last] = -out[last];
    }
    out
}

fn from_angles(a: &[f64]) -> Vec<f64> {
    let d = a.len() + 1;
    let mut v = vec![0.0; d];
    let mut s = 1.0;
    for k in 0..d - 1 {
        v[k] = s * a[k].cos();
        s *= a[k].sin();
    }
    v[d - 1] = s;
    v
}

/// Unit normals covering the sphere up to the returned chordal gap (every unit
/// vector is within `gap` of some `±v`).
pub fn normal_grid(d: usize, level: u32) -> (Vec<Vec<f64>>, f64) {
    match d {
        1 => (vec![vec![1.0]], 0.0),
        2 => {
            let m = 64usize << level;
            let step = std::f64::consts::PI / m as f64;
            let v = (0..m).map(|k| vec![(k as f64 * step).cos(), (k as f64 * step).sin()]).collect();
            (v, 2.0 * (0.25 * step).sin())
        }
        3 => icosphere(level),
        _ => cube_face_grid(d, 1usize << level),
    }
}

fn icosphere(level: u32) -> (Vec<Vec<f64>>, f64) {
    let t = 0.5 * (1.0 + 5f64.sqrt());
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let unit = |v: [f64; 3]| {
        let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / l, v[1] / l, v[2] / l]
    };
    for v in verts.iter_mut() {
        *v = unit(*v);
    }
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(unit([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                verts.len() - 1
            })
        };
        for f in &faces {
            let a = mid(f[0], f[1], &mut verts);
            let b = mid(f[1], f[2], &mut verts);
            let c = mid(f[2], f[0], &mut verts);
            next.push([f[0], a, c]);
            next.push([f[1], b, a]);
            next.push([f[2], c, b]);
            next.push([a, b, c]);
        }
        faces = next;
    }
    // Any point of a spherical triangle is within its longest chord of a vertex.
    let mut gap = 0.0f64;
    for f in &faces {
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            let (p, q) = (verts[f[i]], verts[f[j]]);
            let e = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
            gap = gap.max(e);
        }
    }
    (verts.into_iter().map(|v| v.to_vec()).collect(), gap)
}

/// Radial projection of an `m`-per-axis grid on the faces of `[-1,1]^d`.
fn cube_face_grid(d: usize, m: usize) -> (Vec<Vec<f64>>, f64) {
    let mut out = Vec::new();
    let side = m + 1;
    let per_face = side.pow(d as u32 - 1);
    for axis in 0..d {
        for sign in [1.0, -1.0] {
            for code in 0..per_face {
                let mut c = code;
                let mut v = vec![0.0; d];
                v[axis] = sign;
                for k in (0..d).filter(|&k| k != axis) {
                    v[k] = -1.0 + 2.0 * (c % side) as f64 / m as f64;
                    c /= side;
                }
                let l = norm(&v);
                out.push(v.into_iter().map(|x| x / l).collect());
            }
        }
    }
    // Radial projection onto the sphere is 1-Lipschitz outside the unit ball.
    (out, ((d - 1) as f64).sqrt() / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_atom_value() {
        let mu = DiscreteMeasure::new(2, &[vec![0.0, 0.0, 0.5], vec![0.0, 0.0, -0.5]], vec![1.0, 1.0]).unwrap();
        let b = Ball::new(vec![0.0; 3], 1.0).unwrap();
        let l = Hyperplane::new(vec![0.0, 0.0, 1.0], 0.0).unwrap();
        assert!((beta1_plane(&mu, &b, &l) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coplanar_atoms_fit_exactly() {
        let pts: Vec<Vec<f64>> = (0..30)
            .map(|k| {
                let a = k as f64 * 0.37;
                let (x, y) = (0.5 * a.cos(), 0.5 * a.sin());
                vec![x, y, 0.3 * x - 0.2 * y + 0.1]
            })
            .collect();
        let mu = DiscreteMeasure::new(2, &pts, vec![1.0; 30]).unwrap();
        let b = Ball::new(vec![0.0; 3], 1.0).unwrap();
        let h = beta1(&mu, &b, PlaneMode::Heuristic, &Beta1Options::default()).unwrap();
        assert!(h.value < 1e-9, "{}", h.value);
        for p in &pts {
            assert!(h.plane.dist(p) < 1e-8);
        }
    }

    #[test]
    fn single_atom_is_flat() {
        let mu = DiscreteMeasure::new(1, &[vec![0.2, 0.1]], vec![1.0]).unwrap();
        let b = Ball::new(vec![0.0; 2], 1.0).unwrap();
        for mode in [PlaneMode::Heuristic, PlaneMode::Exhaustive] {
            assert_eq!(beta1(&mu, &b, mode, &Beta1Options::default()).unwrap().value, 0.0);
        }
    }

    #[test]
    fn empty_ball_errors() {
        let mu = DiscreteMeasure::new(1, &[vec![5.0, 5.0]], vec![1.0]).unwrap();
        let b = Ball::new(vec![0.0; 2], 1.0).unwrap();
        assert!(beta1(&mu, &b, PlaneMode::Heuristic, &Beta1Options::default()).is_err());
    }

    #[test]
    fn grids_cover_sphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 2..=4 {
            let (grid, gap) = normal_grid(d, 2);
            for _ in 0..200 {
                let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let l = norm(&v);
                let v: Vec<f64> = v.iter().map(|x| x / l).collect();
                let best = grid
                    .iter()
                    .map(|g| {
                        let p: f64 = g.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                        let m: f64 = g.iter().zip(&v).map(|(a, b)| (a + b).powi(2)).sum::<f64>().sqrt();
                        p.min(m)
                    })
                    .fold(f64::INFINITY, f64::min);
                assert!(best <= gap + 1e-12, "d={d} best={best} gap={gap}");
            }
        }
    }

    #[test]
    fn angles_round_trip() {
        for v in [vec![0.0, 0.0, 1.0], vec![0.6, -0.8, 0.0], vec![0.5, 0.5, 0.5, -0.5]] {
            let w = from_angles(&to_angles(&v));
            for (a, b) in v.iter().zip(&w) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
