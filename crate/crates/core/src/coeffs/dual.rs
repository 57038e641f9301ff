//! The dual-Lipschitz distance `d_Q` and α-numbers.
//!
//! `d_Q(μ,ν) = sup ∫ f d(μ−ν)` over 1-Lipschitz `f` vanishing off `Q`. After
//! registering both measures to grid nodes, only nodes with nonzero net mass
//! matter: a 1-Lipschitz function on those nodes plus `∂Q` extends to the whole
//! grid. The LP dual is a min-cost flow where every node may also ship mass to
//! `∂Q` at cost `dist(v, ∂Q)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::flow::{min_cost_flow, Arc};
use super::Hyperplane;
use crate::error::{Error, Result};
use crate::linalg::{dist, dot, mat_vec};
use crate::measure::{AffineMap, Cube, DiscreteMeasure};
use crate::optim::golden_section;

/// Support-node count up to which every pair of nodes gets a constraint.
pub const EXACT_NODE_LIMIT: usize = 400;
const KNN: usize = 24;

/// Parallelepiped `{o + E u : u ∈ (0,1)^d}`; a cube when `E = ℓ·Id`.
#[derive(Debug, Clone)]
pub struct Frame {
    origin: Vec<f64>,
    edges: DMatrix<f64>,
    inv: DMatrix<f64>,
    row_norms: Vec<f64>,
}

impl Frame {
    pub fn new(origin: Vec<f64>, edges: DMatrix<f64>) -> Result<Self> {
        let d = origin.len();
        if edges.nrows() != d || edges.ncols() != d {
            return Err(Error::DimensionMismatch("frame edges".into()));
        }
        let det = edges.determinant();
        let inv = edges.clone().try_inverse().ok_or(Error::SingularMap(det))?;
        if !(det.abs() > 0.0) {
            return Err(Error::SingularMap(det));
        }
        let row_norms = (0..d).map(|k| inv.row(k).norm()).collect();
        Ok(Frame {
            origin,
            edges,
            inv,
            row_norms,
        })
    }

    pub fn cube(q: &Cube) -> Self {
        let d = q.center.len();
        Self::new(q.lower(), DMatrix::identity(d, d) * q.side).expect("cube frame")
    }

    /// Image `φ(Q)` of a cube.
    pub fn image(phi: &AffineMap, q: &Cube) -> Self {
        let base = Self::cube(q);
        Self::new(phi.apply(&base.origin), phi.linear_part() * &base.edges).expect("invertible image")
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn local(&self, x: &[f64]) -> Vec<f64> {
        let y: Vec<f64> = x.iter().zip(&self.origin).map(|(a, b)| a - b).collect();
        mat_vec(&self.inv, &y)
    }

    pub fn global(&self, u: &[f64]) -> Vec<f64> {
        let mut x = mat_vec(&self.edges, u);
        for (xi, oi) in x.iter_mut().zip(&self.origin) {
            *xi += oi;
        }
        x
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.local(x).iter().all(|&u| u > 0.0 && u < 1.0)
    }

    /// Distance from an interior point to the boundary (0 outside).
    pub fn dist_to_boundary(&self, x: &[f64]) -> f64 {
        let u = self.local(x);
        if !u.iter().all(|&t| t > 0.0 && t < 1.0) {
            return 0.0;
        }
        u.iter()
            .zip(&self.row_norms)
            .map(|(&t, &r)| t.min(1.0 - t) / r)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn center(&self) -> Vec<f64> {
        self.global(&vec![0.5; self.dim()])
    }

    pub fn diameter(&self) -> f64 {
        let d = self.dim();
        let mut best = 0.0f64;
        for code in 0..(1usize << d) {
            let s: Vec<f64> = (0..d).map(|k| if code >> k & 1 == 1 { 1.0 } else { -1.0 }).collect();
            best = best.max(mat_vec(&self.edges, &s).iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        best
    }

    /// Lebesgue measure of the region.
    pub fn volume(&self) -> f64 {
        self.edges.determinant().abs()
    }

    /// Side-length surrogate: `ℓ(Q)` for cubes, `diam/√d` in general.
    pub fn side(&self) -> f64 {
        self.diameter() / (self.dim() as f64).sqrt()
    }
}

/// Regular grid of nodes `o + E·(i/m)` over a [`Frame`].
#[derive(Debug, Clone)]
pub struct DualGrid {
    pub frame: Frame,
    pub per_axis: usize,
    /// Node-count threshold for exact all-pairs constraints.
    pub exact_limit: usize,
}

impl DualGrid {
    /// Grid over the cube with spacing at most `h`.
    pub fn for_cube(q: &Cube, h: f64) -> Result<Self> {
        Self::new(Frame::cube(q), h)
    }

    pub fn new(frame: Frame, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("grid spacing {h}")));
        }
        let longest = (0..frame.dim()).map(|k| frame.edges.column(k).norm()).fold(0.0, f64::max);
        let per_axis = ((longest / h).ceil() as usize).max(1);
        Ok(DualGrid {
            frame,
            per_axis,
            exact_limit: EXACT_NODE_LIMIT,
        })
    }

    /// Largest edge length of a grid cell.
    pub fn spacing(&self) -> f64 {
        (0..self.frame.dim())
            .map(|k| self.frame.edges.column(k).norm())
            .fold(0.0, f64::max)
            / self.per_axis as f64
    }

    pub fn node_position(&self, idx: &[usize]) -> Vec<f64> {
        let m = self.per_axis as f64;
        let u: Vec<f64> = idx.iter().map(|&i| i as f64 / m).collect();
        self.frame.global(&u)
    }

    pub fn is_boundary_node(&self, idx: &[usize]) -> bool {
        idx.iter().any(|&i| i == 0 || i == self.per_axis)
    }

    fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().rev().fold(0, |acc, &i| acc * (self.per_axis + 1) + i)
    }

    fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let m1 = self.per_axis + 1;
        (0..self.frame.dim())
            .map(|_| {
                let i = k % m1;
                k /= m1;
                i
            })
            .collect()
    }

    /// Nearest node to an interior point `x` (lowest linear index on ties).
    pub fn register(&self, x: &[f64]) -> usize {
        let m = self.per_axis as f64;
        let u = self.frame.local(x);
        let base: Vec<i64> = u.iter().map(|t| (t * m).floor() as i64).collect();
        let d = base.len();
        let mut best = (f64::INFINITY, usize::MAX);
        // Candidates base-1, base, base+1 per axis; skewed frames can pull the nearest node one cell over.
        let count = 3usize.pow(d as u32);
        for code in 0..count {
            let mut c = code;
            let mut idx = Vec::with_capacity(d);
            let mut ok = true;
            for &b in &base {
                let i = b + (c % 3) as i64 - 1;
                c /= 3;
                if i < 0 || i > self.per_axis as i64 {
                    ok = false;
                    break;
                }
                idx.push(i as usize);
            }
            if !ok {
                continue;
            }
            let dd = dist(&self.node_position(&idx), x);
            let li = self.linear_index(&idx);
            if dd < best.0 || (dd == best.0 && li < best.1) {
                best = (dd, li);
            }
        }
        best.1
    }
}

/// Result of a `d_Q` evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualDistance {
    pub value: f64,
    /// Exact on the registered nodes when true; an upper bound (neighbor graph only) when false.
    pub exact: bool,
    pub support_nodes: usize,
    /// Grid spacing; registration moves each atom by at most `√d·h/2`.
    pub h: f64,
}

/// Net node masses `(μ − ν)(v)` over interior nodes, ordered by node index.
fn net_masses(mu: &DiscreteMeasure, nu: &DiscreteMeasure, grid: &DualGrid) -> Vec<(usize, f64)> {
    let mut acc: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    for (m, sign) in [(mu, 1.0), (nu, -1.0)] {
        for i in 0..m.len() {
            let x = m.point(i);
            if grid.frame.contains(x) {
                *acc.entry(grid.register(x)).or_insert(0.0) += sign * m.weight(i);
            }
        }
    }
    acc.into_iter()
        .filter(|(k, v)| *v != 0.0 && !grid.is_boundary_node(&grid.multi_index(*k)))
        .collect()
}

/// `d_Q(μ, ν)` on the grid.
pub fn dist_dual(mu: &DiscreteMeasure, nu: &DiscreteMeasure, grid: &DualGrid) -> Result<DualDistance> {
    if mu.dim() != grid.frame.dim() || nu.dim() != grid.frame.dim() {
        return Err(Error::DimensionMismatch("measure vs grid dimension".into()));
    }
    let nodes = net_masses(mu, nu, grid);
    let positions: Vec<Vec<f64>> = nodes.iter().map(|(k, _)| grid.node_position(&grid.multi_index(*k))).collect();
    let masses: Vec<f64> = nodes.iter().map(|(_, m)| *m).collect();
    let (value, exact) = transport_to_boundary(&positions, &masses, &grid.frame, grid.exact_limit)?;
    Ok(DualDistance {
        value,
        exact,
        support_nodes: nodes.len(),
        h: grid.spacing(),
    })
}

/// Min-cost flow between signed point masses, with `∂Q` as a free reservoir.
pub fn transport_to_boundary(
    positions: &[Vec<f64>],
    masses: &[f64],
    frame: &Frame,
    exact_limit: usize,
) -> Result<(f64, bool)> {
    let k = positions.len();
    if k == 0 {
        return Ok((0.0, true));
    }
    let bnode = k;
    let mut arcs = Vec::new();
    for (i, p) in positions.iter().enumerate() {
        let b = frame.dist_to_boundary(p);
        arcs.push(Arc { from: i, to: bnode, cost: b });
        arcs.push(Arc { from: bnode, to: i, cost: b });
    }
    let exact = k <= exact_limit;
    if exact {
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    arcs.push(Arc {
                        from: i,
                        to: j,
                        cost: dist(&positions[i], &positions[j]),
                    });
                }
            }
        }
    } else {
        let sub = DiscreteMeasure::from_flat(frame.dim() - 1, positions.concat(), vec![1.0; k])?;
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..k {
            for j in nearest(&sub, i, KNN) {
                let (a, b) = (i.min(j), i.max(j));
                if seen.insert((a, b)) {
                    let c = dist(&positions[a], &positions[b]);
                    arcs.push(Arc { from: a, to: b, cost: c });
                    arcs.push(Arc { from: b, to: a, cost: c });
                }
            }
        }
    }
    let mut supply = masses.to_vec();
    supply.push(-masses.iter().sum::<f64>());
    let sol = min_cost_flow(k + 1, &arcs, &supply)?;
    Ok((sol.cost, exact))
}

/// Indices of the `count` nearest other atoms to atom `i`.
fn nearest(m: &DiscreteMeasure, i: usize, count: usize) -> Vec<usize> {
    let p = m.point(i);
    let diam = m.diameter_bound().max(1e-300);
    let mut r = diam * (count as f64 / m.len() as f64).powf(1.0 / m.dim() as f64).max(1e-6);
    loop {
        let ball = crate::measure::Region::Ball(crate::measure::Ball {
            center: p.to_vec(),
            radius: r,
        });
        let ids = m.atoms_in(&ball);
        if ids.len() > count || r > 2.0 * diam {
            let mut c: Vec<(f64, usize)> = ids
                .into_iter()
                .filter(|&j| j != i)
                .map(|j| (dist(p, m.point(j)), j))
                .collect();
            c.sort_by(|a, b| a.partial_cmp(b).unwrap());
            return c.into_iter().take(count).map(|(_, j)| j).collect();
        }
        r *= 1.6;
    }
}

/// Equal-weight node cloud approximating `𝓗ⁿ|_{L∩region}`: spacing `h`, weight `hⁿ`.
pub fn plane_lattice(frame: &Frame, plane: &Hyperplane, h: f64) -> Result<DiscreteMeasure> {
    let d = frame.dim();
    let n = d - 1;
    let c = frame.center();
    let p0: Vec<f64> = {
        let s = dot(&plane.normal, &c) - plane.offset;
        c.iter().zip(&plane.normal).map(|(ci, ni)| ci - s * ni).collect()
    };
    let basis = plane.tangent_basis();
    let reach = (frame.diameter() / h).ceil() as i64 + 1;
    let side = (2 * reach + 1) as usize;
    let total = side.checked_pow(n as u32).ok_or_else(|| Error::InvalidParameter("plane lattice too large".into()))?;
    if total > 50_000_000 {
        return Err(Error::InvalidParameter(format!("plane lattice with {total} candidates")));
    }
    let mut coords = Vec::new();
    let mut count = 0usize;
    for code in 0..total {
        let mut cc = code;
        let mut x = p0.clone();
        for e in &basis {
            let k = (cc % side) as i64 - reach;
            cc /= side;
            for (xi, ei) in x.iter_mut().zip(e) {
                *xi += h * k as f64 * ei;
            }
        }
        if frame.contains(&x) {
            coords.extend(x);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidParameter("plane misses the region".into()));
    }
    DiscreteMeasure::from_flat(n, coords, vec![h.powi(n as i32); count])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub c: f64,
    pub distance: DualDistance,
    pub plane_nodes: usize,
}

/// `α^L_μ(Q) = ℓ(Q)^{-(n+1)} inf_{c≥0} d_Q(μ, c𝓗ⁿ|_L)` on a grid of spacing `h`.
pub fn alpha_plane(mu: &DiscreteMeasure, q: &Cube, plane: &Hyperplane, h: f64) -> Result<AlphaResult> {
    alpha_plane_frame(mu, &Frame::cube(q), plane, h)
}

pub fn alpha_plane_frame(mu: &DiscreteMeasure, frame: &Frame, plane: &Hyperplane, h: f64) -> Result<AlphaResult> {
    let sigma = plane_lattice(frame, plane, h)?;
    let grid = DualGrid::new(frame.clone(), h)?;
    let n = mu.n();
    let norm = frame.side().powi(n as i32 + 1);
    let mass_q: f64 = (0..mu.len()).filter(|&i| frame.contains(mu.point(i))).map(|i| mu.weight(i)).sum();
    let area = sigma.total_mass();
    let hi = 2.0 * mass_q / area;
    let eval = |c: f64| -> Result<DualDistance> {
        let s = if c > 0.0 { sigma.scaled(c)? } else { DiscreteMeasure::empty(n) };
        dist_dual(mu, &s, &grid)
    };
    if !(hi > 0.0) {
        let d0 = eval(0.0)?;
        return Ok(AlphaResult {
            alpha: d0.value / norm,
            c: 0.0,
            distance: d0,
            plane_nodes: sigma.len(),
        });
    }
    let mut err = None;
    let (c, _) = golden_section(
        |c| match eval(c) {
            Ok(d) => d.value,
            Err(e) => {
                err = Some(e);
                f64::INFINITY
            }
        },
        0.0,
        hi,
        1e-10 * hi,
        200,
    );
    if let Some(e) = err {
        return Err(e);
    }
    // Endpoints are not sampled by the search itself.
    let mut best = (c, eval(c)?);
    for cand in [0.0, hi] {
        let d = eval(cand)?;
        if d.value < best.1.value {
            best = (cand, d);
        }
    }
    Ok(AlphaResult {
        alpha: best.1.value / norm,
        c: best.0,
        distance: best.1,
        plane_nodes: sigma.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(n: usize, x: Vec<f64>) -> DiscreteMeasure {
        DiscreteMeasure::new(n, &[x], vec![1.0]).unwrap()
    }

    #[test]
    fn identical_measures_are_at_distance_zero() {
        let q = Cube::new(vec![0.0; 2], 1.0).unwrap();
        let g = DualGrid::for_cube(&q, 0.05).unwrap();
        let mu = atom(1, vec![0.1, 0.2]);
        assert_eq!(dist_dual(&mu, &mu, &g).unwrap().value, 0.0);
    }

    #[test]
    fn two_atoms_shifted() {
        let q = Cube::new(vec![0.0; 2], 2.0).unwrap();
        let h = 0.02;
        let g = DualGrid::for_cube(&q, h).unwrap();
        let mu = atom(1, vec![0.13, 0.07]);
        let nu = atom(1, vec![-0.2, 0.07]);
        let d = dist_dual(&mu, &nu, &g).unwrap();
        assert!((d.value - 0.33).abs() <= 2.0 * h, "{}", d.value);
        let back = dist_dual(&nu, &mu, &g).unwrap();
        assert!((d.value - back.value).abs() < 1e-12);
    }

    #[test]
    fn single_atom_goes_to_boundary() {
        let q = Cube::new(vec![0.0; 2], 2.0).unwrap();
        let g = DualGrid::for_cube(&q, 0.1).unwrap();
        let mu = atom(1, vec![0.5, 0.0]);
        let d = dist_dual(&mu, &DiscreteMeasure::empty(1), &g).unwrap();
        assert!((d.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn register_picks_nearest() {
        let q = Cube::new(vec![0.5; 2], 1.0).unwrap();
        let g = DualGrid::for_cube(&q, 0.1).unwrap();
        let k = g.register(&[0.33, 0.71]);
        assert_eq!(g.multi_index(k), vec![3, 7]);
    }

    #[test]
    fn matching_plane_measure_has_tiny_alpha() {
        let q = Cube::new(vec![0.0; 2], 1.0).unwrap();
        let plane = Hyperplane::new(vec![0.0, 1.0], 0.013).unwrap();
        let frame = Frame::cube(&q);
        let sigma = plane_lattice(&frame, &plane, 1.0 / 16.0).unwrap();
        let mu = sigma.scaled(2.5).unwrap();
        let a = alpha_plane(&mu, &q, &plane, 1.0 / 16.0).unwrap();
        assert!(a.alpha < 1e-9, "{}", a.alpha);
        assert!((a.c - 2.5).abs() < 1e-6);
    }

    #[test]
    fn empty_measure_alpha_zero() {
        let q = Cube::new(vec![0.0; 2], 1.0).unwrap();
        let plane = Hyperplane::new(vec![0.0, 1.0], 0.0).unwrap();
        let a = alpha_plane(&DiscreteMeasure::empty(1), &q, &plane, 0.1).unwrap();
        assert_eq!(a.alpha, 0.0);
        assert_eq!(a.c, 0.0);
    }

    #[test]
    fn plane_missing_cube_is_an_error() {
        let q = Cube::new(vec![0.0; 2], 1.0).unwrap();
        let plane = Hyperplane::new(vec![0.0, 1.0], 5.0).unwrap();
        assert!(alpha_plane(&DiscreteMeasure::empty(1), &q, &plane, 0.1).is_err());
    }
}
