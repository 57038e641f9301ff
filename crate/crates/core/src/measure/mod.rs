//! Discrete measures (weighted point clouds), regions, affine maps and the
//! constructions built on them: restriction, pushforward, periodization and
//! cell smoothing.
//!
//! Regions are open: an atom lying exactly on a ball sphere or a cube face is
//! outside. Membership in a ball is decided by `|x - c|² < r²`.

mod io;
mod kdtree;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{dist2, mat_vec};

pub use io::{load_measure, parse_measure, save_measure, write_measure};
pub use kdtree::KdTree;

/// Open Euclidean ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!("ball radius {radius}")));
        }
        Ok(Ball { center, radius })
    }

    /// `aB`: same center, radius scaled by `a`.
    pub fn dilate(&self, a: f64) -> Ball {
        Ball {
            center: self.center.clone(),
            radius: a * self.radius,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        dist2(x, &self.center) < self.radius * self.radius
    }
}

/// Open axis-parallel cube given by center and side length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub center: Vec<f64>,
    pub side: f64,
}

impl Cube {
    pub fn new(center: Vec<f64>, side: f64) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::InvalidParameter(format!("cube side {side}")));
        }
        Ok(Cube { center, side })
    }

    pub fn dilate(&self, a: f64) -> Cube {
        Cube {
            center: self.center.clone(),
            side: a * self.side,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let h = 0.5 * self.side;
        x.iter().zip(&self.center).all(|(xi, ci)| (xi - ci).abs() < h)
    }

    /// Distance from `x` to the boundary `∂Q` (valid inside and outside).
    pub fn dist_to_boundary(&self, x: &[f64]) -> f64 {
        let h = 0.5 * self.side;
        if self.contains(x) {
            x.iter()
                .zip(&self.center)
                .map(|(xi, ci)| h - (xi - ci).abs())
                .fold(f64::INFINITY, f64::min)
        } else {
            x.iter()
                .zip(&self.center)
                .map(|(xi, ci)| ((xi - ci).abs() - h).max(0.0).powi(2))
                .sum::<f64>()
                .sqrt()
        }
    }

    pub fn lower(&self) -> Vec<f64> {
        self.center.iter().map(|c| c - 0.5 * self.side).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Ball(Ball),
    Cube(Cube),
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Ball(b) => b.contains(x),
            Region::Cube(q) => q.contains(x),
        }
    }

    pub fn center(&self) -> &[f64] {
        match self {
            Region::Ball(b) => &b.center,
            Region::Cube(q) => &q.center,
        }
    }

    pub fn dilate(&self, a: f64) -> Region {
        match self {
            Region::Ball(b) => Region::Ball(b.dilate(a)),
            Region::Cube(q) => Region::Cube(q.dilate(a)),
        }
    }

    /// Scale used for densities: `r(B)` for balls, `ℓ(Q)` for cubes.
    pub fn size(&self) -> f64 {
        match self {
            Region::Ball(b) => b.radius,
            Region::Cube(q) => q.side,
        }
    }

    /// True when the closed box `[lo, hi]` cannot meet the region.
    pub fn misses_box(&self, lo: &[f64], hi: &[f64]) -> bool {
        match self {
            Region::Ball(b) => {
                let d2: f64 = b
                    .center
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(c, (l, h))| {
                        let t = if c < l {
                            l - c
                        } else if c > h {
                            c - h
                        } else {
                            0.0
                        };
                        t * t
                    })
                    .sum();
                d2 >= b.radius * b.radius
            }
            Region::Cube(q) => {
                let h = 0.5 * q.side;
                q.center
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .any(|(c, (l, u))| *u <= c - h || *l >= c + h)
            }
        }
    }

    /// True when the closed box `[lo, hi]` lies inside the open region.
    pub fn contains_box(&self, lo: &[f64], hi: &[f64]) -> bool {
        match self {
            Region::Ball(b) => {
                let d2: f64 = b
                    .center
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(c, (l, h))| {
                        let t = (c - l).abs().max((h - c).abs());
                        t * t
                    })
                    .sum();
                d2 < b.radius * b.radius
            }
            Region::Cube(q) => {
                let h = 0.5 * q.side;
                q.center
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(c, (l, u))| *l > c - h && *u < c + h)
            }
        }
    }
}

impl From<Ball> for Region {
    fn from(b: Ball) -> Self {
        Region::Ball(b)
    }
}

impl From<Cube> for Region {
    fn from(q: Cube) -> Self {
        Region::Cube(q)
    }
}

/// Invertible affine map `x ↦ Lx + b`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    linear: DMatrix<f64>,
    translation: Vec<f64>,
    inverse: DMatrix<f64>,
    det: f64,
}

impl AffineMap {
    pub fn new(linear: DMatrix<f64>, translation: Vec<f64>) -> Result<Self> {
        let d = linear.nrows();
        if linear.ncols() != d || translation.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "affine map {}x{} with translation of length {}",
                linear.nrows(),
                linear.ncols(),
                translation.len()
            )));
        }
        let det = linear.determinant();
        let scale = linear.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        if !(det.abs() > 1e-13 * scale.powi(d as i32)) {
            return Err(Error::SingularMap(det));
        }
        let inverse = linear
            .clone()
            .try_inverse()
            .ok_or(Error::SingularMap(det))?;
        Ok(AffineMap {
            linear,
            translation,
            inverse,
            det,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(DMatrix::identity(d, d), vec![0.0; d]).unwrap()
    }

    pub fn translation(t: Vec<f64>) -> Self {
        let d = t.len();
        Self::new(DMatrix::identity(d, d), t).unwrap()
    }

    pub fn linear(m: DMatrix<f64>) -> Result<Self> {
        let d = m.nrows();
        Self::new(m, vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn linear_part(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn inverse_linear(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn translation_part(&self) -> &[f64] {
        &self.translation
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = mat_vec(&self.linear, x);
        for (yi, ti) in y.iter_mut().zip(&self.translation) {
            *yi += ti;
        }
        y
    }

    pub fn apply_inverse(&self, y: &[f64]) -> Vec<f64> {
        let shifted: Vec<f64> = y.iter().zip(&self.translation).map(|(a, b)| a - b).collect();
        mat_vec(&self.inverse, &shifted)
    }

    pub fn inverse(&self) -> AffineMap {
        let t = -(&self.inverse * DVector::from_column_slice(&self.translation));
        AffineMap {
            linear: self.inverse.clone(),
            translation: t.as_slice().to_vec(),
            inverse: self.linear.clone(),
            det: 1.0 / self.det,
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &AffineMap) -> AffineMap {
        let linear = &self.linear * &other.linear;
        let translation = self.apply(&other.translation);
        let inverse = &other.inverse * &self.inverse;
        AffineMap {
            linear,
            translation,
            inverse,
            det: self.det * other.det,
        }
    }

    /// Singular values of the linear part, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.linear.clone().svd(false, false).singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        s
    }
}

/// Finite positive combination of Dirac masses in `ℝ^{n+1}`.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    n: usize,
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    total: f64,
    index: KdTree,
}

impl DiscreteMeasure {
    /// Builds a measure from flat coordinates (`len = atoms · (n+1)`).
    pub fn from_flat(n: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParameter("target dimension n must be ≥ 1".into()));
        }
        let dim = n + 1;
        if coords.len() != weights.len() * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates for {} atoms in dimension {}",
                coords.len(),
                weights.len(),
                dim
            )));
        }
        if let Some(k) = weights.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::NonpositiveWeight(k + 1));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coordinate".into()));
        }
        let total = weights.iter().sum();
        let index = KdTree::build(dim, &coords);
        Ok(DiscreteMeasure {
            n,
            dim,
            coords,
            weights,
            total,
            index,
        })
    }

    pub fn new(n: usize, points: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let dim = n + 1;
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "point of length {} in ambient dimension {}",
                p.len(),
                dim
            )));
        }
        Self::from_flat(n, points.concat(), weights)
    }

    pub fn empty(n: usize) -> Self {
        Self::from_flat(n, Vec::new(), Vec::new()).unwrap()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Ambient dimension `n + 1`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim.max(1))
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total
    }

    /// Measure with every weight multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_flat(
            self.n,
            self.coords.clone(),
            self.weights.iter().map(|w| w * c).collect(),
        )
    }

    /// Sub-measure made of the listed atoms, in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        let mut weights = Vec::with_capacity(idx.len());
        for &i in idx {
            coords.extend_from_slice(self.point(i));
            weights.push(self.weights[i]);
        }
        Self::from_flat(self.n, coords, weights).expect("selection of valid atoms")
    }

    /// Concatenation of two measures on the same space.
    pub fn union(&self, other: &DiscreteMeasure) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch("union of measures with different n".into()));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        Self::from_flat(self.n, coords, weights)
    }

    /// Indices of atoms in the open region, ascending.
    pub fn atoms_in(&self, region: &Region) -> Vec<usize> {
        self.index.query(&self.coords, region)
    }

    /// `μ(region)`, summed in ascending atom order.
    pub fn mass_in(&self, region: &Region) -> f64 {
        self.atoms_in(region).iter().map(|&i| self.weights[i]).sum()
    }

    /// `μ|_E`.
    pub fn restrict(&self, region: &Region) -> Self {
        self.select(&self.atoms_in(region))
    }

    /// `φ♯μ`: atoms moved by `φ`, weights unchanged.
    pub fn pushforward(&self, phi: &AffineMap) -> Result<Self> {
        if phi.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "map of dimension {} on measure of dimension {}",
                phi.dim(),
                self.dim
            )));
        }
        let mut coords = Vec::with_capacity(self.coords.len());
        for p in self.points() {
            coords.extend(phi.apply(p));
        }
        Self::from_flat(self.n, coords, self.weights.clone())
    }

    /// `m_{μ,E}(f)`: mass-weighted mean of per-atom vectors over `region`.
    pub fn mean(&self, region: &Region, values: &[Vec<f64>]) -> Result<Vec<f64>> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} atoms",
                values.len(),
                self.len()
            )));
        }
        let idx = self.atoms_in(region);
        let mass: f64 = idx.iter().map(|&i| self.weights[i]).sum();
        if !(mass > 0.0) {
            return Err(Error::ZeroMass("mean region".into()));
        }
        let k = values.first().map(|v| v.len()).unwrap_or(0);
        let mut acc = vec![0.0; k];
        for &i in &idx {
            for (a, v) in acc.iter_mut().zip(&values[i]) {
                *a += self.weights[i] * v;
            }
        }
        Ok(acc.into_iter().map(|a| a / mass).collect())
    }

    /// Axis-aligned bounding box `(lo, hi)` of the support; `None` if empty.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.is_empty() {
            return None;
        }
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.points() {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Some((lo, hi))
    }

    pub fn diameter_bound(&self) -> f64 {
        match self.bounding_box() {
            Some((lo, hi)) => crate::linalg::dist(&lo, &hi),
            None => 0.0,
        }
    }

    /// Smallest distance between two distinct atoms (∞ for fewer than two).
    pub fn min_gap(&self) -> f64 {
        let mut best = f64::INFINITY;
        let diam = self.diameter_bound().max(1e-300);
        for i in 0..self.len() {
            let p = self.point(i);
            let mut r = best.min(diam);
            // Grow the search radius until a neighbor shows up.
            loop {
                let ids = self.atoms_in(&Region::Ball(Ball {
                    center: p.to_vec(),
                    radius: r,
                }));
                let d = ids
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| dist2(p, self.point(j)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                if d.is_finite() || r >= best || r > 1e300 {
                    best = best.min(d);
                    break;
                }
                r *= 2.0;
            }
        }
        best
    }

    /// Smallest distance from `x` to an atom other than `x` itself.
    pub fn gap_near(&self, x: &[f64]) -> f64 {
        self.points()
            .map(|p| dist2(p, x))
            .filter(|&d| d > 0.0)
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    /// Stable content hash (SHA-256 over dimensions, coordinates and weights).
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        for c in &self.coords {
            h.update(c.to_bits().to_le_bytes());
        }
        for w in &self.weights {
            h.update(w.to_bits().to_le_bytes());
        }
        h.finalize().iter().take(16).map(|b| format!("{b:02x}")).collect()
    }

    pub fn translate(&self, t: &[f64]) -> Result<Self> {
        self.pushforward(&AffineMap::translation(t.to_vec()))
    }
}

/// Horizontal lattice copies of `μ₀|_{Q₀}` produced by [`periodize_layout`].
#[derive(Debug, Clone)]
pub struct PeriodicMeasure {
    /// `μ₀|_{Q₀}`.
    pub base: DiscreteMeasure,
    pub q0: Cube,
    pub reach: usize,
    /// All copies; the untranslated copy comes first.
    pub full: DiscreteMeasure,
    /// Base atom index of each atom of `full`.
    pub source: Vec<usize>,
    /// Lattice offset `z_P` of each atom of `full`.
    pub offset: Vec<Vec<f64>>,
}

impl PeriodicMeasure {
    pub fn period(&self) -> f64 {
        6.0 * self.q0.side
    }

    /// Largest `|z_P|_∞` present.
    pub fn max_offset(&self) -> f64 {
        self.period() * self.reach as f64
    }
}

/// `μ̃ = Σ_{|z_P|_∞ ≤ 6kℓ(Q₀)} T_P♯(μ₀|_{Q₀})` with `z_P ∈ 6ℓ(Q₀)ℤⁿ × {0}`.
pub fn periodize(mu0: &DiscreteMeasure, q0: &Cube, reach: usize) -> DiscreteMeasure {
    periodize_layout(mu0, q0, reach).full
}

pub fn periodize_layout(mu0: &DiscreteMeasure, q0: &Cube, reach: usize) -> PeriodicMeasure {
    let base = mu0.restrict(&Region::Cube(q0.clone()));
    let n = mu0.n();
    let dim = mu0.dim();
    let step = 6.0 * q0.side;
    let k = reach as i64;

    let mut offsets: Vec<Vec<i64>> = vec![vec![0; n]];
    let side = 2 * k + 1;
    let count = (side as usize).pow(n as u32);
    for code in 0..count {
        let mut c = code as i64;
        let mut z = vec![0i64; n];
        for zi in z.iter_mut() {
            *zi = c % side - k;
            c /= side;
        }
        if z.iter().any(|&v| v != 0) {
            offsets.push(z);
        }
    }

    let mut coords = Vec::with_capacity(base.coords.len() * offsets.len());
    let mut weights = Vec::with_capacity(base.len() * offsets.len());
    let mut source = Vec::with_capacity(base.len() * offsets.len());
    let mut offset = Vec::with_capacity(base.len() * offsets.len());
    for z in &offsets {
        let mut zp = vec![0.0; dim];
        for (a, &b) in zp.iter_mut().zip(z) {
            *a = step * b as f64;
        }
        for i in 0..base.len() {
            let p = base.point(i);
            coords.extend(p.iter().zip(&zp).map(|(a, b)| a + b));
            weights.push(base.weight(i));
            source.push(i);
            offset.push(zp.clone());
        }
    }
    let full = DiscreteMeasure::from_flat(n, coords, weights).expect("copies of valid atoms");
    PeriodicMeasure {
        base,
        q0: q0.clone(),
        reach,
        full,
        source,
        offset,
    }
}

/// A group of atoms of `μ₀` smoothed onto `¼B(Q)`.
#[derive(Debug, Clone)]
pub struct SmoothingCell {
    pub center: Vec<f64>,
    /// Radius of `B(Q)`.
    pub radius: f64,
    pub atoms: Vec<usize>,
}

/// Replaces the mass of each cell by `samples` equal atoms placed
/// quasi-uniformly (Halton points, rejection into the ball) in `¼B(Q)`.
pub fn smooth_cells(
    mu0: &DiscreteMeasure,
    cells: &[SmoothingCell],
    samples: usize,
) -> Result<DiscreteMeasure> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples_per_cell must be ≥ 1".into()));
    }
    let mut seen = vec![false; mu0.len()];
    for c in cells {
        for &a in &c.atoms {
            if a >= mu0.len() {
                return Err(Error::InvalidParameter(format!("atom {a} out of range")));
            }
            if seen[a] {
                return Err(Error::InvalidParameter(format!("atom {a} in two cells")));
            }
            seen[a] = true;
        }
    }
    let dim = mu0.dim();
    let unit = ball_samples(dim, samples);
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for c in cells {
        let mass: f64 = c.atoms.iter().map(|&a| mu0.weight(a)).sum();
        if !(mass > 0.0) {
            continue;
        }
        let r = 0.25 * c.radius;
        let w = mass / samples as f64;
        for u in &unit {
            coords.extend(u.iter().zip(&c.center).map(|(ui, ci)| ci + r * ui));
            weights.push(w);
        }
    }
    DiscreteMeasure::from_flat(mu0.n(), coords, weights)
}

const HALTON_PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `count` deterministic points in the open unit ball; the first is the origin.
pub fn ball_samples(dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; dim]];
    let mut i = 1u64;
    while out.len() < count {
        let p: Vec<f64> = (0..dim)
            .map(|k| 2.0 * radical_inverse(i, HALTON_PRIMES[k % HALTON_PRIMES.len()]) - 1.0)
            .collect();
        if p.iter().map(|v| v * v).sum::<f64>() < 1.0 {
            out.push(p);
        }
        i += 1;
    }
    out.truncate(count);
    out
}
