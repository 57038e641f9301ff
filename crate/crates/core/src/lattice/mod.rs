//! Hierarchical cells on a discrete measure built from nested greedy nets,
//! with doubling / low-density / stopping / bad classification.
//!
//! Generation `k` uses the scale `s_k = A₀^{-k}`. Its net is a maximal set of
//! atoms with pairwise distance `> 10 s_k` that contains the previous net;
//! each new net point hangs under the nearest net point one generation up
//! (lowest index on ties), and each atom belongs to the descendants of its
//! nearest finest-generation net point. Every cell has `r(Q) = s_k` unless a
//! larger radius in `[s_k, K₀ s_k]` is needed for containment.

mod audit;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::p_density;
use crate::error::{Error, Result};
use crate::linalg::dist;
use crate::measure::{Ball, Cube, DiscreteMeasure, Region};

pub use audit::{verify_lattice, LatticeReport, PropertyCheck};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeParams {
    pub k0: f64,
    pub a0: f64,
    pub max_generations: usize,
}

impl Default for LatticeParams {
    fn default() -> Self {
        LatticeParams {
            k0: 2.0,
            a0: 16.0,
            max_generations: 4,
        }
    }
}

impl LatticeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k0 > 1.0) || !(self.a0 > 1.0) || self.max_generations == 0 {
            return Err(Error::InvalidParameter("need K0 > 1, A0 > 1 and at least one generation".into()));
        }
        Ok(())
    }

    /// Whether `A₀ > 5000 K₀` holds; desk-scale runs normally violate it.
    pub fn in_theoretical_regime(&self) -> bool {
        self.a0 > 5000.0 * self.k0
    }

    pub fn scale(&self, k: usize) -> f64 {
        self.a0.powi(-(k as i32))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFlags {
    pub doubling: bool,
    pub low_density: bool,
    pub stop: bool,
    pub bad: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    pub generation: usize,
    /// Index of the center atom `z_Q`.
    pub center_atom: usize,
    pub center: Vec<f64>,
    pub r: f64,
    /// `ℓ(Q) = 56 K₀ A₀^{-k}`.
    pub ell: f64,
    pub members: Vec<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub flags: CellFlags,
    /// Construction-time violations (e.g. containment impossible within `[s, K₀s]`).
    pub violations: Vec<String>,
}

impl Cell {
    /// `B_Q = 28B(Q)`.
    pub fn big_ball(&self) -> Ball {
        Ball {
            center: self.center.clone(),
            radius: 28.0 * self.r,
        }
    }

    pub fn ball(&self, factor: f64) -> Ball {
        Ball {
            center: self.center.clone(),
            radius: factor * self.r,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lattice {
    pub params: LatticeParams,
    pub cells: Vec<Cell>,
    /// Cell ids per generation, ordered by center atom.
    pub generations: Vec<Vec<usize>>,
    /// `A₀ > 5000K₀` fails.
    pub regime_deviation: bool,
}

impl Lattice {
    pub fn cell(&self, id: usize) -> &Cell {
        &self.cells[id]
    }

    pub fn finest(&self) -> usize {
        self.generations.len() - 1
    }

    /// Ids of `id` and all its descendants, breadth first.
    pub fn descendants(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut i = 0;
        while i < out.len() {
            out.extend(self.cells[out[i]].children.iter().copied());
            i += 1;
        }
        out
    }

    /// Whether `a` is `b` or one of its ancestors.
    pub fn is_ancestor_or_self(&self, a: usize, b: usize) -> bool {
        let mut cur = Some(b);
        while let Some(c) = cur {
            if c == a {
                return true;
            }
            if self.cells[c].generation < self.cells[a].generation {
                return false;
            }
            cur = self.cells[c].parent;
        }
        false
    }
}

/// Uniform hash grid over points for fixed-radius neighbour queries.
struct HashGrid {
    cell: f64,
    map: HashMap<Vec<i64>, Vec<usize>>,
}

impl HashGrid {
    fn new(cell: f64) -> Self {
        HashGrid {
            cell,
            map: HashMap::new(),
        }
    }

    fn key(&self, x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| (v / self.cell).floor() as i64).collect()
    }

    fn insert(&mut self, id: usize, x: &[f64]) {
        self.map.entry(self.key(x)).or_default().push(id);
    }

    /// Ids in the `3^d` block around `x` (covers every point within `cell`).
    fn near(&self, x: &[f64]) -> Vec<usize> {
        let k = self.key(x);
        let d = k.len();
        let mut out = Vec::new();
        for code in 0..3usize.pow(d as u32) {
            let mut c = code;
            let kk: Vec<i64> = k
                .iter()
                .map(|&v| {
                    let o = (c % 3) as i64 - 1;
                    c /= 3;
                    v + o
                })
                .collect();
            if let Some(ids) = self.map.get(&kk) {
                out.extend_from_slice(ids);
            }
        }
        out
    }
}

/// Greedy maximal net with separation `> sep`, seeded by `seed` (kept in order).
fn greedy_net(mu: &DiscreteMeasure, seed: &[usize], sep: f64) -> Vec<usize> {
    let mut grid = HashGrid::new(sep);
    let mut net = Vec::new();
    let mut taken = vec![false; mu.len()];
    for &i in seed {
        grid.insert(i, mu.point(i));
        net.push(i);
        taken[i] = true;
    }
    for i in 0..mu.len() {
        if taken[i] {
            continue;
        }
        let p = mu.point(i);
        if grid.near(p).iter().all(|&j| dist(p, mu.point(j)) > sep) {
            grid.insert(i, p);
            net.push(i);
            taken[i] = true;
        }
    }
    net
}

/// Nearest member of `net` (by atom index on ties) to atom `i`, searching within `radius`.
fn nearest_in(mu: &DiscreteMeasure, grid: &HashGrid, i: usize, fallback: &[usize]) -> usize {
    let p = mu.point(i);
    let mut cand = grid.near(p);
    if cand.is_empty() {
        cand = fallback.to_vec();
    }
    let mut best = (f64::INFINITY, usize::MAX);
    for j in cand {
        let d = dist(p, mu.point(j));
        if d < best.0 || (d == best.0 && j < best.1) {
            best = (d, j);
        }
    }
    best.1
}

pub fn build_lattice(mu: &DiscreteMeasure, params: &LatticeParams) -> Result<Lattice> {
    params.validate()?;
    if mu.is_empty() {
        return Err(Error::Empty("measure".into()));
    }
    let g = params.max_generations;
    // Nested nets.
    let mut nets: Vec<Vec<usize>> = Vec::with_capacity(g);
    for k in 0..g {
        let seed: Vec<usize> = nets.last().cloned().unwrap_or_default();
        nets.push(greedy_net(mu, &seed, 10.0 * params.scale(k)));
    }
    // Parent of each net point one generation up.
    let mut parent_of: Vec<HashMap<usize, usize>> = vec![HashMap::new(); g];
    for k in 1..g {
        let mut grid = HashGrid::new(10.0 * params.scale(k - 1));
        for &z in &nets[k - 1] {
            grid.insert(z, mu.point(z));
        }
        let coarse: std::collections::HashSet<usize> = nets[k - 1].iter().copied().collect();
        let map: HashMap<usize, usize> = nets[k]
            .par_iter()
            .map(|&z| {
                let p = if coarse.contains(&z) { z } else { nearest_in(mu, &grid, z, &nets[k - 1]) };
                (z, p)
            })
            .collect();
        parent_of[k] = map;
    }
    // Ancestors of each atom, finest generation first.
    let mut anc: Vec<Vec<usize>> = vec![vec![0; mu.len()]; g];
    {
        let mut grid = HashGrid::new(10.0 * params.scale(g - 1));
        for &z in &nets[g - 1] {
            grid.insert(z, mu.point(z));
        }
        anc[g - 1] = (0..mu.len())
            .into_par_iter()
            .map(|i| nearest_in(mu, &grid, i, &nets[g - 1]))
            .collect();
        for k in (0..g - 1).rev() {
            anc[k] = anc[k + 1].iter().map(|z| parent_of[k + 1][z]).collect();
        }
    }
    // Cells.
    let mut cells: Vec<Cell> = Vec::new();
    let mut generations: Vec<Vec<usize>> = Vec::with_capacity(g);
    let mut id_of: Vec<HashMap<usize, usize>> = vec![HashMap::new(); g];
    for k in 0..g {
        let mut members: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, &z) in anc[k].iter().enumerate() {
            members.entry(z).or_default().push(i);
        }
        let mut centers: Vec<usize> = nets[k].clone();
        centers.sort_unstable();
        let mut ids = Vec::with_capacity(centers.len());
        for z in centers {
            let id = cells.len();
            let s = params.scale(k);
            let parent = if k == 0 { None } else { Some(id_of[k - 1][&parent_of[k][&z]]) };
            if let Some(p) = parent {
                cells[p].children.push(id);
            }
            cells.push(Cell {
                id,
                generation: k,
                center_atom: z,
                center: mu.point(z).to_vec(),
                r: s,
                ell: 56.0 * params.k0 * s,
                members: members.remove(&z).unwrap_or_default(),
                parent,
                children: Vec::new(),
                flags: CellFlags::default(),
                violations: Vec::new(),
            });
            id_of[k].insert(z, id);
            ids.push(id);
        }
        generations.push(ids);
    }
    choose_radii(mu, params, &mut cells);
    let mut lat = Lattice {
        params: params.clone(),
        cells,
        generations,
        regime_deviation: !params.in_theoretical_regime(),
    };
    classify_doubling(&mut lat, mu);
    Ok(lat)
}

/// Smallest `r ∈ [s, K₀s]` with `W ∩ B(Q) ⊆ Q ⊆ 28B(Q)`, violations recorded.
fn choose_radii(mu: &DiscreteMeasure, params: &LatticeParams, cells: &mut [Cell]) {
    cells.par_iter_mut().for_each(|c| {
        let s = params.scale(c.generation);
        let far = c.members.iter().map(|&i| dist(mu.point(i), &c.center)).fold(0.0f64, f64::max);
        let need = (far / 28.0).max(s);
        if need > params.k0 * s {
            c.violations.push(format!("members reach {far}, beyond 28·K0·s"));
            c.r = params.k0 * s;
        } else {
            c.r = need;
        }
        let inside = mu.atoms_in(&Region::Ball(c.ball(1.0)));
        let mut member = c.members.clone();
        member.sort_unstable();
        if inside.iter().any(|i| member.binary_search(i).is_err()) {
            c.violations.push("B(Q) contains atoms of other cells".into());
        }
    });
}

/// Sets the doubling flag: `μ(100B(Q)) ≤ K₀ μ(B(Q))`.
pub fn classify_doubling(lat: &mut Lattice, mu: &DiscreteMeasure) {
    let k0 = lat.params.k0;
    lat.cells.par_iter_mut().for_each(|c| {
        let big = mu.mass_in(&Region::Ball(c.ball(100.0)));
        let small = mu.mass_in(&Region::Ball(c.ball(1.0)));
        c.flags.doubling = big <= k0 * small;
    });
}

/// `Θ_μ(3.5 B_Q) = μ(98 B(Q)) / (98 r)ⁿ`.
pub fn cell_density(mu: &DiscreteMeasure, c: &Cell) -> f64 {
    let b = c.ball(98.0);
    mu.mass_in(&Region::Ball(b.clone())) / b.radius.powi(mu.n() as i32)
}

/// Maximal cells with `Θ_μ(3.5B_Q) ≤ θ₀`, scanned coarse to fine.
pub fn low_density_cells(lat: &mut Lattice, mu: &DiscreteMeasure, theta0: f64) -> Result<Vec<usize>> {
    if !(theta0 > 0.0 && theta0 < 1.0) {
        return Err(Error::InvalidParameter(format!("theta0 = {theta0} must lie in (0,1)")));
    }
    let dens: Vec<f64> = lat.cells.par_iter().map(|c| cell_density(mu, c)).collect();
    let mut blocked = vec![false; lat.cells.len()];
    let mut out = Vec::new();
    for gen in lat.generations.clone() {
        for id in gen {
            if blocked[id] {
                continue;
            }
            if dens[id] <= theta0 {
                out.push(id);
                for d in lat.descendants(id) {
                    blocked[d] = true;
                }
            }
        }
    }
    for c in lat.cells.iter_mut() {
        c.flags.low_density = false;
    }
    for &id in &out {
        lat.cells[id].flags.low_density = true;
    }
    Ok(out)
}

/// `t = θ₀^{1/(n+α̃)}`.
pub fn stopping_ratio(theta0: f64, n: usize, alpha_tilde: f64) -> f64 {
    theta0.powf(1.0 / (n as f64 + alpha_tilde))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StopSelection {
    pub cells: Vec<usize>,
    /// LD ancestor of each stopping cell.
    pub owner: Vec<usize>,
    /// LD cells with no doubling descendant deep enough.
    pub barren: Vec<usize>,
    pub t: f64,
}

/// For each LD cell `Q`, the maximal doubling descendants `R` with `ℓ(R) ≤ tℓ(Q)`.
pub fn stopping_cells(
    lat: &mut Lattice,
    ld: &[usize],
    theta0: f64,
    n: usize,
    alpha_tilde: f64,
) -> Result<StopSelection> {
    if !(alpha_tilde > 0.0) {
        return Err(Error::InvalidParameter("alpha_tilde must be positive".into()));
    }
    let t = stopping_ratio(theta0, n, alpha_tilde);
    let mut cells = Vec::new();
    let mut owner = Vec::new();
    let mut barren = Vec::new();
    for &q in ld {
        let lq = lat.cells[q].ell;
        let before = cells.len();
        let mut stack = vec![q];
        while let Some(c) = stack.pop() {
            let cell = &lat.cells[c];
            if cell.ell <= t * lq * (1.0 + 1e-12) && cell.flags.doubling {
                cells.push(c);
                owner.push(q);
                continue;
            }
            stack.extend(cell.children.iter().rev().copied());
        }
        if cells.len() == before {
            barren.push(q);
        }
    }
    for c in lat.cells.iter_mut() {
        c.flags.stop = false;
    }
    for &id in &cells {
        lat.cells[id].flags.stop = true;
    }
    Ok(StopSelection {
        cells,
        owner,
        barren,
        t,
    })
}

/// Whether the closed ball meets `∂Q₀`.
pub fn ball_meets_boundary(ball: &Ball, q0: &Cube) -> bool {
    q0.dist_to_boundary(&ball.center) <= ball.radius
}

/// Stopping cells whose `1.1B_P` (with `B_P = 28B(P)`) meets `∂Q₀`.
pub fn bad_cells(lat: &mut Lattice, stop: &[usize], q0: &Cube) -> Vec<usize> {
    let out: Vec<usize> = stop
        .iter()
        .copied()
        .filter(|&id| ball_meets_boundary(&lat.cells[id].ball(1.1 * 28.0), q0))
        .collect();
    for c in lat.cells.iter_mut() {
        c.flags.bad = false;
    }
    for &id in &out {
        lat.cells[id].flags.bad = true;
    }
    out
}

#[derive(Debug, Clone)]
pub struct Carved {
    pub measure: DiscreteMeasure,
    /// `μ(∪cells) − μ₀(ℝᵈ)`.
    pub mass_drop: f64,
    pub kept_atoms: Vec<usize>,
}

/// `μ₀ = Σ_Q μ|_{I_{κ₀}(Q)}`: atoms of each cell whose nearest atom outside the cell is at least `κ₀ℓ(Q)` away.
pub fn carve_inner(mu: &DiscreteMeasure, lat: &Lattice, cells: &[usize], kappa0: f64) -> Result<Carved> {
    if !(kappa0 > 0.0 && kappa0 < 1.0) {
        return Err(Error::InvalidParameter(format!("kappa0 = {kappa0} must lie in (0,1)")));
    }
    let mut kept = Vec::new();
    let mut total = 0.0;
    for &id in cells {
        let c = &lat.cells[id];
        let mut member = c.members.clone();
        member.sort_unstable();
        let reach = kappa0 * c.ell;
        let keep: Vec<usize> = c
            .members
            .par_iter()
            .copied()
            .filter(|&i| {
                let p = mu.point(i);
                mu.atoms_in(&Region::Ball(Ball {
                    center: p.to_vec(),
                    radius: reach,
                }))
                .iter()
                .all(|j| member.binary_search(j).is_ok() || dist(p, mu.point(*j)) >= reach)
            })
            .collect();
        total += c.members.iter().map(|&i| mu.weight(i)).sum::<f64>();
        kept.extend(keep);
    }
    kept.sort_unstable();
    kept.dedup();
    let measure = mu.select(&kept);
    Ok(Carved {
        mass_drop: total - measure.total_mass(),
        measure,
        kept_atoms: kept,
    })
}

/// `μ(∪LD ∩ Q₀) / μ(Q₀)`.
pub fn ld_mass_fraction(mu: &DiscreteMeasure, lat: &Lattice, q0: &Cube, ld: &[usize]) -> Result<f64> {
    let inq = mu.atoms_in(&Region::Cube(q0.clone()));
    let total: f64 = inq.iter().map(|&i| mu.weight(i)).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroMass("Q0".into()));
    }
    let mut covered = vec![false; mu.len()];
    for &id in ld {
        for &i in &lat.cells[id].members {
            covered[i] = true;
        }
    }
    Ok(inq.iter().filter(|&&i| covered[i]).map(|&i| mu.weight(i)).sum::<f64>() / total)
}

/// `P_{μ,α̃}(2B_Q)` for each listed cell.
pub fn stop_densities(mu: &DiscreteMeasure, lat: &Lattice, cells: &[usize], alpha_tilde: f64) -> Result<Vec<f64>> {
    cells
        .par_iter()
        .map(|&id| p_density(mu, &Region::Ball(lat.cells[id].ball(56.0)), alpha_tilde))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_atom_one_cell_per_generation() {
        let mu = DiscreteMeasure::new(1, &[vec![0.3, 0.2]], vec![1.0]).unwrap();
        let lat = build_lattice(&mu, &LatticeParams::default()).unwrap();
        assert!(lat.generations.iter().all(|g| g.len() == 1));
        assert!(lat.cells.iter().all(|c| c.members == vec![0]));
    }

    #[test]
    fn two_atoms_split_when_scale_drops_below_distance() {
        // Separation is 10·A₀^{-k}: with A₀ = 4 the net splits once 10·4^{-k} < 1.
        let mu = DiscreteMeasure::new(1, &[vec![0.0, 0.0], vec![1.0, 0.0]], vec![1.0, 1.0]).unwrap();
        let p = LatticeParams {
            k0: 2.0,
            a0: 4.0,
            max_generations: 3,
        };
        let lat = build_lattice(&mu, &p).unwrap();
        let sizes: Vec<usize> = lat.generations.iter().map(|g| g.len()).collect();
        assert_eq!(sizes, vec![1, 1, 2]);
    }

    #[test]
    fn t_formula() {
        let t = stopping_ratio(1e-4, 2, 0.1);
        assert!((t - 10f64.powf(-4.0 / 2.1)).abs() < 1e-15);
        assert!((t - 0.0125).abs() < 1e-3);
    }

    #[test]
    fn boundary_ball_test() {
        let q = Cube::new(vec![0.0, 0.0], 2.0).unwrap();
        assert!(!ball_meets_boundary(&Ball::new(vec![0.0, 0.0], 0.5).unwrap(), &q));
        assert!(ball_meets_boundary(&Ball::new(vec![1.0, 0.0], 0.01).unwrap(), &q));
        assert!(ball_meets_boundary(&Ball::new(vec![1.5, 0.0], 0.5).unwrap(), &q));
        assert!(!ball_meets_boundary(&Ball::new(vec![1.6, 0.0], 0.5).unwrap(), &q));
    }
}
