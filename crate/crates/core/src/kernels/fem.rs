//! Q1 finite elements on uniform grids with element-constant coefficients:
//! the periodic cell problem and a Dirichlet solve for fundamental solutions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{grad_theta0, theta0, ConstMatrix, MatrixField};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::measure::{ball_samples, Cube};

/// Uniform grid of `n^d` elements with spacing `h` starting at `origin`.
#[derive(Debug, Clone)]
pub struct Q1Grid {
    pub d: usize,
    pub n: usize,
    pub h: f64,
    pub origin: Vec<f64>,
    pub periodic: bool,
}

impl Q1Grid {
    pub fn nodes_per_axis(&self) -> usize {
        if self.periodic {
            self.n
        } else {
            self.n + 1
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes_per_axis().pow(self.d as u32)
    }

    pub fn num_elements(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn node_index(&self, idx: &[usize]) -> usize {
        let m = self.nodes_per_axis();
        idx.iter().rev().fold(0, |acc, &i| acc * m + i)
    }

    pub fn node_multi(&self, mut k: usize) -> Vec<usize> {
        let m = self.nodes_per_axis();
        (0..self.d)
            .map(|_| {
                let i = k % m;
                k /= m;
                i
            })
            .collect()
    }

    pub fn node_pos(&self, k: usize) -> Vec<f64> {
        self.node_multi(k)
            .iter()
            .zip(&self.origin)
            .map(|(&i, o)| o + i as f64 * self.h)
            .collect()
    }

    fn element_multi(&self, mut e: usize) -> Vec<usize> {
        (0..self.d)
            .map(|_| {
                let i = e % self.n;
                e /= self.n;
                i
            })
            .collect()
    }

    fn element_nodes(&self, e: usize) -> Vec<usize> {
        let base = self.element_multi(e);
        let m = self.nodes_per_axis();
        (0..1usize << self.d)
            .map(|a| {
                let idx: Vec<usize> = (0..self.d).map(|i| (base[i] + (a >> i & 1)) % m).collect();
                self.node_index(&idx)
            })
            .collect()
    }

    fn element_center(&self, e: usize) -> Vec<f64> {
        self.element_multi(e)
            .iter()
            .zip(&self.origin)
            .map(|(&i, o)| o + (i as f64 + 0.5) * self.h)
            .collect()
    }

    fn is_boundary(&self, k: usize) -> bool {
        !self.periodic && self.node_multi(k).iter().any(|&i| i == 0 || i == self.n)
    }

    /// Element containing `x` (clamped) and local coordinates in `[0,1]^d`.
    fn locate(&self, x: &[f64]) -> (Vec<usize>, Vec<f64>) {
        let mut base = Vec::with_capacity(self.d);
        let mut t = Vec::with_capacity(self.d);
        for (xi, oi) in x.iter().zip(&self.origin) {
            let mut s = (xi - oi) / self.h;
            if self.periodic {
                s = s.rem_euclid(self.n as f64);
            }
            let i = (s.floor().max(0.0) as usize).min(self.n - 1);
            base.push(i);
            t.push((s - i as f64).clamp(0.0, 1.0));
        }
        (base, t)
    }

    /// Multilinear interpolation of a nodal field.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let (base, t) = self.locate(x);
        let m = self.nodes_per_axis();
        let mut s = 0.0;
        for a in 0..1usize << self.d {
            let mut w = 1.0;
            let mut idx = Vec::with_capacity(self.d);
            for i in 0..self.d {
                let bit = a >> i & 1;
                w *= if bit == 1 { t[i] } else { 1.0 - t[i] };
                idx.push((base[i] + bit) % m);
            }
            s += w * values[self.node_index(&idx)];
        }
        s
    }
}

/// `G^{kl}_{ab} = ∫ ∂_kφ_a ∂_lφ_b` on the unit reference element.
fn reference_tensors(d: usize) -> Vec<Vec<f64>> {
    let l = 1usize << d;
    let sgn = |bit: usize| if bit == 1 { 1.0 } else { -1.0 };
    let mass = |a: usize, b: usize| if a == b { 1.0 / 3.0 } else { 1.0 / 6.0 };
    let mut out = vec![vec![0.0; l * l]; d * d];
    for k in 0..d {
        for ll in 0..d {
            for a in 0..l {
                for b in 0..l {
                    let mut v = 1.0;
                    for i in 0..d {
                        let (ai, bi) = (a >> i & 1, b >> i & 1);
                        v *= if i == k && i == ll {
                            sgn(ai) * sgn(bi)
                        } else if i == k {
                            0.5 * sgn(ai)
                        } else if i == ll {
                            0.5 * sgn(bi)
                        } else {
                            mass(ai, bi)
                        };
                    }
                    out[k * d + ll][a * l + b] = v;
                }
            }
        }
    }
    out
}

/// Assembled-on-the-fly stiffness operator `K_ab = ∫ A∇φ_b·∇φ_a`.
struct Stiffness {
    grid: Q1Grid,
    local: Vec<f64>,
    nodes: Vec<usize>,
    coeff: Vec<DMatrix<f64>>,
    fixed: Vec<bool>,
    symmetric: bool,
}

impl Stiffness {
    fn new(grid: Q1Grid, field: &MatrixField) -> Self {
        let d = grid.d;
        let l = 1usize << d;
        let g = reference_tensors(d);
        let scale = grid.h.powi(d as i32 - 2);
        let ne = grid.num_elements();
        let mut local = vec![0.0; ne * l * l];
        let mut nodes = Vec::with_capacity(ne * l);
        let mut coeff = Vec::with_capacity(ne);
        let mut symmetric = true;
        for e in 0..ne {
            let a = field.eval(&grid.element_center(e));
            if (&a - a.transpose()).iter().any(|v| *v != 0.0) {
                symmetric = false;
            }
            let blk = &mut local[e * l * l..(e + 1) * l * l];
            for k in 0..d {
                for m in 0..d {
                    let c = a[(k, m)] * scale;
                    if c != 0.0 {
                        for (b, gv) in blk.iter_mut().zip(&g[k * d + m]) {
                            *b += c * gv;
                        }
                    }
                }
            }
            nodes.extend(grid.element_nodes(e));
            coeff.push(a);
        }
        let fixed = (0..grid.num_nodes()).map(|k| grid.is_boundary(k)).collect();
        Stiffness {
            grid,
            local,
            nodes,
            coeff,
            fixed,
            symmetric,
        }
    }

    fn apply_full(&self, x: &[f64], y: &mut [f64]) {
        let l = 1usize << self.grid.d;
        y.iter_mut().for_each(|v| *v = 0.0);
        let mut xl = vec![0.0; l];
        for e in 0..self.grid.num_elements() {
            let nd = &self.nodes[e * l..(e + 1) * l];
            for (a, &k) in nd.iter().enumerate() {
                xl[a] = x[k];
            }
            let blk = &self.local[e * l * l..(e + 1) * l * l];
            for (a, &k) in nd.iter().enumerate() {
                let row = &blk[a * l..(a + 1) * l];
                y[k] += dot(row, &xl);
            }
        }
    }

    /// Operator restricted to free nodes (fixed rows and columns dropped).
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_full(x, y);
        for (v, &f) in y.iter_mut().zip(&self.fixed) {
            if f {
                *v = 0.0;
            }
        }
    }
}

fn project_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn conjugate_gradient(op: &Stiffness, b: &[f64], tol: f64, max_iter: usize, project: bool) -> Result<(Vec<f64>, SolveStats)> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    if project {
        project_mean(&mut r);
    }
    let bnorm = dot(&r, &r).sqrt().max(1e-300);
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for it in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok((x, SolveStats { iterations: it, relative_residual: rr.sqrt() / bnorm }));
        }
        op.apply(&p, &mut ap);
        if project {
            project_mean(&mut ap);
        }
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence(format!(
        "CG stopped after {max_iter} iterations at relative residual {:e}",
        rr.sqrt() / bnorm
    )))
}

fn bicgstab(op: &Stiffness, b: &[f64], tol: f64, max_iter: usize, project: bool) -> Result<(Vec<f64>, SolveStats)> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    if project {
        project_mean(&mut r);
    }
    let bnorm = dot(&r, &r).sqrt().max(1e-300);
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 0..max_iter {
        let res = dot(&r, &r).sqrt();
        if res <= tol * bnorm {
            return Ok((x, SolveStats { iterations: it, relative_residual: res / bnorm }));
        }
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        op.apply(&p, &mut v);
        if project {
            project_mean(&mut v);
        }
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        op.apply(&s, &mut t);
        if project {
            project_mean(&mut t);
        }
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        if omega == 0.0 {
            let res = dot(&r, &r).sqrt();
            if res <= tol * bnorm {
                return Ok((x, SolveStats { iterations: it + 1, relative_residual: res / bnorm }));
            }
            break;
        }
    }
    Err(Error::NonConvergence("BiCGSTAB did not reach the requested tolerance".into()))
}

fn solve(op: &Stiffness, b: &[f64], tol: f64, project: bool) -> Result<(Vec<f64>, SolveStats)> {
    let max_iter = 20 * op.grid.num_nodes() + 1000;
    if op.symmetric {
        conjugate_gradient(op, b, tol, max_iter, project)
    } else {
        bicgstab(op, b, tol, max_iter, project)
    }
}

/// Solution of the periodic cell problem `div(A(∇χ_k + e_k)) = 0`, mean zero.
#[derive(Debug, Clone)]
pub struct CorrectorSolution {
    pub grid: Q1Grid,
    /// Nodal values of `χ_k`, one vector per component.
    pub chi: Vec<Vec<f64>>,
    /// Element averages of `∇χ` (`grad[e][(l,k)] = ∂_l χ_k`).
    pub grad: Vec<DMatrix<f64>>,
    pub a0: ConstMatrix,
    pub stats: Vec<SolveStats>,
}

impl CorrectorSolution {
    pub fn period(&self) -> f64 {
        self.grid.h * self.grid.n as f64
    }

    pub fn chi_at(&self, k: usize, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.chi[k], x)
    }

    /// `∇χ` on the element containing `x`.
    pub fn grad_chi_at(&self, x: &[f64]) -> &DMatrix<f64> {
        let (base, _) = self.grid.locate(x);
        let e = base.iter().rev().fold(0, |acc, &i| acc * self.grid.n + i);
        &self.grad[e]
    }

    /// Rescaled corrector `χ_ℓ(x) = ℓ χ̃(x/ℓ)` with period `ℓ`, where `χ̃` has period 1.
    pub fn rescaled(&self, ell: f64) -> CorrectorSolution {
        let s = ell / self.period();
        let mut out = self.clone();
        out.grid.h *= s;
        out.grid.origin.iter_mut().for_each(|o| *o *= s);
        out.chi.iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v *= s));
        out
    }

    /// Cell average of each component (zero up to round-off).
    pub fn means(&self) -> Vec<f64> {
        self.chi.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
    }
}

/// Solves the cell problem on `cells` elements per axis over one period of `a`.
pub fn solve_corrector(a: &MatrixField, cells: usize) -> Result<CorrectorSolution> {
    let period = a
        .meta
        .period
        .ok_or_else(|| Error::InvalidParameter("field has no declared period".into()))?;
    if !cells.is_power_of_two() || cells < 2 {
        return Err(Error::InvalidParameter(format!("cell resolution {cells} must be a power of two ≥ 2")));
    }
    let d = a.dim();
    let probe: Vec<Vec<f64>> = ball_samples(d, 64).into_iter().map(|u| u.iter().map(|v| v * period).collect()).collect();
    let res = super::field::periodicity_residual(a, period, &probe);
    if res > 1e-9 {
        return Err(Error::InvalidParameter(format!("field is not {period}-periodic (residual {res:e})")));
    }
    let grid = Q1Grid {
        d,
        n: cells,
        h: period / cells as f64,
        origin: vec![0.0; d],
        periodic: true,
    };
    let op = Stiffness::new(grid.clone(), a);
    let l = 1usize << d;
    let sgn = |bit: usize| if bit == 1 { 1.0 } else { -1.0 };
    let face = grid.h.powi(d as i32 - 1) / 2f64.powi(d as i32 - 1);
    let mut chi = Vec::with_capacity(d);
    let mut stats = Vec::with_capacity(d);
    for k in 0..d {
        let mut b = vec![0.0; grid.num_nodes()];
        for e in 0..grid.num_elements() {
            let ae = &op.coeff[e];
            let nd = &op.nodes[e * l..(e + 1) * l];
            for (a_loc, &node) in nd.iter().enumerate() {
                let mut s = 0.0;
                for m in 0..d {
                    s += ae[(m, k)] * sgn(a_loc >> m & 1);
                }
                b[node] -= face * s;
            }
        }
        let (mut x, st) = solve(&op, &b, 1e-11, true)?;
        project_mean(&mut x);
        chi.push(x);
        stats.push(st);
    }
    let mut grad = Vec::with_capacity(grid.num_elements());
    let mut a0 = DMatrix::<f64>::zeros(d, d);
    let inv = 1.0 / (grid.h * 2f64.powi(d as i32 - 1));
    for e in 0..grid.num_elements() {
        let nd = &op.nodes[e * l..(e + 1) * l];
        let mut g = DMatrix::<f64>::zeros(d, d);
        for k in 0..d {
            for m in 0..d {
                let s: f64 = nd.iter().enumerate().map(|(a_loc, &node)| sgn(a_loc >> m & 1) * chi[k][node]).sum();
                g[(m, k)] = s * inv;
            }
        }
        let flux = &op.coeff[e] * (DMatrix::identity(d, d) + &g);
        a0 += flux;
        grad.push(g);
    }
    a0 /= grid.num_elements() as f64;
    Ok(CorrectorSolution {
        grid,
        chi,
        grad,
        a0: ConstMatrix::new(a0)?,
        stats,
    })
}

/// Grid approximation of `E_A(·, y)`, solving `div(A∇u) = δ_y` with
/// `u = Θ(· − y; A(y))` on the box boundary.
///
/// Point values and gradients are reconstructed from the smoother remainder
/// `u − Θ(· − y; A(y))`, with the singular part added back in closed form.
#[derive(Debug, Clone)]
pub struct GridSolution {
    pub grid: Q1Grid,
    /// Pole after snapping to the nearest node.
    pub pole: Vec<f64>,
    pub values: Vec<f64>,
    /// `A(pole)`, the coefficient of the subtracted singular part.
    pub frozen: ConstMatrix,
    remainder: Vec<f64>,
    pub stats: SolveStats,
    /// Provenance of the Dirichlet data.
    pub boundary_data: String,
}

impl GridSolution {
    fn singular(&self, x: &[f64]) -> Option<f64> {
        let z: Vec<f64> = x.iter().zip(&self.pole).map(|(a, b)| a - b).collect();
        theta0(&z, &self.frozen, self.grid.d - 1).ok()
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        match self.singular(x) {
            Some(t) => self.grid.interpolate(&self.remainder, x) + t,
            None => f64::NEG_INFINITY,
        }
    }

    fn fd(&self, f: &[f64], k: usize) -> Vec<f64> {
        let idx = self.grid.node_multi(k);
        let h = self.grid.h;
        (0..self.grid.d)
            .map(|i| {
                let mut lo = idx.clone();
                let mut hi = idx.clone();
                let mut span = 0.0;
                if idx[i] > 0 {
                    lo[i] -= 1;
                    span += h;
                }
                if idx[i] < self.grid.n {
                    hi[i] += 1;
                    span += h;
                }
                (f[self.grid.node_index(&hi)] - f[self.grid.node_index(&lo)]) / span
            })
            .collect()
    }

    /// Centered-difference gradient of the raw nodal values at node `k`
    /// (one-sided on the boundary).
    pub fn node_gradient(&self, k: usize) -> Vec<f64> {
        self.fd(&self.values, k)
    }

    /// Interpolated centered-difference gradient of the remainder plus the
    /// exact gradient of the singular part (omitted at the pole itself).
    pub fn gradient_at(&self, x: &[f64]) -> Vec<f64> {
        let (base, t) = self.grid.locate(x);
        let d = self.grid.d;
        let mut g = vec![0.0; d];
        for a in 0..1usize << d {
            let mut w = 1.0;
            let mut idx = Vec::with_capacity(d);
            for i in 0..d {
                let bit = a >> i & 1;
                w *= if bit == 1 { t[i] } else { 1.0 - t[i] };
                idx.push(base[i] + bit);
            }
            if w != 0.0 {
                let gn = self.fd(&self.remainder, self.grid.node_index(&idx));
                for i in 0..d {
                    g[i] += w * gn[i];
                }
            }
        }
        let z: Vec<f64> = x.iter().zip(&self.pole).map(|(a, b)| a - b).collect();
        if let Ok(s) = grad_theta0(&z, &self.frozen, d - 1) {
            for i in 0..d {
                g[i] += s[i];
            }
        }
        g
    }

    /// `∫_{∂B(pole,r)} A∇u·ν dS`.
    pub fn flux(&self, a: &MatrixField, r: f64, m: usize) -> Result<f64> {
        let (pts, wts) = super::sphere_quadrature(self.grid.d, m)?;
        let mut s = 0.0;
        for (p, w) in pts.iter().zip(&wts) {
            let x: Vec<f64> = p.iter().zip(&self.pole).map(|(u, c)| c + r * u).collect();
            let g = self.gradient_at(&x);
            let ag = crate::linalg::mat_vec(&a.eval(&x), &g);
            s += w * r.powi(self.grid.d as i32 - 1) * dot(&ag, p);
        }
        Ok(s)
    }
}

/// Grid solve for `E_A(·, y)` on `bx` with spacing about `h`.
pub fn solve_fundamental(a: &MatrixField, y: &[f64], bx: &Cube, h: f64) -> Result<GridSolution> {
    let d = a.dim();
    if !(2..=3).contains(&d) {
        return Err(Error::InvalidParameter(format!("grid solves need ambient dimension 2 or 3, got {d}")));
    }
    if y.len() != d || bx.center.len() != d {
        return Err(Error::DimensionMismatch("pole, box and field dimensions differ".into()));
    }
    let margin = bx.dist_to_boundary(y);
    if !bx.contains(y) || margin < bx.side / 4.0 - 1e-12 * bx.side {
        return Err(Error::InvalidParameter(format!(
            "pole is {margin} from the box boundary; need at least {}",
            bx.side / 4.0
        )));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("grid spacing {h}")));
    }
    let n = (bx.side / h).round().max(4.0) as usize;
    let grid = Q1Grid {
        d,
        n,
        h: bx.side / n as f64,
        origin: bx.lower(),
        periodic: false,
    };
    let pole_idx: Vec<usize> = y
        .iter()
        .zip(&grid.origin)
        .map(|(yi, oi)| ((yi - oi) / grid.h).round() as usize)
        .collect();
    let pole_node = grid.node_index(&pole_idx);
    let pole = grid.node_pos(pole_node);
    let frozen = a.eval_const(&pole)?;
    let op = Stiffness::new(grid.clone(), a);

    let nn = grid.num_nodes();
    let mut g = vec![0.0; nn];
    for k in 0..nn {
        if op.fixed[k] {
            let x = grid.node_pos(k);
            let z: Vec<f64> = x.iter().zip(&pole).map(|(a, b)| a - b).collect();
            g[k] = theta0(&z, &frozen, d - 1)?;
        }
    }
    let mut kg = vec![0.0; nn];
    op.apply_full(&g, &mut kg);
    let mut b: Vec<f64> = kg.iter().map(|v| -v).collect();
    b[pole_node] -= 1.0;
    for k in 0..nn {
        if op.fixed[k] {
            b[k] = 0.0;
        }
    }
    let (x, stats) = solve(&op, &b, 1e-10, false)?;
    let values: Vec<f64> = (0..nn).map(|k| if op.fixed[k] { g[k] } else { x[k] }).collect();
    let mut remainder = values.clone();
    for (k, r) in remainder.iter_mut().enumerate() {
        if k != pole_node {
            let z: Vec<f64> = grid.node_pos(k).iter().zip(&pole).map(|(a, b)| a - b).collect();
            *r -= theta0(&z, &frozen, d - 1)?;
        }
    }
    // The remainder is bounded at the pole; fill that node with the neighbour mean.
    let mut acc = 0.0;
    for i in 0..d {
        for s in [-1i64, 1] {
            let mut idx = pole_idx.clone();
            idx[i] = (idx[i] as i64 + s) as usize;
            acc += remainder[grid.node_index(&idx)];
        }
    }
    remainder[pole_node] = acc / (2 * d) as f64;
    Ok(GridSolution {
        grid,
        pole,
        values,
        frozen,
        remainder,
        stats,
        boundary_data: "theta0 with the coefficient frozen at the pole".into(),
    })
}

/// `∇Θ(x − y; A(y))` helper used when comparing grid gradients.
pub fn frozen_gradient(a: &MatrixField, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    grad_theta0(&z, &a.eval_const(y)?, a.dim() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_corrector_vanishes() {
        let mut a = MatrixField::identity(2);
        a.meta.period = Some(1.0);
        let sol = solve_corrector(&a, 8).unwrap();
        assert!(sol.chi.iter().flatten().all(|v| v.abs() < 1e-12));
        assert!(crate::linalg::max_abs_diff(sol.a0.matrix(), &DMatrix::identity(2, 2)) < 1e-12);
    }

    #[test]
    fn corrector_needs_power_of_two_and_period() {
        let mut a = MatrixField::identity(2);
        assert!(solve_corrector(&a, 8).is_err());
        a.meta.period = Some(1.0);
        assert!(solve_corrector(&a, 12).is_err());
    }

    #[test]
    fn reference_tensor_rows_sum_to_zero() {
        for d in 2..=3 {
            for g in reference_tensors(d) {
                let l = 1 << d;
                for a in 0..l {
                    let s: f64 = g[a * l..(a + 1) * l].iter().sum();
                    assert!(s.abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn pole_margin_enforced() {
        let a = MatrixField::identity(2);
        let bx = Cube::new(vec![0.0; 2], 1.0).unwrap();
        assert!(solve_fundamental(&a, &[0.4, 0.0], &bx, 0.05).is_err());
    }
}
