//! `L²(μ)` norms of truncated kernel operators.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::linalg::dist;
use crate::measure::{DiscreteMeasure, Region};

pub const POWER_ITERATION_CAP: usize = 10_000;
pub const POWER_TOL: f64 = 1e-8;

/// Dense `M_ij = K(x_i,x_j)√(w_i w_j)` (vector entries, `i ≠ j`, `|x_i−x_j| > ε₀`).
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    /// Atom indices (into the source measure) of the rows/columns.
    pub atoms: Vec<usize>,
    pub weights: Vec<f64>,
    pub d: usize,
    /// Row-major `m × m × d`, unweighted kernel values.
    pub k: Vec<f64>,
    pub eps0: f64,
    /// Weighted `(m·d) × m`, row-major.
    rows: Vec<f64>,
    /// Its transpose, row-major `m × (m·d)`.
    cols: Vec<f64>,
}

impl KernelMatrix {
    fn new(atoms: Vec<usize>, weights: Vec<f64>, d: usize, k: Vec<f64>, eps0: f64) -> Self {
        let m = atoms.len();
        let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let mut rows = vec![0.0; m * d * m];
        let mut cols = vec![0.0; m * d * m];
        for i in 0..m {
            for j in 0..m {
                for c in 0..d {
                    let v = sw[i] * sw[j] * k[(i * m + j) * d + c];
                    rows[(i * d + c) * m + j] = v;
                    cols[j * m * d + i * d + c] = v;
                }
            }
        }
        KernelMatrix {
            atoms,
            weights,
            d,
            k,
            eps0,
            rows,
            cols,
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    fn entry(&self, i: usize, j: usize) -> &[f64] {
        let m = self.len();
        &self.k[(i * m + j) * self.d..(i * m + j + 1) * self.d]
    }

    /// `y = Mv`, with `y` laid out as `m × d`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let m = self.len();
        if m == 0 {
            return Vec::new();
        }
        self.rows.par_chunks(m).map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// `v = Mᵀy`.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let md = self.len() * self.d;
        if md == 0 {
            return Vec::new();
        }
        self.cols.par_chunks(md).map(|c| c.iter().zip(y).map(|(a, b)| a * b).sum()).collect()
    }

    /// Dense `(m·d) × m` matrix, for oracles.
    pub fn dense(&self) -> nalgebra::DMatrix<f64> {
        let m = self.len();
        let d = self.d;
        let mut out = nalgebra::DMatrix::zeros(m * d, m);
        for i in 0..m {
            for j in 0..m {
                let s = (self.weights[i] * self.weights[j]).sqrt();
                for (c, k) in self.entry(i, j).iter().enumerate() {
                    out[(i * d + c, j)] = s * k;
                }
            }
        }
        out
    }
}

/// Default `ε₀`: half the smallest pairwise gap.
fn default_eps0(sub: &DiscreteMeasure) -> f64 {
    if sub.len() < 2 {
        0.0
    } else {
        0.5 * sub.min_gap()
    }
}

pub fn kernel_matrix(mu: &DiscreteMeasure, region: &Region, kernel: &dyn Kernel, eps0: Option<f64>) -> Result<KernelMatrix> {
    let atoms = mu.atoms_in(region);
    if atoms.is_empty() {
        return Err(Error::ZeroMass("operator region".into()));
    }
    let sub = mu.select(&atoms);
    let eps0 = eps0.unwrap_or_else(|| default_eps0(&sub));
    let m = atoms.len();
    let d = mu.dim();
    let rows = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; m * d];
            let x = sub.point(i);
            for j in 0..m {
                let y = sub.point(j);
                if i == j || x == y || dist(x, y) <= eps0 {
                    continue;
                }
                row[j * d..(j + 1) * d].copy_from_slice(&kernel.eval(x, y)?);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KernelMatrix::new(atoms, sub.weights().to_vec(), d, rows.concat(), eps0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormEstimate {
    pub norm: f64,
    pub iterations: usize,
    pub atoms: usize,
    pub eps0: f64,
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|a| *a /= n);
    }
    n
}

/// Spectral norm of the truncated operator on `L²(μ|_R)`, by Lanczos iteration on `MᵀM`.
///
/// The start vector is all-ones with a small fixed perturbation, so that it
/// is not confined to a symmetry class of the configuration. Near-degenerate
/// top singular values (common for antisymmetric kernels on flat sets) stall
/// plain power iteration; the Krylov basis resolves them in a few dozen steps.
pub fn operator_norm(mu: &DiscreteMeasure, region: &Region, kernel: &dyn Kernel, eps0: Option<f64>) -> Result<NormEstimate> {
    let km = kernel_matrix(mu, region, kernel, eps0)?;
    power_norm(&km)
}

/// Krylov dimension before an explicit restart from the current Ritz vector.
const LANCZOS_BASIS: usize = 120;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest eigenpair `(θ, s)` of the tridiagonal `T = tridiag(β, α, β)`.
fn top_ritz(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let k = alpha.len();
    let t = nalgebra::DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = nalgebra::SymmetricEigen::new(t);
    let top = (0..k).fold(0, |b, i| if eig.eigenvalues[i] > eig.eigenvalues[b] { i } else { b });
    (eig.eigenvalues[top], eig.eigenvectors.column(top).iter().copied().collect())
}

pub(crate) fn power_norm(km: &KernelMatrix) -> Result<NormEstimate> {
    let m = km.len();
    let done = |theta: f64, it: usize| NormEstimate {
        norm: theta.max(0.0).sqrt(),
        iterations: it,
        atoms: m,
        eps0: km.eps0,
    };
    if m < 2 {
        return Ok(done(0.0, 0));
    }
    let mut v: Vec<f64> = (0..m)
        .map(|i| 1.0 + 0.1 * ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())
        .collect();
    normalize(&mut v);
    let basis_cap = LANCZOS_BASIS.min(m);
    let mut matvecs = 0;
    let mut theta = 0.0;
    while matvecs < POWER_ITERATION_CAP {
        let mut q: Vec<Vec<f64>> = vec![v.clone()];
        let (mut alpha, mut beta) = (Vec::new(), Vec::new());
        loop {
            let j = q.len() - 1;
            let mut w = km.apply_transpose(&km.apply(&q[j]));
            matvecs += 1;
            let a = dot(&q[j], &w);
            alpha.push(a);
            // Full reorthogonalization, twice, against the whole basis.
            for _ in 0..2 {
                for b in &q {
                    let c = dot(b, &w);
                    w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let b = normalize(&mut w);
            let (t, s) = top_ritz(&alpha, &beta);
            theta = t;
            // `‖MᵀM y − θy‖ = β_j |s_j|` for the Ritz vector `y = Qs`.
            let resid = b * s[j].abs();
            let invariant = b <= f64::EPSILON * alpha.iter().fold(0.0f64, |x, y| x.max(y.abs()));
            if t <= 0.0 && invariant {
                return Ok(done(0.0, matvecs));
            }
            if invariant || resid <= POWER_TOL * t.abs() {
                return Ok(done(t, matvecs));
            }
            if q.len() == basis_cap || matvecs >= POWER_ITERATION_CAP {
                let mut y = vec![0.0; m];
                for (qi, si) in q.iter().zip(&s) {
                    y.iter_mut().zip(qi).for_each(|(a, b)| *a += si * b);
                }
                normalize(&mut y);
                v = y;
                break;
            }
            beta.push(b);
            q.push(w);
        }
    }
    Err(Error::NonConvergence(format!(
        "Lanczos hit {POWER_ITERATION_CAP} products; Ritz estimate {}",
        theta.max(0.0).sqrt()
    )))
}

/// `max(sup_i Σ_j |K_ij| w_j, sup_j Σ_i |K_ij| w_i)` over the region's atoms.
pub fn schur_bound(mu: &DiscreteMeasure, region: &Region, kernel: &dyn Kernel, eps0: Option<f64>) -> Result<f64> {
    let km = kernel_matrix(mu, region, kernel, eps0)?;
    Ok(schur_of(&km))
}

pub(crate) fn schur_of(km: &KernelMatrix) -> f64 {
    let m = km.len();
    let mut rows = vec![0.0f64; m];
    let mut cols = vec![0.0f64; m];
    for i in 0..m {
        for j in 0..m {
            let a = km.entry(i, j).iter().map(|v| v * v).sum::<f64>().sqrt();
            rows[i] += a * km.weights[j];
            cols[j] += a * km.weights[i];
        }
    }
    let r = rows.iter().fold(0.0f64, |a, &b| a.max(b));
    let c = cols.iter().fold(0.0f64, |a, &b| a.max(b));
    r.max(c)
}
