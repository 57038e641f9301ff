//! Projected-subgradient minimization of
//! `J(b) = λ‖b‖_∞ η(Q₀) + ∫_{Q₀} |T(bη)|² b dη`
//! over `b ≥ 0` with `∫_{Q₀} b dη = η(Q₀)`, `b` extended periodically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::measure::{periodize_layout, Cube, DiscreteMeasure};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariationalOptions {
    pub restarts: usize,
    pub iterations: usize,
    /// Initial step `c` in the `c/√k` schedule, in units of `b`.
    pub step: f64,
    /// Upper clip for `b`.
    pub cap: f64,
    /// Periodic copies `|z|_∞ ≤ 6ℓ(Q₀)·reach` included in `T`.
    pub reach: usize,
    pub seed: u64,
}

impl Default for VariationalOptions {
    fn default() -> Self {
        VariationalOptions {
            restarts: 5,
            iterations: 400,
            step: 0.25,
            cap: 2.0,
            reach: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariationalResult {
    /// Values on the atoms of `η|_{Q₀}` (in the order of `atoms`).
    pub b: Vec<f64>,
    pub atoms: Vec<usize>,
    pub j: f64,
    /// `J` at the constant candidate `b ≡ 1`.
    pub j_one: f64,
    pub mass_error: f64,
    /// `|Tν|² + 2T*((Tν)ν) − 6λ` at each atom.
    pub residual: Vec<f64>,
    /// Largest positive part of `residual` over atoms with `b > 0`.
    pub residual_max: f64,
    /// Best `J` reached by each restart.
    pub restart_values: Vec<f64>,
    /// Restarts that ended no lower than their start.
    pub stalled_restarts: usize,
}

struct Problem {
    m: usize,
    d: usize,
    w: Vec<f64>,
    /// `G_ij = Σ_z K(x_i, y_j + z)`, row-major `m × m × d`.
    g: Vec<f64>,
    mass: f64,
    lambda: f64,
}

impl Problem {
    fn g(&self, i: usize, j: usize) -> &[f64] {
        &self.g[(i * self.m + j) * self.d..(i * self.m + j + 1) * self.d]
    }

    fn potential(&self, b: &[f64]) -> Vec<Vec<f64>> {
        (0..self.m)
            .map(|i| {
                let mut acc = vec![0.0; self.d];
                for j in 0..self.m {
                    let c = b[j] * self.w[j];
                    if c != 0.0 {
                        for (a, v) in acc.iter_mut().zip(self.g(i, j)) {
                            *a += c * v;
                        }
                    }
                }
                acc
            })
            .collect()
    }

    fn objective(&self, b: &[f64], t: &[Vec<f64>]) -> f64 {
        let bmax = b.iter().fold(0.0f64, |a, &v| a.max(v));
        let quad: f64 = (0..self.m).map(|i| self.w[i] * b[i] * t[i].iter().map(|v| v * v).sum::<f64>()).sum();
        self.lambda * bmax * self.mass + quad
    }

    /// `|Tν|²(x_k) + 2T*((Tν)ν)(x_k)`, the first variation of the quadratic part.
    fn variation(&self, b: &[f64], t: &[Vec<f64>]) -> Vec<f64> {
        (0..self.m)
            .map(|k| {
                let mut adj = 0.0;
                for i in 0..self.m {
                    let c = b[i] * self.w[i];
                    if c != 0.0 {
                        adj += c * self.g(i, k).iter().zip(&t[i]).map(|(a, v)| a * v).sum::<f64>();
                    }
                }
                t[k].iter().map(|v| v * v).sum::<f64>() + 2.0 * adj
            })
            .collect()
    }

    /// Euclidean projection onto `{0 ≤ b ≤ cap, Σ w b = mass}`.
    fn project(&self, v: &[f64], cap: f64) -> Vec<f64> {
        let mass_at = |tau: f64| -> f64 {
            v.iter().zip(&self.w).map(|(x, w)| w * (x - tau * w).clamp(0.0, cap)).sum()
        };
        let mut lo = v.iter().zip(&self.w).map(|(x, w)| (x - cap) / w).fold(f64::INFINITY, f64::min);
        let mut hi = v.iter().zip(&self.w).map(|(x, w)| x / w).fold(f64::NEG_INFINITY, f64::max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mass_at(mid) > self.mass {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let tau = 0.5 * (lo + hi);
        let mut b: Vec<f64> = v.iter().zip(&self.w).map(|(x, w)| (x - tau * w).clamp(0.0, cap)).collect();
        // Spread the remaining round-off over the unclipped coordinates.
        let free: Vec<usize> = (0..b.len()).filter(|&i| b[i] > 0.0 && b[i] < cap).collect();
        let wf: f64 = free.iter().map(|&i| self.w[i]).sum();
        if wf > 0.0 {
            let err = self.mass - b.iter().zip(&self.w).map(|(x, w)| x * w).sum::<f64>();
            for &i in &free {
                b[i] = (b[i] + err / wf).clamp(0.0, cap);
            }
        }
        b
    }
}

pub fn variational_minimize(
    eta: &DiscreteMeasure,
    q0: &Cube,
    lambda: f64,
    kernel: &dyn Kernel,
    opts: &VariationalOptions,
) -> Result<VariationalResult> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} must lie in (0, 1]")));
    }
    if !(opts.cap >= 1.0) || opts.restarts == 0 {
        return Err(Error::InvalidParameter("cap must be ≥ 1 and restarts ≥ 1".into()));
    }
    let pm = periodize_layout(eta, q0, opts.reach);
    let base = &pm.base;
    let m = base.len();
    let mass = base.total_mass();
    if m == 0 || !(mass > 0.0) {
        return Err(Error::ZeroMass("eta(Q0)".into()));
    }
    let atoms = eta.atoms_in(&crate::measure::Region::Cube(q0.clone()));
    let d = eta.dim();
    let rows = (0..m)
        .into_par_iter()
        .map(|i| {
            let x = base.point(i);
            let mut row = vec![0.0; m * d];
            for k in 0..pm.full.len() {
                let y = pm.full.point(k);
                if y == x {
                    continue;
                }
                let j = pm.source[k];
                let kv = kernel.eval(x, y)?;
                for (a, v) in row[j * d..(j + 1) * d].iter_mut().zip(&kv) {
                    *a += v;
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let p = Problem {
        m,
        d,
        w: base.weights().to_vec(),
        g: rows.concat(),
        mass,
        lambda,
    };

    let ones = vec![1.0; m];
    let t1 = p.potential(&ones);
    let j_one = p.objective(&ones, &t1);

    let runs: Vec<(Vec<f64>, f64, bool)> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                ones.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(r as u64));
                let v: Vec<f64> = (0..m).map(|_| 1.0 + 0.2 * (rng.gen::<f64>() - 0.5)).collect();
                p.project(&v, opts.cap)
            };
            let t0 = p.potential(&start);
            let j0 = p.objective(&start, &t0);
            let (mut best_b, mut best_j) = (start.clone(), j0);
            let mut b = start;
            for k in 1..=opts.iterations {
                let t = p.potential(&b);
                let var = p.variation(&b, &t);
                let bmax = b.iter().fold(0.0f64, |a, &v| a.max(v));
                let top: Vec<usize> = (0..m).filter(|&i| b[i] >= bmax * (1.0 - 1e-12)).collect();
                let mut g: Vec<f64> = (0..m).map(|i| p.w[i] * var[i]).collect();
                for &i in &top {
                    g[i] += lambda * mass / top.len() as f64;
                }
                let gmax = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if gmax == 0.0 {
                    break;
                }
                let step = opts.step / (k as f64).sqrt() / gmax;
                let v: Vec<f64> = b.iter().zip(&g).map(|(x, gi)| x - step * gi).collect();
                b = p.project(&v, opts.cap);
                let tb = p.potential(&b);
                let jb = p.objective(&b, &tb);
                if jb < best_j {
                    best_j = jb;
                    best_b = b.clone();
                }
            }
            (best_b, best_j, best_j >= j0)
        })
        .collect();

    let stalled_restarts = runs.iter().filter(|r| r.2).count();
    let restart_values: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let (mut b, mut j) = (ones.clone(), j_one);
    for (rb, rj, _) in runs {
        if rj < j {
            j = rj;
            b = rb;
        }
    }
    let t = p.potential(&b);
    let var = p.variation(&b, &t);
    let residual: Vec<f64> = var.iter().map(|v| v - 6.0 * lambda).collect();
    let residual_max = residual
        .iter()
        .zip(&b)
        .filter(|(_, &bi)| bi > 0.0)
        .fold(0.0f64, |a, (r, _)| a.max(*r));
    let mass_error = (b.iter().zip(&p.w).map(|(x, w)| x * w).sum::<f64>() - mass).abs();
    Ok(VariationalResult {
        b,
        atoms,
        j,
        j_one,
        mass_error,
        residual,
        residual_max,
        restart_values,
        stalled_restarts,
    })
}
