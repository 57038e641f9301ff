//! Truncated, smoothed and averaged layer potentials `Tμ(x) = ∫K(x,y) dμ(y)`
//! over discrete measures, plus norms and quadratic functionals built on them.

mod norm;
mod variational;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::linalg::{dist, norm as vnorm};
use crate::measure::{Ball, Cube, DiscreteMeasure, PeriodicMeasure, Region};

pub use norm::{kernel_matrix, operator_norm, schur_bound, KernelMatrix, NormEstimate, POWER_ITERATION_CAP, POWER_TOL};
pub use variational::{variational_minimize, VariationalOptions, VariationalResult};

/// Per-atom vector values of a potential with the data that produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PotentialField {
    pub values: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub kernel: String,
    pub truncation: String,
    pub measure_hash: String,
}

/// Strictly monotone list of positive truncation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationSchedule {
    pub values: Vec<f64>,
    pub tol: f64,
}

impl TruncationSchedule {
    fn checked(values: Vec<f64>, tol: f64, decreasing: bool) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("schedule entries must be finite and positive".into()));
        }
        let ok = values.windows(2).all(|w| if decreasing { w[1] < w[0] } else { w[1] > w[0] });
        if !ok {
            return Err(Error::InvalidParameter("schedule must be strictly monotone".into()));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
        }
        Ok(TruncationSchedule { values, tol })
    }

    pub fn decreasing(values: Vec<f64>, tol: f64) -> Result<Self> {
        Self::checked(values, tol, true)
    }

    pub fn increasing(values: Vec<f64>, tol: f64) -> Result<Self> {
        Self::checked(values, tol, false)
    }

    /// `start, start·ratio, …` (`count` terms).
    pub fn geometric(start: f64, ratio: f64, count: usize, tol: f64) -> Result<Self> {
        let values: Vec<f64> = (0..count).map(|i| start * ratio.powi(i as i32)).collect();
        Self::checked(values.clone(), tol, ratio < 1.0).or_else(|_| Self::checked(values, tol, false))
    }
}

fn add_scaled(acc: &mut [f64], v: &[f64], c: f64) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += c * b;
    }
}

fn check_f(mu: &DiscreteMeasure, f: &[f64]) -> Result<()> {
    if f.len() != mu.len() {
        return Err(Error::DimensionMismatch(format!("{} function values for {} atoms", f.len(), mu.len())));
    }
    Ok(())
}

/// `Σ_{|x−y_i|>ε} K(x,y_i) f(y_i) w_i`, the atom at `x` (if any) excluded.
pub fn t_eps(mu: &DiscreteMeasure, f: &[f64], x: &[f64], eps: f64, kernel: &dyn Kernel) -> Result<Vec<f64>> {
    check_f(mu, f)?;
    let mut acc = vec![0.0; mu.dim()];
    for i in 0..mu.len() {
        let y = mu.point(i);
        if f[i] == 0.0 || y == x || dist(x, y) <= eps {
            continue;
        }
        add_scaled(&mut acc, &kernel.eval(x, y)?, f[i] * mu.weight(i));
    }
    Ok(acc)
}

/// `t_eps` at every atom, parallel over targets.
pub fn t_eps_field(mu: &DiscreteMeasure, f: &[f64], eps: f64, kernel: &dyn Kernel) -> Result<PotentialField> {
    let values = (0..mu.len())
        .into_par_iter()
        .map(|i| t_eps(mu, f, mu.point(i), eps, kernel))
        .collect::<Result<Vec<_>>>()?;
    Ok(PotentialField {
        values,
        provenance: Provenance {
            kernel: kernel.describe(),
            truncation: format!("eps={eps:e}"),
            measure_hash: mu.content_hash(),
        },
    })
}

/// Radial cutoff: 1 on `[0,1]`, 0 on `[2,∞)`, `1 − 3s² + 2s³` with `s = t − 1` between (C¹).
pub fn bump(t: f64) -> f64 {
    if t <= 1.0 {
        1.0
    } else if t >= 2.0 {
        0.0
    } else {
        let s = t - 1.0;
        1.0 - s * s * (3.0 - 2.0 * s)
    }
}

/// `Σ K(x,y_i) φ(|x−y_i|/r) f(y_i) w_i`, diagonal excluded.
pub fn t_smooth(mu: &DiscreteMeasure, f: &[f64], x: &[f64], r: f64, kernel: &dyn Kernel) -> Result<Vec<f64>> {
    check_f(mu, f)?;
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("r = {r} must be positive")));
    }
    let mut acc = vec![0.0; mu.dim()];
    for i in 0..mu.len() {
        let y = mu.point(i);
        if f[i] == 0.0 || y == x {
            continue;
        }
        let c = bump(dist(x, y) / r);
        if c == 0.0 {
            continue;
        }
        add_scaled(&mut acc, &kernel.eval(x, y)?, c * f[i] * mu.weight(i));
    }
    Ok(acc)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PvEstimate {
    pub value: Vec<f64>,
    pub converged: bool,
    /// Truncations actually used (those at or above the floor).
    pub eps: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// `|T_{ε_{i+1}} − T_{ε_i}|`.
    pub diffs: Vec<f64>,
    pub floor: f64,
}

/// Principal-value estimate along a decreasing schedule.
///
/// Truncations below half the distance from `x` to its nearest other atom
/// change nothing and are dropped; if the whole schedule is below that
/// floor the floor itself is used.
pub fn pv_estimate(
    mu: &DiscreteMeasure,
    f: &[f64],
    x: &[f64],
    schedule: &TruncationSchedule,
    kernel: &dyn Kernel,
) -> Result<PvEstimate> {
    let floor = 0.5 * mu.gap_near(x);
    let mut eps: Vec<f64> = schedule.values.iter().copied().filter(|&e| e >= floor).collect();
    if eps.is_empty() {
        eps.push(floor);
    }
    let values = eps.iter().map(|&e| t_eps(mu, f, x, e, kernel)).collect::<Result<Vec<_>>>()?;
    let diffs: Vec<f64> = values
        .windows(2)
        .map(|w| vnorm(&w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect::<Vec<_>>()))
        .collect();
    let converged = diffs.last().is_some_and(|&d| d <= schedule.tol);
    Ok(PvEstimate {
        value: values.last().cloned().unwrap_or_default(),
        converged,
        eps,
        values,
        diffs,
        floor,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeakLimit {
    pub value: Vec<f64>,
    /// `(r, average)` along the schedule.
    pub sequence: Vec<(f64, Vec<f64>)>,
}

/// `⨍_{B(x,r)} T_μ(f χ_{B(x,r)^c})(y) dμ(y)` along a decreasing `r` schedule.
pub fn weak_limit(
    mu: &DiscreteMeasure,
    f: &[f64],
    x: &[f64],
    radii: &TruncationSchedule,
    kernel: &dyn Kernel,
) -> Result<WeakLimit> {
    check_f(mu, f)?;
    let mut sequence = Vec::with_capacity(radii.values.len());
    for &r in &radii.values {
        let ball = Region::Ball(Ball::new(x.to_vec(), r)?);
        let inside = mu.atoms_in(&ball);
        let mass: f64 = inside.iter().map(|&i| mu.weight(i)).sum();
        if inside.is_empty() || !(mass > 0.0) {
            return Err(Error::ZeroMass(format!("averaging ball of radius {r}")));
        }
        let mut member = vec![false; mu.len()];
        for &i in &inside {
            member[i] = true;
        }
        let exterior: Vec<usize> = (0..mu.len()).filter(|&j| !member[j] && f[j] != 0.0).collect();
        let per_atom = inside
            .par_iter()
            .map(|&i| {
                let y = mu.point(i);
                let mut acc = vec![0.0; mu.dim()];
                for &j in &exterior {
                    add_scaled(&mut acc, &kernel.eval(y, mu.point(j))?, f[j] * mu.weight(j));
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut avg = vec![0.0; mu.dim()];
        for (&i, v) in inside.iter().zip(&per_atom) {
            add_scaled(&mut avg, v, mu.weight(i) / mass);
        }
        sequence.push((r, avg));
    }
    Ok(WeakLimit {
        value: sequence.last().map(|s| s.1.clone()).unwrap_or_default(),
        sequence,
    })
}

/// `max_ε |T_ε μ(x)|` over `eps_grid`.
pub fn t_star_maximal(mu: &DiscreteMeasure, x: &[f64], eps_grid: &[f64], kernel: &dyn Kernel) -> Result<f64> {
    if eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParameter("truncations must be positive".into()));
    }
    // Contributions sorted by distance, summed from the far end.
    let mut terms: Vec<(f64, Vec<f64>)> = Vec::with_capacity(mu.len());
    for i in 0..mu.len() {
        let y = mu.point(i);
        if y == x {
            continue;
        }
        let mut k = kernel.eval(x, y)?;
        k.iter_mut().for_each(|v| *v *= mu.weight(i));
        terms.push((dist(x, y), k));
    }
    terms.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut grid: Vec<f64> = eps_grid.to_vec();
    grid.sort_by(|a, b| b.total_cmp(a));
    let mut acc = vec![0.0; mu.dim()];
    let mut best = 0.0f64;
    let mut next = 0;
    for e in grid {
        while next < terms.len() && terms[next].0 > e {
            add_scaled(&mut acc, &terms[next].1, 1.0);
            next += 1;
        }
        best = best.max(vnorm(&acc));
    }
    Ok(best)
}

/// `Σ_{|x−y_i|>ε} K(y_i,x)·ξ_i w_i`.
pub fn adjoint_apply(mu: &DiscreteMeasure, xi: &[Vec<f64>], x: &[f64], eps: f64, kernel: &dyn Kernel) -> Result<f64> {
    if xi.len() != mu.len() {
        return Err(Error::DimensionMismatch(format!("{} vectors for {} atoms", xi.len(), mu.len())));
    }
    let mut acc = 0.0;
    for i in 0..mu.len() {
        let y = mu.point(i);
        if y == x || dist(x, y) <= eps || xi[i].iter().all(|&v| v == 0.0) {
            continue;
        }
        let k = kernel.eval(y, x)?;
        acc += mu.weight(i) * k.iter().zip(&xi[i]).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(acc)
}

/// `Σ_{x∈R} w_x |F(x) − m|²` with `m` the weighted mean of `F` over `R`.
pub fn oscillation(mu: &DiscreteMeasure, region: &Region, field: &PotentialField) -> Result<f64> {
    if field.values.len() != mu.len() {
        return Err(Error::DimensionMismatch("field length differs from atom count".into()));
    }
    let m = mu.mean(region, &field.values)?;
    Ok(mu
        .atoms_in(region)
        .iter()
        .map(|&i| mu.weight(i) * field.values[i].iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Localization {
    /// `∫_{Q₀} |T(χ_{MQ₀}μ)|² dμ`.
    pub lhs: f64,
    pub mass: f64,
}

pub fn localization_lhs(mu: &DiscreteMeasure, q0: &Cube, m: f64, kernel: &dyn Kernel) -> Result<Localization> {
    if !(m >= 1.0) {
        return Err(Error::InvalidParameter(format!("M = {m} must be at least 1")));
    }
    let targets = mu.atoms_in(&Region::Cube(q0.clone()));
    let mass: f64 = targets.iter().map(|&i| mu.weight(i)).sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass("Q0".into()));
    }
    let near = mu.atoms_in(&Region::Cube(q0.dilate(m)));
    let local = mu.select(&near);
    let ones = vec![1.0; local.len()];
    let vals = targets
        .par_iter()
        .map(|&i| {
            let v = t_eps(&local, &ones, mu.point(i), 0.0, kernel)?;
            Ok(mu.weight(i) * v.iter().map(|a| a * a).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Localization {
        lhs: vals.iter().sum(),
        mass,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FarField {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

fn check_reach(pm: &PeriodicMeasure, needed: f64) -> Result<()> {
    if pm.max_offset() + 0.5 * pm.period() < needed {
        return Err(Error::InvalidParameter(format!(
            "periodization reaches {} but {} is needed",
            pm.max_offset() + 0.5 * pm.period(),
            needed
        )));
    }
    Ok(())
}

/// Compares `|T(χ_{(M̃Q₀)^c} f η)(x)|` with `M̃^{-γ} ℓ(Q₀)^{-n} ∫_{Q₀}|f| dη`.
///
/// `f` is given on the base atoms and extended periodically. The exterior sum
/// runs over the copies present in `pm`, which must extend at least one
/// period beyond `M̃Q₀`.
pub fn far_field_check(
    pm: &PeriodicMeasure,
    mtilde: usize,
    f: &[f64],
    x: &[f64],
    gamma: f64,
    kernel: &dyn Kernel,
) -> Result<FarField> {
    if mtilde == 0 || !mtilde.is_multiple_of(6) || (mtilde / 6).is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("M̃ = {mtilde} must be an odd multiple of 6")));
    }
    if f.len() != pm.base.len() {
        return Err(Error::DimensionMismatch("f must have one value per base atom".into()));
    }
    if !pm.q0.dilate(2.0).contains(x) {
        return Err(Error::InvalidParameter("x must lie in 2Q0".into()));
    }
    let ell = pm.q0.side;
    check_reach(pm, 0.5 * mtilde as f64 * ell + pm.period())?;
    let big = pm.q0.dilate(mtilde as f64);
    let mut acc = vec![0.0; pm.full.dim()];
    for i in 0..pm.full.len() {
        let y = pm.full.point(i);
        let fv = f[pm.source[i]];
        if fv == 0.0 || big.contains(y) {
            continue;
        }
        add_scaled(&mut acc, &kernel.eval(x, y)?, fv * pm.full.weight(i));
    }
    let lhs = vnorm(&acc);
    let l1: f64 = (0..pm.base.len()).map(|i| f[i].abs() * pm.base.weight(i)).sum();
    let rhs = (mtilde as f64).powf(-gamma) * ell.powi(-(pm.base.n() as i32)) * l1;
    Ok(FarField {
        lhs,
        rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmoothLimit {
    pub diff: f64,
    pub bound: f64,
}

/// `|T̃_r(fη)(x) − T̃_s(fη)(x)|` against `c_F r^{-γ} ‖f‖_∞`.
#[allow(clippy::too_many_arguments)]
pub fn smooth_limit_check(
    pm: &PeriodicMeasure,
    f: &[f64],
    x: &[f64],
    r: f64,
    s: f64,
    c_f: f64,
    gamma: f64,
    kernel: &dyn Kernel,
) -> Result<SmoothLimit> {
    if !(r > 0.0 && s >= r) {
        return Err(Error::InvalidParameter(format!("need 0 < r ≤ s, got r={r}, s={s}")));
    }
    if f.len() != pm.base.len() {
        return Err(Error::DimensionMismatch("f must have one value per base atom".into()));
    }
    let reach_x = x.iter().take(pm.base.n()).fold(0.0f64, |m, v| m.max(v.abs()));
    check_reach(pm, 2.0 * s + reach_x)?;
    let full_f: Vec<f64> = pm.source.iter().map(|&i| f[i]).collect();
    let a = t_smooth(&pm.full, &full_f, x, r, kernel)?;
    let b = t_smooth(&pm.full, &full_f, x, s, kernel)?;
    let diff = vnorm(&a.iter().zip(&b).map(|(p, q)| p - q).collect::<Vec<_>>());
    let sup = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(SmoothLimit {
        diff,
        bound: c_f * r.powf(-gamma) * sup,
    })
}
