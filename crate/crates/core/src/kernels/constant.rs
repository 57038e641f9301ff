//! Closed-form fundamental solution `Θ(z; A₀)` of `div(A₀∇·)` and its gradient.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{dot, mat_vec, sym_eigenvalues, sym_part};

/// Constant coefficient matrix with cached symmetric-part data.
#[derive(Debug, Clone)]
pub struct ConstMatrix {
    a: DMatrix<f64>,
    sym: DMatrix<f64>,
    sym_inv: DMatrix<f64>,
    sqrt_det: f64,
}

impl ConstMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch("coefficient matrix must be square".into()));
        }
        let sym = sym_part(&a);
        let ev = sym_eigenvalues(&sym);
        if !(ev[0] > 0.0) {
            return Err(Error::NotPositiveDefinite(format!("smallest eigenvalue of A_s is {}", ev[0])));
        }
        let sym_inv = sym.clone().try_inverse().ok_or_else(|| Error::NotPositiveDefinite("singular A_s".into()))?;
        let sqrt_det = sym.determinant().sqrt();
        Ok(ConstMatrix { a, sym, sym_inv, sqrt_det })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(DMatrix::identity(d, d)).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn symmetric(&self) -> &DMatrix<f64> {
        &self.sym
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.a.transpose()).unwrap()
    }

    /// Smallest `Λ` with `Λ⁻¹|ξ|² ≤ ⟨Aξ,ξ⟩` and `⟨Aξ,η⟩ ≤ Λ|ξ||η|`.
    pub fn ellipticity(&self) -> f64 {
        let lo = sym_eigenvalues(&self.sym)[0];
        let hi = self.a.clone().svd(false, false).singular_values.max();
        (1.0 / lo).max(hi)
    }
}

/// Surface measure of the unit sphere `Sⁿ ⊂ ℝ^{n+1}`: `2π^{(n+1)/2}/Γ((n+1)/2)`.
pub fn omega_n(n: usize) -> f64 {
    use std::f64::consts::PI;
    // Γ(k/2) by the half-integer recursion.
    let k = n + 1;
    let gamma_half = |k: usize| -> f64 {
        let (mut g, mut x) = if k.is_multiple_of(2) { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
        while x + 1e-9 < k as f64 / 2.0 {
            g *= x;
            x += 1.0;
        }
        g
    };
    2.0 * PI.powf(k as f64 / 2.0) / gamma_half(k)
}

fn check(z: &[f64], a0: &ConstMatrix, n: usize) -> Result<()> {
    if z.len() != a0.dim() || n + 1 != z.len() {
        return Err(Error::DimensionMismatch(format!(
            "z has length {}, matrix is {}x{}, n = {}",
            z.len(),
            a0.dim(),
            a0.dim(),
            n
        )));
    }
    if z.iter().all(|&v| v == 0.0) {
        return Err(Error::AtPole);
    }
    Ok(())
}

/// `Θ(z; A₀)`; depends on `A₀` only through `A_{0,s}`.
pub fn theta0(z: &[f64], a0: &ConstMatrix, n: usize) -> Result<f64> {
    check(z, a0, n)?;
    let q = dot(&mat_vec(&a0.sym_inv, z), z);
    if n == 1 {
        Ok(q.ln() / (4.0 * std::f64::consts::PI * a0.sqrt_det))
    } else {
        let nm1 = (n - 1) as f64;
        Ok(-q.powf(-0.5 * nm1) / (nm1 * omega_n(n) * a0.sqrt_det))
    }
}

/// `∇Θ(z; A₀) = A_{0,s}⁻¹z / (ω_n √det A_{0,s} (A_{0,s}⁻¹z·z)^{(n+1)/2})`.
pub fn grad_theta0(z: &[f64], a0: &ConstMatrix, n: usize) -> Result<Vec<f64>> {
    check(z, a0, n)?;
    let sz = mat_vec(&a0.sym_inv, z);
    let q = dot(&sz, z);
    let c = 1.0 / (omega_n(n) * a0.sqrt_det * q.powf(0.5 * (n as f64 + 1.0)));
    Ok(sz.into_iter().map(|v| c * v).collect())
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = m as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                let (mut q0, mut q1) = (1.0, t);
                for k in 2..=m {
                    let q2 = ((2 * k - 1) as f64 * t * q1 - (k - 1) as f64 * q0) / k as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let dq = m as f64 * (t * q1 - q0) / (t * t - 1.0);
                w[i] = 2.0 / ((1.0 - t * t) * dq * dq);
                break;
            }
        }
        x[i] = t;
    }
    (x, w)
}

/// Quadrature on the unit sphere `S^{d-1}` (d ∈ {2,3,4}): `(points, weights)`.
///
/// Circle: trapezoid. 2-sphere: Gauss–Legendre in `cos θ` × trapezoid in `φ`.
/// 3-sphere: Hopf coordinates with `dS = cos a sin a da db₁ db₂`.
pub fn sphere_quadrature(d: usize, m: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    use std::f64::consts::PI;
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    match d {
        2 => {
            for k in 0..m {
                let t = 2.0 * PI * k as f64 / m as f64;
                pts.push(vec![t.cos(), t.sin()]);
                wts.push(2.0 * PI / m as f64);
            }
        }
        3 => {
            let (x, w) = gauss_legendre(m);
            let mphi = 2 * m;
            for (ci, wi) in x.iter().zip(&w) {
                let s = (1.0 - ci * ci).sqrt();
                for k in 0..mphi {
                    let p = 2.0 * PI * k as f64 / mphi as f64;
                    pts.push(vec![s * p.cos(), s * p.sin(), *ci]);
                    wts.push(wi * 2.0 * PI / mphi as f64);
                }
            }
        }
        4 => {
            let (x, w) = gauss_legendre(m);
            let mb = 2 * m;
            for (xi, wi) in x.iter().zip(&w) {
                let a = 0.25 * PI * (xi + 1.0);
                let wa = wi * 0.25 * PI * a.cos() * a.sin();
                for k1 in 0..mb {
                    let b1 = 2.0 * PI * k1 as f64 / mb as f64;
                    for k2 in 0..mb {
                        let b2 = 2.0 * PI * k2 as f64 / mb as f64;
                        pts.push(vec![a.cos() * b1.cos(), a.cos() * b1.sin(), a.sin() * b2.cos(), a.sin() * b2.sin()]);
                        wts.push(wa * (2.0 * PI / mb as f64).powi(2));
                    }
                }
            }
        }
        _ => return Err(Error::InvalidParameter(format!("sphere quadrature in dimension {d}"))),
    }
    Ok((pts, wts))
}

/// `∫_{|z|=r} A_{0,s}∇Θ(z;A₀)·ν dS`, which equals 1.
pub fn flux_through_sphere(a0: &ConstMatrix, r: f64, m: usize) -> Result<f64> {
    let d = a0.dim();
    let (pts, wts) = sphere_quadrature(d, m)?;
    let mut s = 0.0;
    for (p, w) in pts.iter().zip(&wts) {
        let z: Vec<f64> = p.iter().map(|v| r * v).collect();
        let g = grad_theta0(&z, a0, d - 1)?;
        let ag = mat_vec(a0.symmetric(), &g);
        s += w * r.powi(d as i32 - 1) * dot(&ag, p);
    }
    Ok(s)
}
