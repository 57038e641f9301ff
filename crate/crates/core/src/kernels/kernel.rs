//! Kernels `K(x, y) ≈ ∇₁E_A(x, y)` used by the layer potential.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fem::{solve_fundamental, GridSolution};
use super::{grad_theta0, ConstMatrix, FieldSpec, MatrixField};
use crate::error::{Error, Result};
use crate::linalg::dist2;
use crate::measure::Cube;

pub trait Kernel: Send + Sync {
    fn dim(&self) -> usize;

    /// `K(x, y)`; errors when `x = y`.
    fn eval(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>>;

    /// Short provenance string recorded next to computed potentials.
    fn describe(&self) -> String;
}

fn diff(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch("kernel arguments differ in length".into()));
    }
    if x == y {
        return Err(Error::AtPole);
    }
    Ok(x.iter().zip(y).map(|(a, b)| a - b).collect())
}

/// `∇Θ(x − y; A₀)`.
#[derive(Debug, Clone)]
pub struct ConstKernel {
    pub a0: ConstMatrix,
}

impl ConstKernel {
    pub fn new(a0: ConstMatrix) -> Self {
        ConstKernel { a0 }
    }

    pub fn identity(d: usize) -> Self {
        ConstKernel::new(ConstMatrix::identity(d))
    }
}

impl Kernel for ConstKernel {
    fn dim(&self) -> usize {
        self.a0.dim()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        grad_theta0(&diff(x, y)?, &self.a0, self.dim() - 1)
    }

    fn describe(&self) -> String {
        format!("constant {:?}", self.a0.matrix().as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeMode {
    AtX,
    AtY,
}

/// `∇Θ(x − y; A(x))` or `∇Θ(x − y; A(y))`.
#[derive(Debug, Clone)]
pub struct FrozenKernel {
    pub field: MatrixField,
    pub mode: FreezeMode,
    constant: Option<ConstMatrix>,
}

impl FrozenKernel {
    pub fn new(field: MatrixField, mode: FreezeMode) -> Self {
        let constant = if field.is_constant() {
            field.eval_const(&vec![0.0; field.dim()]).ok()
        } else {
            None
        };
        FrozenKernel { field, mode, constant }
    }
}

impl Kernel for FrozenKernel {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let z = diff(x, y)?;
        let n = self.dim() - 1;
        match &self.constant {
            Some(a) => grad_theta0(&z, a, n),
            None => {
                let at = if self.mode == FreezeMode::AtX { x } else { y };
                grad_theta0(&z, &self.field.eval_const(at)?, n)
            }
        }
    }

    fn describe(&self) -> String {
        format!("frozen {:?} {:?}", self.mode, self.field)
    }
}

/// Single evaluation of the frozen kernel.
pub fn frozen_kernel(x: &[f64], y: &[f64], field: &MatrixField, mode: FreezeMode) -> Result<Vec<f64>> {
    let at = if mode == FreezeMode::AtX { x } else { y };
    grad_theta0(&diff(x, y)?, &field.eval_const(at)?, field.dim() - 1)
}

/// Quintic step: 0 on `[0, 1/2]`, 1 on `[1, ∞)`, `6s⁵ − 15s⁴ + 10s³` with
/// `s = 2t − 1` in between, so the junctions are C².
pub fn chi_tilde(t: f64) -> f64 {
    if t <= 0.5 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let s = 2.0 * t - 1.0;
        s * s * s * (s * (6.0 * s - 15.0) + 10.0)
    }
}

pub type Gauge = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `χ̃(|x−y|²/(Φ(x)Φ(y))) K(x, y)`.
#[derive(Clone)]
pub struct SuppressedKernel {
    pub base: Arc<dyn Kernel>,
    pub phi: Gauge,
}

impl SuppressedKernel {
    pub fn new(base: Arc<dyn Kernel>, phi: Gauge) -> Self {
        SuppressedKernel { base, phi }
    }
}

impl Kernel for SuppressedKernel {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let (px, py) = ((self.phi)(x), (self.phi)(y));
        if px < 0.0 || py < 0.0 || px.is_nan() || py.is_nan() {
            return Err(Error::InvalidParameter(format!("negative gauge value ({px}, {py})")));
        }
        let k = self.base.eval(x, y)?;
        let p = px * py;
        if p == 0.0 {
            return Ok(k);
        }
        let c = chi_tilde(dist2(x, y) / p);
        Ok(k.into_iter().map(|v| c * v).collect())
    }

    fn describe(&self) -> String {
        format!("suppressed({})", self.base.describe())
    }
}

pub fn suppressed_kernel(x: &[f64], y: &[f64], phi: &dyn Fn(&[f64]) -> f64, base: &dyn Kernel) -> Result<Vec<f64>> {
    let (px, py) = (phi(x), phi(y));
    if px < 0.0 || py < 0.0 || px.is_nan() || py.is_nan() {
        return Err(Error::InvalidParameter(format!("negative gauge value ({px}, {py})")));
    }
    let k = base.eval(x, y)?;
    let p = px * py;
    if p == 0.0 {
        return Ok(k);
    }
    let c = chi_tilde(dist2(x, y) / p);
    Ok(k.into_iter().map(|v| c * v).collect())
}

/// Largest Lipschitz quotient of `Φ` over the sampled pairs.
pub fn gauge_lipschitz(phi: &dyn Fn(&[f64]) -> f64, pts: &[Vec<f64>]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = dist2(&pts[i], &pts[j]).sqrt();
            if d > 0.0 {
                best = best.max((phi(&pts[i]) - phi(&pts[j])).abs() / d);
            }
        }
    }
    best
}

fn key(y: &[f64]) -> Vec<u64> {
    y.iter().map(|v| v.to_bits()).collect()
}

/// Grid-solved `∇₁E_A(x, y)` for a fixed set of poles `y`.
///
/// Each pole gets its own box of side `box_side` centred at the pole with
/// `cells` elements per axis; `x` must lie inside that box.
pub struct NumericKernel {
    field: MatrixField,
    solutions: HashMap<Vec<u64>, GridSolution>,
}

impl NumericKernel {
    pub fn prepare(field: &MatrixField, poles: &[Vec<f64>], box_side: f64, cells: usize) -> Result<Self> {
        let h = box_side / cells as f64;
        let sols: Vec<Result<(Vec<u64>, GridSolution)>> = poles
            .par_iter()
            .map(|y| {
                let bx = Cube::new(y.clone(), box_side)?;
                let mut s = solve_fundamental(field, y, &bx, h)?;
                // The box is centred on the pole, so the snapped pole is `y` up to round-off.
                s.pole = y.clone();
                Ok((key(y), s))
            })
            .collect();
        let mut solutions = HashMap::new();
        for s in sols {
            let (k, v) = s?;
            solutions.insert(k, v);
        }
        Ok(NumericKernel {
            field: field.clone(),
            solutions,
        })
    }

    pub fn solution(&self, y: &[f64]) -> Option<&GridSolution> {
        self.solutions.get(&key(y))
    }
}

impl Kernel for NumericKernel {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        diff(x, y)?;
        let s = self
            .solution(y)
            .ok_or_else(|| Error::InvalidParameter("numeric kernel has no solve for this pole".into()))?;
        let lo = &s.grid.origin;
        let side = s.grid.h * s.grid.n as f64;
        if x.iter().zip(lo).any(|(xi, l)| *xi < *l || *xi > l + side) {
            return Err(Error::InvalidParameter("evaluation point outside the pole's solve box".into()));
        }
        Ok(s.gradient_at(x))
    }

    fn describe(&self) -> String {
        format!("numeric {:?} over {} poles", self.field, self.solutions.len())
    }
}

/// Serializable kernel description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Frozen {
        field: FieldSpec,
        #[serde(default = "default_mode")]
        mode: FreezeMode,
    },
    Numeric {
        field: FieldSpec,
        box_side: f64,
        #[serde(default = "default_cells")]
        cells: usize,
    },
    Suppressed {
        base: Box<KernelSpec>,
        /// `Φ(x) = scale · dist(x, {x_d = 0})`, a 1-Lipschitz gauge when `scale ≤ 1`.
        scale: f64,
    },
}

fn default_mode() -> FreezeMode {
    FreezeMode::AtX
}

fn default_cells() -> usize {
    64
}

impl KernelSpec {
    pub fn identity(d: usize) -> Self {
        KernelSpec::Frozen {
            field: FieldSpec::Constant {
                matrix: (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
            },
            mode: FreezeMode::AtX,
        }
    }

    /// Hölder exponent `α` of the underlying coefficient field.
    pub fn holder_alpha(&self) -> Result<f64> {
        match self {
            KernelSpec::Frozen { field, .. } | KernelSpec::Numeric { field, .. } => Ok(field.build()?.meta.alpha),
            KernelSpec::Suppressed { base, .. } => base.holder_alpha(),
        }
    }

    /// Builds the kernel; numeric kernels are prepared for `poles`.
    pub fn build(&self, poles: &[Vec<f64>]) -> Result<Arc<dyn Kernel>> {
        Ok(match self {
            KernelSpec::Frozen { field, mode } => Arc::new(FrozenKernel::new(field.build()?, *mode)),
            KernelSpec::Numeric { field, box_side, cells } => {
                Arc::new(NumericKernel::prepare(&field.build()?, poles, *box_side, *cells)?)
            }
            KernelSpec::Suppressed { base, scale } => {
                if !(0.0..=1.0).contains(scale) {
                    return Err(Error::InvalidParameter(format!("gauge scale {scale} must lie in [0, 1]")));
                }
                let s = *scale;
                let phi: Gauge = Arc::new(move |x: &[f64]| s * x[x.len() - 1].abs());
                Arc::new(SuppressedKernel::new(base.build(poles)?, phi))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::omega_n;

    #[test]
    fn chi_tilde_profile() {
        assert_eq!(chi_tilde(0.3), 0.0);
        assert_eq!(chi_tilde(0.5), 0.0);
        assert_eq!(chi_tilde(1.0), 1.0);
        assert_eq!(chi_tilde(f64::INFINITY), 1.0);
        assert!((chi_tilde(0.75) - 0.5).abs() < 1e-15);
        let ts: Vec<f64> = (0..=100).map(|i| 0.5 + i as f64 / 200.0).collect();
        assert!(ts.windows(2).all(|w| chi_tilde(w[0]) <= chi_tilde(w[1])));
    }

    #[test]
    fn identity_frozen_is_riesz() {
        let k = FrozenKernel::new(MatrixField::identity(3), FreezeMode::AtY);
        let v = k.eval(&[1.0, 2.0, 2.0], &[0.0; 3]).unwrap();
        let c = 1.0 / (omega_n(2) * 27.0);
        assert!((v[0] - c).abs() < 1e-16 && (v[1] - 2.0 * c).abs() < 1e-16);
        assert!(matches!(k.eval(&[0.0; 3], &[0.0; 3]), Err(Error::AtPole)));
    }

    #[test]
    fn suppression_support() {
        let base: Arc<dyn Kernel> = Arc::new(ConstKernel::identity(2));
        let zero = SuppressedKernel::new(base.clone(), Arc::new(|_: &[f64]| 0.0));
        let x = [0.3, 0.1];
        let y = [0.0, 0.0];
        assert_eq!(zero.eval(&x, &y).unwrap(), base.eval(&x, &y).unwrap());
        let big = SuppressedKernel::new(base.clone(), Arc::new(|_: &[f64]| 1.0));
        assert_eq!(big.eval(&x, &y).unwrap(), vec![0.0, 0.0]);
        let neg = SuppressedKernel::new(base, Arc::new(|_: &[f64]| -1.0));
        assert!(neg.eval(&x, &y).is_err());
    }

    #[test]
    fn spec_roundtrip() {
        let s = KernelSpec::identity(2);
        let j = serde_json::to_string(&s).unwrap();
        let back: KernelSpec = serde_json::from_str(&j).unwrap();
        let k = back.build(&[]).unwrap();
        assert_eq!(k.dim(), 2);
    }
}
