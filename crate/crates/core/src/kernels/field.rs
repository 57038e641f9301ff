//! Variable coefficient matrices `A(x)` and the transforms applied to them.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::expr::Expr;
use super::ConstMatrix;
use crate::error::{Error, Result};
use crate::linalg::{dist, spd_sqrt, sym_part};
use crate::measure::{ball_samples, AffineMap, Cube};

/// Declared regularity data of a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    /// Ellipticity constant `Λ`.
    pub lambda: f64,
    /// Hölder exponent `α`.
    pub alpha: f64,
    /// Hölder constant `C_h`.
    pub holder: f64,
    /// Period `ℓ` in every coordinate direction, if any.
    pub period: Option<f64>,
}

type Custom = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

enum Node {
    Constant(DMatrix<f64>),
    Laminate { axis: usize, profile: Expr, scale_all: bool },
    Analytic(Vec<Expr>),
    Custom(Custom),
    Symmetric(MatrixField),
    /// `factor · D(φ⁻¹) A(φx) D(φ⁻¹)ᵀ`.
    Affine { inner: MatrixField, map: AffineMap, factor: f64 },
    Periodized { inner: MatrixField, ell: f64, delta: f64 },
}

/// `x ↦ A(x)`, a `d×d` matrix field.
#[derive(Clone)]
pub struct MatrixField {
    dim: usize,
    node: Arc<Node>,
    pub meta: FieldMeta,
}

impl std::fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &*self.node {
            Node::Constant(_) => "constant",
            Node::Laminate { .. } => "laminate",
            Node::Analytic(_) => "analytic",
            Node::Custom(_) => "custom",
            Node::Symmetric(_) => "symmetric",
            Node::Affine { .. } => "affine",
            Node::Periodized { .. } => "periodized",
        };
        f.debug_struct("MatrixField")
            .field("dim", &self.dim)
            .field("kind", &kind)
            .field("meta", &self.meta)
            .finish()
    }
}

impl MatrixField {
    pub fn constant(a: DMatrix<f64>) -> Result<Self> {
        let c = ConstMatrix::new(a.clone())?;
        Ok(MatrixField {
            dim: a.nrows(),
            node: Arc::new(Node::Constant(a)),
            meta: FieldMeta {
                lambda: c.ellipticity(),
                alpha: 1.0,
                holder: 0.0,
                period: None,
            },
        })
    }

    pub fn identity(d: usize) -> Self {
        Self::constant(DMatrix::identity(d, d)).unwrap()
    }

    /// `diag(a(x), 1, …, 1)` with `a` on `axis`, or `a(x)·Id` when `scale_all`.
    pub fn laminate(dim: usize, axis: usize, profile: &str, scale_all: bool, meta: Option<FieldMeta>) -> Result<Self> {
        if axis >= dim {
            return Err(Error::InvalidParameter(format!("laminate axis {axis} in dimension {dim}")));
        }
        let profile = Expr::parse(profile)?;
        if profile.arity() > dim {
            return Err(Error::Expr("profile uses a coordinate beyond the dimension".into()));
        }
        let node = Node::Laminate {
            axis,
            profile,
            scale_all,
        };
        Self::with_meta(dim, node, meta)
    }

    /// Entries given row-major as expressions in `x1..xd`.
    pub fn analytic(dim: usize, entries: &[Vec<String>], meta: Option<FieldMeta>) -> Result<Self> {
        if entries.len() != dim || entries.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(format!("analytic field needs {dim}x{dim} entries")));
        }
        let mut ex = Vec::with_capacity(dim * dim);
        for row in entries {
            for s in row {
                let e = Expr::parse(s)?;
                if e.arity() > dim {
                    return Err(Error::Expr(format!("`{s}` uses a coordinate beyond the dimension")));
                }
                ex.push(e);
            }
        }
        Self::with_meta(dim, Node::Analytic(ex), meta)
    }

    pub fn from_fn<F>(dim: usize, f: F, meta: Option<FieldMeta>) -> Result<Self>
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::with_meta(dim, Node::Custom(Arc::new(f)), meta)
    }

    fn with_meta(dim: usize, node: Node, meta: Option<FieldMeta>) -> Result<Self> {
        let mut f = MatrixField {
            dim,
            node: Arc::new(node),
            meta: FieldMeta {
                lambda: 1.0,
                alpha: 1.0,
                holder: 0.0,
                period: None,
            },
        };
        match meta {
            Some(m) => f.meta = m,
            None => {
                let audit = audit_field(&f, &vec![0.0; dim], 1.0, 512);
                if !audit.lambda.is_finite() {
                    return Err(Error::NotPositiveDefinite("field is not elliptic on [-1,1]^d".into()));
                }
                f.meta.lambda = audit.lambda;
                f.meta.holder = audit.holder;
            }
        }
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        match &*self.node {
            Node::Constant(a) => a.clone(),
            Node::Laminate {
                axis,
                profile,
                scale_all,
            } => {
                let a = profile.eval(x);
                let mut m = if *scale_all {
                    DMatrix::identity(self.dim, self.dim) * a
                } else {
                    DMatrix::identity(self.dim, self.dim)
                };
                m[(*axis, *axis)] = a;
                m
            }
            Node::Analytic(ex) => DMatrix::from_row_iterator(self.dim, self.dim, ex.iter().map(|e| e.eval(x))),
            Node::Custom(f) => f(x),
            Node::Symmetric(inner) => sym_part(&inner.eval(x)),
            Node::Affine { inner, map, factor } => {
                let a = inner.eval(&map.apply(x));
                let dinv = map.inverse_linear();
                (dinv * a * dinv.transpose()) * *factor
            }
            Node::Periodized { inner, ell, delta } => periodized_eval(inner, *ell, *delta, x),
        }
    }

    pub fn eval_const(&self, x: &[f64]) -> Result<ConstMatrix> {
        ConstMatrix::new(self.eval(x))
    }

    pub fn is_constant(&self) -> bool {
        matches!(&*self.node, Node::Constant(_))
    }
}

/// `(A + Aᵀ)/2` pointwise.
pub fn symmetric_part(a: &MatrixField) -> MatrixField {
    MatrixField {
        dim: a.dim,
        node: Arc::new(Node::Symmetric(a.clone())),
        meta: a.meta,
    }
}

/// `A_φ = |det φ| D(φ⁻¹)(A∘φ)D(φ⁻¹)ᵀ`, so that `E_{A_φ}(x,y) = E_A(φx, φy)`.
pub fn change_of_variables(a: &MatrixField, phi: &AffineMap) -> Result<MatrixField> {
    if phi.dim() != a.dim {
        return Err(Error::DimensionMismatch("map and field dimensions differ".into()));
    }
    let factor = phi.det().abs();
    Ok(affine_node(a, phi, factor))
}

fn affine_node(a: &MatrixField, phi: &AffineMap, factor: f64) -> MatrixField {
    let s = phi.singular_values();
    let (smax, smin) = (s[0], s[s.len() - 1]);
    let lam = a.meta.lambda;
    let meta = FieldMeta {
        lambda: (smax * smax * lam / factor).max(factor * lam / (smin * smin)),
        alpha: a.meta.alpha,
        holder: factor / (smin * smin) * a.meta.holder * smax.powf(a.meta.alpha),
        period: match a.meta.period {
            Some(p) if (smax - smin).abs() <= 1e-14 * smax && is_scalar(phi) => Some(p / smax),
            _ => None,
        },
    };
    MatrixField {
        dim: a.dim,
        node: Arc::new(Node::Affine {
            inner: a.clone(),
            map: phi.clone(),
            factor,
        }),
        meta,
    }
}

fn is_scalar(phi: &AffineMap) -> bool {
    let l = phi.linear_part();
    let d = l.nrows();
    let s = l[(0, 0)];
    (0..d).all(|i| (0..d).all(|j| l[(i, j)] == if i == j { s } else { 0.0 })) && s > 0.0
}

/// `Ã = S⁻¹(A∘S)S⁻¹` with `S = √A_s(y₀)`; returns `Ã` and `x ↦ Sx`.
pub fn normalize_at(a: &MatrixField, y0: &[f64]) -> Result<(MatrixField, AffineMap)> {
    let s = spd_sqrt(&a.eval(y0))?;
    let map = AffineMap::linear(s)?;
    Ok((affine_node(a, &map, 1.0), map))
}

/// `ψ_j(x) = x + (3ℓ − 2x_j)e_j`, the reflection across `{x_j = 3ℓ/2}` (0-based `j`).
pub fn reflect_map(d: usize, j: usize, ell: f64) -> Result<AffineMap> {
    if j >= d {
        return Err(Error::InvalidParameter(format!("axis {j} in dimension {d}")));
    }
    let mut l = DMatrix::identity(d, d);
    l[(j, j)] = -1.0;
    let mut t = vec![0.0; d];
    t[j] = 3.0 * ell;
    AffineMap::new(l, t)
}

/// The periodized matrix `Ā`: interpolate to `Id` near `∂(3Q₀)`, reflect
/// across every `{x_j = 3ℓ/2}`, then extend `6ℓ`-periodically.
pub fn build_periodic_matrix(a: &MatrixField, q0: &Cube, delta: f64) -> Result<MatrixField> {
    if !(delta > 0.0 && delta < 0.1) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must lie in (0, 1/10)")));
    }
    if q0.center.len() != a.dim {
        return Err(Error::DimensionMismatch("cube and field dimensions differ".into()));
    }
    if q0.center.iter().any(|&c| c != 0.0) {
        return Err(Error::InvalidParameter("Q0 must be centered at the origin".into()));
    }
    let ell = q0.side;
    let meta = FieldMeta {
        lambda: a.meta.lambda.max(1.0),
        alpha: a.meta.alpha / 2f64.powi(a.dim as i32),
        holder: f64::NAN,
        period: Some(6.0 * ell),
    };
    Ok(MatrixField {
        dim: a.dim,
        node: Arc::new(Node::Periodized {
            inner: a.clone(),
            ell,
            delta,
        }),
        meta,
    })
}

fn periodized_eval(inner: &MatrixField, ell: f64, delta: f64, x: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    let p = 6.0 * ell;
    let half = 1.5 * ell;
    let mut y = x.to_vec();
    for v in y.iter_mut() {
        let k = ((*v + half) / p).floor();
        if k != 0.0 {
            *v -= k * p;
        }
    }
    let mut flip = vec![false; d];
    for (v, f) in y.iter_mut().zip(flip.iter_mut()) {
        if *v > half {
            *v = 3.0 * ell - *v;
            *f = true;
        }
    }
    let inf = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gap = half - inf;
    let mut m = if gap >= delta * ell {
        inner.eval(&y)
    } else {
        let s = (gap / (delta * ell)).max(0.0);
        let a = inner.eval(&y);
        let mut out = a * s;
        for i in 0..d {
            out[(i, i)] += 1.0 - s;
        }
        out
    };
    if flip.iter().any(|&f| f) {
        for i in 0..d {
            for k in 0..d {
                if flip[i] != flip[k] {
                    m[(i, k)] = -m[(i, k)];
                }
            }
        }
    }
    m
}

/// Sampled ellipticity and Hölder data of a field over a ball.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FieldAudit {
    pub lambda: f64,
    pub holder: f64,
    pub points: usize,
}

/// Estimates `Λ` and `C_h` (at the declared `α`) over `count` points of `B(center, radius)`.
pub fn audit_field(a: &MatrixField, center: &[f64], radius: f64, count: usize) -> FieldAudit {
    let unit = ball_samples(a.dim, count);
    let pts: Vec<Vec<f64>> = unit
        .iter()
        .map(|u| u.iter().zip(center).map(|(ui, ci)| ci + radius * ui).collect())
        .collect();
    let mats: Vec<DMatrix<f64>> = pts.iter().map(|p| a.eval(p)).collect();
    let mut lambda = 0.0f64;
    for m in &mats {
        match ConstMatrix::new(m.clone()) {
            Ok(c) => lambda = lambda.max(c.ellipticity()),
            Err(_) => lambda = f64::INFINITY,
        }
    }
    let mut holder = 0.0f64;
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len().min(i + 16) {
            let r = dist(&pts[i], &pts[j]);
            if r > 0.0 {
                let diff = (&mats[i] - &mats[j]).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                holder = holder.max(diff / r.powf(a.meta.alpha));
            }
        }
    }
    FieldAudit {
        lambda,
        holder,
        points: pts.len(),
    }
}

/// Largest entry of `A(x + P e_j) − A(x)` over sample points and axes.
pub fn periodicity_residual(a: &MatrixField, period: f64, pts: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for p in pts {
        let base = a.eval(p);
        for j in 0..a.dim {
            let mut q = p.clone();
            q[j] += period;
            let diff = (&a.eval(&q) - &base).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            worst = worst.max(diff);
        }
    }
    worst
}

/// JSON description of a matrix field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    Laminate {
        dim: usize,
        #[serde(default)]
        axis: usize,
        profile: String,
        #[serde(default)]
        scale_all: bool,
        #[serde(default)]
        period: Option<f64>,
    },
    Analytic {
        entries: Vec<Vec<String>>,
        #[serde(default)]
        lambda: Option<f64>,
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        holder: Option<f64>,
        #[serde(default)]
        period: Option<f64>,
    },
    Symmetric {
        base: Box<FieldSpec>,
    },
    Periodized {
        base: Box<FieldSpec>,
        side: f64,
        delta: f64,
    },
}

impl FieldSpec {
    pub fn build(&self) -> Result<MatrixField> {
        match self {
            FieldSpec::Constant { matrix } => {
                let d = matrix.len();
                if matrix.iter().any(|r| r.len() != d) {
                    return Err(Error::DimensionMismatch("constant matrix must be square".into()));
                }
                MatrixField::constant(DMatrix::from_row_iterator(d, d, matrix.iter().flatten().copied()))
            }
            FieldSpec::Laminate {
                dim,
                axis,
                profile,
                scale_all,
                period,
            } => {
                let mut f = MatrixField::laminate(*dim, *axis, profile, *scale_all, None)?;
                f.meta.period = *period;
                Ok(f)
            }
            FieldSpec::Analytic {
                entries,
                lambda,
                alpha,
                holder,
                period,
            } => {
                let d = entries.len();
                let mut f = MatrixField::analytic(d, entries, None)?;
                if let Some(a) = alpha {
                    f.meta.alpha = *a;
                    if holder.is_none() {
                        f.meta.holder = audit_field(&f, &vec![0.0; d], 1.0, 512).holder;
                    }
                }
                if let Some(l) = lambda {
                    f.meta.lambda = *l;
                }
                if let Some(h) = holder {
                    f.meta.holder = *h;
                }
                f.meta.period = *period;
                Ok(f)
            }
            FieldSpec::Symmetric { base } => Ok(symmetric_part(&base.build()?)),
            FieldSpec::Periodized { base, side, delta } => {
                let a = base.build()?;
                let q0 = Cube::new(vec![0.0; a.dim()], *side)?;
                build_periodic_matrix(&a, &q0, *delta)
            }
        }
    }
}
