//! Hypothesis checkers for the ball criterion, the cube Main Lemma and the
//! density-scaled ball criterion, plus batch scans over balls.
//!
//! Checkers only evaluate hypotheses and report margins. The conclusions of
//! the corresponding theorems are existential and never asserted.

mod generate;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coeffs::{alpha_plane, beta1, beta1_plane, default_lambdas, p_density, thin_boundary_constant};
use crate::coeffs::{Beta1, Beta1Options, Hyperplane, PlaneMode};
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelSpec};
use crate::measure::{Ball, Cube, DiscreteMeasure, Region};
use crate::potential::{operator_norm, t_eps, t_star_maximal};

pub use generate::{generate, GeneratorSpec};

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Relative tolerance for the normalization `μ(Q₀) = ℓ(Q₀)ⁿ`.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CriterionConfig {
    pub c0: f64,
    pub c1: f64,
    pub lambda: f64,
    pub delta: f64,
    pub eps: f64,
    pub tau: f64,
    /// Defaults to `α/2^{n+1}`, `α` the Hölder exponent of the kernel's field.
    pub alpha_tilde: Option<f64>,
    /// Main Lemma dilation `M`.
    pub m: f64,
    /// Defaults to the identity kernel in the ambient dimension of the measure.
    pub kernel: Option<KernelSpec>,
    pub beta_mode: PlaneMode,
    pub beta_level: u32,
    pub beta_restarts: usize,
    pub seed: u64,
    /// The α-number uses grid spacing `ℓ(3MQ₀)/alpha_cells`.
    pub alpha_cells: usize,
    /// Growth and maximal-function radii are `top·2^{-k}` for `k < growth_levels`.
    pub growth_levels: usize,
    /// λ grid for the thin-boundary constant.
    pub lambdas: Vec<f64>,
    /// Truncation of the operator-norm matrix; `None` for half the minimal gap.
    pub eps0: Option<f64>,
}

impl Default for CriterionConfig {
    fn default() -> Self {
        CriterionConfig {
            c0: 4.0,
            c1: 2.0,
            lambda: 1.0,
            delta: 0.1,
            eps: 0.05,
            tau: 0.05,
            alpha_tilde: None,
            m: 4.0,
            kernel: None,
            beta_mode: PlaneMode::Heuristic,
            beta_level: 4,
            beta_restarts: 20,
            seed: 0,
            alpha_cells: 16,
            growth_levels: 6,
            lambdas: default_lambdas(),
            eps0: None,
        }
    }
}

impl CriterionConfig {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("c0", self.c0),
            ("c1", self.c1),
            ("lambda", self.lambda),
            ("delta", self.delta),
            ("eps", self.eps),
            ("tau", self.tau),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.m >= 1.0) {
            return Err(Error::InvalidParameter(format!("M = {} must be at least 1", self.m)));
        }
        if self.alpha_cells < 2 || self.growth_levels == 0 || self.lambdas.is_empty() {
            return Err(Error::InvalidParameter(
                "alpha_cells ≥ 2, growth_levels ≥ 1 and a nonempty λ grid are required".into(),
            ));
        }
        if let Some(a) = self.alpha_tilde {
            if !(a > 0.0) {
                return Err(Error::InvalidParameter(format!("alpha_tilde = {a} must be positive")));
            }
        }
        Ok(())
    }

    /// SHA-256 prefix of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        Sha256::digest(json.as_bytes()).iter().take(16).map(|b| format!("{b:02x}")).collect()
    }

    pub fn kernel_spec(&self, d: usize) -> KernelSpec {
        self.kernel.clone().unwrap_or_else(|| KernelSpec::identity(d))
    }

    /// `α̃`, checked against `(0, α]`.
    pub fn resolved_alpha_tilde(&self, n: usize, d: usize) -> Result<f64> {
        let alpha = self.kernel_spec(d).holder_alpha()?;
        let a = self.alpha_tilde.unwrap_or(alpha / 2f64.powi(n as i32 + 1));
        if !(a > 0.0 && a <= alpha) {
            return Err(Error::InvalidParameter(format!("alpha_tilde = {a} must lie in (0, {alpha}]")));
        }
        Ok(a)
    }

    fn beta_options(&self) -> Beta1Options {
        Beta1Options {
            restarts: self.beta_restarts,
            level: self.beta_level,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    /// Positive when the hypothesis holds with room to spare.
    pub margin: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

impl Hypothesis {
    /// `measured ≤ threshold`.
    fn upper(name: &str, measured: f64, threshold: f64) -> Self {
        Hypothesis {
            name: name.into(),
            measured,
            threshold,
            margin: threshold - measured,
            pass: measured <= threshold,
            flag: None,
        }
        .sanitized()
    }

    fn with_flag(mut self, flag: impl Into<String>) -> Self {
        self.flag = Some(flag.into());
        self
    }

    fn failed(mut self) -> Self {
        self.pass = false;
        self
    }

    /// Replaces non-finite numbers by `f64::MAX` and flags them, so that
    /// reports stay valid JSON.
    fn sanitized(mut self) -> Self {
        let bad = !self.measured.is_finite() || !self.threshold.is_finite() || !self.margin.is_finite();
        if bad {
            let fix = |v: f64| if v.is_finite() { v } else { f64::MAX.copysign(v) };
            self.measured = fix(self.measured);
            self.threshold = fix(self.threshold);
            self.margin = fix(self.margin);
            self.pass = false;
            if self.flag.is_none() {
                self.flag = Some("non-finite value".into());
            }
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Checker {
    Ball,
    MainLemma,
    DensityScaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub schema: u32,
    pub checker: Checker,
    pub center: Vec<f64>,
    /// Radius of the ball, or side of `Q₀`.
    pub size: f64,
    pub hypotheses: Vec<Hypothesis>,
    /// Auxiliary measured quantities.
    pub details: BTreeMap<String, f64>,
    pub overall: bool,
    pub config_hash: String,
    pub measure_hash: String,
}

impl CriterionReport {
    fn new(
        checker: Checker,
        center: Vec<f64>,
        size: f64,
        hypotheses: Vec<Hypothesis>,
        details: BTreeMap<String, f64>,
        cfg: &CriterionConfig,
        mu: &DiscreteMeasure,
    ) -> Self {
        let details = details
            .into_iter()
            .map(|(k, v)| if v.is_finite() { (k, v) } else { (format!("{k}_nonfinite"), f64::MAX) })
            .collect();
        CriterionReport {
            schema: SCHEMA_VERSION,
            checker,
            center,
            size,
            overall: hypotheses.iter().all(|h| h.pass),
            hypotheses,
            details,
            config_hash: cfg.hash(),
            measure_hash: mu.content_hash(),
        }
    }

    pub fn hypothesis(&self, name: &str) -> Option<&Hypothesis> {
        self.hypotheses.iter().find(|h| h.name == name)
    }

    /// The `k`-th hypothesis, 1-based as in the statements.
    pub fn nth(&self, k: usize) -> Option<&Hypothesis> {
        k.checked_sub(1).and_then(|i| self.hypotheses.get(i))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports contain only finite numbers")
    }
}

/// `max μ(B(x,ρ))/ρⁿ` over `x` in `atoms` and `ρ = top·2^{-k}`, `k < levels`.
fn max_growth(mu: &DiscreteMeasure, atoms: &[usize], top: f64, levels: usize) -> f64 {
    let n = mu.n() as i32;
    atoms
        .par_iter()
        .map(|&i| {
            (0..levels)
                .map(|k| {
                    let rho = top * 0.5f64.powi(k as i32);
                    mu.mass_in(&Region::Ball(Ball {
                        center: mu.point(i).to_vec(),
                        radius: rho,
                    })) / rho.powi(n)
                })
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// `Tμ(x)` at each listed atom (self-interaction excluded).
fn potential_at(mu: &DiscreteMeasure, atoms: &[usize], kernel: &dyn Kernel) -> Result<Vec<Vec<f64>>> {
    let ones = vec![1.0; mu.len()];
    atoms.par_iter().map(|&i| t_eps(mu, &ones, mu.point(i), 0.0, kernel)).collect()
}

/// `Σ w|F − m|²` with `m` the weighted mean over the listed atoms.
fn oscillation_of(mu: &DiscreteMeasure, atoms: &[usize], values: &[Vec<f64>]) -> f64 {
    let mass: f64 = atoms.iter().map(|&i| mu.weight(i)).sum();
    let d = mu.dim();
    let mut mean = vec![0.0; d];
    for (&i, v) in atoms.iter().zip(values) {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += mu.weight(i) * x / mass;
        }
    }
    atoms
        .iter()
        .zip(values)
        .map(|(&i, v)| mu.weight(i) * v.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum()
}

fn norm_hypothesis(name: &str, mu: &DiscreteMeasure, region: &Region, kernel: &dyn Kernel, cfg: &CriterionConfig) -> Result<Hypothesis> {
    match operator_norm(mu, region, kernel, cfg.eps0) {
        Ok(est) => Ok(Hypothesis::upper(name, est.norm, cfg.c1)),
        Err(Error::NonConvergence(msg)) => Ok(Hypothesis::upper(name, f64::INFINITY, cfg.c1).with_flag(msg)),
        Err(e) => Err(e),
    }
}

fn best_plane(mu: &DiscreteMeasure, ball: &Ball, cfg: &CriterionConfig) -> Result<Beta1> {
    beta1(mu, ball, cfg.beta_mode, &cfg.beta_options())
}

fn all_poles(mu: &DiscreteMeasure) -> Vec<Vec<f64>> {
    mu.points().map(|p| p.to_vec()).collect()
}

/// Hypotheses (1)–(6) of the ball criterion.
pub fn check_ball(mu: &DiscreteMeasure, ball: &Ball, cfg: &CriterionConfig) -> Result<CriterionReport> {
    cfg.validate()?;
    let region = Region::Ball(ball.clone());
    let inb = mu.atoms_in(&region);
    let mass: f64 = inb.iter().map(|&i| mu.weight(i)).sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass("B".into()));
    }
    let (n, d, r) = (mu.n(), mu.dim(), ball.radius);
    let at = cfg.resolved_alpha_tilde(n, d)?;
    let kernel = cfg.kernel_spec(d).build(&all_poles(mu))?;
    let mut details = BTreeMap::new();
    let mut hs = Vec::with_capacity(6);

    hs.push(Hypothesis::upper("radius", r, cfg.lambda));

    let dens = mass / r.powi(n as i32);
    hs.push(
        Hypothesis {
            name: "mass_comparable".into(),
            measured: dens,
            threshold: cfg.c0,
            margin: (cfg.c0 - dens).min(dens - 1.0 / cfg.c0),
            pass: dens <= cfg.c0 && dens >= 1.0 / cfg.c0,
            flag: None,
        }
        .sanitized(),
    );

    let p = p_density(mu, &region, at)?;
    let growth = max_growth(mu, &inb, r, cfg.growth_levels);
    details.insert("p_density".into(), p);
    details.insert("growth_max".into(), growth);
    details.insert("alpha_tilde".into(), at);
    hs.push(Hypothesis::upper("density_growth", p.max(growth), cfg.c0));

    let mut h4 = norm_hypothesis("operator_norm", mu, &region, kernel.as_ref(), cfg)?;
    let sub2 = mu.restrict(&Region::Ball(ball.dilate(2.0)));
    let local: Vec<usize> = sub2.atoms_in(&region);
    let t2 = potential_at(&sub2, &local, kernel.as_ref())?;
    let l2: f64 = local.iter().zip(&t2).map(|(&i, v)| sub2.weight(i) * v.iter().map(|a| a * a).sum::<f64>()).sum();
    details.insert("t_2b_l2".into(), l2);
    if !l2.is_finite() {
        h4 = h4.failed().with_flag("T(χ_2B μ) is not finite on B");
    }
    hs.push(h4);

    let b = best_plane(mu, ball, cfg)?;
    if let Some(lb) = b.lower_bound {
        details.insert("beta1_lower_bound".into(), lb);
    }
    hs.push(Hypothesis::upper("beta1", b.value, cfg.delta));

    let t = potential_at(mu, &inb, kernel.as_ref())?;
    let osc = oscillation_of(mu, &inb, &t);
    details.insert("oscillation".into(), osc);
    hs.push(Hypothesis::upper("oscillation", osc / mass, cfg.eps));

    Ok(CriterionReport::new(Checker::Ball, ball.center.clone(), r, hs, details, cfg, mu))
}

/// Hypotheses (1)–(8) of the Main Lemma on a cube centered at the origin.
///
/// The measure is first rescaled so that `μ(Q₀) = ℓ(Q₀)ⁿ`; the report's
/// measure hash refers to the rescaled measure.
pub fn check_cube_mainlemma(mu: &DiscreteMeasure, q0: &Cube, cfg: &CriterionConfig) -> Result<CriterionReport> {
    cfg.validate()?;
    if q0.center.iter().any(|c| *c != 0.0) {
        return Err(Error::InvalidParameter("Q0 must be centered at the origin; translate the measure first".into()));
    }
    let region = Region::Cube(q0.clone());
    let raw = mu.mass_in(&region);
    if !(raw > 0.0) {
        return Err(Error::ZeroMass("Q0".into()));
    }
    let (n, d, ell) = (mu.n(), mu.dim(), q0.side);
    let at = cfg.resolved_alpha_tilde(n, d)?;
    let scale = ell.powi(n as i32) / raw;
    let mu = mu.scaled(scale)?;
    let kernel = cfg.kernel_spec(d).build(&all_poles(&mu))?;
    let mut details = BTreeMap::new();
    details.insert("normalization".into(), scale);
    details.insert("alpha_tilde".into(), at);
    let mut hs = Vec::with_capacity(8);

    hs.push(Hypothesis::upper("side", cfg.m * ell, cfg.lambda));

    let dev = (mu.mass_in(&region) / ell.powi(n as i32) - 1.0).abs();
    hs.push(Hypothesis::upper("normalized_mass", dev, NORMALIZATION_TOL));

    let mq = Region::Cube(q0.dilate(cfg.m));
    hs.push(Hypothesis::upper("p_density", p_density(&mu, &mq, at)?, cfg.c0));

    let in2 = mu.atoms_in(&Region::Cube(q0.dilate(2.0)));
    hs.push(Hypothesis::upper("growth", max_growth(&mu, &in2, ell, cfg.growth_levels), cfg.c0));

    hs.push(Hypothesis::upper("thin_boundary", thin_boundary_constant(&mu, q0, &cfg.lambdas)?, cfg.c0));

    // Plane through the origin with the β₁-optimal normal.
    let big = q0.dilate(3.0 * cfg.m);
    let b = best_plane(&mu, &Ball::new(vec![0.0; d], 0.5 * big.side)?, cfg)?;
    let plane = Hyperplane::new(b.plane.normal.clone(), 0.0)?;
    let a = alpha_plane(&mu, &big, &plane, big.side / cfg.alpha_cells as f64)?;
    details.insert("alpha_c".into(), a.c);
    hs.push(Hypothesis::upper("alpha", a.alpha, cfg.delta));

    hs.push(norm_hypothesis("operator_norm", &mu, &Region::Cube(q0.dilate(2.0)), kernel.as_ref(), cfg)?);

    let inq = mu.atoms_in(&region);
    let t = potential_at(&mu, &inq, kernel.as_ref())?;
    let mass_q = mu.mass_in(&region);
    hs.push(Hypothesis::upper("oscillation", oscillation_of(&mu, &inq, &t) / mass_q, cfg.eps));

    Ok(CriterionReport::new(Checker::MainLemma, q0.center.clone(), ell, hs, details, cfg, &mu))
}

/// Hypotheses (1)–(5) of the density-scaled ball criterion. `G_B` is taken
/// maximal: every atom of `B` meeting the pointwise bound.
pub fn check_ball_density_scaled(mu: &DiscreteMeasure, ball: &Ball, cfg: &CriterionConfig) -> Result<CriterionReport> {
    cfg.validate()?;
    let region = Region::Ball(ball.clone());
    let inb = mu.atoms_in(&region);
    let mass: f64 = inb.iter().map(|&i| mu.weight(i)).sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass("B".into()));
    }
    let (n, d, r) = (mu.n(), mu.dim(), ball.radius);
    let at = cfg.resolved_alpha_tilde(n, d)?;
    let theta = mass / r.powi(n as i32);
    let kernel = cfg.kernel_spec(d).build(&all_poles(mu))?;
    let mut details = BTreeMap::new();
    details.insert("theta".into(), theta);
    details.insert("alpha_tilde".into(), at);
    let mut hs = Vec::with_capacity(5);

    hs.push(Hypothesis::upper("radius", r, cfg.lambda));
    hs.push(Hypothesis::upper("p_density", p_density(mu, &region, at)?, cfg.c0 * theta));

    let b = best_plane(mu, ball, cfg)?;
    let plane = Hyperplane::through(&ball.center, b.plane.normal.clone())?;
    hs.push(Hypothesis::upper("beta1_centered", beta1_plane(mu, ball, &plane), cfg.delta * theta));

    let sub2 = mu.restrict(&Region::Ball(ball.dilate(2.0)));
    let radii: Vec<f64> = (0..cfg.growth_levels).map(|k| 2.0 * r * 0.5f64.powi(k as i32)).collect();
    let ni = n as i32;
    let scores: Vec<f64> = inb
        .par_iter()
        .map(|&i| {
            let x = mu.point(i);
            let growth = radii
                .iter()
                .map(|&rho| {
                    mu.mass_in(&Region::Ball(Ball {
                        center: x.to_vec(),
                        radius: rho,
                    })) / rho.powi(ni)
                })
                .fold(0.0f64, f64::max);
            let mut eps = radii.clone();
            eps.push(f64::MIN_POSITIVE);
            Ok(growth + t_star_maximal(&sub2, x, &eps, kernel.as_ref())?)
        })
        .collect::<Result<Vec<_>>>()?;
    let g: Vec<usize> = inb.iter().zip(&scores).filter(|(_, s)| **s <= cfg.c1 * theta).map(|(&i, _)| i).collect();
    let g_mass: f64 = g.iter().map(|&i| mu.weight(i)).sum();
    let frac = g_mass / mass;
    details.insert("g_mass_fraction".into(), frac);
    details.insert("score_max".into(), scores.iter().copied().fold(0.0, f64::max));
    let mut h4 = Hypothesis {
        name: "good_set".into(),
        measured: frac,
        threshold: 0.0,
        margin: frac,
        pass: !g.is_empty(),
        flag: None,
    };
    if g.is_empty() {
        h4 = h4.with_flag("G_B is empty");
    }
    hs.push(h4);

    let bound = cfg.tau * theta * theta * mass;
    if g.is_empty() {
        hs.push(
            Hypothesis {
                name: "oscillation_good".into(),
                measured: 0.0,
                threshold: bound,
                margin: 0.0,
                pass: false,
                flag: Some("vacuous: G_B is empty".into()),
            }
            .sanitized(),
        );
    } else {
        let t = potential_at(mu, &g, kernel.as_ref())?;
        hs.push(Hypothesis::upper("oscillation_good", oscillation_of(mu, &g, &t), bound));
    }

    Ok(CriterionReport::new(Checker::DensityScaled, ball.center.clone(), r, hs, details, cfg, mu))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema: u32,
    pub checker: Checker,
    pub reports: Vec<CriterionReport>,
    /// Fraction of passing reports (0 for an empty scan).
    pub pass_fraction: f64,
}

/// Runs one check and turns evaluation errors into a failed report.
pub fn run_checker(mu: &DiscreteMeasure, checker: Checker, center: &[f64], size: f64, cfg: &CriterionConfig) -> CriterionReport {
    let out = match checker {
        Checker::Ball => Ball::new(center.to_vec(), size).and_then(|b| check_ball(mu, &b, cfg)),
        Checker::DensityScaled => Ball::new(center.to_vec(), size).and_then(|b| check_ball_density_scaled(mu, &b, cfg)),
        Checker::MainLemma => {
            let shift: Vec<f64> = center.iter().map(|c| -c).collect();
            mu.translate(&shift)
                .and_then(|m| Ok((m, Cube::new(vec![0.0; center.len()], size)?)))
                .and_then(|(m, q)| check_cube_mainlemma(&m, &q, cfg))
                .map(|mut rep| {
                    rep.center = center.to_vec();
                    rep
                })
        }
    };
    out.unwrap_or_else(|e| {
        let h = Hypothesis {
            name: "evaluation".into(),
            measured: 0.0,
            threshold: 0.0,
            margin: 0.0,
            pass: false,
            flag: Some(e.to_string()),
        };
        CriterionReport::new(checker, center.to_vec(), size, vec![h], BTreeMap::new(), cfg, mu)
    })
}

/// Runs `checker` on every `(center, size)` pair, centers outermost.
/// For the Main Lemma the size is the side of `Q₀`.
pub fn scan(mu: &DiscreteMeasure, centers: &[Vec<f64>], sizes: &[f64], cfg: &CriterionConfig, checker: Checker) -> ScanReport {
    let jobs: Vec<(&Vec<f64>, f64)> = centers.iter().flat_map(|c| sizes.iter().map(move |&s| (c, s))).collect();
    let reports: Vec<CriterionReport> = jobs.par_iter().map(|(c, s)| run_checker(mu, checker, c, *s, cfg)).collect();
    let pass_fraction = if reports.is_empty() {
        0.0
    } else {
        reports.iter().filter(|r| r.overall).count() as f64 / reports.len() as f64
    };
    ScanReport {
        schema: SCHEMA_VERSION,
        checker,
        reports,
        pass_fraction,
    }
}
