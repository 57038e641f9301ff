#![allow(clippy::needless_range_loop)]

mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{cloud, dist};
use rectif_core::kernels::{omega_n, ConstKernel, ConstMatrix, FreezeMode, FrozenKernel, Kernel, MatrixField};
use rectif_core::measure::*;
use rectif_core::potential::*;

fn vnorm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `(1/ω_n)(x−y)/|x−y|^{n+1}` written out by hand.
fn riesz(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len() - 1;
    let r = dist(x, y);
    let c = 1.0 / (omega_n(n) * r.powi(n as i32 + 1));
    x.iter().zip(y).map(|(a, b)| c * (a - b)).collect()
}

fn segment(count: usize) -> DiscreteMeasure {
    rectif_core::check::generate(&rectif_core::check::GeneratorSpec::Segment { count, length: 2.0 }).unwrap()
}

fn skew_kernel() -> ConstKernel {
    ConstKernel::new(ConstMatrix::new(DMatrix::from_row_slice(3, 3, &[1.5, 0.3, 0.0, -0.2, 1.0, 0.1, 0.0, 0.4, 2.0])).unwrap())
}

#[test]
fn t_eps_matches_naive_double_loop() {
    let mu = cloud(2, 1000, 3);
    let k = ConstKernel::identity(3);
    let f: Vec<f64> = (0..mu.len()).map(|i| (i as f64 * 0.37).sin()).collect();
    for (t, eps) in [(0usize, 0.0), (17, 0.1), (999, 0.5)] {
        let x = mu.point(t);
        let got = t_eps(&mu, &f, x, eps, &k).unwrap();
        let mut want = [0.0; 3];
        for j in 0..mu.len() {
            let y = mu.point(j);
            if j != t && dist(x, y) > eps {
                let kv = riesz(x, y);
                for c in 0..3 {
                    want[c] += kv[c] * f[j] * mu.weight(j);
                }
            }
        }
        for c in 0..3 {
            assert!((got[c] - want[c]).abs() <= 1e-12 * vnorm(&want).max(1.0));
        }
    }
}

#[test]
fn t_eps_examples() {
    let mu = cloud(1, 50, 1);
    let k = ConstKernel::identity(2);
    let f = vec![1.0; mu.len()];
    assert_eq!(t_eps(&mu, &f, &[0.0, 0.0], 10.0, &k).unwrap(), vec![0.0, 0.0]);
    let one = DiscreteMeasure::new(1, &[vec![0.3, 0.4]], vec![1.0]).unwrap();
    let v = t_eps(&one, &[1.0], &[0.0, 0.0], 0.1, &k).unwrap();
    let want = riesz(&[0.0, 0.0], &[0.3, 0.4]);
    assert!(dist(&v, &want) < 1e-15);
}

#[test]
fn t_smooth_limits_and_annulus_bound() {
    let mu = cloud(1, 200, 5);
    let k = ConstKernel::identity(2);
    let f = vec![1.0; mu.len()];
    let x = [0.05, -0.02];
    let full = t_eps(&mu, &f, &x, 0.0, &k).unwrap();
    let big = t_smooth(&mu, &f, &x, 2.0 * mu.diameter_bound() + 10.0, &k).unwrap();
    assert!(dist(&big, &full) <= 1e-12 * vnorm(&full));
    assert_eq!(t_smooth(&mu, &f, &x, 1e-9, &k).unwrap(), vec![0.0, 0.0]);
    for r in [0.05, 0.1, 0.3] {
        let s = t_smooth(&mu, &f, &x, r, &k).unwrap();
        // t_smooth(r) − (full − t_eps(2r)) only sees the annulus r < |x−y| < 2r.
        let outer = t_eps(&mu, &f, &x, 2.0 * r, &k).unwrap();
        let inner: Vec<f64> = full.iter().zip(&outer).map(|(a, b)| a - b).collect();
        let gap = dist(&s, &inner);
        let mut annulus = 0.0;
        let mut sup = 0.0f64;
        for i in 0..mu.len() {
            let d = dist(&x, mu.point(i));
            if d > r && d < 2.0 * r {
                annulus += mu.weight(i);
                sup = sup.max(vnorm(&k.eval(&x, mu.point(i)).unwrap()));
            }
        }
        assert!(gap <= annulus * sup * (1.0 + 1e-12) + 1e-15, "r {r}: {gap} > {}", annulus * sup);
    }
}

#[test]
fn pv_examples() {
    let mu = segment(2001);
    let k = ConstKernel::identity(2);
    let f = vec![1.0; mu.len()];
    let sched = TruncationSchedule::geometric(0.5, 0.5, 10, 1e-6).unwrap();
    let mid = pv_estimate(&mu, &f, &[0.0, 0.0], &sched, &k).unwrap();
    for v in &mid.values {
        assert!(vnorm(v) <= 1e-3);
    }
    let off = [0.1, 0.5];
    let sched = TruncationSchedule::decreasing(vec![0.4, 0.3, 0.2, 0.1], 1e-6).unwrap();
    let p = pv_estimate(&mu, &f, &off, &sched, &k).unwrap();
    for v in &p.values {
        assert_eq!(v, &p.values[0]);
    }
    assert!(p.converged);
}

#[test]
fn weak_limit_examples() {
    let mut pts: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 * 0.01, 0.0]).collect();
    pts.push(vec![0.5, 3.0]);
    let mu = DiscreteMeasure::new(1, &pts, vec![0.01; 101]).unwrap();
    let k = ConstKernel::identity(2);
    let f = vec![1.0; mu.len()];
    let x = [0.5, 3.0];
    let radii = TruncationSchedule::decreasing(vec![1.0, 0.5], 1e-6).unwrap();
    let wl = weak_limit(&mu, &f, &x, &radii, &k).unwrap();
    let pv = t_eps(&mu, &f, &x, 0.0, &k).unwrap();
    assert_eq!(wl.value, pv);
    let zero = weak_limit(&mu, &vec![0.0; mu.len()], &x, &radii, &k).unwrap();
    assert_eq!(zero.value, vec![0.0, 0.0]);
}

#[test]
fn weak_limit_agrees_with_pv_on_flat_sample() {
    let mu = segment(4001);
    let k = ConstKernel::identity(2);
    let f = vec![1.0; mu.len()];
    let x = mu.point(2400).to_vec();
    let pv = pv_estimate(&mu, &f, &x, &TruncationSchedule::geometric(0.05, 0.5, 6, 1e-6).unwrap(), &k).unwrap();
    let wl = weak_limit(&mu, &f, &x, &TruncationSchedule::geometric(0.01, 0.5, 4, 1e-6).unwrap(), &k).unwrap();
    let rel = dist(&wl.value, &pv.value) / vnorm(&pv.value);
    assert!(rel <= 1e-2, "{rel}");
}

#[test]
fn maximal_function_examples() {
    let one = DiscreteMeasure::new(1, &[vec![1.0, 0.0]], vec![1.0]).unwrap();
    let k = ConstKernel::identity(2);
    let kv = vnorm(&riesz(&[0.0, 0.0], &[1.0, 0.0]));
    assert!((t_star_maximal(&one, &[0.0, 0.0], &[0.5, 2.0], &k).unwrap() - kv).abs() < 1e-15);
    assert_eq!(t_star_maximal(&DiscreteMeasure::empty(1), &[0.0, 0.0], &[0.5], &k).unwrap(), 0.0);
}

#[test]
fn operator_norm_two_and_three_atoms() {
    let k = ConstKernel::identity(2);
    let mu = DiscreteMeasure::new(1, &[vec![0.0, 0.0], vec![0.3, 0.4]], vec![2.0, 0.5]).unwrap();
    let all = Region::Ball(Ball::new(vec![0.0, 0.0], 10.0).unwrap());
    let est = operator_norm(&mu, &all, &k, None).unwrap();
    // M = √(w₁w₂)·[[0, k], [−k, 0]], so σ = √(w₁w₂)|k|.
    let closed = (2.0f64 * 0.5).sqrt() * vnorm(&riesz(&[0.0, 0.0], &[0.3, 0.4]));
    assert!((est.norm - closed).abs() <= 1e-8 * closed);
    let s = schur_bound(&mu, &all, &k, None).unwrap();
    assert!(est.norm <= s * (1.0 + 1e-12));

    let pts = [vec![0.0, 0.0], vec![0.5, 0.1], vec![-0.2, 0.7]];
    let w = [1.0, 0.4, 2.5];
    let mu3 = DiscreteMeasure::new(1, &pts, w.to_vec()).unwrap();
    let mut dense = DMatrix::zeros(6, 3);
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                let kv = riesz(&pts[i], &pts[j]);
                for c in 0..2 {
                    dense[(2 * i + c, j)] = (w[i] * w[j]).sqrt() * kv[c];
                }
            }
        }
    }
    let svd = dense.svd(false, false).singular_values.max();
    let est3 = operator_norm(&mu3, &all, &k, None).unwrap();
    assert!((est3.norm - svd).abs() <= 1e-8 * svd, "{} vs {svd}", est3.norm);
}

#[test]
fn schur_examples() {
    let k = ConstKernel::identity(2);
    // |K| = 1 at distance 1/ω₁.
    let r = 1.0 / omega_n(1);
    let mu = DiscreteMeasure::new(1, &[vec![0.0, 0.0], vec![r, 0.0]], vec![1.0, 1.0]).unwrap();
    let all = Region::Ball(Ball::new(vec![0.0, 0.0], 10.0).unwrap());
    assert!((schur_bound(&mu, &all, &k, None).unwrap() - 1.0).abs() < 1e-12);
    assert!((operator_norm(&mu, &all, &k, None).unwrap().norm - 1.0).abs() < 1e-8);
    let one = DiscreteMeasure::new(1, &[vec![0.0, 0.0]], vec![1.0]).unwrap();
    assert_eq!(schur_bound(&one, &all, &k, None).unwrap(), 0.0);
    assert_eq!(operator_norm(&one, &all, &k, None).unwrap().norm, 0.0);
    let s = schur_bound(&cloud(1, 30, 2), &all, &k, None).unwrap();
    let s3 = schur_bound(&cloud(1, 30, 2).scaled(3.0).unwrap(), &all, &k, None).unwrap();
    assert!((s3 - 3.0 * s).abs() <= 1e-12 * s3);
}

#[test]
fn oscillation_examples() {
    let mu = DiscreteMeasure::new(1, &[vec![0.0, 0.0], vec![0.5, 0.0]], vec![0.7, 0.7]).unwrap();
    let all = Region::Ball(Ball::new(vec![0.0, 0.0], 10.0).unwrap());
    let field = |values: Vec<Vec<f64>>| PotentialField {
        values,
        provenance: Provenance {
            kernel: String::new(),
            truncation: String::new(),
            measure_hash: String::new(),
        },
    };
    assert!(oscillation(&mu, &all, &field(vec![vec![3.0, 1.0]; 2])).unwrap() < 1e-24);
    let v = [0.3, -1.2];
    let osc = oscillation(&mu, &all, &field(vec![v.to_vec(), vec![-v[0], -v[1]]])).unwrap();
    assert!((osc - 2.0 * 0.7 * (v[0] * v[0] + v[1] * v[1])).abs() < 1e-14);
}

#[test]
fn localization_examples() {
    let k = ConstKernel::identity(2);
    let q0 = Cube::new(vec![0.0, 0.0], 1.0).unwrap();
    let lone = DiscreteMeasure::new(1, &[vec![0.1, 0.0], vec![9.0, 0.0]], vec![1.0, 1.0]).unwrap();
    assert_eq!(localization_lhs(&lone, &q0, 3.0, &k).unwrap().lhs, 0.0);
    let mu = cloud(1, 200, 8);
    let loc = localization_lhs(&mu, &q0, 1.0, &k).unwrap();
    let inside = mu.restrict(&Region::Cube(q0.clone()));
    let ones = vec![1.0; inside.len()];
    let direct: f64 = (0..inside.len())
        .map(|i| inside.weight(i) * vnorm(&t_eps(&inside, &ones, inside.point(i), 0.0, &k).unwrap()).powi(2))
        .sum();
    assert!((loc.lhs - direct).abs() <= 1e-12 * direct);
    assert!((loc.mass - inside.total_mass()).abs() < 1e-12);
}

#[test]
fn localization_orders_graphs_by_flatness() {
    let k = ConstKernel::identity(2);
    let q0 = Cube::new(vec![0.0, 0.0], 1.0).unwrap();
    let mut last = f64::INFINITY;
    for slope in [0.8, 0.4, 0.2, 0.05] {
        let mu = rectif_core::check::generate(&rectif_core::check::GeneratorSpec::LipschitzGraph {
            n: 1,
            count: 400,
            side: 4.0,
            slope,
            seed: 1,
        })
        .unwrap();
        let loc = localization_lhs(&mu, &q0, 2.0, &k).unwrap();
        let ratio = loc.lhs / loc.mass;
        assert!(ratio < last, "slope {slope}: {ratio} ≥ {last}");
        last = ratio;
    }
}

#[test]
fn far_field_decays() {
    let k = ConstKernel::identity(2);
    let q0 = Cube::new(vec![0.0, 0.0], 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pts: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.1..0.1)]).collect();
    let mu0 = DiscreteMeasure::new(1, &pts, vec![0.025; 40]).unwrap();
    let pm = periodize_layout(&mu0, &q0, 5);
    let f: Vec<f64> = (0..pm.base.len()).map(|i| 1.0 + 0.5 * (i as f64).sin()).collect();
    let x = [0.3, 0.05];
    assert_eq!(far_field_check(&pm, 18, &vec![0.0; f.len()], &x, 1.0, &k).unwrap().lhs, 0.0);
    let mut samples = Vec::new();
    let mut last = f64::INFINITY;
    for m in [18usize, 30, 42] {
        let ff = far_field_check(&pm, m, &f, &x, 1.0, &k).unwrap();
        assert!(ff.lhs < last);
        last = ff.lhs;
        samples.push((m as f64, ff.lhs));
    }
    samples.push((54.0, far_field_check(&pm, 54, &f, &x, 1.0, &k).unwrap().lhs));
    let fit = rectif_core::kernels::fit_decay_exponent(&samples).unwrap();
    assert!(fit.slope <= 0.0);
    assert!(far_field_check(&pm, 12, &f, &x, 1.0, &k).is_err());
}

#[test]
fn smooth_limit_examples() {
    let k = ConstKernel::identity(2);
    let q0 = Cube::new(vec![0.0, 0.0], 1.0).unwrap();
    let mu0 = segment(101).pushforward(&AffineMap::linear(DMatrix::identity(2, 2) * 0.49).unwrap()).unwrap();
    let pm = periodize_layout(&mu0, &q0, 4);
    let f = vec![1.0; pm.base.len()];
    let x = [0.1, 0.0];
    assert_eq!(smooth_limit_check(&pm, &f, &x, 2.0, 2.0, 1.0, 1.0, &k).unwrap().diff, 0.0);
    assert_eq!(smooth_limit_check(&pm, &vec![0.0; f.len()], &x, 2.0, 4.0, 1.0, 1.0, &k).unwrap().diff, 0.0);
    for r in [1.5, 3.0] {
        let c = smooth_limit_check(&pm, &f, &x, r, 2.0 * r, 1.0, 1.0, &k).unwrap();
        assert!((c.bound - r.powf(-1.0)).abs() < 1e-12);
        assert!(c.diff <= c.bound, "r {r}: {} > {}", c.diff, c.bound);
    }
}

#[test]
fn variational_contract() {
    let q0 = Cube::new(vec![0.0, 0.0], 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pts: Vec<Vec<f64>> = (0..40)
        .map(|i| vec![-0.4875 + 0.025 * i as f64, rng.gen_range(-0.01..0.01)])
        .collect();
    let eta = DiscreteMeasure::new(1, &pts, vec![0.025; 40]).unwrap();
    let k = ConstKernel::identity(2);
    let opts = VariationalOptions {
        iterations: 100,
        ..Default::default()
    };
    let res = variational_minimize(&eta, &q0, 0.5, &k, &opts).unwrap();
    let mass: f64 = res.b.iter().zip(&res.atoms).map(|(b, &i)| b * eta.weight(i)).sum();
    assert!((mass - 1.0).abs() <= 1e-8);
    assert!(res.mass_error <= 1e-8);
    assert!(res.j <= res.j_one);
    assert!(res.b.iter().all(|&b| (0.0..=opts.cap).contains(&b)));
    assert!(variational_minimize(&eta, &q0, 0.0, &k, &opts).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn constant_kernels_cancel_pairwise(seed in 0u64..1000, e in prop::collection::vec(-1.0f64..1.0, 3)) {
        let mu = cloud(2, 60, seed);
        let k = skew_kernel();
        let mut s = 0.0;
        let mut scale = 0.0;
        for i in 0..mu.len() {
            for j in 0..mu.len() {
                if i != j {
                    let a = k.eval(mu.point(i), mu.point(j)).unwrap();
                    let b = k.eval(mu.point(j), mu.point(i)).unwrap();
                    let w = mu.weight(i) * mu.weight(j);
                    s += w * a.iter().zip(&b).zip(&e).map(|((p, q), c)| (p + q) * c).sum::<f64>();
                    scale += w * vnorm(&a);
                }
            }
        }
        prop_assert!(s.abs() <= 1e-10 * scale.max(1.0));
    }

    #[test]
    fn duality_between_t_and_adjoint(seed in 0u64..1000, eps in 0.0f64..0.5) {
        let mu = cloud(1, 80, seed);
        let field = MatrixField::analytic(
            2,
            &[vec!["1.5 + 0.3*sin(x1)".into(), "0.2".into()], vec!["-0.1".into(), "1 + 0.2*x2^2".into()]],
            None,
        ).unwrap();
        let k = FrozenKernel::new(field, FreezeMode::AtX);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let f: Vec<f64> = (0..mu.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<Vec<f64>> = (0..mu.len()).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let mut lhs = 0.0;
        for i in 0..mu.len() {
            let t = t_eps(&mu, &f, mu.point(i), eps, &k).unwrap();
            lhs += mu.weight(i) * t.iter().zip(&g[i]).map(|(a, b)| a * b).sum::<f64>();
        }
        let mut rhs = 0.0;
        for j in (0..mu.len()).rev() {
            rhs += mu.weight(j) * f[j] * adjoint_apply(&mu, &g, mu.point(j), eps, &k).unwrap();
        }
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        let zero = vec![vec![0.0, 0.0]; mu.len()];
        prop_assert_eq!(adjoint_apply(&mu, &zero, mu.point(0), eps, &k).unwrap(), 0.0);
    }

    #[test]
    fn adjoint_of_antisymmetric_kernel(seed in 0u64..1000, e in prop::collection::vec(-1.0f64..1.0, 3)) {
        let mu = cloud(2, 50, seed);
        let k = skew_kernel();
        let xi = vec![e.clone(); mu.len()];
        let x = mu.point(0);
        let a = adjoint_apply(&mu, &xi, x, 0.0, &k).unwrap();
        let t = t_eps(&mu, &vec![1.0; mu.len()], x, 0.0, &k).unwrap();
        let b: f64 = t.iter().zip(&e).map(|(p, q)| p * q).sum();
        prop_assert!((a + b).abs() <= 1e-10 * vnorm(&t).max(1.0));
    }

    #[test]
    fn symmetric_cloud_has_zero_pv_at_center(seed in 0u64..1000, eps in 0.0f64..0.8) {
        let half = cloud(1, 40, seed);
        let neg = half.pushforward(&AffineMap::linear(-DMatrix::identity(2, 2)).unwrap()).unwrap();
        let mu = half.union(&neg).unwrap();
        let k = ConstKernel::new(ConstMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.4, -0.3, 1.0])).unwrap());
        let v = t_eps(&mu, &vec![1.0; mu.len()], &[0.0, 0.0], eps, &k).unwrap();
        let scale: f64 = (0..mu.len()).map(|i| mu.weight(i) / dist(mu.point(i), &[0.0, 0.0])).sum();
        prop_assert!(vnorm(&v) <= 1e-12 * scale);
    }

    #[test]
    fn norm_below_schur(seed in 0u64..1000) {
        let mu = cloud(1, 200, seed);
        let k = ConstKernel::identity(2);
        let all = Region::Ball(Ball::new(vec![0.0, 0.0], 10.0).unwrap());
        let n = operator_norm(&mu, &all, &k, None).unwrap();
        let s = schur_bound(&mu, &all, &k, None).unwrap();
        prop_assert!(n.norm <= s * (1.0 + 1e-9));
    }

    #[test]
    fn maximal_function_grows_under_refinement(seed in 0u64..1000, extra in prop::collection::vec(0.001f64..2.0, 1..6)) {
        let mu = cloud(1, 60, seed);
        let k = ConstKernel::identity(2);
        let x = [0.01, 0.02];
        let grid = vec![0.5, 0.1];
        let mut finer = grid.clone();
        finer.extend(extra);
        let a = t_star_maximal(&mu, &x, &grid, &k).unwrap();
        let b = t_star_maximal(&mu, &x, &finer, &k).unwrap();
        prop_assert!(b >= a);
        let direct = grid.iter().map(|&e| vnorm(&t_eps(&mu, &vec![1.0; mu.len()], &x, e, &k).unwrap())).fold(0.0f64, f64::max);
        prop_assert!((a - direct).abs() <= 1e-10 * direct.max(1.0));
    }

    #[test]
    fn oscillation_invariances(seed in 0u64..1000, shift in prop::collection::vec(-5.0f64..5.0, 2), c in -3.0f64..3.0) {
        let mu = cloud(1, 50, seed);
        let k = ConstKernel::identity(2);
        let region = Region::Ball(Ball::new(vec![0.0, 0.0], 0.8).unwrap());
        prop_assume!(mu.mass_in(&region) > 0.0);
        let base = t_eps_field(&mu, &vec![1.0; mu.len()], 0.05, &k).unwrap();
        let o = oscillation(&mu, &region, &base).unwrap();
        let mut moved = base.clone();
        moved.values.iter_mut().for_each(|v| v.iter_mut().zip(&shift).for_each(|(a, s)| *a += s));
        let mut scaled = base.clone();
        scaled.values.iter_mut().for_each(|v| v.iter_mut().for_each(|a| *a *= c));
        prop_assert!((oscillation(&mu, &region, &moved).unwrap() - o).abs() <= 1e-9 * o.max(1.0));
        prop_assert!((oscillation(&mu, &region, &scaled).unwrap() - c * c * o).abs() <= 1e-9 * (c * c * o).max(1.0));
    }
}
