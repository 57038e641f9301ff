mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rectif_core::kernels::*;
use rectif_core::measure::{AffineMap, Cube};

fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Diagonally dominant nonsymmetric matrices: `A_s` stays positive definite.
fn elliptic(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, d * d).prop_map(move |m| {
        let mut a = DMatrix::from_row_slice(d, d, &m) * 0.25;
        for i in 0..d {
            a[(i, i)] += 1.5;
        }
        a
    })
}

fn direction(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, d).prop_filter("nonzero", |z| norm(z) > 1e-3)
}

fn smooth_field() -> MatrixField {
    MatrixField::analytic(
        2,
        &[
            vec!["1.5 + 0.3*sin(x1)".into(), "0.2*cos(x2)".into()],
            vec!["0.1*sin(x1*x2)".into(), "1 + 0.2*x1^2".into()],
        ],
        None,
    )
    .unwrap()
}

#[test]
fn theta0_examples() {
    let id = ConstMatrix::identity(3);
    assert!((theta0(&[1.0, 0.0, 0.0], &id, 2).unwrap() + 1.0 / (4.0 * PI)).abs() < 1e-15);
    let a = ConstMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 1.0]))).unwrap();
    assert!((theta0(&[1.0, 0.0, 0.0], &a, 2).unwrap() + 1.0 / (4.0 * PI)).abs() < 1e-15);
    let g = grad_theta0(&[2.0, 0.0, 0.0], &id, 2).unwrap();
    assert!((g[0] - 1.0 / (16.0 * PI)).abs() < 1e-15 && g[1] == 0.0 && g[2] == 0.0);
    assert!(theta0(&[0.0; 3], &id, 2).is_err());
    assert!(grad_theta0(&[0.0; 3], &id, 2).is_err());
}

#[test]
fn frozen_kernel_examples() {
    let c = MatrixField::constant(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, -0.1, 1.0])).unwrap();
    let (x, y) = ([0.3, 0.1], [-0.2, 0.4]);
    assert_eq!(
        frozen_kernel(&x, &y, &c, FreezeMode::AtX).unwrap(),
        frozen_kernel(&x, &y, &c, FreezeMode::AtY).unwrap()
    );
    let id = MatrixField::identity(3);
    let (x, y) = ([0.5, -0.1, 0.2], [0.0, 0.3, -0.4]);
    let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
    let r = norm(&z);
    let k = frozen_kernel(&x, &y, &id, FreezeMode::AtX).unwrap();
    for (ki, zi) in k.iter().zip(&z) {
        assert!((ki - zi / (omega_n(2) * r.powi(3))).abs() < 1e-15);
    }
    assert!(frozen_kernel(&x, &x, &id, FreezeMode::AtX).is_err());
}

#[test]
fn frozen_mode_gap_decays_like_holder_exponent() {
    let a = smooth_field();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut samples = Vec::new();
    for k in 0..8 {
        let r = 0.5f64.powi(k);
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let y = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let t: f64 = rng.gen_range(0.0..2.0 * PI);
            let x = [y[0] + r * t.cos(), y[1] + r * t.sin()];
            let kx = frozen_kernel(&x, &y, &a, FreezeMode::AtX).unwrap();
            let ky = frozen_kernel(&x, &y, &a, FreezeMode::AtY).unwrap();
            worst = worst.max(common::dist(&kx, &ky));
        }
        samples.push((r, worst));
    }
    // Smooth field: α = 1, n = 1, so the gap stays bounded like r^{α−n} = r⁰.
    let fit = fit_decay_exponent(&samples).unwrap();
    assert!(fit.slope >= -0.3, "{fit:?}");
    let c = samples.iter().map(|s| s.1).fold(0.0f64, f64::max);
    assert!(c.is_finite() && c < 1.0);
}

#[test]
fn cz_size_constant_is_scale_stable() {
    for field in [smooth_field(), MatrixField::identity(2)] {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut consts = Vec::new();
        for k in 0..6 {
            let r = 10f64.powi(-k);
            let mut c = 0.0f64;
            for _ in 0..200 {
                let y = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
                let t: f64 = rng.gen_range(0.0..2.0 * PI);
                let x = [y[0] + r * t.cos(), y[1] + r * t.sin()];
                let kv = frozen_kernel(&x, &y, &field, FreezeMode::AtX).unwrap();
                c = c.max(norm(&kv) * r);
            }
            consts.push(c);
        }
        let hi = consts.iter().cloned().fold(0.0f64, f64::max);
        let lo = consts.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(hi / lo < 1.5, "{consts:?}");
    }
}

#[test]
fn suppressed_kernel_examples() {
    let base: Arc<dyn Kernel> = Arc::new(ConstKernel::identity(2));
    let (x, y) = ([0.1, 0.2], [0.15, 0.25]);
    let k = base.eval(&x, &y).unwrap();
    let zero = |_: &[f64]| 0.0;
    assert_eq!(suppressed_kernel(&x, &y, &zero, base.as_ref()).unwrap(), k);
    let big = |_: &[f64]| 1.0;
    assert_eq!(suppressed_kernel(&x, &y, &big, base.as_ref()).unwrap(), vec![0.0, 0.0]);
    let neg = |_: &[f64]| -1.0;
    assert!(suppressed_kernel(&x, &y, &neg, base.as_ref()).is_err());
    assert_eq!(chi_tilde(0.5), 0.0);
    assert_eq!(chi_tilde(1.0), 1.0);
    assert!((chi_tilde(0.75) - 0.5).abs() < 1e-15);
}

#[test]
fn corrector_of_identity_and_means() {
    let mut a = MatrixField::laminate(2, 0, "2 + sin(2*pi*x1)", false, None).unwrap();
    a.meta.period = Some(1.0);
    let sol = solve_corrector(&a, 64).unwrap();
    for m in sol.means() {
        assert!(m.abs() < 1e-10);
    }
    let r = sol.rescaled(0.5);
    assert!((r.period() - 0.5).abs() < 1e-15);
    assert!((r.chi_at(0, &[0.1, 0.2]) - 0.5 * sol.chi_at(0, &[0.2, 0.4])).abs() < 1e-12);
}

#[test]
fn fundamental_solve_matches_closed_form() {
    let cases = [
        MatrixField::identity(2),
        MatrixField::constant(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap(),
        MatrixField::identity(3),
    ];
    for a in cases {
        let d = a.dim();
        let y = vec![0.0; d];
        let bx = Cube::new(y.clone(), 1.0).unwrap();
        let h = if d == 2 { 1.0 / 128.0 } else { 1.0 / 32.0 };
        let sol = solve_fundamental(&a, &y, &bx, h).unwrap();
        let a0 = a.eval_const(&y).unwrap();
        let mut r = 8.0 * h;
        while r <= 1.0 / 8.0 + 1e-12 {
            for k in 0..8 {
                let t = 2.0 * PI * k as f64 / 8.0 + 0.3;
                let mut x = vec![0.0; d];
                x[0] = r * t.cos();
                x[1] = r * t.sin();
                let want = theta0(&x, &a0, d - 1).unwrap();
                let got = sol.value_at(&x);
                assert!((got - want).abs() <= 0.02 * want.abs(), "d {d} r {r}: {got} vs {want}");
            }
            r *= 1.5;
        }
        let flux = sol.flux(&a, 0.2, 24).unwrap();
        assert!((flux - 1.0).abs() < 1e-2, "flux {flux}");
    }
}

#[test]
fn noisy_power_law_slope() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for truth in [-2.0, -0.5, 1.0, 2.5] {
        let s: Vec<(f64, f64)> = (0..30)
            .map(|i| {
                let r = 0.01 * 1.2f64.powi(i);
                (r, 2.0 * r.powf(truth) * (1.0 + rng.gen_range(-0.1..0.1)))
            })
            .collect();
        let f = fit_decay_exponent(&s).unwrap();
        assert!((f.slope - truth).abs() < 0.1);
    }
}

#[test]
fn periodized_matrix_reflection_and_periodicity() {
    let a = symmetric_part(&smooth_field());
    let q0 = Cube::new(vec![0.0; 2], 1.0).unwrap();
    let bar = build_periodic_matrix(&a, &q0, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.gen_range(-9.0..9.0), rng.gen_range(-9.0..9.0)]).collect();
    assert!(periodicity_residual(&bar, 6.0, &pts) <= 1e-12);
    for j in 0..2 {
        let refl = change_of_variables(&bar, &reflect_map(2, j, 1.0).unwrap()).unwrap();
        for p in &pts {
            assert!(max_diff(&refl.eval(p), &bar.eval(p)) <= 1e-12);
        }
    }
    // Boundary of the 6ℓ unit sits at x_j = -3ℓ/2 + 6ℓk.
    for t in [-1.0, 0.0, 0.37] {
        assert!(max_diff(&bar.eval(&[-1.5, t]), &DMatrix::identity(2, 2)) <= 1e-15);
        assert!(max_diff(&bar.eval(&[t, 4.5]), &DMatrix::identity(2, 2)) <= 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_is_odd_and_homogeneous(d in 2usize..5, seed in 0u64..1000, lam in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::from_fn(d, d, |_, _| 0.25 * rng.gen_range(-1.0..1.0));
        for i in 0..d {
            m[(i, i)] += 1.5;
        }
        let a = ConstMatrix::new(m).unwrap();
        let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = d - 1;
        let g = grad_theta0(&z, &a, n).unwrap();
        let zl: Vec<f64> = z.iter().map(|v| lam * v).collect();
        let gl = grad_theta0(&zl, &a, n).unwrap();
        let zm: Vec<f64> = z.iter().map(|v| -v).collect();
        let gm = grad_theta0(&zm, &a, n).unwrap();
        let s = lam.powi(-(n as i32));
        for k in 0..d {
            prop_assert!((gl[k] - s * g[k]).abs() <= 1e-12 * (s * norm(&g)));
            prop_assert_eq!(gm[k], -g[k]);
        }
    }

    #[test]
    fn depends_only_on_symmetric_part(a in elliptic(3), z in direction(3)) {
        let full = ConstMatrix::new(a.clone()).unwrap();
        let sym = ConstMatrix::new((&a + a.transpose()) * 0.5).unwrap();
        let tr = ConstMatrix::new(a.transpose()).unwrap();
        prop_assert_eq!(theta0(&z, &full, 2).unwrap(), theta0(&z, &sym, 2).unwrap());
        prop_assert_eq!(theta0(&z, &full, 2).unwrap(), theta0(&z, &tr, 2).unwrap());
        prop_assert_eq!(grad_theta0(&z, &full, 2).unwrap(), grad_theta0(&z, &sym, 2).unwrap());
    }

    #[test]
    fn gradient_matches_finite_differences(a in elliptic(2), b in elliptic(3), z2 in direction(2), z3 in direction(3)) {
        for (m, z) in [(a, z2), (b, z3)] {
            let c = ConstMatrix::new(m).unwrap();
            let n = z.len() - 1;
            let g = grad_theta0(&z, &c, n).unwrap();
            let step = 1e-5;
            for k in 0..z.len() {
                let mut p = z.clone();
                let mut q = z.clone();
                p[k] += step;
                q[k] -= step;
                let fd = (theta0(&p, &c, n).unwrap() - theta0(&q, &c, n).unwrap()) / (2.0 * step);
                prop_assert!((fd - g[k]).abs() <= 1e-6 * norm(&g));
            }
        }
    }

    #[test]
    fn flux_is_one(a in elliptic(3), b in elliptic(2)) {
        for m in [a, b] {
            let c = ConstMatrix::new(m).unwrap();
            for r in [0.5, 1.0, 2.0] {
                let f = flux_through_sphere(&c, r, 48).unwrap();
                prop_assert!((f - 1.0).abs() <= 1e-6, "flux {}", f);
            }
        }
    }

    #[test]
    fn change_of_variables_composes(
        m1 in prop::collection::vec(-0.4f64..0.4, 4),
        m2 in prop::collection::vec(-0.4f64..0.4, 4),
        t1 in prop::collection::vec(-1.0f64..1.0, 2),
        t2 in prop::collection::vec(-1.0f64..1.0, 2),
        x in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let lin = |m: &[f64]| DMatrix::from_row_slice(2, 2, m) + DMatrix::identity(2, 2);
        let phi = AffineMap::new(lin(&m1), t1).unwrap();
        let psi = AffineMap::new(lin(&m2), t2).unwrap();
        let a = smooth_field();
        let nested = change_of_variables(&change_of_variables(&a, &phi).unwrap(), &psi).unwrap();
        let direct = change_of_variables(&a, &phi.compose(&psi)).unwrap();
        let (u, v) = (nested.eval(&x), direct.eval(&x));
        prop_assert!(max_diff(&u, &v) <= 1e-12 * (1.0 + v.norm()));
    }

    #[test]
    fn normalization_makes_symmetric_part_identity(y0 in prop::collection::vec(-2.0f64..2.0, 2)) {
        let a = smooth_field();
        let (t, s) = normalize_at(&a, &y0).unwrap();
        let p = s.apply_inverse(&y0);
        let m = t.eval(&p);
        let sym = (&m + m.transpose()) * 0.5;
        prop_assert!(max_diff(&sym, &DMatrix::identity(2, 2)) <= 1e-10);
    }

    #[test]
    fn reflections_are_commuting_involutions(ell in 0.1f64..5.0, x in prop::collection::vec(-10.0f64..10.0, 3), i in 0usize..3, j in 0usize..3) {
        let pi = reflect_map(3, i, ell).unwrap();
        let pj = reflect_map(3, j, ell).unwrap();
        let back = pi.apply(&pi.apply(&x));
        prop_assert!(common::dist(&back, &x) <= 1e-12 * (1.0 + norm(&x)));
        let a = pi.apply(&pj.apply(&x));
        let b = pj.apply(&pi.apply(&x));
        prop_assert!(common::dist(&a, &b) <= 1e-12 * (1.0 + norm(&x)));
    }

    #[test]
    fn periodized_equals_input_on_2q0(x in prop::collection::vec(-1.0f64..1.0, 2), side in 0.5f64..2.0) {
        let a = symmetric_part(&smooth_field());
        let q0 = Cube::new(vec![0.0; 2], side).unwrap();
        let bar = build_periodic_matrix(&a, &q0, 0.05).unwrap();
        let p: Vec<f64> = x.iter().map(|v| v * side * 0.999_999).collect();
        prop_assert_eq!(bar.eval(&p), a.eval(&p));
    }

    #[test]
    fn symmetric_part_is_a_projection(x in prop::collection::vec(-3.0f64..3.0, 2)) {
        let s1 = symmetric_part(&smooth_field());
        let s2 = symmetric_part(&s1);
        let m = s1.eval(&x);
        prop_assert_eq!(&m, &s2.eval(&x));
        prop_assert_eq!(&m, &m.transpose());
    }

    #[test]
    fn suppression_never_amplifies(x in direction(2), y in direction(2), s in 0.0f64..1.0) {
        prop_assume!(x != y);
        let base = ConstKernel::identity(2);
        let phi = move |p: &[f64]| s * p[1].abs();
        let k = base.eval(&x, &y).unwrap();
        let kt = suppressed_kernel(&x, &y, &phi, &base).unwrap();
        prop_assert!(norm(&kt) <= norm(&k));
        let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < 0.5 * phi(&x) * phi(&y) {
            prop_assert_eq!(kt, vec![0.0, 0.0]);
        }
    }
}
