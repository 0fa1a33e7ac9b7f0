use g2verify::catalog;
use g2verify::coframe::{sup_over, FieldForm};
use g2verify::multivec::{self, binom7, project_lambda2, EpsSymbol, NumForm};
use g2verify::symexpr::{lambert_w, Branch};
use g2verify::{Assignment, Expr};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        Just(Expr::var("x")),
        Just(Expr::var("y")),
        (-2.0..2.0f64).prop_map(Expr::c),
    ]
}

/// Bounded-depth expressions that stay analytic for x, y in [0.5, 1.5].
fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            inner.clone().prop_map(|a| a.sin()),
            inner.clone().prop_map(|a| (a * 0.25).exp()),
            inner.clone().prop_map(|a| (Expr::one() + &a * &a).log()),
            inner.clone().prop_map(|a| (Expr::one() + &a * &a).sqrt()),
            inner.clone().prop_map(|a| (Expr::one() + &a * &a).recip()),
            inner.prop_map(|a| (&a * &a).lambert_w()),
        ]
    })
}

fn at(x: f64, y: f64) -> Assignment {
    Assignment::new().with("x", x).with("y", y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn derivative_matches_central_difference(e in expr(), x in 0.5..1.5f64, y in 0.5..1.5f64) {
        let h = 1e-5;
        let d = e.diff("x").eval(&at(x, y)).unwrap();
        let fd = (e.eval(&at(x + h, y)).unwrap() - e.eval(&at(x - h, y)).unwrap()) / (2.0 * h);
        let v = e.eval(&at(x, y)).unwrap();
        prop_assert!((d - fd).norm() <= 1e-6 * (1.0 + v.norm() + d.norm()), "{d} vs {fd}");
    }
}

proptest! {
    #[test]
    fn diff_is_linear(e1 in expr(), e2 in expr(), a in -3.0..3.0f64, b in -3.0..3.0f64, x in 0.5..1.5f64, y in 0.5..1.5f64) {
        let p = at(x, y);
        let lhs = (&e1 * a + &e2 * b).diff("y").eval(&p).unwrap();
        let rhs = e1.diff("y").eval(&p).unwrap() * a + e2.diff("y").eval(&p).unwrap() * b;
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn principal_lambert_inverts(t in -1.0..6.0f64) {
        let x = if t < 0.0 { -(-1.0f64).exp() * t.abs() } else { 10f64.powf(t) - 1.0 };
        let w = lambert_w(x, Branch::Principal).unwrap();
        prop_assert!((w * w.exp() - x).abs() <= 1e-12 * (1.0 + x.abs()));
    }

    #[test]
    fn lower_lambert_inverts(t in -12.0..0.0f64) {
        let x = -(-1.0f64).exp() * 10f64.powf(t);
        let w = lambert_w(x, Branch::Lower).unwrap();
        prop_assert!(w <= -1.0);
        prop_assert!((w * w.exp() - x).abs() <= 1e-12 * (1.0 + x.abs()));
    }
}

#[test]
fn lambert_on_log_grids() {
    let e = 1f64.exp();
    for k in 0..=200 {
        let s = -12.0 + 0.06 * k as f64;
        let xs = [
            10f64.powf(s) - 1.0 / e,
            10f64.powf(s * 0.5 + 6.0),
            -10f64.powf(s) / e,
        ];
        for (x, branch) in [
            (xs[0], Branch::Principal),
            (xs[1], Branch::Principal),
            (xs[2], Branch::Lower),
        ] {
            if branch == Branch::Lower && x <= -1.0 / e {
                continue;
            }
            let w = lambert_w(x, branch).unwrap();
            assert!(
                (w * w.exp() - x).abs() <= 1e-12 * (1.0 + x.abs()),
                "{x} {branch:?}"
            );
        }
    }
}

fn form(k: usize) -> impl Strategy<Value = NumForm> {
    prop::collection::vec(-1.0..1.0f64, binom7(k)).prop_map(move |c| NumForm::from_real(k, &c))
}

fn degree_pair() -> impl Strategy<Value = (NumForm, NumForm)> {
    (0..=7usize)
        .prop_flat_map(|p| (Just(p), 0..=7 - p))
        .prop_flat_map(|(p, q)| (form(p), form(q)))
}

proptest! {
    #[test]
    fn wedge_is_graded_commutative((a, b) in degree_pair()) {
        let sign = if a.deg() * b.deg() % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!(a.w(&b).sub(&b.w(&a).scale(sign)).sup_norm() <= 1e-12);
    }

    #[test]
    fn double_hodge_is_identity(a in (0..=7usize).prop_flat_map(form)) {
        prop_assert!(a.hodge().hodge().sub(&a).sup_norm() <= 1e-12);
    }

    #[test]
    fn inner_product_matches_wedge_with_hodge((a, b) in (0..=7usize).prop_flat_map(|k| (form(k), form(k)))) {
        let lhs = NumForm::volume().scale(a.inner(&b).unwrap());
        prop_assert!(lhs.sub(&a.w(&b.hodge())).sup_norm() <= 1e-12);
    }

    #[test]
    fn lambda2_projection_is_orthogonal_and_idempotent(b in form(2)) {
        let (p7, p14) = project_lambda2(&b);
        prop_assert!(p7.add(&p14).sub(&b).sup_norm() <= 1e-12);
        prop_assert!(p7.inner(&p14).unwrap().norm() <= 1e-12);
        let (q7, q14) = project_lambda2(&p7);
        prop_assert!(q7.sub(&p7).sup_norm() <= 1e-12 && q14.sup_norm() <= 1e-12);
        let (r7, r14) = project_lambda2(&p14);
        prop_assert!(r14.sub(&p14).sup_norm() <= 1e-12 && r7.sup_norm() <= 1e-12);
    }

    #[test]
    fn lambda2_14_is_the_minus_one_eigenspace(b in form(2)) {
        let (_, p14) = project_lambda2(&b);
        prop_assert!(p14.w(multivec::phi()).add(&p14.hodge()).sup_norm() <= 1e-12);
        prop_assert!(p14.w(multivec::psi()).sup_norm() <= 1e-12);
    }

    #[test]
    fn interior_twice_vanishes(v in prop::collection::vec(-1.0..1.0f64, 7), a in (2..=7usize).prop_flat_map(form)) {
        let v: Vec<_> = v.into_iter().map(|x| x.into()).collect();
        prop_assert!(a.interior(&v).interior(&v).sup_norm() <= 1e-12);
    }
}

#[test]
fn epsilon_contractions_are_multiples_of_delta() {
    let eps = EpsSymbol::get();
    let mut c3 = [[0i64; 7]; 7];
    let mut c4 = [[0i64; 7]; 7];
    for i in 0..7 {
        for j in 0..7 {
            for p in 0..7 {
                for q in 0..7 {
                    c3[i][j] += (eps.e3[i][p][q] * eps.e3[j][p][q]) as i64;
                    for r in 0..7 {
                        c4[i][j] += (eps.e4[i][p][q][r] * eps.e4[j][p][q][r]) as i64;
                    }
                }
            }
        }
    }
    for i in 0..7 {
        for j in 0..7 {
            let (d3, d4) = if i == j { (c3[0][0], c4[0][0]) } else { (0, 0) };
            assert_eq!((c3[i][j], c4[i][j]), (d3, d4));
        }
    }
    assert_eq!((c3[0][0], c4[0][0]), (6, 24));
}

fn field_form(k: usize) -> impl Strategy<Value = FieldForm> {
    let masks: Vec<u64> = multivec::basis_masks(k).iter().map(|&m| m as u64).collect();
    prop::collection::vec((-1.0..1.0f64, 0..3i64), masks.len()).prop_map(move |cs| {
        let terms = masks
            .iter()
            .zip(cs)
            .map(|(&m, (c, p))| (m, Expr::var("r").powi(p) * c));
        FieldForm::from_terms(k, terms)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn d_is_an_antiderivation(
        (a, b) in (0..=3usize).prop_flat_map(|p| (0..=3usize).prop_flat_map(move |q| (field_form(p), field_form(q)))),
        seed in 0..1000u64,
    ) {
        let built = catalog::build("third_quadratic").unwrap();
        let m = &built.field.model;
        let sign = if a.deg() % 2 == 0 { 1.0 } else { -1.0 };
        let lhs = m.d(&a.w(&b)).unwrap();
        let rhs = m.d(&a).unwrap().w(&b) + a.w(&m.d(&b).unwrap()) * sign;
        let pts = m.sample_points(4, seed).unwrap();
        prop_assert!(sup_over(&[("leibniz".into(), lhs - rhs)], &pts).unwrap() <= 1e-10);
    }
}
