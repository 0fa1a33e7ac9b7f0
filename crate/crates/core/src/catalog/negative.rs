//! λ-quadratic structures with special torsion of negative type on ℝ₊ × N, with A = H = 0.
//!
//! Each entry is written in the constant-coefficient frame (ϖ, θ₁, θ₂, κ) of N together with
//! dr, then moved to the heptad ω₁ = dr, ν = r^p ϖ, η_a = r^q θ_a.

use super::{cx, reframe, Built, Extra, HEPTAD};
use crate::coframe::{
    rewrite_form, sup_over, FieldForm, FrameChange, Mask, Model, ModelBuilder, Sample,
};
use crate::g2ops::G2Error;
use crate::symexpr::{rational, Assignment, Expr};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

const RAW: [&str; 11] = [
    "dr", "p1", "p2", "t1", "t2", "t3", "t4", "a1", "a2", "b1", "b2",
];
const KAPPA: usize = 7;

/// Exponents and structure coefficients of the reduced equations at a given λ.
#[derive(Debug, Clone, Copy)]
pub struct NegCoefficients {
    pub lambda: f64,
    /// ν = r^p ϖ.
    pub p: (i64, i64),
    /// η = r^q θ.
    pub q: (i64, i64),
    /// Coefficient of ε_ab conj(θ_a∧θ_b) in dϖ.
    pub c_tt: C64,
    /// Coefficient of ε_ab conj(ϖ∧θ_b) in dθ_a, with ε₁₂ = ½. Closure of φ forces twice the
    /// value one gets by reading ε₁₂ = ½ into the general reduced equations.
    pub c_vt: C64,
    /// f·r, where τ = 4f(−2ω23 + ω45 + ω67).
    pub f_r: f64,
}

impl NegCoefficients {
    pub fn new(lambda: f64) -> NegCoefficients {
        let l = lambda;
        let den = l * (2.0 * l - 1.0);
        let rat = |x: f64| rational(x).expect("exponent is rational");
        NegCoefficients {
            lambda,
            p: rat((34.0 * l * l - 9.0 * l + 6.0) / (49.0 * den)),
            q: rat((32.0 * l * l + 57.0 * l - 24.0) / (98.0 * den)),
            c_tt: cx(0.0, -2.0 / 49.0 * (l + 1.0) * (8.0 * l + 1.0) / den),
            c_vt: cx(0.0, 10.0 / 49.0 * (5.0 * l - 2.0) * (l + 1.0) / den),
            f_r: (3.0 * l - 4.0) / (28.0 * den),
        }
    }
}

fn g(i: usize) -> FieldForm {
    FieldForm::gen(i)
}

fn cplx(re: usize, im: usize) -> FieldForm {
    g(re) + g(im) * cx(0.0, 1.0)
}

struct Frame {
    varpi: FieldForm,
    theta: [FieldForm; 2],
    kappa: [[FieldForm; 2]; 2],
}

fn frame() -> Frame {
    let i = cx(0.0, 1.0);
    let k = |j: usize| g(KAPPA + j);
    Frame {
        varpi: cplx(1, 2),
        theta: [cplx(3, 4), cplx(5, 6)],
        kappa: [
            [&k(0) * i, &k(2) + &k(3) * i],
            [&k(2) * -1.0 + &k(3) * i, &k(1) * i],
        ],
    }
}

/// The semibasic real 2-forms on N (generators 1..6), in mask order.
fn semibasic_pairs() -> Vec<Mask> {
    all_masks(7, 2).into_iter().filter(|m| m & 1 == 0).collect()
}

/// Structure equations with dκ = −κ∧κ + Σ curvature[g][m]·(pair m).
fn model(name: &str, c: &NegCoefficients, curvature: &[[Expr; 15]; 4]) -> ModelBuilder {
    let f = frame();
    let mut b = ModelBuilder::new(name, &RAW);
    let trace = &f.kappa[0][0] + &f.kappa[1][1];
    let dvarpi = trace.w(&f.varpi) + f.theta[0].w(&f.theta[1]).conj() * c.c_tt;
    let dtheta: [FieldForm; 2] = std::array::from_fn(|a| {
        let mut acc = FieldForm::zero(2);
        for bb in 0..2 {
            acc = acc - f.kappa[a][bb].w(&f.theta[bb]);
        }
        // ε_12 = 1/2.
        let (sign, other) = if a == 0 { (0.5, 1) } else { (-0.5, 0) };
        acc + f.varpi.w(&f.theta[other]).conj() * (c.c_vt * sign)
    });
    let pairs = semibasic_pairs();
    let dkappa: [[FieldForm; 2]; 2] = std::array::from_fn(|a| {
        std::array::from_fn(|bb| {
            let mut acc = FieldForm::zero(2);
            for cc in 0..2 {
                acc = acc - f.kappa[a][cc].w(&f.kappa[cc][bb]);
            }
            acc
        })
    });
    let curv = |gi: usize| {
        FieldForm::from_terms(
            2,
            pairs
                .iter()
                .zip(curvature[gi].iter())
                .map(|(m, e)| (*m, e.clone())),
        )
    };
    let mi = cx(0.0, -1.0);
    b.d("dr", FieldForm::zero(2));
    b.d("p1", dvarpi.re());
    b.d("p2", dvarpi.im());
    b.d("t1", dtheta[0].re());
    b.d("t2", dtheta[0].im());
    b.d("t3", dtheta[1].re());
    b.d("t4", dtheta[1].im());
    b.d("a1", (&dkappa[0][0] * mi).re() + curv(0));
    b.d("a2", (&dkappa[1][1] * mi).re() + curv(1));
    b.d("b1", dkappa[0][1].re() + curv(2));
    b.d("b2", dkappa[0][1].im() + curv(3));
    b
}

/// Least-squares curvature constants making d² = 0, with the solve diagnostics.
#[derive(Debug, Clone)]
pub struct CurvatureSolve {
    /// [κ generator][semibasic pair] in the order a1, a2, b1, b2.
    pub constants: [[f64; 15]; 4],
    pub residual: f64,
    pub nullity: usize,
}

/// Solves for the κ-curvature at λ. Every d² condition is affine in the unknown constants,
/// so one linear least-squares solve (minimum norm) determines them.
pub fn curvature_solve(lambda: f64) -> Result<CurvatureSolve, G2Error> {
    curvature_solve_with(&NegCoefficients::new(lambda))
}

/// As [`curvature_solve`], with explicit structure coefficients.
pub fn curvature_solve_with(c: &NegCoefficients) -> Result<CurvatureSolve, G2Error> {
    let names: Vec<Vec<String>> = (0..4)
        .map(|gi| (0..15).map(|m| format!("c{gi}_{m}")).collect())
        .collect();
    let curvature: [[Expr; 15]; 4] =
        std::array::from_fn(|gi| std::array::from_fn(|m| Expr::named(&names[gi][m])));
    let mut b = model("curvature", c, &curvature);
    for row in &names {
        for n in row {
            b.constant(n, 0.0, 0.0);
        }
    }
    let m = b.build()?;
    let forms = m.d_squared_forms()?;
    let base = Assignment::new();
    let masks3 = all_masks(RAW.len(), 3);
    let eval_all = |a: &Assignment| -> Result<Vec<f64>, G2Error> {
        let mut ev = crate::symexpr::Evaluator::new(a);
        let mut out = Vec::new();
        for (name, f) in &forms {
            let vals: std::collections::HashMap<Mask, _> = f
                .eval(&mut ev)
                .map_err(|source| G2Error::Eval {
                    context: name.clone(),
                    source,
                })?
                .into_iter()
                .collect();
            for mask in &masks3 {
                let v = vals.get(mask).copied().unwrap_or_default();
                out.push(v.re);
                out.push(v.im);
            }
        }
        Ok(out)
    };
    let mut zero = base.clone();
    for row in &names {
        for n in row {
            zero.set(n, 0.0);
        }
    }
    let b0 = eval_all(&zero)?;
    let n = 60;
    let mut jac = DMatrix::<f64>::zeros(b0.len(), n);
    for k in 0..n {
        let mut a = zero.clone();
        a.set(&names[k / 15][k % 15], 1.0);
        let v = eval_all(&a)?;
        for (i, x) in v.iter().enumerate() {
            jac[(i, k)] = x - b0[i];
        }
    }
    let rhs = -DVector::from_vec(b0);
    let svd = jac.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = 1e-10 * smax.max(1.0);
    let nullity = svd.singular_values.iter().filter(|s| **s <= eps).count()
        + n.saturating_sub(svd.singular_values.len());
    let x = svd
        .solve(&rhs, eps)
        .map_err(|_| G2Error::RankDeficient(n - nullity))?;
    let residual = (&jac * &x - &rhs).amax();
    let constants = std::array::from_fn(|gi| std::array::from_fn(|m| x[gi * 15 + m]));
    Ok(CurvatureSolve {
        constants,
        residual,
        nullity,
    })
}

fn all_masks(n: usize, k: usize) -> Vec<Mask> {
    (0..(1u64 << n))
        .filter(|m| m.count_ones() as usize == k)
        .collect()
}

/// Frozen curvature constants: (κ generator, semibasic pair index, value).
type Frozen = &'static [(usize, usize, f64)];

fn frozen_to_exprs(f: Frozen) -> [[Expr; 15]; 4] {
    let mut out: [[Expr; 15]; 4] = std::array::from_fn(|_| std::array::from_fn(|_| Expr::zero()));
    for (gi, m, v) in f {
        out[*gi][*m] = Expr::c(*v);
    }
    out
}

pub(crate) const FROZEN_M18: Frozen = &[(0, 0, 4.5), (1, 0, 4.5)];
pub(crate) const FROZEN_34: Frozen = &[
    (0, 0, 25.0 / 18.0),
    (0, 5, -20.0 / 9.0),
    (1, 0, 25.0 / 18.0),
    (1, 14, -20.0 / 9.0),
    (2, 8, 10.0 / 9.0),
    (2, 13, 10.0 / 9.0),
    (3, 9, 10.0 / 9.0),
    (3, 12, -10.0 / 9.0),
];

fn raw_model(id: &str, c: &NegCoefficients, frozen: Frozen) -> Result<Model, G2Error> {
    let mut b = model(id, c, &frozen_to_exprs(frozen));
    b.scalar("r", g(0), Sample::uniform(0.5, 2.0));
    b.note("A = H = 0 reduction over N with dr; heptad nu = r^p varpi, eta = r^q theta");
    Ok(b.build()?)
}

/// φ in the raw frame: i/2 dr∧(r^{2p} ϖϖ̄ + r^{2q} θ_aθ̄_a) + r^{p+2q} Re(ϖθ₁θ₂).
fn phi_raw(c: &NegCoefficients) -> FieldForm {
    let r = Expr::var("r");
    let rp = r.pow(c.p.0, c.p.1);
    let rq = r.pow(c.q.0, c.q.1);
    let f = frame();
    let tt = f.theta[0].w(&f.theta[0].conj()) + f.theta[1].w(&f.theta[1].conj());
    let vv = f.varpi.w(&f.varpi.conj());
    let cubic = f.varpi.w(&f.theta[0]).w(&f.theta[1]).re();
    g(0).w(&(&vv * (&rp * &rp) + &tt * (&rq * &rq)))
        .scale(&Expr::cc(cx(0.0, 0.5)))
        .re()
        + cubic * (&rp * &rq * &rq)
}

fn build_entry(
    id: &str,
    lambda: f64,
    frozen: Frozen,
    nearly_kahler: bool,
) -> Result<Built, G2Error> {
    let c = NegCoefficients::new(lambda);
    let raw = raw_model(id, &c, frozen)?;
    let r = Expr::var("r");
    let rp = r.pow(c.p.0, c.p.1);
    let rq = r.pow(c.q.0, c.q.1);
    let f = frame();
    let i = cx(0.0, 1.0);
    let dr = g(0);
    let tt = f.theta[0].w(&f.theta[0].conj()) + f.theta[1].w(&f.theta[1].conj());
    let vv = f.varpi.w(&f.varpi.conj());
    let phi_raw = phi_raw(&c);

    let mut forms = vec![dr.clone()];
    for j in 1..3 {
        forms.push(g(j) * rp.clone());
    }
    for j in 3..7 {
        forms.push(g(j) * rq.clone());
    }
    let mut inverse = vec![dr.clone()];
    for j in 1..3 {
        inverse.push(g(j) * rp.recip());
    }
    for j in 3..7 {
        inverse.push(g(j) * rq.recip());
    }
    for j in KAPPA..RAW.len() {
        forms.push(g(j));
        inverse.push(g(j));
    }
    let mut names: Vec<String> = HEPTAD.iter().map(|s| s.to_string()).collect();
    names.extend(RAW[KAPPA..].iter().map(|s| s.to_string()));
    let fc = FrameChange {
        names,
        forms,
        inverse,
    };
    let field = reframe(raw, fc.clone(), &phi_raw)?;

    let mut extras = Vec::new();
    let f_expr = r.recip() * c.f_r;
    let tau_claim = (FieldForm::monomial(&[1, 2], Expr::c(-2.0))
        + FieldForm::monomial(&[3, 4], Expr::one())
        + FieldForm::monomial(&[5, 6], Expr::one()))
        * (&f_expr * 4.0);
    extras.push(Extra::new("tau_form", 1.0, move |ctx| {
        Ok(sup_over(
            &[("tau".into(), &ctx.torsion.tau - &tau_claim)],
            ctx.points,
        )?)
    }));
    if nearly_kahler {
        let omega_t = (&vv * (25.0 / 36.0) + &tt * (10.0 / 9.0)) * (i * 0.5);
        let ups_t = f.varpi.w(&f.theta[0]).w(&f.theta[1]) * (25.0 / 27.0);
        let omega_h = rewrite_form(&fc, &omega_t.re());
        let re_ups = rewrite_form(&fc, &ups_t.re());
        let im_ups = rewrite_form(&fc, &ups_t.im());
        extras.push(Extra::new("nearly_kahler", 1.0, move |ctx| {
            let m: &Model = &ctx.field.model;
            let a = m.d(&omega_h)? - &re_ups * 3.0;
            let b = m.d(&im_ups)? + omega_h.w(&omega_h) * 2.0;
            Ok(sup_over(
                &[("dOmega".into(), a), ("dImUpsilon".into(), b)],
                ctx.points,
            )?)
        }));
    }
    Ok(Built {
        field,
        flow: None,
        soliton: None,
        extras,
    })
}

pub(super) fn build_m1() -> Result<Built, G2Error> {
    build_entry("neg_m1_flat", -1.0, &[], false)
}

pub(super) fn build_m18() -> Result<Built, G2Error> {
    build_entry("neg_m18_twistor", -1.0 / 8.0, FROZEN_M18, false)
}

pub(super) fn build_25() -> Result<Built, G2Error> {
    build_entry("neg_25_t2bundle", 2.0 / 5.0, &[], false)
}

pub(super) fn build_34() -> Result<Built, G2Error> {
    build_entry("neg_34_twistor", 3.0 / 4.0, FROZEN_34, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frozen_dense(f: Frozen) -> [[f64; 15]; 4] {
        let mut out = [[0.0; 15]; 4];
        for (gi, m, v) in f {
            out[*gi][*m] = *v;
        }
        out
    }

    #[test]
    fn frozen_curvature_is_reproduced() {
        for (lambda, frozen) in [
            (-1.0, &[][..]),
            (-0.125, FROZEN_M18),
            (0.4, &[][..]),
            (0.75, FROZEN_34),
        ] {
            let s = curvature_solve(lambda).unwrap();
            assert!(s.residual < 1e-12, "lambda {lambda}: {}", s.residual);
            assert_eq!(s.nullity, 0);
            let want = frozen_dense(frozen);
            for gi in 0..4 {
                for m in 0..15 {
                    assert!(
                        (s.constants[gi][m] - want[gi][m]).abs() < 1e-10,
                        "lambda {lambda} [{gi}][{m}]"
                    );
                }
            }
        }
    }

    #[test]
    fn reduced_coefficients_at_the_four_values() {
        let m1 = NegCoefficients::new(-1.0);
        assert_eq!((m1.p, m1.q), ((1, 3), (-1, 6)));
        assert!(m1.c_tt.norm() < 1e-15 && m1.c_vt.norm() < 1e-15);
        let m18 = NegCoefficients::new(-0.125);
        assert!(m18.c_tt.norm() < 1e-15);
        assert!((m18.c_vt - cx(0.0, -3.0)).norm() < 1e-12);
        let t25 = NegCoefficients::new(0.4);
        assert!((t25.c_tt - cx(0.0, 3.0)).norm() < 1e-12);
        assert!(t25.c_vt.norm() < 1e-15);
        let t34 = NegCoefficients::new(0.75);
        assert!((t34.c_tt - cx(0.0, -4.0 / 3.0)).norm() < 1e-12);
        assert!((t34.c_vt - cx(0.0, 5.0 / 3.0)).norm() < 1e-12);
        assert_eq!(t34.lambda, 0.75);
    }

    #[test]
    fn closure_fixes_the_theta_coefficient() {
        for (lambda, frozen) in [(-0.125, FROZEN_M18), (0.75, FROZEN_34)] {
            let closure = |c: &NegCoefficients| {
                let raw = raw_model("t", c, frozen).unwrap();
                let pts = raw.sample_points(6, 9).unwrap();
                sup_over(&[("dphi".into(), raw.d(&phi_raw(c)).unwrap())], &pts).unwrap()
            };
            let mut c = NegCoefficients::new(lambda);
            assert!(closure(&c) < 1e-12);
            c.c_vt *= 0.5;
            assert!(closure(&c) > 0.1);
        }
    }
}
