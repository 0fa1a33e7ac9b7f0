//! A 1/3-quadratic structure with non-special torsion on ℝ₊ × (SL(2,ℝ) ⋉ ℝ⁴)/S¹.

use super::{reframe, Built, HEPTAD};
use crate::coframe::{FieldForm, FrameChange, ModelBuilder, Sample};
use crate::g2ops::G2Error;
use crate::symexpr::Expr;

const RAW: [&str; 8] = ["dr", "n0", "n1", "n2", "n3", "a1", "a2", "a3"];

fn g(name: &str) -> FieldForm {
    FieldForm::gen(RAW.iter().position(|n| *n == name).unwrap())
}

/// Entries of the 5×5 Maurer–Cartan matrix (row, col, coefficient, generator).
const MC: [(usize, usize, f64, &str); 14] = [
    (1, 0, 1.0, "n0"),
    (2, 0, 1.0, "n1"),
    (3, 0, 1.0, "n2"),
    (4, 0, 1.0, "n3"),
    (1, 1, 3.0, "a1"),
    (1, 2, 1.0, "a2"),
    (2, 1, 3.0, "a3"),
    (2, 2, 1.0, "a1"),
    (2, 3, 2.0, "a2"),
    (3, 2, 2.0, "a3"),
    (3, 3, -1.0, "a1"),
    (3, 4, 3.0, "a2"),
    (4, 3, 1.0, "a3"),
    (4, 4, -3.0, "a1"),
];

fn mc_matrix() -> Vec<Vec<FieldForm>> {
    let mut m = vec![vec![FieldForm::zero(1); 5]; 5];
    for (r, c, k, n) in MC {
        m[r][c] = &m[r][c] + &g(n) * k;
    }
    m
}

/// d(entry) = −(μ∧μ)_{rc}, divided by the entry's coefficient.
fn mc_differential(m: &[Vec<FieldForm>], r: usize, c: usize, k: f64) -> FieldForm {
    let mut acc = FieldForm::zero(2);
    for j in 0..5 {
        acc = acc - m[r][j].w(&m[j][c]);
    }
    acc * (1.0 / k)
}

/// β2..β7 and κ in the raw basis.
fn betas() -> ([FieldForm; 6], FieldForm) {
    let b = [
        g("n2") - g("n0"),
        g("n1") - g("n3"),
        g("a1") * 2.0,
        g("a2") + g("a3"),
        g("n1") * (-1.0 / 15.0) - g("n3") * 0.2,
        g("n0") * 0.2 + g("n2") * (1.0 / 15.0),
    ];
    (b, g("a2") - g("a3"))
}

/// Coefficients of dr∧β23, dr∧β45, dr∧β67 and of the β-cubic in φ. Closure forces
/// 75c₁ − c₃ + 10c₄′ = 0, which fixes c₃ = 15r⁻³.
pub(crate) fn coefficients(r: &Expr) -> [Expr; 4] {
    [
        r.powi(-3),
        r.powi(2) * 6.0,
        r.powi(-3) * 15.0,
        r.powi(-2) * 3.0,
    ]
}

/// Scale factors with ω_i = s_i β_i (β1 = dr).
pub(crate) fn scales(r: &Expr) -> [Expr; 7] {
    let [c1, c2, c3, c4] = coefficients(r);
    let s1 = (&c1 * &c2 * &c3 / (&c4 * &c4)).pow(1, 3);
    let s2 = (c1 / &s1).sqrt();
    let s4 = (c2 / &s1).sqrt();
    let s6 = (c3 / &s1).sqrt();
    [s1, s2.clone(), s2, s4.clone(), s4, s6.clone(), s6]
}

fn raw_model() -> Result<crate::coframe::Model, G2Error> {
    let mut b = ModelBuilder::new("third_quadratic", &RAW);
    let m = mc_matrix();
    b.d("dr", FieldForm::zero(2));
    b.d("n0", mc_differential(&m, 1, 0, 1.0));
    b.d("n1", mc_differential(&m, 2, 0, 1.0));
    b.d("n2", mc_differential(&m, 3, 0, 1.0));
    b.d("n3", mc_differential(&m, 4, 0, 1.0));
    b.d("a1", mc_differential(&m, 2, 2, 1.0));
    b.d("a2", mc_differential(&m, 1, 2, 1.0));
    b.d("a3", mc_differential(&m, 4, 3, 1.0));
    b.scalar("r", g("dr"), Sample::uniform(0.5, 2.0));
    b.note("Maurer-Cartan form of SL(2,R) x| Sym^3 R^2 times the half-line");
    Ok(b.build()?)
}

fn phi_raw(c: [Expr; 4]) -> FieldForm {
    let (beta, _) = betas();
    let [c1, c2, c3, c4] = c;
    g("dr").w(&(beta[0].w(&beta[1]) * c1 + beta[2].w(&beta[3]) * c2 + beta[4].w(&beta[5]) * c3))
        + (beta[0].w(&beta[2]).w(&beta[4])
            - beta[0].w(&beta[3]).w(&beta[5])
            - beta[1].w(&beta[3]).w(&beta[4])
            - beta[1].w(&beta[2]).w(&beta[5]))
            * c4
}

pub(super) fn build() -> Result<Built, G2Error> {
    let raw = raw_model()?;
    let r = Expr::var("r");
    let (beta, kappa) = betas();
    let dr = g("dr");
    let phi_raw = phi_raw(coefficients(&r));

    let s = scales(&r);
    let mut forms = vec![&dr * &s[0]];
    for (i, bi) in beta.iter().enumerate() {
        forms.push(bi * &s[i + 1]);
    }
    forms.push(kappa);

    // Old generators in the new basis: β_i = ω_i/s_i.
    let w = |i: usize| FieldForm::gen(i - 1) * s[i - 1].recip();
    let kap = FieldForm::gen(7);
    let inverse = vec![
        w(1),
        (w(7) * 15.0 - w(2)) * 0.25,
        (w(3) * 3.0 - w(6) * 15.0) * 0.25,
        (w(2) * 3.0 + w(7) * 15.0) * 0.25,
        (w(6) * 15.0 + w(3)) * -0.25,
        w(4) * 0.5,
        (w(5) + &kap) * 0.5,
        (w(5) - &kap) * 0.5,
    ];
    let mut names: Vec<String> = HEPTAD.iter().map(|s| s.to_string()).collect();
    names.push("kap".into());
    let fc = FrameChange {
        names,
        forms,
        inverse,
    };
    let field = reframe(raw, fc, &phi_raw)?;
    Ok(Built::plain(field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coframe::sup_over;

    #[test]
    fn closure_pins_the_dr_beta67_coefficient() {
        let raw = raw_model().unwrap();
        let pts = raw.sample_points(10, 3).unwrap();
        let r = Expr::var("r");
        let res = |c| sup_over(&[("dphi".into(), raw.d(&phi_raw(c)).unwrap())], &pts).unwrap();
        assert!(res(coefficients(&r)) < 1e-12);
        let printed = [
            r.powi(-3),
            r.powi(2) * 6.0,
            r.powi(-2) * 15.0,
            r.powi(-2) * 3.0,
        ];
        assert!(res(printed) > 1e-3);
    }
}
