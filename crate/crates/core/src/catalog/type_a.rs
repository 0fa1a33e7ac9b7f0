//! Type A Weierstrass construction on ℝ × Σ × ℂ² with g(z₁) = z₁²/2, in coordinates.

use super::{reframe, Built, HEPTAD};
use crate::coframe::{FieldForm, FrameChange, ModelBuilder, Sample};
use crate::g2ops::{FlowSplit, G2Error};
use crate::symexpr::Expr;

const RAW: [&str; 7] = ["dr", "dx1", "dy1", "dx2", "dy2", "dx3", "dy3"];
const COORDS: [&str; 7] = ["r", "x1", "y1", "x2", "y2", "x3", "y3"];

/// Sign of the dz̄₂ term in θ̄₂; closure of φ selects it.
pub(crate) const THETA2_SIGN: f64 = -1.0;

fn g(i: usize) -> FieldForm {
    FieldForm::gen(i)
}

fn dz(j: usize) -> FieldForm {
    g(2 * j - 1) + g(2 * j) * Expr::i()
}

fn z(j: usize) -> Expr {
    Expr::var(COORDS[2 * j - 1]) + Expr::var(COORDS[2 * j]) * Expr::i()
}

/// The holomorphic datum and its first two derivatives at z₁.
fn datum(z1: &Expr) -> (Expr, Expr, Expr) {
    (z1 * z1 * 0.5, z1.clone(), Expr::one())
}

pub(super) fn build() -> Result<Built, G2Error> {
    build_with(THETA2_SIGN)
}

pub(crate) fn build_with(theta2_sign: f64) -> Result<Built, G2Error> {
    let mut b = ModelBuilder::new("weierstrass_typeA", &RAW);
    b.closed(&RAW);
    b.constant("k", 0.5, 1.5);
    b.scalar("r", g(0), Sample::uniform(-0.5, 0.5));
    b.scalar("x1", g(1), Sample::uniform(-0.6, 0.6));
    b.scalar("y1", g(2), Sample::uniform(-0.6, 0.6));
    for (i, c) in COORDS.iter().enumerate().skip(3) {
        b.scalar(c, g(i), Sample::uniform(-1.0, 1.0));
    }
    b.note("coordinate coframe on R x disc x C^2");
    let raw = b.build()?;

    let (k, r) = (Expr::named("k"), Expr::var("r"));
    let (z1, zb1) = (z(1), z(1).conj());
    let (gz, gp, gpp) = datum(&z1);
    let s2 = Expr::one() - &z1 * &zb1;
    let s = s2.sqrt();
    let i = Expr::i();

    let theta1 = dz(1) * (&gpp * &s);
    let nu1 = (dz(2) - dz(2).conj() * z1.clone()) * (&i / &s);
    let theta2_bar = dz(3)
        + (dz(2) * gp.clone() + dz(2).conj() * ((&z1 * &gp - &gz) * theta2_sign)) * (&k * 2.0);
    let theta2 = theta2_bar.conj();

    let (ea, eb, ec) = (
        (&r * &k * 2.0).exp(),
        (&r * &k * -1.0).exp(),
        (&r * &k).exp(),
    );
    let a = nu1 * ea.clone();
    let bb = theta1 * eb.clone();
    let c = theta2 * ec.clone();
    let forms = vec![g(0), a.re(), a.im(), bb.re(), bb.im(), c.re(), c.im()];

    // Inverse: the coordinate differentials in terms of A = ω₂ + iω₃, B = ω₄ + iω₅, C = ω₆ + iω₇.
    let w = |j: usize| g(j - 1);
    let (ca, cb, cc) = (
        w(2) + w(3) * i.clone(),
        w(4) + w(5) * i.clone(),
        w(6) + w(7) * i.clone(),
    );
    let dz1 = cb * (ec.clone() / (&gpp * &s));
    let a_prime = ca * (-&i * &s / &ea);
    let dz2 = (&a_prime + a_prime.conj() * z1.clone()) * s2.recip();
    let dz3 = cc.conj() * eb.clone()
        - (dz2.clone() * gp.clone() + dz2.conj() * ((&z1 * &gp - &gz) * theta2_sign)) * (&k * 2.0);
    let inverse = vec![
        w(1),
        dz1.re(),
        dz1.im(),
        dz2.re(),
        dz2.im(),
        dz3.re(),
        dz3.im(),
    ];
    let fc = FrameChange {
        names: HEPTAD.iter().map(|s| s.to_string()).collect(),
        forms: forms.clone(),
        inverse,
    };

    // φ = i/2 dr∧(AĀ + BB̄ + CC̄) + Re(A∧B∧C), written in the coordinate frame.
    let (a, bb, c) = (
        &forms[1] + &forms[2] * Expr::i(),
        &forms[3] + &forms[4] * Expr::i(),
        &forms[5] + &forms[6] * Expr::i(),
    );
    let herm = a.w(&a.conj()) + bb.w(&bb.conj()) + c.w(&c.conj());
    let phi_raw = (g(0).w(&herm) * (Expr::i() * 0.5)).re() + a.w(&bb).w(&c).re();
    let mut built = Built::plain(reframe(raw, fc, &phi_raw)?);
    built.flow = Some(FlowSplit::standard());
    Ok(built)
}
