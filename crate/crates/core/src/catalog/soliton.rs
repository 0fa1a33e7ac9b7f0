//! Steady gradient solitons on ℝ × N with V = v(r)∂_r.

use super::{reframe, Built, CheckCtx, Extra, SolitonSpec, HEPTAD};
use crate::coframe::{FieldForm, FrameChange, Model, ModelBuilder, Sample};
use crate::g2ops::G2Error;
use crate::symexpr::{Assignment, Evaluator, Expr};

const GRID: usize = 50;
const R_LO: f64 = -3.0;
const R_HI: f64 = 3.0;

fn grid() -> Vec<f64> {
    (0..GRID)
        .map(|i| R_LO + (R_HI - R_LO) * i as f64 / (GRID - 1) as f64)
        .collect()
}

fn g(i: usize) -> FieldForm {
    FieldForm::gen(i)
}

/// dη = −M∧η for the connection matrix M (η at generators `eta..eta+4`). With dξ = −2ξ∧ξ
/// this is the sign for which d² = 0.
fn act(m: &[[FieldForm; 4]; 4], eta: usize) -> [FieldForm; 4] {
    std::array::from_fn(|a| {
        let mut acc = FieldForm::zero(2);
        for (b, mab) in m[a].iter().enumerate() {
            acc = acc - mab.w(&g(eta + b));
        }
        acc
    })
}

/// dξ_i = −2 ξ_j∧ξ_k for (i, j, k) cyclic, starting at generator `base`.
fn su2(b: &mut ModelBuilder, base: usize) {
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        b.d_index(base + i, g(base + j).w(&g(base + k)) * -2.0);
    }
}

/// Evaluates `e` at every grid point and returns the largest modulus.
fn sup_on_grid(ctx: &CheckCtx, exprs: &[Expr]) -> Result<f64, G2Error> {
    let pts = grid_points(&ctx.field.model, ctx.seed)?;
    let mut worst: f64 = 0.0;
    for p in &pts {
        let mut ev = Evaluator::new(p);
        for e in exprs {
            let v = ev.eval(e).map_err(|source| G2Error::Eval {
                context: "soliton grid".into(),
                source,
            })?;
            worst = worst.max(v.norm());
        }
    }
    Ok(worst)
}

fn grid_points(m: &Model, seed: u64) -> Result<Vec<Assignment>, G2Error> {
    let gr = grid();
    Ok(m.sample_points_with(GRID, seed, Some(("r", &gr)))?)
}

/// d/dr of a function of the sampled scalars, read off from its differential.
fn ddr(m: &Model, e: &Expr) -> Result<Expr, G2Error> {
    Ok(m.d_fn(e)?.get(1))
}

fn soliton_spec(v: Expr) -> Option<SolitonSpec> {
    Some(SolitonSpec {
        v: vec![v],
        c: 0.0,
        grid_var: "r".into(),
        grid: grid(),
    })
}

/// Ratio of the heptad volume ω₁∧…∧ω₇ to the raw coordinate volume.
fn volume_density(fc: &FrameChange) -> Expr {
    let mut acc = FieldForm::scalar(Expr::one());
    for f in &fc.forms[..7] {
        acc = acc.w(f);
    }
    let (_, e) = acc.terms().iter().next().expect("heptad is a coframe");
    e.clone()
}

/// Twistor space of a flat anti-self-dual base; f via Lambert W.
pub(super) fn build_twistor() -> Result<Built, G2Error> {
    twistor(Expr::one())
}

/// The twistor soliton with g multiplied by `g_factor` (a function of r).
fn twistor(g_factor: Expr) -> Result<Built, G2Error> {
    const RAW: [&str; 11] = [
        "dr", "z1", "z2", "z3", "x1", "x2", "x3", "e1", "e2", "e3", "e4",
    ];
    let mut b = ModelBuilder::new("soliton_twistor", &RAW);
    let (z, x) = (|i: usize| g(i), |i: usize| g(3 + i));
    let m: [[FieldForm; 4]; 4] = [
        [
            FieldForm::zero(1),
            z(1) + x(1),
            z(2) - x(2),
            z(3) * -1.0 - x(3),
        ],
        [
            z(1) * -1.0 - x(1),
            FieldForm::zero(1),
            z(3) * -1.0 + x(3),
            z(2) * -1.0 - x(2),
        ],
        [
            z(2) * -1.0 + x(2),
            z(3) - x(3),
            FieldForm::zero(1),
            z(1) - x(1),
        ],
        [
            z(3) + x(3),
            z(2) + x(2),
            z(1) * -1.0 + x(1),
            FieldForm::zero(1),
        ],
    ];
    b.d("dr", FieldForm::zero(2));
    su2(&mut b, 1);
    su2(&mut b, 4);
    for (a, f) in act(&m, 7).into_iter().enumerate() {
        b.d_index(7 + a, f);
    }
    b.constant("k1", -2.0, -0.5);
    b.constant("k2", -2.0, -0.5);
    b.scalar("r", g(0), Sample::uniform(R_LO, R_HI));
    b.note("flat ASD base (W = 0); f from the Lambert W closed form");
    let raw = b.build()?;

    let (k1, k2, r) = (Expr::named("k1"), Expr::named("k2"), Expr::var("r"));
    // f′ = −2(f − k₁)/f, so the Lambert argument carries e^{−2r/k₁}.
    let w_arg = -(&r * -2.0 / &k1).exp() / &k1;
    let w = w_arg.lambert_w();
    let f = &k1 * (&w + 1.0);
    let g2 = (&f - &k1) / (&k1 * &k2 * &f);
    let gg = g2.sqrt() * g_factor;
    let g2 = &gg * &gg;
    let v = -(&k1 * 2.0) / (&f * &f);

    let eta = |i: usize| g(6 + i);
    let forms = vec![
        g(0),
        g(2) * f.clone(),
        g(3) * f.clone(),
        eta(1) * gg.clone(),
        eta(2) * gg.clone(),
        eta(4) * -&gg,
        eta(3) * gg.clone(),
        g(1),
        g(4),
        g(5),
        g(6),
    ];
    let (fi, gi) = (f.recip(), gg.recip());
    let w_ = |i: usize| g(i - 1);
    let inverse = vec![
        w_(1),
        g(7),
        w_(2) * fi.clone(),
        w_(3) * fi,
        g(8),
        g(9),
        g(10),
        w_(4) * gi.clone(),
        w_(5) * gi.clone(),
        w_(7) * gi.clone(),
        w_(6) * -&gi,
    ];
    let mut names: Vec<String> = HEPTAD.iter().map(|s| s.to_string()).collect();
    names.extend(["z1", "x1", "x2", "x3"].map(String::from));
    let fc = FrameChange {
        names,
        forms,
        inverse,
    };

    let e = |i: usize| g(6 + i);
    let z = |i: usize| g(i);
    let vol_f = z(2).w(&z(3));
    let omega_x = e(1).w(&e(2)) + e(3).w(&e(4));
    let gamma = z(3).w(&(e(3).w(&e(1)) + e(2).w(&e(4)))) + z(2).w(&(e(4).w(&e(1)) + e(3).w(&e(2))));
    let phi_raw = g(0).w(&(vol_f * (&f * &f) + omega_x * g2.clone())) + gamma * (&f * &g2);
    let field = reframe(raw, fc.clone(), &phi_raw)?;

    let vol = volume_density(&fc);
    let mut extras = Vec::new();
    {
        let (w, w_arg) = (w.clone(), w_arg.clone());
        extras.push(Extra::new("lambert_identity", 1e-3, move |ctx| {
            // Relative to max(1, |x|): the argument reaches ~1e5 on the grid.
            let scale = (&w_arg * &w_arg + 1.0).sqrt();
            sup_on_grid(ctx, &[(&w * w.exp() - &w_arg) / scale])
        }));
    }
    {
        let (f, gg, v) = (f.clone(), gg.clone(), v.clone());
        extras.push(Extra::new("ode_reduction", 1.0, move |ctx| {
            let m = &ctx.field.model;
            let (fp, gp, vp) = (ddr(m, &f)?, ddr(m, &gg)?, ddr(m, &v)?);
            let closed = &gp + &gg * (&fp + 2.0) / (&f * 2.0);
            let ode_f = &fp + &v * &f + 2.0;
            let ode_v = &vp - &v * (&f * &v + 2.0) * 2.0 / &f;
            let conserved = ddr(m, &(&f * &f * &v))?;
            sup_on_grid(ctx, &[closed, ode_f, ode_v, conserved])
        }));
    }
    {
        let (f, v) = (f.clone(), v.clone());
        let k1 = k1.clone();
        extras.push(Extra::new("gradient_potential", 1.0, move |ctx| {
            // V♭ = v ω₁ and dh = h′(r) dr with h′ = −2k₁/f².
            let h_prime = -(&k1 * 2.0) / (&f * &f);
            sup_on_grid(ctx, &[&v - h_prime])
        }));
    }
    {
        let (f, k1, k2) = (f.clone(), k1.clone(), k2.clone());
        extras.push(Extra::new("volume_density", 1.0, move |ctx| {
            let claim = (&f - &k1) * (&f - &k1) / (&k1 * &k1 * &k2 * &k2);
            sup_on_grid(ctx, &[&vol - claim])
        }));
    }
    Ok(Built {
        field,
        flow: None,
        soliton: soliton_spec(v),
        extras,
    })
}

/// T²-bundle over a flat hyperkähler 4-manifold; f defined implicitly.
pub(super) fn build_hk() -> Result<Built, G2Error> {
    const RAW: [&str; 10] = ["dr", "p1", "p2", "e1", "e2", "e3", "e4", "x1", "x2", "x3"];
    let mut b = ModelBuilder::new("soliton_hk", &RAW);
    let e = |i: usize| g(2 + i);
    let x = |i: usize| g(6 + i);
    let zero = FieldForm::zero(1);
    let m: [[FieldForm; 4]; 4] = [
        [zero.clone(), x(1), x(2) * -1.0, x(3) * -1.0],
        [x(1) * -1.0, zero.clone(), x(3), x(2) * -1.0],
        [x(2), x(3) * -1.0, zero.clone(), x(1) * -1.0],
        [x(3), x(2), x(1), zero],
    ];
    b.d("dr", FieldForm::zero(2));
    b.d("p1", e(1).w(&e(3)) + e(4).w(&e(2)));
    b.d("p2", e(4).w(&e(1)) + e(3).w(&e(2)));
    for (a, f) in act(&m, 3).into_iter().enumerate() {
        b.d_index(3 + a, f);
    }
    su2(&mut b, 7);
    b.constant("k1", 0.5, 2.0);
    b.constant("k2", 0.5, 2.0);
    let (k1, k2, r, f) = (
        Expr::named("k1"),
        Expr::named("k2"),
        Expr::var("r"),
        Expr::var("f"),
    );
    let k1f = &k1 - &f;
    let lhs = (f.log() - k1f.log()) * (&k2 * &k2 * 2.0 / k1.powi(3))
        + (k1f.recip() - f.recip()) * (&k2 * &k2 / (&k1 * &k1));
    // Closure needs f decreasing, so the defining relation is lhs(f) = −r.
    let fp = -(&f * &f * &k1f * &k1f) / (&k2 * &k2);
    b.scalar("r", g(0), Sample::uniform(R_LO, R_HI));
    b.scalar(
        "f",
        g(0) * fp.clone(),
        Sample::Implicit {
            equation: &lhs + &r,
            lo: Expr::zero(),
            hi: k1.clone(),
        },
    );
    b.note("flat hyperkahler base; f solves the implicit relation by bracketed root finding");
    let raw = b.build()?;

    let gg = &k2 / (&f * &k1f).sqrt();
    let g2 = &gg * &gg;
    let v = -(&k1 * 2.0) / &g2;
    let forms = vec![
        g(0),
        g(2) * -&f,
        g(1) * f.clone(),
        e(1) * gg.clone(),
        e(2) * gg.clone(),
        e(3) * gg.clone(),
        e(4) * gg.clone(),
        x(1),
        x(2),
        x(3),
    ];
    let (fi, gi) = (f.recip(), gg.recip());
    let w_ = |i: usize| g(i - 1);
    let inverse = vec![
        w_(1),
        w_(3) * fi.clone(),
        w_(2) * -&fi,
        w_(4) * gi.clone(),
        w_(5) * gi.clone(),
        w_(6) * gi.clone(),
        w_(7) * gi,
        g(7),
        g(8),
        g(9),
    ];
    let mut names: Vec<String> = HEPTAD.iter().map(|s| s.to_string()).collect();
    names.extend(["x1", "x2", "x3"].map(String::from));
    let fc = FrameChange {
        names,
        forms,
        inverse,
    };

    let p = |i: usize| g(i);
    let om_i = e(1).w(&e(2)) + e(3).w(&e(4));
    let om_j = e(1).w(&e(3)) + e(4).w(&e(2));
    let om_k = e(4).w(&e(1)) + e(3).w(&e(2));
    let fg2 = &f * &g2;
    let phi_raw = g(0).w(&(p(1).w(&p(2)) * (&f * &f) + om_i * g2.clone()))
        - p(2).w(&om_j) * fg2.clone()
        + p(1).w(&om_k) * fg2;
    let field = reframe(raw, fc.clone(), &phi_raw)?;

    let vol = volume_density(&fc);
    let mut extras = Vec::new();
    {
        let lhs = lhs.clone();
        extras.push(Extra::new("implicit_inversion", 1e-3, move |ctx| {
            sup_on_grid(ctx, &[&lhs + Expr::var("r")])
        }));
    }
    {
        let (f, gg, v) = (f.clone(), gg.clone(), v.clone());
        extras.push(Extra::new("ode_reduction", 1.0, move |ctx| {
            let m = &ctx.field.model;
            let (fp, gp, vp) = (ddr(m, &f)?, ddr(m, &gg)?, ddr(m, &v)?);
            let g2 = &gg * &gg;
            let closed = &gp + (&fp * &g2 + &f * &f) / (&f * &gg * 2.0);
            let ode_f = &fp - &f * (&g2 * &v + &f * 2.0) / (&g2 * 2.0);
            let ode_g = &gp + (&g2 * &v + &f * 4.0) / (&gg * 4.0);
            let ode_v = &vp - &v * (&g2 * &v + &f * 4.0) / (&g2 * 2.0);
            let conserved = ddr(m, &(&g2 * &v))?;
            sup_on_grid(ctx, &[closed, ode_f, ode_g, ode_v, conserved])
        }));
    }
    {
        let (f, v, k1, k2) = (f.clone(), v.clone(), k1.clone(), k2.clone());
        extras.push(Extra::new("gradient_potential", 1.0, move |ctx| {
            let h_prime = -(&k1 * 2.0 / (&k2 * &k2)) * &f * (&k1 - &f);
            sup_on_grid(ctx, &[&v - h_prime])
        }));
    }
    {
        let (k1f, k2) = (k1f.clone(), k2.clone());
        extras.push(Extra::new("volume_density", 1.0, move |ctx| {
            let claim = k2.powi(4) / (&k1f * &k1f);
            sup_on_grid(ctx, &[&vol - claim])
        }));
    }
    Ok(Built {
        field,
        flow: None,
        soliton: soliton_spec(v),
        extras,
    })
}
