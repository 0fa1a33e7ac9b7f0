//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest harness so the
//! lines always reach stdout.

use g2verify::catalog;
use g2verify::coframe::{FieldForm, Model};
use g2verify::g2ops::{j_calibration, G2Field, TorsionType};
use g2verify::multivec::{basis_masks, binom7, characteristic_kernel, lambda2_spectrum, NumForm};
use g2verify::report::{run_with, EntryReport, VerificationReport, VerifyOptions};
use g2verify::Expr;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::process::ExitCode;
use std::time::{Duration, Instant};

const SAMPLES: usize = 100;
const SEED: u64 = 42;

const ERP_IDS: [&str; 6] = [
    "bryant_erp",
    "lauret_GJ",
    "erp_M2",
    "erp_M3_homog",
    "erp_M3_cohom1",
    "weierstrass_typeA",
];
const NEG_IDS: [(&str, f64); 4] = [
    ("neg_m1_flat", -1.0),
    ("neg_m18_twistor", -0.125),
    ("neg_25_t2bundle", 0.4),
    ("neg_34_twistor", 0.75),
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Worst value of the named check over `ids`, failing if any is missing or non-finite.
fn worst(r: &VerificationReport, ids: &[&str], check: &str) -> Result<f64, String> {
    let mut w: f64 = 0.0;
    for id in ids {
        let e = entry(r, id)?;
        let c = e
            .check(check)
            .ok_or_else(|| format!("{id}: no `{check}` check"))?;
        w = w.max(
            c.value
                .ok_or_else(|| format!("{id}: `{check}` not finite"))?,
        );
    }
    Ok(w)
}

fn entry<'a>(r: &'a VerificationReport, id: &str) -> Result<&'a EntryReport, String> {
    let e = r
        .entry(id)
        .ok_or_else(|| format!("{id} missing from report"))?;
    match &e.error {
        Some(err) => Err(format!("{id}: {err}")),
        None => Ok(e),
    }
}

fn bound(
    r: &VerificationReport,
    ids: &[&str],
    check: &str,
    limit: f64,
) -> Result<(bool, String), String> {
    let w = worst(r, ids, check)?;
    Ok((w <= limit, format!("{check} {w:.1e} (<= {limit:.0e})")))
}

fn all_bounds(r: &VerificationReport, ids: &[&str], list: &[(&str, f64)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (check, limit) in list {
        match bound(r, ids, check, *limit) {
            Ok((ok, s)) => {
                pass &= ok;
                parts.push(s);
            }
            Err(s) => {
                pass = false;
                parts.push(s);
            }
        }
    }
    outcome(pass, parts.join(", "))
}

fn random_form(rng: &mut ChaCha8Rng, k: usize) -> NumForm {
    let c: Vec<f64> = (0..binom7(k)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    NumForm::from_real(k, &c)
}

fn algebra_kernel() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut comm, mut star, mut inner): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let p = rng.gen_range(0..=7);
        let q = rng.gen_range(0..=7 - p);
        let (a, b) = (random_form(&mut rng, p), random_form(&mut rng, q));
        let sign = if p * q % 2 == 0 { 1.0 } else { -1.0 };
        comm = comm.max(a.w(&b).sub(&b.w(&a).scale(sign)).sup_norm());
        star = star.max(a.hodge().hodge().sub(&a).sup_norm());
        let c = random_form(&mut rng, p);
        let lhs = NumForm::volume().scale(a.inner(&c).unwrap());
        inner = inner.max(lhs.sub(&a.w(&c.hodge())).sup_norm());
    }
    let spec = lambda2_spectrum();
    let count = |target: f64| {
        spec.iter()
            .filter(|&&x| (x - target).abs() <= 1e-12)
            .count()
    };
    let elapsed = start.elapsed();
    let pass = comm <= 1e-12
        && star <= 1e-12
        && inner <= 1e-12
        && count(2.0) == 7
        && count(-1.0) == 14
        && elapsed < Duration::from_secs(5);
    outcome(
        pass,
        format!(
            "commutativity {comm:.1e}, ** {star:.1e}, inner {inner:.1e}, spectrum 2x{} -1x{}, {elapsed:.2?}",
            count(2.0),
            count(-1.0)
        ),
    )
}

fn structure_consistency() -> Outcome {
    let start = Instant::now();
    let mut w: f64 = 0.0;
    let mut errors = Vec::new();
    for e in catalog::entries().iter().filter(|e| !e.info.stretch) {
        match e.build().map_err(|x| x.to_string()).and_then(|b| {
            b.field
                .model
                .d_squared_residual(SAMPLES, SEED)
                .map_err(|x| x.to_string())
        }) {
            Ok(v) => w = w.max(v),
            Err(s) => errors.push(format!("{}: {s}", e.info.id)),
        }
    }
    let elapsed = start.elapsed();
    let pass = errors.is_empty() && w <= 1e-9 && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "max d^2 {w:.1e} over non-stretch entries, {elapsed:.2?} {}",
            errors.join("; ")
        ),
    )
}

fn lambda_recovery(r: &VerificationReport) -> Outcome {
    let mut targets: Vec<(&str, f64)> = ERP_IDS.iter().map(|&id| (id, 1.0 / 6.0)).collect();
    targets.push(("third_quadratic", 1.0 / 3.0));
    targets.extend(NEG_IDS);
    let mut pass = true;
    let (mut dev, mut spread): (f64, f64) = (0.0, 0.0);
    let mut bad = Vec::new();
    for (id, lam) in targets {
        match entry(r, id) {
            Ok(e) => match (e.lambda, e.lambda_spread) {
                (Some(l), Some(s)) => {
                    dev = dev.max((l - lam).abs());
                    spread = spread.max(s);
                    if (l - lam).abs() > 1e-8 || s > 1e-8 {
                        pass = false;
                        bad.push(id.to_string());
                    }
                }
                _ => {
                    pass = false;
                    bad.push(format!("{id}: no lambda"));
                }
            },
            Err(s) => {
                pass = false;
                bad.push(s);
            }
        }
    }
    outcome(
        pass,
        format!(
            "max |lambda - expected| {dev:.1e}, max spread {spread:.1e} {}",
            bad.join("; ")
        ),
    )
}

fn torsion_types(r: &VerificationReport) -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    let (mut pos, mut neg): (f64, f64) = (0.0, 0.0);
    for id in ERP_IDS {
        match entry(r, id).map(|e| e.positive_ratio) {
            Ok(Some(p)) => pos = pos.max(p.max),
            _ => pass = false,
        }
    }
    for (id, _) in NEG_IDS
        .iter()
        .chain([("soliton_twistor", 0.0), ("soliton_hk", 0.0)].iter())
    {
        match entry(r, id).map(|e| e.negative_ratio) {
            Ok(Some(n)) => neg = neg.max((n.min - 1.0).abs()).max((n.max - 1.0).abs()),
            _ => pass = false,
        }
    }
    pass &= pos <= 1e-9 && neg <= 1e-8;
    notes.push(format!("positive |tau^3|^2/|tau|^6 <= {pos:.1e}"));
    notes.push(format!("negative ratio - 1 <= {neg:.1e}"));
    match entry(r, "third_quadratic") {
        Ok(e) => {
            let (p, n) = (e.positive_ratio, e.negative_ratio);
            let ok = match (p, n) {
                (Some(p), Some(n)) => {
                    let pos_margin = p.min - 1e-9;
                    let neg_margin = if n.max <= 1.0 {
                        1.0 - 1e-8 - n.max
                    } else if n.min >= 1.0 {
                        n.min - 1.0 - 1e-8
                    } else {
                        -1.0
                    };
                    notes.push(format!(
                        "generic margins {pos_margin:.2e}, {neg_margin:.2e}"
                    ));
                    pos_margin >= 1e-3
                        && neg_margin >= 1e-3
                        && e.torsion_type == Some(TorsionType::Generic)
                }
                _ => false,
            };
            pass &= ok;
        }
        Err(s) => {
            pass = false;
            notes.push(s);
        }
    }
    outcome(pass, notes.join(", "))
}

fn erp_suite(r: &VerificationReport) -> Outcome {
    all_bounds(
        r,
        &ERP_IDS,
        &[
            ("d_norm_sq", 1e-8),
            ("d_tau_tau", 1e-8),
            ("d_star_tau_tau", 1e-8),
            ("bryant_d_tau3", 1e-8),
            ("bryant_d_norm", 1e-8),
            ("flow_family", 1e-9),
        ],
    )
}

fn h_tensor(r: &VerificationReport) -> Outcome {
    let ids: Vec<&str> = r
        .entries
        .iter()
        .filter(|e| e.expected_lambda.is_some())
        .map(|e| e.id.as_str())
        .collect();
    let mut o = all_bounds(r, &ids, &[("h_tensor", 1e-8)]);
    o.detail = format!("{} on {} quadratic entries", o.detail, ids.len());
    o
}

fn ricci(r: &VerificationReport) -> Outcome {
    let (cal, _) = j_calibration();
    let ids: Vec<&str> = r.entries.iter().map(|e| e.id.as_str()).collect();
    let o = all_bounds(r, &ids, &[("ricci_trace", 1e-9)]);
    let flat = all_bounds(r, &["flat"], &[("ricci_flat", 1e-12)]);
    outcome(
        cal <= 1e-10 && o.pass && flat.pass,
        format!("j(phi) - 6g {cal:.1e}, {}, {}", o.detail, flat.detail),
    )
}

fn solitons(r: &VerificationReport) -> Outcome {
    let both = ["soliton_twistor", "soliton_hk"];
    let mut a = all_bounds(
        r,
        &both,
        &[
            ("soliton", 1e-7),
            ("ode_reduction", 1e-9),
            ("gradient_potential", 1e-9),
        ],
    );
    let b = all_bounds(r, &["soliton_twistor"], &[("lambert_identity", 1e-12)]);
    let c = all_bounds(r, &["soliton_hk"], &[("implicit_inversion", 1e-12)]);
    let grid = both.iter().all(|id| {
        catalog::build(id)
            .ok()
            .and_then(|b| b.soliton)
            .is_some_and(|s| s.grid.len() == 50)
    });
    a.pass &= b.pass && c.pass && grid;
    a.detail = format!(
        "{}, {}, {}, 50-point grid {grid}",
        a.detail, b.detail, c.detail
    );
    a
}

fn characteristic_variety() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0usize;
    let mut errors = 0usize;
    for _ in 0..100 {
        let xi = loop {
            let f = random_form(&mut rng, 1);
            if f.sup_norm() > 1e-3 {
                break f;
            }
        };
        match characteristic_kernel(&xi) {
            Ok(k) => worst = worst.max(k),
            Err(_) => errors += 1,
        }
    }
    outcome(
        worst == 0 && errors == 0,
        format!("max kernel dimension {worst} over 100 covectors"),
    )
}

fn immersions(r: &VerificationReport) -> Outcome {
    all_bounds(
        r,
        &["lauret_GJ", "erp_M2", "erp_M3_homog"],
        &[("immersion_norm", 1e-12), ("immersion_metric", 1e-9)],
    )
}

/// Adds 1e-3 to one structure constant of the model.
fn mutate(m: &Model, gen: usize, mask: u64) -> Model {
    let f = &m.structure()[gen];
    let mut terms: Vec<(u64, Expr)> = f.terms().iter().map(|(k, v)| (*k, v.clone())).collect();
    match terms.iter_mut().find(|(k, _)| *k == mask) {
        Some((_, v)) => *v = v.clone() + Expr::c(1e-3),
        None => terms.push((mask, Expr::c(1e-3))),
    }
    m.with_structure(gen, FieldForm::from_terms(2, terms))
}

fn mutation_sensitivity() -> Outcome {
    let b = match catalog::build("lauret_GJ") {
        Ok(b) => b,
        Err(e) => return outcome(false, e.to_string()),
    };
    let base = &b.field;
    let pts = match base.model.sample_points(10, SEED) {
        Ok(p) => p,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut weakest = f64::INFINITY;
    let mut count = 0;
    for gen in 0..base.model.dim() {
        for &mask in basis_masks(2) {
            let model = mutate(&base.model, gen, mask as u64);
            let d2 = model.d_squared_residual(10, SEED).unwrap_or(f64::INFINITY);
            let field = G2Field {
                model,
                phi: base.phi.clone(),
                psi: base.psi.clone(),
            };
            let cl = field.closure_residual(&pts).unwrap_or(f64::INFINITY);
            weakest = weakest.min(d2.max(cl));
            count += 1;
        }
    }
    outcome(
        weakest > 1e-5,
        format!("weakest detection {weakest:.1e} over {count} corrupted constants (> 1e-5)"),
    )
}

fn main() -> ExitCode {
    let opts = VerifyOptions {
        samples: SAMPLES,
        seed: SEED,
        tol: 1e-9,
        include_stretch: true,
    };
    let report = run_with(&["all"], &opts).expect("catalog ids are known");
    type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("algebra kernel", Box::new(algebra_kernel)),
        (
            "structure-equation consistency",
            Box::new(structure_consistency),
        ),
        ("lambda recovery", Box::new(|| lambda_recovery(&report))),
        ("torsion-type recovery", Box::new(|| torsion_types(&report))),
        ("ERP consequence suite", Box::new(|| erp_suite(&report))),
        ("H-tensor equivalence", Box::new(|| h_tensor(&report))),
        ("Ricci consistency", Box::new(|| ricci(&report))),
        ("soliton suite", Box::new(|| solitons(&report))),
        ("characteristic variety", Box::new(characteristic_variety)),
        ("quadric immersions", Box::new(|| immersions(&report))),
        ("mutation sensitivity", Box::new(mutation_sensitivity)),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failures += 1;
        }
        println!(
            "{} {:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria pass",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
