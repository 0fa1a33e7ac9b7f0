//! Type-S ERP structures: an ℝ⁴-bundle over a maximal space-like 3-fold in the quadric of ℝ³'³.

use super::{Built, Extra, HEPTAD};
use crate::coframe::{FieldForm, ModelBuilder, Sample};
use crate::g2ops::{attach_g2, quadric_immersion_check, FlowSplit, G2Error, Immersion};
use crate::symexpr::{Assignment, Expr};

/// Second fundamental form and connection data of a type-S structure (rescaled to k = 1/2).
#[derive(Debug, Clone)]
pub struct TypeSData {
    /// σ_{ai}, a = 1..2, i = 1..3.
    pub sigma: [[FieldForm; 3]; 2],
    pub psi23: FieldForm,
    pub psi31: FieldForm,
    pub psi12: FieldForm,
    pub rho12: FieldForm,
}

impl TypeSData {
    fn psi(&self, i: usize, j: usize) -> FieldForm {
        let one = |i, j| match (i, j) {
            (1, 2) => Some(self.psi23.clone()),
            (2, 0) => Some(self.psi31.clone()),
            (0, 1) => Some(self.psi12.clone()),
            _ => None,
        };
        if let Some(f) = one(i, j) {
            f
        } else if let Some(f) = one(j, i) {
            -f
        } else {
            FieldForm::zero(1)
        }
    }

    /// dω_i = −ψ_ij∧ω_j for i = 1..3.
    pub fn d_base(&self) -> [FieldForm; 3] {
        std::array::from_fn(|i| {
            let mut acc = FieldForm::zero(2);
            for j in 0..3 {
                acc = acc - self.psi(i, j).w(&FieldForm::gen(j));
            }
            acc
        })
    }

    /// dψ_ij = −ψ_ik∧ψ_kj − ω_i∧ω_j − σ_ai∧σ_aj.
    pub fn d_psi(&self, i: usize, j: usize) -> FieldForm {
        let mut acc = -FieldForm::gen(i).w(&FieldForm::gen(j));
        for k in 0..3 {
            acc = acc - self.psi(i, k).w(&self.psi(k, j));
        }
        for a in 0..2 {
            acc = acc - self.sigma[a][i].w(&self.sigma[a][j]);
        }
        acc
    }

    /// dρ_12 = −σ_1i∧σ_2i.
    pub fn d_rho(&self) -> FieldForm {
        let mut acc = FieldForm::zero(2);
        for i in 0..3 {
            acc = acc - self.sigma[0][i].w(&self.sigma[1][i]);
        }
        acc
    }

    /// dω_{4..7} = −μ∧ω_{4..7}.
    pub fn d_fibre(&self) -> [FieldForm; 4] {
        let mu = mu_type_s(self);
        std::array::from_fn(|r| {
            let mut acc = FieldForm::zero(2);
            for (c, m) in mu[r].iter().enumerate() {
                acc = acc - m.w(&FieldForm::gen(3 + c));
            }
            acc
        })
    }
}

/// The traceless 4×4 connection matrix acting on (ω4, ω5, ω6, ω7). The ψ31 entries carry the
/// sign that makes d² = 0 once ψ31 ≠ 0 (the printed matrix has the opposite one).
pub fn mu_type_s(d: &TypeSData) -> [[FieldForm; 4]; 4] {
    let s = |a: usize, i: usize| d.sigma[a - 1][i - 1].clone();
    let w = |i: usize| FieldForm::gen(i - 1);
    let (p23, p31, p12, r12) = (d.psi23.clone(), -&d.psi31, d.psi12.clone(), d.rho12.clone());
    let rows = [
        [
            -s(1, 2) - s(2, 3) - w(1),
            s(1, 3) - s(2, 2) - &p23 + &r12,
            s(2, 1) + &p31 - w(3),
            s(1, 1) + &p12 - w(2),
        ],
        [
            s(1, 3) - s(2, 2) + &p23 - &r12,
            s(1, 2) + s(2, 3) - w(1),
            -s(1, 1) + &p12 - w(2),
            s(2, 1) - &p31 + w(3),
        ],
        [
            s(2, 1) - &p31 - w(3),
            -s(1, 1) - &p12 - w(2),
            s(2, 3) - s(1, 2) + w(1),
            s(2, 2) + s(1, 3) - &p23 - &r12,
        ],
        [
            s(1, 1) - &p12 - w(2),
            s(2, 1) + &p31 + w(3),
            s(2, 2) + s(1, 3) + &p23 + &r12,
            -s(2, 3) + s(1, 2) + w(1),
        ],
    ];
    rows.map(|row| row.map(|f| f * 0.5))
}

fn lin(coeffs: &[(usize, Expr)]) -> FieldForm {
    let mut acc = FieldForm::zero(1);
    for (i, c) in coeffs {
        acc = acc + FieldForm::gen(*i - 1) * c.clone();
    }
    acc
}

fn zero1() -> FieldForm {
    FieldForm::zero(1)
}

fn finish(
    b: ModelBuilder,
    immersion: Option<(Immersion, Vec<Assignment>)>,
) -> Result<Built, G2Error> {
    let model = b.build()?;
    let field = attach_g2(model, None, &[])?;
    let mut extras = Vec::new();
    if let Some((im, grid)) = immersion {
        let im2 = im.clone();
        let grid2 = grid.clone();
        extras.push(Extra::new("immersion_norm", 1e-3, move |_| {
            Ok(quadric_immersion_check(&im, &grid)?.norm_residual)
        }));
        extras.push(Extra::new("immersion_metric", 1.0, move |_| {
            Ok(quadric_immersion_check(&im2, &grid2)?.metric_residual)
        }));
    }
    Ok(Built {
        field,
        flow: Some(FlowSplit::standard()),
        soliton: None,
        extras,
    })
}

fn set_heptad(b: &mut ModelBuilder, d: &TypeSData) {
    for (i, f) in d.d_base().into_iter().enumerate() {
        b.d_index(i, f);
    }
    for (i, f) in d.d_fibre().into_iter().enumerate() {
        b.d_index(3 + i, f);
    }
}

/// Tetrahedral σ pattern with amplitude r; Jacobi forces r² = 1/2.
pub(crate) fn gj_data(r: f64) -> TypeSData {
    let r = Expr::c(r);
    let rs2 = &r * Expr::c(2f64.sqrt());
    TypeSData {
        sigma: [
            [
                lin(&[(3, -&rs2)]),
                lin(&[(2, r.clone())]),
                lin(&[(1, -&rs2), (3, -&r)]),
            ],
            [
                lin(&[(2, -&rs2)]),
                lin(&[(1, -&rs2), (3, r.clone())]),
                lin(&[(2, r.clone())]),
            ],
        ],
        psi23: zero1(),
        psi31: zero1(),
        psi12: zero1(),
        rho12: zero1(),
    }
}

pub(super) fn build_gj() -> Result<Built, G2Error> {
    let mut b = ModelBuilder::new("lauret_GJ", &HEPTAD);
    set_heptad(&mut b, &gj_data(std::f64::consts::FRAC_1_SQRT_2));
    b.note("roots of S on a regular tetrahedron; flat base, solvable Lie algebra");
    finish(b, Some(immersion_gj()))
}

pub(super) fn build_m2() -> Result<Built, G2Error> {
    let mut names = HEPTAD.to_vec();
    names.push("p23");
    let mut b = ModelBuilder::new("erp_M2", &names);
    let one = Expr::one();
    let p23 = FieldForm::gen(7);
    let d = TypeSData {
        sigma: [
            [lin(&[(3, one.clone())]), zero1(), lin(&[(1, one.clone())])],
            [lin(&[(2, -&one)]), lin(&[(1, -&one)]), zero1()],
        ],
        psi23: p23.clone(),
        psi31: zero1(),
        psi12: zero1(),
        rho12: p23,
    };
    set_heptad(&mut b, &d);
    b.d_index(7, d.d_psi(1, 2));
    b.note("triple root antipodal to a single root; 8-dimensional group");
    finish(b, Some(immersion_m2()))
}

fn m3_data(r: Expr, s: Expr, psi23: FieldForm) -> TypeSData {
    let r3 = r.powi(3);
    TypeSData {
        sigma: [
            [
                lin(&[(1, -(&r3 * 2.0))]),
                lin(&[(2, r3.clone())]),
                lin(&[(3, r3.clone())]),
            ],
            [zero1(), zero1(), zero1()],
        ],
        psi23,
        psi31: lin(&[(3, -&s)]),
        psi12: lin(&[(2, s)]),
        rho12: zero1(),
    }
}

pub(super) fn build_m3_homog() -> Result<Built, G2Error> {
    let mut names = HEPTAD.to_vec();
    names.push("p23");
    let mut b = ModelBuilder::new("erp_M3_homog", &names);
    let d = m3_data(
        Expr::c(2f64.powf(-1.0 / 6.0)),
        Expr::zero(),
        FieldForm::gen(7),
    );
    set_heptad(&mut b, &d);
    b.d_index(7, d.d_psi(1, 2));
    b.note("antipodal double roots, r = 2^(-1/6), s = 0");
    finish(b, Some(immersion_m3()))
}

/// c = 3·2^(−2/3): the complete member of the cohomogeneity-one family.
pub(crate) fn m3_c() -> f64 {
    3.0 * 2f64.powf(-2.0 / 3.0)
}

pub(super) fn build_m3_cohom1() -> Result<Built, G2Error> {
    let mut names = HEPTAD.to_vec();
    names.push("p23");
    let mut b = ModelBuilder::new("erp_M3_cohom1", &names);
    let r = Expr::var("r");
    let s = Expr::var("s");
    let d = m3_data(r.clone(), s.clone(), FieldForm::gen(7));
    set_heptad(&mut b, &d);
    b.d_index(7, d.d_psi(1, 2));
    let w1 = FieldForm::gen(0);
    b.scalar("r", &w1 * (&r * &s), Sample::uniform(0.3, 0.85));
    let ds = &r.powi(6) * 2.0 + &s * &s - 1.0;
    let first = (r.powi(6) - &r * &r * m3_c() + 1.0).sqrt();
    b.scalar("s", &w1 * ds, Sample::Formula(-first));
    b.constraint((r.powi(6) - &s * &s + 1.0) / (&r * &r) - m3_c());
    b.note("antipodal double roots with dr = rs w1, ds = (2r^6 + s^2 - 1) w1 on the level set c = 3*2^(-2/3)");
    finish(b, None)
}

fn grid(coords: &[(&str, f64, f64, usize)]) -> Vec<Assignment> {
    let mut out = vec![Assignment::new()];
    for (name, lo, hi, n) in coords {
        let mut next = Vec::with_capacity(out.len() * n);
        for a in &out {
            for k in 0..*n {
                let t = if *n == 1 {
                    0.5
                } else {
                    k as f64 / (*n - 1) as f64
                };
                next.push(a.clone().with(name, lo + (hi - lo) * t));
            }
        }
        out = next;
    }
    out
}

const SIGNATURE: [f64; 6] = [-1.0, 1.0, 1.0, 1.0, -1.0, -1.0];

fn diag(entries: [Expr; 3]) -> Vec<Vec<Expr>> {
    (0..3)
        .map(|i| {
            (0..3)
                .map(|j| {
                    if i == j {
                        entries[i].clone()
                    } else {
                        Expr::zero()
                    }
                })
                .collect()
        })
        .collect()
}

pub fn immersion_gj() -> (Immersion, Vec<Assignment>) {
    let (x, y, z) = (Expr::var("x"), Expr::var("y"), Expr::var("z"));
    let k = Expr::c(1.0 / 3f64.sqrt());
    let u = [x.cosh(), x.sinh(), y.sinh(), z.sinh(), y.cosh(), z.cosh()]
        .into_iter()
        .map(|e| &k * e)
        .collect();
    let third = Expr::rat(1, 3);
    let im = Immersion {
        coords: vec!["x".into(), "y".into(), "z".into()],
        u,
        signature: SIGNATURE,
        claimed_metric: diag([third.clone(), third.clone(), third]),
    };
    (
        im,
        grid(&[
            ("x", -2.0, 2.0, 20),
            ("y", -2.0, 2.0, 20),
            ("z", -2.0, 2.0, 8),
        ]),
    )
}

pub fn immersion_m2() -> (Immersion, Vec<Assignment>) {
    let (x, y, t) = (Expr::var("x"), Expr::var("y"), Expr::var("t"));
    let u = vec![
        x.cosh() * y.cosh(),
        x.cosh() * y.sinh(),
        -(x.sinh() * t.sin() * y.cosh()),
        x.sinh() * t.cos() * y.cosh(),
        x.sinh() * t.cos() * y.sinh(),
        x.sinh() * t.sin() * y.sinh(),
    ];
    let im = Immersion {
        coords: vec!["x".into(), "y".into(), "t".into()],
        u,
        signature: SIGNATURE,
        claimed_metric: diag([Expr::one(), Expr::one(), x.sinh().powi(2)]),
    };
    (
        im,
        grid(&[
            ("x", 0.1, 2.0, 20),
            ("y", -2.0, 2.0, 20),
            ("t", 0.0, 6.0, 8),
        ]),
    )
}

pub fn immersion_m3() -> (Immersion, Vec<Assignment>) {
    let (x, y, t) = (Expr::var("x"), Expr::var("y"), Expr::var("t"));
    let sixth = Expr::rat(1, 6);
    let s3 = Expr::c(3f64.sqrt());
    let s6 = Expr::c(6f64.sqrt());
    let s2 = Expr::c(2f64.sqrt());
    let u = [
        x.cosh() * 2.0 + y.cosh() * 4.0,
        &s3 * x.sinh() * 2.0,
        &s6 * y.sinh() * t.sin() * 2.0,
        &s6 * y.sinh() * t.cos() * 2.0,
        -(&s2 * (x.cosh() - y.cosh()) * 2.0),
        Expr::zero(),
    ]
    .into_iter()
    .map(|e| &sixth * e)
    .collect();
    let im = Immersion {
        coords: vec!["x".into(), "y".into(), "t".into()],
        u,
        signature: SIGNATURE,
        claimed_metric: diag([
            Expr::rat(1, 3),
            Expr::rat(2, 3),
            Expr::rat(2, 3) * y.sinh().powi(2),
        ]),
    };
    (
        im,
        grid(&[
            ("x", -2.0, 2.0, 20),
            ("y", 0.1, 2.0, 20),
            ("t", 0.0, 6.0, 8),
        ]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coframe::sup_over;

    // The fibre block of the explicit GJ display (amplitude 1/2), entry by entry.
    #[test]
    fn gj_mu_matches_display() {
        let h = 1.0 / 2f64.sqrt();
        let w = |c: [f64; 3]| {
            let mut acc = FieldForm::zero(1);
            for (i, x) in c.iter().enumerate() {
                acc = acc + FieldForm::gen(i) * *x;
            }
            acc
        };
        let m = [
            [
                w([-1.0, -1.0, 0.0]),
                w([0.0, 0.0, -1.0]),
                w([0.0, -h, -1.0]),
                w([0.0, -1.0, -h]),
            ],
            [
                w([0.0, 0.0, -1.0]),
                w([-1.0, 1.0, 0.0]),
                w([0.0, -1.0, h]),
                w([0.0, -h, 1.0]),
            ],
            [
                w([0.0, -h, -1.0]),
                w([0.0, -1.0, h]),
                w([1.0, 0.0, 0.0]),
                w([-2f64.sqrt(), 0.0, 0.0]),
            ],
            [
                w([0.0, -1.0, -h]),
                w([0.0, -h, 1.0]),
                w([-2f64.sqrt(), 0.0, 0.0]),
                w([1.0, 0.0, 0.0]),
            ],
        ];
        let mu = mu_type_s(&gj_data(0.5));
        let mut diffs = Vec::new();
        for r in 0..4 {
            for c in 0..4 {
                diffs.push((format!("{r}{c}"), &mu[r][c] - &m[r][c] * 0.5));
            }
        }
        assert!(sup_over(&diffs, &[Assignment::new()]).unwrap() < 1e-15);
    }

    #[test]
    fn base_is_closed_for_gj() {
        for f in gj_data(0.5).d_base() {
            assert!(f.is_zero());
        }
    }

    #[test]
    fn gj_amplitude_is_forced_by_jacobi() {
        let d = |r: f64| {
            let mut b = ModelBuilder::new("gj", &HEPTAD);
            set_heptad(&mut b, &gj_data(r));
            b.build().unwrap().d_squared_residual(3, 1).unwrap()
        };
        assert!(d(std::f64::consts::FRAC_1_SQRT_2) < 1e-15);
        assert!(d(0.5) > 0.1);
        // dψ = 0 needs ω_i∧ω_j + σ_ai∧σ_aj = 0.
        let g = gj_data(std::f64::consts::FRAC_1_SQRT_2);
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            assert!(
                sup_over(&[("dpsi".into(), g.d_psi(i, j))], &[Assignment::new()]).unwrap() < 1e-15
            );
        }
    }
}
