//! G₂ operations on coframe models whose first seven generators form an adapted heptad.

use crate::coframe::{sup_over, FieldForm, Mask, Model, ModelError};
use crate::multivec::{self, basis_masks, wedge_sign, EpsSymbol, NumForm, DIM};
use crate::symexpr::{Assignment, Differ, Evaluator, Expr, ExprError};
use nalgebra::{DMatrix, DVector, Matrix3, SMatrix};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

pub use crate::multivec::{characteristic_kernel, full_lambda2_kernel, kernel_intersection_14};

pub type Mat7 = SMatrix<f64, 7, 7>;

const HEPTAD: Mask = 0x7f;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum G2Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("model has {0} generators; a heptad needs at least 7")]
    TooFewGenerators(usize),
    #[error("{what} is not semibasic")]
    NotSemibasic { what: String },
    #[error("adapted-frame residual {0:e} exceeds tolerance")]
    AdaptedFrame(f64),
    #[error("evaluating {context}: {source}")]
    Eval { context: String, source: ExprError },
    #[error("j-map calibration failed: j(phi) = {0} g")]
    Calibration(f64),
    #[error("H system has rank {0} < 27")]
    RankDeficient(usize),
}

fn eval_err(context: &str) -> impl Fn(ExprError) -> G2Error + '_ {
    move |source| G2Error::Eval {
        context: context.to_string(),
        source,
    }
}

/// Symbolic Hodge star of a form supported on the heptad.
pub fn hodge_sym(a: &FieldForm, what: &str) -> Result<FieldForm, G2Error> {
    if a.support() & !HEPTAD != 0 {
        return Err(G2Error::NotSemibasic {
            what: what.to_string(),
        });
    }
    Ok(FieldForm::from_terms(
        DIM - a.deg(),
        a.terms().iter().map(|(m, c)| {
            let mc = HEPTAD ^ m;
            let s = wedge_sign(*m, mc);
            (mc, if s < 0.0 { -c } else { c.clone() })
        }),
    ))
}

/// Squared norm Σ c_I² of a heptad-supported form.
pub fn norm_sq_sym(a: &FieldForm) -> Expr {
    Expr::sum(a.terms().values().map(|c| c * c))
}

pub fn phi_form() -> FieldForm {
    FieldForm::from_numform(multivec::phi())
}

pub fn psi_form() -> FieldForm {
    FieldForm::from_numform(multivec::psi())
}

/// A coframe model with its adapted heptad in generator slots 0..7.
#[derive(Debug, Clone)]
pub struct G2Field {
    pub model: Model,
    pub phi: FieldForm,
    pub psi: FieldForm,
}

/// Builds φ and *φ on the heptad. If `declared` is given (in the model's basis), it must
/// equal the standard 3-form at every check point.
pub fn attach_g2(
    model: Model,
    declared: Option<&FieldForm>,
    check_points: &[Assignment],
) -> Result<G2Field, G2Error> {
    if model.dim() < DIM {
        return Err(G2Error::TooFewGenerators(model.dim()));
    }
    let phi = phi_form();
    if let Some(d) = declared {
        let diff = d - &phi;
        let scale = sup_over(&[("declared phi".into(), d.clone())], check_points)?.max(1.0);
        let r = sup_over(
            &[("declared phi - standard phi".into(), diff)],
            check_points,
        )?;
        if r > 1e-12 * scale {
            return Err(G2Error::AdaptedFrame(r));
        }
    }
    let psi = hodge_sym(&phi, "phi")?;
    Ok(G2Field { model, phi, psi })
}

/// Symbolic torsion data and the derived forms needed by the checks.
#[derive(Debug, Clone)]
pub struct Torsion {
    pub dphi: FieldForm,
    pub dpsi: FieldForm,
    pub tau: FieldForm,
    /// Λ²₇ part of *(d*φ); vanishes for closed structures.
    pub p7: FieldForm,
    pub norm_sq: Expr,
    pub dtau: FieldForm,
    pub tau2: FieldForm,
    pub star_tau2: FieldForm,
    pub tau3: FieldForm,
    pub d_tau3: FieldForm,
    pub d_norm_sq: FieldForm,
    pub d_tau2: FieldForm,
    pub d_star_tau2: FieldForm,
}

impl G2Field {
    pub fn closure_form(&self) -> Result<FieldForm, G2Error> {
        Ok(self.model.d(&self.phi)?)
    }

    pub fn torsion(&self) -> Result<Torsion, G2Error> {
        let m = &self.model;
        let dphi = m.d(&self.phi)?;
        let dpsi = m.d(&self.psi)?;
        let (dpsi_h, _) = dpsi.split_at(DIM);
        let sigma = hodge_sym(&dpsi_h, "d*phi")?;
        let b_sigma = hodge_sym(&sigma.w(&self.phi), "sigma^phi")?;
        let p7 = (&sigma + &b_sigma) * (1.0 / 3.0);
        let tau = (&b_sigma - &(&sigma * 2.0)) * (1.0 / 3.0);
        let norm_sq = norm_sq_sym(&tau);
        let dtau = m.d(&tau)?;
        let tau2 = tau.w(&tau);
        let star_tau2 = hodge_sym(&tau2, "tau^tau")?;
        let tau3 = tau2.w(&tau);
        let d_tau3 = m.d(&tau3)?;
        let d_norm_sq = m.d_fn(&norm_sq)?;
        let d_tau2 = m.d(&tau2)?;
        let d_star_tau2 = m.d(&star_tau2)?;
        Ok(Torsion {
            dphi,
            dpsi,
            tau,
            p7,
            norm_sq,
            dtau,
            tau2,
            star_tau2,
            tau3,
            d_tau3,
            d_norm_sq,
            d_tau2,
            d_star_tau2,
        })
    }

    /// sup-norm of dφ over the points.
    pub fn closure_residual(&self, pts: &[Assignment]) -> Result<f64, G2Error> {
        Ok(sup_over(&[("d phi".into(), self.closure_form()?)], pts)?)
    }

    /// Evaluates the torsion data at one point.
    pub fn at(&self, t: &Torsion, p: &Assignment) -> Result<PointData, G2Error> {
        let mut ev = Evaluator::new(p);
        let mut vertical: f64 = 0.0;
        let mut h = |f: &FieldForm, what: &str, ev: &mut Evaluator| -> Result<NumForm, G2Error> {
            let (n, v) = f.eval_heptad(ev).map_err(eval_err(what))?;
            vertical = vertical.max(v);
            Ok(n)
        };
        let dphi_sup = t.dphi.eval_sup(&mut ev).map_err(eval_err("d phi"))?;
        let dpsi = h(&t.dpsi, "d*phi", &mut ev)?;
        let tau = h(&t.tau, "tau", &mut ev)?;
        let p7 = h(&t.p7, "p7", &mut ev)?;
        let dtau = h(&t.dtau, "d tau", &mut ev)?;
        let star_tau2 = h(&t.star_tau2, "*(tau^tau)", &mut ev)?;
        let tau3 = h(&t.tau3, "tau^3", &mut ev)?;
        let d_tau3 = h(&t.d_tau3, "d(tau^3)", &mut ev)?;
        let d_norm_sq = h(&t.d_norm_sq, "d|tau|^2", &mut ev)?;
        let d_tau2 = h(&t.d_tau2, "d(tau^tau)", &mut ev)?;
        let d_star_tau2 = h(&t.d_star_tau2, "d*(tau^tau)", &mut ev)?;
        let norm_sq = ev.eval(&t.norm_sq).map_err(eval_err("|tau|^2"))?;
        Ok(PointData {
            dphi_sup,
            dpsi,
            tau,
            p7,
            norm_sq: norm_sq.re,
            dtau,
            star_tau2,
            tau3,
            d_tau3,
            d_norm_sq,
            d_tau2,
            d_star_tau2,
            vertical,
        })
    }

    pub fn at_all(&self, t: &Torsion, pts: &[Assignment]) -> Result<Vec<PointData>, G2Error> {
        pts.par_iter().map(|p| self.at(t, p)).collect()
    }

    /// L_V a = d ι_V a + ι_V d a for V with the given heptad-dual components.
    pub fn lie_derivative(&self, v: &[Expr], a: &FieldForm) -> Result<FieldForm, G2Error> {
        let m = &self.model;
        let first = if a.deg() == 0 {
            FieldForm::zero(1)
        } else {
            m.d(&a.interior(v))?
        };
        let da = m.d(a)?;
        Ok(first + da.interior(v))
    }

    /// sup‖dτ − cφ − L_Vφ‖ over the points, vertical components included.
    pub fn soliton_residual(
        &self,
        t: &Torsion,
        v: &[Expr],
        c: f64,
        pts: &[Assignment],
    ) -> Result<f64, G2Error> {
        let lv = self.lie_derivative(v, &self.phi)?;
        let r = &(&t.dtau - &(&self.phi * c)) - &lv;
        Ok(sup_over(&[("soliton".into(), r)], pts)?)
    }
}

/// Numeric torsion data at one point (heptad components).
#[derive(Debug, Clone)]
pub struct PointData {
    pub dphi_sup: f64,
    pub dpsi: NumForm,
    pub tau: NumForm,
    pub p7: NumForm,
    pub norm_sq: f64,
    pub dtau: NumForm,
    pub star_tau2: NumForm,
    pub tau3: NumForm,
    pub d_tau3: NumForm,
    pub d_norm_sq: NumForm,
    pub d_tau2: NumForm,
    pub d_star_tau2: NumForm,
    /// Largest vertical coefficient among forms that must be semibasic.
    pub vertical: f64,
}

impl PointData {
    /// ‖d*φ − τ∧φ‖.
    pub fn reconstruction_residual(&self) -> f64 {
        self.dpsi.sub(&self.tau.w(multivec::phi())).sup_norm()
    }

    /// T_ij with τ = 3 T_ij ω_i∧ω_j.
    pub fn t_matrix(&self) -> Mat7 {
        t_matrix(&self.tau)
    }

    /// max_i |ε_ijk T_jk|.
    pub fn g2_membership(&self) -> f64 {
        let t = self.t_matrix();
        let eps = EpsSymbol::get();
        (0..DIM)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..DIM {
                    for k in 0..DIM {
                        s += eps.e3[i][j][k] as f64 * t[(j, k)];
                    }
                }
                s.abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn tau3_norm_sq(&self) -> f64 {
        self.tau3.norm_sq()
    }
}

pub fn t_matrix(tau: &NumForm) -> Mat7 {
    let mut t = Mat7::zeros();
    for (k, &m) in basis_masks(2).iter().enumerate() {
        let i = m.trailing_zeros() as usize;
        let j = 7 - m.leading_zeros() as usize;
        let v = tau.coeffs()[k].re / 6.0;
        t[(i, j)] = v;
        t[(j, i)] = -v;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TorsionType {
    Zero,
    Positive,
    Negative,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub kind: TorsionType,
    pub norm_sq: f64,
    pub tau3_norm_sq: f64,
    /// |τ³|² / |τ|⁶.
    pub positive_ratio: f64,
    /// |τ³|² / ((2/3)|τ|⁶).
    pub negative_ratio: f64,
}

pub fn classify_torsion(p: &PointData) -> Classification {
    let n2 = p.norm_sq;
    let t3 = p.tau3_norm_sq();
    if n2 <= 1e-18 {
        return Classification {
            kind: TorsionType::Zero,
            norm_sq: n2,
            tau3_norm_sq: t3,
            positive_ratio: 0.0,
            negative_ratio: 0.0,
        };
    }
    let n6 = n2 * n2 * n2;
    let positive_ratio = t3 / n6;
    let negative_ratio = t3 / (2.0 / 3.0 * n6);
    let kind = if positive_ratio <= 1e-9 {
        TorsionType::Positive
    } else if (negative_ratio - 1.0).abs() <= 1e-8 {
        TorsionType::Negative
    } else {
        TorsionType::Generic
    };
    Classification {
        kind,
        norm_sq: n2,
        tau3_norm_sq: t3,
        positive_ratio,
        negative_ratio,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    /// Mean of the per-point λ; `None` if every point was indeterminate.
    pub lambda: Option<f64>,
    pub residual: f64,
    pub spread: f64,
    pub indeterminate_points: usize,
}

/// Per-point least-squares λ for dτ − |τ|²φ/7 = λ(|τ|²φ/7 + *(τ∧τ)).
pub fn lambda_at(p: &PointData) -> Option<f64> {
    let (a, b) = lambda_parts(p);
    let bb = b.norm_sq();
    if bb.sqrt() < 1e-10 {
        return None;
    }
    Some(a.inner(&b).unwrap().re / bb)
}

fn lambda_parts(p: &PointData) -> (NumForm, NumForm) {
    let phi_part = multivec::phi().scale(p.norm_sq / 7.0);
    (p.dtau.sub(&phi_part), phi_part.add(&p.star_tau2))
}

pub fn fit_lambda(points: &[PointData]) -> QuadraticFit {
    let lams: Vec<f64> = points.iter().filter_map(lambda_at).collect();
    let indeterminate_points = points.len() - lams.len();
    if lams.is_empty() {
        return QuadraticFit {
            lambda: None,
            residual: f64::NAN,
            spread: f64::NAN,
            indeterminate_points,
        };
    }
    let mean = lams.iter().sum::<f64>() / lams.len() as f64;
    let lo = lams.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = lams.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let residual = points
        .iter()
        .map(|p| {
            let (a, b) = lambda_parts(p);
            a.sub(&b.scale(mean)).sup_norm()
        })
        .fold(0.0, f64::max);
    QuadraticFit {
        lambda: Some(mean),
        residual,
        spread: hi - lo,
        indeterminate_points,
    }
}

/// (r466, r469) at one point for a given λ.
pub fn bryant_identity_residuals(p: &PointData, lambda: f64) -> (f64, f64) {
    let n2 = p.norm_sq;
    let r466 = p
        .d_tau3
        .sub(&NumForm::volume().scale(3.0 * (6.0 * lambda - 1.0) / 7.0 * n2 * n2))
        .sup_norm();
    let lhs = p.d_norm_sq.scale(3.0 * lambda - 4.0);
    let rhs = p.tau3.hodge().scale(7.0 * lambda * (2.0 * lambda - 1.0));
    (r466, lhs.sub(&rhs).sup_norm())
}

/// F(M) = Σ ε_ikl M_ij e^j∧e^k∧e^l.
pub fn f_map(m: &Mat7) -> NumForm {
    let eps = EpsSymbol::get();
    let mut out = NumForm::zero(3);
    let c = out.coeffs_mut();
    for i in 0..DIM {
        for k in 0..DIM {
            for l in 0..DIM {
                let e = eps.e3[i][k][l];
                if e == 0 {
                    continue;
                }
                for j in 0..DIM {
                    let v = m[(i, j)];
                    if v == 0.0 {
                        continue;
                    }
                    if let Some((mask, s)) = multivec::sorted_mask(&[j + 1, k + 1, l + 1]) {
                        c[multivec::mask_index(mask as u8)] += s * e as f64 * v;
                    }
                }
            }
        }
    }
    out
}

fn sym_traceless_basis() -> &'static Vec<Mat7> {
    static B: OnceLock<Vec<Mat7>> = OnceLock::new();
    B.get_or_init(|| {
        let mut out = Vec::new();
        for i in 0..DIM {
            for j in i + 1..DIM {
                let mut m = Mat7::zeros();
                m[(i, j)] = 1.0;
                m[(j, i)] = 1.0;
                out.push(m);
            }
        }
        for i in 0..DIM - 1 {
            let mut m = Mat7::zeros();
            m[(i, i)] = 1.0;
            m[(DIM - 1, DIM - 1)] = -1.0;
            out.push(m);
        }
        out
    })
}

fn h_system() -> &'static DMatrix<f64> {
    static A: OnceLock<DMatrix<f64>> = OnceLock::new();
    A.get_or_init(|| {
        let basis = sym_traceless_basis();
        let mut a = DMatrix::zeros(35, basis.len());
        for (j, b) in basis.iter().enumerate() {
            let f = f_map(b);
            for i in 0..35 {
                a[(i, j)] = 21.0 * f.coeffs()[i].re;
            }
        }
        a
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HTensor {
    pub h: Mat7,
    /// Residual of the least-squares solve itself.
    pub solve_residual: f64,
    /// ‖H − ((1−6λ)/7)(TT + δ|T|²/7)‖_max.
    pub quadratic_residual: f64,
}

/// Least-squares H from 21 F(H) = dτ + 3 F(TT) over symmetric traceless matrices.
pub fn extract_h(p: &PointData, lambda: f64) -> Result<HTensor, G2Error> {
    let a = h_system();
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * smax)
        .count();
    if rank < a.ncols() {
        return Err(G2Error::RankDeficient(rank));
    }
    let t = p.t_matrix();
    let tt = t * t;
    let ftt = f_map(&tt);
    let rhs = DVector::from_iterator(
        35,
        (0..35).map(|i| p.dtau.coeffs()[i].re + 3.0 * ftt.coeffs()[i].re),
    );
    let x = svd.solve(&rhs, 1e-12).expect("svd solve");
    let solve_residual = (a * &x - &rhs).amax();
    let mut h = Mat7::zeros();
    for (c, b) in x.iter().zip(sym_traceless_basis()) {
        h += b * *c;
    }
    let tnorm: f64 = t.iter().map(|v| v * v).sum();
    let want = (tt + Mat7::identity() * (tnorm / 7.0)) * ((1.0 - 6.0 * lambda) / 7.0);
    Ok(HTensor {
        h,
        solve_residual,
        quadratic_residual: (h - want).amax(),
    })
}

struct JMap {
    pairs: Vec<NumForm>,
    scale: f64,
    raw_phi_multiple: f64,
}

fn jmap() -> &'static JMap {
    static J: OnceLock<JMap> = OnceLock::new();
    J.get_or_init(|| {
        let phi = multivec::phi();
        let mut pairs = Vec::with_capacity(49);
        for v in 0..DIM {
            for w in 0..DIM {
                pairs.push(phi.interior_basis(v).w(&phi.interior_basis(w)));
            }
        }
        let mut jm = JMap {
            pairs,
            scale: 1.0,
            raw_phi_multiple: 0.0,
        };
        let raw = j_raw(&jm, phi);
        jm.raw_phi_multiple = raw[(0, 0)];
        jm.scale = 6.0 / raw[(0, 0)];
        jm
    })
}

fn j_raw(jm: &JMap, g: &NumForm) -> Mat7 {
    let mut out = Mat7::zeros();
    for v in 0..DIM {
        for w in 0..DIM {
            out[(v, w)] = jm.pairs[v * DIM + w].w(g).coeffs()[0].re;
        }
    }
    out
}

/// j(γ)(v,w) = *((v⌟φ)∧(w⌟φ)∧γ), scaled so that j(φ) = 6g.
pub fn j_map(g: &NumForm) -> Mat7 {
    let jm = jmap();
    j_raw(jm, g) * jm.scale
}

/// max |j(φ) − 6g| for the calibrated map, and the raw multiple before scaling.
pub fn j_calibration() -> (f64, f64) {
    let jm = jmap();
    let r = (j_map(multivec::phi()) - Mat7::identity() * 6.0).amax();
    (r, jm.raw_phi_multiple)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ricci {
    pub scal: f64,
    pub ric: Mat7,
}

pub fn ricci(p: &PointData) -> Result<Ricci, G2Error> {
    let (cal, raw) = j_calibration();
    if cal > 1e-10 {
        return Err(G2Error::Calibration(raw));
    }
    let g = p.dtau.sub(&p.star_tau2.scale(0.5));
    let ric = Mat7::identity() * (p.norm_sq / 4.0) - j_map(&g) * 0.25;
    Ok(Ricci {
        scal: -0.5 * p.norm_sq,
        ric,
    })
}

/// Splitting data for the Laplacian-flow family of an ERP structure.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSplit {
    /// Unit-normalised direction of τ (e.g. ω45 − ω67 up to scale).
    pub tau_direction: NumForm,
    /// The 3-form spanned by the ν-block (e.g. ω123).
    pub nu_block: NumForm,
}

impl FlowSplit {
    pub fn standard() -> FlowSplit {
        FlowSplit {
            tau_direction: NumForm::from_terms(2, &[(&[4, 5], 1.0), (&[6, 7], -1.0)]),
            nu_block: NumForm::from_terms(3, &[(&[1, 2, 3], 1.0)]),
        }
    }
}

/// ‖dτ − 12k²(φ − ν-block)‖ at a point, with τ = 6k·direction.
pub fn flow_family_residual(p: &PointData, split: &FlowSplit) -> f64 {
    let dir = &split.tau_direction;
    let k = p.tau.inner(dir).unwrap().re / (6.0 * dir.norm_sq());
    let rate = 12.0 * k * k;
    let target = multivec::phi().sub(&split.nu_block).scale(rate);
    p.dtau
        .sub(&target)
        .sup_norm()
        .max(p.tau.sub(&dir.scale(6.0 * k)).sup_norm())
}

/// A map u: ℝᵏ → ℝ⁶ into the quadric ⟨u,u⟩ = −1 with a claimed induced metric.
#[derive(Debug, Clone)]
pub struct Immersion {
    pub coords: Vec<String>,
    pub u: Vec<Expr>,
    pub signature: [f64; 6],
    pub claimed_metric: Vec<Vec<Expr>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImmersionResidual {
    pub norm_residual: f64,
    pub metric_residual: f64,
    /// Smallest |det| of the induced metric over the grid; zero flags a degenerate map.
    pub min_abs_det: f64,
}

pub fn quadric_immersion_check(
    im: &Immersion,
    grid: &[Assignment],
) -> Result<ImmersionResidual, G2Error> {
    let k = im.coords.len();
    let du: Vec<Vec<Expr>> = im
        .coords
        .iter()
        .map(|x| {
            let mut d = Differ::new(x);
            im.u.iter().map(|ui| d.diff(ui)).collect()
        })
        .collect();
    let mut out = ImmersionResidual {
        norm_residual: 0.0,
        metric_residual: 0.0,
        min_abs_det: f64::INFINITY,
    };
    for p in grid {
        let mut ev = Evaluator::new(p);
        let u: Vec<C64> =
            im.u.iter()
                .map(|e| ev.eval(e))
                .collect::<Result<_, _>>()
                .map_err(eval_err("u"))?;
        let n: C64 = u.iter().zip(&im.signature).map(|(a, s)| a * a * s).sum();
        out.norm_residual = out.norm_residual.max((n + 1.0).norm());
        let mut d = vec![vec![C64::new(0.0, 0.0); 6]; k];
        for a in 0..k {
            for i in 0..6 {
                d[a][i] = ev.eval(&du[a][i]).map_err(eval_err("du"))?;
            }
        }
        let mut gram = DMatrix::<f64>::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                let g: C64 = (0..6).map(|i| d[a][i] * d[b][i] * im.signature[i]).sum();
                let c = ev
                    .eval(&im.claimed_metric[a][b])
                    .map_err(eval_err("claimed metric"))?;
                out.metric_residual = out.metric_residual.max((g - c).norm());
                gram[(a, b)] = g.re;
            }
        }
        out.min_abs_det = out.min_abs_det.min(gram.determinant().abs());
    }
    Ok(out)
}

/// 3×3 helper used by catalog oracles.
pub fn mat3(rows: [[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_row_slice(&rows.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coframe::ModelBuilder;

    fn flat() -> G2Field {
        let names = ["w1", "w2", "w3", "w4", "w5", "w6", "w7"];
        let mut b = ModelBuilder::new("flat", &names);
        b.closed(&names);
        attach_g2(b.build().unwrap(), None, &[]).unwrap()
    }

    #[test]
    fn flat_has_no_torsion() {
        let g = flat();
        let t = g.torsion().unwrap();
        assert!(t.tau.is_zero() && t.dtau.is_zero());
        let p = g.at(&t, &Assignment::new()).unwrap();
        assert_eq!(classify_torsion(&p).kind, TorsionType::Zero);
        assert_eq!(lambda_at(&p), None);
        let r = ricci(&p).unwrap();
        assert_eq!(r.ric.amax(), 0.0);
        assert_eq!(bryant_identity_residuals(&p, 0.0), (0.0, 0.0));
        let h = extract_h(&p, 0.0).unwrap();
        assert_eq!(h.h.amax(), 0.0);
    }

    #[test]
    fn j_is_calibrated_with_unit_constant() {
        let (r, raw) = j_calibration();
        assert!(r < 1e-12);
        assert_eq!(raw, 6.0);
    }

    #[test]
    fn hodge_sym_rejects_vertical_forms() {
        let f = FieldForm::gen(8);
        assert!(hodge_sym(&f, "x").is_err());
        assert_eq!(hodge_sym(&phi_form(), "phi").unwrap(), psi_form());
    }

    #[test]
    fn swapped_heptad_breaks_adapted_frame() {
        let names = ["w1", "w2", "w3", "w4", "w5", "w6", "w7"];
        let mut b = ModelBuilder::new("flat", &names);
        b.closed(&names);
        let declared = phi_form().map(|e| e.clone());
        let swapped = {
            let fc = crate::coframe::FrameChange {
                names: names.iter().map(|s| s.to_string()).collect(),
                forms: (0..7)
                    .map(|i| FieldForm::gen([1, 0, 2, 3, 4, 5, 6][i]))
                    .collect(),
                inverse: (0..7)
                    .map(|i| FieldForm::gen([1, 0, 2, 3, 4, 5, 6][i]))
                    .collect(),
            };
            crate::coframe::rewrite_form(&fc, &declared)
        };
        let m = b.build().unwrap();
        let pts = vec![Assignment::new()];
        assert!(attach_g2(m.clone(), Some(&declared), &pts).is_ok());
        assert!(matches!(
            attach_g2(m, Some(&swapped), &pts),
            Err(G2Error::AdaptedFrame(_))
        ));
    }
}
