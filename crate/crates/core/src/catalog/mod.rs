//! Encoded examples: each entry builds a coframe model with an adapted heptad and lists the
//! values the verification suite must recover.

mod bryant;
mod negative;
mod quadratic;
mod soliton;
mod type_a;
mod type_s;

pub use negative::{curvature_solve, curvature_solve_with, CurvatureSolve, NegCoefficients};
pub use type_s::{immersion_gj, immersion_m2, immersion_m3, mu_type_s, TypeSData};

use crate::coframe::{change_frame, rewrite_form, FieldForm, FrameChange, Model, ModelBuilder};
use crate::g2ops::{attach_g2, FlowSplit, G2Error, G2Field, Torsion, TorsionType};
use crate::symexpr::{Assignment, Expr};
use num_complex::Complex64 as C64;
use std::fmt;

pub const HEPTAD: [&str; 7] = ["w1", "w2", "w3", "w4", "w5", "w6", "w7"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expected {
    /// λ of the quadratic condition; `None` for entries that are not λ-quadratic.
    pub lambda: Option<f64>,
    pub kind: TorsionType,
    pub erp: bool,
    pub soliton: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct EntryInfo {
    pub id: &'static str,
    pub title: &'static str,
    pub stretch: bool,
    pub expected: Expected,
}

/// Context handed to entry-specific checks.
pub struct CheckCtx<'a> {
    pub field: &'a G2Field,
    pub torsion: &'a Torsion,
    pub points: &'a [Assignment],
    pub samples: usize,
    pub seed: u64,
}

type CheckFn = dyn Fn(&CheckCtx) -> Result<f64, G2Error> + Send + Sync;

/// A named residual with threshold `factor × tol`.
pub struct Extra {
    pub name: String,
    pub factor: f64,
    pub eval: Box<CheckFn>,
}

impl Extra {
    pub fn new(
        name: &str,
        factor: f64,
        f: impl Fn(&CheckCtx) -> Result<f64, G2Error> + Send + Sync + 'static,
    ) -> Extra {
        Extra {
            name: name.to_string(),
            factor,
            eval: Box::new(f),
        }
    }
}

impl fmt::Debug for Extra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Extra({})", self.name)
    }
}

/// Steady or expanding soliton data: dτ = cφ + L_Vφ.
#[derive(Debug, Clone)]
pub struct SolitonSpec {
    pub v: Vec<Expr>,
    pub c: f64,
    pub grid_var: String,
    pub grid: Vec<f64>,
}

#[derive(Debug)]
pub struct Built {
    pub field: G2Field,
    pub flow: Option<FlowSplit>,
    pub soliton: Option<SolitonSpec>,
    pub extras: Vec<Extra>,
}

impl Built {
    fn plain(field: G2Field) -> Built {
        Built {
            field,
            flow: None,
            soliton: None,
            extras: Vec::new(),
        }
    }
}

pub struct CatalogEntry {
    pub info: EntryInfo,
    build: fn() -> Result<Built, G2Error>,
}

impl CatalogEntry {
    pub fn build(&self) -> Result<Built, G2Error> {
        (self.build)()
    }
}

const fn exp(lambda: Option<f64>, kind: TorsionType, erp: bool, soliton: bool) -> Expected {
    Expected {
        lambda,
        kind,
        erp,
        soliton,
    }
}

const ERP: Expected = exp(Some(1.0 / 6.0), TorsionType::Positive, true, false);

static ENTRIES: &[CatalogEntry] = &[
    CatalogEntry {
        info: EntryInfo {
            id: "flat",
            title: "abelian R^7",
            stretch: false,
            expected: exp(None, TorsionType::Zero, false, false),
        },
        build: flat,
    },
    CatalogEntry {
        info: EntryInfo {
            id: "bryant_erp",
            title: "homogeneous ERP example on the 11-dimensional group",
            stretch: false,
            expected: ERP,
        },
        build: bryant::build,
    },
    CatalogEntry {
        info: EntryInfo {
            id: "lauret_GJ",
            title: "type S, roots on a regular tetrahedron (Lie algebra)",
            stretch: false,
            expected: ERP,
        },
        build: type_s::build_gj,
    },
    CatalogEntry {
        info: EntryInfo {
            id: "erp_M2",
            title: "type S, triple root and antipodal single root",
            stretch: false,
            expected: ERP,
        },
        build: type_s::build_m2,
    },
    CatalogEntry {
        info: EntryInfo {
            id: "erp_M3_homog",
            title: "type S, antipodal double roots, homogeneous",
            stretch: false,
            expected: ERP,
        },
        build: type_s::build_m3_homog,
    },
    CatalogEntry {
        info: EntryInfo {
            id: "erp_M3_cohom1",
            title: "type S, antipodal double roots, cohomogeneity one (complete)",
            stretch: true,
            expected: ERP,
        },
        build: type_s::build_m3_cohom1,
    },
    CatalogEntry {
        info: EntryInfo {
            id: "third_quadratic",
            title: "1/3-quadratic structure on R+ x G/S^1",
            stretch: false,
            expected: exp(Some(1.0 / 3.0), TorsionType::Generic, false, false),
        },
        build: quadratic::build,
    },
    CatalogEntry {
        info: EntryInfo {
            id: "neg_m1_flat",
            title: "lambda = -1, flat base",
            stretch: false,
            expected: exp(Some(-1.0), TorsionType::Negative, false, false),
        },
        build: negative::build_m1,
    },
    CatalogEntry {
        info: EntryInfo {
            id: "neg_m18_twistor",
            title: "lambda = -1/8, twistor space of a flat base",
            stretch: true,
            expected: exp(Some(-1.0 / 8.0), TorsionType::Negative, false, false),
        },
        build: negative::build_m18,
    },
    CatalogEntry {
        info: EntryInfo {
            id: "neg_25_t2bundle",
            title: "lambda = 2/5, T^2-bundle over a flat hyperkahler base",
            stretch: false,
            expected: exp(Some(2.0 / 5.0), TorsionType::Negative, false, false),
        },
        build: negative::build_25,
    },
    CatalogEntry {
        info: EntryInfo {
            id: "neg_34_twistor",
            title: "lambda = 3/4, twistor space with nearly Kahler fibres",
            stretch: true,
            expected: exp(Some(3.0 / 4.0), TorsionType::Negative, false, false),
        },
        build: negative::build_34,
    },
    CatalogEntry {
        info: EntryInfo {
            id: "soliton_twistor",
            title: "steady gradient soliton on the twistor bundle (Lambert W)",
            stretch: false,
            expected: exp(None, TorsionType::Negative, false, true),
        },
        build: soliton::build_twistor,
    },
    CatalogEntry {
        info: EntryInfo {
            id: "soliton_hk",
            title: "steady gradient soliton over a flat hyperkahler 4-manifold",
            stretch: false,
            expected: exp(None, TorsionType::Negative, false, true),
        },
        build: soliton::build_hk,
    },
    CatalogEntry {
        info: EntryInfo {
            id: "weierstrass_typeA",
            title: "type A Weierstrass construction with g(z) = z^2/2",
            stretch: false,
            expected: ERP,
        },
        build: type_a::build,
    },
];

pub fn entries() -> &'static [CatalogEntry] {
    ENTRIES
}

/// Metadata for every entry, in catalog order.
pub fn list_entries() -> Vec<EntryInfo> {
    ENTRIES.iter().map(|e| e.info).collect()
}

pub fn find(id: &str) -> Option<&'static CatalogEntry> {
    ENTRIES.iter().find(|e| e.info.id == id)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CatalogError {
    #[error("unknown catalog id `{0}`")]
    UnknownId(String),
    #[error(transparent)]
    Build(#[from] G2Error),
}

pub fn build(id: &str) -> Result<Built, CatalogError> {
    let e = find(id).ok_or_else(|| CatalogError::UnknownId(id.to_string()))?;
    Ok(e.build()?)
}

fn flat() -> Result<Built, G2Error> {
    let mut b = ModelBuilder::new("flat", &HEPTAD);
    b.closed(&HEPTAD);
    b.note("all generators closed");
    Ok(Built::plain(attach_g2(b.build()?, None, &[])?))
}

/// Re-expresses `raw` in the heptad coframe and checks the declared φ (raw basis).
pub(crate) fn reframe(
    raw: Model,
    fc: FrameChange,
    declared_phi: &FieldForm,
) -> Result<G2Field, G2Error> {
    let check = raw.sample_points(12, 0x5eed)?;
    let m = change_frame(&raw, &fc, &check)?;
    let phi_new = rewrite_form(&fc, declared_phi);
    attach_g2(m, Some(&phi_new), &check)
}

pub(crate) fn cx(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// The U(2)⁺ splitting ω = ν + η used by the positive-type entries.
pub(crate) struct U2Plus {
    /// ν_{ab̄}, indices 0-based.
    pub nu: [[FieldForm; 2]; 2],
    pub eta: [FieldForm; 2],
}

impl U2Plus {
    pub fn new() -> U2Plus {
        let w = |i: usize| FieldForm::gen(i);
        let i = cx(0.0, 1.0);
        let nu11 = &w(0) * cx(0.0, -1.0);
        let nu12 = &w(1) * -1.0 + &w(2) * i;
        let nu21 = &w(1) + &w(2) * i;
        let nu22 = &w(0) * i;
        let eta1 = &w(3) + &w(4) * i;
        let eta2 = &w(5) * -1.0 + &w(6) * i;
        U2Plus {
            nu: [[nu11, nu12], [nu21, nu22]],
            eta: [eta1, eta2],
        }
    }

    /// −(1/12) ν_{ab̄}ν_{bc̄}ν_{cā} + ½ ν_{ab̄}∧η̄_a∧η_b.
    pub fn phi(&self) -> FieldForm {
        let mut acc = FieldForm::zero(3);
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    acc = acc + self.nu[a][b].w(&self.nu[b][c]).w(&self.nu[c][a]) * (-1.0 / 12.0);
                }
                acc = acc + self.nu[a][b].w(&self.eta[a].conj()).w(&self.eta[b]) * 0.5;
            }
        }
        acc
    }

    /// Real structure equations for ω1..ω7 from complex dν and dη.
    pub fn real_differentials(
        &self,
        dnu: &[[FieldForm; 2]; 2],
        deta: &[FieldForm; 2],
    ) -> [FieldForm; 7] {
        [
            (&dnu[0][0] * cx(0.0, 1.0)).re(),
            -dnu[0][1].re(),
            dnu[0][1].im(),
            deta[0].re(),
            deta[0].im(),
            -deta[1].re(),
            deta[1].im(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn ids_are_unique_and_enough() {
        let ids: HashSet<_> = list_entries().iter().map(|e| e.id).collect();
        assert_eq!(ids.len(), ENTRIES.len());
        assert!(ids.len() >= 13);
        let stretch: Vec<_> = list_entries()
            .iter()
            .filter(|e| e.stretch)
            .map(|e| e.id)
            .collect();
        assert_eq!(
            stretch,
            ["erp_M3_cohom1", "neg_m18_twistor", "neg_34_twistor"]
        );
    }

    #[test]
    fn unknown_id() {
        assert!(matches!(build("nope"), Err(CatalogError::UnknownId(_))));
    }

    #[test]
    fn u2plus_phi_is_standard() {
        let u = U2Plus::new();
        let diff = u.phi() - crate::g2ops::phi_form();
        let pts = [Assignment::new()];
        assert!(crate::coframe::sup_over(&[("phi".into(), diff)], &pts).unwrap() < 1e-15);
    }
}
