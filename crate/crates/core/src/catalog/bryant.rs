use super::{cx, Built, U2Plus, HEPTAD};
use crate::coframe::{FieldForm, ModelBuilder};
use crate::g2ops::{attach_g2, FlowSplit, G2Error};
use crate::symexpr::Expr;

/// κ as a u(2)-valued form on the generators a1, a2, b1, b2 (slots 7..11).
pub(super) fn kappa(base: usize) -> [[FieldForm; 2]; 2] {
    let g = |j: usize| FieldForm::gen(base + j);
    let i = cx(0.0, 1.0);
    [
        [&g(0) * i, &g(2) + &g(3) * i],
        [&g(2) * -1.0 + &g(3) * i, &g(1) * i],
    ]
}

pub(super) fn build() -> Result<Built, G2Error> {
    let mut names: Vec<&str> = HEPTAD.to_vec();
    names.extend(["a1", "a2", "b1", "b2"]);
    let mut b = ModelBuilder::new("bryant_erp", &names);
    b.constant("k", 0.5, 2.0);
    let k = Expr::named("k");
    let ik = Expr::i() * &k;
    let k2 = &k * &k;

    let u = U2Plus::new();
    let kap = kappa(7);
    let nu = &u.nu;
    let eta = &u.eta;

    let deta: [FieldForm; 2] = std::array::from_fn(|a| {
        let mut acc = FieldForm::zero(2);
        for c in 0..2 {
            acc = acc - kap[a][c].w(&eta[c]) + nu[a][c].w(&eta[c]) * &ik;
        }
        acc
    });
    let dnu: [[FieldForm; 2]; 2] = std::array::from_fn(|a| {
        std::array::from_fn(|bb| {
            let mut acc = FieldForm::zero(2);
            for c in 0..2 {
                acc = acc - kap[a][c].w(&nu[c][bb]) + kap[c][bb].w(&nu[a][c]);
            }
            acc
        })
    });
    let dkap: [[FieldForm; 2]; 2] = std::array::from_fn(|a| {
        std::array::from_fn(|bb| {
            let mut acc = FieldForm::zero(2);
            for c in 0..2 {
                acc = acc - kap[a][c].w(&kap[c][bb]) + nu[a][c].w(&nu[c][bb]) * &k2;
            }
            acc
        })
    });

    for (i, f) in u.real_differentials(&dnu, &deta).into_iter().enumerate() {
        b.d_index(i, f);
    }
    let mi = cx(0.0, -1.0);
    b.d_index(7, (&dkap[0][0] * mi).re());
    b.d_index(8, (&dkap[1][1] * mi).re());
    b.d_index(9, dkap[0][1].re());
    b.d_index(10, dkap[0][1].im());
    b.note("U(2)+ structure equations with parameter k");

    let model = b.build()?;
    let check = model.sample_points(4, 11)?;
    let field = attach_g2(model, Some(&u.phi()), &check)?;
    Ok(Built {
        field,
        flow: Some(FlowSplit::standard()),
        soliton: None,
        extras: Vec::new(),
    })
}
