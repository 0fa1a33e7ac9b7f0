//! Pointwise exterior algebra of ℝ⁷ in an orthonormal coframe e¹,…,e⁷.
//!
//! A k-form is a dense vector over the C(7,k) increasing multi-indices in lexicographic
//! order. Multi-indices are bit masks; bit i stands for e^{i+1}.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use std::sync::OnceLock;

pub const DIM: usize = 7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormError {
    #[error("degree overflow: {0} + {1} > 7")]
    DegreeOverflow(usize, usize),
    #[error("degree mismatch: {0} vs {1}")]
    DegreeMismatch(usize, usize),
    #[error("zero covector")]
    ZeroCovector,
}

struct Tables {
    masks: Vec<Vec<u8>>,
    pos: [usize; 128],
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let mut masks = vec![Vec::new(); DIM + 1];
        fn rec(start: usize, k: usize, cur: u8, out: &mut Vec<u8>) {
            if k == 0 {
                out.push(cur);
                return;
            }
            for i in start..DIM {
                rec(i + 1, k - 1, cur | (1 << i), out);
            }
        }
        for (k, m) in masks.iter_mut().enumerate() {
            rec(0, k, 0, m);
        }
        let mut pos = [0usize; 128];
        for m in &masks {
            for (i, &mask) in m.iter().enumerate() {
                pos[mask as usize] = i;
            }
        }
        Tables { masks, pos }
    })
}

/// Increasing multi-indices of degree k in lexicographic order.
pub fn basis_masks(k: usize) -> &'static [u8] {
    &tables().masks[k]
}

/// Position of a mask in its degree's lexicographic list.
pub fn mask_index(mask: u8) -> usize {
    tables().pos[mask as usize]
}

pub fn binom7(k: usize) -> usize {
    basis_masks(k).len()
}

/// Sign of e^A ∧ e^B relative to e^{A∪B}; callers ensure A ∩ B = ∅.
pub fn wedge_sign(a: u64, b: u64) -> f64 {
    let mut inversions = 0u32;
    let mut bb = b;
    while bb != 0 {
        let j = bb.trailing_zeros();
        inversions += (a >> (j + 1)).count_ones();
        bb &= bb - 1;
    }
    if inversions.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Multi-index as 1-based indices, e.g. 0b101 ↦ [1, 3].
pub fn mask_indices(mask: u64) -> Vec<usize> {
    (0..64)
        .filter(|i| mask >> i & 1 == 1)
        .map(|i| i + 1)
        .collect()
}

/// Mask from 1-based indices in any order, together with the sign of sorting them.
pub fn sorted_mask(idx: &[usize]) -> Option<(u64, f64)> {
    let mut mask = 0u64;
    let mut sign = 1.0;
    for &i in idx {
        let bit = 1u64 << (i - 1);
        if mask & bit != 0 {
            return None;
        }
        if (mask >> i).count_ones() % 2 == 1 {
            sign = -sign;
        }
        mask |= bit;
    }
    Some((mask, sign))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumForm {
    deg: usize,
    c: Vec<C64>,
}

impl NumForm {
    pub fn zero(deg: usize) -> NumForm {
        assert!(deg <= DIM);
        NumForm {
            deg,
            c: vec![C64::new(0.0, 0.0); binom7(deg)],
        }
    }

    pub fn from_coeffs(deg: usize, c: Vec<C64>) -> NumForm {
        assert_eq!(c.len(), binom7(deg), "coefficient length for degree {deg}");
        NumForm { deg, c }
    }

    pub fn from_real(deg: usize, c: &[f64]) -> NumForm {
        NumForm::from_coeffs(deg, c.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Sum of signed basis monomials given by 1-based indices.
    pub fn from_terms(deg: usize, terms: &[(&[usize], f64)]) -> NumForm {
        let mut f = NumForm::zero(deg);
        for (idx, v) in terms {
            assert_eq!(idx.len(), deg);
            let (m, s) = sorted_mask(idx).expect("repeated index");
            f.c[mask_index(m as u8)] += s * v;
        }
        f
    }

    pub fn scalar(v: C64) -> NumForm {
        NumForm { deg: 0, c: vec![v] }
    }

    pub fn basis1(i: usize) -> NumForm {
        let mut f = NumForm::zero(1);
        f.c[i] = C64::new(1.0, 0.0);
        f
    }

    pub fn volume() -> NumForm {
        NumForm::from_real(7, &[1.0])
    }

    pub fn deg(&self) -> usize {
        self.deg
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.c
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.c
    }

    pub fn get(&self, mask: u8) -> C64 {
        debug_assert_eq!(mask.count_ones() as usize, self.deg);
        self.c[mask_index(mask)]
    }

    pub fn set(&mut self, mask: u8, v: C64) {
        debug_assert_eq!(mask.count_ones() as usize, self.deg);
        self.c[mask_index(mask)] = v;
    }

    pub fn wedge(&self, other: &NumForm) -> Result<NumForm, FormError> {
        let k = self.deg + other.deg;
        if k > DIM {
            return Err(FormError::DegreeOverflow(self.deg, other.deg));
        }
        let mut out = NumForm::zero(k);
        let (ma, mb) = (basis_masks(self.deg), basis_masks(other.deg));
        for (i, a) in self.c.iter().enumerate() {
            if *a == C64::new(0.0, 0.0) {
                continue;
            }
            for (j, b) in other.c.iter().enumerate() {
                if ma[i] & mb[j] != 0 || *b == C64::new(0.0, 0.0) {
                    continue;
                }
                let s = wedge_sign(ma[i] as u64, mb[j] as u64);
                out.c[mask_index(ma[i] | mb[j])] += a * b * s;
            }
        }
        Ok(out)
    }

    /// Wedge that panics on overflow; for internal use where degrees are known.
    pub fn w(&self, other: &NumForm) -> NumForm {
        self.wedge(other).expect("degree overflow")
    }

    pub fn hodge(&self) -> NumForm {
        let mut out = NumForm::zero(DIM - self.deg);
        for (i, &m) in basis_masks(self.deg).iter().enumerate() {
            let mc = 0x7f ^ m;
            out.c[mask_index(mc)] += self.c[i] * wedge_sign(m as u64, mc as u64);
        }
        out
    }

    pub fn interior(&self, v: &[C64]) -> NumForm {
        assert!(self.deg >= 1, "interior product of a 0-form");
        assert_eq!(v.len(), DIM);
        let mut out = NumForm::zero(self.deg - 1);
        for (i, &m) in basis_masks(self.deg).iter().enumerate() {
            if self.c[i] == C64::new(0.0, 0.0) {
                continue;
            }
            let mut bits = m;
            let mut slot = 0;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                let s = if slot % 2 == 0 { 1.0 } else { -1.0 };
                out.c[mask_index(m & !(1 << b))] += self.c[i] * v[b] * s;
                bits &= bits - 1;
                slot += 1;
            }
        }
        out
    }

    /// Contraction with the i-th basis vector (0-based).
    pub fn interior_basis(&self, i: usize) -> NumForm {
        let mut v = [C64::new(0.0, 0.0); DIM];
        v[i] = C64::new(1.0, 0.0);
        self.interior(&v)
    }

    /// Bilinear inner product; basis monomials are orthonormal.
    pub fn inner(&self, other: &NumForm) -> Result<C64, FormError> {
        if self.deg != other.deg {
            return Err(FormError::DegreeMismatch(self.deg, other.deg));
        }
        Ok(self.c.iter().zip(&other.c).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.c.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.c.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    pub fn add(&self, other: &NumForm) -> NumForm {
        assert_eq!(self.deg, other.deg);
        NumForm {
            deg: self.deg,
            c: self.c.iter().zip(&other.c).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &NumForm) -> NumForm {
        assert_eq!(self.deg, other.deg);
        NumForm {
            deg: self.deg,
            c: self.c.iter().zip(&other.c).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: impl Into<C64>) -> NumForm {
        let s = s.into();
        NumForm {
            deg: self.deg,
            c: self.c.iter().map(|a| a * s).collect(),
        }
    }

    pub fn max_imag(&self) -> f64 {
        self.c.iter().map(|a| a.im.abs()).fold(0.0, f64::max)
    }
}

/// The standard 3-form e123 + e145 + e167 + e246 − e257 − e347 − e356.
pub fn phi() -> &'static NumForm {
    static P: OnceLock<NumForm> = OnceLock::new();
    P.get_or_init(|| {
        NumForm::from_terms(
            3,
            &[
                (&[1, 2, 3], 1.0),
                (&[1, 4, 5], 1.0),
                (&[1, 6, 7], 1.0),
                (&[2, 4, 6], 1.0),
                (&[2, 5, 7], -1.0),
                (&[3, 4, 7], -1.0),
                (&[3, 5, 6], -1.0),
            ],
        )
    })
}

/// The coassociative 4-form, written out term by term.
pub fn psi() -> &'static NumForm {
    static P: OnceLock<NumForm> = OnceLock::new();
    P.get_or_init(|| {
        NumForm::from_terms(
            4,
            &[
                (&[4, 5, 6, 7], 1.0),
                (&[2, 3, 6, 7], 1.0),
                (&[2, 3, 4, 5], 1.0),
                (&[1, 3, 5, 7], 1.0),
                (&[1, 3, 4, 6], -1.0),
                (&[1, 2, 5, 6], -1.0),
                (&[1, 2, 4, 7], -1.0),
            ],
        )
    })
}

/// Totally antisymmetric ε-symbols read off φ and *φ (0-based indices).
pub struct EpsSymbol {
    pub e3: [[[i8; DIM]; DIM]; DIM],
    pub e4: [[[[i8; DIM]; DIM]; DIM]; DIM],
}

impl EpsSymbol {
    pub fn get() -> &'static EpsSymbol {
        static E: OnceLock<EpsSymbol> = OnceLock::new();
        E.get_or_init(|| {
            let mut e3 = [[[0i8; DIM]; DIM]; DIM];
            let mut e4 = [[[[0i8; DIM]; DIM]; DIM]; DIM];
            for i in 0..DIM {
                for j in 0..DIM {
                    for k in 0..DIM {
                        if let Some((m, s)) = sorted_mask(&[i + 1, j + 1, k + 1]) {
                            e3[i][j][k] = (s * phi().get(m as u8).re) as i8;
                        }
                        for l in 0..DIM {
                            if let Some((m, s)) = sorted_mask(&[i + 1, j + 1, k + 1, l + 1]) {
                                e4[i][j][k][l] = (s * psi().get(m as u8).re) as i8;
                            }
                        }
                    }
                }
            }
            EpsSymbol { e3, e4 }
        })
    }
}

/// Dense matrix of β ↦ *(β∧φ) on Λ² in the lexicographic basis.
pub fn lambda2_operator() -> DMatrix<f64> {
    let n = binom7(2);
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut b = NumForm::zero(2);
        b.c[j] = C64::new(1.0, 0.0);
        let img = b.w(phi()).hodge();
        for i in 0..n {
            m[(i, j)] = img.c[i].re;
        }
    }
    m
}

/// Sorted eigenvalues of [`lambda2_operator`].
pub fn lambda2_spectrum() -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(lambda2_operator())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Orthonormal basis of Λ²₁₄ (the −1 eigenspace), one column per vector.
pub fn lambda2_14_basis() -> &'static DMatrix<f64> {
    static B: OnceLock<DMatrix<f64>> = OnceLock::new();
    B.get_or_init(|| {
        let eig = SymmetricEigen::new(lambda2_operator());
        let cols: Vec<_> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] < 0.5)
            .map(|i| eig.eigenvectors.column(i).into_owned())
            .collect();
        assert_eq!(cols.len(), 14);
        DMatrix::from_columns(&cols)
    })
}

/// (Λ²₇, Λ²₁₄) parts: the 2 and −1 eigenspace components of β ↦ *(β∧φ).
pub fn project_lambda2(a: &NumForm) -> (NumForm, NumForm) {
    assert_eq!(a.deg, 2);
    let b = a.w(phi()).hodge();
    let p7 = b.add(a).scale(1.0 / 3.0);
    let p14 = a.sub(&p7);
    (p7, p14)
}

fn lambda3_7_gen(i: usize) -> NumForm {
    NumForm::basis1(i).w(phi()).hodge()
}

/// |*(e¹∧φ)|², the common squared norm of the Λ³₇ generators.
pub fn lambda3_7_norm_sq() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| lambda3_7_gen(0).norm_sq())
}

/// (Λ³₁, Λ³₇, Λ³₂₇) parts.
pub fn decompose_lambda3(a: &NumForm) -> (NumForm, NumForm, NumForm) {
    assert_eq!(a.deg, 3);
    let p1 = phi().scale(a.inner(phi()).unwrap() / 7.0);
    let c = lambda3_7_norm_sq();
    let mut p7 = NumForm::zero(3);
    for i in 0..DIM {
        let g = lambda3_7_gen(i);
        p7 = p7.add(&g.scale(a.inner(&g).unwrap() / c));
    }
    let p27 = a.sub(&p1).sub(&p7);
    (p1, p7, p27)
}

fn numeric_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-10 * smax).count()
}

fn wedge_matrix(xi: &NumForm, basis: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(binom7(3), basis.ncols());
    for j in 0..basis.ncols() {
        let beta = NumForm::from_real(2, basis.column(j).as_slice());
        let img = beta.w(xi);
        for i in 0..binom7(3) {
            m[(i, j)] = img.c[i].re;
        }
    }
    m
}

/// dim{β ∈ Λ²₁₄ : β∧ξ = 0}.
pub fn characteristic_kernel(xi: &NumForm) -> Result<usize, FormError> {
    assert_eq!(xi.deg, 1);
    if xi.sup_norm() == 0.0 {
        return Err(FormError::ZeroCovector);
    }
    let b = lambda2_14_basis();
    Ok(b.ncols() - numeric_rank(&wedge_matrix(xi, b)))
}

/// dim{β ∈ Λ² : β∧ξ = 0}, the analogous kernel in all of Λ².
pub fn full_lambda2_kernel(xi: &NumForm) -> Result<usize, FormError> {
    if xi.sup_norm() == 0.0 {
        return Err(FormError::ZeroCovector);
    }
    let id = DMatrix::identity(21, 21);
    Ok(21 - numeric_rank(&wedge_matrix(xi, &id)))
}

/// dim(ker(∧ξ on Λ²) ∩ Λ²₁₄), via dim(U∩W) = dim U + dim W − dim(U+W).
pub fn kernel_intersection_14(xi: &NumForm) -> Result<usize, FormError> {
    if xi.sup_norm() == 0.0 {
        return Err(FormError::ZeroCovector);
    }
    let id = DMatrix::identity(21, 21);
    let m = wedge_matrix(xi, &id);
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let kernel_rows: Vec<_> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= 1e-10 * smax)
        .map(|i| vt.row(i).transpose())
        .collect();
    let mut cols = kernel_rows;
    let b14 = lambda2_14_basis();
    let k = cols.len();
    for j in 0..b14.ncols() {
        cols.push(b14.column(j).into_owned());
    }
    let joint = DMatrix::from_columns(&cols);
    Ok(k + b14.ncols() - numeric_rank(&joint))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_wedges() {
        let e1 = NumForm::basis1(0);
        let e2 = NumForm::basis1(1);
        let e12 = e1.w(&e2);
        assert_eq!(e12, NumForm::from_terms(2, &[(&[1, 2], 1.0)]));
        assert_eq!(e1.w(&e1).sup_norm(), 0.0);
        assert!(phi().wedge(&NumForm::volume()).is_err());
    }

    #[test]
    fn phi_wedge_psi_is_seven_vol() {
        let v = phi().w(psi());
        assert_eq!(v.coeffs()[0], C64::new(7.0, 0.0));
    }

    #[test]
    fn hodge_phi_is_psi() {
        assert_eq!(&phi().hodge(), psi());
        assert_eq!(
            NumForm::scalar(C64::new(1.0, 0.0)).hodge(),
            NumForm::volume()
        );
    }

    #[test]
    fn interior_of_phi() {
        let want = NumForm::from_terms(2, &[(&[2, 3], 1.0), (&[4, 5], 1.0), (&[6, 7], 1.0)]);
        assert_eq!(phi().interior_basis(0), want);
        let e12 = NumForm::from_terms(2, &[(&[1, 2], 1.0)]);
        assert_eq!(e12.interior_basis(0), NumForm::basis1(1));
    }

    #[test]
    fn inner_products() {
        let e12 = NumForm::from_terms(2, &[(&[1, 2], 1.0)]);
        let e13 = NumForm::from_terms(2, &[(&[1, 3], 1.0)]);
        assert_eq!(e12.inner(&e12).unwrap().re, 1.0);
        assert_eq!(e12.inner(&e13).unwrap().re, 0.0);
        assert_eq!(phi().inner(phi()).unwrap().re, 7.0);
        assert!(e12.inner(phi()).is_err());
    }

    #[test]
    fn eps_reproduces_phi_and_psi() {
        let eps = EpsSymbol::get();
        let mut p = NumForm::zero(3);
        let mut q = NumForm::zero(4);
        for i in 0..7 {
            for j in 0..7 {
                for k in 0..7 {
                    if let Some((m, s)) = sorted_mask(&[i + 1, j + 1, k + 1]) {
                        let c = p.get(m as u8);
                        p.set(m as u8, c + s * eps.e3[i][j][k] as f64 / 6.0);
                    }
                    for l in 0..7 {
                        if let Some((m, s)) = sorted_mask(&[i + 1, j + 1, k + 1, l + 1]) {
                            let c = q.get(m as u8);
                            q.set(m as u8, c + s * eps.e4[i][j][k][l] as f64 / 24.0);
                        }
                    }
                }
            }
        }
        assert!(p.sub(phi()).sup_norm() < 1e-15);
        assert!(q.sub(psi()).sup_norm() < 1e-15);
    }

    #[test]
    fn lambda2_examples() {
        let a = phi().interior_basis(0);
        let (p7, p14) = project_lambda2(&a);
        assert!(p14.sup_norm() < 1e-15);
        assert!(p7.sub(&a).sup_norm() < 1e-15);
        let b = NumForm::from_terms(2, &[(&[4, 5], 1.0), (&[6, 7], -1.0)]);
        let (p7, p14) = project_lambda2(&b);
        assert!(p7.sup_norm() < 1e-15);
        assert!(p14.w(psi()).sup_norm() < 1e-15);
        let (z7, z14) = project_lambda2(&NumForm::zero(2));
        assert_eq!(z7.sup_norm() + z14.sup_norm(), 0.0);
    }

    #[test]
    fn lambda3_examples() {
        let (p1, p7, p27) = decompose_lambda3(phi());
        assert!(p1.sub(phi()).sup_norm() < 1e-15);
        assert!(p7.sup_norm() + p27.sup_norm() < 1e-15);
        let a = NumForm::basis1(0).w(phi()).hodge();
        let (p1, p7, p27) = decompose_lambda3(&a);
        assert!(p1.sup_norm() + p27.sup_norm() < 1e-14);
        assert!(p7.sub(&a).sup_norm() < 1e-14);
    }

    #[test]
    fn lambda3_7_generators_orthogonal() {
        let c = lambda3_7_norm_sq();
        assert_eq!(c, 4.0);
        for i in 0..7 {
            for j in 0..7 {
                let g = lambda3_7_gen(i).inner(&lambda3_7_gen(j)).unwrap().re;
                assert_eq!(g, if i == j { c } else { 0.0 });
            }
        }
    }

    #[test]
    fn char_kernel_of_e1() {
        let e1 = NumForm::basis1(0);
        assert_eq!(characteristic_kernel(&e1).unwrap(), 0);
        assert_eq!(full_lambda2_kernel(&e1).unwrap(), 6);
        assert_eq!(kernel_intersection_14(&e1).unwrap(), 0);
        assert!(characteristic_kernel(&NumForm::zero(1)).is_err());
    }
}
