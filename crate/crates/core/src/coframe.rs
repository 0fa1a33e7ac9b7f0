//! Coframe models: generators with declared structure equations, scalar coordinates with
//! declared differentials, named constants, and the exterior derivative they induce.

use crate::multivec::{wedge_sign, NumForm, DIM};
use crate::symexpr::{parse, Assignment, Differ, Evaluator, Expr, ExprError, Node};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Mutex;

/// Bit mask over generator indices; bit i is generator i.
pub type Mask = u64;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model `{model}`: {msg}")]
    Validation { model: String, msg: String },
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("unknown scalar `{0}` in a coefficient")]
    UnknownScalar(String),
    #[error("evaluating {context}: {source}")]
    Eval { context: String, source: ExprError },
    #[error("sampler failure: {0}")]
    Sampler(String),
    #[error("bad model spec: {0}")]
    Spec(String),
}

/// Differential form with symbolic coefficients over a model's generators.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldForm {
    deg: usize,
    terms: BTreeMap<Mask, Expr>,
}

/// Collects terms per multi-index and sums each bucket once.
#[derive(Default)]
pub struct FormAcc {
    deg: usize,
    buckets: BTreeMap<Mask, Vec<Expr>>,
}

impl FormAcc {
    pub fn new(deg: usize) -> Self {
        FormAcc {
            deg,
            buckets: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, mask: Mask, e: Expr) {
        if !e.is_zero() {
            self.buckets.entry(mask).or_default().push(e);
        }
    }

    pub fn push_form(&mut self, f: &FieldForm) {
        assert_eq!(f.deg, self.deg);
        for (m, e) in &f.terms {
            self.push(*m, e.clone());
        }
    }

    pub fn finish(self) -> FieldForm {
        let mut terms = BTreeMap::new();
        for (m, v) in self.buckets {
            let e = if v.len() == 1 {
                v.into_iter().next().unwrap()
            } else {
                Expr::sum(v)
            };
            if !e.is_zero() {
                terms.insert(m, e);
            }
        }
        FieldForm {
            deg: self.deg,
            terms,
        }
    }
}

impl FieldForm {
    pub fn zero(deg: usize) -> FieldForm {
        FieldForm {
            deg,
            terms: BTreeMap::new(),
        }
    }

    pub fn scalar(e: Expr) -> FieldForm {
        let mut f = FieldForm::zero(0);
        if !e.is_zero() {
            f.terms.insert(0, e);
        }
        f
    }

    /// The generator ω_i (0-based).
    pub fn gen(i: usize) -> FieldForm {
        FieldForm::monomial(&[i], Expr::one())
    }

    /// c · ω_{i1}∧…∧ω_{ik}, indices 0-based in any order.
    pub fn monomial(idx: &[usize], c: Expr) -> FieldForm {
        let mut mask: Mask = 0;
        let mut sign = 1.0;
        for &i in idx {
            let bit = 1u64 << i;
            if mask & bit != 0 {
                return FieldForm::zero(idx.len());
            }
            if (mask >> (i + 1)).count_ones() % 2 == 1 {
                sign = -sign;
            }
            mask |= bit;
        }
        let mut f = FieldForm::zero(idx.len());
        let c = if sign < 0.0 { -c } else { c };
        if !c.is_zero() {
            f.terms.insert(mask, c);
        }
        f
    }

    pub fn from_terms(deg: usize, terms: impl IntoIterator<Item = (Mask, Expr)>) -> FieldForm {
        let mut acc = FormAcc::new(deg);
        for (m, e) in terms {
            assert_eq!(m.count_ones() as usize, deg, "mask degree");
            acc.push(m, e);
        }
        acc.finish()
    }

    pub fn deg(&self) -> usize {
        self.deg
    }

    pub fn terms(&self) -> &BTreeMap<Mask, Expr> {
        &self.terms
    }

    pub fn get(&self, mask: Mask) -> Expr {
        self.terms.get(&mask).cloned().unwrap_or_else(Expr::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Union of all generator masks appearing.
    pub fn support(&self) -> Mask {
        self.terms.keys().fold(0, |a, m| a | m)
    }

    pub fn map(&self, mut f: impl FnMut(&Expr) -> Expr) -> FieldForm {
        let mut acc = FormAcc::new(self.deg);
        for (m, e) in &self.terms {
            acc.push(*m, f(e));
        }
        acc.finish()
    }

    pub fn scale(&self, s: &Expr) -> FieldForm {
        if s.is_zero() {
            return FieldForm::zero(self.deg);
        }
        self.map(|e| e * s)
    }

    pub fn conj(&self) -> FieldForm {
        self.map(|e| e.conj())
    }

    pub fn re(&self) -> FieldForm {
        self.map(|e| e.re())
    }

    pub fn im(&self) -> FieldForm {
        self.map(|e| e.im())
    }

    pub fn wedge(&self, other: &FieldForm) -> FieldForm {
        let mut acc = FormAcc::new(self.deg + other.deg);
        for (ma, a) in &self.terms {
            for (mb, b) in &other.terms {
                if ma & mb != 0 {
                    continue;
                }
                let s = wedge_sign(*ma, *mb);
                let p = a * b;
                acc.push(ma | mb, if s < 0.0 { -p } else { p });
            }
        }
        acc.finish()
    }

    /// Shorthand for [`FieldForm::wedge`].
    pub fn w(&self, other: &FieldForm) -> FieldForm {
        self.wedge(other)
    }

    /// Contraction with the vector field Σ vᵢ eᵢ, where (eᵢ) is dual to the generators.
    pub fn interior(&self, v: &[Expr]) -> FieldForm {
        assert!(self.deg >= 1);
        let mut acc = FormAcc::new(self.deg - 1);
        for (m, c) in &self.terms {
            let mut bits = *m;
            let mut slot = 0;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                if b < v.len() && !v[b].is_zero() {
                    let t = c * &v[b];
                    acc.push(m & !(1u64 << b), if slot % 2 == 0 { t } else { -t });
                }
                slot += 1;
            }
        }
        acc.finish()
    }

    /// Splits into the part supported on generators `0..k` and the remainder.
    pub fn split_at(&self, k: usize) -> (FieldForm, FieldForm) {
        let low: Mask = (1u64 << k) - 1;
        let mut a = FieldForm::zero(self.deg);
        let mut b = FieldForm::zero(self.deg);
        for (m, e) in &self.terms {
            if m & !low == 0 {
                a.terms.insert(*m, e.clone());
            } else {
                b.terms.insert(*m, e.clone());
            }
        }
        (a, b)
    }

    pub fn subs(&self, map: &HashMap<&str, Expr>) -> FieldForm {
        self.map(|e| e.subs(map))
    }

    /// Numeric coefficients at a point.
    pub fn eval(&self, ev: &mut Evaluator) -> Result<Vec<(Mask, C64)>, ExprError> {
        self.terms
            .iter()
            .map(|(m, e)| Ok((*m, ev.eval(e)?)))
            .collect()
    }

    pub fn eval_sup(&self, ev: &mut Evaluator) -> Result<f64, ExprError> {
        let mut s: f64 = 0.0;
        for e in self.terms.values() {
            s = s.max(ev.eval(e)?.norm());
        }
        Ok(s)
    }

    /// Evaluates and restricts to the first seven generators; returns the vertical sup-norm too.
    pub fn eval_heptad(&self, ev: &mut Evaluator) -> Result<(NumForm, f64), ExprError> {
        let mut out = NumForm::zero(self.deg);
        let mut vertical: f64 = 0.0;
        for (m, e) in &self.terms {
            let v = ev.eval(e)?;
            if m >> DIM == 0 {
                out.set(*m as u8, v);
            } else {
                vertical = vertical.max(v.norm());
            }
        }
        Ok((out, vertical))
    }

    /// Symbolic form with the constant coefficients of a [`NumForm`] on the first seven generators.
    pub fn from_numform(f: &NumForm) -> FieldForm {
        let masks = crate::multivec::basis_masks(f.deg());
        FieldForm::from_terms(
            f.deg(),
            masks
                .iter()
                .zip(f.coeffs())
                .filter(|(_, c)| **c != C64::new(0.0, 0.0))
                .map(|(m, c)| (*m as Mask, Expr::cc(*c))),
        )
    }
}

macro_rules! form_ops {
    ($l:ty, $r:ty) => {
        impl std::ops::Add<$r> for $l {
            type Output = FieldForm;
            fn add(self, rhs: $r) -> FieldForm {
                assert_eq!(self.deg, rhs.deg, "adding forms of different degree");
                let mut acc = FormAcc::new(self.deg);
                acc.push_form(&self);
                acc.push_form(&rhs);
                acc.finish()
            }
        }
        impl std::ops::Sub<$r> for $l {
            type Output = FieldForm;
            fn sub(self, rhs: $r) -> FieldForm {
                assert_eq!(self.deg, rhs.deg, "subtracting forms of different degree");
                let mut acc = FormAcc::new(self.deg);
                acc.push_form(&self);
                for (m, e) in &rhs.terms {
                    acc.push(*m, -e);
                }
                acc.finish()
            }
        }
    };
}

form_ops!(FieldForm, FieldForm);
form_ops!(FieldForm, &FieldForm);
form_ops!(&FieldForm, FieldForm);
form_ops!(&FieldForm, &FieldForm);

impl std::ops::Neg for FieldForm {
    type Output = FieldForm;
    fn neg(self) -> FieldForm {
        self.map(|e| -e)
    }
}

impl std::ops::Neg for &FieldForm {
    type Output = FieldForm;
    fn neg(self) -> FieldForm {
        self.map(|e| -e)
    }
}

impl std::ops::Mul<Expr> for FieldForm {
    type Output = FieldForm;
    fn mul(self, s: Expr) -> FieldForm {
        self.scale(&s)
    }
}

impl std::ops::Mul<&Expr> for &FieldForm {
    type Output = FieldForm;
    fn mul(self, s: &Expr) -> FieldForm {
        self.scale(s)
    }
}

impl std::ops::Mul<&Expr> for FieldForm {
    type Output = FieldForm;
    fn mul(self, s: &Expr) -> FieldForm {
        self.scale(s)
    }
}

impl std::ops::Mul<Expr> for &FieldForm {
    type Output = FieldForm;
    fn mul(self, s: Expr) -> FieldForm {
        self.scale(&s)
    }
}

impl std::ops::Mul<f64> for FieldForm {
    type Output = FieldForm;
    fn mul(self, s: f64) -> FieldForm {
        self.scale(&Expr::c(s))
    }
}

impl std::ops::Mul<f64> for &FieldForm {
    type Output = FieldForm;
    fn mul(self, s: f64) -> FieldForm {
        self.scale(&Expr::c(s))
    }
}

impl std::ops::Mul<C64> for FieldForm {
    type Output = FieldForm;
    fn mul(self, s: C64) -> FieldForm {
        self.scale(&Expr::cc(s))
    }
}

impl std::ops::Mul<C64> for &FieldForm {
    type Output = FieldForm;
    fn mul(self, s: C64) -> FieldForm {
        self.scale(&Expr::cc(s))
    }
}

/// How a scalar coordinate is drawn at a sample point. Bounds may reference constants and
/// previously listed scalars.
#[derive(Clone, Debug, PartialEq)]
pub enum Sample {
    Uniform {
        lo: Expr,
        hi: Expr,
    },
    Formula(Expr),
    /// Root of `equation` in the scalar, bracketed in (lo, hi).
    Implicit {
        equation: Expr,
        lo: Expr,
        hi: Expr,
    },
}

impl Sample {
    pub fn uniform(lo: f64, hi: f64) -> Sample {
        Sample::Uniform {
            lo: Expr::c(lo),
            hi: Expr::c(hi),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scalar {
    pub name: String,
    pub differential: FieldForm,
    pub sample: Sample,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constant {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

/// A finite coframe presentation.
#[derive(Debug)]
pub struct Model {
    pub name: String,
    pub generators: Vec<String>,
    structure: Vec<FieldForm>,
    pub scalars: Vec<Scalar>,
    pub constants: Vec<Constant>,
    pub constraints: Vec<Expr>,
    pub note: String,
    leibniz: Mutex<HashMap<Mask, FieldForm>>,
}

impl Clone for Model {
    fn clone(&self) -> Model {
        Model {
            name: self.name.clone(),
            generators: self.generators.clone(),
            structure: self.structure.clone(),
            scalars: self.scalars.clone(),
            constants: self.constants.clone(),
            constraints: self.constraints.clone(),
            note: self.note.clone(),
            leibniz: Mutex::new(HashMap::new()),
        }
    }
}

impl PartialEq for Model {
    fn eq(&self, o: &Model) -> bool {
        self.name == o.name
            && self.generators == o.generators
            && self.structure == o.structure
            && self.scalars == o.scalars
            && self.constants == o.constants
            && self.constraints == o.constraints
            && self.note == o.note
    }
}

/// Incremental construction of a [`Model`]; `build` validates.
pub struct ModelBuilder {
    name: String,
    generators: Vec<String>,
    structure: Vec<Option<FieldForm>>,
    scalars: Vec<Scalar>,
    constants: Vec<Constant>,
    constraints: Vec<Expr>,
    note: String,
}

impl ModelBuilder {
    pub fn new(name: &str, generators: &[&str]) -> Self {
        ModelBuilder {
            name: name.to_string(),
            generators: generators.iter().map(|s| s.to_string()).collect(),
            structure: vec![None; generators.len()],
            scalars: Vec::new(),
            constants: Vec::new(),
            constraints: Vec::new(),
            note: String::new(),
        }
    }

    pub fn generator_count(&self) -> usize {
        self.generators.len()
    }

    pub fn index(&self, name: &str) -> usize {
        self.generators
            .iter()
            .position(|g| g == name)
            .unwrap_or_else(|| panic!("unknown generator {name}"))
    }

    /// The generator called `name` as a 1-form.
    pub fn g(&self, name: &str) -> FieldForm {
        FieldForm::gen(self.index(name))
    }

    pub fn d(&mut self, name: &str, form: FieldForm) -> &mut Self {
        let i = self.index(name);
        self.structure[i] = Some(form);
        self
    }

    pub fn d_index(&mut self, i: usize, form: FieldForm) -> &mut Self {
        self.structure[i] = Some(form);
        self
    }

    pub fn closed(&mut self, names: &[&str]) -> &mut Self {
        for n in names {
            self.d(n, FieldForm::zero(2));
        }
        self
    }

    pub fn scalar(&mut self, name: &str, differential: FieldForm, sample: Sample) -> &mut Self {
        self.scalars.push(Scalar {
            name: name.to_string(),
            differential,
            sample,
        });
        self
    }

    pub fn constant(&mut self, name: &str, lo: f64, hi: f64) -> &mut Self {
        self.constants.push(Constant {
            name: name.to_string(),
            lo,
            hi,
        });
        self
    }

    pub fn constraint(&mut self, e: Expr) -> &mut Self {
        self.constraints.push(e);
        self
    }

    pub fn note(&mut self, s: &str) -> &mut Self {
        self.note = s.to_string();
        self
    }

    pub fn build(self) -> Result<Model, ModelError> {
        let invalid = |msg: String| ModelError::Validation {
            model: self.name.clone(),
            msg,
        };
        let mut structure = Vec::with_capacity(self.generators.len());
        for (i, s) in self.structure.iter().enumerate() {
            match s {
                Some(f) => structure.push(f.clone()),
                None => {
                    return Err(invalid(format!(
                        "missing structure equation for `{}`",
                        self.generators[i]
                    )))
                }
            }
        }
        let model = Model {
            name: self.name,
            generators: self.generators,
            structure,
            scalars: self.scalars,
            constants: self.constants,
            constraints: self.constraints,
            note: self.note,
            leibniz: Mutex::new(HashMap::new()),
        };
        model.validate()?;
        Ok(model)
    }
}

fn symbols(e: &Expr, vars: &mut HashSet<String>, named: &mut HashSet<String>) {
    let mut seen = HashSet::new();
    let mut stack = vec![e.clone()];
    while let Some(x) = stack.pop() {
        if !seen.insert(x.structural_hash()) {
            continue;
        }
        match x.node() {
            Node::Var(v) => {
                vars.insert(v.to_string());
            }
            Node::Named(n) => {
                named.insert(n.to_string());
            }
            Node::Sum(cs) | Node::Prod(cs) => stack.extend(cs.iter().cloned()),
            Node::Pow(b, _, _) | Node::Apply(_, b) => stack.push(b.clone()),
            Node::Const(_) => {}
        }
    }
}

impl Model {
    fn invalid(&self, msg: String) -> ModelError {
        ModelError::Validation {
            model: self.name.clone(),
            msg,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let n = self.generators.len();
        if n == 0 || n > 63 {
            return Err(self.invalid(format!("{n} generators")));
        }
        let mut seen = HashSet::new();
        for g in &self.generators {
            if !seen.insert(g.as_str()) {
                return Err(self.invalid(format!("duplicate generator `{g}`")));
            }
        }
        let scalar_names: HashSet<&str> = self.scalars.iter().map(|s| s.name.as_str()).collect();
        let const_names: HashSet<&str> = self.constants.iter().map(|c| c.name.as_str()).collect();
        if scalar_names.len() != self.scalars.len() || const_names.len() != self.constants.len() {
            return Err(self.invalid("duplicate scalar or constant name".into()));
        }
        let full: Mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        let mut vars = HashSet::new();
        let mut named = HashSet::new();
        let mut check_form = |f: &FieldForm, deg: usize, what: String| -> Result<(), ModelError> {
            if f.deg != deg {
                return Err(self.invalid(format!("{what} has degree {} (expected {deg})", f.deg)));
            }
            if f.support() & !full != 0 {
                return Err(self.invalid(format!("{what} references a generator index beyond {n}")));
            }
            for e in f.terms.values() {
                symbols(e, &mut vars, &mut named);
            }
            Ok(())
        };
        for (i, s) in self.structure.iter().enumerate() {
            check_form(s, 2, format!("d{}", self.generators[i]))?;
        }
        for s in &self.scalars {
            check_form(&s.differential, 1, format!("d{}", s.name))?;
        }
        for c in &self.constraints {
            symbols(c, &mut vars, &mut named);
        }
        for s in &self.scalars {
            match &s.sample {
                Sample::Uniform { lo, hi } => {
                    symbols(lo, &mut vars, &mut named);
                    symbols(hi, &mut vars, &mut named);
                }
                Sample::Formula(e) => symbols(e, &mut vars, &mut named),
                Sample::Implicit { equation, lo, hi } => {
                    symbols(equation, &mut vars, &mut named);
                    symbols(lo, &mut vars, &mut named);
                    symbols(hi, &mut vars, &mut named);
                }
            }
        }
        for v in &vars {
            if !scalar_names.contains(v.as_str()) {
                return Err(self.invalid(format!("undeclared scalar `{v}`")));
            }
        }
        for c in &named {
            if !const_names.contains(c.as_str()) {
                return Err(self.invalid(format!("undeclared constant `{c}`")));
            }
        }
        for c in &self.constants {
            if !c.lo.is_finite() || !c.hi.is_finite() || c.lo > c.hi {
                return Err(self.invalid(format!("bad range for constant `{}`", c.name)));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.generators.len()
    }

    pub fn structure(&self) -> &[FieldForm] {
        &self.structure
    }

    pub fn generator_index(&self, name: &str) -> Result<usize, ModelError> {
        self.generators
            .iter()
            .position(|g| g == name)
            .ok_or_else(|| ModelError::UnknownGenerator(name.to_string()))
    }

    pub fn gen(&self, name: &str) -> Result<FieldForm, ModelError> {
        Ok(FieldForm::gen(self.generator_index(name)?))
    }

    pub fn constant_names(&self) -> Vec<&str> {
        self.constants.iter().map(|c| c.name.as_str()).collect()
    }

    fn scalar(&self, name: &str) -> Option<&Scalar> {
        self.scalars.iter().find(|s| s.name == name)
    }

    /// Returns a copy with one structure equation replaced; used for mutation tests.
    pub fn with_structure(&self, i: usize, form: FieldForm) -> Model {
        let mut m = self.clone();
        m.structure[i] = form;
        m
    }

    /// Returns a copy with a different constant range.
    pub fn with_constant(&self, name: &str, lo: f64, hi: f64) -> Model {
        let mut m = self.clone();
        for c in &mut m.constants {
            if c.name == name {
                c.lo = lo;
                c.hi = hi;
            }
        }
        m
    }

    /// Returns a copy with a different sampling rule for one scalar.
    pub fn with_sample(&self, name: &str, sample: Sample) -> Model {
        let mut m = self.clone();
        for s in &mut m.scalars {
            if s.name == name {
                s.sample = sample.clone();
            }
        }
        m
    }

    fn d_monomial(&self, mask: Mask) -> Result<FieldForm, ModelError> {
        if let Some(f) = self.leibniz.lock().unwrap().get(&mask) {
            return Ok(f.clone());
        }
        let deg = mask.count_ones() as usize;
        let mut acc = FormAcc::new(deg + 1);
        let mut bits = mask;
        let mut slot = 0;
        while bits != 0 {
            let b = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            if b >= self.generators.len() {
                return Err(ModelError::UnknownGenerator(format!("#{b}")));
            }
            let prefix = mask & ((1u64 << b) - 1);
            let suffix = mask & !((1u64 << (b + 1)) - 1);
            for (m2, c) in &self.structure[b].terms {
                if (prefix | suffix) & m2 != 0 {
                    continue;
                }
                let s = wedge_sign(prefix, *m2)
                    * wedge_sign(prefix | m2, suffix)
                    * if slot % 2 == 0 { 1.0 } else { -1.0 };
                acc.push(prefix | m2 | suffix, if s < 0.0 { -c } else { c.clone() });
            }
            slot += 1;
        }
        let f = acc.finish();
        self.leibniz.lock().unwrap().insert(mask, f.clone());
        Ok(f)
    }

    /// Exterior derivative using the structure equations and the declared scalar differentials.
    pub fn d(&self, a: &FieldForm) -> Result<FieldForm, ModelError> {
        let mut acc = FormAcc::new(a.deg + 1);
        let mut differs: HashMap<String, Differ> = HashMap::new();
        for (mask, coef) in &a.terms {
            if mask >> self.generators.len() != 0 {
                return Err(ModelError::UnknownGenerator(format!("mask {mask:#b}")));
            }
            for v in coef.vars() {
                let s = self
                    .scalar(v)
                    .ok_or_else(|| ModelError::UnknownScalar(v.to_string()))?;
                let dc = differs
                    .entry(v.to_string())
                    .or_insert_with(|| Differ::new(v))
                    .diff(coef);
                if dc.is_zero() {
                    continue;
                }
                for (m1, c1) in &s.differential.terms {
                    if m1 & mask != 0 {
                        continue;
                    }
                    let t = &dc * c1;
                    acc.push(m1 | mask, if wedge_sign(*m1, *mask) < 0.0 { -t } else { t });
                }
            }
            if *mask != 0 {
                let dm = self.d_monomial(*mask)?;
                for (m, c) in &dm.terms {
                    acc.push(*m, coef * c);
                }
            }
        }
        Ok(acc.finish())
    }

    /// Differential of a scalar function.
    pub fn d_fn(&self, f: &Expr) -> Result<FieldForm, ModelError> {
        self.d(&FieldForm::scalar(f.clone()))
    }

    /// Every form whose vanishing certifies d² = 0 on generators and scalars.
    pub fn d_squared_forms(&self) -> Result<Vec<(String, FieldForm)>, ModelError> {
        let mut out = Vec::new();
        for (i, s) in self.structure.iter().enumerate() {
            out.push((format!("d(d{})", self.generators[i]), self.d(s)?));
        }
        for s in &self.scalars {
            out.push((format!("d(d{})", s.name), self.d(&s.differential)?));
        }
        Ok(out)
    }

    /// Max over generators, scalars and sample points of |d²|.
    pub fn d_squared_residual(&self, n_samples: usize, seed: u64) -> Result<f64, ModelError> {
        let forms = self.d_squared_forms()?;
        let pts = self.sample_points(n_samples, seed)?;
        sup_over(&forms, &pts)
    }

    /// Differentials of the algebraic constraints; they must vanish at sample points.
    pub fn constraint_differentials(&self) -> Result<Vec<(String, FieldForm)>, ModelError> {
        self.constraints
            .iter()
            .enumerate()
            .map(|(i, c)| Ok((format!("d(constraint {i})"), self.d_fn(c)?)))
            .collect()
    }

    pub fn constraint_residual(&self, pts: &[Assignment]) -> Result<f64, ModelError> {
        let forms = self.constraint_differentials()?;
        sup_over(&forms, pts)
    }

    pub fn sample_points(&self, n: usize, seed: u64) -> Result<Vec<Assignment>, ModelError> {
        self.sample_points_with(n, seed, None)
    }

    /// Samples `n` points; `grid` pins one scalar to the listed values (n is then the grid length).
    pub fn sample_points_with(
        &self,
        n: usize,
        seed: u64,
        grid: Option<(&str, &[f64])>,
    ) -> Result<Vec<Assignment>, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.map_or(n, |(_, g)| g.len());
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut last_err = String::new();
            let mut ok = None;
            for _ in 0..200 {
                match self.try_sample(&mut rng, grid.map(|(name, g)| (name, g[k]))) {
                    Ok(p) => {
                        ok = Some(p);
                        break;
                    }
                    Err(e) => last_err = e,
                }
            }
            match ok {
                Some(p) => out.push(p),
                None => return Err(ModelError::Sampler(format!("{}: {last_err}", self.name))),
            }
        }
        Ok(out)
    }

    fn try_sample(
        &self,
        rng: &mut ChaCha8Rng,
        pin: Option<(&str, f64)>,
    ) -> Result<Assignment, String> {
        let mut a = Assignment::new();
        for c in &self.constants {
            let v = if c.lo == c.hi {
                c.lo
            } else {
                rng.gen_range(c.lo..c.hi)
            };
            a.set(&c.name, v);
        }
        for s in &self.scalars {
            let eval = |e: &Expr, a: &Assignment| -> Result<f64, String> {
                let v = e.eval(a).map_err(|e| e.to_string())?;
                if v.im.abs() > 1e-14 * (1.0 + v.re.abs()) {
                    return Err(format!("complex value for `{}`", s.name));
                }
                Ok(v.re)
            };
            let value = match (&s.sample, pin) {
                (_, Some((name, v))) if name == s.name => v,
                (Sample::Uniform { lo, hi }, _) => {
                    let (lo, hi) = (eval(lo, &a)?, eval(hi, &a)?);
                    if lo == hi {
                        lo
                    } else if lo < hi {
                        rng.gen_range(lo..hi)
                    } else {
                        return Err(format!("empty range for `{}`", s.name));
                    }
                }
                (Sample::Formula(e), _) => eval(e, &a)?,
                (Sample::Implicit { equation, lo, hi }, _) => {
                    let (lo, hi) = (eval(lo, &a)?, eval(hi, &a)?);
                    solve_bracketed(equation, &s.name, &a, lo, hi)?
                }
            };
            a.set(&s.name, value);
        }
        for (i, c) in self.constraints.iter().enumerate() {
            let v = c.eval(&a).map_err(|e| e.to_string())?;
            if v.norm() > 1e-12 {
                return Err(format!("constraint {i} violated by {:e}", v.norm()));
            }
        }
        // Reject points where the presentation itself is singular.
        let mut ev = Evaluator::new(&a);
        for f in self
            .structure
            .iter()
            .chain(self.scalars.iter().map(|s| &s.differential))
        {
            f.eval(&mut ev).map_err(|e| e.to_string())?;
        }
        Ok(a)
    }

    /// Serializes to the versioned JSON model spec.
    pub fn to_json(&self) -> Value {
        let form = |f: &FieldForm| -> Value {
            let mut m = Map::new();
            for (mask, e) in &f.terms {
                let key = if *mask == 0 {
                    "1".to_string()
                } else {
                    (0..64)
                        .filter(|i| mask >> i & 1 == 1)
                        .map(|i| self.generators[i].as_str())
                        .collect::<Vec<_>>()
                        .join("^")
                };
                m.insert(key, Value::String(e.to_string()));
            }
            Value::Object(m)
        };
        let sample = |s: &Sample| -> Value {
            match s {
                Sample::Uniform { lo, hi } => {
                    json!({"kind": "uniform", "lo": lo.to_string(), "hi": hi.to_string()})
                }
                Sample::Formula(e) => json!({"kind": "formula", "expr": e.to_string()}),
                Sample::Implicit { equation, lo, hi } => json!({
                    "kind": "implicit", "equation": equation.to_string(),
                    "lo": lo.to_string(), "hi": hi.to_string()
                }),
            }
        };
        json!({
            "format": "g2verify-model",
            "version": SCHEMA_VERSION,
            "name": self.name,
            "note": self.note,
            "generators": self.generators,
            "structure": self.generators.iter().zip(&self.structure)
                .map(|(g, f)| json!({"generator": g, "d": form(f)})).collect::<Vec<_>>(),
            "scalars": self.scalars.iter()
                .map(|s| json!({"name": s.name, "differential": form(&s.differential), "sample": sample(&s.sample)}))
                .collect::<Vec<_>>(),
            "constants": self.constants.iter()
                .map(|c| json!({"name": c.name, "lo": c.lo, "hi": c.hi})).collect::<Vec<_>>(),
            "constraints": self.constraints.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
        })
    }

    /// Parses the JSON model spec written by [`Model::to_json`].
    pub fn from_json(v: &Value) -> Result<Model, ModelError> {
        let spec = |m: &str| ModelError::Spec(m.to_string());
        let str_of = |v: &Value, what: &str| -> Result<String, ModelError> {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| spec(&format!("`{what}` must be a string")))
        };
        if v.get("version").and_then(Value::as_u64) != Some(SCHEMA_VERSION) {
            return Err(spec("unsupported or missing version"));
        }
        let name = str_of(v.get("name").ok_or_else(|| spec("missing name"))?, "name")?;
        let generators: Vec<String> = v
            .get("generators")
            .and_then(Value::as_array)
            .ok_or_else(|| spec("missing generators"))?
            .iter()
            .map(|g| str_of(g, "generator"))
            .collect::<Result<_, _>>()?;
        let constants: Vec<Constant> = v
            .get("constants")
            .and_then(Value::as_array)
            .map(|a| a.as_slice())
            .unwrap_or(&[])
            .iter()
            .map(|c| {
                Ok(Constant {
                    name: str_of(&c["name"], "constant name")?,
                    lo: c["lo"].as_f64().ok_or_else(|| spec("constant lo"))?,
                    hi: c["hi"].as_f64().ok_or_else(|| spec("constant hi"))?,
                })
            })
            .collect::<Result<_, ModelError>>()?;
        let named: Vec<&str> = constants.iter().map(|c| c.name.as_str()).collect();
        let ex = |s: &Value| -> Result<Expr, ModelError> {
            let s = s
                .as_str()
                .ok_or_else(|| spec("expression must be a string"))?;
            parse(s, &named).map_err(|e| spec(&e.to_string()))
        };
        let form = |obj: &Value, deg: usize| -> Result<FieldForm, ModelError> {
            let map = obj
                .as_object()
                .ok_or_else(|| spec("form must be an object"))?;
            let mut acc = FormAcc::new(deg);
            for (key, val) in map {
                let mut idx = Vec::new();
                if key != "1" {
                    for part in key.split('^') {
                        idx.push(
                            generators
                                .iter()
                                .position(|g| g == part)
                                .ok_or_else(|| ModelError::UnknownGenerator(part.to_string()))?,
                        );
                    }
                }
                if idx.len() != deg {
                    return Err(spec(&format!("monomial `{key}` has wrong degree")));
                }
                let m = FieldForm::monomial(&idx, ex(val)?);
                acc.push_form(&m);
            }
            Ok(acc.finish())
        };
        let mut b = ModelBuilder {
            name,
            generators: generators.clone(),
            structure: vec![None; generators.len()],
            scalars: Vec::new(),
            constants: constants.clone(),
            constraints: Vec::new(),
            note: v
                .get("note")
                .and_then(Value::as_str)
                .unwrap_or("")
                .to_string(),
        };
        for entry in v
            .get("structure")
            .and_then(Value::as_array)
            .ok_or_else(|| spec("missing structure"))?
        {
            let g = str_of(&entry["generator"], "generator")?;
            let i = generators
                .iter()
                .position(|x| *x == g)
                .ok_or_else(|| ModelError::UnknownGenerator(g.clone()))?;
            b.structure[i] = Some(form(&entry["d"], 2)?);
        }
        for s in v
            .get("scalars")
            .and_then(Value::as_array)
            .map(|a| a.as_slice())
            .unwrap_or(&[])
        {
            let smp = &s["sample"];
            let sample = match smp["kind"].as_str() {
                Some("uniform") => Sample::Uniform {
                    lo: ex(&smp["lo"])?,
                    hi: ex(&smp["hi"])?,
                },
                Some("formula") => Sample::Formula(ex(&smp["expr"])?),
                Some("implicit") => Sample::Implicit {
                    equation: ex(&smp["equation"])?,
                    lo: ex(&smp["lo"])?,
                    hi: ex(&smp["hi"])?,
                },
                _ => return Err(spec("unknown sample kind")),
            };
            b.scalars.push(Scalar {
                name: str_of(&s["name"], "scalar name")?,
                differential: form(&s["differential"], 1)?,
                sample,
            });
        }
        for c in v
            .get("constraints")
            .and_then(Value::as_array)
            .map(|a| a.as_slice())
            .unwrap_or(&[])
        {
            b.constraints.push(ex(c)?);
        }
        b.build()
    }
}

/// Bisection to full precision followed by Newton polishing.
fn solve_bracketed(eq: &Expr, var: &str, a: &Assignment, lo: f64, hi: f64) -> Result<f64, String> {
    let g = |x: f64| -> Result<f64, String> {
        let mut b = a.clone();
        b.set(var, x);
        Ok(eq.eval(&b).map_err(|e| e.to_string())?.re)
    };
    let width = hi - lo;
    let (mut x0, mut x1) = (lo + 1e-12 * width, hi - 1e-12 * width);
    let (mut g0, g1) = (g(x0)?, g(x1)?);
    if g0 == 0.0 {
        return Ok(x0);
    }
    if g1 == 0.0 {
        return Ok(x1);
    }
    if g0.signum() == g1.signum() {
        return Err(format!("no sign change for `{var}` on [{lo}, {hi}]"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (x0 + x1);
        if mid <= x0 || mid >= x1 {
            break;
        }
        let gm = g(mid)?;
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm.signum() == g0.signum() {
            x0 = mid;
            g0 = gm;
        } else {
            x1 = mid;
        }
    }
    let dg = eq.diff(var);
    let mut x = 0.5 * (x0 + x1);
    let mut best = (g(x)?.abs(), x);
    for _ in 0..4 {
        let mut b = a.clone();
        b.set(var, x);
        let d = dg.eval(&b).map_err(|e| e.to_string())?.re;
        if d == 0.0 {
            break;
        }
        let nx = x - g(x)? / d;
        if !(nx > lo && nx < hi) {
            break;
        }
        x = nx;
        let r = g(x)?.abs();
        if r < best.0 {
            best = (r, x);
        }
    }
    Ok(best.1)
}

/// Max over forms and points of the sup-norm of the evaluated coefficients.
pub fn sup_over(forms: &[(String, FieldForm)], pts: &[Assignment]) -> Result<f64, ModelError> {
    let per_point: Vec<Result<f64, ModelError>> = pts
        .par_iter()
        .map(|p| {
            let mut ev = Evaluator::new(p);
            let mut s: f64 = 0.0;
            for (name, f) in forms {
                let v = f.eval_sup(&mut ev).map_err(|source| ModelError::Eval {
                    context: name.clone(),
                    source,
                })?;
                s = s.max(v);
            }
            Ok(s)
        })
        .collect();
    let mut s: f64 = 0.0;
    for r in per_point {
        s = s.max(r?);
    }
    Ok(s)
}

/// A change of coframe: new generators in the old basis and the old generators in the new basis.
#[derive(Clone, Debug)]
pub struct FrameChange {
    pub names: Vec<String>,
    pub forms: Vec<FieldForm>,
    pub inverse: Vec<FieldForm>,
}

struct Substituter<'a> {
    inverse: &'a [FieldForm],
    cache: HashMap<Mask, FieldForm>,
}

impl<'a> Substituter<'a> {
    fn monomial(&mut self, mask: Mask) -> FieldForm {
        if let Some(f) = self.cache.get(&mask) {
            return f.clone();
        }
        let top = 63 - mask.leading_zeros() as usize;
        let rest = mask & !(1u64 << top);
        let f = if rest == 0 {
            self.inverse[top].clone()
        } else {
            self.monomial(rest).wedge(&self.inverse[top])
        };
        self.cache.insert(mask, f.clone());
        f
    }

    fn apply(&mut self, a: &FieldForm) -> FieldForm {
        if a.deg == 0 {
            return a.clone();
        }
        let mut acc = FormAcc::new(a.deg);
        for (m, c) in &a.terms {
            let img = self.monomial(*m);
            for (m2, c2) in &img.terms {
                acc.push(*m2, c * c2);
            }
        }
        acc.finish()
    }
}

/// Rewrites `a` (old basis) in the new basis of `fc`.
pub fn rewrite_form(fc: &FrameChange, a: &FieldForm) -> FieldForm {
    Substituter {
        inverse: &fc.inverse,
        cache: HashMap::new(),
    }
    .apply(a)
}

/// Re-expresses the model in a new coframe and checks the supplied inverse numerically.
pub fn change_frame(
    m: &Model,
    fc: &FrameChange,
    check_points: &[Assignment],
) -> Result<Model, ModelError> {
    let n = m.dim();
    let bad = |msg: String| ModelError::Validation {
        model: m.name.clone(),
        msg,
    };
    if fc.forms.len() != n || fc.inverse.len() != n || fc.names.len() != n {
        return Err(bad(format!(
            "frame change sizes {}/{}/{} for {n} generators",
            fc.names.len(),
            fc.forms.len(),
            fc.inverse.len()
        )));
    }
    let mut sub = Substituter {
        inverse: &fc.inverse,
        cache: HashMap::new(),
    };
    let mut identity = Vec::new();
    for (j, f) in fc.forms.iter().enumerate() {
        if f.deg != 1 {
            return Err(bad(format!("new generator {j} is not a 1-form")));
        }
        identity.push((
            format!("frame identity {}", fc.names[j]),
            sub.apply(f) - FieldForm::gen(j),
        ));
    }
    let s = sup_over(&identity, check_points)?;
    if s > 1e-10 {
        return Err(bad(format!(
            "frame change inverse is wrong (residual {s:e})"
        )));
    }
    let mut structure = Vec::with_capacity(n);
    for f in &fc.forms {
        structure.push(sub.apply(&m.d(f)?));
    }
    let scalars = m
        .scalars
        .iter()
        .map(|s| Scalar {
            name: s.name.clone(),
            differential: sub.apply(&s.differential),
            sample: s.sample.clone(),
        })
        .collect();
    let out = Model {
        name: m.name.clone(),
        generators: fc.names.clone(),
        structure,
        scalars,
        constants: m.constants.clone(),
        constraints: m.constraints.clone(),
        note: m.note.clone(),
        leibniz: Mutex::new(HashMap::new()),
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abelian() -> Model {
        let names = ["w1", "w2", "w3", "w4", "w5", "w6", "w7"];
        let mut b = ModelBuilder::new("abelian", &names);
        b.closed(&names);
        b.build().unwrap()
    }

    #[test]
    fn abelian_is_valid_and_flat() {
        let m = abelian();
        assert_eq!(m.d_squared_residual(5, 1).unwrap(), 0.0);
    }

    #[test]
    fn missing_structure_equation_is_rejected() {
        let mut b = ModelBuilder::new("bad", &["w1", "w2"]);
        b.closed(&["w1"]);
        match b.build() {
            Err(ModelError::Validation { msg, .. }) => assert!(msg.contains("w2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn leibniz_on_scalar_times_generator() {
        let mut b = ModelBuilder::new("m", &["w1", "w2"]);
        b.closed(&["w1", "w2"]);
        b.scalar("r", FieldForm::gen(1), Sample::uniform(0.0, 1.0));
        let m = b.build().unwrap();
        let a = FieldForm::gen(0).scale(&Expr::var("r"));
        let want = FieldForm::gen(1).w(&FieldForm::gen(0));
        assert_eq!(m.d(&a).unwrap(), want);
    }

    #[test]
    fn undeclared_symbols_are_rejected() {
        let mut b = ModelBuilder::new("m", &["w1"]);
        b.d("w1", FieldForm::zero(2));
        b.scalar(
            "r",
            FieldForm::gen(0) * Expr::var("q"),
            Sample::uniform(0.0, 1.0),
        );
        assert!(b.build().is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let mut b = ModelBuilder::new("m", &["w1"]);
        b.closed(&["w1"]);
        b.constant("c", 1.0, 2.0);
        b.scalar("r", FieldForm::gen(0), Sample::uniform(0.0, 1.0));
        let m = b.build().unwrap();
        assert_eq!(
            m.sample_points(7, 3).unwrap(),
            m.sample_points(7, 3).unwrap()
        );
        assert_ne!(
            m.sample_points(7, 3).unwrap(),
            m.sample_points(7, 4).unwrap()
        );
        assert!(m.sample_points(0, 3).unwrap().is_empty());
    }

    #[test]
    fn implicit_sampling_solves_equation() {
        let mut b = ModelBuilder::new("m", &["w1"]);
        b.closed(&["w1"]);
        b.scalar("r", FieldForm::gen(0), Sample::uniform(0.5, 2.0));
        let x = Expr::var("x");
        let r = Expr::var("r");
        b.scalar(
            "x",
            FieldForm::gen(0) * (1.0 / (3.0 * x.powi(2) + 1.0)),
            Sample::Implicit {
                equation: x.powi(3) + &x - &r,
                lo: Expr::c(0.0),
                hi: Expr::c(2.0),
            },
        );
        let m = b.build().unwrap();
        for p in m.sample_points(20, 9).unwrap() {
            let (x, r) = (p.get("x").unwrap().re, p.get("r").unwrap().re);
            assert!((x * x * x + x - r).abs() < 1e-14);
        }
    }

    #[test]
    fn json_roundtrip() {
        let mut b = ModelBuilder::new("m", &["a", "b", "c"]);
        let (a, bb, c) = (FieldForm::gen(0), FieldForm::gen(1), FieldForm::gen(2));
        b.d("a", bb.w(&c) * Expr::named("k"));
        b.d("b", c.w(&a) * Expr::var("r").exp());
        b.d("c", FieldForm::zero(2));
        b.constant("k", 1.0, 2.0);
        b.scalar("r", c.clone(), Sample::uniform(-1.0, 1.0));
        b.constraint(Expr::zero());
        let m = b.build().unwrap();
        let text = serde_json::to_string(&m.to_json()).unwrap();
        let back = Model::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
