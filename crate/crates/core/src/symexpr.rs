//! Scalar expression DAG with exact partial derivatives and memoized complex evaluation.
//!
//! Constructors perform light canonicalization only: flattening, constant folding,
//! like-term and like-factor collection, and ordering by structural hash. There is no
//! general simplifier; identities are checked by evaluation.

use num_complex::Complex64 as C64;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("domain error at `{node}`: {reason}")]
    Domain { node: String, reason: String },
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Sinh,
    Cosh,
    /// Principal branch W₀.
    LambertW,
    /// Lower branch W₋₁.
    LambertWm1,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::LambertW => "lambertw",
            Func::LambertWm1 => "lambertwm1",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "lambertw" => Func::LambertW,
            "lambertwm1" => Func::LambertWm1,
            _ => return None,
        })
    }
}

#[derive(Debug)]
pub enum Node {
    Const(C64),
    /// A named constant: bound at evaluation time, derivative zero.
    Named(Arc<str>),
    Var(Arc<str>),
    Sum(Vec<Expr>),
    Prod(Vec<Expr>),
    /// base^(p/q) with q > 0 and gcd(p, q) = 1.
    Pow(Expr, i64, i64),
    Apply(Func, Expr),
}

#[derive(Debug)]
struct Inner {
    node: Node,
    hash: u64,
    vars: Vec<Arc<str>>,
}

/// Immutable, cheaply clonable expression handle.
#[derive(Clone)]
pub struct Expr(Arc<Inner>);

fn norm_f(x: f64) -> u64 {
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn merge_vars<'a>(children: impl IntoIterator<Item = &'a Expr>) -> Vec<Arc<str>> {
    let mut set: BTreeSet<Arc<str>> = BTreeSet::new();
    for c in children {
        set.extend(c.0.vars.iter().cloned());
    }
    set.into_iter().collect()
}

impl Expr {
    fn make(node: Node) -> Expr {
        let mut h = DefaultHasher::new();
        let vars = match &node {
            Node::Const(c) => {
                0u8.hash(&mut h);
                norm_f(c.re).hash(&mut h);
                norm_f(c.im).hash(&mut h);
                Vec::new()
            }
            Node::Named(n) => {
                1u8.hash(&mut h);
                n.hash(&mut h);
                Vec::new()
            }
            Node::Var(n) => {
                2u8.hash(&mut h);
                n.hash(&mut h);
                vec![n.clone()]
            }
            Node::Sum(ts) => {
                3u8.hash(&mut h);
                for t in ts {
                    t.0.hash.hash(&mut h);
                }
                merge_vars(ts)
            }
            Node::Prod(fs) => {
                4u8.hash(&mut h);
                for f in fs {
                    f.0.hash.hash(&mut h);
                }
                merge_vars(fs)
            }
            Node::Pow(b, p, q) => {
                5u8.hash(&mut h);
                b.0.hash.hash(&mut h);
                p.hash(&mut h);
                q.hash(&mut h);
                b.0.vars.clone()
            }
            Node::Apply(f, u) => {
                6u8.hash(&mut h);
                f.hash(&mut h);
                u.0.hash.hash(&mut h);
                u.0.vars.clone()
            }
        };
        Expr(Arc::new(Inner {
            node,
            hash: h.finish(),
            vars,
        }))
    }

    pub fn node(&self) -> &Node {
        &self.0.node
    }

    pub fn structural_hash(&self) -> u64 {
        self.0.hash
    }

    /// Sorted free variables (named constants excluded).
    pub fn vars(&self) -> &[Arc<str>] {
        &self.0.vars
    }

    pub fn depends_on(&self, x: &str) -> bool {
        self.0.vars.binary_search_by(|v| (**v).cmp(x)).is_ok()
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    fn addr(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn cc(c: C64) -> Expr {
        Expr::make(Node::Const(c))
    }

    pub fn c(x: f64) -> Expr {
        Expr::cc(C64::new(x, 0.0))
    }

    pub fn zero() -> Expr {
        Expr::c(0.0)
    }

    pub fn one() -> Expr {
        Expr::c(1.0)
    }

    pub fn i() -> Expr {
        Expr::cc(C64::new(0.0, 1.0))
    }

    /// Exact rational constant p/q as a float.
    pub fn rat(p: i64, q: i64) -> Expr {
        Expr::c(p as f64 / q as f64)
    }

    pub fn var(name: &str) -> Expr {
        Expr::make(Node::Var(Arc::from(name)))
    }

    pub fn named(name: &str) -> Expr {
        Expr::make(Node::Named(Arc::from(name)))
    }

    pub fn as_const(&self) -> Option<C64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.as_const(), Some(c) if c == C64::new(0.0, 0.0))
    }

    pub fn is_one(&self) -> bool {
        matches!(self.as_const(), Some(c) if c == C64::new(1.0, 0.0))
    }

    pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
        let mut flat = Vec::new();
        for t in terms {
            match t.node() {
                Node::Sum(ts) => flat.extend(ts.iter().cloned()),
                _ => flat.push(t),
            }
        }
        let mut constant = C64::new(0.0, 0.0);
        let mut groups: Vec<(C64, Expr)> = Vec::new();
        let mut index: HashMap<u64, Vec<usize>> = HashMap::new();
        for t in flat {
            let (coef, rest) = match t.node() {
                Node::Const(c) => {
                    constant += c;
                    continue;
                }
                Node::Prod(fs) => match fs[0].as_const() {
                    Some(c) => (c, Expr::prod_raw_tail(&fs[1..])),
                    None => (C64::new(1.0, 0.0), t.clone()),
                },
                _ => (C64::new(1.0, 0.0), t.clone()),
            };
            let slot = index.entry(rest.0.hash).or_default();
            if let Some(&k) = slot.iter().find(|&&k| groups[k].1 == rest) {
                groups[k].0 += coef;
            } else {
                slot.push(groups.len());
                groups.push((coef, rest));
            }
        }
        let mut out: Vec<Expr> = groups
            .into_iter()
            .filter(|(c, _)| *c != C64::new(0.0, 0.0))
            .map(|(c, rest)| {
                if c == C64::new(1.0, 0.0) {
                    rest
                } else {
                    Expr::prod([Expr::cc(c), rest])
                }
            })
            .collect();
        out.sort_by_key(|e| e.0.hash);
        if constant != C64::new(0.0, 0.0) {
            out.insert(0, Expr::cc(constant));
        }
        match out.len() {
            0 => Expr::zero(),
            1 => out.pop().unwrap(),
            _ => Expr::make(Node::Sum(out)),
        }
    }

    fn prod_raw_tail(fs: &[Expr]) -> Expr {
        if fs.len() == 1 {
            fs[0].clone()
        } else {
            Expr::make(Node::Prod(fs.to_vec()))
        }
    }

    pub fn prod(factors: impl IntoIterator<Item = Expr>) -> Expr {
        let mut constant = C64::new(1.0, 0.0);
        let mut groups: Vec<(Expr, i64, i64)> = Vec::new();
        let mut index: HashMap<u64, Vec<usize>> = HashMap::new();
        let mut stack: Vec<Expr> = factors.into_iter().collect();
        stack.reverse();
        while let Some(f) = stack.pop() {
            match f.node() {
                Node::Const(c) => {
                    constant *= c;
                    continue;
                }
                Node::Prod(fs) => {
                    for g in fs.iter().rev() {
                        stack.push(g.clone());
                    }
                    continue;
                }
                _ => {}
            }
            let (base, p, q) = match f.node() {
                Node::Pow(b, p, q) => (b.clone(), *p, *q),
                _ => (f.clone(), 1, 1),
            };
            let slot = index.entry(base.0.hash).or_default();
            if let Some(&k) = slot.iter().find(|&&k| groups[k].0 == base) {
                let (_, p0, q0) = groups[k];
                let (np, nq) = (p0 * q + p * q0, q0 * q);
                let g = gcd(np, nq).max(1);
                groups[k].1 = np / g;
                groups[k].2 = nq / g;
            } else {
                slot.push(groups.len());
                groups.push((base, p, q));
            }
        }
        if constant == C64::new(0.0, 0.0) {
            return Expr::zero();
        }
        let mut out = Vec::new();
        for (b, p, q) in groups {
            if p == 0 {
                continue;
            }
            let e = Expr::pow_raw(b, p, q);
            match e.node() {
                Node::Const(c) => constant *= c,
                Node::Prod(fs) => {
                    for g in fs {
                        match g.as_const() {
                            Some(c) => constant *= c,
                            None => out.push(g.clone()),
                        }
                    }
                }
                _ => out.push(e),
            }
        }
        if constant == C64::new(0.0, 0.0) {
            return Expr::zero();
        }
        out.sort_by_key(|e| e.0.hash);
        if constant != C64::new(1.0, 0.0) {
            out.insert(0, Expr::cc(constant));
        }
        match out.len() {
            0 => Expr::one(),
            1 => out.pop().unwrap(),
            _ => Expr::make(Node::Prod(out)),
        }
    }

    fn pow_raw(base: Expr, p: i64, q: i64) -> Expr {
        assert!(q != 0, "zero denominator in exponent");
        let g = gcd(p, q).max(1);
        let (mut p, mut q) = (p / g, q / g);
        if q < 0 {
            p = -p;
            q = -q;
        }
        if p == 0 {
            return Expr::one();
        }
        if p == q {
            return base;
        }
        match base.node() {
            Node::Const(c) => {
                if *c == C64::new(1.0, 0.0) {
                    return Expr::one();
                }
                if q == 1 && !(*c == C64::new(0.0, 0.0) && p < 0) {
                    return Expr::cc(c.powi(p as i32));
                }
            }
            Node::Pow(b, p2, q2) if q == 1 => {
                return Expr::pow_raw(b.clone(), p2 * p, *q2);
            }
            Node::Prod(fs) if q == 1 => {
                return Expr::prod(fs.iter().map(|f| Expr::pow_raw(f.clone(), p, 1)));
            }
            _ => {}
        }
        Expr::make(Node::Pow(base, p, q))
    }

    /// self^(p/q), principal branch for non-integer exponents.
    pub fn pow(&self, p: i64, q: i64) -> Expr {
        Expr::pow_raw(self.clone(), p, q)
    }

    pub fn powi(&self, p: i64) -> Expr {
        self.pow(p, 1)
    }

    pub fn recip(&self) -> Expr {
        self.pow(-1, 1)
    }

    pub fn apply(f: Func, u: Expr) -> Expr {
        if let Some(c) = u.as_const() {
            let folded = match f {
                Func::Exp => Some(c.exp()),
                Func::Sin => Some(c.sin()),
                Func::Cos => Some(c.cos()),
                Func::Sinh => Some(c.sinh()),
                Func::Cosh => Some(c.cosh()),
                _ => None,
            };
            if let Some(v) = folded {
                return Expr::cc(v);
            }
        }
        Expr::make(Node::Apply(f, u))
    }

    pub fn exp(&self) -> Expr {
        Expr::apply(Func::Exp, self.clone())
    }
    pub fn log(&self) -> Expr {
        Expr::apply(Func::Log, self.clone())
    }
    pub fn sqrt(&self) -> Expr {
        Expr::apply(Func::Sqrt, self.clone())
    }
    pub fn sin(&self) -> Expr {
        Expr::apply(Func::Sin, self.clone())
    }
    pub fn cos(&self) -> Expr {
        Expr::apply(Func::Cos, self.clone())
    }
    pub fn sinh(&self) -> Expr {
        Expr::apply(Func::Sinh, self.clone())
    }
    pub fn cosh(&self) -> Expr {
        Expr::apply(Func::Cosh, self.clone())
    }
    pub fn lambert_w(&self) -> Expr {
        Expr::apply(Func::LambertW, self.clone())
    }
    pub fn lambert_wm1(&self) -> Expr {
        Expr::apply(Func::LambertWm1, self.clone())
    }

    /// Complex conjugate, treating every symbol as real.
    pub fn conj(&self) -> Expr {
        let mut memo = HashMap::new();
        self.conj_memo(&mut memo)
    }

    fn conj_memo(&self, memo: &mut HashMap<usize, (Expr, Expr)>) -> Expr {
        if let Some((_, r)) = memo.get(&self.addr()) {
            return r.clone();
        }
        let r = match self.node() {
            Node::Const(c) => {
                if c.im == 0.0 {
                    self.clone()
                } else {
                    Expr::cc(c.conj())
                }
            }
            Node::Named(_) | Node::Var(_) => self.clone(),
            Node::Sum(ts) => Expr::sum(ts.iter().map(|t| t.conj_memo(memo))),
            Node::Prod(fs) => Expr::prod(fs.iter().map(|f| f.conj_memo(memo))),
            Node::Pow(b, p, q) => b.conj_memo(memo).pow(*p, *q),
            Node::Apply(f, u) => Expr::apply(*f, u.conj_memo(memo)),
        };
        memo.insert(self.addr(), (self.clone(), r.clone()));
        r
    }

    pub fn re(&self) -> Expr {
        (self + &self.conj()) * Expr::c(0.5)
    }

    pub fn im(&self) -> Expr {
        (self - &self.conj()) * Expr::cc(C64::new(0.0, -0.5))
    }

    /// Exact partial derivative with respect to the variable `x`.
    pub fn diff(&self, x: &str) -> Expr {
        Differ::new(x).diff(self)
    }

    /// Replace variables by expressions.
    pub fn subs(&self, map: &HashMap<&str, Expr>) -> Expr {
        let mut memo = HashMap::new();
        self.subs_memo(map, &mut memo)
    }

    fn subs_memo(
        &self,
        map: &HashMap<&str, Expr>,
        memo: &mut HashMap<usize, (Expr, Expr)>,
    ) -> Expr {
        if !self.0.vars.iter().any(|v| map.contains_key(&**v)) {
            return self.clone();
        }
        if let Some((_, r)) = memo.get(&self.addr()) {
            return r.clone();
        }
        let r = match self.node() {
            Node::Var(v) => map[&**v].clone(),
            Node::Const(_) | Node::Named(_) => self.clone(),
            Node::Sum(ts) => Expr::sum(ts.iter().map(|t| t.subs_memo(map, memo))),
            Node::Prod(fs) => Expr::prod(fs.iter().map(|f| f.subs_memo(map, memo))),
            Node::Pow(b, p, q) => b.subs_memo(map, memo).pow(*p, *q),
            Node::Apply(f, u) => Expr::apply(*f, u.subs_memo(map, memo)),
        };
        memo.insert(self.addr(), (self.clone(), r.clone()));
        r
    }

    /// Number of distinct nodes in the DAG.
    pub fn dag_size(&self) -> usize {
        fn walk(e: &Expr, seen: &mut std::collections::HashSet<usize>) {
            if !seen.insert(e.addr()) {
                return;
            }
            match e.node() {
                Node::Sum(cs) | Node::Prod(cs) => cs.iter().for_each(|c| walk(c, seen)),
                Node::Pow(b, _, _) | Node::Apply(_, b) => walk(b, seen),
                _ => {}
            }
        }
        let mut seen = std::collections::HashSet::new();
        walk(self, &mut seen);
        seen.len()
    }

    /// One-shot evaluation; prefer [`Evaluator`] when evaluating many expressions at one point.
    pub fn eval(&self, a: &Assignment) -> Result<C64, ExprError> {
        Evaluator::new(a).eval(self)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Expr) -> bool {
        if self.ptr_eq(other) {
            return true;
        }
        if self.0.hash != other.0.hash {
            return false;
        }
        match (self.node(), other.node()) {
            (Node::Const(a), Node::Const(b)) => {
                norm_f(a.re) == norm_f(b.re) && norm_f(a.im) == norm_f(b.im)
            }
            (Node::Named(a), Node::Named(b)) | (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Sum(a), Node::Sum(b)) | (Node::Prod(a), Node::Prod(b)) => a == b,
            (Node::Pow(a, p, q), Node::Pow(b, r, s)) => p == r && q == s && a == b,
            (Node::Apply(f, a), Node::Apply(g, b)) => f == g && a == b,
            _ => false,
        }
    }
}

impl Eq for Expr {}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash.hash(state)
    }
}

impl From<f64> for Expr {
    fn from(x: f64) -> Expr {
        Expr::c(x)
    }
}

impl From<C64> for Expr {
    fn from(c: C64) -> Expr {
        Expr::cc(c)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $body:expr) => {
        impl $tr<Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, &rhs)
            }
        }
        impl<'a> $tr<&'a Expr> for Expr {
            type Output = Expr;
            fn $m(self, rhs: &'a Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, rhs)
            }
        }
        impl<'a> $tr<Expr> for &'a Expr {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, &rhs)
            }
        }
        impl<'a, 'b> $tr<&'b Expr> for &'a Expr {
            type Output = Expr;
            fn $m(self, rhs: &'b Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl $tr<f64> for Expr {
            type Output = Expr;
            fn $m(self, rhs: f64) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, &Expr::c(rhs))
            }
        }
        impl<'a> $tr<f64> for &'a Expr {
            type Output = Expr;
            fn $m(self, rhs: f64) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, &Expr::c(rhs))
            }
        }
        impl $tr<Expr> for f64 {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&Expr::c(self), &rhs)
            }
        }
        impl<'a> $tr<&'a Expr> for f64 {
            type Output = Expr;
            fn $m(self, rhs: &'a Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&Expr::c(self), rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::sum([a.clone(), b.clone()]));
binop!(Sub, sub, |a, b| Expr::sum([
    a.clone(),
    Expr::prod([Expr::c(-1.0), b.clone()])
]));
binop!(Mul, mul, |a, b| Expr::prod([a.clone(), b.clone()]));
binop!(Div, div, |a, b| Expr::prod([a.clone(), b.recip()]));

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::prod([Expr::c(-1.0), self])
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::prod([Expr::c(-1.0), self.clone()])
    }
}

/// Memoized differentiation with respect to one variable.
pub struct Differ {
    x: Arc<str>,
    cache: HashMap<usize, (Expr, Expr)>,
}

impl Differ {
    pub fn new(x: &str) -> Differ {
        Differ {
            x: Arc::from(x),
            cache: HashMap::new(),
        }
    }

    pub fn diff(&mut self, e: &Expr) -> Expr {
        if !e.depends_on(&self.x) {
            return Expr::zero();
        }
        if let Some((_, d)) = self.cache.get(&e.addr()) {
            return d.clone();
        }
        let d = match e.node() {
            Node::Const(_) | Node::Named(_) => Expr::zero(),
            Node::Var(v) => {
                if **v == *self.x {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Sum(ts) => {
                let parts: Vec<Expr> = ts.iter().map(|t| self.diff(t)).collect();
                Expr::sum(parts)
            }
            Node::Prod(fs) => {
                let mut terms = Vec::new();
                for i in 0..fs.len() {
                    let di = self.diff(&fs[i]);
                    if di.is_zero() {
                        continue;
                    }
                    let mut fac: Vec<Expr> = Vec::with_capacity(fs.len());
                    for (j, f) in fs.iter().enumerate() {
                        fac.push(if i == j { di.clone() } else { f.clone() });
                    }
                    terms.push(Expr::prod(fac));
                }
                Expr::sum(terms)
            }
            Node::Pow(b, p, q) => {
                let db = self.diff(b);
                Expr::prod([Expr::rat(*p, *q), b.pow(p - q, *q), db])
            }
            Node::Apply(f, u) => {
                let du = self.diff(u);
                let outer = match f {
                    Func::Exp => e.clone(),
                    Func::Log => u.recip(),
                    Func::Sqrt => Expr::c(0.5) * e.recip(),
                    Func::Sin => u.cos(),
                    Func::Cos => -u.sin(),
                    Func::Sinh => u.cosh(),
                    Func::Cosh => u.sinh(),
                    Func::LambertW | Func::LambertWm1 => e * (u * (Expr::one() + e)).recip(),
                };
                outer * du
            }
        };
        self.cache.insert(e.addr(), (e.clone(), d.clone()));
        d
    }
}

/// Binding of variable and named-constant names to complex values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    values: HashMap<Arc<str>, C64>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: &str, v: impl Into<C64>) -> &mut Self {
        self.values.insert(Arc::from(name), v.into());
        self
    }

    pub fn with(mut self, name: &str, v: impl Into<C64>) -> Self {
        self.set(name, v);
        self
    }

    pub fn get(&self, name: &str) -> Option<C64> {
        self.values.get(name).copied()
    }

    /// Entries sorted by name.
    pub fn sorted(&self) -> Vec<(String, C64)> {
        let mut v: Vec<(String, C64)> = self
            .values
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }
}

/// Evaluates many expressions at one assignment, sharing a memo table across calls.
pub struct Evaluator<'a> {
    a: &'a Assignment,
    memo: HashMap<usize, (Expr, C64)>,
}

fn domain(e: &Expr, reason: impl Into<String>) -> ExprError {
    let mut s = e.to_string();
    if s.len() > 96 {
        let mut cut = 93;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
        s.push_str("...");
    }
    ExprError::Domain {
        node: s,
        reason: reason.into(),
    }
}

impl<'a> Evaluator<'a> {
    pub fn new(a: &'a Assignment) -> Self {
        Evaluator {
            a,
            memo: HashMap::new(),
        }
    }

    pub fn assignment(&self) -> &Assignment {
        self.a
    }

    pub fn eval(&mut self, e: &Expr) -> Result<C64, ExprError> {
        if let Node::Const(c) = e.node() {
            return Ok(*c);
        }
        if let Some((_, v)) = self.memo.get(&e.addr()) {
            return Ok(*v);
        }
        let v = match e.node() {
            Node::Const(c) => *c,
            Node::Named(n) | Node::Var(n) => self
                .a
                .get(n)
                .ok_or_else(|| ExprError::Unbound(n.to_string()))?,
            Node::Sum(ts) => {
                let mut s = C64::new(0.0, 0.0);
                for t in ts {
                    s += self.eval(t)?;
                }
                s
            }
            Node::Prod(fs) => {
                let mut s = C64::new(1.0, 0.0);
                for f in fs {
                    s *= self.eval(f)?;
                }
                s
            }
            Node::Pow(b, p, q) => {
                let z = self.eval(b)?;
                if z == C64::new(0.0, 0.0) {
                    if *p < 0 {
                        return Err(domain(e, "zero raised to a negative power"));
                    }
                    C64::new(0.0, 0.0)
                } else if *q == 1 {
                    if z.im == 0.0 {
                        C64::new(z.re.powi(*p as i32), 0.0)
                    } else {
                        z.powi(*p as i32)
                    }
                } else if z.im == 0.0 && z.re > 0.0 {
                    C64::new(z.re.powf(*p as f64 / *q as f64), 0.0)
                } else {
                    (z.ln() * (*p as f64 / *q as f64)).exp()
                }
            }
            Node::Apply(f, u) => {
                let z = self.eval(u)?;
                match f {
                    Func::Exp => {
                        if z.im == 0.0 {
                            C64::new(z.re.exp(), 0.0)
                        } else {
                            z.exp()
                        }
                    }
                    Func::Log => {
                        if z == C64::new(0.0, 0.0) {
                            return Err(domain(e, "log of zero"));
                        }
                        if z.im == 0.0 && z.re > 0.0 {
                            C64::new(z.re.ln(), 0.0)
                        } else {
                            z.ln()
                        }
                    }
                    Func::Sqrt => {
                        if z.im == 0.0 && z.re >= 0.0 {
                            C64::new(z.re.sqrt(), 0.0)
                        } else {
                            z.sqrt()
                        }
                    }
                    Func::Sin => z.sin(),
                    Func::Cos => z.cos(),
                    Func::Sinh => z.sinh(),
                    Func::Cosh => z.cosh(),
                    Func::LambertW | Func::LambertWm1 => {
                        if z.im.abs() > 1e-14 * (1.0 + z.re.abs()) {
                            return Err(domain(e, "Lambert W of a non-real argument"));
                        }
                        let branch = if *f == Func::LambertW {
                            Branch::Principal
                        } else {
                            Branch::Lower
                        };
                        let w = lambert_w(z.re, branch).map_err(|m| domain(e, m))?;
                        C64::new(w, 0.0)
                    }
                }
            }
        };
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(domain(e, "non-finite value"));
        }
        self.memo.insert(e.addr(), (e.clone(), v));
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// W₀, defined on [−1/e, ∞).
    Principal,
    /// W₋₁, defined on [−1/e, 0).
    Lower,
}

const INV_E: f64 = 0.367_879_441_171_442_33;

/// Real Lambert W by Halley iteration.
pub fn lambert_w(x: f64, branch: Branch) -> Result<f64, String> {
    if !x.is_finite() {
        return Err(format!("argument {x} is not finite"));
    }
    let lo = -INV_E;
    if x < lo - 4.0 * f64::EPSILON {
        return Err(format!("argument {x} below -1/e"));
    }
    if branch == Branch::Lower && x >= 0.0 {
        return Err(format!("argument {x} outside [-1/e, 0) for branch -1"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    // Distance to the branch point, with a correction term for the rounding of 1/e.
    let t = 2.0 * (std::f64::consts::E * x + 1.0);
    let near = t.max(0.0).sqrt();
    let p = match branch {
        Branch::Principal => near,
        Branch::Lower => -near,
    };
    if near < 1e-3 {
        let p2 = p * p;
        return Ok(
            -1.0 + p - p2 / 3.0 + 11.0 / 72.0 * p2 * p - 43.0 / 540.0 * p2 * p2
                + 769.0 / 17280.0 * p2 * p2 * p
                - 221.0 / 8505.0 * p2 * p2 * p2,
        );
    }
    let mut w = match branch {
        Branch::Principal => {
            if x < 1.0 {
                if near < 0.5 {
                    -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
                } else {
                    x.ln_1p() * 0.8
                }
            } else {
                let l = x.ln();
                l - l.ln().max(0.0)
            }
        }
        Branch::Lower => {
            if near < 0.5 {
                -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
            } else {
                let l = (-x).ln();
                l - (-l).ln()
            }
        }
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 1e-15 * (1.0 + w.abs()) {
            break;
        }
    }
    if !w.is_finite() {
        return Err(format!("iteration diverged at {x}"));
    }
    Ok(w)
}

fn fmt_const(c: C64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if c.im == 0.0 {
        if c.re < 0.0 || (c.re == 0.0 && c.re.is_sign_negative()) {
            write!(f, "(-{:?})", -c.re)
        } else {
            write!(f, "{:?}", c.re)
        }
    } else {
        write!(f, "cplx({:?}, {:?})", c.re, c.im)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => fmt_const(*c, f),
            Node::Named(n) | Node::Var(n) => write!(f, "{n}"),
            Node::Sum(ts) => {
                write!(f, "(")?;
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
            Node::Prod(fs) => {
                write!(f, "(")?;
                for (i, t) in fs.iter().enumerate() {
                    if i > 0 {
                        write!(f, " * ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
            Node::Pow(b, p, q) => {
                let needs_paren = matches!(b.node(), Node::Const(c) if c.im == 0.0 && c.re >= 0.0);
                if needs_paren {
                    write!(f, "({b})")?;
                } else {
                    write!(f, "{b}")?;
                }
                if *q == 1 && *p >= 0 {
                    write!(f, "^{p}")
                } else if *q == 1 {
                    write!(f, "^({p})")
                } else {
                    write!(f, "^({p}/{q})")
                }
            }
            Node::Apply(func, u) => {
                let s = u.to_string();
                if s.starts_with('(')
                    && s.ends_with(')')
                    && matches!(u.node(), Node::Sum(_) | Node::Prod(_))
                {
                    write!(f, "{}{s}", func.name())
                } else {
                    write!(f, "{}({s})", func.name())
                }
            }
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Parses the printed form. Identifiers listed in `named` become named constants,
/// all others become variables.
pub fn parse(src: &str, named: &[&str]) -> Result<Expr, ExprError> {
    let mut p = Parser {
        s: src.as_bytes(),
        pos: 0,
        named,
    };
    let e = p.expr()?;
    p.ws();
    if p.pos != p.s.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    named: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> ExprError {
        ExprError::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat(b'+') {
                terms.push(self.term()?);
            } else if self.eat(b'-') {
                terms.push(-self.term()?);
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Expr::sum(terms)
        })
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut factors = vec![self.unary()?];
        loop {
            if self.eat(b'*') {
                factors.push(self.unary()?);
            } else if self.eat(b'/') {
                factors.push(self.unary()?.recip());
            } else {
                break;
            }
        }
        Ok(if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            Expr::prod(factors)
        })
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            return Ok(-self.unary()?);
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let (p, q) = self.exponent()?;
            return Ok(base.pow(p, q));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<(i64, i64), ExprError> {
        let paren = self.eat(b'(');
        let neg = self.eat(b'-');
        let num = self.number()?;
        let mut den = 1.0;
        if paren && self.eat(b'/') {
            den = self.number()?;
        }
        if paren {
            self.expect(b')')?;
        }
        let v = if neg { -num / den } else { num / den };
        rational(v).ok_or_else(|| self.err("exponent must be rational"))
    }

    fn number(&mut self) -> Result<f64, ExprError> {
        self.ws();
        let start = self.pos;
        let s = self.s;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap();
        text.parse::<f64>().map_err(|_| ExprError::Parse {
            pos: start,
            msg: format!("bad number `{text}`"),
        })
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.s.len()
            && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_')
        {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.s[start..self.pos]).into_owned()
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::c(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let name = self.ident();
                if self.peek() == Some(b'(') {
                    self.pos += 1;
                    if name == "cplx" {
                        let re = self.signed_number()?;
                        self.expect(b',')?;
                        let im = self.signed_number()?;
                        self.expect(b')')?;
                        return Ok(Expr::cc(C64::new(re, im)));
                    }
                    let f = Func::from_name(&name)
                        .ok_or_else(|| self.err(&format!("unknown function `{name}`")))?;
                    let arg = self.expr()?;
                    self.expect(b')')?;
                    return Ok(Expr::apply(f, arg));
                }
                if self.named.contains(&name.as_str()) {
                    Ok(Expr::named(&name))
                } else {
                    Ok(Expr::var(&name))
                }
            }
            _ => Err(self.err("unexpected token")),
        }
    }

    fn signed_number(&mut self) -> Result<f64, ExprError> {
        let neg = self.eat(b'-');
        let v = self.number()?;
        Ok(if neg { -v } else { v })
    }
}

/// Best rational approximation with denominator at most 10⁴, accepted only if exact to 1e−13.
pub fn rational(v: f64) -> Option<(i64, i64)> {
    if !v.is_finite() {
        return None;
    }
    let (mut h0, mut h1, mut k0, mut k1) = (0i64, 1i64, 1i64, 0i64);
    let mut x = v;
    for _ in 0..40 {
        let a = x.floor();
        if a.abs() > 1e12 {
            return None;
        }
        let ai = a as i64;
        let h2 = ai * h1 + h0;
        let k2 = ai * k1 + k0;
        if k2 > 10_000 {
            break;
        }
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        if ((h1 as f64) / (k1 as f64) - v).abs() <= 1e-13 * (1.0 + v.abs()) {
            return Some((h1, k1));
        }
        let frac = x - a;
        if frac.abs() < 1e-15 {
            break;
        }
        x = 1.0 / frac;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::var("x")
    }

    #[test]
    fn polynomial_rule() {
        let d = x().powi(2).diff("x");
        let v = d.eval(&Assignment::new().with("x", 3.0)).unwrap();
        assert!((v.re - 6.0).abs() < 1e-15);
    }

    #[test]
    fn named_constant_has_zero_derivative() {
        assert!(Expr::named("c").diff("x").is_zero());
        assert!((Expr::named("c") * x()).diff("c").is_zero());
    }

    #[test]
    fn lambert_derivative_at_e() {
        let e = std::f64::consts::E;
        let d = x()
            .lambert_w()
            .diff("x")
            .eval(&Assignment::new().with("x", e))
            .unwrap();
        let h = 1e-5;
        let fd = (lambert_w(e + h, Branch::Principal).unwrap()
            - lambert_w(e - h, Branch::Principal).unwrap())
            / (2.0 * h);
        assert!((d.re - fd).abs() < 1e-9);
        assert!((d.re - 1.0 / (2.0 * e)).abs() < 1e-14);
    }

    #[test]
    fn exp_zero_folds() {
        assert!(Expr::zero().exp().is_one());
    }

    #[test]
    fn soliton_metric_coefficients() {
        let f = Expr::var("f");
        let (k1, k2) = (Expr::named("k1"), Expr::named("k2"));
        let g2 = (&f - &k1) / (&k1 * &k2 * &f);
        let a = Assignment::new()
            .with("f", 2.0)
            .with("k1", 1.0)
            .with("k2", 1.0);
        assert!((g2.eval(&a).unwrap().re - 0.5).abs() < 1e-15);
        let g = &k2 / (&f * (&k1 - &f)).sqrt();
        let a = Assignment::new()
            .with("f", 1.0)
            .with("k1", 2.0)
            .with("k2", 1.0);
        assert!((g.eval(&a).unwrap().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lambert_fixed_points() {
        assert_eq!(lambert_w(0.0, Branch::Principal).unwrap(), 0.0);
        assert!((lambert_w(std::f64::consts::E, Branch::Principal).unwrap() - 1.0).abs() < 1e-15);
        assert!((lambert_w(-INV_E, Branch::Principal).unwrap() + 1.0).abs() < 1e-7);
        assert!((lambert_w(-INV_E, Branch::Lower).unwrap() + 1.0).abs() < 1e-7);
        assert!(lambert_w(-0.5, Branch::Principal).is_err());
        assert!(lambert_w(0.1, Branch::Lower).is_err());
    }

    #[test]
    fn domain_errors_name_the_node() {
        let e = Expr::var("x").log();
        match e.eval(&Assignment::new().with("x", 0.0)) {
            Err(ExprError::Domain { node, .. }) => assert!(node.contains("log")),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            x().eval(&Assignment::new()),
            Err(ExprError::Unbound("x".into()))
        );
        let w = x().lambert_w();
        assert!(w.eval(&Assignment::new().with("x", -1.0)).is_err());
        assert!(x().recip().eval(&Assignment::new().with("x", 0.0)).is_err());
    }

    #[test]
    fn like_terms_cancel() {
        let y = Expr::var("y");
        let e = &x() * &y - &y * &x();
        assert!(e.is_zero());
        let s = x().pow(1, 2) * x().pow(1, 2);
        assert_eq!(s, x());
        assert_eq!(x() + x(), 2.0 * x());
    }

    #[test]
    fn print_parse_roundtrip() {
        let e = (x().powi(3) * Expr::named("k") - x().sin() / (Expr::c(2.0) + x()).sqrt()).exp()
            + Expr::cc(C64::new(0.5, -1.25)) * x().pow(-2, 3).lambert_w();
        let s = e.to_string();
        let back = parse(&s, &["k"]).unwrap();
        assert_eq!(back, e, "{s}");
    }

    #[test]
    fn parse_arithmetic() {
        let e = parse("2*x^2 - 3/x + sinh(x)^(1/2)", &[]).unwrap();
        let v = e.eval(&Assignment::new().with("x", 1.5)).unwrap().re;
        let want = 2.0 * 2.25 - 2.0 + 1.5f64.sinh().sqrt();
        assert!((v - want).abs() < 1e-14);
    }

    #[test]
    fn rational_recovery() {
        assert_eq!(rational(0.5), Some((1, 2)));
        assert_eq!(rational(-2.0 / 3.0), Some((-2, 3)));
        assert_eq!(rational(std::f64::consts::PI), None);
    }
}
