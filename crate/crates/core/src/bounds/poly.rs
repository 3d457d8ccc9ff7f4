//! Sparse polynomials over named parameters and the `SymbolicBound` built
//! on them.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{json, Value};

use crate::error::BoundError;

/// Highest total degree kept in a bound; anything above becomes unbounded.
pub const MAX_DEGREE: usize = 2;

/// Sorted multiset of parameter names; empty for the constant term.
pub type Monomial = Vec<String>;

/// Polynomial with rational coefficients. Coefficients may be negative
/// while a bound is being derived; [`Poly::clamp`] removes them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Poly {
    terms: BTreeMap<Monomial, BigRational>,
}

pub fn rat(n: i128) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn render_rational(q: &BigRational) -> String {
    if q.is_integer() {
        q.to_integer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

pub fn render_monomial(m: &Monomial) -> String {
    if m.is_empty() {
        return "1".into();
    }
    let mut parts: Vec<String> = Vec::new();
    let mut i = 0;
    while i < m.len() {
        let j = m[i..].iter().take_while(|p| **p == m[i]).count();
        parts.push(if j == 1 { m[i].clone() } else { format!("{}^{}", m[i], j) });
        i += j;
    }
    parts.join("*")
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut p = Poly::zero();
        p.add_term(Vec::new(), c);
        p
    }

    pub fn int(c: i128) -> Self {
        Poly::constant(rat(c))
    }

    pub fn param(name: &str) -> Self {
        let mut p = Poly::zero();
        p.add_term(vec![name.to_string()], BigRational::one());
        p
    }

    pub fn add_term(&mut self, mut mono: Monomial, coeff: BigRational) {
        mono.sort();
        let e = self.terms.entry(mono.clone()).or_insert_with(BigRational::zero);
        *e += coeff;
        if e.is_zero() {
            self.terms.remove(&mono);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    /// Terms by ascending degree, then name.
    pub fn sorted_terms(&self) -> Vec<(&Monomial, &BigRational)> {
        let mut t: Vec<_> = self.terms.iter().collect();
        t.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then(a.0.cmp(b.0)));
        t
    }

    pub fn coeff(&self, mono: &[&str]) -> BigRational {
        let mut m: Monomial = mono.iter().map(|s| s.to_string()).collect();
        m.sort();
        self.terms.get(&m).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn constant_term(&self) -> BigRational {
        self.coeff(&[])
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|m| m.is_empty())
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|m| m.len()).max().unwrap_or(0)
    }

    pub fn params(&self) -> impl Iterator<Item = &String> {
        self.terms.keys().flatten()
    }

    pub fn is_nonneg(&self) -> bool {
        self.terms.values().all(|c| !c.is_negative())
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(&-BigRational::one()))
    }

    pub fn scale(&self, k: &BigRational) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c * k);
        }
        out
    }

    /// Product, or `None` when the degree would exceed [`MAX_DEGREE`].
    pub fn mul(&self, other: &Poly) -> Option<Poly> {
        let mut out = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                if m1.len() + m2.len() > MAX_DEGREE {
                    return None;
                }
                let mono = m1.iter().chain(m2).cloned().collect();
                out.add_term(mono, c1 * c2);
            }
        }
        Some(out)
    }

    /// Coefficient-wise maximum; an upper bound of both when both are
    /// non-negative and parameters are non-negative.
    pub fn max(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            match out.terms.get_mut(m) {
                Some(e) => {
                    if c > e {
                        *e = c.clone();
                    }
                }
                None => {
                    if c.is_positive() {
                        out.terms.insert(m.clone(), c.clone());
                    }
                }
            }
        }
        out.terms.retain(|_, c| !c.is_zero());
        out
    }

    /// Drops negative coefficients, which can only raise the value for
    /// non-negative parameters.
    pub fn clamp(&self) -> Poly {
        Poly { terms: self.terms.iter().filter(|(_, c)| c.is_positive()).map(|(m, c)| (m.clone(), c.clone())).collect() }
    }

    /// Rounds every coefficient up.
    pub fn ceil_coeffs(&self) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c.ceil());
        }
        out
    }

    /// Replaces each parameter by a polynomial.
    pub fn substitute(&self, f: &dyn Fn(&str) -> Option<Poly>) -> Option<Poly> {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut term = Poly::constant(c.clone());
            for p in m {
                term = term.mul(&f(p)?)?;
            }
            out = out.add(&term);
        }
        Some(out)
    }

    pub fn eval(&self, bindings: &BTreeMap<String, BigUint>) -> Result<BigRational, BoundError> {
        let mut total = BigRational::zero();
        for (m, c) in &self.terms {
            let mut v = c.clone();
            for p in m {
                let b = bindings.get(p).ok_or_else(|| BoundError::MissingBinding(p.clone()))?;
                v *= BigRational::from_integer(BigInt::from(b.clone()));
            }
            total += v;
        }
        Ok(total)
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.sorted_terms()
                .into_iter()
                .map(|(m, c)| json!([render_monomial(m), render_rational(c)]))
                .collect(),
        )
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.sorted_terms().into_iter().enumerate() {
            let neg = c.is_negative();
            if i > 0 {
                write!(f, "{}", if neg { "-" } else { "+" })?;
            } else if neg {
                write!(f, "-")?;
            }
            let c = c.abs();
            if m.is_empty() {
                write!(f, "{}", render_rational(&c))?;
            } else if c.is_one() {
                write!(f, "{}", render_monomial(m))?;
            } else {
                write!(f, "{}*{}", render_rational(&c), render_monomial(m))?;
            }
        }
        Ok(())
    }
}

/// `⌊inner² / divisor⌋`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MemTerm {
    pub inner: PolyKey,
    pub divisor: u64,
}

/// Ordered wrapper so mem terms can be sorted and deduplicated.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PolyKey(pub Poly);

impl PartialOrd for PolyKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PolyKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.terms.iter().cmp(other.0.terms.iter())
    }
}

impl MemTerm {
    pub fn new(inner: Poly, divisor: u64) -> Self {
        MemTerm { inner: PolyKey(inner), divisor }
    }

    pub fn render(&self) -> String {
        format!("floor(({})^2/{})", self.inner.0, self.divisor)
    }
}

/// Upper bound: polynomial plus floor-quadratic memory terms, or unbounded.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SymbolicBound {
    pub poly: Poly,
    pub mem_terms: Vec<MemTerm>,
    pub unbounded: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Evaluated {
    Finite(BigUint),
    Infinite,
}

impl Evaluated {
    pub fn finite(&self) -> Option<&BigUint> {
        match self {
            Evaluated::Finite(v) => Some(v),
            Evaluated::Infinite => None,
        }
    }
}

impl fmt::Display for Evaluated {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Evaluated::Finite(v) => write!(f, "{v}"),
            Evaluated::Infinite => write!(f, "inf"),
        }
    }
}

impl SymbolicBound {
    pub fn zero() -> Self {
        SymbolicBound::default()
    }

    pub fn constant(c: u64) -> Self {
        SymbolicBound::from_poly(Poly::int(c as i128))
    }

    pub fn unbounded() -> Self {
        SymbolicBound { unbounded: true, ..SymbolicBound::default() }
    }

    pub fn from_poly(poly: Poly) -> Self {
        debug_assert!(poly.is_nonneg());
        if poly.degree() > MAX_DEGREE {
            return SymbolicBound::unbounded();
        }
        SymbolicBound { poly, mem_terms: Vec::new(), unbounded: false }
    }

    /// `3·A + ⌊A²/divisor⌋` style bound: `linear·A + ⌊A²/divisor⌋`.
    pub fn memory(a: Poly, linear: u64, divisor: u64) -> Self {
        if a.is_zero() {
            return SymbolicBound::zero();
        }
        let mut b = SymbolicBound::from_poly(a.scale(&rat(linear as i128)));
        if a.is_constant() {
            let v = a.constant_term();
            b.poly = b.poly.add(&Poly::constant((&v * &v / rat(divisor as i128)).floor()));
        } else {
            b.mem_terms.push(MemTerm::new(a, divisor));
        }
        b
    }

    pub fn is_zero(&self) -> bool {
        !self.unbounded && self.poly.is_zero() && self.mem_terms.is_empty()
    }

    /// The constant polynomial 1.
    pub fn is_one(&self) -> bool {
        !self.unbounded && self.mem_terms.is_empty() && self.poly == Poly::int(1)
    }

    pub fn is_constant(&self) -> bool {
        !self.unbounded && self.mem_terms.is_empty() && self.poly.is_constant()
    }

    pub fn add(&self, other: &SymbolicBound) -> SymbolicBound {
        if self.unbounded || other.unbounded {
            return SymbolicBound::unbounded();
        }
        let mut mem_terms: Vec<MemTerm> = self.mem_terms.iter().chain(&other.mem_terms).cloned().collect();
        mem_terms.sort();
        SymbolicBound { poly: self.poly.add(&other.poly), mem_terms, unbounded: false }
    }

    pub fn max(&self, other: &SymbolicBound) -> SymbolicBound {
        if self.unbounded || other.unbounded {
            return SymbolicBound::unbounded();
        }
        let mut mem_terms: Vec<MemTerm> = self.mem_terms.iter().chain(&other.mem_terms).cloned().collect();
        mem_terms.sort();
        mem_terms.dedup();
        SymbolicBound { poly: self.poly.max(&other.poly), mem_terms, unbounded: false }
    }

    /// Product; zero times anything (even unbounded) is zero.
    pub fn mul(&self, other: &SymbolicBound) -> SymbolicBound {
        if self.is_zero() || other.is_zero() {
            return SymbolicBound::zero();
        }
        if self.unbounded || other.unbounded || !self.mem_terms.is_empty() || !other.mem_terms.is_empty() {
            return SymbolicBound::unbounded();
        }
        match self.poly.mul(&other.poly) {
            Some(p) => SymbolicBound::from_poly(p),
            None => SymbolicBound::unbounded(),
        }
    }

    pub fn scale(&self, k: u64) -> SymbolicBound {
        self.mul(&SymbolicBound::constant(k))
    }

    pub fn params(&self) -> std::collections::BTreeSet<String> {
        self.poly.params().chain(self.mem_terms.iter().flat_map(|m| m.inner.0.params())).cloned().collect()
    }

    /// Coefficient of the degree-one term in `param`.
    pub fn linear_coefficient(&self, param: &str) -> BigRational {
        self.poly.coeff(&[param])
    }

    pub fn evaluate(&self, bindings: &BTreeMap<String, BigUint>) -> Result<Evaluated, BoundError> {
        if self.unbounded {
            return Ok(Evaluated::Infinite);
        }
        let mut total = self.poly.eval(bindings)?;
        for m in &self.mem_terms {
            let inner = m.inner.0.eval(bindings)?;
            total += (&inner * &inner / rat(m.divisor as i128)).floor();
        }
        let floor = total.floor().to_integer();
        Ok(Evaluated::Finite(floor.to_biguint().unwrap_or_default()))
    }

    /// Evaluation as `u128`, saturating; `None` when unbounded.
    pub fn evaluate_u128(&self, bindings: &BTreeMap<String, BigUint>) -> Result<Option<u128>, BoundError> {
        Ok(match self.evaluate(bindings)? {
            Evaluated::Finite(v) => Some(v.to_u128().unwrap_or(u128::MAX)),
            Evaluated::Infinite => None,
        })
    }

    pub fn render(&self) -> String {
        if self.unbounded {
            return "inf".into();
        }
        let mut s = if self.poly.is_zero() && !self.mem_terms.is_empty() { String::new() } else { self.poly.to_string() };
        for m in &self.mem_terms {
            if !s.is_empty() {
                s.push('+');
            }
            s.push_str(&m.render());
        }
        s
    }

    pub fn to_json(&self) -> Value {
        json!({
            "text": self.render(),
            "poly": self.poly.to_json(),
            "mem": self.mem_terms.iter().map(|m| json!({
                "inner": m.inner.0.to_json(),
                "divisor": m.divisor,
            })).collect::<Vec<_>>(),
            "unbounded": self.unbounded,
        })
    }

    /// Inverse of [`to_json`](Self::to_json).
    pub fn from_json(v: &Value) -> Option<SymbolicBound> {
        fn poly(v: &Value) -> Option<Poly> {
            let mut p = Poly::zero();
            for t in v.as_array()? {
                let mono = t.get(0)?.as_str()?;
                let coeff = parse_rational(t.get(1)?.as_str()?)?;
                let m: Monomial = if mono == "1" {
                    Vec::new()
                } else {
                    mono.split('*')
                        .flat_map(|f| match f.split_once('^') {
                            Some((n, e)) => vec![n.to_string(); e.parse().unwrap_or(1)],
                            None => vec![f.to_string()],
                        })
                        .collect()
                };
                p.add_term(m, coeff);
            }
            Some(p)
        }
        let mut mem_terms = Vec::new();
        for m in v.get("mem")?.as_array()? {
            mem_terms.push(MemTerm::new(poly(m.get("inner")?)?, m.get("divisor")?.as_u64()?));
        }
        Some(SymbolicBound { poly: poly(v.get("poly")?)?, mem_terms, unbounded: v.get("unbounded")?.as_bool()? })
    }
}

fn parse_rational(s: &str) -> Option<BigRational> {
    match s.split_once('/') {
        Some((n, d)) => Some(BigRational::new(n.parse().ok()?, d.parse().ok()?)),
        None => Some(BigRational::from_integer(s.parse().ok()?)),
    }
}

/// Integer ceiling of `a / b` for non-negative rationals.
pub fn ceil_div(a: &BigRational, b: u64) -> BigRational {
    let q = a / rat(b as i128);
    let (n, d) = (q.numer().clone(), q.denom().clone());
    BigRational::from_integer(n.div_ceil(&d))
}

impl fmt::Display for SymbolicBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render())
    }
}
