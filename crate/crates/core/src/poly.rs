//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! All symbolic work (brackets, homogeneity checks, group-law identities) runs
//! on [`Poly`]. Numeric hot loops use [`CompiledPoly`], a flattened `f64` copy
//! produced once per polynomial.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Exponent vector of a monomial.
pub type Monomial = Vec<u32>;

pub fn rational(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

pub fn rational_int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// Parses `"p/q"` or `"p"` exactly.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let trimmed = text.trim();
    if let Some((num, den)) = trimmed.split_once('/') {
        let num = BigInt::from_str(num.trim())
            .map_err(|_| Error::Config(format!("bad rational numerator in {text:?}")))?;
        let den = BigInt::from_str(den.trim())
            .map_err(|_| Error::Config(format!("bad rational denominator in {text:?}")))?;
        if den.is_zero() {
            return Err(Error::Config(format!("zero denominator in {text:?}")));
        }
        Ok(Rational::new(num, den))
    } else {
        let num = BigInt::from_str(trimmed)
            .map_err(|_| Error::Config(format!("bad rational {text:?}")))?;
        Ok(Rational::from_integer(num))
    }
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Very large numerators or denominators: divide in floating point.
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Best rational approximation used only when lifting float sample points into
/// exact arithmetic for spot checks.
pub fn rational_from_f64(v: f64) -> Rational {
    Rational::from_float(v).unwrap_or_else(Rational::zero)
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Monomial, Rational>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: Rational) -> Self {
        let mut p = Poly::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Poly::constant(nvars, Rational::one())
    }

    /// The coordinate function `x_i` (0-based).
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Poly::monomial(e, Rational::one())
    }

    pub fn monomial(exponents: Monomial, c: Rational) -> Self {
        let mut p = Poly::zero(exponents.len());
        p.add_term(exponents, c);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, exponents: &[u32]) -> Rational {
        self.terms.get(exponents).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn add_term(&mut self, exponents: Monomial, c: Rational) {
        assert_eq!(exponents.len(), self.nvars, "monomial arity mismatch");
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(exponents);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Poly {
        self.scale(&-Rational::one())
    }

    pub fn scale(&self, c: &Rational) -> Poly {
        if c.is_zero() {
            return Poly::zero(self.nvars);
        }
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(e, v)| (e.clone(), v * c))
                .collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Poly::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Monomial = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut out = Poly::one(self.nvars);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Partial derivative with respect to `x_i`.
    pub fn deriv(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[i] -= 1;
            out.add_term(e2, c * rational_int(e[i] as i64));
        }
        out
    }

    /// Composition `p(q_1(y), ..., q_n(y))`; every `q_i` shares one arity.
    pub fn substitute(&self, values: &[Poly]) -> Poly {
        assert_eq!(values.len(), self.nvars);
        let target = values.first().map(|q| q.nvars).unwrap_or(0);
        let mut cache: Vec<Vec<Poly>> = values.iter().map(|q| vec![Poly::one(q.nvars), q.clone()]).collect();
        let mut out = Poly::zero(target);
        for (e, c) in &self.terms {
            let mut term = Poly::constant(target, c.clone());
            for (i, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                while cache[i].len() <= k as usize {
                    let next = cache[i].last().unwrap().mul(&values[i]);
                    cache[i].push(next);
                }
                term = term.mul(&cache[i][k as usize]);
            }
            out = out.add(&term);
        }
        out
    }

    /// Re-embeds into `new_nvars` variables, placing `x_i` at `x_{offset+i}`.
    pub fn embed(&self, new_nvars: usize, offset: usize) -> Poly {
        assert!(offset + self.nvars <= new_nvars);
        let mut out = Poly::zero(new_nvars);
        for (e, c) in &self.terms {
            let mut e2 = vec![0; new_nvars];
            e2[offset..offset + self.nvars].copy_from_slice(e);
            out.add_term(e2, c.clone());
        }
        out
    }

    /// Weighted degree `sum e_i w_i` of one monomial.
    pub fn weighted_degree(exponents: &[u32], weights: &[u32]) -> u32 {
        exponents.iter().zip(weights).map(|(e, w)| e * w).sum()
    }

    /// First monomial whose weighted degree differs from `degree`, if any.
    pub fn non_homogeneous_monomial(&self, weights: &[u32], degree: u32) -> Option<&Monomial> {
        self.terms
            .keys()
            .find(|e| Poly::weighted_degree(e, weights) != degree)
    }

    pub fn is_homogeneous(&self, weights: &[u32], degree: u32) -> bool {
        self.non_homogeneous_monomial(weights, degree).is_none()
    }

    /// `p ∘ δ_λ` for the dilation `x_i ↦ λ^{w_i} x_i`.
    pub fn dilate(&self, weights: &[u32], lambda: &Rational) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (e, c) in &self.terms {
            let deg = Poly::weighted_degree(e, weights);
            let factor = pow_rational(lambda, deg);
            out.add_term(e.clone(), c * factor);
        }
        out
    }

    /// Exact evaluation at a rational point.
    pub fn eval_rational(&self, x: &[Rational]) -> Rational {
        let mut acc = Rational::zero();
        for (e, c) in &self.terms {
            let mut term = c.clone();
            for (xi, &k) in x.iter().zip(e) {
                if k > 0 {
                    term *= pow_rational(xi, k);
                }
            }
            acc += term;
        }
        acc
    }

    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly::new(self)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms
            .values()
            .map(|c| rational_to_f64(&c.abs()))
            .fold(0.0, f64::max)
    }
}

pub fn pow_rational(x: &Rational, k: u32) -> Rational {
    let mut out = Rational::one();
    for _ in 0..k {
        out *= x;
    }
    out
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (i, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => write!(f, "*x{}", i + 1)?,
                    _ => write!(f, "*x{}^{}", i + 1, k)?,
                }
            }
        }
        Ok(())
    }
}

/// Flattened `f64` polynomial for fast repeated evaluation.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    nvars: usize,
    coeffs: Vec<f64>,
    /// Per term: list of (variable, exponent) with nonzero exponent.
    factors: Vec<Vec<(usize, u32)>>,
}

impl CompiledPoly {
    fn new(p: &Poly) -> Self {
        let mut coeffs = Vec::with_capacity(p.terms.len());
        let mut factors = Vec::with_capacity(p.terms.len());
        for (e, c) in &p.terms {
            coeffs.push(rational_to_f64(c));
            factors.push(
                e.iter()
                    .enumerate()
                    .filter(|(_, &k)| k > 0)
                    .map(|(i, &k)| (i, k))
                    .collect(),
            );
        }
        CompiledPoly {
            nvars: p.nvars,
            coeffs,
            factors,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, fac) in self.coeffs.iter().zip(&self.factors) {
            let mut term = *c;
            for &(i, k) in fac {
                term *= match k {
                    1 => x[i],
                    2 => x[i] * x[i],
                    _ => x[i].powi(k as i32),
                };
            }
            acc += term;
        }
        acc
    }

    /// Upper bound for `|p|` on the box `|x_i| <= r_i`.
    pub fn abs_bound(&self, radii: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, fac) in self.coeffs.iter().zip(&self.factors) {
            let mut term = c.abs();
            for &(i, k) in fac {
                term *= radii[i].powi(k as i32);
            }
            acc += term;
        }
        acc
    }

    /// Terms as `(|coefficient|, factors)`; used by reachable-box bounds.
    pub(crate) fn abs_terms(&self) -> impl Iterator<Item = (f64, &[(usize, u32)])> {
        self.coeffs
            .iter()
            .zip(&self.factors)
            .map(|(c, f)| (c.abs(), f.as_slice()))
    }
}

/// Row-echelon basis over the rationals for sparse vectors keyed by `K`.
///
/// Used for exact linear-independence tests on coefficient vectors.
#[derive(Clone, Debug)]
pub struct RationalEchelon<K: Ord + Clone> {
    rows: BTreeMap<K, BTreeMap<K, Rational>>,
}

impl<K: Ord + Clone> Default for RationalEchelon<K> {
    fn default() -> Self {
        RationalEchelon {
            rows: BTreeMap::new(),
        }
    }
}

impl<K: Ord + Clone> RationalEchelon<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Reduces `v` against the basis; returns the remainder.
    pub fn reduce(&self, mut v: BTreeMap<K, Rational>) -> BTreeMap<K, Rational> {
        v.retain(|_, c| !c.is_zero());
        loop {
            let hit = v
                .keys()
                .find(|k| self.rows.contains_key(*k))
                .cloned();
            let Some(pivot) = hit else { break };
            let factor = v[&pivot].clone();
            for (k, c) in &self.rows[&pivot] {
                let entry = v.entry(k.clone()).or_insert_with(Rational::zero);
                *entry -= &factor * c;
            }
            v.retain(|_, c| !c.is_zero());
        }
        v
    }

    /// Inserts `v`; returns `true` if it was independent of the current basis.
    pub fn insert(&mut self, v: BTreeMap<K, Rational>) -> bool {
        let rem = self.reduce(v);
        let Some((pivot, lead)) = rem.iter().next().map(|(k, c)| (k.clone(), c.clone())) else {
            return false;
        };
        let normalized: BTreeMap<K, Rational> = rem.into_iter().map(|(k, c)| (k, c / &lead)).collect();
        // Keep existing rows free of the new pivot so reduction stays one-pass per pivot.
        for row in self.rows.values_mut() {
            if let Some(f) = row.get(&pivot).cloned() {
                for (k, c) in &normalized {
                    let entry = row.entry(k.clone()).or_insert_with(Rational::zero);
                    *entry -= &f * c;
                }
                row.retain(|_, c| !c.is_zero());
            }
        }
        self.rows.insert(pivot, normalized);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Poly {
        Poly::var(2, i)
    }

    #[test]
    fn parse_rational_exact() {
        assert_eq!(parse_rational("1").unwrap(), rational(1, 1));
        assert_eq!(parse_rational("-2/3").unwrap(), rational(-2, 3));
        assert_eq!(parse_rational("4/6").unwrap(), rational(2, 3));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("1.5").is_err());
    }

    #[test]
    fn product_and_derivative() {
        let p = x(0).mul(&x(0)).add(&x(1).scale(&rational(3, 1)));
        assert_eq!(p.deriv(0), x(0).scale(&rational(2, 1)));
        assert_eq!(p.deriv(1), Poly::constant(2, rational(3, 1)));
        assert_eq!(p.sub(&p), Poly::zero(2));
    }

    #[test]
    fn substitute_composes() {
        // p(a, b) = a*b with a = x+y, b = x-y gives x^2 - y^2
        let p = x(0).mul(&x(1));
        let q = p.substitute(&[x(0).add(&x(1)), x(0).sub(&x(1))]);
        assert_eq!(q, x(0).mul(&x(0)).sub(&x(1).mul(&x(1))));
    }

    #[test]
    fn dilation_scales_by_weighted_degree() {
        let w = [1, 2];
        let p = x(0).mul(&x(1)); // degree 3
        assert_eq!(p.dilate(&w, &rational(2, 1)), p.scale(&rational(8, 1)));
        assert!(p.is_homogeneous(&w, 3));
        assert!(!p.add(&x(1)).is_homogeneous(&w, 3));
    }

    #[test]
    fn compiled_matches_exact() {
        let p = x(0).pow(3).scale(&rational(-2, 3)).add(&x(1));
        let c = p.compile();
        let exact = p.eval_rational(&[rational(1, 2), rational(3, 1)]);
        assert!((c.eval(&[0.5, 3.0]) - rational_to_f64(&exact)).abs() < 1e-15);
    }

    #[test]
    fn echelon_detects_dependence() {
        let mut e: RationalEchelon<u32> = RationalEchelon::new();
        let v = |a: i64, b: i64, c: i64| -> BTreeMap<u32, Rational> {
            [(0, rational_int(a)), (1, rational_int(b)), (2, rational_int(c))]
                .into_iter()
                .collect()
        };
        assert!(e.insert(v(1, 2, 0)));
        assert!(e.insert(v(0, 1, 1)));
        assert!(!e.insert(v(1, 3, 1)));
        assert!(e.insert(v(0, 0, 5)));
        assert_eq!(e.rank(), 3);
    }
}
