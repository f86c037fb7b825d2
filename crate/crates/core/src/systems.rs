//! Homogeneous polynomial vector fields, their Lie algebra, and the
//! structural checks that a system must pass before anything numeric runs.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{parse_rational, rational_to_f64, CompiledPoly, Monomial, Poly, Rational, RationalEchelon};

/// Non-isotropic dilations `x_k ↦ λ^{σ_k} x_k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DilationFamily {
    weights: Vec<u32>,
}

impl DilationFamily {
    pub fn new(weights: Vec<u32>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Weights("no weights".into()));
        }
        if weights[0] != 1 {
            return Err(Error::Weights(format!("first weight must be 1, got {}", weights[0])));
        }
        if weights.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Weights(format!("weights must be non-decreasing: {weights:?}")));
        }
        Ok(DilationFamily { weights })
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Sum of all weights: the homogeneous dimension.
    pub fn homogeneous_dimension(&self) -> u32 {
        self.weights.iter().sum()
    }

    pub fn max_weight(&self) -> u32 {
        *self.weights.last().unwrap()
    }

    pub fn apply(&self, lambda: f64, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.weights)
            .map(|(xi, &w)| lambda.powi(w as i32) * xi)
            .collect()
    }
}

/// A vector field `Σ_k c_k(x) ∂_k` with polynomial coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyVectorField {
    components: Vec<Poly>,
}

impl PolyVectorField {
    pub fn new(components: Vec<Poly>) -> Self {
        let n = components.len();
        assert!(components.iter().all(|c| c.nvars() == n), "component arity must equal dimension");
        PolyVectorField { components }
    }

    pub fn zero(n: usize) -> Self {
        PolyVectorField::new(vec![Poly::zero(n); n])
    }

    /// The coordinate field `∂_k` (0-based).
    pub fn coordinate(n: usize, k: usize) -> Self {
        let mut c = vec![Poly::zero(n); n];
        c[k] = Poly::one(n);
        PolyVectorField::new(c)
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Poly] {
        &self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(Poly::is_zero)
    }

    /// `X u = Σ_k c_k ∂_k u`.
    pub fn apply(&self, u: &Poly) -> Poly {
        let mut out = Poly::zero(u.nvars());
        for (k, c) in self.components.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            out = out.add(&c.mul(&u.deriv(k)));
        }
        out
    }

    pub fn add(&self, other: &PolyVectorField) -> PolyVectorField {
        PolyVectorField::new(self.components.iter().zip(&other.components).map(|(a, b)| a.add(b)).collect())
    }

    pub fn scale(&self, c: &Rational) -> PolyVectorField {
        PolyVectorField::new(self.components.iter().map(|p| p.scale(c)).collect())
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.components.iter().map(|c| c.compile().eval(x)).collect()
    }

    /// The degree `d` such that the coefficient of `∂_k` is homogeneous of
    /// degree `w_k - d` for every `k`; `None` if no such `d` exists.
    pub fn homogeneous_degree(&self, weights: &[u32]) -> Option<i64> {
        let mut degree: Option<i64> = None;
        for (k, c) in self.components.iter().enumerate() {
            for (e, _) in c.terms() {
                let d = weights[k] as i64 - Poly::weighted_degree(e, weights) as i64;
                match degree {
                    None => degree = Some(d),
                    Some(prev) if prev != d => return None,
                    _ => {}
                }
            }
        }
        degree
    }

    /// Coefficient vector keyed by (coordinate, monomial), for exact linear algebra.
    pub fn coefficient_vector(&self) -> BTreeMap<(usize, Monomial), Rational> {
        let mut v = BTreeMap::new();
        for (k, c) in self.components.iter().enumerate() {
            for (e, coef) in c.terms() {
                v.insert((k, e.clone()), coef.clone());
            }
        }
        v
    }

    /// Re-embeds into a larger space, acting on coordinates `offset..offset+n`.
    pub fn embed(&self, new_dim: usize, offset: usize) -> PolyVectorField {
        let mut comps = vec![Poly::zero(new_dim); new_dim];
        for (k, c) in self.components.iter().enumerate() {
            comps[offset + k] = c.embed(new_dim, offset);
        }
        PolyVectorField::new(comps)
    }

    pub fn compile(&self) -> CompiledField {
        CompiledField::new(self)
    }

    pub fn to_terms(&self) -> Vec<TermSpec> {
        let mut out = Vec::new();
        for (k, c) in self.components.iter().enumerate() {
            for (e, coef) in c.terms() {
                out.push(TermSpec {
                    target: k + 1,
                    coeff: coef.to_string(),
                    monomial: e.clone(),
                });
            }
        }
        out
    }

    pub fn from_terms(n: usize, terms: &[TermSpec]) -> Result<Self> {
        let mut comps = vec![Poly::zero(n); n];
        for t in terms {
            if t.target == 0 || t.target > n {
                return Err(Error::Config(format!("term target {} outside 1..={n}", t.target)));
            }
            if t.monomial.len() != n {
                return Err(Error::Config(format!(
                    "monomial {:?} has length {}, expected {n}",
                    t.monomial,
                    t.monomial.len()
                )));
            }
            let c = parse_rational(&t.coeff)?;
            comps[t.target - 1].add_term(t.monomial.clone(), c);
        }
        Ok(PolyVectorField::new(comps))
    }
}

/// Exact Lie bracket `[a, b] = a(b) - b(a)`, component-wise.
pub fn lie_bracket(a: &PolyVectorField, b: &PolyVectorField) -> PolyVectorField {
    assert_eq!(a.dim(), b.dim(), "bracket of fields on different spaces");
    PolyVectorField::new(
        a.components
            .iter()
            .zip(&b.components)
            .map(|(ak, bk)| a.apply(bk).sub(&b.apply(ak)))
            .collect(),
    )
}

/// Numeric copy of a field together with its Jacobian.
#[derive(Clone, Debug)]
pub struct CompiledField {
    comps: Vec<CompiledPoly>,
    /// `jac[k][i] = ∂_i c_k`
    jac: Vec<Vec<CompiledPoly>>,
}

impl CompiledField {
    fn new(f: &PolyVectorField) -> Self {
        let n = f.dim();
        CompiledField {
            comps: f.components.iter().map(Poly::compile).collect(),
            jac: f
                .components
                .iter()
                .map(|c| (0..n).map(|i| c.deriv(i).compile()).collect())
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.comps) {
            *o = c.eval(x);
        }
    }

    /// Adds `scale * D c(x) · v` to `out`.
    #[inline]
    pub fn jac_vec_add(&self, x: &[f64], v: &[f64], scale: f64, out: &mut [f64]) {
        for (k, row) in self.jac.iter().enumerate() {
            let mut acc = 0.0;
            for (i, d) in row.iter().enumerate() {
                if !d.is_zero() && v[i] != 0.0 {
                    acc += d.eval(x) * v[i];
                }
            }
            out[k] += scale * acc;
        }
    }

    pub fn components(&self) -> &[CompiledPoly] {
        &self.comps
    }
}

/// One term of a field in the JSON config format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSpec {
    /// 1-based coordinate of `∂`.
    pub target: usize,
    pub coeff: String,
    pub monomial: Vec<u32>,
}

/// JSON schema of a system config document.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
    pub dimension: usize,
    pub weights: Vec<u32>,
    pub fields: Vec<Vec<TermSpec>>,
}

/// A validated family `X_1..X_m` of δ-homogeneous Hörmander fields.
#[derive(Clone, Debug)]
pub struct HomogeneousSystem {
    name: String,
    dilation: DilationFamily,
    fields: Vec<PolyVectorField>,
}

impl HomogeneousSystem {
    /// Validates homogeneity, independence and the rank condition at the origin.
    pub fn new(name: impl Into<String>, dilation: DilationFamily, fields: Vec<PolyVectorField>) -> Result<Self> {
        let n = dilation.dim();
        if fields.len() < 2 {
            return Err(Error::DependentFields(format!("m = {} < 2", fields.len())));
        }
        for (j, f) in fields.iter().enumerate() {
            if f.dim() != n {
                return Err(Error::Config(format!("field X{} lives in dimension {}, expected {n}", j + 1, f.dim())));
            }
            if f.is_zero() {
                return Err(Error::DependentFields(format!("X{} is the zero field", j + 1)));
            }
            for (k, c) in f.components().iter().enumerate() {
                let expected = dilation.weights()[k] - 1;
                if let Some(bad) = c.non_homogeneous_monomial(dilation.weights(), expected) {
                    return Err(Error::NotHomogeneous {
                        field: j + 1,
                        coordinate: k + 1,
                        monomial: bad.clone(),
                        found: Poly::weighted_degree(bad, dilation.weights()),
                        expected,
                    });
                }
            }
        }
        let mut echelon = RationalEchelon::new();
        for (j, f) in fields.iter().enumerate() {
            if !echelon.insert(f.coefficient_vector()) {
                return Err(Error::DependentFields(format!("X{} lies in the span of the previous fields", j + 1)));
            }
        }
        let sys = HomogeneousSystem {
            name: name.into(),
            dilation,
            fields,
        };
        let lie = lie_closure(&sys, sys.dilation.max_weight())?;
        let rank = lie.rank_at(&vec![0.0; n]);
        if rank != n {
            return Err(Error::RankDeficient { rank, n });
        }
        Ok(sys)
    }

    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        if cfg.weights.len() != cfg.dimension {
            return Err(Error::Config(format!(
                "{} weights given for dimension {}",
                cfg.weights.len(),
                cfg.dimension
            )));
        }
        let dilation = DilationFamily::new(cfg.weights.clone())?;
        let fields = cfg
            .fields
            .iter()
            .map(|terms| PolyVectorField::from_terms(cfg.dimension, terms))
            .collect::<Result<Vec<_>>>()?;
        HomogeneousSystem::new(cfg.name.clone(), dilation, fields)
    }

    pub fn to_config(&self) -> SystemConfig {
        SystemConfig {
            name: self.name.clone(),
            dimension: self.n(),
            weights: self.dilation.weights().to_vec(),
            fields: self.fields.iter().map(PolyVectorField::to_terms).collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.dilation.dim()
    }

    pub fn m(&self) -> usize {
        self.fields.len()
    }

    /// Homogeneous dimension `q = σ_1 + … + σ_n`.
    pub fn q(&self) -> u32 {
        self.dilation.homogeneous_dimension()
    }

    pub fn dilation(&self) -> &DilationFamily {
        &self.dilation
    }

    pub fn weights(&self) -> &[u32] {
        self.dilation.weights()
    }

    pub fn fields(&self) -> &[PolyVectorField] {
        &self.fields
    }

    pub fn compiled(&self) -> Vec<CompiledField> {
        self.fields.iter().map(PolyVectorField::compile).collect()
    }
}

/// Parses and validates a JSON system config.
pub fn parse_system(json: &str) -> Result<HomogeneousSystem> {
    let cfg: SystemConfig = serde_json::from_str(json).map_err(|e| Error::Config(format!("schema: {e}")))?;
    HomogeneousSystem::from_config(&cfg)
}

/// Basis of `Lie(X)` graded by strata `a_1 ⊕ … ⊕ a_s`.
#[derive(Clone, Debug)]
pub struct LieStructure {
    pub basis: Vec<PolyVectorField>,
    /// `strata[k-1]` = number of basis elements of degree `k`.
    pub strata_dims: Vec<usize>,
    pub n: usize,
}

impl LieStructure {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `p = N - n`, the number of variables a lifting must add.
    pub fn p(&self) -> usize {
        self.dim() - self.n
    }

    pub fn step(&self) -> usize {
        self.strata_dims.len()
    }

    /// Degree of the stratum containing basis element `i` (1-based degree).
    pub fn degree_of(&self, i: usize) -> usize {
        let mut acc = 0;
        for (k, d) in self.strata_dims.iter().enumerate() {
            acc += d;
            if i < acc {
                return k + 1;
            }
        }
        panic!("basis index {i} out of range")
    }

    /// `dim span{Y(x) : Y ∈ basis}`.
    pub fn rank_at(&self, x: &[f64]) -> usize {
        rank_of_fields(&self.basis, x)
    }

    /// Every bracket of two basis elements lies in the span of the basis.
    pub fn is_closed(&self) -> bool {
        let mut echelon = RationalEchelon::new();
        for b in &self.basis {
            echelon.insert(b.coefficient_vector());
        }
        for (i, a) in self.basis.iter().enumerate() {
            for b in &self.basis[i + 1..] {
                let br = lie_bracket(a, b);
                if !echelon.reduce(br.coefficient_vector()).is_empty() {
                    return false;
                }
            }
        }
        true
    }
}

/// Builds the stratified basis by bracketing generators against the previous stratum.
pub fn lie_closure(sys: &HomogeneousSystem, max_step: u32) -> Result<LieStructure> {
    closure_of(sys.fields(), sys.n(), max_step)
}

pub(crate) fn closure_of(generators: &[PolyVectorField], n: usize, max_step: u32) -> Result<LieStructure> {
    let mut echelon = RationalEchelon::new();
    let mut basis = Vec::new();
    let mut strata_dims = Vec::new();
    let mut current = Vec::new();
    for g in generators {
        if echelon.insert(g.coefficient_vector()) {
            current.push(g.clone());
        }
    }
    let mut step = 1u32;
    loop {
        strata_dims.push(current.len());
        basis.extend(current.iter().cloned());
        let mut next = Vec::new();
        for g in generators {
            for c in &current {
                let br = lie_bracket(g, c);
                if br.is_zero() {
                    continue;
                }
                if echelon.insert(br.coefficient_vector()) {
                    next.push(br);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        if step >= max_step {
            return Err(Error::ClosureFailed { max_step });
        }
        step += 1;
        current = next;
    }
    Ok(LieStructure { basis, strata_dims, n })
}

/// Numerical rank of `{Y(x)}` with a relative singular-value cutoff.
pub fn rank_of_fields(fields: &[PolyVectorField], x: &[f64]) -> usize {
    let n = x.len();
    if fields.is_empty() {
        return 0;
    }
    let cols: Vec<Vec<f64>> = fields.iter().map(|f| f.eval(x)).collect();
    let m = DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r]);
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-10 * smax.max(1.0)).count()
}

/// `dim span{Y(x) : Y ∈ Lie(X)}`.
pub fn hormander_rank(sys: &HomogeneousSystem, x: &[f64]) -> Result<usize> {
    let lie = lie_closure(sys, sys.dilation().max_weight())?;
    Ok(lie.rank_at(x))
}

/// Checks `X_j(u ∘ δ_λ) = λ (X_j u) ∘ δ_λ` exactly for one field and test polynomial.
///
/// The factor `λ` is what degree-1 homogeneity means at the coefficient level.
pub fn commutes_with_dilation(field: &PolyVectorField, weights: &[u32], u: &Poly, lambda: &Rational) -> bool {
    let lhs = field.apply(&u.dilate(weights, lambda));
    let rhs = field.apply(u).dilate(weights, lambda).scale(lambda);
    lhs == rhs
}

/// Evaluates a field numerically at a float point (used in reports).
pub fn field_at(field: &PolyVectorField, x: &[f64]) -> Vec<f64> {
    field.components().iter().map(|c| c.compile().eval(x)).collect()
}

pub fn coefficient_as_f64(c: &Rational) -> f64 {
    rational_to_f64(c)
}

/// Deterministic test polynomials with 1 to 4 terms, exponents ≤ 3 and small integer coefficients.
pub fn test_polynomials(n: usize, count: usize, seed: u64) -> Vec<Poly> {
    use rand::Rng;
    (0..count)
        .map(|i| {
            let mut rng = crate::rng::stream_rng(seed ^ 0x7e57_9013, i as u64);
            let mut u = Poly::zero(n);
            let terms = rng.random_range(1..=4);
            for _ in 0..terms {
                let e: Monomial = (0..n).map(|_| rng.random_range(0..=3)).collect();
                let c = rng.random_range(-5i64..=5);
                u.add_term(e, crate::poly::rational_int(if c == 0 { 1 } else { c }));
            }
            if u.is_zero() {
                u = Poly::var(n, i % n);
            }
            u
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct HomogeneityReport {
    pub system: String,
    pub lambdas: Vec<String>,
    pub polynomials: usize,
    pub checks: usize,
    /// `(field, polynomial index, λ)` of every failing identity.
    pub failures: Vec<(usize, usize, String)>,
    pub passed: bool,
}

/// Exact `X_j(u ∘ δ_λ) = λ (X_j u) ∘ δ_λ` over all fields, `count` test polynomials and `λ ∈ {2, 1/3, 5/7}`.
pub fn homogeneity_report(sys: &HomogeneousSystem, count: usize, seed: u64) -> HomogeneityReport {
    let lambdas = [crate::poly::rational(2, 1), crate::poly::rational(1, 3), crate::poly::rational(5, 7)];
    let polys = test_polynomials(sys.n(), count, seed);
    let mut failures = Vec::new();
    let mut checks = 0;
    for (j, f) in sys.fields().iter().enumerate() {
        for (i, u) in polys.iter().enumerate() {
            for l in &lambdas {
                checks += 1;
                if !commutes_with_dilation(f, sys.weights(), u, l) {
                    failures.push((j + 1, i, l.to_string()));
                }
            }
        }
    }
    HomogeneityReport {
        system: sys.name().to_string(),
        lambdas: lambdas.iter().map(|l| l.to_string()).collect(),
        polynomials: polys.len(),
        checks,
        passed: failures.is_empty(),
        failures,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StructureReport {
    pub system: String,
    pub n: usize,
    pub m: usize,
    pub weights: Vec<u32>,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub p: usize,
    pub q: u32,
    #[serde(rename = "Q")]
    pub big_q: u32,
    pub step: usize,
    pub strata_dims: Vec<usize>,
    pub carnot: bool,
    pub summary: String,
}

/// Dimensions of `Lie(X)`; `Q = Σ_k k · dim a_k`.
pub fn analyze(sys: &HomogeneousSystem) -> Result<StructureReport> {
    let lie = lie_closure(sys, sys.dilation().max_weight())?;
    let big_q = lie.strata_dims.iter().enumerate().map(|(k, d)| (k as u32 + 1) * *d as u32).sum();
    let carnot = lie.p() == 0;
    let summary = if carnot {
        format!("Carnot case N=n; operator is the canonical heat operator (N={})", lie.dim())
    } else {
        "requires lifting (H3 holds)".to_string()
    };
    Ok(StructureReport {
        system: sys.name().to_string(),
        n: sys.n(),
        m: sys.m(),
        weights: sys.weights().to_vec(),
        big_n: lie.dim(),
        p: lie.p(),
        q: sys.q(),
        big_q,
        step: lie.step(),
        strata_dims: lie.strata_dims.clone(),
        carnot,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::poly::{rational, rational_int};

    fn d(n: usize, k: usize) -> PolyVectorField {
        PolyVectorField::coordinate(n, k)
    }

    fn x1_pow_d2(k: u32) -> PolyVectorField {
        PolyVectorField::new(vec![Poly::zero(2), Poly::var(2, 0).pow(k)])
    }

    #[test]
    fn bracket_examples() {
        assert_eq!(lie_bracket(&d(2, 0), &x1_pow_d2(1)), d(2, 1));
        assert!(lie_bracket(&x1_pow_d2(1), &x1_pow_d2(1)).is_zero());
        assert_eq!(lie_bracket(&d(2, 0), &x1_pow_d2(2)), x1_pow_d2(1).scale(&rational_int(2)));
    }

    #[test]
    fn parse_catalog_systems() {
        let g = catalog::system("grushin").unwrap();
        assert_eq!((g.n(), g.m(), g.q()), (2, 2, 3));
        let e = catalog::system("euclid2").unwrap();
        assert_eq!(e.q(), 2);
    }

    #[test]
    fn rejects_non_homogeneous_coefficient() {
        let doc = r#"{"name":"bad","dimension":2,"weights":[1,2],
            "fields":[[{"target":1,"coeff":"1","monomial":[0,0]}],
                      [{"target":1,"coeff":"1","monomial":[0,1]}]]}"#;
        match parse_system(doc) {
            Err(Error::NotHomogeneous { field, coordinate, monomial, found, expected }) => {
                assert_eq!((field, coordinate, found, expected), (2, 1, 2, 0));
                assert_eq!(monomial, vec![0, 1]);
            }
            other => panic!("expected NotHomogeneous, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_weights_and_small_m() {
        let unsorted = r#"{"name":"w","dimension":2,"weights":[2,1],"fields":[]}"#;
        assert!(matches!(parse_system(unsorted), Err(Error::Weights(_))));
        let one = r#"{"name":"w","dimension":2,"weights":[1,1],
            "fields":[[{"target":1,"coeff":"1","monomial":[0,0]}]]}"#;
        assert!(matches!(parse_system(one), Err(Error::DependentFields(_))));
        let dep = r#"{"name":"w","dimension":2,"weights":[1,1],
            "fields":[[{"target":1,"coeff":"1","monomial":[0,0]}],
                      [{"target":1,"coeff":"-2/3","monomial":[0,0]}]]}"#;
        assert!(matches!(parse_system(dep), Err(Error::DependentFields(_))));
    }

    #[test]
    fn rejects_rank_deficiency() {
        // X1 = ∂1, X2 = ∂2 in R^3 with weights (1,1,1): never reaches ∂3.
        let doc = r#"{"name":"r","dimension":3,"weights":[1,1,1],
            "fields":[[{"target":1,"coeff":"1","monomial":[0,0,0]}],
                      [{"target":2,"coeff":"1","monomial":[0,0,0]}]]}"#;
        assert!(matches!(parse_system(doc), Err(Error::RankDeficient { rank: 2, n: 3 })));
    }

    #[test]
    fn rejects_schema_violation() {
        assert!(matches!(parse_system("{\"name\":1}"), Err(Error::Config(_))));
        let bad_target = r#"{"name":"t","dimension":2,"weights":[1,1],
            "fields":[[{"target":3,"coeff":"1","monomial":[0,0]}],
                      [{"target":2,"coeff":"1","monomial":[0,0]}]]}"#;
        assert!(matches!(parse_system(bad_target), Err(Error::Config(_))));
    }

    #[test]
    fn closure_dimensions() {
        let e = lie_closure(&catalog::system("euclid2").unwrap(), 1).unwrap();
        assert_eq!((e.dim(), e.p(), e.step()), (2, 0, 1));
        let g = lie_closure(&catalog::system("grushin").unwrap(), 2).unwrap();
        assert_eq!((g.dim(), g.p(), g.step()), (3, 1, 2));
        assert_eq!(g.basis[2], d(2, 1));
        let g3 = lie_closure(&catalog::system("grushin3").unwrap(), 3).unwrap();
        assert_eq!((g3.dim(), g3.p(), g3.step()), (4, 2, 3));
        assert_eq!(g3.strata_dims, vec![2, 1, 1]);
    }

    #[test]
    fn closure_fails_below_required_step() {
        let g3 = catalog::system("grushin3").unwrap();
        assert!(matches!(lie_closure(&g3, 2), Err(Error::ClosureFailed { max_step: 2 })));
    }

    #[test]
    fn closure_is_idempotent_and_graded() {
        for name in catalog::SYSTEM_NAMES {
            let sys = catalog::system(name).unwrap();
            let lie = lie_closure(&sys, sys.dilation().max_weight()).unwrap();
            assert!(lie.is_closed(), "{name}");
            let again = closure_of(&lie.basis, sys.n(), 8).unwrap();
            assert_eq!(again.dim(), lie.dim(), "{name}");
            for (i, b) in lie.basis.iter().enumerate() {
                assert_eq!(b.homogeneous_degree(sys.weights()), Some(lie.degree_of(i) as i64), "{name}");
            }
        }
    }

    #[test]
    fn rank_examples() {
        let g = catalog::system("grushin").unwrap();
        assert_eq!(hormander_rank(&g, &[0.0, 0.0]).unwrap(), 2);
        assert_eq!(rank_of_fields(g.fields(), &[1.0, 0.0]), 2);
        assert_eq!(rank_of_fields(g.fields(), &[0.0, 3.0]), 1);
        let e = catalog::system("euclid2").unwrap();
        assert_eq!(hormander_rank(&e, &[5.0, -2.0]).unwrap(), 2);
    }

    #[test]
    fn dilation_commutation_on_grushin() {
        let g = catalog::system("grushin").unwrap();
        let u = Poly::var(2, 0).pow(2).mul(&Poly::var(2, 1)).add(&Poly::var(2, 1).pow(2));
        for f in g.fields() {
            assert!(commutes_with_dilation(f, g.weights(), &u, &rational(1, 2)));
            assert!(commutes_with_dilation(f, g.weights(), &u, &rational(3, 1)));
        }
        // A field of the wrong degree does not commute.
        let bad = PolyVectorField::new(vec![Poly::var(2, 1), Poly::zero(2)]);
        assert!(!commutes_with_dilation(&bad, g.weights(), &Poly::var(2, 0), &rational(2, 1)));
    }

    #[test]
    fn catalog_structure() {
        let g = analyze(&crate::catalog::system("grushin").unwrap()).unwrap();
        assert_eq!((g.big_n, g.p, g.q, g.step, g.big_q), (3, 1, 3, 2, 4));
        assert_eq!(g.summary, "requires lifting (H3 holds)");
        let e = analyze(&crate::catalog::system("euclid2").unwrap()).unwrap();
        assert!(e.carnot && e.summary.starts_with("Carnot case N=n; operator is the canonical heat operator"));
        let g3 = analyze(&crate::catalog::system("grushin3").unwrap()).unwrap();
        assert_eq!((g3.big_n, g3.p, g3.big_q), (4, 2, 7));
    }

    #[test]
    fn homogeneity_identity_holds_on_catalog() {
        for name in crate::catalog::SYSTEM_NAMES {
            let r = homogeneity_report(&crate::catalog::system(name).unwrap(), 20, 1);
            assert!(r.passed, "{name}: {:?}", r.failures);
            assert_eq!(r.checks, 2 * 20 * 3);
        }
    }
}
