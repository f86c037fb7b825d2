//! Lifted homogeneous Carnot groups and their heat kernels.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::ControlSystem;
use crate::heisenberg;
use crate::poly::{parse_rational, rational_int, CompiledPoly, Poly};
use crate::sde::{simulate, Kde, SdeOpts};
use crate::systems::{closure_of, rank_of_fields, HomogeneousSystem, PolyVectorField, TermSpec};

/// Which evaluator the group kernel dispatches to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Euclidean,
    Heisenberg,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    Quadrature,
    MonteCarlo,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LawTerm {
    pub coeff: String,
    pub monomial: Vec<u32>,
}

/// JSON schema of a group config document.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub name: String,
    #[serde(default)]
    pub system: Option<String>,
    #[serde(rename = "N")]
    pub dimension: usize,
    pub lifted_weights: Vec<u32>,
    #[serde(default = "default_kind")]
    pub kernel: KernelKind,
    pub group_law: Vec<Vec<LawTerm>>,
    pub generators: Vec<Vec<TermSpec>>,
}

fn default_kind() -> KernelKind {
    KernelKind::MonteCarlo
}

/// `G = (R^N, ∗, D_λ)` lifting a [`HomogeneousSystem`].
#[derive(Clone, Debug)]
pub struct CarnotGroup {
    name: String,
    base: HomogeneousSystem,
    weights: Vec<u32>,
    law: Vec<Poly>,
    inverse: Vec<Poly>,
    generators: Vec<PolyVectorField>,
    kind: KernelKind,
    law_c: Vec<CompiledPoly>,
    inverse_c: Vec<CompiledPoly>,
    control: ControlSystem,
    gauge_l: u32,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl CarnotGroup {
    pub fn from_json(doc: &str, base: HomogeneousSystem) -> Result<Self> {
        let cfg: GroupConfig = serde_json::from_str(doc).map_err(|e| Error::Config(format!("group schema: {e}")))?;
        CarnotGroup::from_config(&cfg, base)
    }

    pub fn from_config(cfg: &GroupConfig, base: HomogeneousSystem) -> Result<Self> {
        let n_total = cfg.dimension;
        let n = base.n();
        if n_total != n + cfg.lifted_weights.len() {
            return Err(Error::Group(format!(
                "N = {n_total} but base dimension {n} plus {} lifted weights",
                cfg.lifted_weights.len()
            )));
        }
        if cfg.lifted_weights.iter().any(|&w| w == 0) {
            return Err(Error::Group("lifted weights must be positive".into()));
        }
        if let Some(sys) = &cfg.system {
            if sys != base.name() {
                return Err(Error::Group(format!("group lifts `{sys}` but was paired with `{}`", base.name())));
            }
        }
        if cfg.group_law.len() != n_total {
            return Err(Error::Group(format!("group law has {} components, expected {n_total}", cfg.group_law.len())));
        }
        let mut law = Vec::with_capacity(n_total);
        for comp in &cfg.group_law {
            let mut p = Poly::zero(2 * n_total);
            for t in comp {
                if t.monomial.len() != 2 * n_total {
                    return Err(Error::Group(format!("law monomial {:?} must have length {}", t.monomial, 2 * n_total)));
                }
                p.add_term(t.monomial.clone(), parse_rational(&t.coeff)?);
            }
            law.push(p);
        }
        let generators = cfg
            .generators
            .iter()
            .map(|terms| PolyVectorField::from_terms(n_total, terms))
            .collect::<Result<Vec<_>>>()?;
        let mut weights = base.weights().to_vec();
        weights.extend_from_slice(&cfg.lifted_weights);
        CarnotGroup::new(cfg.name.clone(), base, weights, law, generators, cfg.kernel)
    }

    /// Validates every structural identity exactly and builds the numeric caches.
    pub fn new(
        name: String,
        base: HomogeneousSystem,
        weights: Vec<u32>,
        law: Vec<Poly>,
        generators: Vec<PolyVectorField>,
        kind: KernelKind,
    ) -> Result<Self> {
        let nt = weights.len();
        let n = base.n();
        let bad = |msg: String| Err(Error::Group(msg));
        if generators.len() != base.m() {
            return bad(format!("{} generators for {} base fields", generators.len(), base.m()));
        }
        if generators.iter().any(|g| g.dim() != nt) {
            return bad("generator dimension differs from N".into());
        }
        let vars_u: Vec<Poly> = (0..nt).map(|i| Poly::var(2 * nt, i)).collect();
        let vars_v: Vec<Poly> = (0..nt).map(|i| Poly::var(2 * nt, nt + i)).collect();
        let zeros = vec![Poly::zero(2 * nt); nt];
        // Identity.
        for (k, c) in law.iter().enumerate() {
            let right: Vec<Poly> = vars_u.iter().cloned().chain(zeros.iter().cloned()).collect();
            let left: Vec<Poly> = zeros.iter().cloned().chain(vars_v.iter().cloned()).collect();
            if c.substitute(&right) != vars_u[k] || c.substitute(&left) != vars_v[k] {
                return bad(format!("0 is not a two-sided identity (component {})", k + 1));
            }
        }
        // Homogeneity of the law under (D_λ, D_λ).
        let ww: Vec<u32> = weights.iter().chain(&weights).copied().collect();
        for (k, c) in law.iter().enumerate() {
            if !c.is_homogeneous(&ww, weights[k]) {
                return bad(format!("law component {} is not D_λ-homogeneous of degree {}", k + 1, weights[k]));
            }
        }
        // Associativity as a polynomial identity in 3N variables.
        let m3 = 3 * nt;
        let a: Vec<Poly> = (0..nt).map(|i| Poly::var(m3, i)).collect();
        let b: Vec<Poly> = (0..nt).map(|i| Poly::var(m3, nt + i)).collect();
        let c3: Vec<Poly> = (0..nt).map(|i| Poly::var(m3, 2 * nt + i)).collect();
        let mul = |x: &[Poly], y: &[Poly]| -> Vec<Poly> {
            let args: Vec<Poly> = x.iter().chain(y).cloned().collect();
            law.iter().map(|c| c.substitute(&args)).collect()
        };
        if mul(&mul(&a, &b), &c3) != mul(&a, &mul(&b, &c3)) {
            return bad("group law is not associative".into());
        }
        // Inverse by fixed-point iteration v ← v - u∗v; exact after max-weight rounds.
        let un: Vec<Poly> = (0..nt).map(|i| Poly::var(nt, i)).collect();
        let mut inv = vec![Poly::zero(nt); nt];
        let rounds = weights.iter().copied().max().unwrap_or(1) as usize + 1;
        for _ in 0..rounds {
            let prod = mul_in(&law, &un, &inv);
            inv = inv.iter().zip(&prod).map(|(v, p)| v.sub(p)).collect();
        }
        let zero_n = vec![Poly::zero(nt); nt];
        if mul_in(&law, &un, &inv) != zero_n || mul_in(&law, &inv, &un) != zero_n {
            return bad("could not construct a polynomial inverse".into());
        }
        // Lifting: first n components of Z_j equal X_j; Z_j homogeneous of degree 1.
        for (j, (z, x)) in generators.iter().zip(base.fields()).enumerate() {
            let embedded = x.embed(nt, 0);
            for k in 0..n {
                if z.components()[k] != embedded.components()[k] {
                    return bad(format!("Z{} does not project onto X{} in coordinate {}", j + 1, j + 1, k + 1));
                }
            }
            for (k, c) in z.components().iter().enumerate() {
                if !c.is_zero() && weights[k] == 0 {
                    return bad("zero weight".into());
                }
                if !c.is_homogeneous(&weights, weights[k] - 1) {
                    return bad(format!("Z{} is not D_λ-homogeneous of degree 1 (coordinate {})", j + 1, k + 1));
                }
            }
        }
        // Left invariance: Z_j(u) = J_v(u∗v)|_{v=0} Z_j(0).
        let at_zero: Vec<Poly> = vars_u.iter().cloned().chain(zeros.iter().cloned()).collect();
        let proj: Vec<Poly> = (0..nt).map(|i| Poly::var(nt, i)).chain((0..nt).map(|_| Poly::zero(nt))).collect();
        let zero_pt = vec![rational_int(0); nt];
        for (j, z) in generators.iter().enumerate() {
            let z0: Vec<_> = z.components().iter().map(|c| c.eval_rational(&zero_pt)).collect();
            for k in 0..nt {
                let mut expected = Poly::zero(nt);
                for (i, zi) in z0.iter().enumerate() {
                    if *zi == rational_int(0) {
                        continue;
                    }
                    let d = law[k].deriv(nt + i).substitute(&at_zero).substitute(&proj);
                    expected = expected.add(&d.scale(zi));
                }
                if expected != z.components()[k] {
                    return bad(format!("Z{} is not left-invariant (coordinate {})", j + 1, k + 1));
                }
            }
        }
        // The generators must span the whole algebra.
        let max_w = weights.iter().copied().max().unwrap_or(1);
        let lie = closure_of(&generators, nt, max_w.max(1)).map_err(|e| Error::Group(format!("generator algebra: {e}")))?;
        if lie.rank_at(&vec![0.0; nt]) != nt {
            return bad(format!("generators span rank {} < N = {nt} at 0", rank_of_fields(&lie.basis, &vec![0.0; nt])));
        }
        check_kind(kind, &weights, &law, &generators, n)?;
        let gauge_l = weights.iter().fold(1u32, |l, &w| l / gcd(l, w) * w);
        let control = ControlSystem::new(generators.iter().map(PolyVectorField::compile).collect(), weights.clone());
        Ok(CarnotGroup {
            name,
            law_c: law.iter().map(Poly::compile).collect(),
            inverse_c: inv.iter().map(Poly::compile).collect(),
            base,
            weights,
            law,
            inverse: inv,
            generators,
            kind,
            control,
            gauge_l,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn base(&self) -> &HomogeneousSystem {
        &self.base
    }

    #[allow(non_snake_case)]
    pub fn N(&self) -> usize {
        self.weights.len()
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn p(&self) -> usize {
        self.N() - self.n()
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    pub fn lifted_weights(&self) -> &[u32] {
        &self.weights[self.n()..]
    }

    /// `q* = Σ τ_k`.
    pub fn q_star(&self) -> u32 {
        self.lifted_weights().iter().sum()
    }

    /// `Q = q + q*`.
    #[allow(non_snake_case)]
    pub fn Q(&self) -> u32 {
        self.weights.iter().sum()
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn law(&self) -> &[Poly] {
        &self.law
    }

    pub fn inverse_polys(&self) -> &[Poly] {
        &self.inverse
    }

    pub fn generators(&self) -> &[PolyVectorField] {
        &self.generators
    }

    pub fn control(&self) -> &ControlSystem {
        &self.control
    }

    pub fn mul(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let args: Vec<f64> = u.iter().chain(v).copied().collect();
        self.law_c.iter().map(|c| c.eval(&args)).collect()
    }

    pub fn inverse(&self, u: &[f64]) -> Vec<f64> {
        self.inverse_c.iter().map(|c| c.eval(u)).collect()
    }

    pub fn dilate(&self, lambda: f64, u: &[f64]) -> Vec<f64> {
        self.control.dilate(lambda, u)
    }

    /// Gauge `(Σ |u_k|^{2L/w_k})^{1/2L}`, `L = lcm(w)`; `D_λ`-homogeneous of degree 1.
    pub fn homogeneous_norm(&self, u: &[f64]) -> f64 {
        let l2 = 2.0 * self.gauge_l as f64;
        // Factor out the largest term to avoid overflow in high powers.
        let roots: Vec<f64> = u
            .iter()
            .zip(&self.weights)
            .map(|(x, &w)| x.abs().powf(1.0 / w as f64))
            .collect();
        let mx = roots.iter().cloned().fold(0.0, f64::max);
        if mx == 0.0 {
            return 0.0;
        }
        let s: f64 = roots.iter().map(|r| (r / mx).powf(l2)).sum();
        mx * s.powf(1.0 / l2)
    }

    /// Builds the kernel evaluator; Monte Carlo groups simulate their point cloud here.
    pub fn kernel(&self, opts: &KernelOpts) -> Result<GroupKernel> {
        let mc = match self.kind {
            KernelKind::MonteCarlo => Some(Arc::new(self.mc_cloud(opts)?)),
            _ => None,
        };
        Ok(GroupKernel {
            kind: self.kind,
            n_total: self.N(),
            q: self.Q(),
            weights: self.weights.clone(),
            mc,
        })
    }

    /// Monte Carlo evaluator regardless of the catalog kind, for cross-checks.
    pub fn monte_carlo_kernel(&self, opts: &KernelOpts) -> Result<GroupKernel> {
        Ok(GroupKernel {
            kind: KernelKind::MonteCarlo,
            n_total: self.N(),
            q: self.Q(),
            weights: self.weights.clone(),
            mc: Some(Arc::new(self.mc_cloud(opts)?)),
        })
    }

    /// KDE of the time-1 law; other times follow by dilation.
    pub fn mc_cloud(&self, opts: &KernelOpts) -> Result<Kde> {
        let pts = simulate(&self.control, 1.0, &opts.sde)?;
        Ok(Kde::new(pts, opts.kde_bandwidth))
    }
}

fn mul_in(law: &[Poly], u: &[Poly], v: &[Poly]) -> Vec<Poly> {
    let args: Vec<Poly> = u.iter().chain(v).cloned().collect();
    law.iter().map(|c| c.substitute(&args)).collect()
}

fn check_kind(kind: KernelKind, weights: &[u32], law: &[Poly], gens: &[PolyVectorField], n: usize) -> Result<()> {
    let nt = weights.len();
    match kind {
        KernelKind::MonteCarlo => Ok(()),
        KernelKind::Euclidean => {
            let abelian = (0..nt).all(|k| law[k] == Poly::var(2 * nt, k).add(&Poly::var(2 * nt, nt + k)));
            let coords = gens.len() == nt && gens.iter().enumerate().all(|(j, g)| *g == PolyVectorField::coordinate(nt, j));
            if nt == n && abelian && coords {
                Ok(())
            } else {
                Err(Error::Group("euclidean kernel requires R^N with coordinate generators".into()))
            }
        }
        KernelKind::Heisenberg => {
            let z2 = PolyVectorField::new(vec![Poly::zero(3), Poly::var(3, 0), Poly::one(3)]);
            let ok = nt == 3 && gens.len() == 2 && gens[0] == PolyVectorField::coordinate(3, 0) && gens[1] == z2;
            if ok {
                Ok(())
            } else {
                Err(Error::Group("heisenberg kernel requires Z1 = d/du1, Z2 = u1 d/du2 + d/du3".into()))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct KernelOpts {
    pub sde: SdeOpts,
    pub kde_bandwidth: f64,
}

impl Default for KernelOpts {
    fn default() -> Self {
        KernelOpts {
            sde: SdeOpts::default(),
            kde_bandwidth: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupKernelValue {
    pub value: f64,
    pub abs_error: f64,
    pub method: Method,
}

/// Evaluator of `γ_G(t, u)` for one group.
#[derive(Clone, Debug)]
pub struct GroupKernel {
    kind: KernelKind,
    n_total: usize,
    q: u32,
    weights: Vec<u32>,
    mc: Option<Arc<Kde>>,
}

impl GroupKernel {
    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn method(&self) -> Method {
        match self.kind {
            KernelKind::Euclidean => Method::Exact,
            KernelKind::Heisenberg => Method::Quadrature,
            KernelKind::MonteCarlo => Method::MonteCarlo,
        }
    }

    pub fn eval(&self, t: f64, u: &[f64]) -> GroupKernelValue {
        let method = self.method();
        if t <= 0.0 {
            return GroupKernelValue { value: 0.0, abs_error: 0.0, method };
        }
        let (value, abs_error) = match self.kind {
            KernelKind::Euclidean => {
                let r2: f64 = u.iter().map(|x| x * x).sum();
                let v = (4.0 * std::f64::consts::PI * t).powf(-(self.n_total as f64) / 2.0) * (-r2 / (4.0 * t)).exp();
                (v, v * 4.0 * f64::EPSILON)
            }
            KernelKind::Heisenberg => heisenberg::kernel(t, u),
            KernelKind::MonteCarlo => {
                let s = t.sqrt();
                let scaled: Vec<f64> = u
                    .iter()
                    .zip(&self.weights)
                    .map(|(x, &w)| x / s.powi(w as i32))
                    .collect();
                let (v, e) = self.mc.as_ref().expect("monte-carlo kernel without cloud").density(&scaled);
                let f = t.powf(-(self.q as f64) / 2.0);
                (v * f, e * f)
            }
        };
        GroupKernelValue { value, abs_error, method }
    }

    /// For Monte Carlo kernels, `max |u_k|` outside which `γ_G(t, u) = 0`.
    pub fn support_radii(&self, t: f64) -> Option<Vec<f64>> {
        let mc = self.mc.as_ref()?;
        let s = t.sqrt();
        Some(mc.support_radii().iter().zip(&self.weights).map(|(r, &w)| r * s.powi(w as i32)).collect())
    }

    /// Shorthand for the value alone.
    pub fn value(&self, t: f64, u: &[f64]) -> f64 {
        self.eval(t, u).value
    }
}

/// Outcome of one property of a check suite.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    /// Largest normalized defect; the check passes when it is at most 1.
    pub worst: f64,
    pub tolerance: f64,
    pub witness: Option<String>,
}

impl PropertyCheck {
    /// Folds `(defect, allowance, witness)` rows into one check.
    pub fn from_rows(name: &str, tolerance: f64, rows: impl IntoIterator<Item = (f64, f64, String)>) -> Self {
        let mut worst: f64 = 0.0;
        let mut witness = None;
        let mut passed = true;
        for (defect, allowance, w) in rows {
            let r = if allowance > 0.0 { defect / allowance } else if defect == 0.0 { 0.0 } else { f64::INFINITY };
            let r = if r.is_nan() { f64::INFINITY } else { r };
            if r > worst {
                worst = r;
                if r > 1.0 {
                    witness = Some(w);
                }
            }
            passed &= r <= 1.0;
        }
        PropertyCheck { name: name.to_string(), passed, worst, tolerance, witness }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PropertyOpts {
    pub samples: usize,
    pub seed: u64,
    pub nodes_per_axis: usize,
    pub rays: usize,
    pub symmetry_tol: f64,
    pub scaling_tol: f64,
    pub mass_tol: f64,
    /// Dilation used by the scaling check.
    pub lambda: f64,
}

impl Default for PropertyOpts {
    fn default() -> Self {
        PropertyOpts {
            samples: 100,
            seed: crate::rng::DEFAULT_SEED,
            nodes_per_axis: 41,
            rays: 10,
            symmetry_tol: 1e-3,
            scaling_tol: 5e-3,
            mass_tol: 1e-3,
            lambda: 2.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GroupPropertyReport {
    pub group: String,
    pub method: Method,
    pub mass: f64,
    /// Smallest `c` with `c⁻¹ e^{-c‖u‖²/t} ≤ t^{Q/2} γ ≤ c e^{-‖u‖²/(ct)}` on the samples.
    pub sandwich_c: Option<f64>,
    pub checks: Vec<PropertyCheck>,
    pub passed: bool,
}

/// Sample `(t, u)` with `t ∈ [1/4, 4]` log-uniform and `u = D_{√t} v`, `v` in the unit-weight box `[-2, 2]`.
pub fn property_samples(group: &CarnotGroup, count: usize, seed: u64) -> Vec<(f64, Vec<f64>)> {
    use rand::Rng;
    (0..count)
        .map(|i| {
            let mut rng = crate::rng::stream_rng(seed ^ 0x6b3a_11d0, i as u64);
            let t = 4f64.powf(rng.random_range(-1.0..1.0));
            let v: Vec<f64> = (0..group.N()).map(|_| rng.random_range(-2.0..2.0)).collect();
            (t, group.dilate(t.sqrt(), &v))
        })
        .collect()
}

/// `∫ γ_G(t, u) du` on a sinh-mapped tensor trapezoid rule.
pub fn group_mass(group: &CarnotGroup, gk: &GroupKernel, t: f64, nodes_per_axis: usize) -> f64 {
    let zero = vec![0.0; group.N()];
    let scales = group.control().reach_radii(&zero, t.sqrt());
    let axes: Vec<Vec<(f64, f64)>> = scales.iter().map(|&s| crate::quadrature::sinh_rule(0.0, s, 4.2, nodes_per_axis)).collect();
    let rule = crate::quadrature::tensor_rule(&axes);
    use rayon::prelude::*;
    let vals: Vec<f64> = rule.par_iter().map(|(u, w)| w * gk.value(t, u)).collect();
    crate::rng::pairwise_sum(&vals)
}

/// Nonnegativity, vanishing for `t ≤ 0`, inversion symmetry, scaling,
/// unit mass, decay along rays and a fitted Gaussian sandwich in the gauge.
pub fn group_kernel_property_suite(group: &CarnotGroup, gk: &GroupKernel, opts: &PropertyOpts) -> Result<GroupPropertyReport> {
    use rayon::prelude::*;
    let q = group.Q() as f64;
    let samples = property_samples(group, opts.samples, opts.seed);
    let evals: Vec<(GroupKernelValue, GroupKernelValue, GroupKernelValue, GroupKernelValue)> = samples
        .par_iter()
        .map(|(t, u)| {
            let lam = opts.lambda;
            (gk.eval(*t, u), gk.eval(*t, &group.inverse(u)), gk.eval(lam * lam * t, &group.dilate(lam, u)), gk.eval(-*t, u))
        })
        .collect();
    let mut checks = Vec::new();
    checks.push(PropertyCheck::from_rows(
        "nonnegative",
        0.0,
        samples.iter().zip(&evals).map(|((t, u), e)| (if e.0.value >= 0.0 { 0.0 } else { 1.0 }, 1.0, format!("t={t}, u={u:?}"))),
    ));
    checks.push(PropertyCheck::from_rows(
        "vanishes for t <= 0",
        0.0,
        samples.iter().zip(&evals).map(|((t, u), e)| (if e.3.value == 0.0 { 0.0 } else { 2.0 }, 1.0, format!("t={}, u={u:?}", -t))),
    ));
    checks.push(PropertyCheck::from_rows(
        "inversion symmetry",
        opts.symmetry_tol,
        samples.iter().zip(&evals).map(|((t, u), e)| {
            let (a, b) = (e.0, e.1);
            let allow = opts.symmetry_tol * a.value.max(b.value) + a.abs_error + b.abs_error;
            ((a.value - b.value).abs(), allow, format!("t={t}, u={u:?}: {} vs {}", a.value, b.value))
        }),
    ));
    let lf = opts.lambda.powf(-q);
    checks.push(PropertyCheck::from_rows(
        "scaling",
        opts.scaling_tol,
        samples.iter().zip(&evals).map(|((t, u), e)| {
            let (a, b) = (e.2, e.0);
            let allow = opts.scaling_tol * a.value.max(lf * b.value) + a.abs_error + lf * b.abs_error;
            ((a.value - lf * b.value).abs(), allow, format!("t={t}, u={u:?}: {} vs {}", a.value, lf * b.value))
        }),
    ));
    let mass = group_mass(group, gk, 1.0, opts.nodes_per_axis);
    checks.push(PropertyCheck::from_rows("unit mass", opts.mass_tol, [((mass - 1.0).abs(), opts.mass_tol, format!("mass={mass}"))]));

    // Decay along dilation rays through points of the unit gauge sphere.
    let dirs: Vec<Vec<f64>> = property_samples(group, opts.rays, opts.seed ^ 0xdeca)
        .into_iter()
        .map(|(_, v)| {
            let g = group.homogeneous_norm(&v).max(1e-12);
            group.dilate(1.0 / g, &v)
        })
        .collect();
    let peak = gk.value(1.0, &vec![0.0; group.N()]);
    let radii: Vec<f64> = (0..=12).map(|i| 2.0 + 0.5 * i as f64).collect();
    let decay_rows: Vec<(f64, f64, String)> = dirs
        .par_iter()
        .map(|w| {
            let vals: Vec<GroupKernelValue> = radii.iter().map(|&s| gk.eval(1.0, &group.dilate(s, w))).collect();
            let mut defect: f64 = 0.0;
            for k in 1..vals.len() {
                let rise = vals[k].value - vals[k - 1].value - vals[k].abs_error - vals[k - 1].abs_error;
                defect = defect.max(rise.max(0.0) / peak);
            }
            let tail = vals.last().map(|v| v.value).unwrap_or(0.0) / peak;
            let d = if tail > 1e-2 { 1.0 + tail } else { 0.0 };
            (defect.max(d), f64::MIN_POSITIVE, format!("ray {w:?}: tail ratio {tail}"))
        })
        .collect();
    checks.push(PropertyCheck::from_rows("decay along rays", 0.0, decay_rows));

    // Gaussian sandwich in the gauge; samples with underflowed values only constrain the upper side.
    let mut c_max: f64 = 1.0;
    let mut finite = true;
    for ((t, u), e) in samples.iter().zip(&evals) {
        let r = e.0.value * t.powf(q / 2.0);
        let g = group.homogeneous_norm(u);
        let s = g * g / t;
        let (lo, hi) = crate::envelopes::rho_requirements(r, s);
        if e.0.value > 0.0 {
            match lo {
                Some(v) => c_max = c_max.max(v),
                None => finite = false,
            }
        }
        match hi {
            Some(v) => c_max = c_max.max(v),
            None => finite = false,
        }
    }
    let sandwich_c = finite.then_some(c_max);
    checks.push(PropertyCheck::from_rows(
        "gaussian sandwich",
        0.0,
        [(if finite { 0.0 } else { 1.0 }, f64::MIN_POSITIVE, "no finite constant".to_string())],
    ));
    let passed = checks.iter().all(|c| c.passed);
    Ok(GroupPropertyReport { group: group.name().to_string(), method: gk.method(), mass, sandwich_c, checks, passed })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CrossOracleRow {
    pub t: f64,
    pub u: Vec<f64>,
    pub reference: f64,
    pub reference_error: f64,
    pub monte_carlo: f64,
    pub monte_carlo_error: f64,
    pub agree: bool,
}

/// Reference evaluator against the Monte Carlo evaluator at `count` bulk points (gauge ≤ 1.5 at `t = 1`).
pub fn cross_oracle_check(group: &CarnotGroup, reference: &GroupKernel, mc: &GroupKernel, count: usize, seed: u64) -> Vec<CrossOracleRow> {
    use rand::Rng;
    (0..count)
        .map(|i| {
            let mut rng = crate::rng::stream_rng(seed ^ 0x0c70_55ed, i as u64);
            let v: Vec<f64> = (0..group.N()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = group.homogeneous_norm(&v).max(1e-12);
            let s = 1.5 * rng.random_range(0.0..1.0f64).powf(1.0 / group.Q() as f64);
            let u = group.dilate(s / g, &v);
            let a = reference.eval(1.0, &u);
            let b = mc.eval(1.0, &u);
            let agree = (a.value - b.value).abs() <= a.abs_error + b.abs_error;
            CrossOracleRow { t: 1.0, u, reference: a.value, reference_error: a.abs_error, monte_carlo: b.value, monte_carlo_error: b.abs_error, agree }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn catalog_groups_validate() {
        let h = catalog::group("grushin").unwrap();
        assert_eq!((h.N(), h.p(), h.Q(), h.q_star()), (3, 1, 4, 1));
        let e = catalog::group("grushin3").unwrap();
        assert_eq!((e.N(), e.p(), e.Q(), e.q_star()), (4, 2, 7, 3));
        let eu = catalog::group("euclid2").unwrap();
        assert_eq!((eu.N(), eu.p(), eu.Q()), (2, 0, 2));
    }

    #[test]
    fn rejects_non_associative_law() {
        let sys = catalog::system("grushin").unwrap();
        let doc = catalog::group_json("grushin").unwrap().replace(
            r#"{"coeff": "1", "monomial": [1, 0, 0, 0, 0, 1]}"#,
            r#"{"coeff": "1", "monomial": [1, 0, 0, 0, 0, 1]}, {"coeff": "1", "monomial": [1, 0, 0, 1, 0, 0]}"#,
        );
        assert!(matches!(CarnotGroup::from_json(&doc, sys), Err(Error::Group(_))));
    }

    #[test]
    fn rejects_wrong_projection() {
        let sys = catalog::system("grushin3").unwrap();
        let doc = catalog::group_json("grushin").unwrap();
        assert!(CarnotGroup::from_json(doc, sys).is_err());
    }

    #[test]
    fn numeric_identities() {
        let mut rng = crate::rng::stream_rng(1, 0);
        for name in catalog::SYSTEM_NAMES {
            let g = catalog::group(name).unwrap();
            let nt = g.N();
            for _ in 0..100 {
                let u: Vec<f64> = (0..nt).map(|_| rng.random_range(-2.0..2.0)).collect();
                let v: Vec<f64> = (0..nt).map(|_| rng.random_range(-2.0..2.0)).collect();
                let w: Vec<f64> = (0..nt).map(|_| rng.random_range(-2.0..2.0)).collect();
                let zero = vec![0.0; nt];
                assert_eq!(g.mul(&u, &zero), u);
                assert_eq!(g.mul(&zero, &u), u);
                let e = g.mul(&u, &g.inverse(&u));
                assert!(e.iter().all(|x| x.abs() < 1e-12));
                let l = g.mul(&g.mul(&u, &v), &w);
                let r = g.mul(&u, &g.mul(&v, &w));
                for (a, b) in l.iter().zip(&r) {
                    assert_relative_eq!(a, b, epsilon = 1e-12);
                }
                for lam in [0.5, 2.0] {
                    let lhs = g.dilate(lam, &g.mul(&u, &v));
                    let rhs = g.mul(&g.dilate(lam, &u), &g.dilate(lam, &v));
                    for (a, b) in lhs.iter().zip(&rhs) {
                        assert_relative_eq!(a, b, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn gauge_norm_properties() {
        let g = catalog::group("grushin3").unwrap();
        let mut rng = crate::rng::stream_rng(2, 0);
        assert_eq!(g.homogeneous_norm(&[0.0; 4]), 0.0);
        for _ in 0..50 {
            let u: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert_relative_eq!(g.homogeneous_norm(&g.dilate(2.0, &u)), 2.0 * g.homogeneous_norm(&u), max_relative = 1e-12);
        }
        let eu = catalog::group("euclid2").unwrap();
        for k in 0..64 {
            let th = k as f64 * std::f64::consts::TAU / 64.0;
            let v = eu.homogeneous_norm(&[th.cos(), th.sin()]);
            assert!((0.7..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn euclidean_kernel_value() {
        let g = catalog::group("euclid2").unwrap();
        let k = g.kernel(&KernelOpts::default()).unwrap();
        assert_relative_eq!(
            k.value(1.0, &[1.0, 0.0]),
            (-0.25f64).exp() / (4.0 * std::f64::consts::PI),
            max_relative = 1e-14
        );
        assert_eq!(k.value(-1.0, &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn heisenberg_property_suite_passes() {
        let g = catalog::group("grushin").unwrap();
        let k = g.kernel(&KernelOpts::default()).unwrap();
        let rep = group_kernel_property_suite(&g, &k, &PropertyOpts { samples: 30, rays: 4, ..Default::default() }).unwrap();
        assert!(rep.passed, "{:#?}", rep.checks);
        assert!((rep.mass - 1.0).abs() < 1e-3);
    }

    #[test]
    fn check_rows_fold() {
        let c = PropertyCheck::from_rows("x", 0.1, [(0.05, 0.1, "a".to_string()), (0.2, 0.1, "b".to_string())]);
        assert!(!c.passed);
        assert_eq!(c.witness.as_deref(), Some("b"));
        assert_eq!(c.worst, 2.0);
    }
}
