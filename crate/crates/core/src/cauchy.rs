//! The Cauchy problem `Hu = 0`, `u(0, ·) = f` for data of exponential growth, solved by
//! `u(t, x) = ∫ γ(t, x, y) f(y) dy`.

use std::collections::BTreeMap;
use std::sync::Mutex;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::ControlSystem;
use crate::kernel::{caloric_residual, HeatKernel, ResidualReport};
use crate::metric::{cc_distance, DistanceOpts};
use crate::quadrature::gauss_legendre;
use crate::rng::pairwise_sum;

/// `ρ_X(y) = d_X(0, y)`, exact for constant fields and otherwise interpolated on the unit gauge sphere.
#[derive(Debug)]
pub struct RadialGauge {
    weights: Vec<u32>,
    lcm: u32,
    kind: GaugeKind,
}

#[derive(Debug)]
enum GaugeKind {
    /// `ρ² = yᵀ M y` with `M = (A Aᵀ)^{-1}`.
    Quadratic(DMatrix<f64>),
    /// Values of `ρ` at equally spaced angles on the unit gauge sphere (`n = 2`).
    Table(Vec<f64>),
    Direct { cs: ControlSystem, opts: DistanceOpts, cache: Mutex<BTreeMap<Vec<i64>, f64>> },
}

const GAUGE_ANGLES: usize = 256;

impl RadialGauge {
    pub fn new(cs: &ControlSystem, opts: &DistanceOpts) -> Result<Self> {
        let weights = cs.weights().to_vec();
        let lcm = weights.iter().fold(1u32, |a, &b| a / gcd(a, b) * b);
        let n = cs.dim();
        let kind = if weights.iter().all(|&w| w == 1) {
            let mut a = DMatrix::zeros(n, cs.m());
            let mut col = vec![0.0; n];
            for (j, f) in cs.fields().iter().enumerate() {
                f.eval_into(&vec![0.0; n], &mut col);
                for k in 0..n {
                    a[(k, j)] = col[k];
                }
            }
            let g = &a * a.transpose();
            let inv = g.try_inverse().ok_or_else(|| Error::numerical("constant fields do not span"))?;
            GaugeKind::Quadratic(inv)
        } else if n == 2 {
            let pts: Vec<Vec<f64>> = (0..GAUGE_ANGLES).map(|i| sphere_point(&weights, lcm, angle(i))).collect();
            let vals = pts
                .par_iter()
                .map(|y| Ok(cc_distance(cs, &[0.0, 0.0], y, opts)?.upper))
                .collect::<Result<Vec<f64>>>()?;
            GaugeKind::Table(vals)
        } else {
            GaugeKind::Direct { cs: cs.clone(), opts: *opts, cache: Mutex::new(BTreeMap::new()) }
        };
        Ok(RadialGauge { weights, lcm, kind })
    }

    /// `N(y) = (Σ |y_k|^{2L/σ_k})^{1/2L}`.
    pub fn homogeneous_norm(&self, y: &[f64]) -> f64 {
        let l2 = 2.0 * self.lcm as f64;
        let roots: Vec<f64> = y.iter().zip(&self.weights).map(|(v, &w)| v.abs().powf(1.0 / w as f64)).collect();
        let mx = roots.iter().cloned().fold(0.0, f64::max);
        if mx == 0.0 {
            return 0.0;
        }
        mx * roots.iter().map(|r| (r / mx).powf(l2)).sum::<f64>().powf(1.0 / l2)
    }

    pub fn rho(&self, y: &[f64]) -> f64 {
        match &self.kind {
            GaugeKind::Quadratic(m) => {
                let v = nalgebra::DVector::from_column_slice(y);
                (v.transpose() * m * &v)[(0, 0)].max(0.0).sqrt()
            }
            GaugeKind::Table(vals) => {
                let r = self.homogeneous_norm(y);
                if r == 0.0 {
                    return 0.0;
                }
                let l = self.lcm as f64;
                let c = (y[0] / r.powi(self.weights[0] as i32)).clamp(-1.0, 1.0);
                let s = (y[1] / r.powi(self.weights[1] as i32)).clamp(-1.0, 1.0);
                let cx = c.signum() * c.abs().powf(l / self.weights[0] as f64);
                let sx = s.signum() * s.abs().powf(l / self.weights[1] as f64);
                let phi = sx.atan2(cx).rem_euclid(std::f64::consts::TAU);
                r * periodic_cubic(vals, phi / std::f64::consts::TAU * vals.len() as f64)
            }
            GaugeKind::Direct { cs, opts, cache } => {
                let key: Vec<i64> = y.iter().map(|v| (v * 1e9).round() as i64).collect();
                if let Some(v) = cache.lock().expect("gauge cache").get(&key) {
                    return *v;
                }
                let v = cc_distance(cs, &vec![0.0; y.len()], y, opts).map(|r| r.upper).unwrap_or(f64::NAN);
                cache.lock().expect("gauge cache").insert(key, v);
                v
            }
        }
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn angle(i: usize) -> f64 {
    std::f64::consts::TAU * i as f64 / GAUGE_ANGLES as f64
}

/// Point of `{N = 1}` with `|y_k|^{2L/σ_k} = (cos φ)², (sin φ)²`.
fn sphere_point(weights: &[u32], lcm: u32, phi: f64) -> Vec<f64> {
    let l = lcm as f64;
    let (s, c) = phi.sin_cos();
    vec![c.signum() * c.abs().powf(weights[0] as f64 / l), s.signum() * s.abs().powf(weights[1] as f64 / l)]
}

/// Catmull-Rom interpolation of periodic samples at fractional index `u`.
fn periodic_cubic(v: &[f64], u: f64) -> f64 {
    let n = v.len() as i64;
    let i = u.floor() as i64;
    let f = u - i as f64;
    let at = |k: i64| v[k.rem_euclid(n) as usize];
    let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    p1 + 0.5 * f * (p2 - p0 + f * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + f * (3.0 * (p1 - p2) + p3 - p0)))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum InitialDatum {
    Constant { value: f64 },
    /// `height` on the Euclidean disc of radius `inner` around `center`, smoothly 0 beyond `outer`.
    Bump { center: Vec<f64>, inner: f64, outer: f64, height: f64 },
    /// `exp(μ ρ_X²)`; `μ ≤ 0` is bounded.
    ExpQuadratic { mu: f64 },
    /// `exp(μ ρ_X^α)`.
    ExpPower { alpha: f64, mu: f64 },
    Combination { terms: Vec<(f64, InitialDatum)> },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum GrowthClass {
    Bounded,
    QuadraticExponential { mu: f64 },
    SubquadraticExponential { alpha: f64, mu: f64 },
}

impl InitialDatum {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialDatum::Bump { inner, outer, .. } if !(0.0 <= *inner && inner < outer) => {
                Err(Error::Config("bump needs 0 <= inner < outer".into()))
            }
            InitialDatum::ExpPower { alpha, .. } if !(*alpha > 0.0 && *alpha <= 2.0) => {
                Err(Error::Config(format!("exp-power exponent must lie in (0, 2], got {alpha}")))
            }
            InitialDatum::Combination { terms } => terms.iter().try_for_each(|(_, d)| d.validate()),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, rho: &RadialGauge, y: &[f64]) -> f64 {
        match self {
            InitialDatum::Constant { value } => *value,
            InitialDatum::Bump { center, inner, outer, height } => {
                let r = y.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                height * plateau(r, *inner, *outer)
            }
            InitialDatum::ExpQuadratic { mu } => {
                let p = rho.rho(y);
                (mu * p * p).exp()
            }
            InitialDatum::ExpPower { alpha, mu } => (mu * rho.rho(y).powf(*alpha)).exp(),
            InitialDatum::Combination { terms } => terms.iter().map(|(c, d)| c * d.eval(rho, y)).sum(),
        }
    }

    /// `Some(ball)` when `f` vanishes outside the Euclidean ball.
    fn support(&self) -> Option<(Vec<f64>, f64)> {
        match self {
            InitialDatum::Bump { center, outer, .. } => Some((center.clone(), *outer)),
            InitialDatum::Constant { value } if *value == 0.0 => Some((Vec::new(), 0.0)),
            _ => None,
        }
    }

    pub fn growth_class(&self) -> GrowthClass {
        match self {
            InitialDatum::Constant { .. } | InitialDatum::Bump { .. } => GrowthClass::Bounded,
            InitialDatum::ExpQuadratic { mu } if *mu <= 0.0 => GrowthClass::Bounded,
            InitialDatum::ExpQuadratic { mu } => GrowthClass::QuadraticExponential { mu: *mu },
            InitialDatum::ExpPower { mu, .. } if *mu <= 0.0 => GrowthClass::Bounded,
            InitialDatum::ExpPower { alpha, mu } if *alpha >= 2.0 => GrowthClass::QuadraticExponential { mu: *mu },
            InitialDatum::ExpPower { alpha, mu } => GrowthClass::SubquadraticExponential { alpha: *alpha, mu: *mu },
            InitialDatum::Combination { terms } => terms.iter().map(|(_, d)| d.growth_class()).fold(GrowthClass::Bounded, worse),
        }
    }
}

fn worse(a: GrowthClass, b: GrowthClass) -> GrowthClass {
    use GrowthClass::*;
    match (a, b) {
        (QuadraticExponential { mu: m1 }, QuadraticExponential { mu: m2 }) => QuadraticExponential { mu: m1.max(m2) },
        (q @ QuadraticExponential { .. }, _) | (_, q @ QuadraticExponential { .. }) => q,
        (SubquadraticExponential { alpha: a1, mu: m1 }, SubquadraticExponential { alpha: a2, mu: m2 }) => {
            if a1 > a2 || (a1 == a2 && m1 >= m2) {
                SubquadraticExponential { alpha: a1, mu: m1 }
            } else {
                SubquadraticExponential { alpha: a2, mu: m2 }
            }
        }
        (s @ SubquadraticExponential { .. }, _) | (_, s @ SubquadraticExponential { .. }) => s,
        _ => Bounded,
    }
}

/// Smooth step: 1 on `[0, a]`, 0 on `[b, ∞)`.
fn plateau(r: f64, a: f64, b: f64) -> f64 {
    if r <= a {
        return 1.0;
    }
    if r >= b {
        return 0.0;
    }
    let u = (r - a) / (b - a);
    let e = |s: f64| if s <= 0.0 { 0.0 } else { (-1.0 / s).exp() };
    e(1.0 - u) / (e(1.0 - u) + e(u))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CauchyOpts {
    /// Solve only for `t ≤ fraction · T/μ` with `T = 1/ϱ`.
    pub horizon_fraction: f64,
    /// Fitted two-sided envelope constant ϱ; needed for quadratic-exponential data.
    pub envelope_rho: Option<f64>,
    /// Trapezoid step in the sinh variable.
    pub step: f64,
    /// Innermost truncation in the sinh variable; each further level doubles the box.
    pub vmax: f64,
    pub levels: usize,
}

impl Default for CauchyOpts {
    fn default() -> Self {
        CauchyOpts { horizon_fraction: 0.5, envelope_rho: None, step: 0.35, vmax: 3.5, levels: 3 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CauchyValue {
    pub value: f64,
    pub abs_error: f64,
    /// Integral at each truncation level (box doubling).
    pub levels: Vec<f64>,
    pub convergent: bool,
    pub nodes: usize,
}

/// Quadrature nodes with their weights and truncation level.
#[derive(Clone, Debug)]
pub struct NodeSet {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub level: Vec<usize>,
    /// Node also belongs to the rule with twice the step.
    pub coarse: Vec<bool>,
    pub levels: usize,
}

pub struct CauchySolver<'a> {
    kernel: &'a HeatKernel,
    gauge: RadialGauge,
    opts: CauchyOpts,
}

impl<'a> CauchySolver<'a> {
    pub fn new(kernel: &'a HeatKernel, opts: CauchyOpts) -> Result<Self> {
        let gauge = RadialGauge::new(kernel.base(), &DistanceOpts::default())?;
        Ok(CauchySolver { kernel, gauge, opts })
    }

    pub fn gauge(&self) -> &RadialGauge {
        &self.gauge
    }

    pub fn kernel(&self) -> &HeatKernel {
        self.kernel
    }

    pub fn opts(&self) -> &CauchyOpts {
        &self.opts
    }

    /// Largest admissible time, or `None` when every `t > 0` is admissible.
    pub fn horizon(&self, datum: &InitialDatum) -> Result<Option<f64>> {
        match datum.growth_class() {
            GrowthClass::QuadraticExponential { mu } => {
                let rho = self.opts.envelope_rho.ok_or_else(|| {
                    Error::Config("quadratic-exponential data need a fitted envelope constant".into())
                })?;
                Ok(Some(self.opts.horizon_fraction / (rho * mu)))
            }
            _ => Ok(None),
        }
    }

    /// Sinh-mapped grid around `x`, scaled by the reachable box of radius `√t`.
    pub fn nodes(&self, datum: &InitialDatum, t: f64, x: &[f64]) -> NodeSet {
        // Subquadratic growth moves the integrand's peak out to u* √t, where
        // u*^(2-α) = 2αμ t^(α/2) against a unit Gaussian profile.
        let widen = match datum.growth_class() {
            GrowthClass::SubquadraticExponential { alpha, mu } if alpha < 2.0 => {
                1.0 + (2.0 * alpha * mu * t.powf(alpha / 2.0)).powf(1.0 / (2.0 - alpha)) / 4.0
            }
            _ => 1.0,
        };
        let scales = self.kernel.base().reach_radii(x, widen * t.sqrt());
        let support = datum.support();
        // Compact data only use the nodes inside the support, so refine there.
        let h = if support.is_some() { self.opts.step / 3.0 } else { self.opts.step };
        let vtop = self.opts.vmax + (self.opts.levels.max(1) - 1) as f64 * std::f64::consts::LN_2;
        let half = (vtop / h).floor() as i64;
        let level_of = |v: f64| -> usize {
            if v.abs() <= self.opts.vmax + 1e-12 {
                0
            } else {
                ((v.abs() - self.opts.vmax) / std::f64::consts::LN_2 - 1e-12).ceil() as usize
            }
        };
        let axes: Vec<Vec<(f64, f64, usize)>> = scales
            .iter()
            .zip(x)
            .map(|(&s, &c)| {
                (-half..=half)
                    .map(|i| {
                        let v = i as f64 * h;
                        (c + s * v.sinh(), h * s * v.cosh(), level_of(v))
                    })
                    .collect()
            })
            .collect();
        let mut set = NodeSet {
            points: Vec::new(),
            weights: Vec::new(),
            level: Vec::new(),
            coarse: Vec::new(),
            levels: self.opts.levels.max(1),
        };
        let mut idx = vec![0usize; axes.len()];
        'outer: loop {
            let p: Vec<f64> = idx.iter().enumerate().map(|(k, &i)| axes[k][i].0).collect();
            let keep = match &support {
                Some((c, r)) => !c.is_empty() && p.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < r * r,
                None => true,
            };
            if keep {
                set.weights.push(idx.iter().enumerate().map(|(k, &i)| axes[k][i].1).product());
                set.level.push(idx.iter().enumerate().map(|(k, &i)| axes[k][i].2).max().unwrap_or(0));
                set.coarse.push(idx.iter().all(|&i| (i as i64 - half) % 2 == 0));
                set.points.push(p);
            }
            for k in 0..axes.len() {
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    continue 'outer;
                }
                idx[k] = 0;
            }
            break;
        }
        set
    }

    /// `u(t, x)` on a given node set, with level sums and kernel error.
    pub fn solve_on(&self, datum: &InitialDatum, nodes: &NodeSet, t: f64, x: &[f64]) -> Result<CauchyValue> {
        let contrib = nodes
            .points
            .par_iter()
            .zip(&nodes.weights)
            .zip(&nodes.level)
            .map(|((y, w), &l)| {
                let f = datum.eval(&self.gauge, y);
                if f == 0.0 {
                    return Ok((l, 0.0, 0.0));
                }
                let k = self.kernel.saturate(t, x, y)?;
                if k.value == 0.0 && k.abs_error == 0.0 {
                    // Underflowed kernel against an overflowed datum would give 0 * inf.
                    return Ok((l, 0.0, 0.0));
                }
                Ok((l, w * k.value * f, w * k.abs_error * f.abs()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut per_level = vec![Vec::new(); nodes.levels];
        for &(l, v, _) in &contrib {
            per_level[l.min(nodes.levels - 1)].push(v);
        }
        let mut levels = Vec::with_capacity(nodes.levels);
        let mut acc = 0.0;
        for vals in &per_level {
            acc += pairwise_sum(vals);
            levels.push(acc);
        }
        let kerr: f64 = contrib.iter().map(|c| c.2).sum();
        let value = acc;
        let scale = (1u64 << x.len()) as f64;
        let coarse: Vec<f64> = contrib.iter().zip(&nodes.coarse).filter(|(_, &c)| c).map(|(c, _)| scale * c.1).collect();
        let discretization = (pairwise_sum(&coarse) - value).abs();
        let (tail, convergent) = tail_check(&levels);
        if !value.is_finite() {
            return Ok(CauchyValue { value, abs_error: f64::INFINITY, levels, convergent: false, nodes: nodes.points.len() });
        }
        Ok(CauchyValue { value, abs_error: tail + kerr + discretization, levels, convergent, nodes: nodes.points.len() })
    }

    /// Solution value without the horizon and divergence checks.
    pub fn solve_raw(&self, datum: &InitialDatum, t: f64, x: &[f64]) -> Result<CauchyValue> {
        datum.validate()?;
        if t <= 0.0 {
            return Err(Error::Config(format!("solution time must be positive, got {t}")));
        }
        let nodes = self.nodes(datum, t, x);
        self.solve_on(datum, &nodes, t, x)
    }

    pub fn solve(&self, datum: &InitialDatum, t: f64, x: &[f64]) -> Result<CauchyValue> {
        if let Some(h) = self.horizon(datum)? {
            if t > h {
                return Err(Error::HorizonExceeded { t, horizon: h });
            }
        }
        let v = self.solve_raw(datum, t, x)?;
        if !v.convergent {
            return Err(Error::numerical(format!(
                "tail does not shrink under truncation doubling at t={t}, x={x:?} (levels {:?}); datum outside its declared class?",
                v.levels
            )));
        }
        Ok(v)
    }

    pub fn initial_trace_check(&self, datum: &InitialDatum, x: &[f64], times: &[f64], tol: f64) -> Result<TraceReport> {
        if times.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("trace times must decrease".into()));
        }
        let target = datum.eval(&self.gauge, x);
        let errors = times
            .iter()
            .map(|&t| Ok((self.solve(datum, t, x)?.value - target).abs()))
            .collect::<Result<Vec<f64>>>()?;
        let last = *errors.last().unwrap_or(&f64::NAN);
        // Quadrature noise below the tolerance does not count against monotonicity.
        let decreasing = errors.windows(2).all(|w| w[1] <= w[0] + 0.1 * tol);
        Ok(TraceReport { x: x.to_vec(), target, times: times.to_vec(), errors, decreasing, converged: last <= tol })
    }

    /// Caloric residual of the solution on the node set fixed at each probe.
    pub fn residual_suite(&self, datum: &InitialDatum, probes: &[(f64, Vec<f64>)], steps: &[f64]) -> Result<ResidualSuite> {
        let mut reports = Vec::new();
        for (t, x) in probes {
            if let Some(h) = self.horizon(datum)? {
                let hmax = steps.iter().cloned().fold(0.0, f64::max);
                if t + hmax * hmax > h {
                    return Err(Error::Config(format!("stencil at t={t} leaves the existence strip (0, {h})")));
                }
            }
            let nodes = self.nodes(datum, *t, x);
            let u = |s: f64, z: &[f64]| self.solve_on(datum, &nodes, s, z).map(|v| v.value).unwrap_or(f64::NAN);
            reports.push(caloric_residual(self.kernel.base(), &u, *t, x, steps, -1.0));
        }
        let max_residual = reports.iter().map(|r| r.residuals.last().copied().unwrap_or(0.0).abs()).fold(0.0, f64::max);
        Ok(ResidualSuite { max_residual, reports })
    }

    /// `cauchy_solve` across a time grid for subquadratic data.
    pub fn global_time_check(&self, datum: &InitialDatum, x: &[f64], times: &[f64]) -> Result<GlobalTimeReport> {
        if !matches!(datum.growth_class(), GrowthClass::SubquadraticExponential { .. } | GrowthClass::Bounded) {
            return Err(Error::Config("global-in-time check needs a subquadratic datum".into()));
        }
        let rows = times
            .iter()
            .map(|&t| {
                let v = self.solve_raw(datum, t, x)?;
                Ok(GlobalTimeRow { t, value: v.value, abs_error: v.abs_error, levels: v.levels, convergent: v.convergent })
            })
            .collect::<Result<Vec<_>>>()?;
        let all_finite = rows.iter().all(|r| r.value.is_finite() && r.convergent);
        Ok(GlobalTimeReport { x: x.to_vec(), rows, all_finite })
    }
}

/// Last increment and whether increments shrink geometrically.
fn tail_check(levels: &[f64]) -> (f64, bool) {
    let k = levels.len();
    if k < 2 {
        return (0.0, true);
    }
    let last = levels[k - 1];
    let d2 = (levels[k - 1] - levels[k - 2]).abs();
    if k < 3 {
        return (d2, d2 <= 1e-8 * last.abs());
    }
    let d1 = (levels[k - 2] - levels[k - 3]).abs();
    let ok = d2 <= 1e-10 * last.abs() || d2 <= 0.5 * d1;
    (d2, ok && last.is_finite())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceReport {
    pub x: Vec<f64>,
    pub target: f64,
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
    pub decreasing: bool,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualSuite {
    pub max_residual: f64,
    pub reports: Vec<ResidualReport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GlobalTimeRow {
    pub t: f64,
    pub value: f64,
    pub abs_error: f64,
    pub levels: Vec<f64>,
    pub convergent: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GlobalTimeReport {
    pub x: Vec<f64>,
    pub rows: Vec<GlobalTimeRow>,
    pub all_finite: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub delta: f64,
    pub tau: f64,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub convergent: bool,
}

/// `∫_0^τ ∫_{|x_k| ≤ R^{σ_k}} e^{-δρ²(x)} |u(t,x)| dx dt` at `R, 2R, 4R`.
pub fn uniqueness_class_integral<U>(gauge: &RadialGauge, u: U, delta: f64, tau: f64, r: f64) -> UniquenessReport
where
    U: Fn(f64, &[f64]) -> f64 + Sync,
{
    let radii = vec![r, 2.0 * r, 4.0 * r];
    let (tn, tw) = gauss_legendre(8);
    let times: Vec<(f64, f64)> = tn.iter().zip(&tw).map(|(x, w)| (0.5 * tau * (x + 1.0), 0.5 * tau * w)).collect();
    let (gn, gw) = gauss_legendre(6);
    // Per axis: cells on the shells between consecutive radii, tagged with their level.
    let axes: Vec<Vec<(f64, f64, usize)>> = gauge
        .weights
        .iter()
        .map(|&s| {
            let b: Vec<f64> = radii.iter().map(|r| r.powi(s as i32)).collect();
            let mut segs = vec![(-b[0], b[0], 0usize, 8usize)];
            for l in 1..b.len() {
                segs.push((b[l - 1], b[l], l, 6));
                segs.push((-b[l], -b[l - 1], l, 6));
            }
            let mut nodes = Vec::new();
            for (lo, hi, l, panels) in segs {
                let w = (hi - lo) / panels as f64;
                for p in 0..panels {
                    let a = lo + p as f64 * w;
                    for (x, q) in gn.iter().zip(&gw) {
                        nodes.push((a + 0.5 * w * (x + 1.0), 0.5 * w * q, l));
                    }
                }
            }
            nodes
        })
        .collect();
    let n = axes.len();
    let total: usize = axes.iter().map(|a| a.len()).product();
    let sums: Vec<Vec<f64>> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut rem = flat;
            let mut p = Vec::with_capacity(n);
            let mut w = 1.0;
            let mut lvl = 0;
            for a in &axes {
                let (x, q, l) = a[rem % a.len()];
                rem /= a.len();
                p.push(x);
                w *= q;
                lvl = lvl.max(l);
            }
            let rho = gauge.rho(&p);
            let weight = (-delta * rho * rho).exp();
            let mut out = vec![0.0; 3];
            out[lvl] = times.iter().map(|&(t, wt)| wt * weight * u(t, &p).abs()).sum::<f64>() * w;
            out
        })
        .collect();
    let mut values = Vec::new();
    let mut acc = 0.0;
    for l in 0..3 {
        acc += pairwise_sum(&sums.iter().map(|s| s[l]).collect::<Vec<_>>());
        values.push(acc);
    }
    let (_, convergent) = tail_check(&values);
    let convergent = convergent && values.iter().all(|v| v.is_finite());
    UniquenessReport { delta, tau, radii, values, convergent }
}

/// `∫ |f| e^{-μρ²}` at doubling radii, with `μ` chosen from the declared class.
pub fn growth_probe(gauge: &RadialGauge, datum: &InitialDatum, r: f64) -> UniquenessReport {
    let mu = match datum.growth_class() {
        GrowthClass::QuadraticExponential { mu } => 2.0 * mu,
        _ => 1.0,
    };
    uniqueness_class_integral(gauge, |_, y| datum.eval(gauge, y), mu, 1.0, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_relative_eq;

    fn euclid() -> HeatKernel {
        HeatKernel::catalog("euclid2").unwrap()
    }

    #[test]
    fn constant_datum_is_preserved() {
        let k = euclid();
        let s = CauchySolver::new(&k, CauchyOpts::default()).unwrap();
        for (t, x) in [(0.1, [0.0, 0.0]), (1.0, [2.0, -1.0])] {
            let v = s.solve(&InitialDatum::Constant { value: 1.0 }, t, &x).unwrap();
            assert!((v.value - 1.0).abs() < 1e-5 && (v.value - 1.0).abs() <= v.abs_error, "{v:?}");
        }
    }

    #[test]
    fn exp_quadratic_closed_form() {
        let k = euclid();
        let s = CauchySolver::new(&k, CauchyOpts { envelope_rho: Some(4.0), ..Default::default() }).unwrap();
        let mu = 0.1;
        let d = InitialDatum::ExpQuadratic { mu };
        let x = [0.5, -0.3];
        let v = s.solve(&d, 1.0, &x).unwrap();
        let a = 1.0 - 4.0 * mu;
        let exact = (mu * (x[0] * x[0] + x[1] * x[1]) / a).exp() / a;
        assert!((v.value - exact).abs() <= v.abs_error && v.abs_error < 1e-3 * exact, "{v:?} vs {exact}");
        assert!(matches!(s.solve(&d, 2.6, &x), Err(Error::HorizonExceeded { .. })));
    }

    #[test]
    fn euclidean_gauge_is_exact() {
        let cs = ControlSystem::from_system(&catalog::system("euclid2").unwrap());
        let g = RadialGauge::new(&cs, &DistanceOpts::default()).unwrap();
        assert_relative_eq!(g.rho(&[3.0, 4.0]), 5.0, max_relative = 1e-14);
    }

    #[test]
    fn grushin_gauge_interpolates_distance() {
        let cs = ControlSystem::from_system(&catalog::system("grushin").unwrap());
        let g = RadialGauge::new(&cs, &DistanceOpts::default()).unwrap();
        assert_relative_eq!(g.rho(&[0.0, 1.0]), (2.0 * std::f64::consts::PI).sqrt(), max_relative = 2e-3);
        assert_relative_eq!(g.rho(&[-3.0, 0.0]), 3.0, max_relative = 1e-4);
        let y = [0.7, -1.3];
        let d = cc_distance(&cs, &[0.0, 0.0], &y, &DistanceOpts::default()).unwrap().upper;
        assert_relative_eq!(g.rho(&y), d, max_relative = 1e-3);
        // Homogeneity holds exactly by construction.
        assert_relative_eq!(g.rho(&[1.4, -5.2]), 2.0 * g.rho(&y), max_relative = 1e-12);
    }

    #[test]
    fn plateau_is_smooth_step() {
        assert_eq!(plateau(0.2, 0.3, 0.6), 1.0);
        assert_eq!(plateau(0.7, 0.3, 0.6), 0.0);
        assert_relative_eq!(plateau(0.45, 0.3, 0.6), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn growth_classes() {
        assert_eq!(InitialDatum::ExpQuadratic { mu: -1.0 }.growth_class(), GrowthClass::Bounded);
        assert_eq!(
            InitialDatum::ExpPower { alpha: 2.0, mu: 3.0 }.growth_class(),
            GrowthClass::QuadraticExponential { mu: 3.0 }
        );
        let c = InitialDatum::Combination {
            terms: vec![(1.0, InitialDatum::Constant { value: 1.0 }), (2.0, InitialDatum::ExpPower { alpha: 1.5, mu: 1.0 })],
        };
        assert_eq!(c.growth_class(), GrowthClass::SubquadraticExponential { alpha: 1.5, mu: 1.0 });
        assert!(InitialDatum::ExpPower { alpha: 2.5, mu: 1.0 }.validate().is_err());
    }

    #[test]
    fn weight_integrability_and_divergence() {
        let cs = ControlSystem::from_system(&catalog::system("euclid2").unwrap());
        let g = RadialGauge::new(&cs, &DistanceOpts::default()).unwrap();
        for theta in [0.1, 1.0] {
            let r = uniqueness_class_integral(&g, |_, _| 1.0, theta, 1.0, 2.0);
            assert!(r.convergent, "{r:?}");
        }
        let r = uniqueness_class_integral(&g, |_, _| 1.0, 1.0, 1.0, 2.0);
        assert_relative_eq!(r.values[2], std::f64::consts::PI, max_relative = 1e-6);
        let bad = uniqueness_class_integral(&g, |_, x: &[f64]| (x[0] * x[0] + x[1] * x[1]).powf(1.5).exp(), 0.1, 1.0, 2.0);
        assert!(!bad.convergent);
    }
}
