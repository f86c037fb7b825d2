//! Empirical Gaussian envelopes for the heat kernel and the volume bounds behind them.
//!
//! Every fitted constant is the exact maximum (or minimum) over the sample set of the
//! smallest constant making the inequality hold at that sample.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::ControlSystem;
use crate::group::CarnotGroup;
use crate::kernel::{DerivativeSpec, HeatKernel};
use crate::metric::{ball_member, ball_volume, cc_distance, unit_cloud, DistanceOpts, VolumeEstimate, VolumeOpts};
use crate::rng::stream_rng;
use crate::systems::HomogeneousSystem;

/// Distance and volume oracles with unit-ball volumes cached by normalized center.
#[derive(Debug)]
pub struct Geometry {
    cs: ControlSystem,
    q: u32,
    distance: DistanceOpts,
    volume: VolumeOpts,
    unit_volumes: Mutex<BTreeMap<Vec<i64>, VolumeEstimate>>,
}

impl Geometry {
    pub fn new(sys: &HomogeneousSystem, distance: DistanceOpts, volume: VolumeOpts) -> Self {
        Geometry {
            cs: ControlSystem::from_system(sys),
            q: sys.q(),
            distance,
            volume,
            unit_volumes: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn for_system(sys: &HomogeneousSystem) -> Self {
        Geometry::new(sys, DistanceOpts::default(), VolumeOpts::default())
    }

    pub fn control(&self) -> &ControlSystem {
        &self.cs
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn distance_opts(&self) -> &DistanceOpts {
        &self.distance
    }

    /// Upper bound on `d_X(x, y)` from the optimizer.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x == y {
            return Ok(0.0);
        }
        Ok(cc_distance(&self.cs, x, y, &self.distance)?.upper)
    }

    /// `|B_X(x, ρ)| = ρ^q |B_X(δ_{1/ρ} x, 1)|`.
    pub fn volume(&self, x: &[f64], rho: f64) -> Result<f64> {
        Ok(self.volume_estimate(x, rho)?.estimate)
    }

    pub fn volume_estimate(&self, x: &[f64], rho: f64) -> Result<VolumeEstimate> {
        if !(rho > 0.0) {
            return Err(Error::Config(format!("radius must be positive, got {rho}")));
        }
        let xn = self.cs.dilate(1.0 / rho, x);
        let key: Vec<i64> = xn.iter().map(|v| (v * 1e9).round() as i64).collect();
        let cached = self.unit_volumes.lock().expect("volume cache").get(&key).copied();
        let unit = match cached {
            Some(v) => v,
            None => {
                let v = ball_volume(&self.cs, &xn, 1.0, &self.volume)?;
                if v.estimate <= 0.0 {
                    return Err(Error::numerical(format!("zero volume estimate at {xn:?}")));
                }
                self.unit_volumes.lock().expect("volume cache").insert(key, v);
                v
            }
        };
        let f = rho.powi(self.q as i32);
        Ok(VolumeEstimate {
            estimate: unit.estimate * f,
            ci_halfwidth: unit.ci_halfwidth * f,
            box_volume: unit.box_volume * f,
            ..unit
        })
    }
}

/// `G_a(t, x; s, y) = exp(-a d²/(t-s)) / |B_X(x, √(t-s))|` for `t > s`, else 0.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct GaussFn {
    pub a: f64,
}

impl GaussFn {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::Config(format!("Gaussian parameter must be positive, got {a}")));
        }
        Ok(GaussFn { a })
    }

    /// From precomputed `d_X(x, y)` and `|B_X(x, √(t-s))|`.
    pub fn from_parts(&self, dt: f64, d: f64, volume: f64) -> f64 {
        if dt <= 0.0 {
            return 0.0;
        }
        (-self.a * d * d / dt).exp() / volume
    }

    pub fn eval(&self, geo: &Geometry, t: f64, x: &[f64], s: f64, y: &[f64]) -> Result<f64> {
        let dt = t - s;
        if dt <= 0.0 {
            return Ok(0.0);
        }
        Ok(self.from_parts(dt, geo.distance(x, y)?, geo.volume(x, dt.sqrt())?))
    }
}

/// Sample grid built from dilates of a unit-scale cloud of pairs.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SampleSpec {
    pub samples: usize,
    /// Distinct unit-scale base points.
    pub base_points: usize,
    pub t_min: f64,
    pub t_max: f64,
    /// Largest `d/√t` targeted.
    pub max_ratio: f64,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec { samples: 200, base_points: 6, t_min: 1.0 / 16.0, t_max: 16.0, max_ratio: 6.0, seed: crate::rng::DEFAULT_SEED }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnitPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `d_X(x, y)` at unit scale.
    pub distance: f64,
    /// Sample time; the actual pair is `(δ_{√t} x, δ_{√t} y)`.
    pub t: f64,
}

/// Unit-scale pairs; the first `base_points` are diagonal.
pub fn unit_pairs(geo: &Geometry, spec: &SampleSpec) -> Result<Vec<UnitPair>> {
    if spec.samples == 0 || spec.base_points == 0 {
        return Err(Error::Config("sample grid is empty".into()));
    }
    if !(spec.t_min > 0.0 && spec.t_max >= spec.t_min) {
        return Err(Error::Config("time range must satisfy 0 < t_min <= t_max".into()));
    }
    let cs = geo.control();
    let n = cs.dim();
    let m = cs.m();
    let bases = unit_cloud(n, spec.base_points, spec.seed);
    let golden = 0.618_033_988_749_894_9;
    let plastic = 0.754_877_666_246_692_7;
    let raw: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..spec.samples)
        .map(|j| {
            let x = bases[j % spec.base_points].clone();
            let u = (0.5 + j as f64 * golden).fract();
            let t = spec.t_min * (spec.t_max / spec.t_min).powf(u);
            if j < spec.base_points {
                return (x.clone(), x, t);
            }
            let r = spec.max_ratio * (j as f64 * plastic).fract().max(0.02);
            let mut rng = stream_rng(spec.seed ^ 0xe4e1_0fe5, j as u64);
            let mut dir = || {
                let v: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
                let s = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|a| a * r / s).collect::<Vec<f64>>()
            };
            let a = dir();
            let b = if j % 2 == 0 { a.clone() } else { dir() };
            let y = cs.integrate(&x, &[a, b], &[0.5, 0.5]);
            (x, y, t)
        })
        .collect();
    raw.into_par_iter()
        .map(|(x, y, t)| {
            let distance = geo.distance(&x, &y)?;
            Ok(UnitPair { x, y, distance, t })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub kernel: f64,
    pub kernel_error: f64,
    pub volume: f64,
    pub distance: f64,
    /// Smallest constant making each side hold at this sample.
    pub lower_requirement: f64,
    pub upper_requirement: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub check: String,
    pub system: String,
    pub lambda: f64,
    pub fitted: f64,
    pub max_ratio: f64,
    pub n_samples: usize,
    pub violations: Vec<String>,
    pub samples: Vec<EnvelopeSample>,
}

/// Smallest `c ∈ [lo, hi]` with `f(c) ≥ 0` for increasing `f`; `None` if `f(hi) < 0`.
pub fn smallest_admissible<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> Option<f64> {
    if f(lo) >= 0.0 {
        return Some(lo);
    }
    if !(f(hi) >= 0.0) {
        return None;
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if f(mid.exp()) >= 0.0 {
            b = mid;
        } else {
            a = mid;
        }
        if b - a < 1e-13 {
            break;
        }
    }
    Some(b.exp())
}

const RHO_MAX: f64 = 1e12;

/// Per-sample `(lower, upper)` requirement on ϱ for
/// `e^{-ϱ s}/ϱ ≤ r ≤ ϱ e^{-s/ϱ}`, with `r = γ |B|` and `s = d²/t`.
pub fn rho_requirements(r: f64, s: f64) -> (Option<f64>, Option<f64>) {
    let lr = r.ln();
    let lower = smallest_admissible(|c| c.ln() + c * s + lr, 1.0, RHO_MAX);
    let upper = smallest_admissible(|c| c.ln() - s / c - lr, 1.0, RHO_MAX);
    (lower, upper)
}

/// Fits ϱ in `e^{-ϱd²/t}/(ϱ|B|) ≤ γ ≤ ϱ e^{-d²/(ϱt)}/|B|` on the `λ`-dilated sample set.
pub fn gaussian_envelope_fit(kernel: &HeatKernel, geo: &Geometry, spec: &SampleSpec, lambda: f64) -> Result<EnvelopeReport> {
    let pairs = unit_pairs(geo, spec)?;
    gaussian_envelope_fit_on(kernel, geo, &pairs, lambda)
}

pub fn gaussian_envelope_fit_on(kernel: &HeatKernel, geo: &Geometry, pairs: &[UnitPair], lambda: f64) -> Result<EnvelopeReport> {
    let cs = geo.control();
    for p in pairs {
        geo.volume(&p.x, 1.0)?;
    }
    let samples: Vec<EnvelopeSample> = pairs
        .par_iter()
        .map(|p| {
            let t = lambda * lambda * p.t;
            let s = t.sqrt();
            let x = cs.dilate(s, &p.x);
            let y = cs.dilate(s, &p.y);
            let kv = kernel.saturate(t, &x, &y)?;
            let volume = geo.volume(&x, s)?;
            let distance = s * p.distance;
            let (lo, up) = rho_requirements(kv.value * volume, p.distance * p.distance);
            Ok(EnvelopeSample {
                t,
                x,
                y,
                kernel: kv.value,
                kernel_error: kv.abs_error,
                volume,
                distance,
                lower_requirement: lo.unwrap_or(f64::INFINITY),
                upper_requirement: up.unwrap_or(f64::INFINITY),
            })
        })
        .collect::<Result<_>>()?;
    let mut violations = Vec::new();
    for s in &samples {
        if !(s.kernel > 0.0) {
            violations.push(format!("non-positive kernel at t={}, x={:?}, y={:?}", s.t, s.x, s.y));
        } else if !s.lower_requirement.is_finite() || !s.upper_requirement.is_finite() {
            violations.push(format!("no admissible constant at t={}, x={:?}, y={:?}", s.t, s.x, s.y));
        }
    }
    let fitted = samples.iter().map(|s| s.lower_requirement.max(s.upper_requirement)).fold(1.0, f64::max);
    Ok(EnvelopeReport {
        check: "gaussian".into(),
        system: kernel.group().base().name().to_string(),
        lambda,
        fitted,
        max_ratio: pairs.iter().map(|p| p.distance).fold(0.0, f64::max),
        n_samples: samples.len(),
        violations,
        samples,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Stability {
    pub base: f64,
    pub dilated: f64,
    pub lambda: f64,
    pub relative_change: f64,
}

/// Fitted ϱ on the sample set and on its `λ`-dilate.
pub fn envelope_stability(kernel: &HeatKernel, geo: &Geometry, spec: &SampleSpec, lambda: f64) -> Result<(EnvelopeReport, EnvelopeReport, Stability)> {
    let pairs = unit_pairs(geo, spec)?;
    let a = gaussian_envelope_fit_on(kernel, geo, &pairs, 1.0)?;
    let b = gaussian_envelope_fit_on(kernel, geo, &pairs, lambda)?;
    let st = Stability { base: a.fitted, dilated: b.fitted, lambda, relative_change: (b.fitted / a.fitted - 1.0).abs() };
    Ok((a, b, st))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivativeSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub value: f64,
    pub route_a: f64,
    pub volume: f64,
    pub distance: f64,
    pub requirement: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PowerFit {
    pub x: Vec<f64>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub exponent: f64,
    pub expected: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivativeEnvelopeReport {
    pub system: String,
    pub spec: DerivativeSpec,
    pub fitted: f64,
    /// Fitted constant with the finite-difference step halved, if requested.
    pub fitted_half_step: Option<f64>,
    pub power_fits: Vec<PowerFit>,
    pub max_exponent_error: f64,
    pub violations: Vec<String>,
    pub samples: Vec<DerivativeSample>,
}

/// Fits `C` in `|∂_t^k Y γ| ≤ C t^{-(k+r/2)} |B(x,√t)|^{-1} e^{-d²/(Ct)}` and regresses the
/// diagonal t-power along dilation orbits.
pub fn derivative_envelope_fit(
    kernel: &HeatKernel,
    geo: &Geometry,
    spec: &SampleSpec,
    dspec: &DerivativeSpec,
    halve_step: bool,
) -> Result<DerivativeEnvelopeReport> {
    if dspec.order() > 3 {
        return Err(Error::Config("derivative envelopes need k + r <= 3".into()));
    }
    let pairs = unit_pairs(geo, spec)?;
    for p in &pairs {
        geo.volume(&p.x, 1.0)?;
    }
    let cs = geo.control();
    let power = dspec.time_order as f64 + (dspec.x_fields.len() + dspec.y_fields.len()) as f64 / 2.0;
    let fit = |ds: &DerivativeSpec| -> Result<(f64, Vec<DerivativeSample>)> {
        let samples: Vec<DerivativeSample> = pairs
            .par_iter()
            .map(|p| {
                let s = p.t.sqrt();
                let x = cs.dilate(s, &p.x);
                let y = cs.dilate(s, &p.y);
                let d = kernel.derivative(p.t, &x, &y, ds)?;
                let volume = geo.volume(&x, s)?;
                let prefactor = p.t.powf(-power) / volume;
                let target = (d.value.abs() / prefactor).ln();
                let ss = p.distance * p.distance;
                let req = smallest_admissible(|c| c.ln() - ss / c - target, 1e-12, RHO_MAX).unwrap_or(f64::INFINITY);
                Ok(DerivativeSample { t: p.t, x, y, value: d.value, route_a: d.route_a, volume, distance: s * p.distance, requirement: req })
            })
            .collect::<Result<_>>()?;
        let c = samples.iter().map(|s| s.requirement).fold(0.0, f64::max);
        Ok((c, samples))
    };
    let (fitted, samples) = fit(dspec)?;
    let fitted_half_step = if halve_step {
        Some(fit(&DerivativeSpec { step: dspec.step / 2.0, ..dspec.clone() })?.0)
    } else {
        None
    };
    let expected = -power - geo.q() as f64 / 2.0;
    let times: Vec<f64> = (-2..=2).map(|k| 2f64.powi(k)).collect();
    let n_orbits = spec.base_points.min(3);
    let mut power_fits = Vec::new();
    for p in pairs.iter().take(n_orbits) {
        let values = times
            .iter()
            .map(|&t| {
                let x = cs.dilate(t.sqrt(), &p.x);
                Ok(kernel.derivative(t, &x, &x, dspec)?.value)
            })
            .collect::<Result<Vec<f64>>>()?;
        let exponent = log_slope(&times, &values);
        power_fits.push(PowerFit { x: p.x.clone(), times: times.clone(), values, exponent, expected });
    }
    let max_exponent_error = power_fits.iter().map(|f| (f.exponent - f.expected).abs()).fold(0.0, f64::max);
    let mut violations = Vec::new();
    if !fitted.is_finite() {
        violations.push("derivative envelope constant is not finite".into());
    }
    Ok(DerivativeEnvelopeReport {
        system: kernel.group().base().name().to_string(),
        spec: dspec.clone(),
        fitted,
        fitted_half_step,
        power_fits,
        max_exponent_error,
        violations,
        samples,
    })
}

/// Least-squares slope of `log|v|` against `log t`.
pub fn log_slope(t: &[f64], v: &[f64]) -> f64 {
    let xs: Vec<f64> = t.iter().map(|a| a.ln()).collect();
    let ys: Vec<f64> = v.iter().map(|a| a.abs().ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaturationSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub h: f64,
    pub volume: f64,
    pub distance: f64,
    pub kappa_requirement: f64,
    pub theta_requirement: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaturationReport {
    pub system: String,
    /// Upper constant in `H ≤ κ e^{-d²/(2t)}/|B|`.
    pub kappa: f64,
    /// Lower constant in `H ≥ e^{-ϑd²/t}/(ϑ|B|)`.
    pub theta: f64,
    pub violations: Vec<String>,
    pub samples: Vec<SaturationSample>,
}

/// Fits the constants relating the pure-Gaussian η-integral `H` to the base envelope.
pub fn saturation_gaussian_check(kernel: &HeatKernel, geo: &Geometry, spec: &SampleSpec) -> Result<SaturationReport> {
    let pairs = unit_pairs(geo, spec)?;
    for p in &pairs {
        geo.volume(&p.x, 1.0)?;
    }
    let cs = geo.control();
    let samples: Vec<SaturationSample> = pairs
        .par_iter()
        .map(|p| {
            let s = p.t.sqrt();
            let x = cs.dilate(s, &p.x);
            let y = cs.dilate(s, &p.y);
            let (h, _) = kernel.gauge_integral(p.t, &x, &y)?;
            let volume = geo.volume(&x, s)?;
            let ss = p.distance * p.distance;
            let r = h * volume;
            let kappa_requirement = r * (ss / 2.0).exp();
            let theta_requirement =
                smallest_admissible(|c| c.ln() + c * ss + r.ln(), 1.0, RHO_MAX).unwrap_or(f64::INFINITY);
            Ok(SaturationSample { t: p.t, x, y, h, volume, distance: s * p.distance, kappa_requirement, theta_requirement })
        })
        .collect::<Result<_>>()?;
    let kappa = samples.iter().map(|s| s.kappa_requirement).fold(1.0, f64::max);
    let theta = samples.iter().map(|s| s.theta_requirement).fold(1.0, f64::max);
    let mut violations = Vec::new();
    if !kappa.is_finite() || !theta.is_finite() {
        violations.push("saturation constants are not finite".into());
    }
    Ok(SaturationReport { system: kernel.group().base().name().to_string(), kappa, theta, violations, samples })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquivalentGaussianReport {
    pub theta: f64,
    /// Smallest admissible `C₁` over all samples.
    pub c1: f64,
    pub per_sample: Vec<f64>,
}

/// Smallest `C₁` with `e^{-d²/(θt)}/|B(y,√t)| ≤ C₁ e^{-d²/(C₁θt)}/|B(x,√t)|` at each `(t, x, y)`.
pub fn equivalent_gaussian_check(geo: &Geometry, theta: f64, samples: &[(f64, Vec<f64>, Vec<f64>)]) -> Result<EquivalentGaussianReport> {
    if !(theta > 0.0) {
        return Err(Error::Config(format!("theta must be positive, got {theta}")));
    }
    let per_sample = samples
        .iter()
        .map(|(t, x, y)| {
            let s = t.sqrt();
            let d = geo.distance(x, y)?;
            let vx = geo.volume(x, s)?;
            let vy = geo.volume(y, s)?;
            let ss = d * d / t;
            let target = (vx / vy).ln() - ss / theta;
            smallest_admissible(|c| c.ln() - ss / (c * theta) - target, 1e-12, RHO_MAX)
                .ok_or_else(|| Error::numerical(format!("no admissible C1 at t={t}, x={x:?}, y={y:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let c1 = per_sample.iter().cloned().fold(0.0, f64::max);
    Ok(EquivalentGaussianReport { theta, c1, per_sample })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SliceOpts {
    pub samples: usize,
    pub seed: u64,
    pub distance: DistanceOpts,
}

impl Default for SliceOpts {
    fn default() -> Self {
        SliceOpts { samples: 400, seed: crate::rng::DEFAULT_SEED, distance: DistanceOpts::membership() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SliceRow {
    pub y: Vec<f64>,
    pub d_xy: f64,
    pub inner: bool,
    pub slice: f64,
    pub slice_ci: f64,
    /// `slice · |B_X| / |B_Z|`.
    pub ratio: f64,
    pub ratio_ci: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SliceReport {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub rho: f64,
    pub kappa: f64,
    pub ball_z: f64,
    pub ball_x: f64,
    pub c1: f64,
    pub c1_ci: f64,
    pub c2: f64,
    pub c2_ci: f64,
    pub rows: Vec<SliceRow>,
}

/// Monte Carlo `|{η : (y,η) ∈ B_Z((x,ξ), ρ)}|`, with its 95% half-width.
pub fn slice_measure(group: &CarnotGroup, x: &[f64], xi: &[f64], y: &[f64], rho: f64, opts: &SliceOpts) -> (f64, f64) {
    let gcs = group.control();
    let n = group.n();
    let p = group.p();
    let base = ControlSystem::from_system(group.base());
    if base.box_lower_bound(x, y) >= rho {
        return (0.0, 0.0);
    }
    let center: Vec<f64> = x.iter().chain(xi).copied().collect();
    let radii = gcs.reach_radii(&center, rho);
    let box_volume: f64 = radii[n..].iter().map(|r| 2.0 * r).product();
    let cloud = unit_cloud(p, opts.samples, opts.seed);
    let hits: usize = cloud
        .par_iter()
        .map(|u| {
            let pt: Vec<f64> = y.iter().copied().chain((0..p).map(|k| xi[k] + radii[n + k] * u[k])).collect();
            ball_member(gcs, &center, &pt, rho, &opts.distance) as usize
        })
        .sum();
    let f = hits as f64 / opts.samples as f64;
    let half = 1.96 * (f * (1.0 - f) / opts.samples as f64).sqrt().max(0.5 / opts.samples as f64) * box_volume;
    (f * box_volume, half)
}

/// Fits `c₁` (all y) and `c₂` (y in `B_X(x, κρ)`) in the slice bounds.
#[allow(clippy::too_many_arguments)]
pub fn sanchez_slice_check(
    group: &CarnotGroup,
    geo: &Geometry,
    unit_ball_z: &VolumeEstimate,
    x: &[f64],
    xi: &[f64],
    rho: f64,
    y_grid: &[Vec<f64>],
    opts: &SliceOpts,
) -> Result<SliceReport> {
    if !(rho > 0.0) {
        return Err(Error::Config(format!("radius must be positive, got {rho}")));
    }
    let kappa = 0.5;
    let ball_z = unit_ball_z.estimate * rho.powi(group.Q() as i32);
    let ball_z_rel = unit_ball_z.ci_halfwidth / unit_ball_z.estimate;
    let ball_x = geo.volume(x, rho)?;
    let rows = y_grid
        .iter()
        .map(|y| {
            let d_xy = geo.distance(x, y)?;
            let (slice, slice_ci) = slice_measure(group, x, xi, y, rho, opts);
            let ratio = slice * ball_x / ball_z;
            let ratio_ci = slice_ci * ball_x / ball_z + ratio * ball_z_rel;
            Ok(SliceRow { y: y.clone(), d_xy, inner: d_xy < kappa * rho, slice, slice_ci, ratio, ratio_ci })
        })
        .collect::<Result<Vec<_>>>()?;
    let c1_row = rows.iter().max_by(|a, b| a.ratio.total_cmp(&b.ratio)).expect("non-empty grid");
    let (c1, c1_ci) = (c1_row.ratio, c1_row.ratio_ci);
    let (c2, c2_ci) = rows
        .iter()
        .filter(|r| r.inner)
        .min_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .map(|r| (r.ratio, r.ratio_ci))
        .unwrap_or((f64::NAN, f64::NAN));
    Ok(SliceReport { x: x.to_vec(), xi: xi.to_vec(), rho, kappa, ball_z, ball_x, c1, c1_ci, c2, c2_ci, rows })
}

/// Points `exp(r a·X)(x)` at a spread of radii `r/ρ` in `[0, 1.3]`.
pub fn slice_grid(cs: &ControlSystem, x: &[f64], rho: f64) -> Vec<Vec<f64>> {
    let m = cs.m();
    [0.0, 0.15, 0.3, 0.4, 0.7, 0.9, 1.3]
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let mut a = vec![0.0; m];
            a[i % m] = if i % 3 == 2 { -f * rho } else { f * rho };
            cs.integrate(x, &[a], &[1.0])
        })
        .collect()
}
