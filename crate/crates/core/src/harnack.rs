//! Parabolic cylinders and empirical Harnack ratios.
//!
//! A ratio is `sup_{S_λ} |D u| / u(ω₀)` where `D` is a product of field
//! derivatives and time derivatives. The sup is taken on a product grid of
//! time slices and spatial points sampled into the ball, refined once, and
//! then polished by a pattern search that never leaves `S_λ`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::ControlSystem;
use crate::kernel::{caloric_residual, HeatKernel};
use crate::metric::{ball_member, DistanceOpts};
use crate::rng::stream_rng;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ParabolicCylinder {
    pub t0: f64,
    pub x0: Vec<f64>,
    pub r: f64,
    pub lambda: f64,
}

impl ParabolicCylinder {
    pub fn new(t0: f64, x0: Vec<f64>, r: f64, lambda: f64) -> Result<Self> {
        if !(t0 > 0.0) || !t0.is_finite() {
            return Err(Error::Config(format!("cylinder top time must be positive, got {t0}")));
        }
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Config(format!("cylinder radius must be positive, got {r}")));
        }
        if !(lambda > 0.0 && lambda < 0.5) {
            return Err(Error::Config(format!("lambda must lie in (0, 1/2), got {lambda}")));
        }
        Ok(ParabolicCylinder { t0, x0, r, lambda })
    }

    /// Open window `(t₀ - (1-λ)r², t₀ - λr²)` of `S_λ`.
    pub fn lower_window(&self) -> (f64, f64) {
        let r2 = self.r * self.r;
        (self.t0 - (1.0 - self.lambda) * r2, self.t0 - self.lambda * r2)
    }

    /// Spatial radius `(1-λ)r` of `S_λ`.
    pub fn lower_radius(&self) -> f64 {
        (1.0 - self.lambda) * self.r
    }

    /// `(t, x) ∈ C(ω₀, r)`, deciding the distance by its upper bound.
    pub fn contains(&self, cs: &ControlSystem, opts: &DistanceOpts, t: f64, x: &[f64]) -> bool {
        (t - self.t0).abs() < self.r * self.r && ball_member(cs, &self.x0, x, self.r, opts)
    }

    /// `(t, x) ∈ S_λ(ω₀, r)`, deciding the distance by its upper bound.
    pub fn in_lower(&self, cs: &ControlSystem, opts: &DistanceOpts, t: f64, x: &[f64]) -> bool {
        let (lo, hi) = self.lower_window();
        t > lo && t < hi && ball_member(cs, &self.x0, x, self.lower_radius(), opts)
    }

    /// Image under `(t, x) ↦ (μ²t, δ_μ x)`.
    pub fn dilate(&self, cs: &ControlSystem, mu: f64) -> Self {
        ParabolicCylinder { t0: mu * mu * self.t0, x0: cs.dilate(mu, &self.x0), r: mu * self.r, lambda: self.lambda }
    }
}

/// A nonnegative function asserted to solve `Hu = 0` on the cylinder.
pub trait Caloric: Sync {
    fn eval(&self, t: f64, x: &[f64]) -> Result<f64>;
}

#[derive(Clone, Copy, Debug)]
pub struct ConstantCaloric(pub f64);

impl Caloric for ConstantCaloric {
    fn eval(&self, _t: f64, _x: &[f64]) -> Result<f64> {
        Ok(self.0)
    }
}

/// `u(t, x) = scale · Γ(t - s₀, x, y₀)`.
pub struct KernelColumn<'a> {
    pub kernel: &'a HeatKernel,
    pub pole_t: f64,
    pub pole_x: Vec<f64>,
    pub scale: f64,
}

impl<'a> KernelColumn<'a> {
    pub fn new(kernel: &'a HeatKernel, pole_t: f64, pole_x: Vec<f64>) -> Self {
        KernelColumn { kernel, pole_t, pole_x, scale: 1.0 }
    }

    /// Rejects poles that are not certified to lie outside the closed cylinder.
    pub fn check_outside(&self, cyl: &ParabolicCylinder) -> Result<()> {
        let r2 = cyl.r * cyl.r;
        let early = self.pole_t < cyl.t0 - r2;
        let late = self.pole_t > cyl.t0 + r2;
        let far = self.kernel.base().box_lower_bound(&cyl.x0, &self.pole_x) > cyl.r;
        if early || late || far {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "pole ({}, {:?}) is not certified outside the closed cylinder of radius {}",
                self.pole_t, self.pole_x, cyl.r
            )))
        }
    }
}

impl Caloric for KernelColumn<'_> {
    fn eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(self.scale * self.kernel.saturate(t - self.pole_t, x, &self.pole_x)?.value)
    }
}

/// Pure Rust closure wrapper for user-supplied functions.
pub struct FnCaloric<F>(pub F);

impl<F> Caloric for FnCaloric<F>
where
    F: Fn(f64, &[f64]) -> f64 + Sync,
{
    fn eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok((self.0)(t, x))
    }
}

/// `X_{i₁} ⋯ X_{i_h} ∂_t^k`, fields outermost first.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct DerivativeOrder {
    pub fields: Vec<usize>,
    pub time_order: u32,
}

impl DerivativeOrder {
    pub fn new(fields: Vec<usize>, time_order: u32) -> Self {
        DerivativeOrder { fields, time_order }
    }

    /// Parabolic weight `h + 2k`.
    pub fn weight(&self) -> u32 {
        self.fields.len() as u32 + 2 * self.time_order
    }

    pub fn is_zero(&self) -> bool {
        self.fields.is_empty() && self.time_order == 0
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HarnackOpts {
    pub time_slices: usize,
    pub spatial: usize,
    /// Rerun with `2n-1` slices and twice the spatial points.
    pub refine: bool,
    /// Pattern search steps relative to `r` (space) and the window (time).
    pub polish_start: f64,
    pub polish_min: f64,
    pub polish_max_moves: usize,
    /// Finite-difference step relative to `r`; time uses its square.
    pub fd_step: f64,
    /// Allowed relative change of the derivative sup under step halving.
    pub fd_halving_tol: f64,
    /// Allowed `r²|Hu|/u` at the spot-check points.
    pub caloric_tol: f64,
    pub seed: u64,
    pub distance: DistanceOpts,
}

impl Default for HarnackOpts {
    fn default() -> Self {
        HarnackOpts {
            time_slices: 9,
            spatial: 200,
            refine: true,
            polish_start: 0.1,
            polish_min: 1e-3,
            polish_max_moves: 200,
            fd_step: 0.02,
            fd_halving_tol: 0.02,
            caloric_tol: 1e-2,
            seed: crate::rng::DEFAULT_SEED,
            distance: DistanceOpts::membership(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct HarnackReport {
    pub system: String,
    pub cylinder: ParabolicCylinder,
    pub order: DerivativeOrder,
    pub u0: f64,
    pub sup_grid: f64,
    pub sup_refined: f64,
    pub sup: f64,
    pub argmax_t: f64,
    pub argmax_x: Vec<f64>,
    /// `r^{h+2k} sup / u₀`.
    pub ratio: f64,
    /// `|sup_refined - sup_grid| / sup_refined`.
    pub refinement_delta: f64,
    /// Relative change of the derivative at the argmax under step halving.
    pub fd_halving_gap: f64,
    /// `r²|Hu|/u` at three interior points.
    pub caloric_residuals: Vec<f64>,
    pub grid_points: usize,
    pub evaluations: usize,
}

/// Time slices in `S_λ`, endpoints pulled in by a relative `1e-9`.
pub fn time_slices(cyl: &ParabolicCylinder, n: usize) -> Vec<f64> {
    let (lo, hi) = cyl.lower_window();
    let pad = 1e-9 * (hi - lo);
    if n <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| hi - pad - (hi - lo - 2.0 * pad) * i as f64 / (n - 1) as f64).collect()
}

/// `count` points of `B(x₀, (1-λ)r)`; the first is `x₀`, the rest are
/// rejection-sampled from the reachable box.
pub fn spatial_samples(cs: &ControlSystem, cyl: &ParabolicCylinder, count: usize, seed: u64, opts: &DistanceOpts) -> Result<Vec<Vec<f64>>> {
    let rho = cyl.lower_radius();
    let radii = cs.reach_radii(&cyl.x0, rho);
    let mut out = vec![cyl.x0.clone()];
    let batch = 64usize;
    let max_candidates = 400 * count.max(1);
    let mut next = 0usize;
    while out.len() < count {
        if next >= max_candidates {
            return Err(Error::numerical(format!("only {} of {count} ball samples accepted after {next} candidates", out.len())));
        }
        let cands: Vec<Vec<f64>> = (next..next + batch)
            .map(|i| {
                let mut rng = stream_rng(seed ^ 0x4a7e_1c05, i as u64);
                cyl.x0.iter().zip(&radii).map(|(c, r)| c + r * rng.random_range(-1.0..1.0)).collect()
            })
            .collect();
        next += batch;
        let keep: Vec<bool> = cands.par_iter().map(|y| ball_member(cs, &cyl.x0, y, rho, opts)).collect();
        for (y, k) in cands.into_iter().zip(keep) {
            if k && out.len() < count {
                out.push(y);
            }
        }
    }
    Ok(out)
}

/// Nested central differences; `fields[0]` is applied last (outermost).
pub fn fd_derivative<U: Caloric + ?Sized>(
    cs: &ControlSystem,
    u: &U,
    t: f64,
    x: &[f64],
    order: &DerivativeOrder,
    hx: f64,
    ht: f64,
) -> Result<f64> {
    fd_rec(cs, u, t, x, &order.fields, order.time_order, hx, ht)
}

#[allow(clippy::too_many_arguments)]
fn fd_rec<U: Caloric + ?Sized>(cs: &ControlSystem, u: &U, t: f64, x: &[f64], fields: &[usize], k: u32, hx: f64, ht: f64) -> Result<f64> {
    if let Some((&j, rest)) = fields.split_first() {
        let xp = cs.flow(j, x, hx, 1);
        let xm = cs.flow(j, x, -hx, 1);
        return Ok((fd_rec(cs, u, t, &xp, rest, k, hx, ht)? - fd_rec(cs, u, t, &xm, rest, k, hx, ht)?) / (2.0 * hx));
    }
    if k > 0 {
        return Ok((fd_rec(cs, u, t + ht, x, fields, k - 1, hx, ht)? - fd_rec(cs, u, t - ht, x, fields, k - 1, hx, ht)?) / (2.0 * ht));
    }
    u.eval(t, x)
}

struct Objective<'a, U: Caloric + ?Sized> {
    cs: &'a ControlSystem,
    u: &'a U,
    order: &'a DerivativeOrder,
    r: f64,
    step: f64,
}

impl<U: Caloric + ?Sized> Objective<'_, U> {
    fn at_step(&self, t: f64, x: &[f64], step: f64) -> Result<f64> {
        if self.order.is_zero() {
            return u_checked(self.u, t, x);
        }
        let hx = step * self.r;
        Ok(fd_derivative(self.cs, self.u, t, x, self.order, hx, hx * hx)?.abs())
    }

    fn eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.at_step(t, x, self.step)
    }

    fn cost(&self) -> usize {
        1usize << (self.order.fields.len() + self.order.time_order as usize)
    }
}

fn u_checked<U: Caloric + ?Sized>(u: &U, t: f64, x: &[f64]) -> Result<f64> {
    let v = u.eval(t, x)?;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::violation("nonnegative caloric function", format!("u({t}, {x:?}) = {v}")));
    }
    Ok(v)
}

fn argmax(vals: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v > vals[best] {
            best = i;
        }
    }
    best
}

/// Sup of the objective over a grid: `(values, points)` in grid order.
fn grid_values<U: Caloric + ?Sized>(obj: &Objective<U>, times: &[f64], space: &[Vec<f64>]) -> Result<Vec<(f64, f64, usize)>> {
    let pts: Vec<(f64, usize)> = times.iter().flat_map(|&t| (0..space.len()).map(move |i| (t, i))).collect();
    pts.par_iter().map(|&(t, i)| Ok((obj.eval(t, &space[i])?, t, i))).collect()
}

/// Greedy pattern search inside `S_λ` from `(t, x)`.
fn polish<U: Caloric + ?Sized>(
    obj: &Objective<U>,
    cyl: &ParabolicCylinder,
    opts: &HarnackOpts,
    start: (f64, Vec<f64>, f64),
) -> Result<((f64, Vec<f64>, f64), usize)> {
    let cs = obj.cs;
    let (lo, hi) = cyl.lower_window();
    let (mut t, mut x, mut best) = start;
    let mut s = opts.polish_start;
    let mut moves = 0usize;
    let mut evals = 0usize;
    let weights = cs.weights().to_vec();
    while s >= opts.polish_min && moves < opts.polish_max_moves {
        let mut cands: Vec<(f64, Vec<f64>)> = Vec::new();
        let dt = s * (hi - lo);
        for sign in [1.0, -1.0] {
            cands.push((t + sign * dt, x.clone()));
        }
        for j in 0..cs.m() {
            for sign in [1.0, -1.0] {
                cands.push((t, cs.flow(j, &x, sign * s * cyl.r, 1)));
            }
        }
        for (k, w) in weights.iter().enumerate() {
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[k] += sign * (s * cyl.r).powi(*w as i32);
                cands.push((t, y));
            }
        }
        let mut improved = false;
        for (ct, cx) in cands {
            if !(ct > lo && ct < hi) {
                continue;
            }
            if cx != x && !ball_member(cs, &cyl.x0, &cx, cyl.lower_radius(), &opts.distance) {
                continue;
            }
            let v = obj.eval(ct, &cx)?;
            evals += obj.cost();
            if v > best {
                t = ct;
                x = cx;
                best = v;
                improved = true;
                moves += 1;
                break;
            }
        }
        if !improved {
            s *= 0.5;
        }
    }
    Ok(((t, x, best), evals))
}

/// Spot-check `Hu = 0` at three points of the cylinder.
pub fn caloric_spot_check<U: Caloric + ?Sized>(cs: &ControlSystem, u: &U, cyl: &ParabolicCylinder, extra: (f64, &[f64])) -> Vec<f64> {
    let (lo, hi) = cyl.lower_window();
    let pts: Vec<(f64, Vec<f64>)> = vec![(cyl.t0, cyl.x0.clone()), (0.5 * (lo + hi), cyl.x0.clone()), (extra.0, extra.1.to_vec())];
    let f = |t: f64, x: &[f64]| u.eval(t, x).unwrap_or(f64::NAN);
    let steps = [0.1 * cyl.r, 0.05 * cyl.r];
    pts.iter()
        .map(|(t, x)| {
            let rep = caloric_residual(cs, &f, *t, x, &steps, -1.0);
            let scale = f(*t, x).abs();
            if rep.extrapolated == 0.0 {
                0.0
            } else {
                cyl.r * cyl.r * rep.extrapolated.abs() / scale
            }
        })
        .collect()
}

/// `r^{h+2k} sup_{S_λ} |X_I ∂_t^k u| / u(ω₀)`.
pub fn harnack_derivative_ratio<U: Caloric + ?Sized>(
    cs: &ControlSystem,
    system: &str,
    u: &U,
    cyl: &ParabolicCylinder,
    order: &DerivativeOrder,
    opts: &HarnackOpts,
) -> Result<HarnackReport> {
    if order.weight() > 3 {
        return Err(Error::Config(format!("derivative weight h+2k = {} exceeds 3", order.weight())));
    }
    if order.fields.iter().any(|&j| j >= cs.m()) {
        return Err(Error::Config(format!("field index out of range (m = {})", cs.m())));
    }
    if cyl.x0.len() != cs.dim() {
        return Err(Error::Config(format!("center must have dimension {}", cs.dim())));
    }
    let obj = Objective { cs, u, order, r: cyl.r, step: opts.fd_step };
    let u0 = u_checked(u, cyl.t0, &cyl.x0)?;

    let n_space = if opts.refine { 2 * opts.spatial } else { opts.spatial };
    let space = spatial_samples(cs, cyl, n_space.max(1), opts.seed, &opts.distance)?;
    let base_times = time_slices(cyl, opts.time_slices);
    let base = grid_values(&obj, &base_times, &space[..opts.spatial.min(space.len())])?;
    let mut evals = base.len() * obj.cost();
    let sup_grid = base.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    let mut all = base;
    if opts.refine {
        let fine_times = time_slices(cyl, 2 * opts.time_slices - 1);
        let old: Vec<(f64, usize)> = all.iter().map(|v| (v.1, v.2)).collect();
        let extra_pts: Vec<(f64, usize)> = fine_times
            .iter()
            .flat_map(|&t| (0..space.len()).map(move |i| (t, i)))
            .filter(|p| !old.contains(p))
            .collect();
        let extra = extra_pts.par_iter().map(|&(t, i)| Ok((obj.eval(t, &space[i])?, t, i))).collect::<Result<Vec<_>>>()?;
        evals += extra.len() * obj.cost();
        all.extend(extra);
    }
    let grid_points = all.len();
    let vals: Vec<f64> = all.iter().map(|v| v.0).collect();
    let i = argmax(&vals);
    let sup_refined = vals[i];
    let refinement_delta = if sup_refined > 0.0 { (sup_refined - sup_grid).abs() / sup_refined } else { 0.0 };
    let ((t_best, x_best, sup), pe) = polish(&obj, cyl, opts, (all[i].1, space[all[i].2].clone(), sup_refined))?;
    evals += pe;

    let fd_halving_gap = if order.is_zero() {
        0.0
    } else {
        let half = obj.at_step(t_best, &x_best, 0.5 * opts.fd_step)?;
        evals += obj.cost();
        let gap = (half - sup).abs() / sup.abs().max(f64::MIN_POSITIVE);
        if gap > opts.fd_halving_tol && sup > 1e-12 * u0 {
            return Err(Error::numerical(format!(
                "finite differences unstable under step halving: {sup} vs {half} at t={t_best}, x={x_best:?}"
            )));
        }
        gap
    };

    let caloric_residuals = caloric_spot_check(cs, u, cyl, (t_best, &x_best));
    if let Some(bad) = caloric_residuals.iter().find(|v| !(**v <= opts.caloric_tol)) {
        return Err(Error::violation("caloric test function", format!("normalized residual {bad} on the cylinder")));
    }

    let norm = cyl.r.powi(order.weight() as i32);
    let ratio = if u0 > 0.0 {
        norm * sup / u0
    } else if sup > 0.0 {
        return Err(Error::violation("Harnack inequality", format!("u(ω₀) = 0 while sup = {sup} at t={t_best}, x={x_best:?}")));
    } else {
        0.0
    };
    Ok(HarnackReport {
        system: system.to_string(),
        cylinder: cyl.clone(),
        order: order.clone(),
        u0,
        sup_grid,
        sup_refined,
        sup,
        argmax_t: t_best,
        argmax_x: x_best,
        ratio,
        refinement_delta,
        fd_halving_gap,
        caloric_residuals,
        grid_points,
        evaluations: evals,
    })
}

/// `sup_{S_λ} u / u(ω₀)`.
pub fn harnack_ratio<U: Caloric + ?Sized>(cs: &ControlSystem, system: &str, u: &U, cyl: &ParabolicCylinder, opts: &HarnackOpts) -> Result<HarnackReport> {
    harnack_derivative_ratio(cs, system, u, cyl, &DerivativeOrder::default(), opts)
}

/// Kernel-column test configuration at unit scale.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ColumnCase {
    pub t0: f64,
    pub x0: Vec<f64>,
    pub pole_t: f64,
    pub pole_x: Vec<f64>,
}

impl ColumnCase {
    /// Center `(2, x₀)`, pole at time 0 and one unit along `X₁` from `x₀`.
    pub fn standard(cs: &ControlSystem, x0: Vec<f64>) -> Self {
        let pole_x = cs.flow(0, &x0, 1.0, 4);
        ColumnCase { t0: 2.0, x0, pole_t: 0.0, pole_x }
    }

    /// Cylinder and pole at scale `r`: `(r²t, δ_r x)` applied to both.
    pub fn at_scale(&self, cs: &ControlSystem, r: f64, lambda: f64) -> Result<(ParabolicCylinder, f64, Vec<f64>)> {
        let cyl = ParabolicCylinder::new(r * r * self.t0, cs.dilate(r, &self.x0), r, lambda)?;
        Ok((cyl, r * r * self.pole_t, cs.dilate(r, &self.pole_x)))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScaleReport {
    pub system: String,
    pub case: ColumnCase,
    pub order: DerivativeOrder,
    pub r_values: Vec<f64>,
    pub lambda: f64,
    /// `sup |D u| / u(ω₀)` per radius.
    pub ratios: Vec<f64>,
    /// `r^{h+2k} sup |D u| / u(ω₀)` per radius; equal to `ratios` when `D` is trivial.
    pub normalized_ratios: Vec<f64>,
    /// Largest refinement delta over all runs.
    pub refinement_delta: f64,
    pub median: f64,
    /// `max |ratio / median - 1|` over the normalized ratios.
    pub spread: f64,
    pub runs: Vec<HarnackReport>,
}

/// Median of a nonempty slice.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ratios of the dilated kernel-column family over `r_values`.
///
/// At radius `r` the cylinder is `(r²t₀, δ_r x₀)` and the pole `(r²s₀, δ_r y₀)`,
/// so the function is `u(t/r², δ_{1/r}x)` up to the constant `r^{-q}`.
/// Each radius uses its own sampling seed.
pub fn harnack_scale_invariance(
    kernel: &HeatKernel,
    system: &str,
    case: &ColumnCase,
    r_values: &[f64],
    lambda: f64,
    order: &DerivativeOrder,
    opts: &HarnackOpts,
) -> Result<ScaleReport> {
    if r_values.is_empty() {
        return Err(Error::Config("no radii given".into()));
    }
    let cs = kernel.base();
    let mut ratios = Vec::new();
    let mut normalized = Vec::new();
    let mut runs = Vec::new();
    let mut delta: f64 = 0.0;
    for (i, &r) in r_values.iter().enumerate() {
        let (cyl, pt, px) = case.at_scale(cs, r, lambda)?;
        let mut col = KernelColumn::new(kernel, pt, px);
        col.check_outside(&cyl)?;
        col.scale = r.powi(kernel.q() as i32);
        let o = HarnackOpts { seed: opts.seed.wrapping_add(0x9e37_79b9 * (i as u64 + 1)), ..*opts };
        let rep = harnack_derivative_ratio(cs, system, &col, &cyl, order, &o)?;
        delta = delta.max(rep.refinement_delta);
        ratios.push(rep.sup / rep.u0);
        normalized.push(rep.ratio);
        runs.push(rep);
    }
    let med = median(&normalized);
    let spread = normalized.iter().map(|v| (v / med - 1.0).abs()).fold(0.0, f64::max);
    Ok(ScaleReport {
        system: system.to_string(),
        case: case.clone(),
        order: order.clone(),
        r_values: r_values.to_vec(),
        lambda,
        ratios,
        normalized_ratios: normalized,
        refinement_delta: delta,
        median: med,
        spread,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn small() -> HarnackOpts {
        HarnackOpts { time_slices: 4, spatial: 24, ..Default::default() }
    }

    fn heat2(tau: f64, d2: f64) -> f64 {
        if tau <= 0.0 {
            0.0
        } else {
            (-d2 / (4.0 * tau)).exp() / (4.0 * PI * tau)
        }
    }

    #[test]
    fn cylinder_predicates_nest() {
        let k = HeatKernel::catalog("euclid2").unwrap();
        let cs = k.base();
        let cyl = ParabolicCylinder::new(1.0, vec![0.0, 0.0], 1.0, 0.25).unwrap();
        let o = DistanceOpts::membership();
        assert!(cyl.in_lower(cs, &o, 0.5, &[0.5, 0.0]));
        assert!(cyl.contains(cs, &o, 0.5, &[0.5, 0.0]));
        assert!(!cyl.in_lower(cs, &o, 0.9, &[0.0, 0.0]));
        assert!(!cyl.in_lower(cs, &o, 0.5, &[0.8, 0.0]));
        assert!(cyl.contains(cs, &o, 0.9, &[0.8, 0.0]));
        assert!(ParabolicCylinder::new(1.0, vec![0.0], 1.0, 0.5).is_err());
    }

    #[test]
    fn samples_lie_in_the_lower_ball() {
        let k = HeatKernel::catalog("grushin").unwrap();
        let cs = k.base();
        let cyl = ParabolicCylinder::new(1.0, vec![1.0, 0.0], 1.0, 0.25).unwrap();
        let pts = spatial_samples(cs, &cyl, 20, 3, &DistanceOpts::membership()).unwrap();
        assert_eq!(pts.len(), 20);
        for p in &pts {
            assert!(cyl.in_lower(cs, &DistanceOpts::membership(), cyl.t0 - 0.5, p));
        }
        for t in time_slices(&cyl, 5) {
            let (lo, hi) = cyl.lower_window();
            assert!(t > lo && t < hi);
        }
    }

    #[test]
    fn constant_gives_one() {
        let k = HeatKernel::catalog("grushin").unwrap();
        let cyl = ParabolicCylinder::new(1.0, vec![1.0, 0.0], 1.0, 0.25).unwrap();
        let rep = harnack_ratio(k.base(), "grushin", &ConstantCaloric(3.0), &cyl, &small()).unwrap();
        assert_eq!(rep.ratio, 1.0);
        assert_eq!(rep.refinement_delta, 0.0);
    }

    #[test]
    fn euclidean_column_matches_direct_maximization() {
        let k = HeatKernel::catalog("euclid2").unwrap();
        let cs = k.base();
        let case = ColumnCase::standard(cs, vec![0.0, 0.0]);
        let (cyl, pt, px) = case.at_scale(cs, 1.0, 0.25).unwrap();
        let col = KernelColumn::new(&k, pt, px.clone());
        let rep = harnack_ratio(cs, "euclid2", &col, &cyl, &small()).unwrap();
        // Closest point of the disc to the pole, then a dense scan in time.
        let dist = ((px[0] - cyl.x0[0]).powi(2) + (px[1] - cyl.x0[1]).powi(2)).sqrt();
        let gap = (dist - cyl.lower_radius()).max(0.0);
        let (lo, hi) = cyl.lower_window();
        let sup = (0..=20000)
            .map(|i| heat2(lo + (hi - lo) * i as f64 / 20000.0 - pt, gap * gap))
            .fold(0.0, f64::max);
        let oracle = sup / heat2(cyl.t0 - pt, dist * dist);
        assert!((rep.ratio / oracle - 1.0).abs() < 5e-3, "{} vs {}", rep.ratio, oracle);
        assert!(rep.caloric_residuals.iter().all(|v| *v < 1e-3));
    }

    #[test]
    fn derivative_orders_are_validated() {
        let k = HeatKernel::catalog("euclid2").unwrap();
        let cyl = ParabolicCylinder::new(1.0, vec![0.0, 0.0], 1.0, 0.25).unwrap();
        let order = DerivativeOrder::new(vec![0, 1], 1);
        assert!(harnack_derivative_ratio(k.base(), "euclid2", &ConstantCaloric(1.0), &cyl, &order, &small()).is_err());
    }

    #[test]
    fn fd_matches_explicit_gradient() {
        let k = HeatKernel::catalog("euclid2").unwrap();
        let u = FnCaloric(|t: f64, x: &[f64]| heat2(t, x[0] * x[0] + x[1] * x[1]));
        let d = fd_derivative(k.base(), &u, 1.0, &[0.3, 0.2], &DerivativeOrder::new(vec![0], 1), 1e-3, 1e-3).unwrap();
        // ∂_t ∂_1 of the heat kernel at t=1.
        let (x1, r2) = (0.3, 0.13);
        let g = heat2(1.0, r2);
        let exact = g * (-x1 / 2.0) * (-1.0 + r2 / 4.0) + g * x1 / 2.0;
        assert!((d - exact).abs() < 1e-5 * exact.abs().max(1e-3), "{d} vs {exact}");
    }

    #[test]
    fn nonnegativity_is_enforced() {
        let k = HeatKernel::catalog("euclid2").unwrap();
        let cyl = ParabolicCylinder::new(1.0, vec![0.0, 0.0], 1.0, 0.25).unwrap();
        let err = harnack_ratio(k.base(), "euclid2", &ConstantCaloric(-1.0), &cyl, &small()).unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }
}
