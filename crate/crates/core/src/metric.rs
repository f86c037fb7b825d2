//! Control distances, balls and their volumes.
//!
//! The distance is transcribed with `K` piecewise-constant controls. The
//! solver minimizes the control energy `(1/K) Σ |a_k|²` subject to the
//! endpoint constraint by SQP steps; at a minimizer the speed is constant, so
//! the reparametrized path length is the reported upper bound.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{ControlNorm, ControlSystem, Rk4Work};
use crate::rng::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LowerBound {
    None,
    /// Smallest radius whose rigorous reachable box contains the target.
    #[default]
    ReachableBox,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DistanceOpts {
    pub segments: usize,
    pub multistarts: usize,
    /// Endpoint tolerance (Euclidean norm).
    pub tolerance: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub norm: ControlNorm,
    pub lower: LowerBound,
    /// Stop at the first feasible path shorter than this.
    #[serde(skip)]
    pub accept_below: Option<f64>,
}

impl Default for DistanceOpts {
    fn default() -> Self {
        DistanceOpts {
            segments: 32,
            multistarts: 16,
            tolerance: 1e-9,
            max_iter: 300,
            seed: crate::rng::DEFAULT_SEED,
            norm: ControlNorm::Euclidean,
            lower: LowerBound::ReachableBox,
            accept_below: None,
        }
    }
}

impl DistanceOpts {
    /// Cheaper settings for ball-membership tests.
    pub fn membership() -> Self {
        DistanceOpts {
            segments: 16,
            multistarts: 4,
            tolerance: 1e-8,
            max_iter: 120,
            lower: LowerBound::None,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ControlPath {
    /// `K × m` controls.
    pub controls: Vec<Vec<f64>>,
    /// Segment durations summing to 1.
    pub durations: Vec<f64>,
    /// Largest control norm over segments.
    pub radius: f64,
    pub endpoint_error: f64,
}

impl ControlPath {
    fn zero(k: usize, m: usize) -> Self {
        ControlPath {
            controls: vec![vec![0.0; m]; k],
            durations: vec![1.0 / k as f64; k],
            radius: 0.0,
            endpoint_error: 0.0,
        }
    }

    /// Point reached at time `s ∈ [0, 1]`.
    pub fn point_at(&self, cs: &ControlSystem, x: &[f64], s: f64) -> Vec<f64> {
        let mut p = x.to_vec();
        let mut elapsed = 0.0;
        for (a, &h) in self.controls.iter().zip(&self.durations) {
            if elapsed + h >= s {
                let part = (s - elapsed).max(0.0);
                return cs.rk4_step(&p, a, part);
            }
            p = cs.rk4_step(&p, a, h);
            elapsed += h;
        }
        p
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DistanceResult {
    pub upper: f64,
    pub lower: Option<f64>,
    pub path: ControlPath,
    pub converged: bool,
}

struct Solve {
    a: Vec<f64>,
    feasible: bool,
    converged: bool,
    residual: f64,
}

struct Problem<'a> {
    cs: &'a ControlSystem,
    x: &'a [f64],
    y: &'a [f64],
    k: usize,
    norm: ControlNorm,
}

const LP: i32 = 8;

impl Problem<'_> {
    fn n(&self) -> usize {
        self.cs.dim()
    }
    fn m(&self) -> usize {
        self.cs.m()
    }

    fn objective(&self, a: &[f64]) -> f64 {
        let kf = self.k as f64;
        match self.norm {
            ControlNorm::Euclidean => a.iter().map(|v| v * v).sum::<f64>() / kf,
            ControlNorm::Max => a.iter().map(|v| v.powi(LP)).sum::<f64>() / kf,
        }
    }

    fn grad_hess(&self, a: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let kf = self.k as f64;
        match self.norm {
            ControlNorm::Euclidean => (a.iter().map(|v| 2.0 * v / kf).collect(), vec![2.0 / kf; a.len()]),
            ControlNorm::Max => {
                let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-3);
                let p = LP as f64;
                (
                    a.iter().map(|v| p * v.powi(LP - 1) / kf).collect(),
                    a.iter()
                        .map(|v| (p * (p - 1.0) * v.powi(LP - 2) + 1e-3 * scale.powi(LP - 2)) / kf)
                        .collect(),
                )
            }
        }
    }

    fn endpoint(&self, a: &[f64]) -> Vec<f64> {
        let m = self.m();
        let h = 1.0 / self.k as f64;
        let mut p = self.x.to_vec();
        for seg in 0..self.k {
            p = self.cs.rk4_step(&p, &a[seg * m..(seg + 1) * m], h);
        }
        p.iter().zip(self.y).map(|(u, v)| u - v).collect()
    }

    /// Endpoint residual and its Jacobian (`n × K m`, row-major).
    fn endpoint_jac(&self, a: &[f64], work: &mut Rk4Work) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let m = self.m();
        let c = n + m;
        let h = 1.0 / self.k as f64;
        let mut steps = vec![0.0; self.k * n * c];
        let mut p = self.x.to_vec();
        let mut next = vec![0.0; n];
        for seg in 0..self.k {
            self.cs
                .rk4_step_jac(&p, &a[seg * m..(seg + 1) * m], h, work, &mut next, &mut steps[seg * n * c..(seg + 1) * n * c]);
            p.copy_from_slice(&next);
        }
        let km = self.k * m;
        let mut jac = vec![0.0; n * km];
        let mut prop = vec![0.0; n * n];
        for i in 0..n {
            prop[i * n + i] = 1.0;
        }
        let mut tmp = vec![0.0; n * n];
        for seg in (0..self.k).rev() {
            let st = &steps[seg * n * c..(seg + 1) * n * c];
            for i in 0..n {
                for j in 0..m {
                    let mut acc = 0.0;
                    for l in 0..n {
                        acc += prop[i * n + l] * st[l * c + n + j];
                    }
                    jac[i * km + seg * m + j] = acc;
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for l in 0..n {
                        acc += prop[i * n + l] * st[l * c + j];
                    }
                    tmp[i * n + j] = acc;
                }
            }
            prop.copy_from_slice(&tmp);
        }
        let res = p.iter().zip(self.y).map(|(u, v)| u - v).collect();
        (res, jac)
    }

    fn solve(&self, mut a: Vec<f64>, tol: f64, max_iter: usize) -> Solve {
        let n = self.n();
        let km = a.len();
        let mut work = Rk4Work::new(n, self.m());
        let mut mu = 1.0;
        let mut stall = 0;
        let mut last_obj = f64::INFINITY;
        for _ in 0..max_iter {
            let (c, jac) = self.endpoint_jac(&a, &mut work);
            let cn = norm2(&c);
            let (g, hd) = self.grad_hess(&a);
            // d = H^{-1}(J^T λ - g) with (J H^{-1} J^T) λ = -c + J H^{-1} g
            let mut s = DMatrix::<f64>::zeros(n, n);
            let mut rhs = DVector::<f64>::from_iterator(n, c.iter().map(|v| -v));
            for i in 0..n {
                for l in 0..km {
                    rhs[i] += jac[i * km + l] * g[l] / hd[l];
                }
                for j in 0..=i {
                    let mut acc = 0.0;
                    for l in 0..km {
                        acc += jac[i * km + l] * jac[j * km + l] / hd[l];
                    }
                    s[(i, j)] = acc;
                    s[(j, i)] = acc;
                }
            }
            let trace = (0..n).map(|i| s[(i, i)]).sum::<f64>().max(1e-300);
            for i in 0..n {
                s[(i, i)] += 1e-13 * trace;
            }
            let lambda = match s.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => match s.svd(true, true).solve(&rhs, 1e-14) {
                    Ok(v) => v,
                    Err(_) => break,
                },
            };
            let d: Vec<f64> = (0..km)
                .map(|l| {
                    let jt: f64 = (0..n).map(|i| jac[i * km + l] * lambda[i]).sum();
                    (jt - g[l]) / hd[l]
                })
                .collect();
            let lam_n = lambda.norm();
            if mu < 2.0 * lam_n + 1.0 {
                mu = 2.0 * lam_n + 1.0;
            }
            let obj = self.objective(&a);
            let merit0 = obj + mu * cn;
            let slope: f64 = g.iter().zip(&d).map(|(x, y)| x * y).sum::<f64>() - mu * cn;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> = a.iter().zip(&d).map(|(x, y)| x + alpha * y).collect();
                let ct = self.endpoint(&trial);
                let merit = self.objective(&trial) + mu * norm2(&ct);
                if merit <= merit0 + 1e-4 * alpha * slope.min(0.0) || (slope >= 0.0 && merit < merit0) {
                    a = trial;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            let dn = norm2(&d);
            let an = norm2(&a).max(1e-12);
            if !accepted {
                // No descent along d: accept a tiny step toward feasibility and continue.
                if cn <= tol {
                    return Solve { converged: true, feasible: true, residual: cn, a };
                }
                mu *= 10.0;
                stall += 1;
                if stall > 5 {
                    break;
                }
                continue;
            }
            let new_obj = self.objective(&a);
            if cn <= tol && alpha * dn <= 1e-9 * an && (last_obj - new_obj).abs() <= 1e-13 * new_obj.max(1e-300) {
                let r = norm2(&self.endpoint(&a));
                return Solve { converged: true, feasible: r <= tol, residual: r, a };
            }
            last_obj = new_obj;
        }
        let r = norm2(&self.endpoint(&a));
        Solve { converged: false, feasible: r <= tol, residual: r, a }
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Constant control minimizing `|Σ a_j X_j(x) - (y - x)|`.
fn straight_start(cs: &ControlSystem, x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = cs.dim();
    let m = cs.m();
    let mut cols = DMatrix::<f64>::zeros(n, m);
    let mut tmp = vec![0.0; n];
    for (j, f) in cs.fields().iter().enumerate() {
        f.eval_into(x, &mut tmp);
        for i in 0..n {
            cols[(i, j)] = tmp[i];
        }
    }
    let rhs = DVector::from_iterator(n, y.iter().zip(x).map(|(a, b)| a - b));
    cols.svd(true, true).solve(&rhs, 1e-12).map(|v| v.iter().copied().collect()).unwrap_or(vec![0.0; m])
}

/// Upper bound on the control distance from `x` to `y`, with a witness path.
pub fn cc_distance(cs: &ControlSystem, x: &[f64], y: &[f64], opts: &DistanceOpts) -> Result<DistanceResult> {
    let n = cs.dim();
    if x.len() != n || y.len() != n {
        return Err(Error::Config(format!("points must have dimension {n}")));
    }
    let k = opts.segments.max(1);
    let m = cs.m();
    let lower = match opts.lower {
        LowerBound::None => None,
        LowerBound::ReachableBox => Some(cs.box_lower_bound(x, y)),
    };
    if x == y {
        return Ok(DistanceResult { upper: 0.0, lower: lower.map(|_| 0.0), path: ControlPath::zero(k, m), converged: true });
    }
    let prob = Problem { cs, x, y, k, norm: opts.norm };
    let scale = cs.box_lower_bound(x, y).max(1e-6);
    let mut best: Option<(f64, Solve)> = None;
    for start in 0..=opts.multistarts {
        let a0: Vec<f64> = if start == 0 {
            let s = straight_start(cs, x, y);
            (0..k).flat_map(|_| s.clone()).collect()
        } else {
            let mut rng = stream_rng(opts.seed, start as u64);
            let amp = 1.5 * scale;
            (0..k * m).map(|_| amp * rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let sol = prob.solve(a0, opts.tolerance, opts.max_iter);
        if !sol.feasible {
            continue;
        }
        let len = path_length(&sol.a, k, m, opts.norm);
        let better = match &best {
            None => true,
            Some((l, _)) => len < *l,
        };
        if better {
            best = Some((len, sol));
        }
        if let (Some(thr), Some((l, _))) = (opts.accept_below, &best) {
            if *l < thr {
                break;
            }
        }
    }
    let (len, sol) = best.ok_or_else(|| {
        Error::numerical(format!("no start reached the endpoint within tolerance {:.1e}", opts.tolerance))
    })?;
    let path = reparametrize(&sol.a, k, m, opts.norm, sol.residual);
    let lower = lower.map(|l| l.min(len));
    Ok(DistanceResult { upper: len, lower, path, converged: sol.converged })
}

fn path_length(a: &[f64], k: usize, m: usize, norm: ControlNorm) -> f64 {
    (0..k).map(|s| norm.of(&a[s * m..(s + 1) * m])).sum::<f64>() / k as f64
}

/// Rescales segment durations so every segment runs at the same speed.
fn reparametrize(a: &[f64], k: usize, m: usize, norm: ControlNorm, residual: f64) -> ControlPath {
    let speeds: Vec<f64> = (0..k).map(|s| norm.of(&a[s * m..(s + 1) * m])).collect();
    let total: f64 = speeds.iter().sum();
    if total == 0.0 {
        return ControlPath::zero(k, m);
    }
    let len = total / k as f64;
    let mut controls = Vec::with_capacity(k);
    let mut durations = Vec::with_capacity(k);
    for s in 0..k {
        let d = speeds[s] / total;
        durations.push(d);
        if speeds[s] == 0.0 {
            controls.push(vec![0.0; m]);
        } else {
            controls.push(a[s * m..(s + 1) * m].iter().map(|v| v * len / speeds[s]).collect());
        }
    }
    ControlPath { controls, durations, radius: len, endpoint_error: residual }
}

/// `y ∈ B(x, ρ)` decided by the distance upper bound.
pub fn ball_member(cs: &ControlSystem, x: &[f64], y: &[f64], rho: f64, opts: &DistanceOpts) -> bool {
    let radii = cs.reach_radii(x, rho);
    if radii.iter().zip(x.iter().zip(y)).any(|(r, (a, b))| (a - b).abs() > *r) {
        return false;
    }
    let o = DistanceOpts { accept_below: Some(rho), lower: LowerBound::None, ..*opts };
    match cc_distance(cs, x, y, &o) {
        Ok(r) => r.upper < rho,
        Err(_) => false,
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VolumeOpts {
    pub samples: usize,
    pub seed: u64,
    pub distance: DistanceOpts,
    /// Fail if the relative 95% half-width exceeds this.
    pub ci_target: Option<f64>,
}

impl Default for VolumeOpts {
    fn default() -> Self {
        VolumeOpts {
            samples: 2000,
            seed: crate::rng::DEFAULT_SEED,
            distance: DistanceOpts::membership(),
            ci_target: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct VolumeEstimate {
    pub estimate: f64,
    pub ci_halfwidth: f64,
    pub hits: usize,
    pub samples: usize,
    pub box_volume: f64,
}

/// Points of the fixed unit cloud in `[-1, 1]^n`.
pub fn unit_cloud(n: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..samples)
        .map(|i| {
            let mut rng = stream_rng(seed ^ 0x5eed_b0c5, i as u64);
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
        })
        .collect()
}

/// Monte Carlo `|B(x, ρ)|` over the rigorous reachable box.
pub fn ball_volume(cs: &ControlSystem, x: &[f64], rho: f64, opts: &VolumeOpts) -> Result<VolumeEstimate> {
    if !(rho > 0.0) {
        return Err(Error::Config(format!("radius must be positive, got {rho}")));
    }
    let n = cs.dim();
    let radii = cs.reach_radii(x, rho);
    let box_volume: f64 = radii.iter().map(|r| 2.0 * r).product();
    let cloud = unit_cloud(n, opts.samples, opts.seed);
    let hits: usize = cloud
        .par_iter()
        .map(|u| {
            let y: Vec<f64> = (0..n).map(|k| x[k] + radii[k] * u[k]).collect();
            ball_member(cs, x, &y, rho, &opts.distance) as usize
        })
        .sum();
    let p = hits as f64 / opts.samples as f64;
    let half = 1.96 * (p * (1.0 - p) / opts.samples as f64).sqrt() * box_volume;
    let est = VolumeEstimate { estimate: p * box_volume, ci_halfwidth: half, hits, samples: opts.samples, box_volume };
    if let Some(target) = opts.ci_target {
        if est.estimate == 0.0 || half > target * est.estimate {
            return Err(Error::numerical(format!(
                "volume CI {half:.3e} exceeds target {target} x estimate {:.3e}",
                est.estimate
            )));
        }
    }
    Ok(est)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoublingRow {
    pub x: Vec<f64>,
    pub rho: f64,
    pub volume: f64,
    pub volume_2rho: f64,
    pub ratio: f64,
    pub log2_ratio: f64,
}

pub fn doubling_report(cs: &ControlSystem, points: &[Vec<f64>], radii: &[f64], opts: &VolumeOpts) -> Result<Vec<DoublingRow>> {
    let mut rows = Vec::new();
    for x in points {
        for &rho in radii {
            let v1 = ball_volume(cs, x, rho, opts)?.estimate;
            let v2 = ball_volume(cs, x, 2.0 * rho, opts)?.estimate;
            if v1 <= 0.0 || !v2.is_finite() {
                return Err(Error::numerical(format!("degenerate volume at x={x:?}, rho={rho}")));
            }
            let ratio = v2 / v1;
            rows.push(DoublingRow { x: x.clone(), rho, volume: v1, volume_2rho: v2, ratio, log2_ratio: ratio.log2() });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VolumeProfile {
    pub rho: Vec<f64>,
    pub volumes: Vec<VolumeEstimate>,
    /// Slopes between consecutive radii, reported at the geometric midpoint.
    pub slope_at: Vec<f64>,
    pub slopes: Vec<f64>,
    pub within_bounds: bool,
}

/// Log-log slopes of `ρ ↦ |B(x, ρ)|`; these must lie in `[n - tol, q + tol]`.
pub fn volume_profile_fit(cs: &ControlSystem, x: &[f64], rho_grid: &[f64], q: f64, tol: f64, opts: &VolumeOpts) -> Result<VolumeProfile> {
    if rho_grid.len() < 2 {
        return Err(Error::Config("radius grid needs at least two points".into()));
    }
    let lo = rho_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rho_grid.iter().cloned().fold(0.0, f64::max);
    if hi / lo < 8.0 {
        return Err(Error::Config("radius grid must span at least three doublings".into()));
    }
    let volumes = rho_grid
        .iter()
        .map(|&r| ball_volume(cs, x, r, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut slopes = Vec::new();
    let mut slope_at = Vec::new();
    for i in 0..rho_grid.len() - 1 {
        let (r0, r1) = (rho_grid[i], rho_grid[i + 1]);
        slopes.push((volumes[i + 1].estimate / volumes[i].estimate).ln() / (r1 / r0).ln());
        slope_at.push((r0 * r1).sqrt());
    }
    let n = cs.dim() as f64;
    let within_bounds = slopes.iter().all(|s| *s >= n - tol && *s <= q + tol);
    Ok(VolumeProfile { rho: rho_grid.to_vec(), volumes, slope_at, slopes, within_bounds })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Midpoint {
    pub z: Vec<f64>,
    pub distance: f64,
    pub d_xz: f64,
    pub d_zy: f64,
}

/// Point on the witness path with both half-distances within `tolerance · d`.
pub fn midpoint_search(cs: &ControlSystem, x: &[f64], y: &[f64], tolerance: f64, opts: &DistanceOpts) -> Result<Midpoint> {
    let full = cc_distance(cs, x, y, opts)?;
    let d = full.upper;
    if d == 0.0 {
        return Ok(Midpoint { z: x.to_vec(), distance: 0.0, d_xz: 0.0, d_zy: 0.0 });
    }
    let eval = |s: f64| -> Result<(f64, Vec<f64>, f64, f64)> {
        let z = full.path.point_at(cs, x, s);
        let a = cc_distance(cs, x, &z, opts)?.upper;
        let b = cc_distance(cs, &z, y, opts)?.upper;
        let dev = (a - 0.5 * d).abs().max((b - 0.5 * d).abs());
        Ok((dev, z, a, b))
    };
    let mut best = eval(0.5)?;
    if best.0 > tolerance * d {
        // Golden-section refinement of the path parameter.
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (0.35, 0.65);
        for _ in 0..20 {
            let s1 = hi - g * (hi - lo);
            let s2 = lo + g * (hi - lo);
            let e1 = eval(s1)?;
            let e2 = eval(s2)?;
            if e1.0 < e2.0 {
                hi = s2;
                if e1.0 < best.0 {
                    best = e1;
                }
            } else {
                lo = s1;
                if e2.0 < best.0 {
                    best = e2;
                }
            }
            if best.0 <= tolerance * d {
                break;
            }
        }
    }
    if best.0 > tolerance * d {
        return Err(Error::numerical(format!(
            "midpoint tolerance {tolerance} unattained (deviation {:.3e} of d = {d:.6})",
            best.0
        )));
    }
    Ok(Midpoint { z: best.1, distance: d, d_xz: best.2, d_zy: best.3 })
}
