//! The base heat kernel `Γ` obtained by saturating the group kernel over the
//! added variables, its derivatives and its adjoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::ControlSystem;
use crate::group::{CarnotGroup, GroupKernel, KernelOpts, Method, PropertyCheck};
use crate::poly::{CompiledPoly, Poly};
use crate::quadrature::{adaptive, composite_rule, tensor_rule, AdaptiveOpts};
pub use crate::quadrature::sinh_rule;

const ROUTE_B_REL_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SaturationOpts {
    /// Truncate where the Gaussian majorant drops below `eps` times its peak.
    pub eps: f64,
    /// Constant `c` of the majorant `c t^{-Q/2} exp(-‖u‖²/(c t))`.
    pub envelope_c: f64,
    pub rel_tol: f64,
    /// Nodes per axis for tensor rules when `p ≥ 2`.
    pub nodes_per_axis: usize,
}

impl Default for SaturationOpts {
    fn default() -> Self {
        SaturationOpts { eps: 1e-10, envelope_c: 6.0, rel_tol: 1e-10, nodes_per_axis: 24 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub abs_error: f64,
    /// Half-widths of the η-box used.
    pub eta_radius: Vec<f64>,
    pub method: Method,
}

impl KernelValue {
    fn zero(p: usize, method: Method) -> Self {
        KernelValue { value: 0.0, abs_error: 0.0, eta_radius: vec![0.0; p], method }
    }
}

/// `Γ(t, x, y) = ∫_{R^p} γ_G(t, (y,0)^{-1} ∗ (x,η)) dη`.
#[derive(Clone, Debug)]
pub struct HeatKernel {
    group: CarnotGroup,
    gk: GroupKernel,
    base: ControlSystem,
    opts: SaturationOpts,
    /// `(y,0)^{-1} ∗ (x,η)` as polynomials in `(x, y, η)`.
    arg: Vec<CompiledPoly>,
    /// Lower-order part of the η-components, for the truncation box.
    eta_rest: Vec<CompiledPoly>,
}

impl HeatKernel {
    pub fn new(group: CarnotGroup, kopts: &KernelOpts, opts: SaturationOpts) -> Result<Self> {
        let gk = group.kernel(kopts)?;
        let n = group.n();
        let p = group.p();
        let nt = group.N();
        let nv = 2 * n + p;
        let y0: Vec<Poly> = (0..nt)
            .map(|k| if k < n { Poly::var(nv, n + k) } else { Poly::zero(nv) })
            .collect();
        let yinv: Vec<Poly> = group.inverse_polys().iter().map(|c| c.substitute(&y0)).collect();
        let xeta: Vec<Poly> = (0..nt)
            .map(|k| if k < n { Poly::var(nv, k) } else { Poly::var(nv, 2 * n + (k - n)) })
            .collect();
        let args: Vec<Poly> = yinv.into_iter().chain(xeta).collect();
        let arg_polys: Vec<Poly> = group.law().iter().map(|c| c.substitute(&args)).collect();
        let mut eta_rest = Vec::with_capacity(p);
        for k in 0..p {
            let rest = arg_polys[n + k].sub(&Poly::var(nv, 2 * n + k));
            // The remainder may only involve η-coordinates of strictly smaller weight.
            let tk = group.lifted_weights()[k];
            for (e, _) in rest.terms() {
                for (i, &ei) in e[2 * n..].iter().enumerate() {
                    if ei > 0 && (i == k || group.lifted_weights()[i] >= tk) {
                        return Err(Error::Group("group law is not graded in the added variables".into()));
                    }
                }
            }
            eta_rest.push(rest.compile());
        }
        let base = ControlSystem::from_system(group.base());
        Ok(HeatKernel {
            arg: arg_polys.iter().map(Poly::compile).collect(),
            eta_rest,
            base,
            gk,
            group,
            opts,
        })
    }

    /// Catalog system with its catalog lifting and default options.
    pub fn catalog(name: &str) -> Result<Self> {
        HeatKernel::new(crate::catalog::group(name)?, &KernelOpts::default(), SaturationOpts::default())
    }

    pub fn group(&self) -> &CarnotGroup {
        &self.group
    }

    pub fn group_kernel(&self) -> &GroupKernel {
        &self.gk
    }

    pub fn base(&self) -> &ControlSystem {
        &self.base
    }

    pub fn opts(&self) -> &SaturationOpts {
        &self.opts
    }

    pub fn q(&self) -> u32 {
        self.group.base().q()
    }

    /// Group point `(y,0)^{-1} ∗ (x,η)`.
    pub fn group_point(&self, x: &[f64], y: &[f64], eta: &[f64]) -> Vec<f64> {
        let args: Vec<f64> = x.iter().chain(y).chain(eta).copied().collect();
        self.arg.iter().map(|c| c.eval(&args)).collect()
    }

    /// η-box outside which the majorant is below `eps` times its peak.
    pub fn eta_box(&self, t: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.eta_box_with(t, x, y, true)
    }

    fn eta_box_with(&self, t: f64, x: &[f64], y: &[f64], clip: bool) -> Vec<f64> {
        let n = self.group.n();
        let p = self.group.p();
        let c = self.opts.envelope_c;
        let mut base_pt = self.group_point(x, y, &vec![0.0; p]);
        base_pt.truncate(self.group.N());
        let offset = self.group.homogeneous_norm(&base_pt);
        let g = (c * t * (c / self.opts.eps).ln()).sqrt() + offset;
        let tau = self.group.lifted_weights();
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by_key(|&k| tau[k]);
        let support = if clip { self.gk.support_radii(t) } else { None };
        let mut radii = vec![0.0; p];
        for &k in &order {
            let mut box_r: Vec<f64> = x.iter().chain(y).map(|v| v.abs()).collect();
            box_r.extend(radii.iter());
            let rest = self.eta_rest[k].abs_bound(&box_r);
            radii[k] = g.powi(tau[k] as i32) + rest;
            if let Some(s) = &support {
                radii[k] = radii[k].min(s[n + k] + rest);
            }
        }
        radii
    }

    /// Integrates `h(u)` over η at `u = (y,0)^{-1} ∗ (x,η)`; `h` returns value and error.
    fn integrate_eta<H>(&self, t: f64, x: &[f64], y: &[f64], h: H) -> (f64, f64, Vec<f64>)
    where
        H: Fn(&[f64]) -> (f64, f64),
    {
        self.integrate_eta_with(t, x, y, true, self.opts.rel_tol, h)
    }

    fn integrate_eta_with<H>(&self, t: f64, x: &[f64], y: &[f64], clip: bool, rel_tol: f64, h: H) -> (f64, f64, Vec<f64>)
    where
        H: Fn(&[f64]) -> (f64, f64),
    {
        let p = self.group.p();
        if p == 0 {
            let u = self.group_point(x, y, &[]);
            let (v, e) = h(&u);
            return (v, e, Vec::new());
        }
        let radii = self.eta_box_with(t, x, y, clip);
        if p == 1 {
            let err_acc = std::cell::Cell::new(0.0);
            let r = adaptive(
                |eta| {
                    let u = self.group_point(x, y, &[eta]);
                    let (v, e) = h(&u);
                    err_acc.set(err_acc.get() + e);
                    v
                },
                -radii[0],
                radii[0],
                AdaptiveOpts { rel_tol, initial_pieces: 8, abs_tol: 1e-300, max_intervals: 400 },
            );
            // Integrand errors are averaged over the nodes actually used.
            let mean_err = err_acc.get() / r.evals.max(1) as f64 * 2.0 * radii[0];
            return (r.value, r.abs_error + mean_err + self.opts.eps * r.value.abs(), radii);
        }
        let half = self.opts.nodes_per_axis / 2;
        let axes: Vec<Vec<(f64, f64)>> = radii.iter().map(|&r| composite_rule(-r, r, 2, half.max(2))).collect();
        let (mut val, mut err) = (0.0, 0.0);
        for (eta, w) in tensor_rule(&axes) {
            let u = self.group_point(x, y, &eta);
            let (v, e) = h(&u);
            val += w * v;
            err += w * e;
        }
        (val, err + self.opts.eps * val.abs(), radii)
    }

    pub fn saturate(&self, t: f64, x: &[f64], y: &[f64]) -> Result<KernelValue> {
        let method = self.gk.method();
        let n = self.group.n();
        if x.len() != n || y.len() != n {
            return Err(Error::Config(format!("points must have dimension {n}")));
        }
        if t <= 0.0 {
            return Ok(KernelValue::zero(self.group.p(), method));
        }
        let (value, abs_error, eta_radius) = self.integrate_eta(t, x, y, |u| {
            let g = self.gk.eval(t, u);
            (g.value, g.abs_error)
        });
        if !value.is_finite() {
            return Err(Error::numerical(format!("saturation produced {value} at t={t}, x={x:?}, y={y:?}")));
        }
        Ok(KernelValue { value: value.max(0.0), abs_error, eta_radius, method })
    }

    /// `Γ(t, x, y)`; panics only on dimension mismatch.
    pub fn value(&self, t: f64, x: &[f64], y: &[f64]) -> f64 {
        self.saturate(t, x, y).expect("kernel evaluation").value
    }

    /// Time-dependent form `Γ(t, x; s, y) = Γ(t - s, x, y)`.
    pub fn fundamental(&self, t: f64, x: &[f64], s: f64, y: &[f64]) -> Result<KernelValue> {
        self.saturate(t - s, x, y)
    }

    /// `Γ*(t, u; s, v) = Γ(s, v; t, u)`, the kernel of `L + ∂_t`.
    pub fn adjoint_kernel(&self, t: f64, u: &[f64], s: f64, v: &[f64]) -> Result<KernelValue> {
        self.fundamental(s, v, t, u)
    }

    /// Derivative `∂_t^k Y^y ⋯ X^x ⋯ Γ(t, x, y)` by two routes.
    pub fn derivative(&self, t: f64, x: &[f64], y: &[f64], spec: &DerivativeSpec) -> Result<DerivativeValue> {
        let order = spec.order();
        if order > 3 {
            return Err(Error::Config(format!("derivative order {order} exceeds 3")));
        }
        let m = self.base.m();
        if spec.x_fields.iter().chain(&spec.y_fields).any(|&j| j >= m) {
            return Err(Error::Config(format!("field index out of range (m = {m})")));
        }
        if t <= 0.0 {
            return Err(Error::Config("derivatives are taken at t > 0".into()));
        }
        let hx = spec.step * t.sqrt();
        let ht = spec.step * t;
        let route_a = self.route_a(t, x, y, spec.time_order, &spec.x_fields, &spec.y_fields, hx, ht)?;
        let route_b = self.route_b_y(t, x, y, spec, hx)?;
        let scale = route_a.abs().max(route_b.abs());
        let gap = (route_a - route_b).abs();
        Ok(DerivativeValue { value: route_b, route_a, route_b, relative_gap: if scale > 0.0 { gap / scale } else { 0.0 } })
    }

    #[allow(clippy::too_many_arguments)]
    fn route_a(&self, t: f64, x: &[f64], y: &[f64], k: u32, xf: &[usize], yf: &[usize], hx: f64, ht: f64) -> Result<f64> {
        if let Some((&j, rest)) = yf.split_first() {
            let yp = self.base.flow(j, y, hx, 1);
            let ym = self.base.flow(j, y, -hx, 1);
            let a = self.route_a(t, x, &yp, k, xf, rest, hx, ht)?;
            let b = self.route_a(t, x, &ym, k, xf, rest, hx, ht)?;
            return Ok((a - b) / (2.0 * hx));
        }
        if let Some((&j, rest)) = xf.split_first() {
            let xp = self.base.flow(j, x, hx, 1);
            let xm = self.base.flow(j, x, -hx, 1);
            let a = self.route_a(t, &xp, y, k, rest, yf, hx, ht)?;
            let b = self.route_a(t, &xm, y, k, rest, yf, hx, ht)?;
            return Ok((a - b) / (2.0 * hx));
        }
        if k > 0 {
            let a = self.route_a(t + ht, x, y, k - 1, xf, yf, hx, ht)?;
            let b = self.route_a(t - ht, x, y, k - 1, xf, yf, hx, ht)?;
            return Ok((a - b) / (2.0 * ht));
        }
        Ok(self.saturate(t, x, y)?.value)
    }

    /// y-fields by base differences around the group-level route.
    fn route_b_y(&self, t: f64, x: &[f64], y: &[f64], spec: &DerivativeSpec, hx: f64) -> Result<f64> {
        if let Some((&j, rest)) = spec.y_fields.split_first() {
            let inner = DerivativeSpec { y_fields: rest.to_vec(), ..spec.clone() };
            let yp = self.base.flow(j, y, hx, 1);
            let ym = self.base.flow(j, y, -hx, 1);
            let a = self.route_b_y(t, x, &yp, &inner, hx)?;
            let b = self.route_b_y(t, x, &ym, &inner, hx)?;
            return Ok((a - b) / (2.0 * hx));
        }
        let gcs = self.group.control();
        let hz = hx;
        // Difference quotients carry rounding noise well above the value tolerance.
        let (v, _, _) = self.integrate_eta_with(t, x, y, true, ROUTE_B_REL_TOL, |u| {
            (group_op(gcs, &self.gk, t, u, spec.time_order, &spec.x_fields, hz), 0.0)
        });
        Ok(v)
    }

    /// `H(x, y, t) = t^{-Q/2} ∫ exp(-‖(x,0)^{-1} ∗ (y,η)‖² / t) dη` with the group gauge.
    pub fn gauge_integral(&self, t: f64, x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
        if t <= 0.0 {
            return Err(Error::Config("gauge integral needs t > 0".into()));
        }
        let (v, e, _) = self.integrate_eta_with(t, y, x, false, self.opts.rel_tol, |u| {
            let g = self.group.homogeneous_norm(u);
            ((-g * g / t).exp(), 0.0)
        });
        let f = t.powf(-(self.group.Q() as f64) / 2.0);
        Ok((v * f, e * f))
    }

    /// `∫ Γ(t, x, y) dy` on a sinh-mapped tensor trapezoid rule.
    pub fn mass(&self, t: f64, x: &[f64], nodes_per_axis: usize) -> Result<f64> {
        let rule = base_rule(&self.base, t, x, nodes_per_axis);
        let mut acc = 0.0;
        for (y, w) in rule {
            acc += w * self.saturate(t, x, &y)?.value;
        }
        Ok(acc)
    }
}

/// `Z_{j_1} ⋯ Z_{j_r} (Σ Z_j²)^k γ_G(t, ·)` at `u` by central differences along left-invariant flows.
///
/// `∂_t γ_G = Σ Z_j² γ_G` and `∂_t` commutes with each `Z_i`, so the sum goes innermost.
fn group_op(gcs: &ControlSystem, gk: &GroupKernel, t: f64, u: &[f64], k: u32, fields: &[usize], h: f64) -> f64 {
    if let Some((&j, rest)) = fields.split_first() {
        let up = gcs.flow(j, u, h, 1);
        let um = gcs.flow(j, u, -h, 1);
        return (group_op(gcs, gk, t, &up, k, rest, h) - group_op(gcs, gk, t, &um, k, rest, h)) / (2.0 * h);
    }
    if k > 0 {
        let center = group_op(gcs, gk, t, u, k - 1, fields, h);
        let mut acc = 0.0;
        for j in 0..gcs.m() {
            let up = gcs.flow(j, u, h, 1);
            let um = gcs.flow(j, u, -h, 1);
            acc += group_op(gcs, gk, t, &up, k - 1, fields, h) - 2.0 * center + group_op(gcs, gk, t, &um, k - 1, fields, h);
        }
        return acc / (h * h);
    }
    gk.value(t, u)
}

/// Sinh-mapped tensor trapezoid rule on `R^n` centered at `x`, scaled by the reachable box of radius `√t`.
pub fn base_rule(cs: &ControlSystem, t: f64, x: &[f64], nodes_per_axis: usize) -> Vec<(Vec<f64>, f64)> {
    let scales = cs.reach_radii(x, t.sqrt());
    let axes: Vec<Vec<(f64, f64)>> = scales
        .iter()
        .zip(x)
        .map(|(&s, &c)| sinh_rule(c, s, 4.2, nodes_per_axis))
        .collect();
    tensor_rule(&axes)
}


#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DerivativeSpec {
    pub time_order: u32,
    /// Fields acting on `x`, outermost first (0-based indices).
    pub x_fields: Vec<usize>,
    /// Fields acting on `y`, outermost first.
    pub y_fields: Vec<usize>,
    /// Relative step; flows use `step·√t`, time uses `step·t`.
    pub step: f64,
}

impl DerivativeSpec {
    pub fn new(time_order: u32, x_fields: Vec<usize>, y_fields: Vec<usize>) -> Self {
        DerivativeSpec { time_order, x_fields, y_fields, step: 0.02 }
    }

    /// `k + r`.
    pub fn order(&self) -> u32 {
        self.time_order + (self.x_fields.len() + self.y_fields.len()) as u32
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct DerivativeValue {
    pub value: f64,
    pub route_a: f64,
    pub route_b: f64,
    pub relative_gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    pub steps: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `(4 R(h) - R(2h)) / 3` from the two finest steps.
    pub extrapolated: f64,
    /// `log2(|R(2h)| / |R(h)|)` from the two finest steps.
    pub observed_order: f64,
}

/// `(Σ X_j² + sign·∂_t) u` at `(t, x)` by central differences along the field flows.
///
/// `sign = -1` gives the heat operator, `+1` its adjoint.
pub fn caloric_residual_at<U>(cs: &ControlSystem, u: &U, t: f64, x: &[f64], h: f64, sign: f64) -> f64
where
    U: Fn(f64, &[f64]) -> f64,
{
    let c = u(t, x);
    let mut acc = 0.0;
    for j in 0..cs.m() {
        let xp = cs.flow(j, x, h, 1);
        let xm = cs.flow(j, x, -h, 1);
        acc += (u(t, &xp) - 2.0 * c + u(t, &xm)) / (h * h);
    }
    let ht = h * h;
    let dt = (u(t + ht, x) - u(t - ht, x)) / (2.0 * ht);
    acc + sign * dt
}

/// Residuals over a sequence of halving steps (finest last).
pub fn caloric_residual<U>(cs: &ControlSystem, u: &U, t: f64, x: &[f64], steps: &[f64], sign: f64) -> ResidualReport
where
    U: Fn(f64, &[f64]) -> f64,
{
    let residuals: Vec<f64> = steps.iter().map(|&h| caloric_residual_at(cs, u, t, x, h, sign)).collect();
    let k = residuals.len();
    let (extrapolated, observed_order) = if k >= 2 {
        let (r2h, rh) = (residuals[k - 2], residuals[k - 1]);
        ((4.0 * rh - r2h) / 3.0, (r2h.abs() / rh.abs()).log2())
    } else {
        (residuals.last().copied().unwrap_or(0.0), f64::NAN)
    };
    ResidualReport { steps: steps.to_vec(), residuals, extrapolated, observed_order }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelPropertyOpts {
    pub samples: usize,
    pub seed: u64,
    pub mass_points: Vec<Vec<f64>>,
    pub mass_nodes: usize,
    /// `(t, s, x, y)` cases of the reproduction identity.
    pub reproduction: Vec<(f64, f64, Vec<f64>, Vec<f64>)>,
    pub reproduction_nodes: usize,
    pub symmetry_tol: f64,
    pub mass_tol: f64,
    pub homogeneity_tol: f64,
    pub reproduction_tol: f64,
}

impl KernelPropertyOpts {
    pub fn for_dim(n: usize) -> Self {
        let unit = |k: usize| (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
        let pt = |a: f64, b: f64| (0..n).map(|i| if i == 0 { a } else if i == 1 { b } else { 0.0 }).collect::<Vec<f64>>();
        KernelPropertyOpts {
            samples: 20,
            seed: crate::rng::DEFAULT_SEED,
            mass_points: vec![vec![0.0; n], unit(0)],
            mass_nodes: 31,
            reproduction: vec![(0.5, 0.5, pt(0.3, 0.2), pt(-0.2, 0.4)), (0.25, 0.75, pt(1.0, 0.0), pt(0.5, 0.5))],
            reproduction_nodes: 25,
            symmetry_tol: 1e-4,
            mass_tol: 1e-3,
            homogeneity_tol: 5e-3,
            reproduction_tol: 1e-2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct KernelPropertyReport {
    pub system: String,
    pub method: Method,
    pub masses: Vec<f64>,
    /// `(∫ Γ(t,x,z) Γ(s,z,y) dz, Γ(t+s,x,y))` per case.
    pub reproduction: Vec<(f64, f64)>,
    pub checks: Vec<PropertyCheck>,
    pub passed: bool,
}

/// `(t, x, y)` with `t ∈ [1/4, 4]` log-uniform and `x, y = δ_{√t} v`, `v ∈ [-1.5, 1.5]^n`.
pub fn kernel_samples(cs: &ControlSystem, count: usize, seed: u64) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
    use rand::Rng;
    (0..count)
        .map(|i| {
            let mut rng = crate::rng::stream_rng(seed ^ 0x6a11_5a3e, i as u64);
            let t = 4f64.powf(rng.random_range(-1.0..1.0));
            let mut draw = || -> Vec<f64> { (0..cs.dim()).map(|_| rng.random_range(-1.5..1.5)).collect() };
            let (x, y) = (draw(), draw());
            (t, cs.dilate(t.sqrt(), &x), cs.dilate(t.sqrt(), &y))
        })
        .collect()
}

/// `∫ Γ(t, x, z) Γ(s, z, y) dz` on a sinh tensor rule centered between `x` and `y`.
pub fn reproduction_integral(k: &HeatKernel, t: f64, s: f64, x: &[f64], y: &[f64], nodes: usize) -> Result<f64> {
    use rayon::prelude::*;
    let mid: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
    let rule = base_rule(&k.base, t + s, &mid, nodes);
    let vals = rule
        .par_iter()
        .map(|(z, w)| Ok(w * k.saturate(t, x, z)?.value * k.saturate(s, z, y)?.value))
        .collect::<Result<Vec<f64>>>()?;
    Ok(crate::rng::pairwise_sum(&vals))
}

/// Symmetry, positivity, vanishing for `t ≤ 0`, homogeneity for `λ ∈ {1/2, 2, 3}`,
/// unit mass and the reproduction identity.
pub fn kernel_property_suite(k: &HeatKernel, opts: &KernelPropertyOpts) -> Result<KernelPropertyReport> {
    use rayon::prelude::*;
    let cs = &k.base;
    let q = k.q() as f64;
    let samples = kernel_samples(cs, opts.samples, opts.seed);
    type Row = (KernelValue, KernelValue, KernelValue, KernelValue, KernelValue, KernelValue);
    let rows = samples
        .par_iter()
        .map(|(t, x, y)| -> Result<Row> {
            let a = k.saturate(*t, x, y)?;
            let b = k.saturate(*t, y, x)?;
            let h = k.saturate(0.25 * t, &cs.dilate(0.5, x), &cs.dilate(0.5, y))?;
            let d = k.saturate(4.0 * t, &cs.dilate(2.0, x), &cs.dilate(2.0, y))?;
            let z = k.saturate(-*t, x, y)?;
            let e = k.saturate(9.0 * t, &cs.dilate(3.0, x), &cs.dilate(3.0, y))?;
            Ok((a, b, h, d, z, e))
        })
        .collect::<Result<Vec<Row>>>()?;
    let wit = |t: &f64, x: &Vec<f64>, y: &Vec<f64>| format!("t={t}, x={x:?}, y={y:?}");
    let mut checks = Vec::new();
    checks.push(PropertyCheck::from_rows(
        "positive for t > 0",
        0.0,
        samples.iter().zip(&rows).map(|((t, x, y), r)| (if r.0.value > 0.0 { 0.0 } else { 1.0 }, f64::MIN_POSITIVE, wit(t, x, y))),
    ));
    checks.push(PropertyCheck::from_rows(
        "vanishes for t <= 0",
        0.0,
        samples.iter().zip(&rows).map(|((t, x, y), r)| (if r.4.value == 0.0 { 0.0 } else { 1.0 }, f64::MIN_POSITIVE, wit(t, x, y))),
    ));
    checks.push(PropertyCheck::from_rows(
        "symmetry",
        opts.symmetry_tol,
        samples.iter().zip(&rows).map(|((t, x, y), r)| {
            let allow = opts.symmetry_tol * r.0.value.max(r.1.value) + r.0.abs_error + r.1.abs_error;
            ((r.0.value - r.1.value).abs(), allow, format!("{}: {} vs {}", wit(t, x, y), r.0.value, r.1.value))
        }),
    ));
    checks.push(PropertyCheck::from_rows(
        "homogeneity",
        opts.homogeneity_tol,
        samples.iter().zip(&rows).flat_map(|((t, x, y), r)| {
            [(0.5f64, &r.2), (2.0, &r.3), (3.0, &r.5)].map(|(lam, v)| {
                let scaled = lam.powf(q) * v.value;
                let allow = opts.homogeneity_tol * r.0.value + r.0.abs_error + lam.powf(q) * v.abs_error;
                ((scaled - r.0.value).abs(), allow, format!("{} λ={lam}: {scaled} vs {}", wit(t, x, y), r.0.value))
            })
        }),
    ));
    let masses = opts.mass_points.iter().map(|x| k.mass(1.0, x, opts.mass_nodes)).collect::<Result<Vec<f64>>>()?;
    checks.push(PropertyCheck::from_rows(
        "unit mass",
        opts.mass_tol,
        opts.mass_points.iter().zip(&masses).map(|(x, m)| ((m - 1.0).abs(), opts.mass_tol, format!("x={x:?}: mass {m}"))),
    ));
    let mut reproduction = Vec::new();
    for (t, s, x, y) in &opts.reproduction {
        let lhs = reproduction_integral(k, *t, *s, x, y, opts.reproduction_nodes)?;
        let rhs = k.saturate(t + s, x, y)?.value;
        reproduction.push((lhs, rhs));
    }
    checks.push(PropertyCheck::from_rows(
        "reproduction",
        opts.reproduction_tol,
        opts.reproduction.iter().zip(&reproduction).map(|((t, s, x, y), (l, r))| {
            ((l - r).abs(), opts.reproduction_tol * r, format!("t={t}, s={s}, x={x:?}, y={y:?}: {l} vs {r}"))
        }),
    ));
    let passed = checks.iter().all(|c| c.passed);
    Ok(KernelPropertyReport { system: k.group.base().name().to_string(), method: k.gk.method(), masses, reproduction, checks, passed })
}
