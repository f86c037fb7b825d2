//! Control-affine dynamics `γ' = Σ a_j X_j(γ)` integrated with RK4.

use crate::systems::{CompiledField, HomogeneousSystem};

/// Norm used on the control vector `a ∈ R^m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlNorm {
    /// `|a|_2`; gives the Euclidean metric for coordinate fields.
    #[default]
    Euclidean,
    /// `max_j |a_j|`.
    Max,
}

impl ControlNorm {
    pub fn of(&self, a: &[f64]) -> f64 {
        match self {
            ControlNorm::Euclidean => a.iter().map(|v| v * v).sum::<f64>().sqrt(),
            ControlNorm::Max => a.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

/// Numeric driftless control system on `R^dim`.
#[derive(Clone, Debug)]
pub struct ControlSystem {
    dim: usize,
    fields: Vec<CompiledField>,
    weights: Vec<u32>,
}

/// Scratch buffers for [`ControlSystem::rk4_step_jac`].
pub struct Rk4Work {
    n: usize,
    m: usize,
    stage: Vec<f64>,
    k: [Vec<f64>; 4],
    // Derivatives of the stage point and of k_i, row-major n × (n + m).
    dstage: Vec<f64>,
    dk: [Vec<f64>; 4],
    col: Vec<f64>,
    out: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Work {
    pub fn new(n: usize, m: usize) -> Self {
        let c = n + m;
        Rk4Work {
            n,
            m,
            stage: vec![0.0; n],
            k: std::array::from_fn(|_| vec![0.0; n]),
            dstage: vec![0.0; n * c],
            dk: std::array::from_fn(|_| vec![0.0; n * c]),
            col: vec![0.0; n],
            out: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

impl ControlSystem {
    pub fn new(fields: Vec<CompiledField>, weights: Vec<u32>) -> Self {
        let dim = weights.len();
        assert!(fields.iter().all(|f| f.dim() == dim));
        ControlSystem { dim, fields, weights }
    }

    pub fn from_system(sys: &HomogeneousSystem) -> Self {
        ControlSystem::new(sys.compiled(), sys.weights().to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.fields.len()
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    pub fn fields(&self) -> &[CompiledField] {
        &self.fields
    }

    pub fn dilate(&self, lambda: f64, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.weights)
            .map(|(v, &w)| lambda.powi(w as i32) * v)
            .collect()
    }

    /// `out = Σ a_j X_j(x)`.
    #[inline]
    pub fn velocity(&self, x: &[f64], a: &[f64], out: &mut [f64], tmp: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (f, &aj) in self.fields.iter().zip(a) {
            if aj == 0.0 {
                continue;
            }
            f.eval_into(x, tmp);
            for (o, t) in out.iter_mut().zip(tmp.iter()) {
                *o += aj * t;
            }
        }
    }

    /// One RK4 step of length `h` with constant control `a`.
    pub fn rk4_step(&self, x: &[f64], a: &[f64], h: f64) -> Vec<f64> {
        let n = self.dim;
        let mut tmp = vec![0.0; n];
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut s = vec![0.0; n];
        self.velocity(x, a, &mut k1, &mut tmp);
        for i in 0..n {
            s[i] = x[i] + 0.5 * h * k1[i];
        }
        self.velocity(&s, a, &mut k2, &mut tmp);
        for i in 0..n {
            s[i] = x[i] + 0.5 * h * k2[i];
        }
        self.velocity(&s, a, &mut k3, &mut tmp);
        for i in 0..n {
            s[i] = x[i] + h * k3[i];
        }
        self.velocity(&s, a, &mut k4, &mut tmp);
        (0..n)
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }

    /// RK4 step together with its Jacobian `[∂x'/∂x | ∂x'/∂a]` (row-major `n × (n+m)`).
    pub fn rk4_step_jac(&self, x: &[f64], a: &[f64], h: f64, w: &mut Rk4Work, x_out: &mut [f64], jac: &mut [f64]) {
        let n = w.n;
        let c = n + w.m;
        const COEF: [f64; 3] = [0.5, 0.5, 1.0];
        // Stage point derivative starts as [I | 0].
        w.dstage.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            w.dstage[i * c + i] = 1.0;
        }
        w.stage.copy_from_slice(x);
        for st in 0..4 {
            self.velocity(&w.stage, a, &mut w.k[st], &mut w.tmp);
            // dk = (Σ a_j DX_j(stage)) · dstage + [0 | X(stage)]
            let dk = &mut w.dk[st];
            dk.iter_mut().for_each(|v| *v = 0.0);
            for col in 0..c {
                for i in 0..n {
                    w.col[i] = w.dstage[i * c + col];
                }
                if w.col.iter().all(|v| *v == 0.0) {
                    continue;
                }
                w.out.iter_mut().for_each(|v| *v = 0.0);
                for (f, &aj) in self.fields.iter().zip(a) {
                    if aj != 0.0 {
                        f.jac_vec_add(&w.stage, &w.col, aj, &mut w.out);
                    }
                }
                for i in 0..n {
                    dk[i * c + col] = w.out[i];
                }
            }
            for (j, f) in self.fields.iter().enumerate() {
                f.eval_into(&w.stage, &mut w.tmp);
                for i in 0..n {
                    dk[i * c + n + j] += w.tmp[i];
                }
            }
            if st < 3 {
                let s = COEF[st] * h;
                for i in 0..n {
                    w.stage[i] = x[i] + s * w.k[st][i];
                }
                for idx in 0..n * c {
                    w.dstage[idx] = s * dk[idx];
                }
                for i in 0..n {
                    w.dstage[i * c + i] += 1.0;
                }
            }
        }
        let h6 = h / 6.0;
        for i in 0..n {
            x_out[i] = x[i] + h6 * (w.k[0][i] + 2.0 * w.k[1][i] + 2.0 * w.k[2][i] + w.k[3][i]);
        }
        for idx in 0..n * c {
            jac[idx] = h6 * (w.dk[0][idx] + 2.0 * w.dk[1][idx] + 2.0 * w.dk[2][idx] + w.dk[3][idx]);
        }
        for i in 0..n {
            jac[i * c + i] += 1.0;
        }
    }

    /// Integrates piecewise-constant controls with the given segment durations.
    pub fn integrate(&self, x0: &[f64], controls: &[Vec<f64>], durations: &[f64]) -> Vec<f64> {
        let mut x = x0.to_vec();
        for (a, &h) in controls.iter().zip(durations) {
            x = self.rk4_step(&x, a, h);
        }
        x
    }

    /// States after each segment (including the start).
    pub fn trajectory(&self, x0: &[f64], controls: &[Vec<f64>], durations: &[f64]) -> Vec<Vec<f64>> {
        let mut out = vec![x0.to_vec()];
        for (a, &h) in controls.iter().zip(durations) {
            let next = self.rk4_step(out.last().unwrap(), a, h);
            out.push(next);
        }
        out
    }

    /// `exp(s X_j)(x)` by `substeps` RK4 steps.
    pub fn flow(&self, j: usize, x: &[f64], s: f64, substeps: usize) -> Vec<f64> {
        let mut a = vec![0.0; self.m()];
        a[j] = 1.0;
        let h = s / substeps as f64;
        let mut y = x.to_vec();
        for _ in 0..substeps {
            y = self.rk4_step(&y, &a, h);
        }
        y
    }

    /// Rigorous half-widths `R_k` with `|γ_k(1) - x_k| <= R_k` for every path
    /// from `x` whose control norm stays below `r`.
    ///
    /// Coefficients of `∂_k` only involve coordinates of smaller weight, so the
    /// bounds are built as polynomials in time, lightest coordinates first.
    pub fn reach_radii(&self, x: &[f64], r: f64) -> Vec<f64> {
        let n = self.dim;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&k| self.weights[k]);
        // Polynomials in s (ascending coefficients) bounding |γ_i(s)|.
        let mut abs_bound: Vec<Vec<f64>> = x.iter().map(|v| vec![v.abs()]).collect();
        let mut radii = vec![0.0; n];
        for &k in &order {
            let mut integrand = vec![0.0];
            for f in &self.fields {
                for (c, fac) in f.components()[k].abs_terms() {
                    let mut term = vec![c];
                    for &(i, e) in fac {
                        for _ in 0..e {
                            term = poly_mul(&term, &abs_bound[i]);
                        }
                    }
                    poly_add_assign(&mut integrand, &term);
                }
            }
            // R_k(s) = r ∫_0^s integrand
            let mut rk = vec![0.0; integrand.len() + 1];
            for (d, c) in integrand.iter().enumerate() {
                rk[d + 1] = r * c / (d + 1) as f64;
            }
            radii[k] = rk.iter().sum();
            let mut b = rk;
            b[0] += x[k].abs();
            abs_bound[k] = b;
        }
        radii
    }

    /// Largest `r` with `y` inside the reachable box of radius `r` around `x`:
    /// a certified lower bound for the control distance.
    pub fn box_lower_bound(&self, x: &[f64], y: &[f64]) -> f64 {
        let inside = |r: f64| {
            self.reach_radii(x, r)
                .iter()
                .zip(x.iter().zip(y))
                .all(|(rad, (a, b))| (a - b).abs() <= *rad)
        };
        if x == y {
            return 0.0;
        }
        let mut hi = 1.0;
        while !inside(hi) {
            hi *= 2.0;
            if hi > 1e12 {
                return hi;
            }
        }
        let mut lo = 0.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if inside(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add_assign(a: &mut Vec<f64>, b: &[f64]) {
    if a.len() < b.len() {
        a.resize(b.len(), 0.0);
    }
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}
