//! Euler-Maruyama sampling of the horizontal diffusion and kernel density estimates.
//!
//! The generator is `Σ Z_j²`, so in Itô form
//! `dU = Σ_j (DZ_j · Z_j)(U) dt + √2 Σ_j Z_j(U) dW_j`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::ControlSystem;
use crate::rng::stream_rng;

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct SdeOpts {
    pub n_paths: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for SdeOpts {
    fn default() -> Self {
        SdeOpts {
            n_paths: 20000,
            steps: 256,
            seed: crate::rng::DEFAULT_SEED,
        }
    }
}

/// Endpoints at time `t` of paths started at the origin.
pub fn simulate(cs: &ControlSystem, t: f64, opts: &SdeOpts) -> Result<Vec<Vec<f64>>> {
    simulate_from(cs, &vec![0.0; cs.dim()], t, opts)
}

/// Endpoints at time `t` of paths started at `x0`.
pub fn simulate_from(cs: &ControlSystem, x0: &[f64], t: f64, opts: &SdeOpts) -> Result<Vec<Vec<f64>>> {
    if t <= 0.0 {
        return Err(Error::Config(format!("simulation time must be positive, got {t}")));
    }
    let dt = t / opts.steps as f64;
    if !(dt > 1e-14) {
        return Err(Error::numerical(format!("step size underflow: dt = {dt}")));
    }
    let n = cs.dim();
    let m = cs.m();
    let sq = (2.0 * dt).sqrt();
    let paths = (0..opts.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream_rng(opts.seed, p as u64);
            let mut x = x0.to_vec();
            let mut zx = vec![vec![0.0; n]; m];
            let mut incr = vec![0.0; n];
            for _ in 0..opts.steps {
                incr.iter_mut().for_each(|v| *v = 0.0);
                for (j, f) in cs.fields().iter().enumerate() {
                    f.eval_into(&x, &mut zx[j]);
                }
                for (j, f) in cs.fields().iter().enumerate() {
                    f.jac_vec_add(&x, &zx[j], dt, &mut incr);
                    let dw: f64 = rng.sample(StandardNormal);
                    for k in 0..n {
                        incr[k] += sq * dw * zx[j][k];
                    }
                }
                for k in 0..n {
                    x[k] += incr[k];
                }
            }
            x
        })
        .collect();
    Ok(paths)
}

/// Product-Gaussian density estimate with a Richardson bias correction.
#[derive(Clone, Debug)]
pub struct Kde {
    points: Vec<Vec<f64>>,
    keys: Vec<f64>,
    bandwidth: Vec<f64>,
}

impl Kde {
    /// Bandwidth `h_k = c · σ̂_k · n^{-1/(N+4)}`.
    pub fn new(mut points: Vec<Vec<f64>>, c: f64) -> Self {
        let n = points.len();
        let dim = points[0].len();
        let mut bandwidth = Vec::with_capacity(dim);
        for k in 0..dim {
            let col: Vec<f64> = points.iter().map(|p| p[k]).collect();
            let (_, se) = crate::rng::mean_and_se(&col);
            let sd = se * (n as f64).sqrt();
            bandwidth.push(c * sd * (n as f64).powf(-1.0 / (dim as f64 + 4.0)));
        }
        points.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let keys = points.iter().map(|p| p[0]).collect();
        Kde { points, keys, bandwidth }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    /// Per-coordinate `max |u_k|` outside which `density` is exactly zero.
    pub fn support_radii(&self) -> Vec<f64> {
        (0..self.bandwidth.len())
            .map(|k| {
                let m = self.points.iter().map(|p| p[k].abs()).fold(0.0, f64::max);
                m + 10.0 * self.bandwidth[k]
            })
            .collect()
    }

    /// `(estimate, abs_error)`: 3 standard errors plus a residual-bias allowance.
    pub fn density(&self, u: &[f64]) -> (f64, f64) {
        let dim = u.len();
        let n = self.points.len() as f64;
        let r2 = std::f64::consts::SQRT_2;
        let reach = 7.0 * r2 * self.bandwidth[0];
        let lo = self.keys.partition_point(|&k| k < u[0] - reach);
        let hi = self.keys.partition_point(|&k| k <= u[0] + reach);
        let norm_h: f64 = self
            .bandwidth
            .iter()
            .map(|h| h * (2.0 * std::f64::consts::PI).sqrt())
            .product();
        let norm_2h = norm_h * r2.powi(dim as i32);
        let (mut s_h, mut s_2h, mut s_c, mut s_cc) = (0.0, 0.0, 0.0, 0.0);
        for p in &self.points[lo..hi] {
            let mut q = 0.0;
            for k in 0..dim {
                let d = (u[k] - p[k]) / self.bandwidth[k];
                q += d * d;
            }
            if q > 100.0 {
                continue;
            }
            let kh = (-0.5 * q).exp() / norm_h;
            let k2h = (-0.25 * q).exp() / norm_2h;
            let c = 2.0 * kh - k2h;
            s_h += kh;
            s_2h += k2h;
            s_c += c;
            s_cc += c * c;
        }
        let f_h = s_h / n;
        let f_2h = s_2h / n;
        let mean = s_c / n;
        let var = ((s_cc / n - mean * mean) * n / (n - 1.0)).max(0.0);
        let se = (var / n).sqrt();
        (mean.max(0.0), 3.0 * se + 0.25 * (f_h - f_2h).abs())
    }
}
