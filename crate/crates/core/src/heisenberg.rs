//! Heat kernel of `Z_1² + Z_2²` on the polarized Heisenberg group
//! `Z_1 = ∂_1`, `Z_2 = x_1 ∂_2 + ∂_3`.
//!
//! With `z = x_2 - x_1 x_3 / 2` and `w² = x_1² + x_3²`,
//! `γ(t, u) = F(w²/4t, z/t) / (4π² t²)` where
//! `F(a, b) = ∫_0^∞ cos(bs) (s / sinh s) exp(-a s coth s) ds`.

use num_complex::Complex64;

use crate::quadrature::{adaptive, exp_sinh_fixed, AdaptiveOpts};

/// Slope of the integration ray in the upper half plane.
const KAPPA: f64 = 0.5;
/// Keeps the contour below the pole of `1/sinh` at `iπ`.
const C_MAX: f64 = std::f64::consts::PI - 0.35;

/// `(s / sinh s, s coth s)`, with series near the origin.
fn ratios(s: Complex64) -> (Complex64, Complex64) {
    if s.norm() < 0.1 {
        let s2 = s * s;
        let a = 1.0 - s2 / 6.0 + s2 * s2 * (7.0 / 360.0) - s2 * s2 * s2 * (31.0 / 15120.0)
            + s2 * s2 * s2 * s2 * (127.0 / 604800.0);
        let b = 1.0 + s2 / 3.0 - s2 * s2 / 45.0 + s2 * s2 * s2 * (2.0 / 945.0) - s2 * s2 * s2 * s2 / 4725.0;
        return (a, b);
    }
    // Written with e^{-2s} so large Re s does not overflow.
    let e = (-2.0 * s).exp();
    let one_minus = 1.0 - e;
    let s_over_sinh = 2.0 * s * (-s).exp() / one_minus;
    let coth = (1.0 + e) / one_minus;
    (s_over_sinh, s * coth)
}

/// Height of the saddle of `ibs - a s coth s` on the imaginary axis.
fn saddle_height(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    if a <= 0.0 {
        return C_MAX;
    }
    let target = b / a;
    let h = |y: f64| y / (y.sin() * y.sin()) - 1.0 / y.tan();
    if h(C_MAX) <= target {
        return C_MAX;
    }
    let (mut lo, mut hi) = (0.0, C_MAX);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `F(a, b)` with an absolute error estimate.
pub fn gaveau_integral(a: f64, b: f64) -> (f64, f64) {
    let b = b.abs();
    let c = saddle_height(a, b);
    let dir = Complex64::new(1.0, KAPPA);
    let integrand = |r: f64| -> f64 {
        let s = Complex64::new(0.0, c) + dir * r;
        let (q, sc) = ratios(s);
        let phase = Complex64::new(0.0, b) * s - a * sc;
        if phase.re < -745.0 {
            return 0.0;
        }
        (phase.exp() * q * dir).re
    };
    let decay = 1.0 + a + b * KAPPA;
    let res = exp_sinh_fixed(integrand, 1.0 / decay, 1.0 / 16.0, 4.5, 4.0);
    let scale = res.value.abs();
    if res.abs_error <= 1e-9 * scale.max(1e-300) {
        return (res.value, res.abs_error.max(1e-15 * scale));
    }
    // Fallback: adaptive Gauss-Kronrod on a truncated ray.
    let cutoff = 40.0 / decay;
    let r = adaptive(
        integrand,
        0.0,
        cutoff,
        AdaptiveOpts {
            rel_tol: 1e-10,
            initial_pieces: 8,
            ..Default::default()
        },
    );
    (r.value, r.abs_error + (-40.0f64).exp() * scale)
}

/// Heat kernel value and absolute error at `(t, u)`, `u = (x_1, x_2, x_3)`.
pub fn kernel(t: f64, u: &[f64]) -> (f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    let (x1, x2, xi) = (u[0], u[1], u[2]);
    let z = x2 - 0.5 * x1 * xi;
    let w2 = x1 * x1 + xi * xi;
    let (f, err) = gaveau_integral(w2 / (4.0 * t), z / t);
    let pref = 1.0 / (4.0 * std::f64::consts::PI.powi(2) * t * t);
    ((f * pref).max(0.0), err * pref)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn real_axis(a: f64, b: f64) -> f64 {
        adaptive(
            |s| {
                let q = if s < 1e-8 { 1.0 } else { s / s.sinh() };
                let sc = if s < 1e-8 { 1.0 } else { s / s.tanh() };
                (b * s).cos() * q * (-a * sc).exp()
            },
            0.0,
            60.0,
            AdaptiveOpts {
                rel_tol: 1e-12,
                initial_pieces: 32,
                ..Default::default()
            },
        )
        .value
    }

    #[test]
    fn origin_value() {
        let (f, _) = gaveau_integral(0.0, 0.0);
        assert_relative_eq!(f, PI * PI / 4.0, max_relative = 1e-10);
        assert_relative_eq!(kernel(1.0, &[0.0; 3]).0, 1.0 / 16.0, max_relative = 1e-10);
    }

    #[test]
    fn pure_vertical_closed_form() {
        for b in [0.3, 1.0, 4.0, 9.0] {
            let exact = PI * PI / 4.0 / (PI * b / 2.0).cosh().powi(2);
            let (f, _) = gaveau_integral(0.0, b);
            assert_relative_eq!(f, exact, max_relative = 1e-8);
        }
    }

    #[test]
    fn matches_real_axis_quadrature() {
        for (a, b) in [(0.5, 0.5), (2.0, 1.0), (9.0, 3.0), (0.1, 2.0), (20.0, 0.0), (4.0, 6.0)] {
            let (f, err) = gaveau_integral(a, b);
            let r = real_axis(a, b);
            assert!((f - r).abs() <= 1e-8 * r.abs() + 1e-14, "a={a} b={b}: {f} vs {r}");
            assert!(err <= 1e-6 * f.abs());
        }
    }

    #[test]
    fn vertical_marginal_is_planar_heat_kernel() {
        // ∫ γ(t, x1, x2, ξ) dx2 = (4πt)^{-1} exp(-(x1²+ξ²)/4t)
        let t = 0.7;
        let (x1, xi) = (0.4, -0.3);
        let r = adaptive(
            |x2| kernel(t, &[x1, x2, xi]).0,
            -30.0,
            30.0,
            AdaptiveOpts {
                rel_tol: 1e-10,
                initial_pieces: 16,
                ..Default::default()
            },
        );
        let exact = (-(x1 * x1 + xi * xi) / (4.0 * t)).exp() / (4.0 * PI * t);
        assert_relative_eq!(r.value, exact, max_relative = 1e-7);
    }
}
