//! One-dimensional adaptive rules and tensor Gauss-Legendre products.

use std::collections::BinaryHeap;
use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

/// Value with an error estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub evals: usize,
    pub converged: bool,
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Gauss-Kronrod 15/7 on `[a, b]`: (kronrod value, |kronrod - gauss|).
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

#[derive(Clone, Copy, Debug)]
pub struct AdaptiveOpts {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
    /// Initial uniform split of `[a, b]`.
    pub initial_pieces: usize,
}

impl Default for AdaptiveOpts {
    fn default() -> Self {
        AdaptiveOpts {
            abs_tol: 1e-300,
            rel_tol: 1e-10,
            max_intervals: 2000,
            initial_pieces: 1,
        }
    }
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive bisection with GK15 panels.
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: AdaptiveOpts) -> QuadResult {
    if a == b {
        return QuadResult { value: 0.0, abs_error: 0.0, evals: 0, converged: true };
    }
    let mut heap = BinaryHeap::new();
    let pieces = opts.initial_pieces.max(1);
    let w = (b - a) / pieces as f64;
    let mut evals = 0;
    for i in 0..pieces {
        let lo = a + w * i as f64;
        let hi = if i + 1 == pieces { b } else { lo + w };
        let (value, err) = gk15(&mut f, lo, hi);
        evals += 15;
        heap.push(Piece { a: lo, b: hi, value, err });
    }
    loop {
        let total: f64 = heap.iter().map(|p| p.value).sum();
        let err: f64 = heap.iter().map(|p| p.err).sum();
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if err <= tol || heap.len() >= opts.max_intervals {
            return QuadResult { value: total, abs_error: err, evals, converged: err <= tol };
        }
        let worst = heap.pop().unwrap();
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            let total: f64 = heap.iter().map(|p| p.value).sum();
            let err: f64 = heap.iter().map(|p| p.err).sum();
            return QuadResult { value: total, abs_error: err, evals, converged: false };
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        evals += 30;
        heap.push(Piece { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, err: e2 });
    }
}

/// Tanh-sinh on `[a, b]`, halving the step until successive levels agree.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64, max_level: u32) -> QuadResult {
    use std::f64::consts::FRAC_PI_2;
    let c = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let tmax = 4.0;
    let mut evals = 1;
    // Abscissas near the ends are formed from 1 - x to avoid cancellation.
    let node = |t: f64, f: &mut F, evals: &mut usize| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let w = FRAC_PI_2 * t.cosh() / (u.cosh() * u.cosh());
        if w < 1e-300 {
            return 0.0;
        }
        let comp = 2.0 / ((2.0 * u.abs()).exp() + 1.0);
        if comp == 0.0 {
            return 0.0;
        }
        *evals += 2;
        let left = f(a + half * comp);
        let right = f(b - half * comp);
        w * (left + right)
    };
    let mut h = 0.5;
    let mut sum = f(c) * FRAC_PI_2;
    let mut k = 1;
    while h * k as f64 <= tmax {
        sum += node(h * k as f64, &mut f, &mut evals);
        k += 1;
    }
    let mut prev = sum * h * half;
    for _ in 0..max_level {
        h *= 0.5;
        let mut k = 1;
        while h * k as f64 <= tmax {
            sum += node(h * k as f64, &mut f, &mut evals);
            k += 2;
        }
        let cur = sum * h * half;
        let err = (cur - prev).abs();
        if err <= rel_tol * cur.abs() {
            return QuadResult { value: cur, abs_error: err, evals, converged: true };
        }
        prev = cur;
    }
    QuadResult {
        value: prev,
        abs_error: f64::INFINITY,
        evals,
        converged: false,
    }
}

/// Exp-sinh trapezoid for `∫_0^∞ f(r) dr` with `r = s·exp(π/2 sinh v)`.
///
/// The step is fixed, so the result is a smooth function of parameters inside `f`.
/// The error estimate compares step `h` against `2h`.
pub fn exp_sinh_fixed<F: FnMut(f64) -> f64>(mut f: F, scale: f64, h: f64, v_lo: f64, v_hi: f64) -> QuadResult {
    use std::f64::consts::FRAC_PI_2;
    let n_lo = (v_lo / h).ceil() as i64;
    let n_hi = (v_hi / h).floor() as i64;
    let mut fine = 0.0;
    let mut coarse = 0.0;
    let mut evals = 0;
    for k in -n_lo..=n_hi {
        let v = k as f64 * h;
        let e = (FRAC_PI_2 * v.sinh()).exp();
        let r = scale * e;
        if !r.is_finite() {
            break;
        }
        let jac = scale * FRAC_PI_2 * v.cosh() * e;
        let y = f(r);
        evals += 1;
        let term = y * jac;
        if !term.is_finite() {
            continue;
        }
        fine += term;
        if k.rem_euclid(2) == 0 {
            coarse += term;
        }
    }
    let fine = fine * h;
    let coarse = coarse * 2.0 * h;
    QuadResult {
        value: fine,
        abs_error: (fine - coarse).abs(),
        evals,
        converged: true,
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<std::sync::Mutex<Vec<(usize, Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| std::sync::Mutex::new(Vec::new()));
    let mut guard = cache.lock().unwrap();
    if let Some((_, x, w)) = guard.iter().find(|(k, _, _)| *k == n) {
        return (x.clone(), w.clone());
    }
    let rule = GaussLegendre::new(NonZeroUsize::new(n.max(2)).unwrap());
    let (x, w): (Vec<f64>, Vec<f64>) = rule.as_node_weight_pairs().iter().copied().unzip();
    guard.push((n, x.clone(), w.clone()));
    (x, w)
}

/// Composite Gauss-Legendre rule on `[lo, hi]`: `panels` panels of `n` nodes.
pub fn composite_rule(lo: f64, hi: f64, panels: usize, n: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let width = (hi - lo) / panels as f64;
    let mut out = Vec::with_capacity(panels * n);
    for p in 0..panels {
        let a = lo + width * p as f64;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((a + 0.5 * width * (xi + 1.0), 0.5 * width * wi));
        }
    }
    out
}

/// Trapezoid rule for `∫_R f` with `y = c + s sinh(v)`, `|v| ≤ vmax`.
pub fn sinh_rule(c: f64, s: f64, vmax: f64, nodes: usize) -> Vec<(f64, f64)> {
    let half = (nodes / 2).max(1);
    let h = vmax / half as f64;
    (-(half as i64)..=half as i64)
        .map(|i| {
            let v = i as f64 * h;
            (c + s * v.sinh(), h * s * v.cosh())
        })
        .collect()
}

/// Tensor product of one-dimensional rules: nodes and weights over a box.
pub fn tensor_rule(axes: &[Vec<(f64, f64)>]) -> Vec<(Vec<f64>, f64)> {
    let mut out: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for (p, w) in &out {
            for (x, wx) in axis {
                let mut q = p.clone();
                q.push(*x);
                next.push((q, w * wx));
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gk_polynomial_exact() {
        let (v, e) = gk15(&mut |x: f64| x.powi(10) - 3.0 * x, -1.0, 2.0);
        assert_relative_eq!(v, (2f64.powi(11) + 1.0) / 11.0 - 4.5, max_relative = 1e-13);
        assert!(e < 1e-10);
    }

    #[test]
    fn adaptive_handles_peaks() {
        let r = adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, AdaptiveOpts::default());
        let exact = 2.0 * (1.0 / 1e-2) * (1.0f64 / 1e-2).atan();
        assert!(r.converged);
        assert_relative_eq!(r.value, exact, max_relative = 1e-9);
    }

    #[test]
    fn tanh_sinh_endpoint_singularity() {
        let r = tanh_sinh(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10, 8);
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-8);
    }

    #[test]
    fn exp_sinh_half_line() {
        let r = exp_sinh_fixed(|x| (-x).exp() * x.cos(), 1.0, 1.0 / 32.0, 4.5, 3.5);
        assert_relative_eq!(r.value, 0.5, max_relative = 1e-10);
    }

    #[test]
    fn tensor_gaussian() {
        let axis = composite_rule(-8.0, 8.0, 4, 16);
        let rule = tensor_rule(&[axis.clone(), axis]);
        let s: f64 = rule.iter().map(|(x, w)| w * (-(x[0] * x[0] + x[1] * x[1])).exp()).sum();
        assert_relative_eq!(s, std::f64::consts::PI, max_relative = 1e-12);
    }
}
