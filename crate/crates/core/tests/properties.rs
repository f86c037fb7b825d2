//! Randomized invariants of the symbolic layer, the group laws, the kernels and the metric.

use std::sync::OnceLock;

use proptest::prelude::*;
use subheat::catalog;
use subheat::cauchy::RadialGauge;
use subheat::envelopes::GaussFn;
use subheat::flow::ControlSystem;
use subheat::group::{CarnotGroup, KernelOpts};
use subheat::heisenberg;
use subheat::kernel::HeatKernel;
use subheat::metric::{cc_distance, DistanceOpts};
use subheat::poly::{rational, rational_int, Poly};
use subheat::systems::{commutes_with_dilation, hormander_rank, lie_bracket, lie_closure, PolyVectorField};

const CATALOG: [&str; 3] = ["euclid2", "grushin", "grushin3"];

fn grushin_kernel() -> &'static HeatKernel {
    static K: OnceLock<HeatKernel> = OnceLock::new();
    K.get_or_init(|| HeatKernel::catalog("grushin").unwrap())
}

fn grushin_control() -> &'static ControlSystem {
    static C: OnceLock<ControlSystem> = OnceLock::new();
    C.get_or_init(|| ControlSystem::from_system(&catalog::system("grushin").unwrap()))
}

fn poly_strategy(n: usize) -> impl Strategy<Value = Poly> {
    prop::collection::vec((prop::collection::vec(0u32..4, n), -5i64..=5), 1..5).prop_map(move |terms| {
        let mut p = Poly::zero(n);
        for (e, c) in terms {
            p = p.add(&Poly::monomial(e, rational_int(c)));
        }
        p
    })
}

fn field_strategy(n: usize) -> impl Strategy<Value = PolyVectorField> {
    prop::collection::vec(poly_strategy(n), n).prop_map(PolyVectorField::new)
}

fn point(lo: f64, hi: f64, n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn generators_commute_with_dilations(u in poly_strategy(2), which in 0usize..3, lam in prop::sample::select(vec![(1i64, 2i64), (2, 1), (3, 1)])) {
        let sys = catalog::system(CATALOG[which]).unwrap();
        let lambda = rational(lam.0, lam.1);
        for f in sys.fields() {
            prop_assert!(commutes_with_dilation(f, sys.weights(), &u, &lambda));
        }
    }

    #[test]
    fn bracket_is_antisymmetric(a in field_strategy(2), b in field_strategy(2)) {
        let ab = lie_bracket(&a, &b);
        let ba = lie_bracket(&b, &a);
        prop_assert!(ab.add(&ba).is_zero());
        prop_assert!(lie_bracket(&a, &a).is_zero());
    }

    #[test]
    fn bracket_satisfies_jacobi(a in field_strategy(2), b in field_strategy(2), c in field_strategy(2)) {
        let j = lie_bracket(&a, &lie_bracket(&b, &c))
            .add(&lie_bracket(&b, &lie_bracket(&c, &a)))
            .add(&lie_bracket(&c, &lie_bracket(&a, &b)));
        prop_assert!(j.is_zero());
    }

    #[test]
    fn hormander_rank_is_full(x in point(-3.0, 3.0, 2), which in 0usize..3) {
        let sys = catalog::system(CATALOG[which]).unwrap();
        prop_assert_eq!(hormander_rank(&sys, &x).unwrap(), 2);
    }

    #[test]
    fn group_laws_hold_numerically(which in 0usize..3, u in point(-2.0, 2.0, 4), v in point(-2.0, 2.0, 4), w in point(-2.0, 2.0, 4), lam in 0.25f64..4.0) {
        let g = catalog::group(CATALOG[which]).unwrap();
        let n = g.N();
        let (u, v, w) = (&u[..n], &v[..n], &w[..n]);
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs())));
        prop_assert!(close(&g.mul(&g.mul(u, v), w), &g.mul(u, &g.mul(v, w))));
        prop_assert!(close(&g.mul(u, &g.inverse(u)), &vec![0.0; n]));
        prop_assert!(close(&g.mul(&g.inverse(u), u), &vec![0.0; n]));
        prop_assert!(close(&g.dilate(lam, &g.mul(u, v)), &g.mul(&g.dilate(lam, u), &g.dilate(lam, v))));
        prop_assert!((g.homogeneous_norm(&g.dilate(lam, u)) - lam * g.homogeneous_norm(u)).abs() <= 1e-9 * (1.0 + lam * g.homogeneous_norm(u)));
    }

    #[test]
    fn heisenberg_kernel_scaling_and_inversion(t in 0.1f64..4.0, u in point(-2.0, 2.0, 3), lam in prop::sample::select(vec![0.5, 2.0])) {
        let g = catalog::group("grushin").unwrap();
        let (v, _) = heisenberg::kernel(t, &u);
        prop_assert!(v >= 0.0);
        let (vs, _) = heisenberg::kernel(lam * lam * t, &g.dilate(lam, &u));
        prop_assert!(rel_gap(vs, lam.powi(-4) * v) < 5e-3, "scaling {} vs {}", vs, lam.powi(-4) * v);
        let (vi, _) = heisenberg::kernel(t, &g.inverse(&u));
        prop_assert!(rel_gap(vi, v) < 1e-3);
    }

    #[test]
    fn gauss_fn_is_monotone_and_causal(a in 0.1f64..5.0, da in 0.0f64..5.0, dt in -1.0f64..4.0, d in 0.0f64..5.0, vol in 0.1f64..10.0) {
        let lo = GaussFn::new(a).unwrap();
        let hi = GaussFn::new(a + da).unwrap();
        let (vlo, vhi) = (lo.from_parts(dt, d, vol), hi.from_parts(dt, d, vol));
        prop_assert!(vhi <= vlo && vhi >= 0.0);
        if dt <= 0.0 {
            prop_assert_eq!(vlo, 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn saturated_kernel_symmetry_and_homogeneity(t in 0.25f64..2.0, x in point(-1.5, 1.5, 2), y in point(-1.5, 1.5, 2), lam in prop::sample::select(vec![0.5, 2.0])) {
        let k = grushin_kernel();
        let a = k.value(t, &x, &y);
        prop_assert!(a > 0.0);
        prop_assert!(rel_gap(a, k.value(t, &y, &x)) < 1e-4);
        let cs = k.base();
        let b = k.value(lam * lam * t, &cs.dilate(lam, &x), &cs.dilate(lam, &y));
        prop_assert!(rel_gap(b, lam.powi(-3) * a) < 5e-3);
        prop_assert_eq!(k.value(-t, &x, &y), 0.0);
    }

    #[test]
    fn euclidean_distance_is_euclidean(x in point(-3.0, 3.0, 2), y in point(-3.0, 3.0, 2)) {
        let cs = ControlSystem::from_system(&catalog::system("euclid2").unwrap());
        let d = cc_distance(&cs, &x, &y, &DistanceOpts::default()).unwrap();
        let exact = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        prop_assert!((d.upper - exact).abs() < 1e-6);
        if let Some(lo) = d.lower {
            prop_assert!(lo <= d.upper + 1e-12);
        }
    }

    #[test]
    fn grushin_distance_symmetry_homogeneity_triangle(x in point(-1.5, 1.5, 2), y in point(-1.5, 1.5, 2), z in point(-1.5, 1.5, 2), lam in prop::sample::select(vec![0.5, 2.0])) {
        let cs = grushin_control();
        let o = DistanceOpts::default();
        let d = |a: &[f64], b: &[f64]| cc_distance(cs, a, b, &o).unwrap().upper;
        let dxy = d(&x, &y);
        prop_assert!(rel_gap(dxy, d(&y, &x)) < 1e-2);
        prop_assert!(rel_gap(d(&cs.dilate(lam, &x), &cs.dilate(lam, &y)), lam * dxy) < 1e-2);
        prop_assert!(d(&x, &z) <= dxy + d(&y, &z) + 1e-2 * dxy.max(1e-3));
    }

    #[test]
    fn gauge_is_homogeneous(y in point(-3.0, 3.0, 2), lam in 0.25f64..4.0) {
        let cs = grushin_control();
        let g = RadialGauge::new(cs, &DistanceOpts::default()).unwrap();
        let dy = cs.dilate(lam, &y);
        prop_assert!(rel_gap(g.rho(&dy), lam * g.rho(&y)) < 1e-9);
        prop_assert!(rel_gap(g.homogeneous_norm(&dy), lam * g.homogeneous_norm(&y)) < 1e-12);
    }
}

#[test]
fn closure_is_idempotent_on_catalog() {
    for name in CATALOG {
        let sys = catalog::system(name).unwrap();
        let a = lie_closure(&sys, sys.dilation().max_weight()).unwrap();
        let b = lie_closure(&sys, sys.dilation().max_weight() + 2).unwrap();
        assert_eq!(a.dim(), b.dim(), "{name}");
        assert_eq!(a.dim(), sys.n() + a.p());
    }
}

#[test]
fn catalog_group_kernels_vanish_for_nonpositive_time() {
    let g: CarnotGroup = catalog::group("grushin").unwrap();
    let gk = g.kernel(&KernelOpts::default()).unwrap();
    for t in [0.0, -0.5, -3.0] {
        assert_eq!(gk.value(t, &[0.1, 0.2, 0.3]), 0.0);
    }
}
