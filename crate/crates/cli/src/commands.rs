//! Subcommand implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde_json::json;
use subheat::cauchy::{CauchyOpts, CauchySolver, GrowthClass, InitialDatum};
use subheat::envelopes::{
    derivative_envelope_fit, envelope_stability, equivalent_gaussian_check, gaussian_envelope_fit, log_slope,
    sanchez_slice_check, saturation_gaussian_check, slice_grid, Geometry, SampleSpec, SliceOpts,
};
use subheat::flow::ControlSystem;
use subheat::group::{
    cross_oracle_check, group_kernel_property_suite, CarnotGroup, KernelOpts, Method, PropertyCheck, PropertyOpts,
};
use subheat::harnack::{
    harnack_derivative_ratio, harnack_scale_invariance, median, ColumnCase, ConstantCaloric, DerivativeOrder,
    HarnackOpts, ScaleReport,
};
use subheat::kernel::{kernel_property_suite, kernel_samples, DerivativeSpec, HeatKernel, KernelPropertyOpts, SaturationOpts};
use subheat::metric::{ball_volume, cc_distance, doubling_report, DistanceOpts, VolumeOpts};
use subheat::rng::stream_rng;
use subheat::sde::SdeOpts;
use subheat::systems::{analyze, homogeneity_report, parse_system, HomogeneousSystem};
use subheat::tolerances::Tolerances;
use subheat::{catalog, Error, Result};

use crate::report::{coords, num, nums, render, write_all_atomic, Manifest, Outcome, Table};
use crate::{Check, Command, Common};

const LIE: &str = "exact-rational-brackets/1";
const DISTANCE: &str = "sqp-rk4-multistart/1";
const VOLUME: &str = "mc-reachable-box/1";
const SATURATION: &str = "sinh-adaptive-eta/1";
const ENVELOPE: &str = "exact-max-requirement/1";
const CAUCHY: &str = "sinh-trapezoid-box-doubling/1";
const HARNACK: &str = "grid-refine-pattern-search/1";

fn kernel_oracle(m: Method) -> &'static str {
    match m {
        Method::Exact => "euclidean-closed-form/1",
        Method::Quadrature => "heisenberg-oscillatory-quadrature/1",
        Method::MonteCarlo => "sde-euler-maruyama-kde/1",
    }
}

struct Ctx {
    subcommand: String,
    sys: HomogeneousSystem,
    system_source: String,
    group_path: Option<PathBuf>,
    catalog_name: Option<String>,
    seed: u64,
    samples: Option<usize>,
    out: PathBuf,
    tol: Tolerances,
}

impl Ctx {
    fn new(subcommand: &str, c: &Common) -> Result<Self> {
        let tol = Tolerances::with_overrides(&c.tol)?;
        if let Some(n) = c.threads {
            if n == 0 {
                return Err(Error::Config("--threads must be positive".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        }
        let spec = match (&c.system, &c.system_arg) {
            (Some(a), None) | (None, Some(a)) => a.clone(),
            (Some(a), Some(b)) if a == b => a.clone(),
            (Some(_), Some(_)) => return Err(Error::Config("conflicting --system and positional SYSTEM".into())),
            (None, None) => return Err(Error::Config("no system given".into())),
        };
        let path = Path::new(&spec);
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(&spec).to_string();
        let (sys, system_source, sibling) = if path.is_file() {
            let sys = parse_system(&fs::read_to_string(path)?)?;
            let sibling = path.with_file_name(format!("{stem}.group.json"));
            (sys, spec.clone(), sibling.is_file().then_some(sibling))
        } else if catalog::system_json(&stem).is_some() {
            (catalog::system(&stem)?, format!("catalog:{stem}"), None)
        } else {
            return Err(Error::Config(format!("`{spec}` is neither a file nor a catalog system")));
        };
        let catalog_name = [stem.as_str(), sys.name()]
            .into_iter()
            .find(|n| catalog::group_json(n).is_some())
            .map(str::to_string);
        Ok(Ctx {
            subcommand: subcommand.to_string(),
            group_path: c.group.clone().or(sibling),
            catalog_name,
            sys,
            system_source,
            seed: c.seed,
            samples: c.samples,
            out: c.out.clone(),
            tol,
        })
    }

    fn samples_or(&self, d: usize) -> usize {
        self.samples.unwrap_or(d)
    }

    fn group_source(&self) -> Option<String> {
        match (&self.group_path, &self.catalog_name) {
            (Some(p), _) => Some(p.display().to_string()),
            (None, Some(n)) => Some(format!("catalog:{n}")),
            _ => None,
        }
    }

    fn group(&self) -> Result<CarnotGroup> {
        if let Some(p) = &self.group_path {
            return CarnotGroup::from_json(&fs::read_to_string(p)?, self.sys.clone());
        }
        match &self.catalog_name {
            Some(n) => CarnotGroup::from_json(catalog::group_json(n).expect("checked"), self.sys.clone()),
            None => Err(Error::Config(format!("no lifting known for `{}`; pass --group", self.sys.name()))),
        }
    }

    fn kernel_opts(&self, paths: Option<usize>) -> KernelOpts {
        let d = SdeOpts::default();
        KernelOpts { sde: SdeOpts { n_paths: paths.unwrap_or(d.n_paths), seed: self.seed, ..d }, ..Default::default() }
    }

    fn kernel(&self, paths: Option<usize>) -> Result<HeatKernel> {
        HeatKernel::new(self.group()?, &self.kernel_opts(paths), SaturationOpts::default())
    }

    fn geometry(&self) -> Geometry {
        Geometry::new(
            &self.sys,
            DistanceOpts { seed: self.seed, ..Default::default() },
            VolumeOpts { seed: self.seed, ..Default::default() },
        )
    }

    fn control(&self) -> ControlSystem {
        ControlSystem::from_system(&self.sys)
    }

    fn point(&self, s: &str) -> Result<Vec<f64>> {
        let v = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad coordinate `{t}` in `{s}`"))))
            .collect::<Result<Vec<f64>>>()?;
        if v.len() != self.sys.n() {
            return Err(Error::Config(format!("point `{s}` has {} coordinates, system dimension is {}", v.len(), self.sys.n())));
        }
        Ok(v)
    }

    fn points_or_origin(&self, v: &[String]) -> Result<Vec<Vec<f64>>> {
        if v.is_empty() {
            return Ok(vec![vec![0.0; self.sys.n()]]);
        }
        v.iter().map(|s| self.point(s)).collect()
    }

    fn unit(&self, k: usize) -> Vec<f64> {
        (0..self.sys.n()).map(|i| if i == k { 1.0 } else { 0.0 }).collect()
    }

    /// Writes the report, its tables and the timing sidecar; returns the exit code.
    fn finish(self, stem: &str, mut o: Outcome, started: Instant) -> Result<i32> {
        let json_name = format!("{stem}.json");
        let timing_name = format!("{stem}.timing.json");
        let mut files = Vec::new();
        let mut outputs = vec![json_name.clone()];
        for (suffix, t) in &o.tables {
            let name = if suffix.is_empty() { format!("{stem}.csv") } else { format!("{stem}-{suffix}.csv") };
            outputs.push(name.clone());
            files.push((name, t.to_bytes()?));
        }
        outputs.push(timing_name.clone());
        let manifest = Manifest {
            tool: "subheat",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand.clone(),
            system: self.sys.name().to_string(),
            system_source: self.system_source.clone(),
            group_source: self.group_source(),
            seed: self.seed,
            samples: self.samples,
            tolerances: self.tol.clone(),
            outputs: outputs.clone(),
            wall_clock: timing_name.clone(),
            oracles: std::mem::take(&mut o.oracles),
        };
        files.insert(0, (json_name, render(&manifest, &o.report)?));
        let timing = json!({
            "wall_clock_seconds": started.elapsed().as_secs_f64(),
            "threads": rayon::current_num_threads(),
        });
        let mut tb = serde_json::to_vec_pretty(&timing)?;
        tb.push(b'\n');
        files.push((timing_name, tb));
        let written = write_all_atomic(&self.out, &files)?;
        // A closed stdout must not turn a finished run into a failure.
        let mut out = std::io::stdout().lock();
        for line in &o.summary {
            let _ = writeln!(out, "{line}");
        }
        for p in &written {
            let _ = writeln!(out, "wrote {}", p.display());
        }
        for v in &o.violations {
            eprintln!("violation: {v}");
        }
        Ok(if o.violations.is_empty() { 0 } else { 4 })
    }
}

fn failed_checks(o: &mut Outcome, checks: &[PropertyCheck]) {
    for c in checks {
        o.say(format!("{:<24} {} worst {:.3e} (tolerance {:.1e})", c.name, if c.passed { "PASS" } else { "FAIL" }, c.worst, c.tolerance));
        o.require(
            c.passed,
            format!("{}: defect {:.3e} x tolerance at {}", c.name, c.worst, c.witness.as_deref().unwrap_or("-")),
        );
    }
}

fn check_table(checks: &[PropertyCheck]) -> Table {
    let mut t = Table::new(["name", "passed", "worst", "tolerance", "witness"]);
    for c in checks {
        t.push(vec![c.name.clone(), c.passed.to_string(), num(c.worst), num(c.tolerance), c.witness.clone().unwrap_or_default()]);
    }
    t
}

fn pair_up(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if xs.len() == 1 {
        Ok(ys.into_iter().map(|y| (xs[0].clone(), y)).collect())
    } else if ys.len() == 1 {
        Ok(xs.into_iter().map(|x| (x, ys[0].clone())).collect())
    } else if xs.len() == ys.len() {
        Ok(xs.into_iter().zip(ys).collect())
    } else {
        Err(Error::Config(format!("{} start points cannot be paired with {} targets", xs.len(), ys.len())))
    }
}

pub fn run(cmd: Command) -> Result<i32> {
    let started = Instant::now();
    match cmd {
        Command::Analyze(c) => {
            let ctx = Ctx::new("analyze", &c)?;
            let o = cmd_analyze(&ctx)?;
            ctx.finish("analyze", o, started)
        }
        Command::Dist { common, x, y } => {
            let ctx = Ctx::new("dist", &common)?;
            let o = cmd_dist(&ctx, &x, &y)?;
            ctx.finish("dist", o, started)
        }
        Command::Volume { common, x, rho } => {
            let ctx = Ctx::new("volume", &common)?;
            let o = cmd_volume(&ctx, &x, &rho)?;
            ctx.finish("volume", o, started)
        }
        Command::Kernel { common, t, x, y, paths } => {
            let ctx = Ctx::new("kernel", &common)?;
            let o = cmd_kernel(&ctx, &t, &x, &y, paths)?;
            ctx.finish("kernel", o, started)
        }
        Command::Verify { check, common, x, rho, lambda, paths, theta } => {
            let ctx = Ctx::new(&format!("verify {}", check.name()), &common)?;
            let v = VerifyArgs { x, rho, lambda, paths, theta };
            let o = cmd_verify(&ctx, check, &v)?;
            let stem = format!("verify-{}", check.name());
            ctx.finish(&stem, o, started)
        }
        Command::Cauchy { common, datum, t, x, envelope_rho, residual_steps } => {
            let ctx = Ctx::new("cauchy", &common)?;
            let o = cmd_cauchy(&ctx, &datum, &t, &x, envelope_rho, &residual_steps)?;
            ctx.finish("cauchy", o, started)
        }
        Command::Harnack { common, r, lambda, x, fields, time_order, slices, spatial, constant } => {
            let ctx = Ctx::new("harnack", &common)?;
            let h = HarnackArgs { r, lambda, x, fields, time_order, slices, spatial, constant };
            let o = cmd_harnack(&ctx, &h)?;
            ctx.finish("harnack", o, started)
        }
    }
}

fn cmd_analyze(ctx: &Ctx) -> Result<Outcome> {
    let s = analyze(&ctx.sys)?;
    let h = homogeneity_report(&ctx.sys, ctx.samples_or(20), ctx.seed);
    let mut o = Outcome::new(&json!({ "structure": s, "homogeneity": h }))?;
    o.oracle("lie-closure", LIE);
    o.say(format!("system {}: n={} m={} weights={:?}", s.system, s.n, s.m, s.weights));
    o.say(format!("N={} p={} q={} Q={} step={}", s.big_n, s.p, s.q, s.big_q, s.step));
    o.say(s.summary.clone());
    o.say(format!("homogeneity: {} of {} identities hold exactly", h.checks - h.failures.len(), h.checks));
    o.require(h.passed, format!("homogeneity identity fails at (field, polynomial, lambda) {:?}", h.failures.first()));
    Ok(o)
}

fn cmd_dist(ctx: &Ctx, x: &[String], y: &[String]) -> Result<Outcome> {
    let n = ctx.sys.n();
    let xs = x.iter().map(|s| ctx.point(s)).collect::<Result<Vec<_>>>()?;
    let ys = y.iter().map(|s| ctx.point(s)).collect::<Result<Vec<_>>>()?;
    let pairs = pair_up(xs, ys)?;
    let cs = ctx.control();
    let opts = DistanceOpts { seed: ctx.seed, ..Default::default() };
    let results = pairs
        .iter()
        .map(|(a, b)| cc_distance(&cs, a, b, &opts))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(coords("x", n).into_iter().chain(coords("y", n)).chain(["upper", "lower", "converged"].map(String::from)));
    let mut rows = Vec::new();
    for ((a, b), r) in pairs.iter().zip(&results) {
        t.push(nums(a).chain(nums(b)).chain([num(r.upper), r.lower.map(num).unwrap_or_default(), r.converged.to_string()]).collect());
        rows.push(json!({ "x": a, "y": b, "upper": r.upper, "lower": r.lower, "converged": r.converged, "path": r.path }));
    }
    let mut o = Outcome::new(&json!({ "system": ctx.sys.name(), "distances": rows }))?.table("", t);
    o.oracle("distance", DISTANCE);
    for ((a, b), r) in pairs.iter().zip(&results) {
        o.say(format!("d({a:?}, {b:?}) <= {} (lower {:?}, converged {})", r.upper, r.lower, r.converged));
    }
    if let Some(((a, b), _)) = pairs.iter().zip(&results).find(|(_, r)| !r.converged) {
        return Err(Error::numerical(format!("distance solver did not converge for x={a:?}, y={b:?}")));
    }
    Ok(o)
}

fn cmd_volume(ctx: &Ctx, x: &[String], rho: &[f64]) -> Result<Outcome> {
    let n = ctx.sys.n();
    let centers = ctx.points_or_origin(x)?;
    let cs = ctx.control();
    let opts = VolumeOpts { samples: ctx.samples_or(2000), seed: ctx.seed, ..Default::default() };
    let mut t = Table::new(coords("x", n).into_iter().chain(["rho", "volume", "ci"].map(String::from)));
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for c in &centers {
        for &r in rho {
            let v = ball_volume(&cs, c, r, &opts)?;
            t.push(nums(c).chain([num(r), num(v.estimate), num(v.ci_halfwidth)]).collect());
            lines.push(format!("|B({c:?}, {r})| = {} +- {}", v.estimate, v.ci_halfwidth));
            rows.push(json!({ "x": c, "rho": r, "volume": v }));
        }
    }
    let mut o = Outcome::new(&json!({ "system": ctx.sys.name(), "volumes": rows }))?.table("", t);
    o.oracle("volume", VOLUME);
    o.summary = lines;
    Ok(o)
}

fn cmd_kernel(ctx: &Ctx, ts: &[f64], x: &[String], y: &[String], paths: Option<usize>) -> Result<Outcome> {
    let n = ctx.sys.n();
    let k = ctx.kernel(paths)?;
    let pairs = pair_up(ctx.points_or_origin(x)?, ctx.points_or_origin(y)?)?;
    let jobs: Vec<(f64, &Vec<f64>, &Vec<f64>)> = ts.iter().flat_map(|&t| pairs.iter().map(move |(a, b)| (t, a, b))).collect();
    let values = jobs.par_iter().map(|(t, a, b)| k.saturate(*t, a, b)).collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(
        ["t".to_string()]
            .into_iter()
            .chain(coords("x", n))
            .chain(coords("y", n))
            .chain(["value", "abs_error", "method"].map(String::from)),
    );
    let mut rows = Vec::new();
    let mut o_lines = Vec::new();
    for ((tt, a, b), v) in jobs.iter().zip(&values) {
        let method = serde_json::to_value(v.method)?.as_str().unwrap_or_default().to_string();
        t.push([num(*tt)].into_iter().chain(nums(a)).chain(nums(b)).chain([num(v.value), num(v.abs_error), method]).collect());
        o_lines.push(format!("Gamma({tt}, {a:?}, {b:?}) = {} +- {}", v.value, v.abs_error));
        rows.push(json!({ "t": tt, "x": a, "y": b, "value": v.value, "abs_error": v.abs_error, "method": v.method }));
    }
    let mut o = Outcome::new(&json!({ "system": ctx.sys.name(), "values": rows }))?.table("", t);
    o.oracle("group-kernel", kernel_oracle(k.group_kernel().method()));
    o.oracle("saturation", SATURATION);
    o.summary = o_lines;
    Ok(o)
}

struct VerifyArgs {
    x: Option<String>,
    rho: Option<f64>,
    lambda: Option<f64>,
    paths: Option<usize>,
    theta: f64,
}

fn cmd_verify(ctx: &Ctx, check: Check, v: &VerifyArgs) -> Result<Outcome> {
    match check {
        Check::Homogeneity => {
            let h = homogeneity_report(&ctx.sys, ctx.samples_or(20), ctx.seed);
            let mut o = Outcome::new(&h)?;
            o.oracle("lie-closure", LIE);
            o.say(format!("homogeneity: {} of {} identities hold exactly", h.checks - h.failures.len(), h.checks));
            o.require(h.passed, format!("homogeneity identity fails at (field, polynomial, lambda) {:?}", h.failures.first()));
            Ok(o)
        }
        Check::Metric => verify_metric(ctx, v),
        Check::Volume => verify_volume(ctx, v),
        Check::Group => {
            let g = ctx.group()?;
            let gk = g.kernel(&ctx.kernel_opts(v.paths))?;
            let popts = PropertyOpts {
                samples: ctx.samples_or(100),
                seed: ctx.seed,
                symmetry_tol: ctx.tol.get("group.symmetry_rel"),
                scaling_tol: ctx.tol.get("group.scaling_rel"),
                mass_tol: ctx.tol.get("group.mass_abs"),
                lambda: v.lambda.unwrap_or(2.0),
                ..Default::default()
            };
            let rep = group_kernel_property_suite(&g, &gk, &popts)?;
            let mut o = Outcome::new(&rep)?.table("", check_table(&rep.checks));
            o.oracle("group-kernel", kernel_oracle(gk.method()));
            o.say(format!("group {} ({:?}): mass {}", rep.group, rep.method, rep.mass));
            failed_checks(&mut o, &rep.checks);
            Ok(o)
        }
        Check::CrossOracle => {
            let g = ctx.group()?;
            let reference = g.kernel(&ctx.kernel_opts(None))?;
            if reference.method() == Method::MonteCarlo {
                return Err(Error::Config(format!("group `{}` has no evaluator independent of Monte Carlo", g.name())));
            }
            let mc = g.monte_carlo_kernel(&ctx.kernel_opts(Some(v.paths.unwrap_or(400_000))))?;
            let rows = cross_oracle_check(&g, &reference, &mc, ctx.samples_or(20), ctx.seed);
            let mut t = Table::new(
                ["t".to_string()]
                    .into_iter()
                    .chain(coords("u", g.N()))
                    .chain(["reference", "reference_error", "monte_carlo", "monte_carlo_error", "agree"].map(String::from)),
            );
            for r in &rows {
                t.push(
                    [num(r.t)]
                        .into_iter()
                        .chain(nums(&r.u))
                        .chain([num(r.reference), num(r.reference_error), num(r.monte_carlo), num(r.monte_carlo_error), r.agree.to_string()])
                        .collect(),
                );
            }
            let agree = rows.iter().filter(|r| r.agree).count();
            let mut o = Outcome::new(&json!({ "group": g.name(), "rows": rows, "agree": agree }))?.table("", t);
            o.oracle("group-kernel", kernel_oracle(reference.method()));
            o.oracle("group-kernel-mc", kernel_oracle(Method::MonteCarlo));
            o.say(format!("cross-oracle: {agree} of {} points agree within joint error bars", rows.len()));
            for r in rows.iter().filter(|r| !r.agree) {
                o.require(
                    false,
                    format!("u={:?}: {} +- {} vs {} +- {}", r.u, r.reference, r.reference_error, r.monte_carlo, r.monte_carlo_error),
                );
            }
            Ok(o)
        }
        Check::Kernel => {
            let k = ctx.kernel(v.paths)?;
            let mut po = KernelPropertyOpts::for_dim(ctx.sys.n());
            po.samples = ctx.samples_or(po.samples);
            po.seed = ctx.seed;
            po.symmetry_tol = ctx.tol.get("kernel.symmetry_rel");
            po.mass_tol = ctx.tol.get("kernel.mass_abs");
            po.homogeneity_tol = ctx.tol.get("kernel.homogeneity_rel");
            po.reproduction_tol = ctx.tol.get("kernel.reproduction_rel");
            let rep = kernel_property_suite(&k, &po)?;
            let mut o = Outcome::new(&rep)?.table("", check_table(&rep.checks));
            o.oracle("group-kernel", kernel_oracle(k.group_kernel().method()));
            o.oracle("saturation", SATURATION);
            o.say(format!("kernel {}: masses {:?}", rep.system, rep.masses));
            failed_checks(&mut o, &rep.checks);
            Ok(o)
        }
        Check::Gaussian => verify_gaussian(ctx, v),
        Check::Derivative => verify_derivative(ctx),
        Check::Saturation => {
            let k = ctx.kernel(v.paths)?;
            let geo = ctx.geometry();
            let rep = saturation_gaussian_check(&k, &geo, &sample_spec(ctx, 60))?;
            let mut o = Outcome::new(&json!({
                "check": "saturation",
                "system": rep.system,
                "seed": ctx.seed,
                "n_samples": rep.samples.len(),
                "fitted_constants": { "kappa": rep.kappa, "theta": rep.theta },
                "violations": rep.violations,
                "samples": rep.samples,
            }))?;
            envelope_oracles(&mut o, &k);
            o.say(format!("saturation: kappa {} theta {}", rep.kappa, rep.theta));
            o.violations.extend(rep.violations.iter().cloned());
            Ok(o)
        }
        Check::Equivalent => {
            let geo = ctx.geometry();
            let samples = kernel_samples(&ctx.control(), ctx.samples_or(12), ctx.seed);
            let rep = equivalent_gaussian_check(&geo, v.theta, &samples)?;
            let mut violations = Vec::new();
            if !rep.c1.is_finite() {
                violations.push("C1 is not finite".to_string());
            }
            let mut o = Outcome::new(&json!({
                "check": "equivalent",
                "system": ctx.sys.name(),
                "seed": ctx.seed,
                "n_samples": samples.len(),
                "fitted_constants": { "c1": rep.c1, "theta": rep.theta },
                "violations": violations,
                "per_sample": rep.per_sample,
            }))?;
            o.oracle("distance", DISTANCE);
            o.oracle("volume", VOLUME);
            o.say(format!("equivalent Gaussian: C1 {} at theta {}", rep.c1, rep.theta));
            o.violations = violations;
            Ok(o)
        }
        Check::Slices => verify_slices(ctx, v),
    }
}

fn sample_spec(ctx: &Ctx, default: usize) -> SampleSpec {
    SampleSpec {
        samples: ctx.samples_or(default),
        seed: ctx.seed,
        max_ratio: ctx.tol.get("envelope.max_ratio"),
        ..Default::default()
    }
}

fn envelope_oracles(o: &mut Outcome, k: &HeatKernel) {
    o.oracle("group-kernel", kernel_oracle(k.group_kernel().method()));
    o.oracle("saturation", SATURATION);
    o.oracle("distance", DISTANCE);
    o.oracle("volume", VOLUME);
    o.oracle("envelope", ENVELOPE);
}

fn verify_metric(ctx: &Ctx, v: &VerifyArgs) -> Result<Outcome> {
    let n = ctx.sys.n();
    let cs = ctx.control();
    let opts = DistanceOpts { seed: ctx.seed, ..Default::default() };
    let lambda = v.lambda.unwrap_or(2.0);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..ctx.samples_or(20))
        .map(|i| {
            let mut rng = stream_rng(ctx.seed ^ 0x3e71_c0de, i as u64);
            let mut draw = || -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.5..1.5)).collect() };
            (draw(), draw())
        })
        .collect();
    let dist = |a: &[f64], b: &[f64]| cc_distance(&cs, a, b, &opts);
    let rows = pairs
        .par_iter()
        .map(|(a, b)| -> Result<(f64, f64, f64, bool)> {
            let r1 = dist(a, b)?;
            let r2 = dist(b, a)?;
            let r3 = dist(&cs.dilate(lambda, a), &cs.dilate(lambda, b))?;
            Ok((r1.upper, r2.upper, r3.upper, r1.converged && r2.converged && r3.converged))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sym_tol, hom_tol, vert_tol) =
        (ctx.tol.get("metric.symmetry_rel"), ctx.tol.get("metric.homogeneity_rel"), ctx.tol.get("metric.vertical_rel"));
    let w = |a: &[f64], b: &[f64]| format!("x={a:?} y={b:?}");
    let sym = PropertyCheck::from_rows(
        "symmetry",
        sym_tol,
        pairs.iter().zip(&rows).map(|((a, b), r)| ((r.0 - r.1).abs(), sym_tol * r.0.max(r.1), w(a, b))),
    );
    let hom = PropertyCheck::from_rows(
        "homogeneity",
        hom_tol,
        pairs.iter().zip(&rows).map(|((a, b), r)| ((r.2 - lambda * r.0).abs(), hom_tol * lambda * r.0, w(a, b))),
    );
    // Heaviest coordinate axis: d(0, b e_k) = b^{1/σ_k} d(0, e_k).
    let k = n - 1;
    let sigma = ctx.sys.weights()[k] as f64;
    let origin = vec![0.0; n];
    let base = dist(&origin, &ctx.unit(k))?.upper;
    let bs = [0.25, 4.0, 9.0, 16.0];
    let vertical = bs
        .iter()
        .map(|&b| {
            let y: Vec<f64> = ctx.unit(k).iter().map(|c| c * b).collect();
            Ok((b, dist(&origin, &y)?.upper, b.powf(1.0 / sigma) * base))
        })
        .collect::<Result<Vec<_>>>()?;
    let vert = PropertyCheck::from_rows(
        "vertical",
        vert_tol,
        vertical.iter().map(|(b, d, e)| ((d - e).abs(), vert_tol * e, format!("b={b}"))),
    );
    let checks = vec![sym, hom, vert];
    let mut t = Table::new(
        coords("x", n).into_iter().chain(coords("y", n)).chain(["d_xy", "d_yx", "d_dilated", "converged"].map(String::from)),
    );
    let mut prs = Vec::new();
    for ((a, b), r) in pairs.iter().zip(&rows) {
        t.push(nums(a).chain(nums(b)).chain([num(r.0), num(r.1), num(r.2), r.3.to_string()]).collect());
        prs.push(json!({ "x": a, "y": b, "d_xy": r.0, "d_yx": r.1, "d_dilated": r.2, "converged": r.3 }));
    }
    let vrows: Vec<_> = vertical.iter().map(|(b, d, e)| json!({ "b": b, "distance": d, "expected": e })).collect();
    let passed = checks.iter().all(|c| c.passed);
    let mut o = Outcome::new(&json!({
        "check": "metric",
        "system": ctx.sys.name(),
        "lambda": lambda,
        "axis": k + 1,
        "checks": checks,
        "pairs": prs,
        "vertical": vrows,
        "passed": passed,
    }))?
    .table("", t);
    o.oracle("distance", DISTANCE);
    failed_checks(&mut o, &checks);
    Ok(o)
}

fn verify_volume(ctx: &Ctx, v: &VerifyArgs) -> Result<Outcome> {
    let n = ctx.sys.n();
    let q = ctx.sys.q() as f64;
    let cs = ctx.control();
    let opts = VolumeOpts { samples: ctx.samples_or(2000), seed: ctx.seed, ..Default::default() };
    let vol = |x: &[f64], grid: &[f64]| -> Result<Vec<f64>> {
        grid.iter().map(|&r| Ok(ball_volume(&cs, x, r, &opts)?.estimate)).collect()
    };
    let origin = vec![0.0; n];
    let x0 = match &v.x {
        Some(s) => ctx.point(s)?,
        None => ctx.unit(0),
    };
    let og = [0.5, 4.0];
    let sg = [0.01, 0.04];
    let lg = [16.0, 64.0];
    let ov = vol(&origin, &og)?;
    let sv = vol(&x0, &sg)?;
    let lv = vol(&x0, &lg)?;
    let slope0 = log_slope(&og, &ov);
    let small = log_slope(&sg, &sv);
    let large = log_slope(&lg, &lv);
    let (slope_abs, nsw_abs) = (ctx.tol.get("volume.slope_abs"), ctx.tol.get("volume.nsw_slope_abs"));
    let doubling = doubling_report(&cs, &[origin.clone(), x0.clone()], &[0.1, 1.0, 5.0], &opts)?;
    let (lo, hi) = (
        2f64.powi(n as i32) * ctx.tol.get("volume.doubling_low"),
        2f64.powf(q) * ctx.tol.get("volume.doubling_high"),
    );
    let mut t = Table::new(coords("x", n).into_iter().chain(["rho", "volume", "volume_2rho", "ratio"].map(String::from)));
    for d in &doubling {
        t.push(nums(&d.x).chain([num(d.rho), num(d.volume), num(d.volume_2rho), num(d.ratio)]).collect());
    }
    let mut o = Outcome::new(&json!({
        "check": "volume",
        "system": ctx.sys.name(),
        "q": q,
        "n": n,
        "origin": { "rho": og, "volumes": ov, "slope": slope0 },
        "transition": { "x": x0, "small_rho": sg, "small_volumes": sv, "small_slope": small,
                        "large_rho": lg, "large_volumes": lv, "large_slope": large },
        "doubling": doubling,
        "doubling_bounds": [lo, hi],
    }))?
    .table("doubling", t);
    o.oracle("volume", VOLUME);
    o.say(format!("origin slope {slope0:.4} (q = {q})"));
    o.say(format!("transition at {x0:?}: small-radius slope {small:.4} (n = {n}), large-radius slope {large:.4} (q = {q})"));
    o.require((slope0 - q).abs() <= slope_abs, format!("origin slope {slope0} differs from q = {q} by more than {slope_abs}"));
    o.require((small - n as f64).abs() <= nsw_abs, format!("small-radius slope {small} at {x0:?} differs from n = {n}"));
    o.require((large - q).abs() <= nsw_abs, format!("large-radius slope {large} at {x0:?} differs from q = {q}"));
    for d in &doubling {
        o.require(d.ratio >= lo && d.ratio <= hi, format!("doubling ratio {} at x={:?}, rho={} outside [{lo}, {hi}]", d.ratio, d.x, d.rho));
    }
    Ok(o)
}

fn verify_gaussian(ctx: &Ctx, v: &VerifyArgs) -> Result<Outcome> {
    let k = ctx.kernel(v.paths)?;
    let geo = ctx.geometry();
    let spec = sample_spec(ctx, 200);
    let lambda = v.lambda.unwrap_or(2.0);
    let (a, b, st) = envelope_stability(&k, &geo, &spec, lambda)?;
    let stab_tol = ctx.tol.get("envelope.stability_rel");
    let mut violations: Vec<String> = a.violations.iter().chain(&b.violations).cloned().collect();
    if !(st.relative_change <= stab_tol) {
        violations.push(format!("fitted rho changes by {} under dilation by {lambda}", st.relative_change));
    }
    let n = ctx.sys.n();
    let mut t = Table::new(
        ["t".to_string()]
            .into_iter()
            .chain(coords("x", n))
            .chain(coords("y", n))
            .chain(["kernel", "kernel_error", "volume", "distance", "lower_requirement", "upper_requirement"].map(String::from)),
    );
    for s in &a.samples {
        t.push(
            [num(s.t)]
                .into_iter()
                .chain(nums(&s.x))
                .chain(nums(&s.y))
                .chain([num(s.kernel), num(s.kernel_error), num(s.volume), num(s.distance), num(s.lower_requirement), num(s.upper_requirement)])
                .collect(),
        );
    }
    let mut o = Outcome::new(&json!({
        "check": "gaussian",
        "system": a.system,
        "seed": ctx.seed,
        "n_samples": a.n_samples,
        "fitted_constants": { "rho": a.fitted, "rho_dilated": b.fitted },
        "stability": st,
        "max_ratio": a.max_ratio,
        "violations": violations,
        "samples": a.samples,
    }))?
    .table("", t);
    envelope_oracles(&mut o, &k);
    o.say(format!("gaussian: rho {} on {} samples (max d/sqrt(t) {:.3}), dilated {} (change {:.2e})", a.fitted, a.n_samples, a.max_ratio, b.fitted, st.relative_change));
    o.violations = violations;
    Ok(o)
}

/// Label such as `dt1.X1x.X2y`.
fn spec_label(d: &DerivativeSpec) -> String {
    let mut parts = Vec::new();
    if d.time_order > 0 {
        parts.push(format!("dt{}", d.time_order));
    }
    parts.extend(d.x_fields.iter().map(|j| format!("X{}x", j + 1)));
    parts.extend(d.y_fields.iter().map(|j| format!("X{}y", j + 1)));
    parts.join(".")
}

fn verify_derivative(ctx: &Ctx) -> Result<Outcome> {
    let k = ctx.kernel(None)?;
    let geo = ctx.geometry();
    let spec = sample_spec(ctx, 24);
    let specs = [
        DerivativeSpec::new(1, vec![], vec![]),
        DerivativeSpec::new(0, vec![0], vec![]),
        DerivativeSpec::new(0, vec![0], vec![0]),
        DerivativeSpec::new(0, vec![0, 1], vec![1]),
    ];
    let power_abs = ctx.tol.get("envelope.power_abs");
    let mut fitted = serde_json::Map::new();
    let mut reports = Vec::new();
    let mut violations = Vec::new();
    let mut lines = Vec::new();
    for d in &specs {
        let r = derivative_envelope_fit(&k, &geo, &spec, d, false)?;
        let label = spec_label(d);
        fitted.insert(label.clone(), json!(r.fitted));
        violations.extend(r.violations.iter().map(|v| format!("{label}: {v}")));
        if !r.fitted.is_finite() {
            violations.push(format!("{label}: fitted constant is not finite"));
        }
        if !(r.max_exponent_error <= power_abs) {
            violations.push(format!("{label}: diagonal t-exponent off by {}", r.max_exponent_error));
        }
        lines.push(format!(
            "{label}: C {} exponents {:?} (expected {})",
            r.fitted,
            r.power_fits.iter().map(|f| f.exponent).collect::<Vec<_>>(),
            r.power_fits.first().map(|f| f.expected).unwrap_or(f64::NAN)
        ));
        reports.push(r);
    }
    let mut t = Table::new(["derivative", "fitted", "max_exponent_error"]);
    for (d, r) in specs.iter().zip(&reports) {
        t.push(vec![spec_label(d), num(r.fitted), num(r.max_exponent_error)]);
    }
    let mut o = Outcome::new(&json!({
        "check": "derivative",
        "system": ctx.sys.name(),
        "seed": ctx.seed,
        "n_samples": spec.samples,
        "fitted_constants": fitted,
        "violations": violations,
        "fits": reports,
    }))?
    .table("", t);
    envelope_oracles(&mut o, &k);
    o.summary = lines;
    o.violations = violations;
    Ok(o)
}

fn verify_slices(ctx: &Ctx, v: &VerifyArgs) -> Result<Outcome> {
    let g = ctx.group()?;
    let cs = ctx.control();
    let geo = ctx.geometry();
    let x = match &v.x {
        Some(s) => ctx.point(s)?,
        None => ctx.unit(0),
    };
    let rho = v.rho.unwrap_or(1.0);
    let lambda = v.lambda.unwrap_or(2.0);
    let xi = vec![0.0; g.p()];
    let sopts = SliceOpts { samples: ctx.samples_or(400), seed: ctx.seed, ..Default::default() };
    let unit_z = ball_volume(g.control(), &vec![0.0; g.N()], 1.0, &VolumeOpts { samples: 4000, seed: ctx.seed, ..Default::default() })?;
    let grid = slice_grid(&cs, &x, rho);
    let base = sanchez_slice_check(&g, &geo, &unit_z, &x, &xi, rho, &grid, &sopts)?;
    let xz: Vec<f64> = x.iter().chain(&xi).copied().collect();
    let dz = g.dilate(lambda, &xz);
    let (x2, xi2) = dz.split_at(ctx.sys.n());
    let grid2: Vec<Vec<f64>> = grid.iter().map(|y| cs.dilate(lambda, y)).collect();
    let dil = sanchez_slice_check(&g, &geo, &unit_z, x2, xi2, lambda * rho, &grid2, &sopts)?;
    let mut o = Outcome::new(&json!({
        "check": "slices",
        "system": ctx.sys.name(),
        "seed": ctx.seed,
        "n_samples": sopts.samples,
        "lambda": lambda,
        "fitted_constants": { "c1": base.c1, "c2": base.c2, "c1_dilated": dil.c1, "c2_dilated": dil.c2 },
        "base": base,
        "dilated": dil,
    }))?;
    o.oracle("volume", VOLUME);
    o.oracle("distance", DISTANCE);
    o.say(format!("slices: c1 {} +- {}, c2 {} +- {}", base.c1, base.c1_ci, base.c2, base.c2_ci));
    o.say(format!("dilated by {lambda}: c1 {} +- {}, c2 {} +- {}", dil.c1, dil.c1_ci, dil.c2, dil.c2_ci));
    o.require(base.c1.is_finite() && dil.c1.is_finite(), "c1 is not finite");
    o.require(base.c2.is_finite() && base.c2 > 0.0, format!("c2 = {} is not positive", base.c2));
    o.require(
        (base.c1 - dil.c1).abs() <= base.c1_ci + dil.c1_ci,
        format!("c1 moves from {} to {} under dilation, beyond the joint CI", base.c1, dil.c1),
    );
    o.require(
        (base.c2 - dil.c2).abs() <= base.c2_ci + dil.c2_ci,
        format!("c2 moves from {} to {} under dilation, beyond the joint CI", base.c2, dil.c2),
    );
    let mut t = Table::new(["grid", "d_xy", "inner", "ratio", "ratio_ci", "ratio_dilated", "ratio_dilated_ci"]);
    for (i, (r1, r2)) in base.rows.iter().zip(&dil.rows).enumerate() {
        t.push(vec![i.to_string(), num(r1.d_xy), r1.inner.to_string(), num(r1.ratio), num(r1.ratio_ci), num(r2.ratio), num(r2.ratio_ci)]);
    }
    Ok(o.table("", t))
}

fn cmd_cauchy(ctx: &Ctx, datum: &str, ts: &[f64], x: &[String], envelope_rho: Option<f64>, steps: &[f64]) -> Result<Outcome> {
    let n = ctx.sys.n();
    let text = if datum.trim_start().starts_with('{') { datum.to_string() } else { fs::read_to_string(datum)? };
    let d: InitialDatum = serde_json::from_str(&text)?;
    d.validate()?;
    let k = ctx.kernel(None)?;
    let points = ctx.points_or_origin(x)?;
    let (rho, rho_source) = match (envelope_rho, d.growth_class()) {
        (Some(r), _) => (Some(r), "given"),
        (None, GrowthClass::QuadraticExponential { .. }) => {
            let rep = gaussian_envelope_fit(&k, &ctx.geometry(), &sample_spec(ctx, 200), 1.0)?;
            if !rep.violations.is_empty() {
                return Err(Error::numerical(format!("envelope fit failed: {:?}", rep.violations)));
            }
            (Some(rep.fitted), "fitted")
        }
        (None, _) => (None, "unused"),
    };
    let opts = CauchyOpts { horizon_fraction: ctx.tol.get("cauchy.horizon_fraction"), envelope_rho: rho, ..Default::default() };
    let solver = CauchySolver::new(&k, opts)?;
    let horizon = solver.horizon(&d)?;
    let jobs: Vec<(f64, &Vec<f64>)> = ts.iter().flat_map(|&t| points.iter().map(move |p| (t, p))).collect();
    let values = jobs.iter().map(|(t, p)| solver.solve(&d, *t, p)).collect::<Result<Vec<_>>>()?;
    let mut t = Table::new(["t".to_string()].into_iter().chain(coords("x", n)).chain(["u", "abs_error"].map(String::from)));
    let mut rows = Vec::new();
    let mut o_lines = Vec::new();
    for ((tt, p), v) in jobs.iter().zip(&values) {
        t.push([num(*tt)].into_iter().chain(nums(p)).chain([num(v.value), num(v.abs_error)]).collect());
        o_lines.push(format!("u({tt}, {p:?}) = {} +- {}", v.value, v.abs_error));
        rows.push(json!({ "t": tt, "x": p, "value": v }));
    }
    let mut violations = Vec::new();
    if let InitialDatum::Constant { value } = d {
        let tol = ctx.tol.get("cauchy.constant_abs");
        for ((tt, p), v) in jobs.iter().zip(&values) {
            if !((v.value - value).abs() <= tol) {
                violations.push(format!("constant datum {value} not preserved at t={tt}, x={p:?}: {}", v.value));
            }
        }
    }
    let residual = if steps.is_empty() {
        None
    } else {
        let probes: Vec<(f64, Vec<f64>)> = jobs.iter().map(|(tt, p)| (*tt, p.to_vec())).collect();
        let suite = solver.residual_suite(&d, &probes, steps)?;
        let slack = ctx.tol.get("cauchy.residual_order_abs");
        for (((tt, p), v), r) in jobs.iter().zip(&values).zip(&suite.reports) {
            let coarse = r.residuals.iter().rev().nth(1).copied().unwrap_or(0.0).abs();
            // Residuals already at rounding level carry no order information.
            if coarse > 1e-7 * v.value.abs().max(1e-300) && !(r.observed_order >= 2.0 - slack) {
                violations.push(format!("caloric residual order {} at t={tt}, x={p:?}", r.observed_order));
            }
        }
        o_lines.push(format!("max caloric residual {}", suite.max_residual));
        Some(suite)
    };
    let mut o = Outcome::new(&json!({
        "system": ctx.sys.name(),
        "datum": d,
        "growth_class": d.growth_class(),
        "envelope_rho": rho,
        "envelope_rho_source": rho_source,
        "horizon": horizon,
        "values": rows,
        "residual": residual,
        "violations": violations,
    }))?
    .table("", t);
    o.oracle("group-kernel", kernel_oracle(k.group_kernel().method()));
    o.oracle("saturation", SATURATION);
    o.oracle("cauchy", CAUCHY);
    if rho_source == "fitted" {
        o.oracle("envelope", ENVELOPE);
    }
    o.summary = o_lines;
    o.violations = violations;
    Ok(o)
}

struct HarnackArgs {
    r: Vec<f64>,
    lambda: f64,
    x: Option<String>,
    fields: Vec<usize>,
    time_order: u32,
    slices: usize,
    spatial: usize,
    constant: Option<f64>,
}

fn cmd_harnack(ctx: &Ctx, h: &HarnackArgs) -> Result<Outcome> {
    let k = ctx.kernel(None)?;
    let cs = k.base();
    let x0 = match &h.x {
        Some(s) => ctx.point(s)?,
        None => vec![0.0; ctx.sys.n()],
    };
    if h.fields.iter().any(|&f| f == 0) {
        return Err(Error::Config("field indices are 1-based".into()));
    }
    let order = DerivativeOrder::new(h.fields.iter().map(|f| f - 1).collect(), h.time_order);
    let opts = HarnackOpts {
        time_slices: h.slices,
        spatial: h.spatial,
        caloric_tol: ctx.tol.get("harnack.caloric"),
        seed: ctx.seed,
        ..Default::default()
    };
    let case = ColumnCase::standard(cs, x0);
    let name = ctx.sys.name();
    let rep = match h.constant {
        None => harnack_scale_invariance(&k, name, &case, &h.r, h.lambda, &order, &opts)?,
        Some(c) => constant_family(cs, name, c, &case, &h.r, h.lambda, &order, &opts)?,
    };
    let band = if order.is_zero() { ctx.tol.get("harnack.scale_band") } else { ctx.tol.get("harnack.derivative_band") };
    let mut t = Table::new(["r", "ratio", "normalized_ratio", "u0", "sup", "refinement_delta"]);
    for (r, run) in h.r.iter().zip(&rep.runs) {
        t.push(vec![num(*r), num(run.sup / run.u0), num(run.ratio), num(run.u0), num(run.sup), num(run.refinement_delta)]);
    }
    let mut o = Outcome::new(&rep)?.table("", t);
    o.oracle("group-kernel", kernel_oracle(k.group_kernel().method()));
    o.oracle("saturation", SATURATION);
    o.oracle("distance", DISTANCE);
    o.oracle("harnack", HARNACK);
    o.say(format!("radii {:?}", rep.r_values));
    o.say(format!("ratios {:?}", rep.ratios));
    o.say(format!("normalized {:?}", rep.normalized_ratios));
    o.say(format!("median {} spread {:.4} (band {band}) refinement delta {:.2e}", rep.median, rep.spread, rep.refinement_delta));
    o.require(rep.spread <= band, format!("normalized ratios spread {} around median {} exceeds {band}", rep.spread, rep.median));
    Ok(o)
}

#[allow(clippy::too_many_arguments)]
fn constant_family(
    cs: &ControlSystem,
    system: &str,
    value: f64,
    case: &ColumnCase,
    r_values: &[f64],
    lambda: f64,
    order: &DerivativeOrder,
    opts: &HarnackOpts,
) -> Result<ScaleReport> {
    let u = ConstantCaloric(value);
    let mut runs = Vec::new();
    for (i, &r) in r_values.iter().enumerate() {
        let (cyl, _, _) = case.at_scale(cs, r, lambda)?;
        let o = HarnackOpts { seed: opts.seed.wrapping_add(0x9e37_79b9 * (i as u64 + 1)), ..*opts };
        runs.push(harnack_derivative_ratio(cs, system, &u, &cyl, order, &o)?);
    }
    let ratios: Vec<f64> = runs.iter().map(|r| r.sup / r.u0).collect();
    let normalized: Vec<f64> = runs.iter().map(|r| r.ratio).collect();
    let med = median(&normalized);
    Ok(ScaleReport {
        system: system.to_string(),
        case: case.clone(),
        order: order.clone(),
        r_values: r_values.to_vec(),
        lambda,
        spread: normalized.iter().map(|v| if med == 0.0 { v.abs() } else { (v / med - 1.0).abs() }).fold(0.0, f64::max),
        median: med,
        ratios,
        normalized_ratios: normalized,
        refinement_delta: runs.iter().map(|r| r.refinement_delta).fold(0.0, f64::max),
        runs,
    })
}
