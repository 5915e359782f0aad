//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nss_core::bounds::{
    beta_star, bound_b, down_cross_survival_bound, expected_down_cross, expected_up_cross, fractile_q,
    lambert_w_lower, up_cross_survival_bound, BoundSet, LevelPair, DEFAULT_TOL,
};
use nss_core::model::builtin_example;
use nss_core::slln::{
    dominated_coupling_lower, dominated_coupling_upper, inverse_cdf_inf, uniformize, ConditionalCdf, Discrete,
    DominatingLaw, Exponential, Iid, Mixture, Normal, OpenUniform, Uniform,
};
use nss_core::stats::ks_test;
use nss_lab::pipeline::{execute, ExperimentReport, Status};
use nss_lab::{run_example, ExperimentConfig};

type Outcome = Result<String, String>;

struct Suite {
    failures: usize,
}

impl Suite {
    fn run(&mut self, n: u32, title: &str, budget_s: f64, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok(d) if secs <= budget_s => (true, d),
            Ok(d) => (false, format!("{d}; over the {budget_s} s budget")),
            Err(d) => (false, d),
        };
        if !ok {
            self.failures += 1;
        }
        let mark = if ok { "PASS" } else { "FAIL" };
        println!("criterion {n}: {mark}  {title}: {detail} [{secs:.2} s]");
    }
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Plain bisection on `w e^w = x` over `w <= -1`, where the map falls from 0 to `-1/e`.
fn bisection_w_lower(x: f64) -> f64 {
    let (mut lo, mut hi) = (-800.0f64, -1.0f64);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid * mid.exp() > x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn lambert() -> Outcome {
    let n = 1000;
    let (lo, hi) = (1e-12f64, (-1.0f64).exp() - 1e-12);
    let mut worst = 0.0f64;
    for i in 0..n {
        let mag = (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp();
        let x = -mag;
        let w = lambert_w_lower(x, DEFAULT_TOL).map_err(|e| format!("x = {x}: {e}"))?;
        worst = worst.max((w * w.exp() - x).abs());
    }
    require(worst <= 1e-10, || format!("max residual {worst:e}"))?;
    let x = -(-2.0f64).exp();
    let oracle = bisection_w_lower(x);
    let w = lambert_w_lower(x, DEFAULT_TOL).map_err(|e| e.to_string())?;
    require((w - oracle).abs() <= 1e-9, || format!("W(-e^-2) = {w}, oracle {oracle}"))?;
    require((oracle + 3.146193).abs() < 1e-6, || format!("oracle drifted: {oracle}"))?;
    Ok(format!("max residual {worst:.1e} on {n} points, W(-e^-2) = {w:.12} (oracle {oracle:.12})"))
}

fn fractile() -> Outcome {
    let spec = builtin_example();
    let q = fractile_q(1.0 / 3.0, spec.c(), spec.gamma_max(), |v| spec.alpha1_inv(v)).map_err(|e| e.to_string())?;
    require((q - 2.1958).abs() <= 5e-4, || format!("q_1/3 = {q}"))?;
    Ok(format!("q_1/3 = {q:.6}"))
}

fn occupancy(report: &ExperimentReport) -> Outcome {
    let rows = &report.tables.occupancy;
    require(rows.len() == 50, || format!("{} grid points", rows.len()))?;
    let (first, last) = (rows[0].threshold, rows[49].threshold);
    require((first - 1.05).abs() < 1e-12 && (last - 10.0).abs() < 1e-12, || {
        format!("grid spans [{first}, {last}]")
    })?;
    let ratio = rows[1].threshold / rows[0].threshold;
    require(rows.windows(2).all(|w| (w[1].threshold / w[0].threshold - ratio).abs() < 1e-9), || {
        "grid is not log-spaced".into()
    })?;
    let violations = rows.iter().filter(|r| r.empirical < r.bound).count();
    require(violations == 0, || format!("{violations} points with D < b"))?;
    let margin = rows.iter().map(|r| r.empirical - r.bound).fold(f64::INFINITY, f64::min);
    Ok(format!("D >= b at all 50 points, smallest margin {margin:.4}"))
}

fn fraction_inside(report: &ExperimentReport) -> Outcome {
    let row = report
        .tables
        .fractiles
        .iter()
        .find(|r| (r.bound - 1.0 / 3.0).abs() < 1e-12)
        .ok_or("no k = 1/3 fractile row")?;
    require(row.empirical >= 1.0 / 3.0, || format!("fraction {} below 1/3", row.empirical))?;
    Ok(format!("time fraction with |x| < {:.4} is {:.4}", row.threshold, row.empirical))
}

fn cross_times(report: &ExperimentReport) -> Outcome {
    let bounds = &report.bounds;
    require((bounds.beta - beta_star()).abs() < 1e-12 && bounds.levels.v1 == 2.0, || {
        format!("levels v1 = {}, beta = {}", bounds.levels.v1, bounds.beta)
    })?;
    let mut problems = Vec::new();
    let loops = report.record.complete_loops;
    if loops < 100 {
        problems.push(format!("only {loops} complete loops (need 100)"));
    }
    let mut details = Vec::new();
    for name in ["up-cross", "down-cross"] {
        let check = report.check(name).ok_or(format!("{name} check missing"))?;
        if check.status != Status::Pass {
            problems.push(format!("{name} {}: {}", check.status.label(), check.detail));
        }
        details.push(format!("{name} {}", check.status.label()));
    }
    let summary = format!("{loops} loops, {}", details.join(", "));
    if problems.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", problems.join("; ")))
    }
}

fn ensemble(report: &ExperimentReport) -> Outcome {
    let cfg = &report.config;
    require(cfg.n_paths == 10_000 && cfg.ensemble_times == [1.0, 2.5, 5.0] && cfg.dt == 1e-3, || {
        "ensemble settings differ from 10^4 paths at {1, 2.5, 5}, dt = 1e-3".into()
    })?;
    let mut parts = Vec::new();
    for name in ["moment", "probability"] {
        let check = report.check(name).ok_or(format!("{name} check missing"))?;
        require(check.status == Status::Pass, || format!("{name} {}: {}", check.status.label(), check.detail))?;
        parts.push(format!("{name} pass"));
    }
    let m = &report.tables.moment;
    let p = &report.tables.probability;
    require(m.len() == 3 && p.len() == 3, || "expected three rows per check".into())?;
    Ok(format!(
        "{}; E V(5) = {:.4} <= {:.4}, P(5) = {:.4} >= {:.4}",
        parts.join(", "),
        m[2].empirical,
        m[2].bound,
        p[2].empirical,
        p[2].bound
    ))
}

fn draw<L: DominatingLaw>(law: &L, n: usize, seed: u64) -> Result<Vec<f64>, String> {
    let mut u = OpenUniform::new(seed, 0);
    (0..n).map(|_| inverse_cdf_inf(u.next(), law).map_err(|e| e.to_string())).collect()
}

fn ks_uniform<G: ConditionalCdf>(xs: &[f64], g: &G, seed: u64, label: &str) -> Result<f64, String> {
    let mut xi = OpenUniform::new(seed, 1);
    let ys = xs
        .iter()
        .enumerate()
        .map(|(n, &x)| uniformize(x, &xs[..n], xi.next(), g))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let p = ks_test(&ys, |s| s.clamp(0.0, 1.0)).map_err(|e| e.to_string())?.p_value;
    require(p > 0.01, || format!("{label}: KS p = {p}"))?;
    Ok(p)
}

fn mean_within(zs: &[f64], mean: f64, sd: f64, label: &str) -> Result<(), String> {
    let m = zs.iter().sum::<f64>() / zs.len() as f64;
    require((m - mean).abs() <= 4.0 * sd / (zs.len() as f64).sqrt(), || {
        format!("{label}: coupled mean {m} vs {mean}")
    })
}

fn slln() -> Outcome {
    const N: usize = 100_000;
    let discrete = Discrete::new(vec![(0.0, 0.2), (1.0, 0.5), (3.0, 0.3)]).map_err(|e| e.to_string())?;
    let p_disc = ks_uniform(&draw(&discrete, N, 101)?, &Iid(&discrete), 102, "discrete")?;

    let normal = Normal { mean: 1.0, std_dev: 2.0 };
    let p_cont = ks_uniform(&draw(&normal, N, 103)?, &Iid(&normal), 104, "continuous")?;

    let mixed = Mixture {
        weight: 0.4,
        first: Discrete::point_mass(0.5),
        second: Exponential { rate: 2.0 },
    };
    let mut u = OpenUniform::new(105, 0);
    let xs: Vec<f64> = (0..N)
        .map(|_| if u.next() < 0.4 { 0.5 } else { -u.next().ln() / 2.0 })
        .collect();
    let p_mix = ks_uniform(&xs, &Iid(&mixed), 106, "mixed")?;

    let sd = (1.0f64 / 12.0).sqrt();
    let z_law = Uniform { low: 0.0, high: 1.0 };
    let low = Uniform { low: 0.0, high: 0.5 };
    let xs = draw(&low, N, 107)?;
    let zs = dominated_coupling_upper(&xs, &Iid(low), &z_law, 108).map_err(|e| e.to_string())?;
    let bad = xs.iter().zip(&zs).filter(|(x, z)| x > z).count();
    require(bad == 0, || format!("upper coupling: {bad} violations"))?;
    mean_within(&zs, 0.5, sd, "upper coupling")?;

    let high = Uniform { low: 0.5, high: 1.0 };
    let xs = draw(&high, N, 109)?;
    let zs = dominated_coupling_lower(&xs, &Iid(high), &z_law, 110).map_err(|e| e.to_string())?;
    let bad = xs.iter().zip(&zs).filter(|(x, z)| x < z).count();
    require(bad == 0, || format!("lower coupling: {bad} violations"))?;
    mean_within(&zs, 0.5, sd, "lower coupling")?;

    Ok(format!(
        "KS p = {p_disc:.3} / {p_cont:.3} / {p_mix:.3} (discrete / continuous / mixed), couplings exact at n = {N}"
    ))
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * i as f64);
    }
    acc * h / 3.0
}

fn identities() -> Outcome {
    let err = |e: nss_core::Error| e.to_string();
    let mut worst_rel = 0.0f64;
    for &(c, g) in &[(1.0, 0.5), (2.0, 1.0), (0.3, 0.05)] {
        for &beta in &[0.1, beta_star(), 0.8] {
            let lv = LevelPair::from_beta(beta, 4.0 * g / c, c, g).map_err(err)?;
            let up = simpson(|s| up_cross_survival_bound(s, &lv), 0.0, 60.0 / c, 200_000);
            worst_rel = worst_rel.max((up / expected_up_cross(&lv) - 1.0).abs());
            let kink = ((lv.v1 - lv.floor()) / (lv.v0 - lv.floor())).ln() / c;
            let down = kink + simpson(|s| down_cross_survival_bound(s, &lv), kink, kink + 60.0 / c, 200_000);
            worst_rel = worst_rel.max((down / expected_down_cross(&lv) - 1.0).abs());
        }
    }
    require(worst_rel <= 1e-6, || format!("quadrature rel. err. {worst_rel:e}"))?;

    let spec = builtin_example();
    let (c, g) = (spec.c(), spec.gamma_max());
    let mut worst_b = 0.0f64;
    for i in 1..=9 {
        let k = i as f64 / 10.0;
        let q = fractile_q(k, c, g, |v| spec.alpha1_inv(v)).map_err(err)?;
        worst_b = worst_b.max((bound_b(q, c, g, |r| spec.alpha1(r)).map_err(err)? - k).abs());
    }
    require(worst_b <= 1e-9, || format!("|b(q_k) - k| up to {worst_b:e}"))?;

    let n = 1000;
    let ratios = (1..=n)
        .map(|i| {
            let beta = i as f64 / (n + 1) as f64;
            LevelPair::from_beta(beta, 2.0, c, g).map(|lv| (beta, BoundSet::new(lv).ratio_bound))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let (arg, best) = ratios.iter().copied().fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let ties = ratios.iter().filter(|r| r.1 == best).count();
    let at_star = BoundSet::new(LevelPair::optimal(2.0, c, g).map_err(err)?).ratio_bound;
    require(ties == 1, || format!("{ties} grid points share the maximum"))?;
    require((arg - beta_star()).abs() <= 1.0 / (n + 1) as f64, || {
        format!("grid maximiser {arg} is not next to beta* = {}", beta_star())
    })?;
    require(at_star >= best, || format!("ratio at beta* {at_star} below grid maximum {best}"))?;

    Ok(format!(
        "quadrature rel. err. {worst_rel:.1e}, |b(q_k) - k| <= {worst_b:.1e}, grid argmax {arg:.4} vs beta* {:.4}",
        beta_star()
    ))
}

fn csv_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))? {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
            out.push((path.file_name().unwrap().to_string_lossy().into_owned(), bytes));
        }
    }
    out.sort();
    Ok(out)
}

fn determinism(reference: &Path, scratch: &Path) -> Outcome {
    let expected = csv_files(reference)?;
    require(!expected.is_empty(), || "no CSVs in the reference run".into())?;
    for threads in [Some("1"), Some("3"), None] {
        let dir = scratch.join(format!("threads-{}", threads.unwrap_or("default")));
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_nss-lab"));
        cmd.args(["example", "--output-dir"]).arg(&dir).env_remove("NSS_LAB_THREADS");
        if let Some(t) = threads {
            cmd.env("NSS_LAB_THREADS", t);
        }
        let out = cmd.output().map_err(|e| e.to_string())?;
        require(out.status.code() == Some(0), || format!("`nss-lab example` exited with {}", out.status))?;
        let got = csv_files(&dir)?;
        for ((name, a), (other, b)) in expected.iter().zip(&got) {
            require(name == other && a == b, || format!("{name} differs (threads {threads:?})"))?;
        }
        require(got.len() == expected.len(), || "file sets differ".into())?;
    }
    Ok(format!("{} CSVs byte-identical across 4 runs (threads 1, 3, default, in-process)", expected.len()))
}

fn main() -> ExitCode {
    let mut suite = Suite { failures: 0 };
    suite.run(1, "lambert W_-1", 1.0, lambert);
    suite.run(2, "fractile q_1/3", 1.0, fractile);

    let scratch = tempfile::tempdir().expect("temp dir");
    let mut cfg = ExperimentConfig { n_paths: 0, output_dir: scratch.path().join("single"), ..Default::default() };
    let start = Instant::now();
    let single = execute(&builtin_example(), &cfg).map(|(report, _)| report);
    let single_secs = start.elapsed().as_secs_f64();
    match &single {
        Ok(report) => {
            let timed = |out: Outcome| out.map(|d| format!("{d}; trajectory run took {single_secs:.2} s"));
            suite.run(3, "occupancy bound on a 500 s trajectory", 30.0 - single_secs, || timed(occupancy(report)));
            suite.run(4, "time inside the 1/3 fractile", 30.0 - single_secs, || timed(fraction_inside(report)));
            suite.run(5, "cross-time bounds", 60.0 - single_secs, || timed(cross_times(report)));
        }
        Err(e) => {
            for n in 3..=5 {
                suite.run(n, "single-trajectory run", 0.0, || Err(e.to_string()));
            }
        }
    }

    cfg.n_paths = ExperimentConfig::default().n_paths;
    cfg.output_dir = scratch.path().join("reference");
    let mut full = None;
    suite.run(6, "moment and probability bounds", 300.0, || {
        let report = run_example(&cfg).map_err(|e| e.to_string())?;
        let out = ensemble(&report);
        full = Some(report);
        out
    });
    suite.run(7, "SLLN suite", 30.0, slln);
    suite.run(8, "bound identities", 5.0, identities);
    suite.run(9, "determinism", f64::INFINITY, || {
        full.as_ref().ok_or("reference run failed")?;
        determinism(&cfg.output_dir, scratch.path())
    });

    if suite.failures == 0 {
        println!("acceptance: all 9 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of 9 criteria fail", suite.failures);
        ExitCode::FAILURE
    }
}
