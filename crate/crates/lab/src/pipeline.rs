//! The experiment pipeline: premise checks, one long trajectory, loop
//! statistics against the cross-time bounds, occupancy against `b(r)` and
//! the fractiles, and an ensemble for the moment and probability bounds.

use nss_core::bounds::{bound_b, fractile_q, BoundSet, LevelPair, UpCrossLaw};
use nss_core::loops::{
    compare_with_lower_bound, empirical_time_average, extract_loops_series, time_average_series,
    verify_cross_time_bounds, verify_moment_bound, verify_probability_bound, AverageOf, CheckRow,
    LoopRecord, Verdict, MIN_LOOPS,
};
use nss_core::model::{builtin_example, builtin_ou, check_enss, check_envelopes, ConditionReport, EnvelopeReport, SystemSpec};
use nss_core::sim::{integrate, SimConfig, Trajectory, RNG_ALGORITHM};
use nss_core::slln::{dominated_coupling_lower, EmpiricalLaw, Iid, OpenUniform};
use nss_core::Error;

use crate::config::{ExperimentConfig, SystemChoice, V0Policy};
use crate::ensemble::{parallel_snapshots, thread_cap};
use crate::error::{AtStage, LabError, LabResult};
use crate::report;

/// Time points per period (or per horizon) at which the premise is checked.
const PREMISE_TIMES: usize = 16;
/// Above this many grid states the premise sample is drawn at random.
const MAX_GRID_STATES: usize = 100_000;
/// Stream of the random premise sample; far from the path streams.
const PREMISE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Flagged,
    Underpowered,
    Skipped,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Flagged => "FLAGGED",
            Status::Underpowered => "underpowered",
            Status::Skipped => "skipped",
        }
    }

    fn from_verdict(v: Verdict) -> Self {
        match v {
            Verdict::Pass => Status::Pass,
            Verdict::Flagged => Status::Flagged,
            Verdict::Underpowered => Status::Underpowered,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckSummary {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunVerdict {
    Pass,
    PremisesUnverified,
    Flagged,
}

impl RunVerdict {
    pub fn exit_code(self) -> u8 {
        match self {
            RunVerdict::Pass => 0,
            RunVerdict::PremisesUnverified => 2,
            RunVerdict::Flagged => 3,
        }
    }
}

/// Rows of every table the run writes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tables {
    /// `threshold = r`, `empirical = D(r)`, `bound = b(r)`.
    pub occupancy: Vec<CheckRow>,
    pub up_cross: Vec<CheckRow>,
    pub down_cross: Vec<CheckRow>,
    /// `threshold = q_k`, `bound = k`.
    pub fractiles: Vec<CheckRow>,
    /// `threshold = t`, `empirical = mean V`, band of `z` standard errors.
    pub moment: Vec<CheckRow>,
    /// `threshold = t`, `empirical = P{‖x‖ < radius}`.
    pub probability: Vec<CheckRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Premises {
    pub enss: ConditionReport,
    pub envelopes: EnvelopeReport,
}

impl Premises {
    pub fn passed(&self) -> bool {
        self.enss.passed() && self.envelopes.passed()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub system: String,
    pub config: ExperimentConfig,
    pub rng: &'static str,
    pub version: &'static str,
    pub premises: Premises,
    pub bounds: BoundSet,
    pub record: LoopRecord,
    pub tables: Tables,
    pub checks: Vec<CheckSummary>,
    pub notes: Vec<String>,
    pub verdict: RunVerdict,
}

impl ExperimentReport {
    pub fn exit_code(&self) -> u8 {
        self.verdict.exit_code()
    }

    pub fn check(&self, name: &str) -> Option<&CheckSummary> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Builds the system named in the configuration.
pub fn builtin_spec(cfg: &ExperimentConfig) -> LabResult<SystemSpec> {
    match cfg.system {
        SystemChoice::Example => Ok(builtin_example()),
        SystemChoice::Ou { theta, sigma } => builtin_ou(theta, sigma).at("system"),
        SystemChoice::Custom => Err(LabError::Config(
            "system.name = custom needs a system supplied through the library (run_custom)".into(),
        )),
    }
}

/// Runs the configured built-in system and writes its outputs.
pub fn run_config(cfg: &ExperimentConfig) -> LabResult<ExperimentReport> {
    let spec = builtin_spec(cfg)?;
    run_custom(&spec, cfg)
}

/// The built-in example run.
pub fn run_example(cfg: &ExperimentConfig) -> LabResult<ExperimentReport> {
    if cfg.system != SystemChoice::Example {
        return Err(LabError::Config("run_example needs system.name = example".into()));
    }
    run_config(cfg)
}

/// Runs the pipeline on `spec` and writes all tables plus `summary.txt` to
/// the configured output directory.
pub fn run_custom(spec: &SystemSpec, cfg: &ExperimentConfig) -> LabResult<ExperimentReport> {
    let (report, traj) = execute(spec, cfg)?;
    report::write_all(&report, cfg.dump_trajectory.then_some(&traj))?;
    Ok(report)
}

fn premise_sample(spec: &SystemSpec, cfg: &ExperimentConfig) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = spec.dim_state();
    let p = cfg.sample_points;
    let r = cfg.sample_radius;
    let axis: Vec<f64> = (0..p).map(|i| -r + 2.0 * r * i as f64 / (p - 1) as f64).collect();
    let states = match p.checked_pow(n as u32).filter(|&m| m <= MAX_GRID_STATES) {
        Some(total) => (0..total)
            .map(|mut idx| {
                (0..n)
                    .map(|_| {
                        let v = axis[idx % p];
                        idx /= p;
                        v
                    })
                    .collect()
            })
            .collect(),
        None => {
            let mut u = OpenUniform::new(cfg.seed, PREMISE_STREAM);
            (0..MAX_GRID_STATES)
                .map(|_| (0..n).map(|_| -r + 2.0 * r * u.next()).collect())
                .collect()
        }
    };
    let span = spec.period().unwrap_or(cfg.horizon);
    let times = (0..PREMISE_TIMES)
        .map(|i| span * i as f64 / PREMISE_TIMES as f64)
        .collect();
    (states, times)
}

fn levels_for(spec: &SystemSpec, cfg: &ExperimentConfig) -> LabResult<LevelPair> {
    match cfg.v0_policy {
        V0Policy::OptimalBeta => LevelPair::optimal(cfg.v1, spec.c(), spec.gamma_max()),
        V0Policy::Explicit(v0) => LevelPair::new(v0, cfg.v1, spec.c(), spec.gamma_max()),
    }
    .at("levels")
}

fn flag_count(rows: &[CheckRow]) -> usize {
    rows.iter().filter(|r| r.flag).count()
}

fn status_of(rows: &[CheckRow]) -> Status {
    if flag_count(rows) > 0 {
        Status::Flagged
    } else {
        Status::Pass
    }
}

/// Runs every stage without touching the file system.
pub fn execute(spec: &SystemSpec, cfg: &ExperimentConfig) -> LabResult<(ExperimentReport, Trajectory)> {
    cfg.validate()?;
    let x0 = match &cfg.x0 {
        None => vec![0.0; spec.dim_state()],
        Some(x) if x.len() == spec.dim_state() => x.clone(),
        Some(x) => {
            return Err(LabError::Config(format!(
                "x0 has {} entries, the system has {} states",
                x.len(),
                spec.dim_state()
            )))
        }
    };
    let mut notes = Vec::new();
    let mut checks = Vec::new();
    let mut tables = Tables::default();

    // premises
    let (states, times) = premise_sample(spec, cfg);
    let enss = check_enss(spec, &states, &times).at("premise check")?;
    let radius_top = cfg.sample_radius.max(cfg.r_grid.max);
    let radii: Vec<f64> = (0..64).map(|i| radius_top * i as f64 / 63.0).collect();
    let envelopes = check_envelopes(spec, &states, &radii).at("premise check")?;
    let premises = Premises { enss, envelopes };
    let verified = premises.passed();
    if !verified {
        notes.push(format!(
            "premises unverified: {} violating (state, time) points, max residual {:e}, gamma excess {:e}, {} envelope violations; bound checks skipped",
            premises.enss.violating_points.len(),
            premises.enss.max_violation,
            premises.enss.gamma_excess,
            premises.envelopes.sandwich_violations
        ));
    }

    // one long trajectory and its loops
    let levels = levels_for(spec, cfg)?;
    let bounds = BoundSet::new(levels);
    let sim = SimConfig {
        t_end: cfg.horizon,
        dt: cfg.dt,
        seed: cfg.seed,
        x0: x0.clone(),
    };
    let traj = integrate(spec, &sim).at("trajectory")?;
    let record = extract_loops_series(traj.times(), traj.lyap(), levels.v0, levels.v1, cfg.crossing).at("loops")?;
    notes.push(format!(
        "{} complete loops in {} time units; grid crossings delay each crossing time by at most dt = {}",
        record.complete_loops, record.horizon, cfg.dt
    ));

    if verified {
        occupancy_checks(spec, cfg, &traj, &mut tables, &mut checks, &mut notes)?;
        cross_time_checks(cfg, &record, &levels, &mut tables, &mut checks, &mut notes)?;
        ensemble_checks(spec, cfg, &x0, &mut tables, &mut checks, &mut notes)?;
    }

    let verdict = if !verified {
        RunVerdict::PremisesUnverified
    } else if checks.iter().any(|c| c.status == Status::Flagged) {
        RunVerdict::Flagged
    } else {
        RunVerdict::Pass
    };
    let report = ExperimentReport {
        system: spec.name().to_string(),
        config: cfg.clone(),
        rng: RNG_ALGORITHM,
        version: env!("CARGO_PKG_VERSION"),
        premises,
        bounds,
        record,
        tables,
        checks,
        notes,
        verdict,
    };
    Ok((report, traj))
}

fn occupancy_checks(
    spec: &SystemSpec,
    cfg: &ExperimentConfig,
    traj: &Trajectory,
    tables: &mut Tables,
    checks: &mut Vec<CheckSummary>,
    notes: &mut Vec<String>,
) -> LabResult<()> {
    let edge = spec.alpha1_inv(spec.floor());
    if spec.gamma_max() > 0.0 && !(cfg.r_grid.min > edge) {
        return Err(LabError::Config(format!(
            "r_min = {} must exceed alpha1^-1(gamma_max / c) = {edge}",
            cfg.r_grid.min
        )));
    }
    let rs = cfg.r_grid.points();
    let d = empirical_time_average(traj, &rs, AverageOf::Norm).at("occupancy")?;
    let b = |r: f64| bound_b(r, spec.c(), spec.gamma_max(), |s| spec.alpha1(s));
    tables.occupancy = compare_with_lower_bound(&d, b).at("occupancy")?;
    checks.push(CheckSummary {
        name: "occupancy",
        status: status_of(&tables.occupancy),
        detail: format!(
            "{} of {} grid radii with D(r) < b(r)",
            flag_count(&tables.occupancy),
            tables.occupancy.len()
        ),
    });

    for &k in &cfg.k_list {
        let q = fractile_q(k, spec.c(), spec.gamma_max(), |v| spec.alpha1_inv(v)).at("fractiles")?;
        if !(q > 0.0) {
            notes.push(format!("fractile k = {k} has q_k = {q}; skipped"));
            continue;
        }
        let frac = time_average_series(traj.times(), traj.norms(), &[q]).at("fractiles")?.values[0];
        tables.fractiles.push(CheckRow {
            threshold: q,
            empirical: frac,
            bound: k,
            ci_low: frac,
            ci_high: frac,
            flag: frac < k,
        });
    }
    checks.push(CheckSummary {
        name: "fractiles",
        status: status_of(&tables.fractiles),
        detail: tables
            .fractiles
            .iter()
            .map(|r| format!("k = {}: q_k = {}, time fraction {}", r.bound, r.threshold, r.empirical))
            .collect::<Vec<_>>()
            .join("; "),
    });
    Ok(())
}

fn cross_time_checks(
    cfg: &ExperimentConfig,
    record: &LoopRecord,
    levels: &LevelPair,
    tables: &mut Tables,
    checks: &mut Vec<CheckSummary>,
    notes: &mut Vec<String>,
) -> LabResult<()> {
    let rep = verify_cross_time_bounds(record, levels, cfg.confidence).at("cross-time bounds")?;
    tables.up_cross = rep.up_rows.clone();
    tables.down_cross = rep.down_rows.clone();
    let status = Status::from_verdict(rep.verdict);
    if status == Status::Underpowered {
        notes.push(format!(
            "only {} complete loops (< {MIN_LOOPS}): cross-time bounds not tested",
            record.complete_loops
        ));
    }
    let mean = |m: Option<nss_core::loops::MeanCheck>| {
        m.map_or_else(
            || "n/a".to_string(),
            |m| format!("mean {} ± {} vs {} (n = {})", m.mean, m.half_width, m.bound, m.n),
        )
    };
    checks.push(CheckSummary {
        name: "up-cross",
        status: if rep.up_rows.iter().any(|r| r.flag) || rep.up_mean.is_some_and(|m| m.flag) {
            Status::Flagged
        } else if status == Status::Underpowered {
            status
        } else {
            Status::Pass
        },
        detail: format!(
            "{} of {} points below the survival bound; {}",
            flag_count(&rep.up_rows),
            rep.up_rows.len(),
            mean(rep.up_mean)
        ),
    });
    checks.push(CheckSummary {
        name: "down-cross",
        status: if rep.down_rows.iter().any(|r| r.flag) || rep.down_mean.is_some_and(|m| m.flag) {
            Status::Flagged
        } else if status == Status::Underpowered {
            status
        } else {
            Status::Pass
        },
        detail: format!(
            "{} of {} points above the survival bound; {}",
            flag_count(&rep.down_rows),
            rep.down_rows.len(),
            mean(rep.down_mean)
        ),
    });

    // pathwise coupling of the observed up-times with the dominated law
    let ups = record.bounded_up_times();
    let coupling = if record.complete_loops < MIN_LOOPS || ups.is_empty() {
        CheckSummary {
            name: "up-cross coupling",
            status: Status::Underpowered,
            detail: format!("{} up-times", ups.len()),
        }
    } else {
        let law = EmpiricalLaw::new(ups).at("coupling")?;
        match dominated_coupling_lower(ups, &Iid(law), &UpCrossLaw(*levels), cfg.seed) {
            Ok(_) => CheckSummary {
                name: "up-cross coupling",
                status: Status::Pass,
                detail: format!("{} up-times coupled, 0 violations", ups.len()),
            },
            Err(Error::CouplingViolation { index, x, z }) => CheckSummary {
                name: "up-cross coupling",
                status: Status::Flagged,
                detail: format!("violation at up-time {index}: x = {x} < z = {z}"),
            },
            Err(e) => return Err(e).at("coupling"),
        }
    };
    checks.push(coupling);
    Ok(())
}

fn ensemble_checks(
    spec: &SystemSpec,
    cfg: &ExperimentConfig,
    x0: &[f64],
    tables: &mut Tables,
    checks: &mut Vec<CheckSummary>,
    notes: &mut Vec<String>,
) -> LabResult<()> {
    if cfg.n_paths == 0 || cfg.ensemble_times.is_empty() {
        notes.push("n_paths = 0 or no ensemble times: ensemble checks skipped".into());
        for name in ["moment", "probability"] {
            checks.push(CheckSummary { name, status: Status::Skipped, detail: "no ensemble".into() });
        }
        return Ok(());
    }
    let t_end = *cfg.ensemble_times.last().expect("non-empty");
    let sim = SimConfig {
        t_end,
        dt: cfg.dt.min(t_end),
        seed: cfg.seed,
        x0: x0.to_vec(),
    };
    // stream 0 is the long trajectory; ensemble paths start at 1
    let snaps = parallel_snapshots(spec, &sim, cfg.n_paths, 1, &cfg.ensemble_times, thread_cap()?)?;

    let z = cfg.ensemble_z;
    let moment = verify_moment_bound(&snaps, spec, z).at("moment bound")?;
    tables.moment = moment
        .rows
        .iter()
        .map(|r| CheckRow {
            threshold: r.t,
            empirical: r.mean,
            bound: r.bound,
            ci_low: r.mean - z * r.std_error,
            ci_high: r.mean + z * r.std_error,
            flag: r.flag,
        })
        .collect();
    checks.push(CheckSummary {
        name: "moment",
        status: Status::from_verdict(moment.verdict),
        detail: format!("{} paths, {} of {} times flagged", moment.n_paths, flag_count(&tables.moment), tables.moment.len()),
    });

    let mut prob_status = Status::Pass;
    for &t in &cfg.ensemble_times {
        let rep = verify_probability_bound(&snaps, spec, cfg.probability_radius, t, z).at("probability bound")?;
        if rep.vacuous {
            notes.push(format!("probability floor at t = {t} is {} <= 0: vacuous", rep.floor));
        }
        match Status::from_verdict(rep.verdict) {
            Status::Flagged => prob_status = Status::Flagged,
            Status::Underpowered if prob_status == Status::Pass => prob_status = Status::Underpowered,
            _ => {}
        }
        tables.probability.push(CheckRow {
            threshold: t,
            empirical: rep.frequency,
            bound: rep.floor,
            ci_low: rep.ci_low,
            ci_high: rep.ci_high,
            flag: rep.verdict == Verdict::Flagged,
        });
    }
    checks.push(CheckSummary {
        name: "probability",
        status: prob_status,
        detail: format!(
            "P{{|x| < {}}} at {} times, {} flagged",
            cfg.probability_radius,
            tables.probability.len(),
            flag_count(&tables.probability)
        ),
    });
    Ok(())
}
