//! Loop structure of `V(x(t))` on simulated data.
//!
//! Starting from `τ_0 = 0`, a loop rises until `V >= v1` (time `τ_{2i+1}`)
//! and falls back until `V <= v0` (time `τ_{2i+2}`). Up-cross times
//! `τ_{2i+1} - τ_{2i}` are stochastically bounded below and down-cross times
//! `τ_{2i+2} - τ_{2i+1}` above by the laws in [`crate::bounds`]. This module
//! extracts the crossings, builds empirical survival functions and time
//! averages, and compares them against the closed-form bounds with one-sided
//! confidence limits.
//!
//! Crossings are detected on the sampling grid: `τ_{2i+1}` is the first grid
//! time with `V >= v1` and `τ_{2i+2}` the first with `V <= v0`. Grid detection
//! can only delay a crossing, by at most one step.

use alloc::format;
use alloc::vec::Vec;

use crate::bounds::{
    down_cross_survival_bound, expected_down_cross, expected_up_cross, up_cross_survival_bound,
    LevelPair,
};
use crate::error::{Error, Result};
use crate::model::SystemSpec;
use crate::sim::{Snapshots, Trajectory};
use crate::stats::{normal_quantile, student_t_quantile, wilson_interval, Moments};

/// Minimum number of complete loops before cross-time bounds are tested.
pub const MIN_LOOPS: usize = 30;
/// Minimum ensemble size for the moment and probability checks.
pub const MIN_PATHS: usize = 1000;
/// Default one-sided confidence of the cross-time checks.
pub const DEFAULT_CONFIDENCE: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Waiting for `V >= v1`.
    Up,
    /// Waiting for `V <= v0`.
    Down,
}

/// How crossing times are placed between grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Crossing {
    /// The first grid time at which the level is reached.
    #[default]
    Grid,
    /// Linear interpolation of `V` between the two bracketing grid points.
    Interpolated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopRecord {
    /// `τ_0, τ_1, ...`; accumulated from the durations, so the durations
    /// rebuild them exactly.
    pub taus: Vec<f64>,
    /// Grid index at which each crossing was detected.
    pub indices: Vec<usize>,
    pub up_times: Vec<f64>,
    pub down_times: Vec<f64>,
    pub complete_loops: usize,
    /// Phase of the unfinished segment at the end of the horizon.
    pub tail_state: Phase,
    /// Time between the last crossing and the end of the horizon.
    pub tail_time: f64,
    pub horizon: f64,
    pub v0: f64,
    pub v1: f64,
}

impl LoopRecord {
    /// Up-cross durations covered by the survival bound (the first loop,
    /// which starts from the initial condition, is dropped).
    pub fn bounded_up_times(&self) -> &[f64] {
        self.up_times.get(1..).unwrap_or(&[])
    }

    /// Total time spent in up phases, including an unfinished tail.
    pub fn up_phase_time(&self) -> f64 {
        let tail = if self.tail_state == Phase::Up {
            self.tail_time
        } else {
            0.0
        };
        self.up_times.iter().sum::<f64>() + tail
    }

    /// Rebuilds `taus` by interleaving up and down durations from `τ_0`.
    pub fn rebuild_taus(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.taus.len());
        let mut t = self.taus[0];
        out.push(t);
        for i in 0..self.up_times.len() {
            t += self.up_times[i];
            out.push(t);
            if let Some(d) = self.down_times.get(i) {
                t += d;
                out.push(t);
            }
        }
        out
    }
}

fn check_levels(v0: f64, v1: f64) -> Result<()> {
    if !(v0 < v1) || !v0.is_finite() || !v1.is_finite() {
        return Err(Error::InvalidLevels(format!("need v0 < v1, got {v0} and {v1}")));
    }
    Ok(())
}

/// Extracts loops from a trajectory with grid crossing semantics.
pub fn extract_loops(traj: &Trajectory, v0: f64, v1: f64) -> Result<LoopRecord> {
    extract_loops_series(traj.times(), traj.lyap(), v0, v1, Crossing::Grid)
}

/// Extracts loops from a time grid and the matching Lyapunov series.
///
/// If `V(x_0) >= v1` the first up-cross has length zero and the run starts in
/// the down phase.
pub fn extract_loops_series(
    times: &[f64],
    lyap: &[f64],
    v0: f64,
    v1: f64,
    crossing: Crossing,
) -> Result<LoopRecord> {
    check_levels(v0, v1)?;
    if times.is_empty() || times.len() != lyap.len() {
        return Err(Error::Dimension(format!(
            "{} times and {} Lyapunov values",
            times.len(),
            lyap.len()
        )));
    }

    let crossing_time = |k: usize, level: f64| -> f64 {
        if crossing == Crossing::Interpolated && k > 0 {
            let (a, b) = (lyap[k - 1], lyap[k]);
            if a != b {
                let frac = ((level - a) / (b - a)).clamp(0.0, 1.0);
                return times[k - 1] + frac * (times[k] - times[k - 1]);
            }
        }
        times[k]
    };

    let start = times[0];
    let mut taus = alloc::vec![start];
    let mut indices = alloc::vec![0];
    let mut up_times = Vec::new();
    let mut down_times = Vec::new();
    let mut phase = Phase::Up;
    let mut last_grid_tau = start;
    let mut acc = start;

    for (k, &v) in lyap.iter().enumerate() {
        let hit = match phase {
            Phase::Up => v >= v1,
            Phase::Down => v <= v0,
        };
        if !hit {
            continue;
        }
        let level = if phase == Phase::Up { v1 } else { v0 };
        let t = crossing_time(k, level).max(last_grid_tau);
        let d = t - last_grid_tau;
        last_grid_tau = t;
        acc += d;
        taus.push(acc);
        indices.push(k);
        match phase {
            Phase::Up => {
                up_times.push(d);
                phase = Phase::Down;
            }
            Phase::Down => {
                down_times.push(d);
                phase = Phase::Up;
            }
        }
    }

    let end = times[times.len() - 1];
    Ok(LoopRecord {
        complete_loops: down_times.len(),
        taus,
        indices,
        up_times,
        down_times,
        tail_state: phase,
        tail_time: end - last_grid_tau,
        horizon: end - start,
        v0,
        v1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionKind {
    /// `s -> fraction of samples > s`.
    Survival,
    /// `r -> fraction of time with the observed quantity < r`.
    TimeAverage,
}

/// Step-function estimate evaluated at `thresholds`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    pub kind: DistributionKind,
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
    /// Sample count (survival) or total time (time average).
    pub n_samples: f64,
}

impl EmpiricalDistribution {
    /// Value of the step function at `s`.
    ///
    /// Survival functions are right-continuous and equal 1 before the first
    /// sample; time averages are read off the largest threshold `<= s`.
    pub fn eval(&self, s: f64) -> f64 {
        let i = self.thresholds.partition_point(|&t| t <= s);
        if i == 0 {
            match self.kind {
                DistributionKind::Survival => 1.0,
                DistributionKind::TimeAverage => 0.0,
            }
        } else {
            self.values[i - 1]
        }
    }
}

/// Right-continuous empirical survival function, evaluated at the distinct
/// sample values.
pub fn empirical_survival(samples: &[f64]) -> Result<EmpiricalDistribution> {
    if samples.is_empty() {
        return Err(Error::Empty("empirical_survival"));
    }
    if samples.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain {
            what: "empirical_survival sample",
            value: f64::NAN,
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut thresholds = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    while i < n {
        let s = sorted[i];
        let mut j = i;
        while j < n && sorted[j] == s {
            j += 1;
        }
        thresholds.push(s);
        values.push((n - j) as f64 / n as f64);
        i = j;
    }
    Ok(EmpiricalDistribution {
        kind: DistributionKind::Survival,
        thresholds,
        values,
        n_samples: n as f64,
    })
}

/// Observed quantity of a time average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AverageOf {
    Norm,
    Lyapunov,
}

/// Fraction of the horizon during which `‖x‖ < r` (or `V < r`).
///
/// Each grid value holds until the next grid time, so the last step counts
/// with its actual length and the final sample carries no weight.
pub fn empirical_time_average(
    traj: &Trajectory,
    thresholds: &[f64],
    mode: AverageOf,
) -> Result<EmpiricalDistribution> {
    let values = match mode {
        AverageOf::Norm => traj.norms(),
        AverageOf::Lyapunov => traj.lyap(),
    };
    time_average_series(traj.times(), values, thresholds)
}

/// [`empirical_time_average`] on raw series.
pub fn time_average_series(times: &[f64], values: &[f64], thresholds: &[f64]) -> Result<EmpiricalDistribution> {
    if times.len() < 2 || times.len() != values.len() {
        return Err(Error::Dimension(format!(
            "need at least two matching samples, got {} times and {} values",
            times.len(),
            values.len()
        )));
    }
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) || thresholds.iter().any(|t| t.is_nan()) {
        return Err(Error::Config("thresholds must be sorted ascending".into()));
    }
    let mut weighted: Vec<(f64, f64)> = times
        .windows(2)
        .zip(values)
        .map(|(w, &v)| (v, w[1] - w[0]))
        .collect();
    weighted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut prefix = Vec::with_capacity(weighted.len() + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for &(_, w) in &weighted {
        acc += w;
        prefix.push(acc);
    }
    let total = times[times.len() - 1] - times[0];
    let out = thresholds
        .iter()
        .map(|&r| {
            let below = weighted.partition_point(|&(v, _)| v < r);
            (prefix[below] / total).min(1.0)
        })
        .collect();
    Ok(EmpiricalDistribution {
        kind: DistributionKind::TimeAverage,
        thresholds: thresholds.to_vec(),
        values: out,
        n_samples: total,
    })
}

/// One row of a pointwise comparison; serialised as
/// `threshold,empirical,bound,ci_low,ci_high,flag`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckRow {
    pub threshold: f64,
    pub empirical: f64,
    pub bound: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub flag: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Flagged,
    /// Too few samples to test; not a failure.
    Underpowered,
}

/// Sample mean of durations against its theoretical bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCheck {
    pub n: usize,
    pub mean: f64,
    pub std_error: f64,
    /// Half-width of the one-sided t interval.
    pub half_width: f64,
    pub bound: f64,
    pub flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossTimeReport {
    pub verdict: Verdict,
    pub confidence: f64,
    pub complete_loops: usize,
    /// Empirical `P{up > s}` must not fall below the bound.
    pub up_rows: Vec<CheckRow>,
    /// Empirical `P{down >= s}` must not exceed the bound.
    pub down_rows: Vec<CheckRow>,
    pub up_mean: Option<MeanCheck>,
    pub down_mean: Option<MeanCheck>,
}

impl CrossTimeReport {
    pub fn flagged_points(&self) -> usize {
        self.up_rows.iter().chain(&self.down_rows).filter(|r| r.flag).count()
    }
}

fn check_confidence(confidence: f64) -> Result<()> {
    if confidence > 0.0 && confidence < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "confidence level",
            value: confidence,
        })
    }
}

fn distinct_sorted(samples: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// Pointwise check that `P{X > s}` stays above `bound(s)` at every sample
/// value, using the one-sided upper Wilson limit.
pub fn survival_lower_check(samples: &[f64], z: f64, bound: impl Fn(f64) -> f64) -> Vec<CheckRow> {
    let n = samples.len();
    distinct_sorted(samples)
        .into_iter()
        .map(|s| {
            let above = samples.iter().filter(|&&x| x > s).count();
            let (lo, hi) = wilson_interval(above, n, z);
            let b = bound(s);
            CheckRow {
                threshold: s,
                empirical: above as f64 / n as f64,
                bound: b,
                ci_low: lo,
                ci_high: hi,
                flag: hi < b,
            }
        })
        .collect()
}

/// Pointwise check that `P{X >= s}` stays below `bound(s)` at every sample
/// value, using the one-sided lower Wilson limit.
pub fn survival_upper_check(samples: &[f64], z: f64, bound: impl Fn(f64) -> f64) -> Vec<CheckRow> {
    let n = samples.len();
    distinct_sorted(samples)
        .into_iter()
        .map(|s| {
            let at_least = samples.iter().filter(|&&x| x >= s).count();
            let (lo, hi) = wilson_interval(at_least, n, z);
            let b = bound(s);
            CheckRow {
                threshold: s,
                empirical: at_least as f64 / n as f64,
                bound: b,
                ci_low: lo,
                ci_high: hi,
                flag: lo > b,
            }
        })
        .collect()
}

fn mean_check(samples: &[f64], confidence: f64, bound: f64, lower: bool) -> Result<Option<MeanCheck>> {
    if samples.len() < 2 {
        return Ok(None);
    }
    let m: Moments = samples.iter().copied().collect();
    let t = student_t_quantile(confidence, (samples.len() - 1) as f64)?;
    let half_width = t * m.std_error();
    let flag = if lower {
        m.mean() + half_width < bound
    } else {
        m.mean() - half_width > bound
    };
    Ok(Some(MeanCheck {
        n: samples.len(),
        mean: m.mean(),
        std_error: m.std_error(),
        half_width,
        bound,
        flag,
    }))
}

/// Compares the crossing statistics of a loop record with the survival and
/// mean bounds for `levels`.
///
/// Up-cross survival and mean are tested from below (first loop excluded),
/// down-cross survival and mean from above. With fewer than [`MIN_LOOPS`]
/// complete loops the report is [`Verdict::Underpowered`].
pub fn verify_cross_time_bounds(
    record: &LoopRecord,
    levels: &LevelPair,
    confidence: f64,
) -> Result<CrossTimeReport> {
    check_confidence(confidence)?;
    if record.v0 != levels.v0 || record.v1 != levels.v1 {
        return Err(Error::InvalidLevels(format!(
            "record was extracted at ({}, {}), levels are ({}, {})",
            record.v0, record.v1, levels.v0, levels.v1
        )));
    }
    if record.complete_loops < MIN_LOOPS {
        return Ok(CrossTimeReport {
            verdict: Verdict::Underpowered,
            confidence,
            complete_loops: record.complete_loops,
            up_rows: Vec::new(),
            down_rows: Vec::new(),
            up_mean: None,
            down_mean: None,
        });
    }
    let z = normal_quantile(confidence)?;
    let ups = record.bounded_up_times();
    let downs = &record.down_times;
    let up_rows = survival_lower_check(ups, z, |s| up_cross_survival_bound(s, levels));
    let down_rows = survival_upper_check(downs, z, |s| down_cross_survival_bound(s, levels));
    let up_mean = mean_check(ups, confidence, expected_up_cross(levels), true)?;
    let down_mean = mean_check(downs, confidence, expected_down_cross(levels), false)?;

    let flagged = up_rows.iter().chain(&down_rows).any(|r| r.flag)
        || up_mean.is_some_and(|m| m.flag)
        || down_mean.is_some_and(|m| m.flag);
    Ok(CrossTimeReport {
        verdict: if flagged { Verdict::Flagged } else { Verdict::Pass },
        confidence,
        complete_loops: record.complete_loops,
        up_rows,
        down_rows,
        up_mean,
        down_mean,
    })
}

/// `E V(x(t)) <= e^{-ct} V(x0) + (1 - e^{-ct}) gamma_max / c`.
pub fn moment_envelope(t: f64, v_x0: f64, c: f64, floor: f64) -> f64 {
    let decay = libm::exp(-c * t);
    decay * v_x0 - libm::expm1(-c * t) * floor
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow {
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
    pub bound: f64,
    /// `bound + z·SE - mean`; negative means flagged.
    pub margin: f64,
    pub flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub verdict: Verdict,
    pub n_paths: usize,
    pub rows: Vec<MomentRow>,
}

/// Ensemble mean of `V(x(t))` against the exponential moment envelope, with
/// `z` standard errors of allowance.
pub fn verify_moment_bound(paths: &Snapshots, spec: &SystemSpec, z: f64) -> Result<MomentReport> {
    let n_paths = paths.n_paths();
    if n_paths < MIN_PATHS {
        return Ok(MomentReport {
            verdict: Verdict::Underpowered,
            n_paths,
            rows: Vec::new(),
        });
    }
    let v_x0 = spec.v(&paths.x0);
    let rows: Vec<MomentRow> = paths
        .times
        .iter()
        .zip(&paths.states)
        .map(|(&t, states)| {
            let m: Moments = states.iter().map(|x| spec.v(x)).collect();
            let bound = moment_envelope(t, v_x0, spec.c(), spec.floor());
            let margin = bound + z * m.std_error() - m.mean();
            MomentRow {
                t,
                mean: m.mean(),
                std_error: m.std_error(),
                bound,
                margin,
                flag: !(margin >= 0.0),
            }
        })
        .collect();
    let verdict = if rows.iter().any(|r| r.flag) {
        Verdict::Flagged
    } else {
        Verdict::Pass
    };
    Ok(MomentReport {
        verdict,
        n_paths,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityReport {
    pub verdict: Verdict,
    pub t: f64,
    pub r: f64,
    pub n_paths: usize,
    pub frequency: f64,
    pub floor: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// The floor is `<= 0`, so the check holds trivially.
    pub vacuous: bool,
}

/// Frequency of `‖x(t)‖ < r` against
/// `1 - (e^{-ct}(V(x0) - γ/c) + γ/c) / α1(r)`, flagged when the upper
/// Wilson limit at critical value `z` is below the floor.
pub fn verify_probability_bound(
    paths: &Snapshots,
    spec: &SystemSpec,
    r: f64,
    t: f64,
    z: f64,
) -> Result<ProbabilityReport> {
    if !(r > 0.0) {
        return Err(Error::Domain {
            what: "probability bound radius",
            value: r,
        });
    }
    let slot = paths
        .times
        .iter()
        .position(|&s| s == t)
        .ok_or_else(|| Error::Config(format!("no snapshot at t = {t}")))?;
    let states = &paths.states[slot];
    let n_paths = states.len();
    let a1 = spec.alpha1(r);
    let envelope = moment_envelope(t, spec.v(&paths.x0), spec.c(), spec.floor());
    let floor = if a1.is_infinite() { 1.0 } else { 1.0 - envelope / a1 };
    let inside = states
        .iter()
        .filter(|x| libm::sqrt(x.iter().map(|v| v * v).sum::<f64>()) < r)
        .count();
    let (ci_low, ci_high) = wilson_interval(inside, n_paths, z);
    let vacuous = floor <= 0.0;
    let verdict = if n_paths < MIN_PATHS {
        Verdict::Underpowered
    } else if !vacuous && ci_high < floor {
        Verdict::Flagged
    } else {
        Verdict::Pass
    };
    Ok(ProbabilityReport {
        verdict,
        t,
        r,
        n_paths,
        frequency: inside as f64 / n_paths.max(1) as f64,
        floor,
        ci_low,
        ci_high,
        vacuous,
    })
}

/// Compares an empirical time-average distribution with a lower bound
/// function at its thresholds. No confidence band: a single trajectory gives
/// one finite-horizon estimate.
pub fn compare_with_lower_bound(
    dist: &EmpiricalDistribution,
    bound: impl Fn(f64) -> Result<f64>,
) -> Result<Vec<CheckRow>> {
    dist.thresholds
        .iter()
        .zip(&dist.values)
        .map(|(&r, &d)| {
            let b = bound(r)?;
            Ok(CheckRow {
                threshold: r,
                empirical: d,
                bound: b,
                ci_low: d,
                ci_high: d,
                flag: d < b,
            })
        })
        .collect()
}
