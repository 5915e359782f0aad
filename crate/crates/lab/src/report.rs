//! CSV tables and `summary.txt`. Numbers are written with 17 significant
//! digits, so files round-trip exactly and are byte-identical across runs.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nss_core::loops::{CheckRow, Phase};
use nss_core::sim::Trajectory;

use crate::error::{LabError, LabResult};
use crate::pipeline::ExperimentReport;

pub const CHECK_HEADER: &str = "threshold,empirical,bound,ci_low,ci_high,flag";
pub const OCCUPANCY_HEADER: &str = "r,D_empirical,b_bound";

/// Table files written by every run, in a fixed order.
pub const CHECK_FILES: [&str; 5] = ["up_cross.csv", "down_cross.csv", "fractiles.csv", "moment.csv", "probability.csv"];

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LabError + '_ {
    move |source| LabError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> LabResult<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    fill(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn write_check_rows(w: &mut dyn Write, rows: &[CheckRow]) -> std::io::Result<()> {
    writeln!(w, "{CHECK_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            num(r.threshold),
            num(r.empirical),
            num(r.bound),
            num(r.ci_low),
            num(r.ci_high),
            u8::from(r.flag)
        )?;
    }
    Ok(())
}

pub fn write_occupancy(w: &mut dyn Write, rows: &[CheckRow]) -> std::io::Result<()> {
    writeln!(w, "{OCCUPANCY_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{}", num(r.threshold), num(r.empirical), num(r.bound))?;
    }
    Ok(())
}

/// `t,x1,...,xN,V,norm`, one row per grid point.
pub fn write_trajectory(w: &mut dyn Write, traj: &Trajectory) -> std::io::Result<()> {
    let mut header = String::from("t");
    for i in 1..=traj.dim() {
        let _ = write!(header, ",x{i}");
    }
    writeln!(w, "{header},V,norm")?;
    let mut line = String::new();
    for (k, x) in traj.states().enumerate() {
        line.clear();
        line.push_str(&num(traj.times()[k]));
        for v in x {
            line.push(',');
            line.push_str(&num(*v));
        }
        let _ = write!(line, ",{},{}", num(traj.lyap()[k]), num(traj.norms()[k]));
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn write_loops(w: &mut dyn Write, report: &ExperimentReport) -> std::io::Result<()> {
    writeln!(w, "loop,up_time,down_time")?;
    let rec = &report.record;
    for (i, up) in rec.up_times.iter().enumerate() {
        let down = rec.down_times.get(i).map_or_else(String::new, |d| num(*d));
        writeln!(w, "{i},{},{down}", num(*up))?;
    }
    Ok(())
}

pub fn summary_text(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let b = &report.bounds;
    let p = &report.premises;
    let rec = &report.record;
    let _ = writeln!(s, "nss-lab {}", report.version);
    let _ = writeln!(s, "system: {}", report.system);
    let _ = writeln!(s, "rng: {}", report.rng);
    let _ = writeln!(s, "\n# configuration (load with `nss-lab run --config`)");
    s.push_str(&report.config.to_ini());
    let _ = writeln!(s, "\n# premises");
    let _ = writeln!(
        s,
        "dissipation: {} ({} points, max residual {:e}, tolerance {:e}, {} violations, gamma excess {:e})",
        if p.enss.passed() { "pass" } else { "FAILED" },
        p.enss.points_checked,
        p.enss.max_violation,
        p.enss.tolerance,
        p.enss.violating_points.len(),
        p.enss.gamma_excess
    );
    let _ = writeln!(
        s,
        "envelopes: {} ({} states, {} sandwich violations, inverse error {:e}, class K {})",
        if p.envelopes.passed() { "pass" } else { "FAILED" },
        p.envelopes.points_checked,
        p.envelopes.sandwich_violations,
        p.envelopes.inverse_max_error,
        p.envelopes.class_k
    );
    let _ = writeln!(s, "\n# levels");
    let _ = writeln!(s, "v0 = {}\nv1 = {}\nbeta = {}\nbeta_star = {}", b.levels.v0, b.levels.v1, b.beta, b.beta_star);
    let _ = writeln!(s, "t_uc = {}\nt_dc = {}\nratio_bound = {}\noptimal_ratio = {}", b.t_uc, b.t_dc, b.ratio_bound, b.optimal_ratio());
    let _ = writeln!(s, "\n# loops");
    let tail = match rec.tail_state {
        Phase::Up => "up",
        Phase::Down => "down",
    };
    let _ = writeln!(
        s,
        "complete_loops = {}\nhorizon = {}\ntail_phase = {tail}\ntail_time = {}",
        rec.complete_loops, rec.horizon, rec.tail_time
    );
    let _ = writeln!(s, "\n# checks");
    for c in &report.checks {
        let _ = writeln!(s, "{}: {} ({})", c.name, c.status.label(), c.detail);
    }
    if !report.notes.is_empty() {
        let _ = writeln!(s, "\n# notes");
        for n in &report.notes {
            let _ = writeln!(s, "- {n}");
        }
    }
    let verdict = match report.verdict {
        crate::pipeline::RunVerdict::Pass => "pass",
        crate::pipeline::RunVerdict::PremisesUnverified => "premises unverified",
        crate::pipeline::RunVerdict::Flagged => "flagged",
    };
    let _ = writeln!(s, "\nverdict: {verdict}\nexit_code: {}", report.exit_code());
    s
}

/// Writes every table and `summary.txt` into the configured output
/// directory, plus the trajectory when one is given.
pub fn write_all(report: &ExperimentReport, traj: Option<&Trajectory>) -> LabResult<()> {
    let dir = &report.config.output_dir;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let t = &report.tables;
    write_file(&dir.join("occupancy.csv"), |w| write_occupancy(w, &t.occupancy))?;
    let tables = [&t.up_cross, &t.down_cross, &t.fractiles, &t.moment, &t.probability];
    for (name, rows) in CHECK_FILES.iter().zip(tables) {
        write_file(&dir.join(name), |w| write_check_rows(w, rows))?;
    }
    write_file(&dir.join("loops.csv"), |w| write_loops(w, report))?;
    if let Some(traj) = traj {
        write_file(&dir.join("trajectory.csv"), |w| write_trajectory(w, traj))?;
    }
    let summary = summary_text(report);
    write_file(&dir.join("summary.txt"), |w| w.write_all(summary.as_bytes()))
}
