//! Experiment configuration: an INI-style file plus `section.key=value`
//! overrides. The grammar is documented in the README; every key has a
//! default, so an empty file reproduces the built-in example run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ini::{Ini, ParseOption};
use nss_core::loops::Crossing;

use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, PartialEq)]
pub enum SystemChoice {
    Example,
    Ou { theta: f64, sigma: f64 },
    /// Supplied through the library; cannot be built from a file.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum V0Policy {
    Explicit(f64),
    OptimalBeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl RGrid {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                let u = i as f64 / last;
                if i + 1 == self.count {
                    return self.max;
                }
                match self.spacing {
                    Spacing::Linear => self.min + u * (self.max - self.min),
                    Spacing::Log => (self.min.ln() + u * (self.max / self.min).ln()).exp(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemChoice,
    /// Initial state; `None` starts at the origin.
    pub x0: Option<Vec<f64>>,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub crossing: Crossing,
    pub v1: f64,
    pub v0_policy: V0Policy,
    pub r_grid: RGrid,
    pub k_list: Vec<f64>,
    pub n_paths: usize,
    pub ensemble_times: Vec<f64>,
    pub probability_radius: f64,
    /// Standard errors of allowance in the ensemble checks.
    pub ensemble_z: f64,
    pub confidence: f64,
    /// Half-width of the state box sampled by the premise checks.
    pub sample_radius: f64,
    pub sample_points: usize,
    pub output_dir: PathBuf,
    pub dump_trajectory: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemChoice::Example,
            x0: None,
            horizon: 500.0,
            dt: 1e-3,
            seed: 1,
            crossing: Crossing::Grid,
            v1: 2.0,
            v0_policy: V0Policy::OptimalBeta,
            r_grid: RGrid {
                min: 1.05,
                max: 10.0,
                count: 50,
                spacing: Spacing::Log,
            },
            k_list: vec![1.0 / 3.0, 0.5],
            n_paths: 10_000,
            ensemble_times: vec![1.0, 2.5, 5.0],
            probability_radius: 3.0,
            ensemble_z: 3.0,
            confidence: 0.99,
            sample_radius: 4.0,
            sample_points: 41,
            output_dir: PathBuf::from("nss-lab-out"),
            dump_trajectory: false,
        }
    }
}

fn bad(key: &str, value: &str, why: &str) -> LabError {
    LabError::Config(format!("{key} = {value:?}: {why}"))
}

/// Parses a real; `a/b` is accepted so fractions like `1/3` are exact.
fn parse_real(key: &str, value: &str) -> LabResult<f64> {
    let parsed = match value.split_once('/') {
        Some((a, b)) => a
            .trim()
            .parse::<f64>()
            .ok()
            .zip(b.trim().parse::<f64>().ok())
            .map(|(a, b)| a / b),
        None => value.parse::<f64>().ok(),
    };
    match parsed {
        Some(v) if v.is_finite() => Ok(v),
        _ => Err(bad(key, value, "expected a finite number")),
    }
}

fn parse_list(key: &str, value: &str) -> LabResult<Vec<f64>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_real(key, v.trim())).collect()
}

fn parse_bool(key: &str, value: &str) -> LabResult<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn parse_int<T: std::str::FromStr>(key: &str, value: &str) -> LabResult<T> {
    value
        .replace('_', "")
        .parse()
        .map_err(|_| bad(key, value, "expected a non-negative integer"))
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    /// Reads `path` and applies `overrides` (each `section.key=value`) in
    /// order.
    pub fn load(path: &Path, overrides: &[String]) -> LabResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_ini_str(&text)?;
        cfg.apply_overrides(overrides)?;
        Ok(cfg)
    }

    pub fn from_ini_str(text: &str) -> LabResult<Self> {
        let opt = ParseOption {
            enabled_quote: false,
            enabled_escape: false,
            ..ParseOption::default()
        };
        let ini = Ini::load_from_str_opt(text, opt)
            .map_err(|e| LabError::Config(format!("line {}: {}", e.line, e.msg)))?;
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        // theta and sigma need the system name, which may come later in the file
        let mut ou = (None, None);
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(LabError::Config(format!("key {key:?} outside of any section")));
                }
                continue;
            };
            for (key, value) in props.iter() {
                let full = format!("{section}.{key}");
                if !seen.insert(full.clone()) {
                    return Err(LabError::Config(format!("duplicate key {full}")));
                }
                match full.as_str() {
                    "system.theta" => ou.0 = Some(parse_real(&full, value)?),
                    "system.sigma" => ou.1 = Some(parse_real(&full, value)?),
                    _ => cfg.set(&full, value)?,
                }
            }
        }
        if let Some(theta) = ou.0 {
            cfg.set("system.theta", &theta.to_string())?;
        }
        if let Some(sigma) = ou.1 {
            cfg.set("system.sigma", &sigma.to_string())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, overrides: &[String]) -> LabResult<()> {
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| LabError::Config(format!("override {o:?} is not section.key=value")))?;
            self.set(key.trim(), value.trim())?;
        }
        self.validate()
    }

    /// Sets one `section.key`; unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> LabResult<()> {
        match key {
            "system.name" => {
                self.system = match value {
                    "example" => SystemChoice::Example,
                    "ou" => match self.system {
                        SystemChoice::Ou { .. } => self.system.clone(),
                        _ => SystemChoice::Ou { theta: 1.0, sigma: 1.0 },
                    },
                    "custom" => SystemChoice::Custom,
                    _ => return Err(bad(key, value, "expected example, ou or custom")),
                }
            }
            "system.theta" | "system.sigma" => {
                let v = parse_real(key, value)?;
                let SystemChoice::Ou { theta, sigma } = &mut self.system else {
                    return Err(bad(key, value, "only used by system.name = ou"));
                };
                if key == "system.theta" {
                    *theta = v;
                } else {
                    *sigma = v;
                }
            }
            "system.x0" => {
                self.x0 = if value == "origin" {
                    None
                } else {
                    Some(parse_list(key, value)?)
                }
            }
            "simulation.horizon" => self.horizon = parse_real(key, value)?,
            "simulation.dt" => self.dt = parse_real(key, value)?,
            "simulation.seed" => self.seed = parse_int(key, value)?,
            "simulation.crossing" => {
                self.crossing = match value {
                    "grid" => Crossing::Grid,
                    "interpolated" => Crossing::Interpolated,
                    _ => return Err(bad(key, value, "expected grid or interpolated")),
                }
            }
            "levels.v1" => self.v1 = parse_real(key, value)?,
            "levels.v0" => {
                self.v0_policy = if value == "optimal" {
                    V0Policy::OptimalBeta
                } else {
                    V0Policy::Explicit(parse_real(key, value)?)
                }
            }
            "occupancy.r_min" => self.r_grid.min = parse_real(key, value)?,
            "occupancy.r_max" => self.r_grid.max = parse_real(key, value)?,
            "occupancy.r_count" => self.r_grid.count = parse_int(key, value)?,
            "occupancy.r_spacing" => {
                self.r_grid.spacing = match value {
                    "linear" => Spacing::Linear,
                    "log" => Spacing::Log,
                    _ => return Err(bad(key, value, "expected linear or log")),
                }
            }
            "occupancy.k_list" => self.k_list = parse_list(key, value)?,
            "ensemble.n_paths" => self.n_paths = parse_int(key, value)?,
            "ensemble.times" => self.ensemble_times = parse_list(key, value)?,
            "ensemble.radius" => self.probability_radius = parse_real(key, value)?,
            "ensemble.z" => self.ensemble_z = parse_real(key, value)?,
            "checks.confidence" => self.confidence = parse_real(key, value)?,
            "checks.sample_radius" => self.sample_radius = parse_real(key, value)?,
            "checks.sample_points" => self.sample_points = parse_int(key, value)?,
            "output.dir" => self.output_dir = PathBuf::from(value),
            "output.trajectory" => self.dump_trajectory = parse_bool(key, value)?,
            _ => return Err(LabError::Config(format!("unknown key {key}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> LabResult<()> {
        let fail = |msg: String| Err(LabError::Config(msg));
        if let SystemChoice::Ou { theta, sigma } = self.system {
            if !(theta > 0.0) || !(sigma >= 0.0) {
                return fail(format!("ou needs theta > 0 and sigma >= 0, got {theta}, {sigma}"));
            }
        }
        if !(self.horizon > 0.0) || !(self.dt > 0.0) || self.dt > self.horizon {
            return fail(format!(
                "need 0 < dt <= horizon, got dt = {}, horizon = {}",
                self.dt, self.horizon
            ));
        }
        if let V0Policy::Explicit(v0) = self.v0_policy {
            if !(v0 < self.v1) {
                return fail(format!("need v0 < v1, got {v0} and {}", self.v1));
            }
        }
        let g = &self.r_grid;
        if g.count == 0 || !(g.min > 0.0) || !(g.min <= g.max) || (g.count == 1 && g.min != g.max) {
            return fail(format!(
                "r grid needs 0 < r_min <= r_max and r_count >= 1 (r_min = r_max when r_count = 1), got {}..{} x {}",
                g.min, g.max, g.count
            ));
        }
        if let Some(k) = self.k_list.iter().find(|k| !(**k > 0.0 && **k < 1.0)) {
            return fail(format!("fractile levels must lie in (0, 1), got {k}"));
        }
        if let Some(t) = self.ensemble_times.iter().find(|t| !(**t > 0.0)) {
            return fail(format!("ensemble times must be positive, got {t}"));
        }
        if self.ensemble_times.windows(2).any(|w| w[0] >= w[1]) {
            return fail("ensemble times must be strictly increasing".into());
        }
        if !(self.probability_radius > 0.0) || !(self.ensemble_z >= 0.0) {
            return fail("ensemble radius must be positive and z non-negative".into());
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return fail(format!("confidence must lie in (0, 1), got {}", self.confidence));
        }
        if !(self.sample_radius > 0.0) || self.sample_points < 2 {
            return fail("premise sample needs sample_radius > 0 and sample_points >= 2".into());
        }
        Ok(())
    }

    /// The configuration in file form; loading it back gives an equal value.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[system]");
        match &self.system {
            SystemChoice::Example => {
                let _ = writeln!(s, "name = example");
            }
            SystemChoice::Ou { theta, sigma } => {
                let _ = writeln!(s, "name = ou\ntheta = {theta}\nsigma = {sigma}");
            }
            SystemChoice::Custom => {
                let _ = writeln!(s, "name = custom");
            }
        }
        let x0 = self.x0.as_deref().map_or_else(|| "origin".to_string(), join);
        let _ = writeln!(s, "x0 = {x0}");
        let crossing = match self.crossing {
            Crossing::Grid => "grid",
            Crossing::Interpolated => "interpolated",
        };
        let _ = writeln!(
            s,
            "\n[simulation]\nhorizon = {}\ndt = {}\nseed = {}\ncrossing = {crossing}",
            self.horizon, self.dt, self.seed
        );
        let v0 = match self.v0_policy {
            V0Policy::OptimalBeta => "optimal".to_string(),
            V0Policy::Explicit(v) => v.to_string(),
        };
        let _ = writeln!(s, "\n[levels]\nv1 = {}\nv0 = {v0}", self.v1);
        let spacing = match self.r_grid.spacing {
            Spacing::Linear => "linear",
            Spacing::Log => "log",
        };
        let _ = writeln!(
            s,
            "\n[occupancy]\nr_min = {}\nr_max = {}\nr_count = {}\nr_spacing = {spacing}\nk_list = {}",
            self.r_grid.min,
            self.r_grid.max,
            self.r_grid.count,
            join(&self.k_list)
        );
        let _ = writeln!(
            s,
            "\n[ensemble]\nn_paths = {}\ntimes = {}\nradius = {}\nz = {}",
            self.n_paths,
            join(&self.ensemble_times),
            self.probability_radius,
            self.ensemble_z
        );
        let _ = writeln!(
            s,
            "\n[checks]\nconfidence = {}\nsample_radius = {}\nsample_points = {}",
            self.confidence, self.sample_radius, self.sample_points
        );
        let _ = writeln!(
            s,
            "\n[output]\ndir = {}\ntrajectory = {}",
            self.output_dir.display(),
            self.dump_trajectory
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_ini_str("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.system = SystemChoice::Ou { theta: 0.7, sigma: 0.3 };
        cfg.x0 = Some(vec![0.25]);
        cfg.v0_policy = V0Policy::Explicit(0.1 + 0.2);
        cfg.k_list = vec![1.0 / 3.0, 0.9];
        cfg.crossing = Crossing::Interpolated;
        cfg.n_paths = 0;
        cfg.r_grid.spacing = Spacing::Linear;
        let back = ExperimentConfig::from_ini_str(&cfg.to_ini()).unwrap();
        assert_eq!(back, cfg);
        let default = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_ini_str(&default.to_ini()).unwrap(), default);
    }

    #[test]
    fn file_values_and_overrides() {
        let text = "# comment\n[simulation]\nhorizon = 20\nseed = 1_000\n\n[occupancy]\nk_list = 1/3, 1/2\n";
        let mut cfg = ExperimentConfig::from_ini_str(text).unwrap();
        assert_eq!(cfg.horizon, 20.0);
        assert_eq!(cfg.seed, 1000);
        assert_eq!(cfg.k_list, vec![1.0 / 3.0, 0.5]);
        cfg.apply_overrides(&["levels.v0=0.9".into(), "system.name=ou".into(), "system.sigma = 2".into()])
            .unwrap();
        assert_eq!(cfg.v0_policy, V0Policy::Explicit(0.9));
        assert_eq!(cfg.system, SystemChoice::Ou { theta: 1.0, sigma: 2.0 });
    }

    #[test]
    fn ou_parameters_may_precede_the_name() {
        let cfg = ExperimentConfig::from_ini_str("[system]\ntheta = 3\nname = ou\n").unwrap();
        assert_eq!(cfg.system, SystemChoice::Ou { theta: 3.0, sigma: 1.0 });
    }

    #[test]
    fn malformed_input_is_rejected() {
        for text in [
            "[simulation]\nhorizon = soon\n",
            "[simulation]\nhorizn = 3\n",
            "horizon = 3\n",
            "[simulation]\ndt = 1\ndt = 2\n",
            "[levels]\nv1 = 1\nv0 = 2\n",
            "[occupancy]\nk_list = 0, 0.5\n",
            "[simulation]\ndt = 1000\n",
            "[system]\ntheta = 2\n",
            "[ensemble]\ntimes = 2, 1\n",
            "[occupancy]\nr_min = 0\n",
        ] {
            assert!(ExperimentConfig::from_ini_str(text).is_err(), "{text:?} was accepted");
        }
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.apply_overrides(&["levels.v1".into()]).is_err());
    }

    #[test]
    fn grids() {
        let g = RGrid { min: 1.0, max: 100.0, count: 3, spacing: Spacing::Log };
        let p = g.points();
        assert_eq!(p[0], 1.0);
        assert!((p[1] - 10.0).abs() < 1e-12);
        assert_eq!(p[2], 100.0);
        let lin = RGrid { min: 0.5, max: 1.5, count: 5, spacing: Spacing::Linear };
        assert_eq!(lin.points(), vec![0.5, 0.75, 1.0, 1.25, 1.5]);
        assert_eq!(RGrid { min: 2.0, max: 2.0, count: 1, spacing: Spacing::Log }.points(), vec![2.0]);
    }
}
