//! Seeded Euler–Maruyama integration.
//!
//! ```text
//! x_{k+1} = x_k + f(x_k) Δt_k + h(x_k) Σ(t_k) ΔW_k,    ΔW_k ~ N(0, Δt_k I_m)
//! ```
//!
//! Every path draws from its own ChaCha8 stream: the generator is seeded
//! from the 64-bit run seed and the path index selects the stream, so path
//! `i` is identical no matter which thread computes it or in which order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::SystemSpec;

/// Identifier of the random number pipeline, recorded in run metadata.
pub const RNG_ALGORITHM: &str =
    "chacha8(seed_from_u64(seed), stream = path index) + standard-normal ziggurat (rand_distr 0.5)";

/// Default time step.
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub x0: Vec<f64>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end >= self.dt) || !self.t_end.is_finite() {
            return Err(Error::Config(format!(
                "need 0 < dt <= t_end, got dt = {}, t_end = {}",
                self.dt, self.t_end
            )));
        }
        if self.t_end / self.dt > (usize::MAX / 2) as f64 {
            return Err(Error::Config("too many steps".into()));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("initial state must be finite".into()));
        }
        Ok(())
    }

    /// Number of steps `ceil(t_end / dt)`, ignoring a last step shorter than
    /// rounding noise.
    pub fn steps(&self) -> usize {
        let ratio = self.t_end / self.dt;
        let nearest = libm::round(ratio);
        if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            libm::ceil(ratio) as usize
        }
    }

    /// Grid time of point `k`; the last point sits exactly at `t_end`.
    pub fn time_at(&self, k: usize) -> f64 {
        if k >= self.steps() {
            self.t_end
        } else {
            k as f64 * self.dt
        }
    }

    /// Grid index of `t`, if `t` is a grid time.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        if t == self.t_end {
            return Some(self.steps());
        }
        let k = libm::round(t / self.dt);
        if k < 0.0 || k as usize > self.steps() {
            return None;
        }
        let k = k as usize;
        ((self.time_at(k) - t).abs() <= 1e-9 * t.abs().max(1.0)).then_some(k)
    }
}

/// Uniformly sampled path with its Lyapunov and norm series.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    lyap: Vec<f64>,
    norms: Vec<f64>,
}

impl Trajectory {
    /// Assembles a trajectory from raw series; `states` is flat, `dim` values
    /// per grid point.
    pub fn from_parts(
        dim: usize,
        times: Vec<f64>,
        states: Vec<f64>,
        lyap: Vec<f64>,
        norms: Vec<f64>,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(Error::Empty("Trajectory::from_parts"));
        }
        if lyap.len() != n || norms.len() != n || states.len() != n * dim {
            return Err(Error::Dimension(format!(
                "series lengths differ: {} times, {} lyap, {} norms, {} state values (dim {dim})",
                n,
                lyap.len(),
                norms.len(),
                states.len()
            )));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("times must be strictly increasing".into()));
        }
        Ok(Self {
            dim,
            times,
            states,
            lyap,
            norms,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn lyap(&self) -> &[f64] {
        &self.lyap
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        // chunks_exact panics on 0; a dimensionless series has no states
        self.states.chunks_exact(self.dim.max(1))
    }

    /// Horizon length `t_last - t_first`.
    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }
}

/// Standard normal draws for one path.
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, path: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        Self { rng }
    }

    pub fn next_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

fn euclid(x: &[f64]) -> f64 {
    libm::sqrt(x.iter().map(|v| v * v).sum::<f64>())
}

/// Runs one path and hands every grid point `(k, t_k, x_k)` to `observe`.
pub fn simulate(
    spec: &SystemSpec,
    cfg: &SimConfig,
    path: u64,
    mut observe: impl FnMut(usize, f64, &[f64]),
) -> Result<()> {
    cfg.validate()?;
    let n = spec.dim_state();
    let m = spec.dim_noise();
    if cfg.x0.len() != n {
        return Err(Error::Dimension(format!(
            "x0 has length {}, system dimension is {n}",
            cfg.x0.len()
        )));
    }
    let steps = cfg.steps();
    let mut noise = NoiseStream::new(cfg.seed, path);
    let mut x = cfg.x0.clone();
    let mut f = vec![0.0; n];
    let mut h = vec![0.0; n * m];
    let mut sigma = vec![0.0; m * m];
    let mut dw = vec![0.0; m];
    let mut sdw = vec![0.0; m];

    observe(0, 0.0, &x);
    for k in 0..steps {
        let t = cfg.time_at(k);
        let step = cfg.time_at(k + 1) - t;
        let sqrt_step = libm::sqrt(step);
        for w in dw.iter_mut() {
            *w = sqrt_step * noise.next_normal();
        }
        spec.drift_into(&x, &mut f);
        spec.diffusion_into(&x, &mut h);
        spec.covariance_into(t, &mut sigma);
        for (i, s) in sdw.iter_mut().enumerate() {
            *s = (0..m).map(|j| sigma[i * m + j] * dw[j]).sum();
        }
        for i in 0..n {
            let noise_term: f64 = (0..m).map(|j| h[i * m + j] * sdw[j]).sum();
            x[i] += f[i] * step + noise_term;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: k + 1,
                time: cfg.time_at(k + 1),
            });
        }
        observe(k + 1, cfg.time_at(k + 1), &x);
    }
    Ok(())
}

/// Integrates path `path` and records the full trajectory.
pub fn integrate_path(spec: &SystemSpec, cfg: &SimConfig, path: u64) -> Result<Trajectory> {
    cfg.validate()?;
    let len = cfg.steps() + 1;
    let n = spec.dim_state();
    let mut times = Vec::with_capacity(len);
    let mut states = Vec::with_capacity(len * n);
    let mut lyap = Vec::with_capacity(len);
    let mut norms = Vec::with_capacity(len);
    simulate(spec, cfg, path, |_, t, x| {
        times.push(t);
        states.extend_from_slice(x);
        lyap.push(spec.v(x));
        norms.push(euclid(x));
    })?;
    Ok(Trajectory {
        dim: n,
        times,
        states,
        lyap,
        norms,
    })
}

/// Integrates the first path of the run (stream 0).
pub fn integrate(spec: &SystemSpec, cfg: &SimConfig) -> Result<Trajectory> {
    integrate_path(spec, cfg, 0)
}

/// `n_paths` independent trajectories; path `i` uses stream `i`.
pub fn ensemble(spec: &SystemSpec, cfg: &SimConfig, n_paths: usize) -> Result<Vec<Trajectory>> {
    if n_paths == 0 {
        return Err(Error::Config("ensemble needs at least one path".into()));
    }
    (0..n_paths as u64).map(|i| integrate_path(spec, cfg, i)).collect()
}

/// States of one path at selected grid times, without storing the path.
pub fn sample_path(spec: &SystemSpec, cfg: &SimConfig, path: u64, times: &[f64]) -> Result<Vec<Vec<f64>>> {
    let indices = grid_indices(cfg, times)?;
    let mut out = vec![Vec::new(); times.len()];
    simulate(spec, cfg, path, |k, _, x| {
        for (slot, &idx) in indices.iter().enumerate() {
            if idx == k {
                out[slot] = x.to_vec();
            }
        }
    })?;
    Ok(out)
}

fn grid_indices(cfg: &SimConfig, times: &[f64]) -> Result<Vec<usize>> {
    cfg.validate()?;
    times
        .iter()
        .map(|&t| {
            cfg.index_of(t)
                .ok_or_else(|| Error::Config(format!("observation time {t} is not on the grid")))
        })
        .collect()
}

/// Ensemble states at a few observation times, indexed `[time][path]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshots {
    pub times: Vec<f64>,
    pub x0: Vec<f64>,
    pub states: Vec<Vec<Vec<f64>>>,
}

impl Snapshots {
    /// Assembles snapshots from per-path samples (each `[time][state]`).
    pub fn from_paths(times: Vec<f64>, x0: Vec<f64>, per_path: Vec<Vec<Vec<f64>>>) -> Self {
        let mut states = vec![Vec::with_capacity(per_path.len()); times.len()];
        for path in per_path {
            for (slot, x) in path.into_iter().enumerate() {
                states[slot].push(x);
            }
        }
        Self { times, x0, states }
    }

    /// Extracts snapshots from stored trajectories at grid times.
    pub fn from_trajectories(trajs: &[Trajectory], times: &[f64]) -> Result<Self> {
        let first = trajs.first().ok_or(Error::Empty("Snapshots::from_trajectories"))?;
        let mut idx = Vec::with_capacity(times.len());
        for &t in times {
            let k = first
                .times()
                .iter()
                .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
                .ok_or_else(|| Error::Config(format!("observation time {t} is not on the grid")))?;
            idx.push(k);
        }
        let per_path = trajs
            .iter()
            .map(|tr| idx.iter().map(|&k| tr.state(k).to_vec()).collect())
            .collect();
        Ok(Self::from_paths(times.to_vec(), first.state(0).to_vec(), per_path))
    }

    pub fn n_paths(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }
}

/// Sequential ensemble sampled at `times`; path `i` uses stream `i`.
pub fn ensemble_snapshots(spec: &SystemSpec, cfg: &SimConfig, n_paths: usize, times: &[f64]) -> Result<Snapshots> {
    let per_path = (0..n_paths as u64)
        .map(|i| sample_path(spec, cfg, i, times))
        .collect::<Result<Vec<_>>>()?;
    Ok(Snapshots::from_paths(times.to_vec(), cfg.x0.clone(), per_path))
}
