//! Parallel ensembles. Path `i` always draws from stream `first_stream + i`
//! and results are collected in path order, so the output does not depend
//! on the number of threads.

use nss_core::model::SystemSpec;
use nss_core::sim::{sample_path, SimConfig, Snapshots};
use rayon::prelude::*;

use crate::error::{AtStage, LabError, LabResult};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "NSS_LAB_THREADS";

/// Worker cap from [`THREADS_ENV`]; unset, empty or `0` means no cap.
pub fn thread_cap() -> LabResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(n) => Ok(Some(n)),
            Err(_) => Err(LabError::Threads(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        },
    }
}

pub fn pool(threads: Option<usize>) -> LabResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| LabError::Threads(e.to_string()))
}

/// States of `n_paths` paths at `times`, computed on up to `threads` workers.
pub fn parallel_snapshots(
    spec: &SystemSpec,
    cfg: &SimConfig,
    n_paths: usize,
    first_stream: u64,
    times: &[f64],
    threads: Option<usize>,
) -> LabResult<Snapshots> {
    let per_path = pool(threads)?.install(|| {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| sample_path(spec, cfg, first_stream + i, times))
            .collect::<nss_core::Result<Vec<_>>>()
    });
    Ok(Snapshots::from_paths(times.to_vec(), cfg.x0.clone(), per_path.at("ensemble")?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nss_core::model::builtin_ou;
    use nss_core::sim::ensemble_snapshots;

    #[test]
    fn matches_the_sequential_ensemble() {
        let spec = builtin_ou(1.0, 0.5).unwrap();
        let cfg = SimConfig { t_end: 1.0, dt: 0.01, seed: 3, x0: vec![1.0] };
        let seq = ensemble_snapshots(&spec, &cfg, 64, &[0.5, 1.0]).unwrap();
        for threads in [Some(1), Some(3), None] {
            let par = parallel_snapshots(&spec, &cfg, 64, 0, &[0.5, 1.0], threads).unwrap();
            assert_eq!(par, seq);
        }
    }
}
