//! Multi-seed regret sweeps and their CSV artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use factored_rl::agent::{run, run_detailed, Algorithm, RunConfig, RunRecord};
use factored_rl::FmdpSpec;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::Failure;

pub const RUN_HEADER: &str = "episode,k_regret,cum_regret,optimism_flag";
pub const SUMMARY_HEADER: &str = "algorithm,checkpoint,mean_cum_regret,std_cum_regret";

/// The `(algorithm, seed)` grid in output order: algorithms outer, seeds
/// inner.
pub fn grid(cfg: &ExperimentConfig) -> Vec<(Algorithm, u64)> {
    cfg.algorithms
        .iter()
        .flat_map(|&alg| cfg.seeds.iter().map(move |&seed| (alg, seed)))
        .collect()
}

/// Runs the whole grid on the current rayon pool. Records come back in
/// [`grid`] order regardless of scheduling.
pub fn run_grid(spec: &FmdpSpec, cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, Failure> {
    cfg.validate()?;
    grid(cfg)
        .into_par_iter()
        .map(|(alg, seed)| Ok(run(spec, &RunConfig::new(alg, cfg.episodes, cfg.delta, seed))?))
        .collect()
}

pub fn run_file_name(alg: Algorithm, seed: u64) -> String {
    format!("run_{alg}_seed{seed}.csv")
}

/// One row per episode. Floats use Rust's shortest round-trip formatting,
/// which never depends on locale.
pub fn run_csv(record: &RunRecord) -> String {
    let mut out = String::with_capacity(32 * (record.episodes.len() + 1));
    out.push_str(RUN_HEADER);
    out.push('\n');
    for e in &record.episodes {
        let _ = writeln!(out, "{},{},{},{}", e.episode, e.regret, e.cum_regret, u8::from(e.optimistic));
    }
    out
}

/// Checkpoints `K/4`, `K/2` and `K`, never below episode 1.
pub fn checkpoints(episodes: usize) -> [usize; 3] {
    [(episodes / 4).max(1), (episodes / 2).max(1), episodes]
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub fn summary_csv(records: &[RunRecord], algorithms: &[Algorithm], episodes: usize) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for &alg in algorithms {
        let runs: Vec<&RunRecord> = records.iter().filter(|r| r.algorithm == alg).collect();
        for k in checkpoints(episodes) {
            let values: Vec<f64> = runs.iter().map(|r| r.cum_regret_at(k)).collect();
            let (mean, std) = mean_std(&values);
            let _ = writeln!(out, "{alg},{k},{mean},{std}");
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    /// Every file written, run CSVs first and the summary last.
    pub files: Vec<PathBuf>,
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf, Failure> {
    fs::write(&path, contents).map_err(|e| Failure::io(&path, e))?;
    Ok(path)
}

/// Runs the grid and writes one CSV per run plus `summary.csv` into `out`.
pub fn run_experiment(spec: &FmdpSpec, cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentOutput, Failure> {
    let records = run_grid(spec, cfg)?;
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let mut files = Vec::with_capacity(records.len() + 1);
    for r in &records {
        files.push(write(out.join(run_file_name(r.algorithm, r.seed)), &run_csv(r))?);
    }
    files.push(write(out.join("summary.csv"), &summary_csv(&records, &cfg.algorithms, cfg.episodes))?);
    Ok(ExperimentOutput { records, files })
}

/// Runs the grid and writes the learners' final scope counts, one file per
/// run.
pub fn write_counts(spec: &FmdpSpec, cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, Failure> {
    cfg.validate()?;
    let tables: Vec<(Algorithm, u64, String)> = grid(cfg)
        .into_par_iter()
        .map(|(alg, seed)| {
            let (_, learner) = run_detailed(spec, &RunConfig::new(alg, cfg.episodes, cfg.delta, seed))?;
            Ok((alg, seed, learner.estimators().counts_csv()))
        })
        .collect::<Result<_, Failure>>()?;
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    tables
        .into_iter()
        .map(|(alg, seed, csv)| write(out.join(format!("counts_{alg}_seed{seed}.csv")), &csv))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SpecSource;

    fn config(algorithms: Vec<Algorithm>, seeds: Vec<u64>, episodes: usize) -> ExperimentConfig {
        ExperimentConfig {
            spec: SpecSource::ProductionLine {
                machines: 2,
                states_per_machine: 2,
                actions: 2,
                horizon: 3,
                seed: 4,
            },
            algorithms,
            episodes,
            delta: 0.1,
            seeds,
            out: None,
        }
    }

    #[test]
    fn statistics() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(checkpoints(10), [2, 5, 10]);
        assert_eq!(checkpoints(2), [1, 1, 2]);
    }

    #[test]
    fn minimal_run_has_one_row_per_episode() {
        let cfg = config(vec![Algorithm::Ch], vec![0], 10);
        let spec = cfg.spec.load(Path::new(".")).unwrap();
        let records = run_grid(&spec, &cfg).unwrap();
        let csv = run_csv(&records[0]);
        assert_eq!(csv.lines().count(), 11);
        assert_eq!(csv.lines().next(), Some(RUN_HEADER));
        assert!(csv.ends_with('\n') && !csv.contains('\r'));
    }

    #[test]
    fn grid_order_is_algorithm_major() {
        let cfg = config(vec![Algorithm::Bf, Algorithm::Ch], vec![3, 1, 2], 5);
        let spec = cfg.spec.load(Path::new(".")).unwrap();
        let got: Vec<(Algorithm, u64)> = run_grid(&spec, &cfg)
            .unwrap()
            .iter()
            .map(|r| (r.algorithm, r.seed))
            .collect();
        assert_eq!(got, grid(&cfg));
        assert_eq!(got[0], (Algorithm::Bf, 3));
    }
}
