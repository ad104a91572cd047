//! JSON configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use factored_rl::agent::Algorithm;
use factored_rl::env::{gen_parallel_hard_mdps, gen_production_line, gen_random_fmdp, gen_tree_bandit_instance};
use factored_rl::rlwk::{fig1, AugmentedFmdp, RlwkInstanceFile};
use factored_rl::{FactorDims, FmdpSpec, Scope};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Where a spec comes from. Relative paths resolve against the directory of
/// the config file that names them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpecSource {
    File {
        path: PathBuf,
    },
    Inline {
        spec: FmdpSpec,
    },
    Random {
        state_dims: Vec<usize>,
        action_dims: Vec<usize>,
        reward_scopes: Vec<Vec<usize>>,
        transition_scopes: Vec<Vec<usize>>,
        horizon: usize,
        seed: u64,
    },
    ProductionLine {
        machines: usize,
        states_per_machine: usize,
        actions: usize,
        horizon: usize,
        seed: u64,
    },
    TreeBandit {
        factors: usize,
        states_per_factor: usize,
        actions_per_factor: usize,
        gap: f64,
        horizon: usize,
    },
    ParallelHard {
        factors: usize,
        states: usize,
        actions: usize,
        epsilon: f64,
        horizon: usize,
        seed: u64,
    },
}

impl SpecSource {
    pub fn load(&self, base_dir: &Path) -> Result<FmdpSpec, Failure> {
        let spec = match self {
            SpecSource::File { path } => {
                let path = base_dir.join(path);
                let text = fs::read_to_string(&path).map_err(|e| Failure::io(&path, e))?;
                FmdpSpec::from_json(&text)?
            }
            SpecSource::Inline { spec } => spec.clone(),
            SpecSource::Random {
                state_dims,
                action_dims,
                reward_scopes,
                transition_scopes,
                horizon,
                seed,
            } => {
                let dims = FactorDims::new(state_dims.clone(), action_dims.clone());
                let scopes = |raw: &[Vec<usize>]| raw.iter().cloned().map(Scope::new).collect::<Vec<_>>();
                gen_random_fmdp(&dims, &scopes(reward_scopes), &scopes(transition_scopes), *horizon, *seed)?
            }
            SpecSource::ProductionLine {
                machines,
                states_per_machine,
                actions,
                horizon,
                seed,
            } => gen_production_line(*machines, *states_per_machine, *actions, *horizon, *seed)?,
            SpecSource::TreeBandit {
                factors,
                states_per_factor,
                actions_per_factor,
                gap,
                horizon,
            } => gen_tree_bandit_instance(*factors, *states_per_factor, *actions_per_factor, *gap, *horizon)?,
            SpecSource::ParallelHard {
                factors,
                states,
                actions,
                epsilon,
                horizon,
                seed,
            } => gen_parallel_hard_mdps(*factors, *states, *actions, *epsilon, *horizon, *seed)?,
        };
        Ok(spec.validated()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub spec: SpecSource,
    pub algorithms: Vec<Algorithm>,
    /// Episodes per run; also fixes `T = K * H` in the log factors.
    pub episodes: usize,
    pub delta: f64,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        if self.seeds.is_empty() {
            return Err(Failure::Config("seeds must not be empty".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Failure::Config("algorithms must not be empty".into()));
        }
        if self.episodes == 0 {
            return Err(Failure::Config("episodes must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Failure::Config(format!("delta {} not in (0,1)", self.delta)));
        }
        Ok(())
    }
}

/// A knapsack instance: one of the two built-in ones or a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceSource {
    Instance1,
    Instance2,
    File { path: PathBuf },
    Inline { instance: RlwkInstanceFile },
}

impl InstanceSource {
    pub fn load(&self, base_dir: &Path) -> Result<AugmentedFmdp, Failure> {
        let file = match self {
            InstanceSource::Instance1 => fig1::instance1(),
            InstanceSource::Instance2 => fig1::instance2(),
            InstanceSource::File { path } => {
                let path = base_dir.join(path);
                let text = fs::read_to_string(&path).map_err(|e| Failure::io(&path, e))?;
                RlwkInstanceFile::from_json(&text)?
            }
            InstanceSource::Inline { instance } => instance.clone(),
        };
        Ok(file.build()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnapsackConfig {
    pub instance: InstanceSource,
    pub episodes: usize,
    pub delta: f64,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl KnapsackConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        if self.seeds.is_empty() {
            return Err(Failure::Config("seeds must not be empty".into()));
        }
        if self.episodes == 0 {
            return Err(Failure::Config("episodes must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Failure::Config(format!("delta {} not in (0,1)", self.delta)));
        }
        Ok(())
    }
}

/// Reads a JSON file and returns it with the directory it lives in.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<(T, PathBuf), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let value = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((value, dir))
}

/// Parses a `--seeds a,b,c` list.
pub fn parse_seeds(raw: &str) -> Result<Vec<u64>, Failure> {
    let seeds = raw
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<u64>()
                .map_err(|_| Failure::Config(format!("bad seed {part:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if seeds.is_empty() {
        return Err(Failure::Config("empty seed list".into()));
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_parse() {
        assert_eq!(parse_seeds("1, 2,3").unwrap(), vec![1, 2, 3]);
        assert!(parse_seeds("1,x").is_err());
    }

    #[test]
    fn experiment_config_round_trips() {
        let text = r#"{
            "spec": {"kind": "production-line", "machines": 3, "states_per_machine": 2,
                     "actions": 2, "horizon": 4, "seed": 1},
            "algorithms": ["bf", "flat-ch"],
            "episodes": 10, "delta": 0.1, "seeds": [0, 1]
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        let again: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.spec.load(Path::new(".")).unwrap().n(), 3);
    }

    #[test]
    fn corrupted_inline_spec_is_config_error() {
        let mut spec = gen_production_line(2, 2, 2, 3, 0).unwrap();
        spec.transitions[0].rows[0][0] -= 0.1;
        let err = SpecSource::Inline { spec }.load(Path::new(".")).unwrap_err();
        assert!(matches!(err, Failure::Config(_)));
    }
}
