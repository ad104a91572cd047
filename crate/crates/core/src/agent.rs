//! Episodic learning loops: the factored Hoeffding and Bernstein learners and
//! the flat Hoeffding baseline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bonus::LogFactors;
use crate::env::{PolicyTable, Simulator, Step, Trajectory};
use crate::error::{Error, Result};
use crate::estimation::Estimators;
use crate::model::{flatten_to_flat_mdp, FmdpSpec};
use crate::oracle::Oracle;
use crate::planner::{sweep_bernstein, sweep_hoeffding, PlanningModel, ValueTables};

/// Per-episode regret below this is treated as a broken invariant.
pub const REGRET_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Factored learner with Hoeffding bonuses.
    Ch,
    /// Factored learner with Bernstein bonuses.
    Bf,
    /// Hoeffding learner on the flattened MDP.
    FlatCh,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ch => "ch",
            Algorithm::Bf => "bf",
            Algorithm::FlatCh => "flat-ch",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ch" => Ok(Algorithm::Ch),
            "bf" => Ok(Algorithm::Bf),
            "flat-ch" => Ok(Algorithm::FlatCh),
            other => Err(Error::Config(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Number of episodes `K`; also fixes `T = K * H` in the log factors.
    pub episodes: usize,
    pub delta: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Overrides the spec's start state when set.
    #[serde(default)]
    pub initial_state: Option<Vec<usize>>,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, episodes: usize, delta: f64, seed: u64) -> Self {
        Self {
            episodes,
            delta,
            seed,
            algorithm,
            initial_state: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta {} not in (0,1)", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// One-based episode number.
    pub episode: usize,
    pub policy_hash: u64,
    pub realized_return: f64,
    pub regret: f64,
    pub cum_regret: f64,
    /// `V̄_1(s_1) >= V*_1(s_1)` for the plan used in this episode.
    pub optimistic: bool,
    pub v_bar_start: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
    pub estimator_digest: u64,
}

impl RunRecord {
    pub fn cum_regret(&self) -> f64 {
        self.episodes.last().map_or(0.0, |e| e.cum_regret)
    }

    /// Cumulative regret after `k` episodes (`k` is one-based).
    pub fn cum_regret_at(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.episodes[k.min(self.episodes.len()) - 1].cum_regret
        }
    }

    pub fn optimism_rate(&self) -> f64 {
        let hits = self.episodes.iter().filter(|e| e.optimistic).count();
        hits as f64 / self.episodes.len().max(1) as f64
    }
}

/// The learner's side of a run: estimators over the model it believes in
/// and the planner that turns them into a greedy policy.
#[derive(Debug, Clone)]
pub struct Learner {
    algorithm: Algorithm,
    model_spec: FmdpSpec,
    estimators: Estimators,
    logf: LogFactors,
}

impl Learner {
    pub fn new(spec: &FmdpSpec, algorithm: Algorithm, episodes: usize, delta: f64) -> Result<Self> {
        let model_spec = match algorithm {
            Algorithm::FlatCh => flatten_to_flat_mdp(spec),
            Algorithm::Ch | Algorithm::Bf => spec.clone(),
        };
        let logf = LogFactors::new(&model_spec, episodes, delta)?;
        Ok(Self {
            algorithm,
            estimators: Estimators::new(&model_spec),
            model_spec,
            logf,
        })
    }

    pub fn estimators(&self) -> &Estimators {
        &self.estimators
    }

    pub fn log_factors(&self) -> &LogFactors {
        &self.logf
    }

    pub fn plan(&self) -> Result<ValueTables> {
        let model = PlanningModel::from_estimators(&self.estimators, self.model_spec.horizon);
        match self.algorithm {
            Algorithm::Bf => sweep_bernstein(&model, &self.logf),
            Algorithm::Ch | Algorithm::FlatCh => sweep_hoeffding(&model, &self.logf),
        }
    }

    pub fn observe(&mut self, traj: &Trajectory) -> Result<()> {
        match self.algorithm {
            Algorithm::FlatCh => {
                let flat = Trajectory {
                    initial_state: vec![traj.steps.first().map_or(0, |s| s.s)],
                    steps: traj.steps.iter().map(flatten_step).collect(),
                };
                self.estimators.update_from_episode(&flat)
            }
            Algorithm::Ch | Algorithm::Bf => self.estimators.update_from_episode(traj),
        }
    }
}

/// A factored observation seen through the flat model: one state, one action
/// and a single reward sample equal to the average of the factor rewards.
fn flatten_step(step: &Step) -> Step {
    Step {
        state: vec![step.s],
        action: vec![step.a],
        reward_samples: vec![step.reward()],
        next_state: vec![step.s_next],
        s: step.s,
        a: step.a,
        s_next: step.s_next,
    }
}

/// Runs `cfg.episodes` episodes of the configured learner against `spec`,
/// scoring each greedy policy by exact evaluation.
pub fn run(spec: &FmdpSpec, cfg: &RunConfig) -> Result<RunRecord> {
    run_detailed(spec, cfg).map(|(record, _)| record)
}

/// Like [`run`], also handing back the learner with its final counts.
pub fn run_detailed(spec: &FmdpSpec, cfg: &RunConfig) -> Result<(RunRecord, Learner)> {
    cfg.validate()?;
    let init = cfg.initial_state.clone().unwrap_or_else(|| spec.start_state());
    let s1 = {
        let dims = &spec.dims.state_dims;
        if init.len() != dims.len() || init.iter().zip(dims).any(|(&x, &d)| x >= d) {
            return Err(Error::Config("initial state does not fit the spec".into()));
        }
        init.iter().zip(dims).fold(0, |acc, (&x, &d)| acc * d + x)
    };
    let oracle = Oracle::new(spec);
    let v_star = oracle.optimal_values().v(0, s1);
    let sim = Simulator::new(spec);
    let mut learner = Learner::new(spec, cfg.algorithm, cfg.episodes, cfg.delta)?;

    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut cum = 0.0;
    for k in 0..cfg.episodes {
        let tables = learner.plan()?;
        let policy: &PolicyTable = &tables.policy;
        let v_pi = oracle.evaluate(policy)?[s1];
        let regret = v_star - v_pi;
        if regret < -REGRET_TOLERANCE {
            return Err(Error::Invariant(format!(
                "negative regret {regret} in episode {}",
                k + 1
            )));
        }
        let traj = sim.run(policy, &init, cfg.seed, k as u64)?;
        learner.observe(&traj)?;
        cum += regret;
        let v_bar_start = tables.v_bar(0, s1);
        episodes.push(EpisodeRecord {
            episode: k + 1,
            policy_hash: policy.fingerprint(),
            realized_return: traj.total_reward(),
            regret,
            cum_regret: cum,
            optimistic: v_bar_start >= v_star,
            v_bar_start,
        });
    }
    let record = RunRecord {
        algorithm: cfg.algorithm,
        seed: cfg.seed,
        episodes,
        estimator_digest: learner.estimators().digest(),
    };
    Ok((record, learner))
}

fn run_as(spec: &FmdpSpec, cfg: &RunConfig, algorithm: Algorithm) -> Result<RunRecord> {
    let cfg = RunConfig {
        algorithm,
        ..cfg.clone()
    };
    run(spec, &cfg)
}

pub fn run_fmdp_ch(spec: &FmdpSpec, cfg: &RunConfig) -> Result<RunRecord> {
    run_as(spec, cfg, Algorithm::Ch)
}

pub fn run_fmdp_bf(spec: &FmdpSpec, cfg: &RunConfig) -> Result<RunRecord> {
    run_as(spec, cfg, Algorithm::Bf)
}

pub fn run_flat_ucbvi_ch(spec: &FmdpSpec, cfg: &RunConfig) -> Result<RunRecord> {
    run_as(spec, cfg, Algorithm::FlatCh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FactorDims, RewardDist, RewardFactor, Scope, TransitionFactor};

    fn bandit(horizon: usize) -> FmdpSpec {
        FmdpSpec {
            dims: FactorDims::new(vec![1], vec![3]),
            horizon,
            initial_state: vec![],
            rewards: vec![RewardFactor {
                scope: Scope::new(vec![1]),
                table: vec![
                    RewardDist::Deterministic(0.2),
                    RewardDist::Deterministic(0.5),
                    RewardDist::Deterministic(0.9),
                ],
            }],
            transitions: vec![TransitionFactor {
                scope: Scope::new(vec![1]),
                rows: vec![vec![1.0]; 3],
            }],
        }
    }

    #[test]
    fn algorithm_names_round_trip() {
        for alg in [Algorithm::Ch, Algorithm::Bf, Algorithm::FlatCh] {
            assert_eq!(alg.name().parse::<Algorithm>().unwrap(), alg);
        }
        assert!("ucb".parse::<Algorithm>().is_err());
    }

    #[test]
    fn single_episode_regret_is_bounded() {
        let spec = bandit(2);
        let rec = run_fmdp_ch(&spec, &RunConfig::new(Algorithm::Ch, 1, 0.1, 3)).unwrap();
        assert_eq!(rec.episodes.len(), 1);
        let r = rec.episodes[0].regret;
        assert!((0.0..=2.0).contains(&r));
        assert!(rec.episodes[0].optimistic);
    }

    #[test]
    fn same_seed_same_record() {
        let spec = bandit(2);
        let cfg = RunConfig::new(Algorithm::Bf, 30, 0.1, 8);
        assert_eq!(run(&spec, &cfg).unwrap(), run(&spec, &cfg).unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let spec = bandit(2);
        assert!(matches!(
            run(&spec, &RunConfig::new(Algorithm::Ch, 0, 0.1, 0)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            run(&spec, &RunConfig::new(Algorithm::Ch, 5, 1.0, 0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn flat_learner_counts_full_scope_only() {
        let spec = crate::env::gen_production_line(2, 2, 2, 3, 1).unwrap();
        let learner = Learner::new(&spec, Algorithm::FlatCh, 10, 0.1).unwrap();
        assert_eq!(learner.estimators().transitions.len(), 1);
        assert_eq!(learner.estimators().transitions[0].cells(), 8);
        assert_eq!(learner.estimators().rewards.len(), 1);
    }
}
