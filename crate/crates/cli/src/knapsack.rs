//! Knapsack runs: exact optimum, learner sweeps and their CSVs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use factored_rl::rlwk::{exact_augmented_dp, run_rlwk_bf, AugmentedFmdp, RlwkConfig, RlwkRecord};
use rayon::prelude::*;

use crate::config::KnapsackConfig;
use crate::Failure;

pub const RLWK_HEADER: &str = "episode,k_regret,cum_regret,realized_return,spent,budget_terminated";

pub fn run_seeds(aug: &AugmentedFmdp, cfg: &KnapsackConfig) -> Result<Vec<RlwkRecord>, Failure> {
    cfg.validate()?;
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let run_cfg = RlwkConfig {
                episodes: cfg.episodes,
                delta: cfg.delta,
                seed,
            };
            Ok(run_rlwk_bf(aug, &run_cfg)?)
        })
        .collect()
}

/// Spent cost is written in grid units joined by `;`.
pub fn rlwk_csv(record: &RlwkRecord) -> String {
    let mut out = String::from(RLWK_HEADER);
    out.push('\n');
    for e in &record.episodes {
        let spent: Vec<String> = e.spent_units.iter().map(u32::to_string).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            e.episode,
            e.regret,
            e.cum_regret,
            e.realized_return,
            spent.join(";"),
            u8::from(e.budget_terminated)
        );
    }
    out
}

/// The exact optimal action and value, then each seed's final greedy
/// action, for every `(step, state, budget)`.
pub fn policy_csv(aug: &AugmentedFmdp, records: &[RlwkRecord]) -> String {
    let dp = exact_augmented_dp(aug);
    let mut out = String::from("step,state,budget,optimal_action,optimal_value");
    for r in records {
        let _ = write!(out, ",seed{}", r.seed);
    }
    out.push('\n');
    let points = aug.grid.num_points();
    for h in 0..aug.base.horizon {
        for s in 0..aug.num_base_states() {
            for b in 0..points {
                let x = aug.state_index(s, b);
                let budget: Vec<String> = aug
                    .grid
                    .decode(b)
                    .into_iter()
                    .map(|u| aug.grid.to_value(u).to_string())
                    .collect();
                let best = dp.policy.action(h, x).expect("dp covers every state");
                let _ = write!(out, "{h},{s},{},{best},{}", budget.join(";"), dp.value(h, x));
                for r in records {
                    let _ = write!(out, ",{}", r.final_policy.action(h, x).expect("planned for every state"));
                }
                out.push('\n');
            }
        }
    }
    out
}

pub fn run_knapsack(aug: &AugmentedFmdp, cfg: &KnapsackConfig, out: &Path) -> Result<(Vec<RlwkRecord>, Vec<PathBuf>), Failure> {
    let records = run_seeds(aug, cfg)?;
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let mut files = Vec::new();
    for r in &records {
        let path = out.join(format!("rlwk_seed{}.csv", r.seed));
        fs::write(&path, rlwk_csv(r)).map_err(|e| Failure::io(&path, e))?;
        files.push(path);
    }
    let path = out.join("rlwk_policy.csv");
    fs::write(&path, policy_csv(aug, &records)).map_err(|e| Failure::io(&path, e))?;
    files.push(path);
    Ok((records, files))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::InstanceSource;

    #[test]
    fn policy_table_lists_every_augmented_state() {
        let cfg = KnapsackConfig {
            instance: InstanceSource::Instance1,
            episodes: 5,
            delta: 0.1,
            seeds: vec![0, 1],
            out: None,
        };
        let aug = cfg.instance.load(Path::new(".")).unwrap();
        let records = run_seeds(&aug, &cfg).unwrap();
        let csv = policy_csv(&aug, &records);
        assert_eq!(csv.lines().count(), 1 + 2 * 10);
        assert!(csv.starts_with("step,state,budget,optimal_action,optimal_value,seed0,seed1\n"));
        assert_eq!(rlwk_csv(&records[0]).lines().count(), 6);
    }
}
