//! Visit counters and empirical estimates over reward and transition scopes.

use std::fmt::Write as _;

use crate::env::{Step, Trajectory};
use crate::error::{Error, Result};
use crate::model::{FactorDims, FmdpSpec, Layout, Scope};

/// Dense visit counts over one scope, with optional next-value counts for
/// transition scopes (`joint[cell * width + x]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScopeCounter {
    pub scope: Scope,
    pub counts: Vec<u64>,
    pub joint: Vec<u64>,
    width: usize,
}

impl ScopeCounter {
    fn new(scope: Scope, cells: usize, width: usize) -> Self {
        Self {
            scope,
            counts: vec![0; cells],
            joint: vec![0; cells * width],
            width,
        }
    }

    pub fn cells(&self) -> usize {
        self.counts.len()
    }

    pub fn joint_row(&self, cell: usize) -> &[u64] {
        &self.joint[cell * self.width..(cell + 1) * self.width]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardEstimator {
    pub counter: ScopeCounter,
    pub sum_r: Vec<f64>,
    pub sum_r2: Vec<f64>,
}

/// Empirical model of a factored MDP, built only from its scopes and
/// dimensions; the true tables are never consulted.
#[derive(Debug, Clone)]
pub struct Estimators {
    dims: FactorDims,
    layout: Layout,
    pub rewards: Vec<RewardEstimator>,
    pub transitions: Vec<ScopeCounter>,
}

impl Estimators {
    pub fn new(spec: &FmdpSpec) -> Self {
        let dims = spec.dims.clone();
        let rewards = spec
            .rewards
            .iter()
            .map(|rf| {
                let cells = dims.scope_cardinality(&rf.scope);
                RewardEstimator {
                    counter: ScopeCounter::new(rf.scope.clone(), cells, 0),
                    sum_r: vec![0.0; cells],
                    sum_r2: vec![0.0; cells],
                }
            })
            .collect();
        let transitions = spec
            .transitions
            .iter()
            .enumerate()
            .map(|(j, tf)| {
                ScopeCounter::new(
                    tf.scope.clone(),
                    dims.scope_cardinality(&tf.scope),
                    dims.state_dims[j],
                )
            })
            .collect();
        Self {
            layout: spec.layout(),
            dims,
            rewards,
            transitions,
        }
    }

    pub fn dims(&self) -> &FactorDims {
        &self.dims
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn m(&self) -> usize {
        self.rewards.len()
    }

    pub fn n(&self) -> usize {
        self.transitions.len()
    }

    fn check_step(&self, step: &Step) -> Result<()> {
        let dims = &self.dims;
        let consistent = step.reward_samples.len() == self.rewards.len()
            && step.next_state.len() == dims.n()
            && step.s < dims.num_states()
            && step.a < dims.num_actions()
            && step
                .next_state
                .iter()
                .zip(&dims.state_dims)
                .all(|(&x, &d)| x < d);
        if !consistent {
            return Err(Error::Data(format!(
                "step (s={}, a={}) does not match the estimator dimensions",
                step.s, step.a
            )));
        }
        Ok(())
    }

    pub fn update_step(&mut self, step: &Step) -> Result<()> {
        self.check_step(step)?;
        let sa = self.layout.pair(step.s, step.a);
        for (est, (&c, &r)) in self
            .rewards
            .iter_mut()
            .zip(self.layout.reward_cells(sa).iter().zip(&step.reward_samples))
        {
            est.counter.counts[c] += 1;
            est.sum_r[c] += r;
            est.sum_r2[c] += r * r;
        }
        for (counter, (&c, &x)) in self
            .transitions
            .iter_mut()
            .zip(self.layout.transition_cells(sa).iter().zip(&step.next_state))
        {
            counter.counts[c] += 1;
            counter.joint[c * counter.width + x] += 1;
        }
        Ok(())
    }

    /// Adds every step of `traj`. On a malformed step nothing is applied.
    pub fn update_from_episode(&mut self, traj: &Trajectory) -> Result<()> {
        for step in &traj.steps {
            self.check_step(step)?;
        }
        for step in &traj.steps {
            self.update_step(step)?;
        }
        Ok(())
    }

    pub fn reward_count(&self, i: usize, cell: usize) -> u64 {
        self.rewards[i].counter.counts[cell]
    }

    pub fn transition_count(&self, j: usize, cell: usize) -> u64 {
        self.transitions[j].counts[cell]
    }

    /// Empirical mean of reward factor `i`, or the optimistic default 1 for an
    /// unvisited cell.
    pub fn reward_mean(&self, i: usize, cell: usize) -> f64 {
        let est = &self.rewards[i];
        let n = est.counter.counts[cell];
        if n == 0 {
            1.0
        } else {
            est.sum_r[cell] / n as f64
        }
    }

    /// Biased empirical variance `mean(r^2) - mean(r)^2`, clamped at zero.
    pub fn reward_variance(&self, i: usize, cell: usize) -> Result<f64> {
        let est = &self.rewards[i];
        let n = est.counter.counts[cell];
        if n == 0 {
            return Err(Error::UndefinedEstimate { factor: i, cell });
        }
        let mean = est.sum_r[cell] / n as f64;
        Ok((est.sum_r2[cell] / n as f64 - mean * mean).max(0.0))
    }

    pub fn transition_row(&self, j: usize, cell: usize) -> Result<Vec<f64>> {
        let counter = &self.transitions[j];
        let n = counter.counts[cell];
        if n == 0 {
            return Err(Error::UndefinedEstimate { factor: j, cell });
        }
        Ok(counter
            .joint_row(cell)
            .iter()
            .map(|&c| c as f64 / n as f64)
            .collect())
    }

    /// Whether every reward and transition scope cell of flat pair `sa` has
    /// been visited at least once.
    pub fn is_known(&self, sa: usize) -> bool {
        self.rewards
            .iter()
            .zip(self.layout.reward_cells(sa))
            .all(|(est, &c)| est.counter.counts[c] > 0)
            && self
                .transitions
                .iter()
                .zip(self.layout.transition_cells(sa))
                .all(|(counter, &c)| counter.counts[c] > 0)
    }

    /// Counter dump with columns `scope_id,cell_index,count`. Reward scopes
    /// are labelled `r<i>` and transition scopes `p<j>`.
    pub fn counts_csv(&self) -> String {
        let mut out = String::from("scope_id,cell_index,count\n");
        let labelled = self
            .rewards
            .iter()
            .map(|e| ('r', &e.counter))
            .enumerate()
            .chain(self.transitions.iter().map(|c| ('p', c)).enumerate());
        for (i, (tag, counter)) in labelled {
            for (cell, count) in counter.counts.iter().enumerate() {
                let _ = writeln!(out, "{tag}{i},{cell},{count}");
            }
        }
        out
    }

    /// FNV-1a digest over all counters and reward sums.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: u64| {
            for byte in x.to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for est in &self.rewards {
            est.counter.counts.iter().for_each(|&c| feed(c));
            est.sum_r.iter().for_each(|x| feed(x.to_bits()));
            est.sum_r2.iter().for_each(|x| feed(x.to_bits()));
        }
        for counter in &self.transitions {
            counter.counts.iter().for_each(|&c| feed(c));
            counter.joint.iter().for_each(|&c| feed(c));
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{run_episode, PolicyTable, Simulator};
    use crate::model::{RewardDist, RewardFactor, TransitionFactor};
    use crate::rng::CounterRng;
    use proptest::prelude::*;

    fn single_cell_spec(reward: RewardDist, row: Vec<f64>) -> FmdpSpec {
        let width = row.len();
        FmdpSpec {
            dims: FactorDims::new(vec![width], vec![1]),
            horizon: 1,
            initial_state: vec![],
            rewards: vec![RewardFactor {
                scope: Scope::new(vec![1]),
                table: vec![reward],
            }],
            transitions: vec![TransitionFactor {
                scope: Scope::new(vec![1]),
                rows: vec![row],
            }],
        }
    }

    fn step(r: f64, next: usize) -> Step {
        Step {
            state: vec![0],
            action: vec![0],
            reward_samples: vec![r],
            next_state: vec![next],
            s: 0,
            a: 0,
            s_next: next,
        }
    }

    fn estimators_with(rewards: &[f64], nexts: &[usize]) -> Estimators {
        let spec = single_cell_spec(RewardDist::Bernoulli(0.5), vec![0.5, 0.5]);
        let mut est = Estimators::new(&spec);
        for (&r, &x) in rewards.iter().zip(nexts) {
            est.update_step(&step(r, x)).unwrap();
        }
        est
    }

    #[test]
    fn empty_trajectory_is_noop() {
        let mut est = estimators_with(&[], &[]);
        let before = est.digest();
        est.update_from_episode(&Trajectory::default()).unwrap();
        assert_eq!(est.digest(), before);
    }

    #[test]
    fn one_step_update() {
        let est = estimators_with(&[0.5], &[1]);
        assert_eq!(est.reward_count(0, 0), 1);
        assert_eq!(est.rewards[0].sum_r[0], 0.5);
        assert_eq!(est.rewards[0].sum_r2[0], 0.25);
    }

    #[test]
    fn two_steps_give_half_row() {
        let est = estimators_with(&[0.0, 0.0], &[0, 1]);
        assert_eq!(est.transitions[0].joint_row(0), &[1, 1]);
        assert_eq!(est.transition_row(0, 0).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn reward_mean_examples() {
        assert_eq!(estimators_with(&[], &[]).reward_mean(0, 0), 1.0);
        assert_eq!(estimators_with(&[0.5, 1.0], &[0, 0]).reward_mean(0, 0), 0.75);
        assert_eq!(estimators_with(&[0.0; 3], &[0; 3]).reward_mean(0, 0), 0.0);
    }

    #[test]
    fn reward_variance_examples() {
        let v = |r: &[f64]| estimators_with(r, &vec![0; r.len()]).reward_variance(0, 0).unwrap();
        assert_eq!(v(&[0.0, 1.0, 1.0, 0.0]), 0.25);
        assert_eq!(v(&[0.7]), 0.0);
        assert_eq!(v(&[0.5, 0.5]), 0.0);
        assert_eq!(
            estimators_with(&[], &[]).reward_variance(0, 0),
            Err(Error::UndefinedEstimate { factor: 0, cell: 0 })
        );
    }

    #[test]
    fn transition_row_examples() {
        let est = estimators_with(&[0.0; 4], &[0, 0, 1, 0]);
        assert_eq!(est.transition_row(0, 0).unwrap(), vec![0.75, 0.25]);
        let est = estimators_with(&[0.0], &[0]);
        assert_eq!(est.transition_row(0, 0).unwrap(), vec![1.0, 0.0]);
        assert!(estimators_with(&[], &[]).transition_row(0, 0).is_err());
    }

    #[test]
    fn mismatched_step_is_data_error() {
        let mut est = estimators_with(&[], &[]);
        let mut bad = step(0.0, 0);
        bad.next_state = vec![2];
        let traj = Trajectory {
            initial_state: vec![0],
            steps: vec![step(1.0, 0), bad],
        };
        assert!(matches!(est.update_from_episode(&traj), Err(Error::Data(_))));
        assert_eq!(est.reward_count(0, 0), 0);
    }

    #[test]
    fn csv_dump() {
        let est = estimators_with(&[1.0], &[0]);
        assert_eq!(est.counts_csv(), "scope_id,cell_index,count\nr0,0,1\np0,0,1\n");
    }

    #[test]
    fn statistical_consistency() {
        let row = vec![0.2, 0.3, 0.5];
        let spec = single_cell_spec(RewardDist::Bernoulli(0.35), row.clone());
        let sim = Simulator::new(&spec);
        let rng = CounterRng::new(2024);
        let mut est = Estimators::new(&spec);
        for k in 0..100_000 {
            est.update_step(&sim.step(0, 0, &rng, k, 0)).unwrap();
        }
        assert!((est.reward_mean(0, 0) - 0.35).abs() < 0.01);
        let l1: f64 = est
            .transition_row(0, 0)
            .unwrap()
            .iter()
            .zip(&row)
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(l1 < 0.02);
        let var = est.reward_variance(0, 0).unwrap();
        assert!((0.0..=0.25).contains(&var));
    }

    proptest! {
        #[test]
        fn merge_order_does_not_matter(seed_a in 0u64..1000, seed_b in 0u64..1000) {
            let spec = crate::env::gen_production_line(3, 2, 2, 4, 3).unwrap();
            let policy = PolicyTable::constant(4, 8, 1);
            let e1 = run_episode(&spec, &policy, &[0, 0, 0], seed_a, 0).unwrap();
            let e2 = run_episode(&spec, &policy, &[1, 0, 1], seed_b, 1).unwrap();
            let mut x = Estimators::new(&spec);
            x.update_from_episode(&e1).unwrap();
            x.update_from_episode(&e2).unwrap();
            let mut y = Estimators::new(&spec);
            y.update_from_episode(&e2).unwrap();
            y.update_from_episode(&e1).unwrap();
            for (a, b) in x.rewards.iter().zip(&y.rewards) {
                prop_assert_eq!(&a.counter, &b.counter);
                for (p, q) in a.sum_r.iter().zip(&b.sum_r) {
                    prop_assert!((p - q).abs() < 1e-12);
                }
            }
            prop_assert_eq!(&x.transitions, &y.transitions);
        }

        #[test]
        fn variance_stays_in_range(samples in prop::collection::vec(0.0f64..=1.0, 1..50)) {
            let est = estimators_with(&samples, &vec![0; samples.len()]);
            let v = est.reward_variance(0, 0).unwrap();
            prop_assert!((0.0..=0.25 + 1e-12).contains(&v));
        }
    }
}
