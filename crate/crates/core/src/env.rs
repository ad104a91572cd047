//! Seeded episodic simulation and benchmark generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::index::{decode_into, encode_unchecked};
use crate::model::{
    FactorDims, FmdpSpec, Layout, RewardDist, RewardFactor, Scope, TransitionFactor,
};
use crate::rng::{sample_categorical, CounterRng};

/// Deterministic non-stationary policy: one flat action per `(step, state)`.
/// Steps are zero-based here (`h = 0` is the first step of an episode).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyTable {
    horizon: usize,
    num_states: usize,
    actions: Vec<usize>,
}

impl PolicyTable {
    pub fn new(horizon: usize, num_states: usize, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != horizon * num_states {
            return Err(Error::Config(format!(
                "policy table has {} entries, expected {}x{}",
                actions.len(),
                horizon,
                num_states
            )));
        }
        Ok(Self {
            horizon,
            num_states,
            actions,
        })
    }

    pub fn constant(horizon: usize, num_states: usize, action: usize) -> Self {
        Self {
            horizon,
            num_states,
            actions: vec![action; horizon * num_states],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn action(&self, h: usize, s: usize) -> Option<usize> {
        if h < self.horizon && s < self.num_states {
            Some(self.actions[h * self.num_states + s])
        } else {
            None
        }
    }

    pub fn set(&mut self, h: usize, s: usize, a: usize) {
        self.actions[h * self.num_states + s] = a;
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.actions
    }

    /// FNV-1a hash of the action table, used to fingerprint policies in logs.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &a in &self.actions {
            for byte in (a as u64).to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: Vec<usize>,
    pub action: Vec<usize>,
    pub reward_samples: Vec<f64>,
    pub next_state: Vec<usize>,
    /// Flat indices of `state`, `action` and `next_state`.
    pub s: usize,
    pub a: usize,
    pub s_next: usize,
}

impl Step {
    /// Observed total reward `(1/m) Σ r_i`.
    pub fn reward(&self) -> f64 {
        self.reward_samples.iter().sum::<f64>() / self.reward_samples.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub initial_state: Vec<usize>,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(Step::reward).sum()
    }
}

/// Spec plus its cell layout, reused across many episodes.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    spec: &'a FmdpSpec,
    layout: Layout,
}

impl<'a> Simulator<'a> {
    pub fn new(spec: &'a FmdpSpec) -> Self {
        Self {
            spec,
            layout: spec.layout(),
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Samples one step from flat state `s` under flat action `a`. Transition
    /// factor `j` draws from stream `j`, reward factor `i` from stream `n + i`.
    pub fn step(&self, s: usize, a: usize, rng: &CounterRng, episode: u64, h: usize) -> Step {
        let spec = self.spec;
        let dims = &spec.dims;
        let n = spec.n();
        let sa = self.layout.pair(s, a);
        let mut state = vec![0; n];
        decode_into(s, &dims.state_dims, &mut state);
        let mut action = vec![0; dims.action_dims.len()];
        decode_into(a, &dims.action_dims, &mut action);

        let next_state: Vec<usize> = spec
            .transitions
            .iter()
            .zip(self.layout.transition_cells(sa))
            .enumerate()
            .map(|(j, (tf, &c))| sample_categorical(&tf.rows[c], rng.uniform(episode, h as u64, j as u64)))
            .collect();
        let reward_samples = spec
            .rewards
            .iter()
            .zip(self.layout.reward_cells(sa))
            .enumerate()
            .map(|(i, (rf, &c))| rf.table[c].sample(rng.uniform(episode, h as u64, (n + i) as u64)))
            .collect();
        let s_next = encode_unchecked(next_state.iter().copied(), &dims.state_dims);
        Step {
            state,
            action,
            reward_samples,
            next_state,
            s,
            a,
            s_next,
        }
    }

    pub fn run(
        &self,
        policy: &PolicyTable,
        initial_state: &[usize],
        seed: u64,
        episode: u64,
    ) -> Result<Trajectory> {
        let dims = &self.spec.dims;
        if initial_state.len() != dims.n()
            || initial_state.iter().zip(&dims.state_dims).any(|(&x, &d)| x >= d)
        {
            return Err(Error::Config("initial state does not fit the spec".into()));
        }
        let rng = CounterRng::new(seed);
        let num_actions = dims.num_actions();
        let mut s = encode_unchecked(initial_state.iter().copied(), &dims.state_dims);
        let mut steps = Vec::with_capacity(self.spec.horizon);
        for h in 0..self.spec.horizon {
            let a = policy
                .action(h, s)
                .filter(|&a| a < num_actions)
                .ok_or_else(|| Error::Config(format!("policy has no valid action at step {h}, state {s}")))?;
            let step = self.step(s, a, &rng, episode, h);
            s = step.s_next;
            steps.push(step);
        }
        Ok(Trajectory {
            initial_state: initial_state.to_vec(),
            steps,
        })
    }
}

pub fn run_episode(
    spec: &FmdpSpec,
    policy: &PolicyTable,
    initial_state: &[usize],
    seed: u64,
    episode: u64,
) -> Result<Trajectory> {
    Simulator::new(spec).run(policy, initial_state, seed, episode)
}

fn simplex_row(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    let mut row: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // Push the rounding residue into the largest entry so the row sums to 1.
    let residue = 1.0 - row.iter().sum::<f64>();
    let max = (0..len)
        .max_by(|&i, &j| row[i].total_cmp(&row[j]))
        .unwrap_or(0);
    row[max] += residue;
    row
}

fn check_scopes(dims: &FactorDims, scopes: &[Scope], what: &str) -> Result<()> {
    let d = dims.d();
    for (i, scope) in scopes.iter().enumerate() {
        let idx = scope.indices();
        if idx.windows(2).any(|w| w[0] >= w[1]) || idx.iter().any(|&x| x >= d) {
            return Err(Error::Argument(format!("{what} scope {i} is invalid for d = {d}")));
        }
    }
    Ok(())
}

/// Random spec with uniform-simplex rows and uniform Bernoulli reward means.
pub fn gen_random_fmdp(
    dims: &FactorDims,
    reward_scopes: &[Scope],
    transition_scopes: &[Scope],
    horizon: usize,
    seed: u64,
) -> Result<FmdpSpec> {
    if dims.state_dims.is_empty() || dims.joint_dims().contains(&0) {
        return Err(Error::Argument("dimensions must be positive and non-empty".into()));
    }
    if reward_scopes.is_empty() {
        return Err(Error::Argument("at least one reward scope is required".into()));
    }
    if transition_scopes.len() != dims.n() {
        return Err(Error::Argument(format!(
            "expected {} transition scopes, got {}",
            dims.n(),
            transition_scopes.len()
        )));
    }
    if horizon == 0 {
        return Err(Error::Argument("horizon must be positive".into()));
    }
    check_scopes(dims, reward_scopes, "reward")?;
    check_scopes(dims, transition_scopes, "transition")?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rewards = reward_scopes
        .iter()
        .map(|scope| RewardFactor {
            scope: scope.clone(),
            table: (0..dims.scope_cardinality(scope))
                .map(|_| RewardDist::Bernoulli(rng.gen::<f64>()))
                .collect(),
        })
        .collect();
    let transitions = transition_scopes
        .iter()
        .enumerate()
        .map(|(j, scope)| TransitionFactor {
            scope: scope.clone(),
            rows: (0..dims.scope_cardinality(scope))
                .map(|_| simplex_row(&mut rng, dims.state_dims[j]))
                .collect(),
        })
        .collect();
    Ok(FmdpSpec {
        dims: dims.clone(),
        horizon,
        initial_state: vec![],
        rewards,
        transitions,
    })
}

/// Scope of machine `i` in a line of `d` machines: its neighbours and itself,
/// plus the single action factor at joint index `d`.
pub fn production_line_scope(i: usize, d: usize) -> Scope {
    let lo = i.saturating_sub(1);
    let hi = (i + 1).min(d - 1);
    Scope::new((lo..=hi).chain(std::iter::once(d)).collect())
}

/// A line of `d` machines where each machine's status and reward depend on
/// its neighbours and the shared action.
pub fn gen_production_line(
    d: usize,
    per_machine_states: usize,
    actions: usize,
    horizon: usize,
    seed: u64,
) -> Result<FmdpSpec> {
    if d < 2 {
        return Err(Error::Argument(format!("production line needs d >= 2, got {d}")));
    }
    if per_machine_states == 0 || actions == 0 {
        return Err(Error::Argument("machine states and actions must be positive".into()));
    }
    let dims = FactorDims::new(vec![per_machine_states; d], vec![actions]);
    let scopes: Vec<Scope> = (0..d).map(|i| production_line_scope(i, d)).collect();
    gen_random_fmdp(&dims, &scopes, &scopes, horizon, seed)
}

/// Binary-tree lower-bound instance.
///
/// Each of the `num_factors` components is a tree of depth
/// `D = log2(states_per_factor)` stored in heap order (root 0, children of
/// `v` at `2v+1` and `2v+2`). An even action index moves to the left child and
/// an odd one to the right child. The last heap slot is unused by the tree
/// and self-loops with zero reward. Leaves self-loop under every action and
/// pay Bernoulli(0.5), except the last leaf under the last action, which pays
/// Bernoulli(0.5 + gap). Interior nodes pay nothing.
pub fn gen_tree_bandit_instance(
    num_factors: usize,
    states_per_factor: usize,
    actions_per_factor: usize,
    gap: f64,
    horizon: usize,
) -> Result<FmdpSpec> {
    if num_factors == 0 {
        return Err(Error::Argument("num_factors must be positive".into()));
    }
    if states_per_factor < 2 || !states_per_factor.is_power_of_two() {
        return Err(Error::Argument(format!(
            "states_per_factor must be a power of two >= 2, got {states_per_factor}"
        )));
    }
    let depth = states_per_factor.trailing_zeros() as usize;
    if 2 * depth > horizon {
        return Err(Error::Argument(format!(
            "tree depth {depth} exceeds half the horizon {horizon}"
        )));
    }
    if actions_per_factor < 2 {
        return Err(Error::Argument("the tree needs at least two actions per factor".into()));
    }
    if !(0.0..=0.5).contains(&gap) {
        return Err(Error::Argument(format!("gap {gap} must lie in [0, 0.5]")));
    }

    let n = num_factors;
    let sp = states_per_factor;
    let ap = actions_per_factor;
    let first_leaf = (1 << (depth - 1)) - 1;
    let dummy = sp - 1;
    let is_leaf = |v: usize| v >= first_leaf && v < dummy;

    let mut rows = Vec::with_capacity(sp * ap);
    let mut table = Vec::with_capacity(sp * ap);
    for v in 0..sp {
        for a in 0..ap {
            let mut row = vec![0.0; sp];
            let target = if v == dummy || is_leaf(v) {
                v
            } else {
                2 * v + 1 + (a % 2)
            };
            row[target] = 1.0;
            rows.push(row);
            table.push(if is_leaf(v) {
                let mean = if v == dummy - 1 && a == ap - 1 { 0.5 + gap } else { 0.5 };
                RewardDist::Bernoulli(mean)
            } else {
                RewardDist::Deterministic(0.0)
            });
        }
    }
    let scope = |i: usize| Scope::new(vec![i, n + i]);
    Ok(FmdpSpec {
        dims: FactorDims::new(vec![sp; n], vec![ap; n]),
        horizon,
        initial_state: vec![],
        rewards: (0..n)
            .map(|i| RewardFactor {
                scope: scope(i),
                table: table.clone(),
            })
            .collect(),
        transitions: (0..n)
            .map(|i| TransitionFactor {
                scope: scope(i),
                rows: rows.clone(),
            })
            .collect(),
    })
}

/// Probability of reaching the rewarding state from a bad state in the
/// parallel hard instance, before the hidden action's boost.
pub const HARD_BASE_PROB: f64 = 0.25;
/// Probability of dropping out of the rewarding state.
pub const HARD_LEAVE_PROB: f64 = 0.25;

/// `num_factors` independent copies of a two-well hard MDP.
///
/// In each component, state 0 is the rewarding state (reward 1) and states
/// `1..states` are bad (reward 0). From a bad state every action reaches state
/// 0 with probability [`HARD_BASE_PROB`] and otherwise stays put; one hidden
/// action per bad state, drawn from `seed`, adds `epsilon`. From state 0 the
/// chain falls back to a uniformly chosen bad state with probability
/// [`HARD_LEAVE_PROB`]. Every component starts in state 1. The total reward
/// is the average over components.
pub fn gen_parallel_hard_mdps(
    num_factors: usize,
    states: usize,
    actions: usize,
    epsilon: f64,
    horizon: usize,
    seed: u64,
) -> Result<FmdpSpec> {
    if num_factors == 0 {
        return Err(Error::Argument("num_factors must be positive".into()));
    }
    if states < 2 || actions == 0 {
        return Err(Error::Argument("need at least two states and one action".into()));
    }
    let boosted = HARD_BASE_PROB + epsilon;
    if !(0.0..=1.0).contains(&boosted) {
        return Err(Error::Argument(format!(
            "epsilon {epsilon} pushes the boosted probability {boosted} out of [0,1]"
        )));
    }

    let n = num_factors;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let transitions = (0..n)
        .map(|i| {
            let hidden: Vec<usize> = (0..states).map(|_| rng.gen_range(0..actions)).collect();
            let mut rows = Vec::with_capacity(states * actions);
            for s in 0..states {
                for a in 0..actions {
                    let mut row = vec![0.0; states];
                    if s == 0 {
                        row[0] = 1.0 - HARD_LEAVE_PROB;
                        for r in row.iter_mut().skip(1) {
                            *r = HARD_LEAVE_PROB / (states - 1) as f64;
                        }
                    } else {
                        let p = if a == hidden[s] { boosted } else { HARD_BASE_PROB };
                        row[0] = p;
                        row[s] = 1.0 - p;
                    }
                    rows.push(row);
                }
            }
            TransitionFactor {
                scope: Scope::new(vec![i, n + i]),
                rows,
            }
        })
        .collect();
    let rewards = (0..n)
        .map(|i| RewardFactor {
            scope: Scope::new(vec![i]),
            table: (0..states)
                .map(|s| RewardDist::Deterministic(if s == 0 { 1.0 } else { 0.0 }))
                .collect(),
        })
        .collect();
    Ok(FmdpSpec {
        dims: FactorDims::new(vec![states; n], vec![actions; n]),
        horizon,
        initial_state: vec![1; n],
        rewards,
        transitions,
    })
}
