//! Reinforcement learning with knapsack constraints.
//!
//! Costs and budgets live on a grid of multiples of `1/q` and are stored as
//! integer units. The learner plans over the augmented state `(s, b)` where
//! `b` is the remaining budget. An episode stops as soon as a step drives
//! some coordinate of `b` strictly below zero; that step's reward is still
//! collected, and reaching exactly zero lets the episode continue.

use serde::{Deserialize, Serialize};

use crate::bonus::{cb_reward_bernstein, cb_transition_bernstein};
use crate::env::{PolicyTable, Simulator};
use crate::error::{Error, Result};
use crate::index::{cardinality, decode_into, encode_unchecked};
use crate::model::{validate_spec, FmdpSpec};
use crate::oracle::Oracle;
use crate::planner::{argmax_lowest, factored_backup, nested_variance, u_term, GAP_TOLERANCE};
use crate::rng::{sample_categorical, CounterRng};

/// Largest number of constraints accepted.
pub const MAX_CONSTRAINTS: usize = 2;
/// Largest budget, in grid units, accepted per constraint.
pub const MAX_BUDGET_UNITS: u32 = 64;

const GRID_TOLERANCE: f64 = 1e-9;

fn to_units(value: f64, q: u32, what: &str) -> Result<u32> {
    let scaled = value * q as f64;
    let rounded = scaled.round();
    if value < 0.0 || (scaled - rounded).abs() > GRID_TOLERANCE {
        return Err(Error::Data(format!("{what} {value} is not a non-negative multiple of 1/{q}")));
    }
    Ok(rounded as u32)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetGrid {
    pub q: u32,
    /// Budgets in grid units.
    pub budgets: Vec<u32>,
}

impl BudgetGrid {
    pub fn new(q: u32, budgets: &[f64]) -> Result<Self> {
        if q == 0 {
            return Err(Error::Config("q must be at least 1".into()));
        }
        let budgets = budgets
            .iter()
            .map(|&b| to_units(b, q, "budget"))
            .collect::<Result<Vec<_>>>()?;
        if budgets.len() > MAX_CONSTRAINTS {
            return Err(Error::Config(format!(
                "at most {MAX_CONSTRAINTS} constraints are supported, got {}",
                budgets.len()
            )));
        }
        if let Some(&b) = budgets.iter().find(|&&b| b > MAX_BUDGET_UNITS) {
            return Err(Error::Config(format!(
                "budget of {b} units exceeds the limit of {MAX_BUDGET_UNITS}"
            )));
        }
        Ok(Self { q, budgets })
    }

    pub fn d(&self) -> usize {
        self.budgets.len()
    }

    /// Number of remaining-budget values per constraint, `B_i q + 1`.
    pub fn levels(&self) -> Vec<usize> {
        self.budgets.iter().map(|&b| b as usize + 1).collect()
    }

    pub fn num_points(&self) -> usize {
        cardinality(&self.levels())
    }

    pub fn encode(&self, b: &[u32]) -> usize {
        encode_unchecked(b.iter().map(|&x| x as usize), &self.levels())
    }

    pub fn decode(&self, idx: usize) -> Vec<u32> {
        let mut out = vec![0; self.d()];
        decode_into(idx, &self.levels(), &mut out);
        out.into_iter().map(|x| x as u32).collect()
    }

    /// Index of the full budget.
    pub fn start(&self) -> usize {
        self.encode(&self.budgets)
    }

    pub fn to_value(&self, units: u32) -> f64 {
        units as f64 / self.q as f64
    }
}

/// Per-constraint cost distributions over `{0, 1/q, .., max_units/q}` for
/// every flat state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub max_units: Vec<u32>,
    /// `rows[i][sa]` has `max_units[i] + 1` entries.
    pub rows: Vec<Vec<Vec<f64>>>,
}

impl CostModel {
    /// Builds the model from `(value, probability)` supports, indexed as
    /// `supports[i][sa]`.
    pub fn from_supports(q: u32, supports: &[Vec<Vec<(f64, f64)>>]) -> Result<Self> {
        let mut max_units = Vec::with_capacity(supports.len());
        let mut rows = Vec::with_capacity(supports.len());
        for per_pair in supports {
            let unit_supports = per_pair
                .iter()
                .map(|support| {
                    support
                        .iter()
                        .map(|&(v, p)| Ok((to_units(v, q, "cost")?, p)))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let top = unit_supports
                .iter()
                .flatten()
                .map(|&(u, _)| u)
                .max()
                .unwrap_or(0);
            let constraint_rows = unit_supports
                .iter()
                .enumerate()
                .map(|(sa, support)| {
                    let mut row = vec![0.0; top as usize + 1];
                    for &(u, p) in support {
                        if p < 0.0 {
                            return Err(Error::Data(format!("negative cost probability at pair {sa}")));
                        }
                        row[u as usize] += p;
                    }
                    let total: f64 = row.iter().sum();
                    if (total - 1.0).abs() > 1e-12 {
                        return Err(Error::Data(format!("cost probabilities at pair {sa} sum to {total}")));
                    }
                    Ok(row)
                })
                .collect::<Result<Vec<_>>>()?;
            max_units.push(top);
            rows.push(constraint_rows);
        }
        Ok(Self { max_units, rows })
    }

    /// Cost zero everywhere for `d` constraints.
    pub fn zero(d: usize, num_pairs: usize) -> Self {
        Self {
            max_units: vec![0; d],
            rows: vec![vec![vec![1.0]; num_pairs]; d],
        }
    }

    pub fn d(&self) -> usize {
        self.rows.len()
    }

    /// Sizes of the cost grids, `max_units + 1` per constraint.
    pub fn sizes(&self) -> Vec<usize> {
        self.max_units.iter().map(|&u| u as usize + 1).collect()
    }
}

/// A base MDP together with budgets and costs.
#[derive(Debug, Clone)]
pub struct AugmentedFmdp {
    pub base: FmdpSpec,
    pub grid: BudgetGrid,
    pub costs: CostModel,
    /// `next_budget[b * C + c]`: the budget index after paying cost combo `c`
    /// from budget index `b`, or `None` when some coordinate goes negative.
    next_budget: Vec<Option<usize>>,
}

pub fn build_augmented(base: FmdpSpec, grid: BudgetGrid, costs: CostModel) -> Result<AugmentedFmdp> {
    let report = validate_spec(&base);
    if !report.is_ok() {
        return Err(Error::InvalidSpec(report.to_string()));
    }
    if costs.d() != grid.d() {
        return Err(Error::Data(format!(
            "{} cost models for {} budgets",
            costs.d(),
            grid.d()
        )));
    }
    let pairs = base.dims.num_pairs();
    if costs.rows.iter().any(|r| r.len() != pairs) {
        return Err(Error::Data(format!("cost model must cover all {pairs} state-action pairs")));
    }
    let cost_sizes = costs.sizes();
    let combos = cardinality(&cost_sizes);
    let mut next_budget = Vec::with_capacity(grid.num_points() * combos);
    let mut c = vec![0usize; cost_sizes.len()];
    for b_idx in 0..grid.num_points() {
        let b = grid.decode(b_idx);
        for c_idx in 0..combos {
            decode_into(c_idx, &cost_sizes, &mut c);
            let after: Option<Vec<u32>> = b
                .iter()
                .zip(&c)
                .map(|(&bi, &ci)| bi.checked_sub(ci as u32))
                .collect();
            next_budget.push(after.map(|nb| grid.encode(&nb)));
        }
    }
    Ok(AugmentedFmdp {
        base,
        grid,
        costs,
        next_budget,
    })
}

impl AugmentedFmdp {
    pub fn num_base_states(&self) -> usize {
        self.base.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.base.num_actions()
    }

    pub fn num_states(&self) -> usize {
        self.num_base_states() * self.grid.num_points()
    }

    /// Flat augmented index of `(s, b)`.
    pub fn state_index(&self, s: usize, b_idx: usize) -> usize {
        s * self.grid.num_points() + b_idx
    }

    /// Dimensions of the factored view: the base state and one factor per
    /// budget coordinate.
    pub fn factor_dims(&self) -> Vec<usize> {
        std::iter::once(self.num_base_states())
            .chain(self.grid.levels())
            .collect()
    }

    fn combos(&self) -> usize {
        cardinality(&self.costs.sizes())
    }

    pub fn next_budget(&self, b_idx: usize, c_idx: usize) -> Option<usize> {
        self.next_budget[b_idx * self.combos() + c_idx]
    }

    /// Joint cost distribution of a pair over all cost combos.
    fn joint_cost(&self, sa: usize) -> Vec<f64> {
        self.costs.rows.iter().fold(vec![1.0], |acc, rows| {
            acc.iter()
                .flat_map(|&p| rows[sa].iter().map(move |&x| p * x))
                .collect()
        })
    }
}

/// What happens to the remaining budget after one step.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetStep {
    /// Budget after paying; `None` once some coordinate went negative.
    pub remaining: Option<Vec<u32>>,
    pub reward: f64,
    pub terminated: bool,
}

/// Pays `cost` out of `budget`. The reward is collected either way; the
/// episode ends only when a coordinate would drop strictly below zero.
pub fn rlwk_step_semantics(budget: &[u32], cost: &[u32], reward: f64) -> BudgetStep {
    let remaining: Option<Vec<u32>> = budget
        .iter()
        .zip(cost)
        .map(|(&b, &c)| b.checked_sub(c))
        .collect();
    BudgetStep {
        terminated: remaining.is_none(),
        remaining,
        reward,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedValues {
    pub horizon: usize,
    /// Augmented state count `S * Π(B_i q + 1)`.
    pub num_states: usize,
    pub num_actions: usize,
    /// `(H+1) x S_aug`.
    pub v: Vec<f64>,
    /// `H x S_aug x A`.
    pub q: Vec<f64>,
    pub policy: PolicyTable,
}

impl AugmentedValues {
    pub fn value(&self, h: usize, aug: usize) -> f64 {
        self.v[h * self.num_states + aug]
    }

    pub fn q_value(&self, h: usize, aug: usize, a: usize) -> f64 {
        self.q[(h * self.num_states + aug) * self.num_actions + a]
    }
}

/// Exact backward induction over `(s, b)`, optionally restricted to a fixed
/// policy.
fn augmented_backup(aug: &AugmentedFmdp, policy: Option<&PolicyTable>) -> AugmentedValues {
    let oracle = Oracle::new(&aug.base);
    let horizon = aug.base.horizon;
    let s_count = aug.num_base_states();
    let a_count = aug.num_actions();
    let points = aug.grid.num_points();
    let aug_states = s_count * points;
    let combos = aug.combos();
    let joint_costs: Vec<Vec<f64>> = (0..s_count * a_count).map(|sa| aug.joint_cost(sa)).collect();

    let mut v = vec![0.0; (horizon + 1) * aug_states];
    let mut q = vec![0.0; horizon * aug_states * a_count];
    let mut pol = PolicyTable::constant(horizon, aug_states, 0);
    for h in (0..horizon).rev() {
        let (now, next) = v.split_at_mut((h + 1) * aug_states);
        let next = &next[..aug_states];
        for s in 0..s_count {
            for b in 0..points {
                let x = s * points + b;
                let base = (h * aug_states + x) * a_count;
                let actions: Vec<usize> = match policy {
                    Some(p) => vec![p.action(h, x).expect("policy covers the augmented states")],
                    None => (0..a_count).collect(),
                };
                for &a in &actions {
                    let sa = s * a_count + a;
                    let pc = &joint_costs[sa];
                    let mut total = oracle.mean_reward(sa);
                    let mut future = 0.0;
                    for (sp, &p) in oracle.kernel(sa).iter().enumerate() {
                        let mut inner = 0.0;
                        for (c, &w) in pc.iter().enumerate().take(combos) {
                            if let Some(nb) = aug.next_budget[b * combos + c] {
                                inner += w * next[sp * points + nb];
                            }
                        }
                        future += p * inner;
                    }
                    total += future;
                    q[base + a] = total;
                }
                let best = match policy {
                    Some(_) => actions[0],
                    None => argmax_lowest(&q[base..base + a_count]),
                };
                pol.set(h, x, best);
                now[h * aug_states + x] = q[base + best];
            }
        }
    }
    AugmentedValues {
        horizon,
        num_states: aug_states,
        num_actions: a_count,
        v,
        q,
        policy: pol,
    }
}

/// Optimal budget-aware values and policy. A violated budget is terminal
/// with value zero and is not part of the augmented state space.
pub fn exact_augmented_dp(aug: &AugmentedFmdp) -> AugmentedValues {
    augmented_backup(aug, None)
}

/// Values of a fixed budget-aware policy, `(H+1) x S_aug`.
pub fn evaluate_augmented_policy(aug: &AugmentedFmdp, policy: &PolicyTable) -> Result<Vec<f64>> {
    let ok = policy.horizon() == aug.base.horizon
        && policy.num_states() == aug.num_states()
        && policy.as_slice().iter().all(|&a| a < aug.num_actions());
    if !ok {
        return Err(Error::Config("policy does not match the augmented MDP".into()));
    }
    Ok(augmented_backup(aug, Some(policy)).v)
}

/// Empirical model keyed by flat `(s, a)`.
#[derive(Debug, Clone)]
struct PairCounts {
    s_count: usize,
    cost_sizes: Vec<usize>,
    n: Vec<u64>,
    sum_r: Vec<f64>,
    sum_r2: Vec<f64>,
    next: Vec<u64>,
    cost: Vec<Vec<u64>>,
}

impl PairCounts {
    fn new(pairs: usize, s_count: usize, cost_sizes: Vec<usize>) -> Self {
        Self {
            s_count,
            n: vec![0; pairs],
            sum_r: vec![0.0; pairs],
            sum_r2: vec![0.0; pairs],
            next: vec![0; pairs * s_count],
            cost: cost_sizes.iter().map(|&k| vec![0; pairs * k]).collect(),
            cost_sizes,
        }
    }

    fn record(&mut self, sa: usize, reward: f64, s_next: usize, cost: &[u32]) {
        self.n[sa] += 1;
        self.sum_r[sa] += reward;
        self.sum_r2[sa] += reward * reward;
        self.next[sa * self.s_count + s_next] += 1;
        for (i, &c) in cost.iter().enumerate() {
            self.cost[i][sa * self.cost_sizes[i] + c as usize] += 1;
        }
    }

    fn rows(&self, sa: usize) -> Vec<Vec<f64>> {
        let n = self.n[sa] as f64;
        let mut rows = vec![self.next[sa * self.s_count..(sa + 1) * self.s_count]
            .iter()
            .map(|&c| c as f64 / n)
            .collect::<Vec<f64>>()];
        for (i, &k) in self.cost_sizes.iter().enumerate() {
            rows.push(self.cost[i][sa * k..(sa + 1) * k].iter().map(|&c| c as f64 / n).collect());
        }
        rows
    }

    fn mean(&self, sa: usize) -> f64 {
        if self.n[sa] == 0 {
            1.0
        } else {
            self.sum_r[sa] / self.n[sa] as f64
        }
    }

    fn variance(&self, sa: usize) -> f64 {
        let n = self.n[sa] as f64;
        let mean = self.sum_r[sa] / n;
        (self.sum_r2[sa] / n - mean * mean).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlwkConfig {
    pub episodes: usize,
    pub delta: f64,
    pub seed: u64,
}

/// Log factors of the knapsack learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlwkLogFactors {
    /// `ln(2 S A T / delta)`.
    pub l_r: f64,
    /// `ln(2 max(d,1) S A T / delta) + Σ_i ln(max(B_i q, 1))`.
    pub l_p: f64,
}

impl RlwkLogFactors {
    pub fn new(aug: &AugmentedFmdp, episodes: usize, delta: f64) -> Result<Self> {
        if episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!("delta {delta} not in (0,1)")));
        }
        let t = (episodes * aug.base.horizon) as f64;
        let sa = (aug.num_base_states() * aug.num_actions()) as f64;
        let d = aug.grid.d().max(1) as f64;
        let budget_term: f64 = aug
            .grid
            .budgets
            .iter()
            .map(|&b| (b.max(1) as f64).ln())
            .sum();
        Ok(Self {
            l_r: (2.0 * sa * t / delta).ln(),
            l_p: (2.0 * d * sa * t / delta).ln() + budget_term,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlwkEpisode {
    pub episode: usize,
    pub regret: f64,
    pub cum_regret: f64,
    pub realized_return: f64,
    /// Cost paid by the steps that left the budget non-negative.
    pub spent_units: Vec<u32>,
    pub budget_terminated: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlwkRecord {
    pub seed: u64,
    pub episodes: Vec<RlwkEpisode>,
    /// Greedy policy planned from all `K` episodes of data.
    pub final_policy: PolicyTable,
}

impl RlwkRecord {
    pub fn cum_regret(&self) -> f64 {
        self.episodes.last().map_or(0.0, |e| e.cum_regret)
    }
}

/// Optimistic and pessimistic tables of the knapsack learner.
#[derive(Debug, Clone, PartialEq)]
pub struct RlwkTables {
    pub v_bar: Vec<f64>,
    pub v_under: Vec<f64>,
    pub policy: PolicyTable,
}

fn plan_rlwk(aug: &AugmentedFmdp, counts: &PairCounts, logf: &RlwkLogFactors) -> Result<RlwkTables> {
    let horizon = aug.base.horizon;
    let hf = horizon as f64;
    let s_count = aug.num_base_states();
    let a_count = aug.num_actions();
    let points = aug.grid.num_points();
    let aug_states = s_count * points;
    let combos = aug.combos();
    let bonus_dims: Vec<usize> = std::iter::once(s_count).chain(counts.cost_sizes.iter().copied()).collect();

    let mut v_bar = vec![0.0; (horizon + 1) * aug_states];
    let mut v_under = vec![0.0; (horizon + 1) * aug_states];
    let mut policy = PolicyTable::constant(horizon, aug_states, 0);
    let rows: Vec<Option<Vec<Vec<f64>>>> = (0..s_count * a_count)
        .map(|sa| (counts.n[sa] > 0).then(|| counts.rows(sa)))
        .collect();

    let mut w_bar = vec![0.0; s_count * combos];
    let mut w_under = vec![0.0; s_count * combos];
    for h in (0..horizon).rev() {
        let (now_bar, next_bar) = v_bar.split_at_mut((h + 1) * aug_states);
        let (now_under, next_under) = v_under.split_at_mut((h + 1) * aug_states);
        let next_bar = &next_bar[..aug_states];
        let next_under = &next_under[..aug_states];
        for s in 0..s_count {
            for b in 0..points {
                for sp in 0..s_count {
                    for c in 0..combos {
                        let (hi, lo) = match aug.next_budget[b * combos + c] {
                            Some(nb) => (next_bar[sp * points + nb], next_under[sp * points + nb]),
                            None => (0.0, 0.0),
                        };
                        w_bar[sp * combos + c] = hi;
                        w_under[sp * combos + c] = lo;
                    }
                }
                let mut q = vec![hf; a_count];
                let mut lower = vec![0.0; a_count];
                for a in 0..a_count {
                    let sa = s * a_count + a;
                    let Some(r) = &rows[sa] else { continue };
                    let refs: Vec<&[f64]> = r.iter().map(Vec::as_slice).collect();
                    let n = counts.n[sa];
                    let sigma2 = nested_variance(&refs, &w_bar)?;
                    let u = u_term(&refs, &w_bar, &w_under)?;
                    let all_n = vec![n; refs.len()];
                    let mut cb = cb_reward_bernstein(counts.variance(sa), logf.l_r, n)?;
                    for j in 0..refs.len() {
                        cb += cb_transition_bernstein(sigma2[j], u[j], hf, logf.l_p, j, &bonus_dims, &all_n)?;
                    }
                    let mean = counts.mean(sa);
                    q[a] = hf.min(mean + cb + factored_backup(&refs, &w_bar)?);
                    lower[a] = (mean - cb + factored_backup(&refs, &w_under)?).max(0.0);
                }
                let best = argmax_lowest(&q);
                let x = s * points + b;
                policy.set(h, x, best);
                now_bar[h * aug_states + x] = q[best];
                now_under[h * aug_states + x] = if rows[s * a_count + best].is_some() {
                    lower[best]
                } else {
                    0.0
                };
                debug_assert!(now_under[h * aug_states + x] <= q[best] + GAP_TOLERANCE);
            }
        }
    }
    Ok(RlwkTables {
        v_bar,
        v_under,
        policy,
    })
}

/// Bernstein-style optimistic learner over the budget-augmented MDP, with
/// every estimate keyed by the base pair `(s, a)`.
pub fn run_rlwk_bf(aug: &AugmentedFmdp, cfg: &RlwkConfig) -> Result<RlwkRecord> {
    let logf = RlwkLogFactors::new(aug, cfg.episodes, cfg.delta)?;
    let base = &aug.base;
    let sim = Simulator::new(base);
    let rng = CounterRng::new(cfg.seed);
    let s_count = aug.num_base_states();
    let a_count = aug.num_actions();
    let d = aug.grid.d();
    let stream0 = (base.n() + base.m()) as u64;
    let s1 = base.start_index();
    let start = aug.state_index(s1, aug.grid.start());
    let v_star = exact_augmented_dp(aug).value(0, start);

    let mut counts = PairCounts::new(s_count * a_count, s_count, aug.costs.sizes());
    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut cum = 0.0;
    for k in 0..cfg.episodes {
        let tables = plan_rlwk(aug, &counts, &logf)?;
        let regret = v_star - evaluate_augmented_policy(aug, &tables.policy)?[start];
        if regret < -1e-12 {
            return Err(Error::Invariant(format!("negative regret {regret} in episode {}", k + 1)));
        }
        cum += regret;

        let mut s = s1;
        let mut budget = aug.grid.budgets.clone();
        let mut spent = vec![0u32; d];
        let mut ret = 0.0;
        let mut terminated = false;
        let mut steps = 0;
        for h in 0..base.horizon {
            let a = tables
                .policy
                .action(h, aug.state_index(s, aug.grid.encode(&budget)))
                .expect("planned policy covers every state");
            let step = sim.step(s, a, &rng, k as u64, h);
            let sa = s * a_count + a;
            let cost: Vec<u32> = (0..d)
                .map(|i| {
                    let u = rng.uniform(k as u64, h as u64, stream0 + i as u64);
                    sample_categorical(&aug.costs.rows[i][sa], u) as u32
                })
                .collect();
            let outcome = rlwk_step_semantics(&budget, &cost, step.reward());
            counts.record(sa, step.reward(), step.s_next, &cost);
            ret += outcome.reward;
            steps += 1;
            match outcome.remaining {
                Some(rem) => {
                    for (acc, &c) in spent.iter_mut().zip(&cost) {
                        *acc += c;
                    }
                    budget = rem;
                    s = step.s_next;
                }
                None => {
                    terminated = true;
                    break;
                }
            }
        }
        if spent.iter().zip(&aug.grid.budgets).any(|(s, b)| s > b) {
            return Err(Error::Invariant(format!(
                "episode {} spent {spent:?} beyond the budget",
                k + 1
            )));
        }
        episodes.push(RlwkEpisode {
            episode: k + 1,
            regret,
            cum_regret: cum,
            realized_return: ret,
            spent_units: spent,
            budget_terminated: terminated,
            steps,
        });
    }
    let final_policy = plan_rlwk(aug, &counts, &logf)?.policy;
    Ok(RlwkRecord {
        seed: cfg.seed,
        episodes,
        final_policy,
    })
}

/// JSON form of a knapsack instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlwkInstanceFile {
    pub base: FmdpSpec,
    pub q: u32,
    pub budgets: Vec<f64>,
    /// `costs[i][sa]` lists `[value, probability]` pairs.
    pub costs: Vec<Vec<Vec<(f64, f64)>>>,
}

impl RlwkInstanceFile {
    pub fn build(&self) -> Result<AugmentedFmdp> {
        let grid = BudgetGrid::new(self.q, &self.budgets)?;
        let costs = CostModel::from_supports(self.q, &self.costs)?;
        build_augmented(self.base.clone(), grid, costs)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(e.to_string()))
    }
}

pub mod fig1 {
    //! The two small knapsack instances with budget 0.5.
    //!
    //! Both use five states and two actions. Rewards attach to the action
    //! taken in a state, so a reward "in" a state is paid when leaving it.
    //! Action index 0 is `a1` and index 1 is `a2`.

    use super::RlwkInstanceFile;
    use crate::model::{FactorDims, FmdpSpec, RewardDist, RewardFactor, Scope, TransitionFactor};

    fn one_hot(target: usize) -> Vec<f64> {
        let mut row = vec![0.0; 5];
        row[target] = 1.0;
        row
    }

    fn flat_spec(horizon: usize, moves: [[usize; 2]; 5], rewards: [f64; 5]) -> FmdpSpec {
        FmdpSpec {
            dims: FactorDims::new(vec![5], vec![2]),
            horizon,
            initial_state: vec![],
            rewards: vec![RewardFactor {
                scope: Scope::new(vec![0, 1]),
                table: (0..10).map(|sa| RewardDist::Deterministic(rewards[sa / 2])).collect(),
            }],
            transitions: vec![TransitionFactor {
                scope: Scope::new(vec![0, 1]),
                rows: (0..10).map(|sa| one_hot(moves[sa / 2][sa % 2])).collect(),
            }],
        }
    }

    /// From `s0`, `a1` costs 0.5 and leads to `s1` (reward 0.5); `a2` costs
    /// 0 or 1 with equal odds and leads to `s2` (reward 0.8). `s3` and `s4`
    /// absorb. Horizon 2.
    pub fn instance1() -> RlwkInstanceFile {
        let base = flat_spec(2, [[1, 2], [3, 3], [4, 4], [3, 3], [4, 4]], [0.0, 0.5, 0.8, 0.0, 0.0]);
        let mut costs = vec![vec![(0.0, 1.0)]; 10];
        costs[0] = vec![(0.5, 1.0)];
        costs[1] = vec![(0.0, 0.5), (1.0, 0.5)];
        RlwkInstanceFile {
            base,
            q: 2,
            budgets: vec![0.5],
            costs: vec![costs],
        }
    }

    /// From `s0` both actions lead to `s1` at cost 0 or 1 with equal odds.
    /// In `s1`, `a1` costs 0 and leads to `s2` (reward 0.5); `a2` costs 0.5
    /// and leads to `s3` (reward 1). `s4` absorbs. Horizon 3.
    pub fn instance2() -> RlwkInstanceFile {
        let base = flat_spec(3, [[1, 1], [2, 3], [4, 4], [4, 4], [4, 4]], [0.0, 0.0, 0.5, 1.0, 0.0]);
        let mut costs = vec![vec![(0.0, 1.0)]; 10];
        costs[0] = vec![(0.0, 0.5), (1.0, 0.5)];
        costs[1] = vec![(0.0, 0.5), (1.0, 0.5)];
        costs[3] = vec![(0.5, 1.0)];
        RlwkInstanceFile {
            base,
            q: 2,
            budgets: vec![0.5],
            costs: vec![costs],
        }
    }
}
