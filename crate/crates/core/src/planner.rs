//! Finite-horizon optimistic planning over a factored empirical model.
//!
//! Steps are zero-based: `h = 0` is the first decision, and value tables hold
//! `H + 1` rows with the last one fixed at zero.

use crate::bonus::{
    cb_reward_bernstein, cb_reward_hoeffding, cb_transition_bernstein, cb_transition_hoeffding,
    phi, LogFactors,
};
use crate::env::PolicyTable;
use crate::error::{Error, Result};
use crate::estimation::Estimators;
use crate::index::cardinality;
use crate::model::FmdpSpec;

/// Slack allowed when checking that an upper value dominates a lower one.
pub const GAP_TOLERANCE: f64 = 1e-9;

/// Partial expectations of a value vector under a product of factor rows.
///
/// `level(k)` has one entry per assignment of the first `k` next-state
/// factors and holds the expectation of `V` over the remaining factors, so
/// `level(n)` is `V` itself and `level(0)` is the single number `PV`.
#[derive(Debug, Clone)]
pub struct PrefixCache {
    levels: Vec<Vec<f64>>,
}

impl PrefixCache {
    pub fn new(rows: &[&[f64]], v: &[f64]) -> Result<Self> {
        let dims: Vec<usize> = rows.iter().map(|r| r.len()).collect();
        let total = cardinality(&dims);
        if v.len() != total {
            return Err(Error::Length {
                expected: total,
                actual: v.len(),
            });
        }
        let n = rows.len();
        let mut levels = vec![Vec::new(); n + 1];
        levels[n] = v.to_vec();
        for i in (0..n).rev() {
            let row = rows[i];
            let width = row.len();
            let next = &levels[i + 1];
            let contracted: Vec<f64> = next
                .chunks_exact(width)
                .map(|chunk| chunk.iter().zip(row).map(|(w, p)| w * p).sum())
                .collect();
            levels[i] = contracted;
        }
        Ok(Self { levels })
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    pub fn expectation(&self) -> f64 {
        self.levels[0][0]
    }
}

/// Probabilities of every prefix `s'[0..k]`, for `k = 0..=n`.
fn prefix_probabilities(rows: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(rows.len() + 1);
    out.push(vec![1.0]);
    for row in rows {
        let prev = out.last().expect("non-empty");
        let next: Vec<f64> = prev
            .iter()
            .flat_map(|&p| row.iter().map(move |&x| p * x))
            .collect();
        out.push(next);
    }
    out
}

/// `Σ_{s'} Π_j rows_j(s'[j]) V(s')`.
pub fn factored_backup(rows: &[&[f64]], v: &[f64]) -> Result<f64> {
    Ok(PrefixCache::new(rows, v)?.expectation())
}

/// Per-factor nested variances: factor `i` contributes the variance over
/// `s'[i]` of the partial expectation given `s'[0..=i]`, averaged over the
/// prefix `s'[0..i]`. They add up to the variance of `V(s')`.
pub fn nested_variance(rows: &[&[f64]], v: &[f64]) -> Result<Vec<f64>> {
    let cache = PrefixCache::new(rows, v)?;
    Ok(nested_variance_from(rows, &cache, &prefix_probabilities(rows)))
}

fn nested_variance_from(rows: &[&[f64]], cache: &PrefixCache, prefix: &[Vec<f64>]) -> Vec<f64> {
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let outer = cache.level(i);
            let inner = cache.level(i + 1);
            prefix[i]
                .iter()
                .zip(outer)
                .zip(inner.chunks_exact(row.len()))
                .map(|((&pp, &mean), chunk)| {
                    let var: f64 = chunk
                        .iter()
                        .zip(*row)
                        .map(|(w, p)| p * (w - mean) * (w - mean))
                        .sum();
                    pp * var
                })
                .sum()
        })
        .collect()
}

/// Per-factor expected squared partial expectation of `V̄ - V̲`: entry `i`
/// averages the square of the gap's expectation given `s'[0..=i]`.
pub fn u_term(rows: &[&[f64]], v_bar: &[f64], v_under: &[f64]) -> Result<Vec<f64>> {
    if v_bar.len() != v_under.len() {
        return Err(Error::Length {
            expected: v_bar.len(),
            actual: v_under.len(),
        });
    }
    let gap = value_gap(v_bar, v_under)?;
    let cache = PrefixCache::new(rows, &gap)?;
    Ok(u_term_from(&cache, &prefix_probabilities(rows)))
}

fn value_gap(v_bar: &[f64], v_under: &[f64]) -> Result<Vec<f64>> {
    v_bar
        .iter()
        .zip(v_under)
        .enumerate()
        .map(|(s, (&hi, &lo))| {
            let g = hi - lo;
            if g < -GAP_TOLERANCE {
                Err(Error::Invariant(format!(
                    "upper value {hi} below lower value {lo} at state {s}"
                )))
            } else {
                Ok(g.max(0.0))
            }
        })
        .collect()
}

fn u_term_from(cache: &PrefixCache, prefix: &[Vec<f64>]) -> Vec<f64> {
    (1..prefix.len())
        .map(|k| {
            prefix[k]
                .iter()
                .zip(cache.level(k))
                .map(|(p, w)| p * w * w)
                .sum()
        })
        .collect()
}

/// Everything the planner knows about one flat state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairModel {
    /// Whether every scope counter touched by the pair is positive.
    pub known: bool,
    /// `(1/m) Σ_i R̂_i`.
    pub reward: f64,
    pub rows: Vec<Vec<f64>>,
    pub reward_counts: Vec<u64>,
    pub reward_variances: Vec<f64>,
    pub transition_counts: Vec<u64>,
}

impl PairModel {
    pub fn row_refs(&self) -> Vec<&[f64]> {
        self.rows.iter().map(Vec::as_slice).collect()
    }
}

/// A snapshot of the model the planner sweeps over.
#[derive(Debug, Clone)]
pub struct PlanningModel {
    pub horizon: usize,
    pub state_dims: Vec<usize>,
    pub num_actions: usize,
    pub pairs: Vec<PairModel>,
}

impl PlanningModel {
    /// Empirical model. Pairs outside the known set carry no rows.
    pub fn from_estimators(est: &Estimators, horizon: usize) -> Self {
        let dims = est.dims();
        let layout = est.layout();
        let m = est.m() as f64;
        let pairs = (0..dims.num_pairs())
            .map(|sa| {
                let rcells = layout.reward_cells(sa);
                let tcells = layout.transition_cells(sa);
                let known = est.is_known(sa);
                let reward = rcells
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| est.reward_mean(i, c))
                    .sum::<f64>()
                    / m;
                let (rows, reward_variances) = if known {
                    (
                        tcells
                            .iter()
                            .enumerate()
                            .map(|(j, &c)| est.transition_row(j, c).expect("known cell"))
                            .collect(),
                        rcells
                            .iter()
                            .enumerate()
                            .map(|(i, &c)| est.reward_variance(i, c).expect("known cell"))
                            .collect(),
                    )
                } else {
                    (Vec::new(), Vec::new())
                };
                PairModel {
                    known,
                    reward,
                    rows,
                    reward_counts: rcells.iter().enumerate().map(|(i, &c)| est.reward_count(i, c)).collect(),
                    reward_variances,
                    transition_counts: tcells
                        .iter()
                        .enumerate()
                        .map(|(j, &c)| est.transition_count(j, c))
                        .collect(),
                }
            })
            .collect();
        Self {
            horizon,
            state_dims: dims.state_dims.clone(),
            num_actions: dims.num_actions(),
            pairs,
        }
    }

    /// The true model, every pair known, with zero counts.
    pub fn from_spec(spec: &FmdpSpec) -> Self {
        let layout = spec.layout();
        let pairs = (0..spec.dims.num_pairs())
            .map(|sa| PairModel {
                known: true,
                reward: spec.mean_reward(&layout, sa),
                rows: spec.rows(&layout, sa).into_iter().map(<[f64]>::to_vec).collect(),
                reward_counts: vec![0; spec.m()],
                reward_variances: spec
                    .rewards
                    .iter()
                    .zip(layout.reward_cells(sa))
                    .map(|(rf, &c)| rf.table[c].variance())
                    .collect(),
                transition_counts: vec![0; spec.n()],
            })
            .collect();
        Self {
            horizon: spec.horizon,
            state_dims: spec.dims.state_dims.clone(),
            num_actions: spec.num_actions(),
            pairs,
        }
    }

    pub fn num_states(&self) -> usize {
        cardinality(&self.state_dims)
    }
}

/// Inputs a bonus may look at for one known pair at one step.
#[derive(Debug, Clone, Copy)]
pub struct BonusContext<'a> {
    pub pair: &'a PairModel,
    pub horizon: usize,
    pub state_dims: &'a [usize],
    pub v_bar_next: &'a [f64],
    pub v_under_next: &'a [f64],
}

pub trait Bonus {
    fn bonus(&self, ctx: &BonusContext<'_>) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroBonus;

impl Bonus for ZeroBonus {
    fn bonus(&self, _: &BonusContext<'_>) -> Result<f64> {
        Ok(0.0)
    }
}

/// The same bonus for every pair and step; handy for hand-checked examples.
#[derive(Debug, Clone, Copy)]
pub struct ConstantBonus(pub f64);

impl Bonus for ConstantBonus {
    fn bonus(&self, _: &BonusContext<'_>) -> Result<f64> {
        Ok(self.0)
    }
}

/// `(1/m) Σ_i sqrt(2 L^R_i / N_i) + Σ_j CB^P_j` with the φ cross terms.
#[derive(Debug, Clone)]
pub struct HoeffdingBonus {
    pub logf: LogFactors,
}

impl Bonus for HoeffdingBonus {
    fn bonus(&self, ctx: &BonusContext<'_>) -> Result<f64> {
        let pair = ctx.pair;
        let h = ctx.horizon as f64;
        let l = self.logf.l_p;
        let reward: f64 = pair
            .reward_counts
            .iter()
            .zip(&self.logf.l_r)
            .map(|(&n, &lr)| cb_reward_hoeffding(lr, n))
            .sum::<Result<f64>>()?
            / pair.reward_counts.len() as f64;
        let phis: Vec<f64> = ctx
            .state_dims
            .iter()
            .zip(&pair.transition_counts)
            .map(|(&sj, &n)| phi(sj, l, n))
            .collect::<Result<_>>()?;
        let transition: f64 = pair
            .transition_counts
            .iter()
            .enumerate()
            .map(|(i, &n)| cb_transition_hoeffding(h, l, n, &phis, i))
            .sum::<Result<f64>>()?;
        Ok(reward + transition)
    }
}

/// Variance-aware bonus using empirical reward variances, nested transition
/// variances of `V̄_{h+1}` and the u-terms of `V̄_{h+1} - V̲_{h+1}`.
#[derive(Debug, Clone)]
pub struct BernsteinBonus {
    pub logf: LogFactors,
}

impl Bonus for BernsteinBonus {
    fn bonus(&self, ctx: &BonusContext<'_>) -> Result<f64> {
        let pair = ctx.pair;
        let h = ctx.horizon as f64;
        let l = self.logf.l_p;
        let reward: f64 = pair
            .reward_counts
            .iter()
            .zip(&pair.reward_variances)
            .zip(&self.logf.l_r)
            .map(|((&n, &s2), &lr)| cb_reward_bernstein(s2, lr, n))
            .sum::<Result<f64>>()?
            / pair.reward_counts.len() as f64;

        let rows = pair.row_refs();
        let prefix = prefix_probabilities(&rows);
        let sigma2 = nested_variance_from(&rows, &PrefixCache::new(&rows, ctx.v_bar_next)?, &prefix);
        let gap = value_gap(ctx.v_bar_next, ctx.v_under_next)?;
        let u = u_term_from(&PrefixCache::new(&rows, &gap)?, &prefix);
        let transition: f64 = (0..rows.len())
            .map(|i| {
                cb_transition_bernstein(
                    sigma2[i],
                    u[i],
                    h,
                    l,
                    i,
                    ctx.state_dims,
                    &pair.transition_counts,
                )
            })
            .sum::<Result<f64>>()?;
        Ok(reward + transition)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    /// `(H+1) x S`, row `H` is zero.
    pub v_bar: Vec<f64>,
    pub v_under: Vec<f64>,
    /// `H x S x A`, clipped at `H`.
    pub q_bar: Vec<f64>,
    /// `H x S x A` bonus per pair; NaN outside the known set.
    pub bonus: Vec<f64>,
    pub policy: PolicyTable,
}

impl ValueTables {
    pub fn v_bar(&self, h: usize, s: usize) -> f64 {
        self.v_bar[h * self.num_states + s]
    }

    pub fn v_under(&self, h: usize, s: usize) -> f64 {
        self.v_under[h * self.num_states + s]
    }

    pub fn q_bar(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q_bar[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn bonus(&self, h: usize, s: usize, a: usize) -> f64 {
        self.bonus[(h * self.num_states + s) * self.num_actions + a]
    }
}

/// Index of the largest value, preferring the lowest index on ties.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Backward optimistic/pessimistic sweep with a pluggable bonus.
///
/// Unknown pairs get `Q̄ = H`, and a state whose greedy action is unknown gets
/// `V̲ = 0`.
pub fn sweep(model: &PlanningModel, bonus: &dyn Bonus) -> Result<ValueTables> {
    let horizon = model.horizon;
    let s_count = model.num_states();
    let a_count = model.num_actions;
    let hf = horizon as f64;
    let mut v_bar = vec![0.0; (horizon + 1) * s_count];
    let mut v_under = vec![0.0; (horizon + 1) * s_count];
    let mut q_bar = vec![hf; horizon * s_count * a_count];
    let mut bonus_table = vec![f64::NAN; horizon * s_count * a_count];
    let mut policy = PolicyTable::constant(horizon, s_count, 0);

    let mut lower = vec![0.0; a_count];
    for h in (0..horizon).rev() {
        let (now_bar, next_bar) = v_bar.split_at_mut((h + 1) * s_count);
        let (now_under, next_under) = v_under.split_at_mut((h + 1) * s_count);
        let next_bar = &next_bar[..s_count];
        let next_under = &next_under[..s_count];
        for s in 0..s_count {
            let base = (h * s_count + s) * a_count;
            for a in 0..a_count {
                let pair = &model.pairs[s * a_count + a];
                if !pair.known {
                    lower[a] = f64::NAN;
                    continue;
                }
                let rows = pair.row_refs();
                let cb = bonus.bonus(&BonusContext {
                    pair,
                    horizon,
                    state_dims: &model.state_dims,
                    v_bar_next: next_bar,
                    v_under_next: next_under,
                })?;
                let pv_bar = factored_backup(&rows, next_bar)?;
                let pv_under = factored_backup(&rows, next_under)?;
                q_bar[base + a] = hf.min(pair.reward + cb + pv_bar);
                bonus_table[base + a] = cb;
                lower[a] = pair.reward - cb + pv_under;
            }
            let best = argmax_lowest(&q_bar[base..base + a_count]);
            policy.set(h, s, best);
            let hi = q_bar[base + best];
            let lo = if model.pairs[s * a_count + best].known {
                lower[best].max(0.0)
            } else {
                0.0
            };
            debug_assert!(lo <= hi + GAP_TOLERANCE && hi <= hf);
            now_bar[h * s_count + s] = hi;
            now_under[h * s_count + s] = lo;
        }
    }
    Ok(ValueTables {
        horizon,
        num_states: s_count,
        num_actions: a_count,
        v_bar,
        v_under,
        q_bar,
        bonus: bonus_table,
        policy,
    })
}

pub fn sweep_hoeffding(model: &PlanningModel, logf: &LogFactors) -> Result<ValueTables> {
    sweep(model, &HoeffdingBonus { logf: logf.clone() })
}

pub fn sweep_bernstein(model: &PlanningModel, logf: &LogFactors) -> Result<ValueTables> {
    sweep(model, &BernsteinBonus { logf: logf.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FactorDims, RewardDist, RewardFactor, Scope, TransitionFactor};
    use approx::assert_abs_diff_eq;

    const HALF: [f64; 2] = [0.5, 0.5];

    #[test]
    fn backup_examples() {
        let rows: [&[f64]; 2] = [&HALF, &HALF];
        assert_abs_diff_eq!(factored_backup(&rows, &[0.0, 1.0, 2.0, 3.0]).unwrap(), 1.5);
        let one_hot: [&[f64]; 2] = [&[0.0, 1.0], &[1.0, 0.0]];
        assert_eq!(factored_backup(&one_hot, &[0.0, 1.0, 2.0, 3.0]).unwrap(), 2.0);
        let rows3: [&[f64]; 2] = [&[0.2, 0.8], &[0.1, 0.6, 0.3]];
        assert_abs_diff_eq!(factored_backup(&rows3, &[4.0; 6]).unwrap(), 4.0, epsilon = 1e-12);
        assert!(factored_backup(&rows, &[0.0; 3]).is_err());
    }

    #[test]
    fn nested_variance_examples() {
        let rows: [&[f64]; 2] = [&HALF, &HALF];
        let v = [0.0, 1.0, 2.0, 3.0];
        let s2 = nested_variance(&rows, &v).unwrap();
        assert_abs_diff_eq!(s2[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s2[1], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s2[0] + s2[1], 3.5 - 1.5 * 1.5, epsilon = 1e-15);
        assert_eq!(nested_variance(&rows, &[2.0; 4]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn u_term_examples() {
        let rows: [&[f64]; 2] = [&HALF, &HALF];
        let v = [0.3, 0.1, 0.8, 0.5];
        assert_eq!(u_term(&rows, &v, &v).unwrap(), vec![0.0, 0.0]);
        let lo = [0.0; 4];
        let u = u_term(&rows, &[1.5; 4], &lo).unwrap();
        assert_abs_diff_eq!(u[0], 2.25);
        assert_abs_diff_eq!(u[1], 2.25);
        let u = u_term(&rows, &[0.0, 0.0, 2.0, 2.0], &lo).unwrap();
        assert_eq!(u, vec![2.0, 2.0]);
        assert!(matches!(
            u_term(&rows, &[0.0, 0.0, 0.0, 0.0], &[0.0, 0.1, 0.0, 0.0]),
            Err(Error::Invariant(_))
        ));
    }

    fn single_pair_model(horizon: usize, reward: f64) -> PlanningModel {
        PlanningModel {
            horizon,
            state_dims: vec![1],
            num_actions: 1,
            pairs: vec![PairModel {
                known: true,
                reward,
                rows: vec![vec![1.0]],
                reward_counts: vec![1],
                reward_variances: vec![0.0],
                transition_counts: vec![1],
            }],
        }
    }

    #[test]
    fn constant_bonus_recursion() {
        let t = sweep(&single_pair_model(2, 0.5), &ConstantBonus(0.3)).unwrap();
        assert_abs_diff_eq!(t.q_bar(1, 0, 0), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(t.q_bar(0, 0, 0), 1.6, epsilon = 1e-15);

        let t = sweep(&single_pair_model(1, 0.5), &ConstantBonus(0.2)).unwrap();
        assert_abs_diff_eq!(t.v_bar(0, 0), 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(t.v_under(0, 0), 0.3, epsilon = 1e-15);
    }

    fn toy_spec() -> FmdpSpec {
        FmdpSpec {
            dims: FactorDims::new(vec![2, 2], vec![2]),
            horizon: 3,
            initial_state: vec![],
            rewards: vec![RewardFactor {
                scope: Scope::new(vec![0, 2]),
                table: vec![
                    RewardDist::Bernoulli(0.2),
                    RewardDist::Bernoulli(0.6),
                    RewardDist::Deterministic(0.3),
                    RewardDist::Bernoulli(0.9),
                ],
            }],
            transitions: vec![
                TransitionFactor {
                    scope: Scope::new(vec![0, 2]),
                    rows: vec![vec![0.5, 0.5], vec![0.1, 0.9], vec![0.7, 0.3], vec![0.4, 0.6]],
                },
                TransitionFactor {
                    scope: Scope::new(vec![1, 2]),
                    rows: vec![vec![0.5, 0.5], vec![0.2, 0.8], vec![1.0, 0.0], vec![0.3, 0.7]],
                },
            ],
        }
    }

    #[test]
    fn no_data_means_fully_optimistic() {
        let spec = toy_spec();
        let est = Estimators::new(&spec);
        let model = PlanningModel::from_estimators(&est, spec.horizon);
        let logf = LogFactors::new(&spec, 10, 0.1).unwrap();
        for t in [sweep_hoeffding(&model, &logf).unwrap(), sweep_bernstein(&model, &logf).unwrap()] {
            assert!(t.q_bar.iter().all(|&q| q == 3.0));
            assert!(t.v_under[..3 * 4].iter().all(|&v| v == 0.0));
            assert!(t.policy.as_slice().iter().all(|&a| a == 0));
        }
    }

    #[test]
    fn exact_model_zero_bonus_collapses() {
        let model = PlanningModel::from_spec(&toy_spec());
        let t = sweep(&model, &ZeroBonus).unwrap();
        assert_eq!(t.v_bar, t.v_under);
        assert!(t.v_bar.iter().all(|&v| (0.0..=3.0).contains(&v)));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax_lowest(&[2.0, 2.0]), 0);
    }
}
