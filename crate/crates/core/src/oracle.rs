//! Ground truth from the true model: optimal values, policy evaluation,
//! return variances and numerical checks of the variance and estimation-error
//! identities.
//!
//! Everything here works on the fully expanded kernel `Π_j P_j(s'_j | ·)`,
//! deliberately avoiding the factored shortcuts the planner uses, so the two
//! can be checked against each other.

use crate::env::PolicyTable;
use crate::error::{Error, Result};
use crate::index::decode_into;
use crate::model::{FmdpSpec, RewardDist};
use crate::planner::{argmax_lowest, factored_backup, nested_variance};

/// Upper limit on enumerated outcome atoms for the brute-force variance.
pub const MAX_ENUMERATION_ATOMS: u128 = 10_000_000;

/// The true model expanded to flat states.
#[derive(Debug, Clone)]
pub struct Oracle<'a> {
    spec: &'a FmdpSpec,
    num_states: usize,
    num_actions: usize,
    /// `R̄(s,a)` per flat pair.
    reward: Vec<f64>,
    /// Per flat pair, the factor rows (kept for the nested variances).
    factor_rows: Vec<Vec<Vec<f64>>>,
    /// Per flat pair, the joint next-state distribution over flat states.
    kernel: Vec<Vec<f64>>,
    /// Per flat pair, each reward factor's distribution.
    reward_dists: Vec<Vec<RewardDist>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactValues {
    pub horizon: usize,
    pub num_states: usize,
    pub num_actions: usize,
    /// `(H+1) x S`, zero-based steps, last row zero.
    pub v_star: Vec<f64>,
    /// `H x S x A`.
    pub q_star: Vec<f64>,
    pub pi_star: PolicyTable,
}

impl ExactValues {
    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v_star[h * self.num_states + s]
    }

    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q_star[(h * self.num_states + s) * self.num_actions + a]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainVariance {
    /// `(H+1) x S` variance of the return-to-go.
    pub omega2: Vec<f64>,
    /// `H x S x n` nested transition variances of `V^π_{h+1}`.
    pub sigma2_p: Vec<f64>,
    /// `H x S x m` reward variances along the policy.
    pub sigma2_r: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceBound {
    pub lhs: f64,
    pub bound: f64,
    /// `ω²` at the first step and the start state.
    pub omega2_start: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionCheck {
    /// `|P̂ - P|_1` against `Σ_i |P̂_i - P_i|_1`.
    pub l1_lhs: f64,
    pub l1_rhs: f64,
    /// `|(P̂ - P)V|` against the per-factor terms plus cross terms.
    pub value_lhs: f64,
    pub value_rhs: f64,
    pub ok: bool,
}

impl<'a> Oracle<'a> {
    pub fn new(spec: &'a FmdpSpec) -> Self {
        let layout = spec.layout();
        let num_states = spec.num_states();
        let num_actions = spec.num_actions();
        let state_dims = &spec.dims.state_dims;
        let mut next = vec![0; state_dims.len()];
        let mut reward = Vec::new();
        let mut factor_rows = Vec::new();
        let mut kernel = Vec::new();
        let mut reward_dists = Vec::new();
        for sa in 0..num_states * num_actions {
            reward.push(spec.mean_reward(&layout, sa));
            let rows = spec.rows(&layout, sa);
            kernel.push(
                (0..num_states)
                    .map(|sp| {
                        decode_into(sp, state_dims, &mut next);
                        rows.iter().zip(&next).map(|(r, &x)| r[x]).product()
                    })
                    .collect(),
            );
            factor_rows.push(rows.into_iter().map(<[f64]>::to_vec).collect());
            reward_dists.push(
                spec.rewards
                    .iter()
                    .zip(layout.reward_cells(sa))
                    .map(|(rf, &c)| rf.table[c])
                    .collect(),
            );
        }
        Self {
            spec,
            num_states,
            num_actions,
            reward,
            factor_rows,
            kernel,
            reward_dists,
        }
    }

    pub fn spec(&self) -> &FmdpSpec {
        self.spec
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Joint next-state distribution of flat pair `sa`.
    pub fn kernel(&self, sa: usize) -> &[f64] {
        &self.kernel[sa]
    }

    /// `R̄(s,a)` of flat pair `sa`.
    pub fn mean_reward(&self, sa: usize) -> f64 {
        self.reward[sa]
    }

    fn pair(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    fn expect(&self, sa: usize, v: &[f64]) -> f64 {
        self.kernel[sa].iter().zip(v).map(|(p, x)| p * x).sum()
    }

    pub fn optimal_values(&self) -> ExactValues {
        let horizon = self.spec.horizon;
        let (s_count, a_count) = (self.num_states, self.num_actions);
        let mut v_star = vec![0.0; (horizon + 1) * s_count];
        let mut q_star = vec![0.0; horizon * s_count * a_count];
        let mut pi_star = PolicyTable::constant(horizon, s_count, 0);
        for h in (0..horizon).rev() {
            let (now, next) = v_star.split_at_mut((h + 1) * s_count);
            let next = &next[..s_count];
            for s in 0..s_count {
                let base = (h * s_count + s) * a_count;
                for a in 0..a_count {
                    let sa = self.pair(s, a);
                    q_star[base + a] = self.reward[sa] + self.expect(sa, next);
                }
                let best = argmax_lowest(&q_star[base..base + a_count]);
                pi_star.set(h, s, best);
                now[h * s_count + s] = q_star[base + best];
            }
        }
        ExactValues {
            horizon,
            num_states: s_count,
            num_actions: a_count,
            v_star,
            q_star,
            pi_star,
        }
    }

    fn check_policy(&self, policy: &PolicyTable) -> Result<()> {
        let ok = policy.horizon() == self.spec.horizon
            && policy.num_states() == self.num_states
            && policy.as_slice().iter().all(|&a| a < self.num_actions);
        if ok {
            Ok(())
        } else {
            Err(Error::Config("policy table does not match the spec".into()))
        }
    }

    /// `(H+1) x S` values of a deterministic policy.
    pub fn evaluate(&self, policy: &PolicyTable) -> Result<Vec<f64>> {
        self.check_policy(policy)?;
        let horizon = self.spec.horizon;
        let s_count = self.num_states;
        let mut v = vec![0.0; (horizon + 1) * s_count];
        for h in (0..horizon).rev() {
            let (now, next) = v.split_at_mut((h + 1) * s_count);
            let next = &next[..s_count];
            for s in 0..s_count {
                let sa = self.pair(s, policy.action(h, s).expect("checked"));
                now[h * s_count + s] = self.reward[sa] + self.expect(sa, next);
            }
        }
        Ok(v)
    }

    /// Return variances through the one-step recursion
    /// `ω²_h = P ω²_{h+1} + Σ_i σ²_{P,i} + (1/m²) Σ_i σ²_{R,i}`.
    pub fn chain_variance_recursive(&self, policy: &PolicyTable) -> Result<ChainVariance> {
        let v = self.evaluate(policy)?;
        let horizon = self.spec.horizon;
        let s_count = self.num_states;
        let n = self.spec.n();
        let m = self.spec.m();
        let mut omega2 = vec![0.0; (horizon + 1) * s_count];
        let mut sigma2_p = vec![0.0; horizon * s_count * n];
        let mut sigma2_r = vec![0.0; horizon * s_count * m];
        for h in (0..horizon).rev() {
            let (now, next) = omega2.split_at_mut((h + 1) * s_count);
            let next = &next[..s_count];
            let v_next = &v[(h + 1) * s_count..(h + 2) * s_count];
            for s in 0..s_count {
                let sa = self.pair(s, policy.action(h, s).expect("checked"));
                let rows: Vec<&[f64]> = self.factor_rows[sa].iter().map(Vec::as_slice).collect();
                let sp = nested_variance(&rows, v_next)?;
                let sr: Vec<f64> = self.reward_dists[sa].iter().map(RewardDist::variance).collect();
                let total = self.expect(sa, next)
                    + sp.iter().sum::<f64>()
                    + sr.iter().sum::<f64>() / (m * m) as f64;
                now[h * s_count + s] = total;
                sigma2_p[(h * s_count + s) * n..][..n].copy_from_slice(&sp);
                sigma2_r[(h * s_count + s) * m..][..m].copy_from_slice(&sr);
            }
        }
        Ok(ChainVariance {
            omega2,
            sigma2_p,
            sigma2_r,
        })
    }

    /// Worst-case number of enumerated atoms from a first-step state.
    fn atoms_per_start(&self) -> u128 {
        let reward_branching: u128 = self
            .spec
            .rewards
            .iter()
            .map(|rf| {
                rf.table
                    .iter()
                    .map(|d| d.outcomes().len() as u128)
                    .max()
                    .unwrap_or(1)
            })
            .product();
        let per_step = reward_branching.saturating_mul(self.num_states as u128);
        (0..self.spec.horizon).fold(1u128, |acc, _| acc.saturating_mul(per_step))
    }

    /// Return variances by enumerating every trajectory and reward outcome.
    pub fn chain_variance_bruteforce(&self, policy: &PolicyTable) -> Result<Vec<f64>> {
        self.check_policy(policy)?;
        let atoms = self.atoms_per_start().saturating_mul(self.num_states as u128);
        if atoms > MAX_ENUMERATION_ATOMS {
            return Err(Error::EnumerationTooLarge {
                atoms,
                limit: MAX_ENUMERATION_ATOMS,
            });
        }
        let horizon = self.spec.horizon;
        let s_count = self.num_states;
        let m = self.spec.m() as f64;
        let mut omega2 = vec![0.0; (horizon + 1) * s_count];
        for h in 0..horizon {
            for s in 0..s_count {
                let walker = Walker {
                    oracle: self,
                    policy,
                    m,
                };
                let mut mean = 0.0;
                walker.visit(h, s, 1.0, 0.0, &mut |p, j| mean += p * j);
                let mut var = 0.0;
                walker.visit(h, s, 1.0, 0.0, &mut |p, j| var += p * (j - mean) * (j - mean));
                omega2[h * s_count + s] = var;
            }
        }
        Ok(omega2)
    }

    /// Visitation probabilities `w_h(s)` of a policy from the start state.
    pub fn occupancy(&self, policy: &PolicyTable) -> Result<Vec<f64>> {
        self.check_policy(policy)?;
        let horizon = self.spec.horizon;
        let s_count = self.num_states;
        let mut w = vec![0.0; horizon * s_count];
        w[self.spec.start_index()] = 1.0;
        for h in 0..horizon.saturating_sub(1) {
            for s in 0..s_count {
                let mass = w[h * s_count + s];
                if mass == 0.0 {
                    continue;
                }
                let sa = self.pair(s, policy.action(h, s).expect("checked"));
                for (sp, &p) in self.kernel[sa].iter().enumerate() {
                    w[(h + 1) * s_count + sp] += mass * p;
                }
            }
        }
        Ok(w)
    }

    /// Occupancy-weighted per-step variance, compared with `H²` and with
    /// the return variance at the start state.
    pub fn total_variance_bound_check(&self, policy: &PolicyTable) -> Result<VarianceBound> {
        let cv = self.chain_variance_recursive(policy)?;
        let w = self.occupancy(policy)?;
        let n = self.spec.n();
        let m = self.spec.m();
        let lhs: f64 = w
            .iter()
            .enumerate()
            .map(|(hs, &mass)| {
                let sp: f64 = cv.sigma2_p[hs * n..(hs + 1) * n].iter().sum();
                let sr: f64 = cv.sigma2_r[hs * m..(hs + 1) * m].iter().sum();
                mass * (sp + sr / (m * m) as f64)
            })
            .sum();
        let h = self.spec.horizon as f64;
        let bound = h * h;
        Ok(VarianceBound {
            lhs,
            bound,
            omega2_start: cv.omega2[self.spec.start_index()],
            ok: lhs <= bound + 1e-9,
        })
    }
}

struct Walker<'o, 'a> {
    oracle: &'o Oracle<'a>,
    policy: &'o PolicyTable,
    m: f64,
}

impl Walker<'_, '_> {
    /// Calls `leaf(prob, return)` for every outcome path from `(h, s)`.
    fn visit(&self, h: usize, s: usize, prob: f64, acc: f64, leaf: &mut dyn FnMut(f64, f64)) {
        let o = self.oracle;
        if h == o.spec.horizon {
            leaf(prob, acc);
            return;
        }
        let sa = o.pair(s, self.policy.action(h, s).expect("checked"));
        let outcomes: Vec<Vec<(f64, f64)>> =
            o.reward_dists[sa].iter().map(RewardDist::outcomes).collect();
        self.rewards(&outcomes, 0, prob, 0.0, &mut |p, r| {
            for (sp, &q) in o.kernel[sa].iter().enumerate() {
                if q > 0.0 {
                    self.visit(h + 1, sp, p * q, acc + r / self.m, leaf);
                }
            }
        });
    }

    fn rewards(
        &self,
        outcomes: &[Vec<(f64, f64)>],
        i: usize,
        prob: f64,
        sum: f64,
        then: &mut dyn FnMut(f64, f64),
    ) {
        if i == outcomes.len() {
            then(prob, sum);
            return;
        }
        for &(value, p) in &outcomes[i] {
            if p > 0.0 {
                self.rewards(outcomes, i + 1, prob * p, sum + value, then);
            }
        }
    }
}

pub fn exact_optimal_values(spec: &FmdpSpec) -> ExactValues {
    Oracle::new(spec).optimal_values()
}

pub fn evaluate_policy(spec: &FmdpSpec, policy: &PolicyTable) -> Result<Vec<f64>> {
    Oracle::new(spec).evaluate(policy)
}

pub fn chain_variance_recursive(spec: &FmdpSpec, policy: &PolicyTable) -> Result<ChainVariance> {
    Oracle::new(spec).chain_variance_recursive(policy)
}

pub fn chain_variance_bruteforce(spec: &FmdpSpec, policy: &PolicyTable) -> Result<Vec<f64>> {
    Oracle::new(spec).chain_variance_bruteforce(policy)
}

pub fn total_variance_bound_check(spec: &FmdpSpec, policy: &PolicyTable) -> Result<VarianceBound> {
    Oracle::new(spec).total_variance_bound_check(policy)
}

fn joint_distribution(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().fold(vec![1.0], |acc, row| {
        acc.iter()
            .flat_map(|&p| row.iter().map(move |&x| p * x))
            .collect()
    })
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Checks both estimation-error decompositions for one pair of factor-row
/// sets and a value vector over the joint next state.
pub fn decomposition_inequality_check(
    rows_hat: &[Vec<f64>],
    rows_true: &[Vec<f64>],
    v: &[f64],
) -> Result<DecompositionCheck> {
    if rows_hat.len() != rows_true.len() {
        return Err(Error::Length {
            expected: rows_true.len(),
            actual: rows_hat.len(),
        });
    }
    for (hat, tru) in rows_hat.iter().zip(rows_true) {
        if hat.len() != tru.len() {
            return Err(Error::Length {
                expected: tru.len(),
                actual: hat.len(),
            });
        }
    }
    let joint_hat = joint_distribution(rows_hat);
    let joint_true = joint_distribution(rows_true);
    if v.len() != joint_true.len() {
        return Err(Error::Length {
            expected: joint_true.len(),
            actual: v.len(),
        });
    }

    let deltas: Vec<Vec<f64>> = rows_hat
        .iter()
        .zip(rows_true)
        .map(|(hat, tru)| hat.iter().zip(tru).map(|(a, b)| a - b).collect())
        .collect();
    let delta_l1: Vec<f64> = deltas.iter().map(|d| d.iter().map(|x| x.abs()).sum()).collect();

    let l1_lhs = l1(&joint_hat, &joint_true);
    let l1_rhs: f64 = delta_l1.iter().sum();

    let value_lhs = joint_hat
        .iter()
        .zip(&joint_true)
        .zip(v)
        .map(|((p, q), x)| (p - q) * x)
        .sum::<f64>()
        .abs();
    let v_inf = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let mut value_rhs = 0.0;
    for i in 0..deltas.len() {
        let mixed: Vec<&[f64]> = (0..deltas.len())
            .map(|j| if j == i { deltas[i].as_slice() } else { rows_true[j].as_slice() })
            .collect();
        value_rhs += factored_backup(&mixed, v)?.abs();
        for j in 0..deltas.len() {
            if j != i {
                value_rhs += v_inf * delta_l1[i] * delta_l1[j];
            }
        }
    }
    let ok = l1_lhs <= l1_rhs + 1e-12 && value_lhs <= value_rhs + 1e-12;
    Ok(DecompositionCheck {
        l1_lhs,
        l1_rhs,
        value_lhs,
        value_rhs,
        ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FactorDims, RewardFactor, Scope, TransitionFactor};
    use approx::assert_abs_diff_eq;

    fn one_state(horizon: usize, table: Vec<RewardDist>) -> FmdpSpec {
        let a = table.len();
        FmdpSpec {
            dims: FactorDims::new(vec![1], vec![a]),
            horizon,
            initial_state: vec![],
            rewards: vec![RewardFactor {
                scope: Scope::new(vec![1]),
                table,
            }],
            transitions: vec![TransitionFactor {
                scope: Scope::new(vec![1]),
                rows: vec![vec![1.0]; a],
            }],
        }
    }

    #[test]
    fn optimal_value_examples() {
        let spec = one_state(1, vec![RewardDist::Deterministic(0.7)]);
        assert_abs_diff_eq!(exact_optimal_values(&spec).v(0, 0), 0.7);

        let bandit = one_state(3, vec![RewardDist::Bernoulli(0.4), RewardDist::Bernoulli(0.9)]);
        let ev = exact_optimal_values(&bandit);
        assert_abs_diff_eq!(ev.v(0, 0), 2.7, epsilon = 1e-12);
        for h in 0..=3 {
            assert!(ev.v(h, 0) <= (3 - h) as f64 + 1e-12);
        }
        let worst = PolicyTable::constant(3, 1, 0);
        assert_abs_diff_eq!(evaluate_policy(&bandit, &worst).unwrap()[0], 1.2, epsilon = 1e-12);
        assert_eq!(evaluate_policy(&bandit, &ev.pi_star).unwrap(), ev.v_star);
    }

    #[test]
    fn single_arm_variance() {
        let spec = one_state(1, vec![RewardDist::Bernoulli(0.5)]);
        let policy = PolicyTable::constant(1, 1, 0);
        assert_eq!(chain_variance_recursive(&spec, &policy).unwrap().omega2[0], 0.25);
        assert_eq!(chain_variance_bruteforce(&spec, &policy).unwrap()[0], 0.25);
    }

    #[test]
    fn deterministic_chain_has_no_variance() {
        let spec = one_state(4, vec![RewardDist::Deterministic(0.3)]);
        let policy = PolicyTable::constant(4, 1, 0);
        assert!(chain_variance_recursive(&spec, &policy)
            .unwrap()
            .omega2
            .iter()
            .all(|&w| w == 0.0));
        assert!(chain_variance_bruteforce(&spec, &policy).unwrap().iter().all(|&w| w == 0.0));
        let check = total_variance_bound_check(&spec, &policy).unwrap();
        assert_eq!(check.lhs, 0.0);
        assert!(check.ok);
    }

    #[test]
    fn uniform_two_factor_last_step() {
        // Last-step rewards (0,1,2,3)/3 make V^π_2 a scaled copy of the
        // worked backup example.
        let values = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        let spec = FmdpSpec {
            dims: FactorDims::new(vec![2, 2], vec![1]),
            horizon: 2,
            initial_state: vec![],
            rewards: vec![RewardFactor {
                scope: Scope::new(vec![0, 1]),
                table: values.iter().map(|&v| RewardDist::Deterministic(v)).collect(),
            }],
            transitions: vec![
                TransitionFactor {
                    scope: Scope::new(vec![0]),
                    rows: vec![vec![0.5, 0.5]; 2],
                },
                TransitionFactor {
                    scope: Scope::new(vec![1]),
                    rows: vec![vec![0.5, 0.5]; 2],
                },
            ],
        };
        let policy = PolicyTable::constant(2, 4, 0);
        let cv = chain_variance_recursive(&spec, &policy).unwrap();
        let sp: f64 = cv.sigma2_p[..2].iter().sum();
        // Var of V = (0,1,2,3)/3 under the uniform product is 1.25 / 9.
        assert_abs_diff_eq!(sp, 1.25 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn enumeration_guard() {
        let spec = one_state(30, vec![RewardDist::Bernoulli(0.5)]);
        let policy = PolicyTable::constant(30, 1, 0);
        assert!(matches!(
            chain_variance_bruteforce(&spec, &policy),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn decomposition_trivial_cases() {
        let rows = vec![vec![0.3, 0.7], vec![0.5, 0.25, 0.25]];
        let v = [1.0, -2.0, 0.5, 3.0, 0.0, 1.5];
        let same = decomposition_inequality_check(&rows, &rows, &v).unwrap();
        assert_eq!(same.value_lhs, 0.0);
        assert_eq!(same.value_rhs, 0.0);
        assert!(same.ok);

        let hat = vec![vec![0.2, 0.3, 0.5]];
        let tru = vec![vec![0.4, 0.4, 0.2]];
        let single = decomposition_inequality_check(&hat, &tru, &[1.0, 2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(single.value_lhs, single.value_rhs, epsilon = 1e-15);
        assert_abs_diff_eq!(single.l1_lhs, single.l1_rhs, epsilon = 1e-15);
    }
}
