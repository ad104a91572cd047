//! Confidence bonuses: log factors, the Hoeffding family and the Bernstein
//! family with its higher-order correction terms.
//!
//! Bonuses are never capped here; the planner clips `Q` at `H` instead.

use crate::error::{Error, Result};
use crate::model::FmdpSpec;

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("delta must lie in (0,1), got {delta}")))
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} must be positive, got {x}")))
    }
}

/// `ln(18 m T |X[Z]| / delta)`.
pub fn log_factor_reward(m: usize, t: f64, scope_card: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    check_positive("m", m as f64)?;
    check_positive("T", t)?;
    check_positive("scope cardinality", scope_card as f64)?;
    Ok((18.0 * m as f64 * t * scope_card as f64 / delta).ln())
}

/// `ln(18 n T S A / delta)`.
pub fn log_factor_transition(n: usize, t: f64, s: usize, a: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    check_positive("n", n as f64)?;
    check_positive("T", t)?;
    check_positive("S", s as f64)?;
    check_positive("A", a as f64)?;
    Ok((18.0 * n as f64 * t * s as f64 * a as f64 / delta).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogFactors {
    /// One factor per reward scope.
    pub l_r: Vec<f64>,
    pub l_p: f64,
    pub delta: f64,
    /// Total planned steps `K * H`.
    pub t: f64,
}

impl LogFactors {
    pub fn new(spec: &FmdpSpec, episodes: usize, delta: f64) -> Result<Self> {
        if episodes == 0 {
            return Err(Error::Argument("episode budget K must be positive".into()));
        }
        let t = (episodes * spec.horizon) as f64;
        let dims = &spec.dims;
        let l_r = spec
            .rewards
            .iter()
            .map(|rf| log_factor_reward(spec.m(), t, dims.scope_cardinality(&rf.scope), delta))
            .collect::<Result<_>>()?;
        let l_p = log_factor_transition(spec.n(), t, dims.num_states(), dims.num_actions(), delta)?;
        Ok(Self { l_r, l_p, delta, t })
    }
}

fn count(n: u64) -> Result<f64> {
    if n == 0 {
        Err(Error::UndefinedBonus)
    } else {
        Ok(n as f64)
    }
}

/// `sqrt(2 L / N)`.
pub fn cb_reward_hoeffding(l: f64, n: u64) -> Result<f64> {
    Ok((2.0 * l / count(n)?).sqrt())
}

/// `sqrt(4 |S_j| L / N) + 4 |S_j| L / (3 N)`.
pub fn phi(s_j: usize, l: f64, n: u64) -> Result<f64> {
    let x = 4.0 * s_j as f64 * l / count(n)?;
    Ok(x.sqrt() + x / 3.0)
}

/// `sqrt(2 H^2 L / N_i) + H phi_i sum_{j != i} phi_j`.
pub fn cb_transition_hoeffding(h: f64, l: f64, n_i: u64, phis: &[f64], i: usize) -> Result<f64> {
    let first = (2.0 * h * h * l / count(n_i)?).sqrt();
    let others: f64 = phis
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, p)| p)
        .sum();
    Ok(first + h * phis[i] * others)
}

/// `sqrt(2 sigma^2 L / N) + 8 L / (3 N)`.
pub fn cb_reward_bernstein(sigma2: f64, l: f64, n: u64) -> Result<f64> {
    let n = count(n)?;
    Ok((2.0 * sigma2 * l / n).sqrt() + 8.0 * l / (3.0 * n))
}

/// Bernstein transition bonus of factor `i`:
///
/// `sqrt(4 sigma_P^2 L / N_i) + sqrt(2 u L / N_i) + eta_i`, where
/// `eta_i = sqrt(16 H^2 L / N_i) * sum_j [(4 |S_j| L / N_j)^(1/4) + sqrt(4 |S_j| L / (3 N_j))]
///        + sum_j H phi_i phi_j`.
///
/// Both sums in `eta_i` run over every factor, `j = i` included.
pub fn cb_transition_bernstein(
    sigma2_p: f64,
    u: f64,
    h: f64,
    l: f64,
    i: usize,
    state_dims: &[usize],
    all_n: &[u64],
) -> Result<f64> {
    if state_dims.len() != all_n.len() {
        return Err(Error::Length {
            expected: state_dims.len(),
            actual: all_n.len(),
        });
    }
    let n_i = count(all_n[i])?;
    let mut lower_order = 0.0;
    let mut phi_sum = 0.0;
    for (&s_j, &n_j) in state_dims.iter().zip(all_n) {
        let x = 4.0 * s_j as f64 * l / count(n_j)?;
        lower_order += x.powf(0.25) + (x / 3.0).sqrt();
        phi_sum += x.sqrt() + x / 3.0;
    }
    let phi_i = phi(state_dims[i], l, all_n[i])?;
    let eta = (16.0 * h * h * l / n_i).sqrt() * lower_order + h * phi_i * phi_sum;
    Ok((4.0 * sigma2_p * l / n_i).sqrt() + (2.0 * u * l / n_i).sqrt() + eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Reference values computed independently at 40 significant digits.
    const LN_216000_OVER_TENTH: f64 = 12.283033686666302;
    const LN_288000_OVER_TENTH: f64 = 12.570715759118083;
    const LN_18: f64 = 2.8903717578961647;
    const BERNSTEIN_TRANSITION_SINGLE: f64 = 8.724082623343745;

    #[test]
    fn log_factor_examples() {
        assert_abs_diff_eq!(
            log_factor_reward(2, 100.0, 6, 0.1).unwrap(),
            LN_216000_OVER_TENTH,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            log_factor_transition(2, 100.0, 4, 2, 0.1).unwrap(),
            LN_288000_OVER_TENTH,
            epsilon = 1e-9
        );
        let almost_one = 1.0 - 1e-15;
        assert_abs_diff_eq!(log_factor_reward(1, 1.0, 1, almost_one).unwrap(), LN_18, epsilon = 1e-9);
        assert_abs_diff_eq!(
            log_factor_transition(1, 1.0, 1, 1, almost_one).unwrap(),
            LN_18,
            epsilon = 1e-9
        );
        assert!(log_factor_reward(2, 200.0, 6, 0.1).unwrap() > LN_216000_OVER_TENTH);
        assert!(log_factor_transition(2, 100.0, 5, 2, 0.1).unwrap() > LN_288000_OVER_TENTH);
        assert!(log_factor_reward(1, 1.0, 1, 1.0).is_err());
        assert!(log_factor_transition(1, 1.0, 1, 1, 0.0).is_err());
    }

    #[test]
    fn hoeffding_examples() {
        assert_abs_diff_eq!(cb_reward_hoeffding(2.0, 8).unwrap(), 0.5f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(cb_reward_hoeffding(2.0, 1).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(cb_reward_hoeffding(2.0, 0), Err(Error::UndefinedBonus));

        assert_abs_diff_eq!(phi(2, 2.0, 16).unwrap(), 4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(phi(1, 0.75, 3).unwrap(), 4.0 / 3.0, epsilon = 1e-12);
        assert!(phi(2, 2.0, 0).is_err());

        assert_abs_diff_eq!(
            cb_transition_hoeffding(2.0, 2.0, 16, &[4.0 / 3.0], 0).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        // First term sqrt(2 * 4 * L / N) = 1 with L = 2, N = 16.
        assert_abs_diff_eq!(
            cb_transition_hoeffding(2.0, 2.0, 16, &[1.0, 0.5], 0).unwrap(),
            2.0,
            epsilon = 1e-12
        );
        assert_eq!(cb_transition_hoeffding(0.0, 2.0, 16, &[1.0, 0.5], 0).unwrap(), 0.0);
    }

    #[test]
    fn bernstein_examples() {
        assert_abs_diff_eq!(
            cb_reward_bernstein(0.25, 2.0, 8).unwrap(),
            0.125f64.sqrt() + 16.0 / 24.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(cb_reward_bernstein(0.0, 2.0, 8).unwrap(), 16.0 / 24.0, epsilon = 1e-15);
        for n in 1..50 {
            for s2 in [0.0, 0.1, 0.25] {
                let b = cb_reward_bernstein(s2, 2.0, n).unwrap();
                let cap = cb_reward_hoeffding(2.0, n).unwrap() + 16.0 / (3.0 * n as f64);
                assert!(b <= cap);
            }
        }
    }

    #[test]
    fn bernstein_transition_golden() {
        let v = cb_transition_bernstein(1.0, 0.0, 2.0, 2.0, 0, &[2], &[16]).unwrap();
        assert_abs_diff_eq!(v, BERNSTEIN_TRANSITION_SINGLE, epsilon = 1e-9);
        assert!(cb_transition_bernstein(1.0, 0.0, 2.0, 2.0, 0, &[2, 2], &[16, 0]).is_err());
        let far = cb_transition_bernstein(0.0, 0.0, 2.0, 2.0, 0, &[2, 3], &[u64::MAX / 4; 2]).unwrap();
        assert!(far < 1e-3);
    }

    #[test]
    fn bernstein_transition_non_increasing_in_counts() {
        let dims = [2, 3, 2];
        let mut prev = f64::INFINITY;
        for n in 1..200u64 {
            for k in 0..3 {
                let mut counts = [50u64; 3];
                counts[k] = n;
                let v = cb_transition_bernstein(0.5, 0.2, 5.0, 9.0, 1, &dims, &counts).unwrap();
                let w = {
                    counts[k] = n + 1;
                    cb_transition_bernstein(0.5, 0.2, 5.0, 9.0, 1, &dims, &counts).unwrap()
                };
                assert!(w <= v);
            }
            let v = cb_transition_bernstein(0.5, 0.2, 5.0, 9.0, 0, &[2], &[n]).unwrap();
            assert!(v <= prev && v.is_finite() && v >= 0.0);
            prev = v;
        }
    }
}
