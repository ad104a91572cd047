//! Numerical verification suites for the variance identities, the
//! total-variance bound and the estimation-error decomposition.

use std::fmt::Write as _;

use factored_rl::env::{gen_random_fmdp, PolicyTable};
use factored_rl::oracle::{decomposition_inequality_check, Oracle};
use factored_rl::planner::nested_variance;
use factored_rl::{cardinality, validate_spec, FactorDims, FmdpSpec, Scope};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Failure;

pub const VARIANCE_TOLERANCE: f64 = 1e-9;
pub const ADDITIVITY_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_TRIALS: usize = 1000;
pub const DEFAULT_INSTANCES: u64 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub trials: usize,
    pub passed: usize,
    /// Largest error (or violation) seen across trials.
    pub worst: f64,
    /// First failure, if any.
    pub note: Option<String>,
}

impl SuiteResult {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            trials: 0,
            passed: 0,
            worst: 0.0,
            note: None,
        }
    }

    fn record(&mut self, ok: bool, error: f64, note: impl FnOnce() -> String) {
        self.trials += 1;
        self.worst = self.worst.max(error);
        if ok {
            self.passed += 1;
        } else if self.note.is_none() {
            self.note = Some(note());
        }
    }

    pub fn ok(&self) -> bool {
        self.trials > 0 && self.passed == self.trials
    }
}

/// Small random chain: two binary state factors, two reward factors, a
/// binary action and horizon 3.
pub fn random_chain(seed: u64) -> FmdpSpec {
    let dims = FactorDims::new(vec![2, 2], vec![2]);
    let rewards = vec![Scope::new(vec![0, 2]), Scope::new(vec![1, 2])];
    let transitions = vec![Scope::new(vec![0, 1, 2]), Scope::new(vec![1, 2])];
    gen_random_fmdp(&dims, &rewards, &transitions, 3, seed).expect("fixed dimensions are valid")
}

pub fn random_policy(spec: &FmdpSpec, seed: u64) -> PolicyTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let actions = (0..spec.horizon * spec.num_states())
        .map(|_| rng.gen_range(0..spec.num_actions()))
        .collect();
    PolicyTable::new(spec.horizon, spec.num_states(), actions).expect("sized to the spec")
}

fn random_rows(rng: &mut ChaCha8Rng, dims: &[usize]) -> Vec<Vec<f64>> {
    dims.iter()
        .map(|&k| {
            let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        })
        .collect()
}

/// Recursive return variance against full enumeration at every `(h, s)`.
pub fn variance_bellman_suite(cases: &[(FmdpSpec, PolicyTable)]) -> Result<SuiteResult, Failure> {
    let mut suite = SuiteResult::new("variance-bellman");
    for (idx, (spec, policy)) in cases.iter().enumerate() {
        let oracle = Oracle::new(spec);
        let rec = oracle.chain_variance_recursive(policy)?;
        let brute = oracle.chain_variance_bruteforce(policy)?;
        let err = rec
            .omega2
            .iter()
            .zip(&brute)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        suite.record(err <= VARIANCE_TOLERANCE, err, || format!("case {idx}: max error {err:e}"));
    }
    Ok(suite)
}

fn additivity_error(rows: &[Vec<f64>], v: &[f64]) -> Result<f64, Failure> {
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let parts = nested_variance(&refs, v)?;
    let dims: Vec<usize> = rows.iter().map(Vec::len).collect();
    let mut mean = 0.0;
    let mut second = 0.0;
    let mut digits = vec![0usize; dims.len()];
    for &vx in v {
        let p: f64 = digits.iter().zip(rows).map(|(&k, row)| row[k]).product();
        mean += p * vx;
        second += p * vx * vx;
        for pos in (0..dims.len()).rev() {
            digits[pos] += 1;
            if digits[pos] < dims[pos] {
                break;
            }
            digits[pos] = 0;
        }
    }
    let var = second - mean * mean;
    Ok((parts.iter().sum::<f64>() - var).abs())
}

/// Nested per-factor variances summing to the one-step variance; the first
/// trial is the uniform two-factor case with `V = [0, 1, 2, 3]`.
pub fn additivity_suite(trials: usize, seed: u64) -> Result<SuiteResult, Failure> {
    let mut suite = SuiteResult::new("variance-additivity");
    let worked = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
    let err = additivity_error(&worked, &[0.0, 1.0, 2.0, 3.0])?;
    suite.record(err <= ADDITIVITY_TOLERANCE, err, || format!("worked case: error {err:e}"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 1..trials {
        let n = rng.gen_range(1..=3);
        let dims: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=4)).collect();
        let rows = random_rows(&mut rng, &dims);
        let v: Vec<f64> = (0..cardinality(&dims)).map(|_| rng.gen::<f64>() * 5.0).collect();
        let err = additivity_error(&rows, &v)?;
        suite.record(err <= ADDITIVITY_TOLERANCE, err, || format!("trial {t}: error {err:e}"));
    }
    Ok(suite)
}

/// Occupancy-weighted variance bounded by `H²` and equal to the start-state
/// return variance.
pub fn variance_bound_suite(cases: &[(FmdpSpec, PolicyTable)]) -> Result<SuiteResult, Failure> {
    let mut suite = SuiteResult::new("total-variance-bound");
    for (idx, (spec, policy)) in cases.iter().enumerate() {
        let check = Oracle::new(spec).total_variance_bound_check(policy)?;
        let gap = (check.lhs - check.omega2_start).abs();
        let excess = (check.lhs - check.bound).max(0.0);
        let ok = check.ok && gap <= VARIANCE_TOLERANCE;
        suite.record(ok, gap.max(excess), || {
            format!("case {idx}: sum {} vs bound {} and start variance {}", check.lhs, check.bound, check.omega2_start)
        });
    }
    Ok(suite)
}

/// Both decomposition inequalities on random triples with three factors of
/// size three.
pub fn decomposition_suite(trials: usize, seed: u64) -> Result<SuiteResult, Failure> {
    let mut suite = SuiteResult::new("decomposition");
    let dims = [3, 3, 3];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 0..trials {
        let hat = random_rows(&mut rng, &dims);
        let tru = random_rows(&mut rng, &dims);
        let v: Vec<f64> = (0..cardinality(&dims)).map(|_| rng.gen::<f64>() * 5.0).collect();
        let check = decomposition_inequality_check(&hat, &tru, &v)?;
        let violation = (check.l1_lhs - check.l1_rhs).max(check.value_lhs - check.value_rhs).max(0.0);
        suite.record(check.ok, violation, || format!("trial {t}: {check:?}"));
    }
    Ok(suite)
}

/// Spec validation as a one-trial suite, so a malformed spec shows up in the
/// report rather than aborting it.
pub fn validation_suite(spec: &FmdpSpec) -> SuiteResult {
    let mut suite = SuiteResult::new("spec-validation");
    let report = validate_spec(spec);
    let count = report.violations.len();
    suite.record(report.is_ok(), count as f64, || report.to_string());
    suite
}

fn chain_cases(seeds: &[u64]) -> Vec<(FmdpSpec, PolicyTable)> {
    seeds
        .iter()
        .map(|&seed| {
            let spec = random_chain(seed);
            let policy = random_policy(&spec, seed);
            (spec, policy)
        })
        .collect()
}

fn spec_cases(spec: &FmdpSpec, seeds: &[u64]) -> Vec<(FmdpSpec, PolicyTable)> {
    seeds.iter().map(|&seed| (spec.clone(), random_policy(spec, seed))).collect()
}

/// Variance Bellman identity, the total-variance bound and the
/// decomposition lemma on fresh random instances, preceded by spec
/// validation when a spec is given.
pub fn verify(spec: Option<&FmdpSpec>, seeds: &[u64], trials: usize) -> Result<Vec<SuiteResult>, Failure> {
    let mut out = Vec::new();
    if let Some(spec) = spec {
        let check = validation_suite(spec);
        let ok = check.ok();
        out.push(check);
        if !ok {
            return Ok(out);
        }
    }
    let cases = chain_cases(seeds);
    out.push(variance_bellman_suite(&cases)?);
    out.push(variance_bound_suite(&cases)?);
    out.push(decomposition_suite(trials, seeds.first().copied().unwrap_or(0))?);
    Ok(out)
}

/// Variance identities only: on the given spec under random policies, or on
/// random chains.
pub fn check_variance(spec: Option<&FmdpSpec>, seeds: &[u64], trials: usize) -> Result<Vec<SuiteResult>, Failure> {
    let cases = match spec {
        Some(spec) => spec_cases(spec, seeds),
        None => chain_cases(seeds),
    };
    Ok(vec![
        variance_bellman_suite(&cases)?,
        additivity_suite(trials, seeds.first().copied().unwrap_or(0))?,
        variance_bound_suite(&cases)?,
    ])
}

pub fn render_table(suites: &[SuiteResult]) -> String {
    let mut out = format!("{:<22} {:>8} {:>8} {:>12}  status\n", "suite", "passed", "trials", "worst");
    for s in suites {
        let status = if s.ok() { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{:<22} {:>8} {:>8} {:>12.3e}  {status}", s.name, s.passed, s.trials, s.worst);
        if let Some(note) = &s.note {
            let _ = writeln!(out, "  first failure: {note}");
        }
    }
    out
}

/// Maps a report to `Ok` or a verification failure naming the bad suites.
pub fn require_all(suites: &[SuiteResult]) -> Result<(), Failure> {
    let bad: Vec<&str> = suites.iter().filter(|s| !s.ok()).map(|s| s.name).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(bad.join(", ")))
    }
}
