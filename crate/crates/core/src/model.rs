//! Factored MDP specifications.
//!
//! The joint factor vector of a state-action pair lists the `n` state factors
//! first and the action factors after them. Reward and transition scopes index
//! into that joint vector.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{cardinality, decode_into, encode_unchecked};

/// Tolerance on transition row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorDims {
    pub state_dims: Vec<usize>,
    pub action_dims: Vec<usize>,
}

impl FactorDims {
    pub fn new(state_dims: Vec<usize>, action_dims: Vec<usize>) -> Self {
        Self {
            state_dims,
            action_dims,
        }
    }

    /// Number of state factors.
    pub fn n(&self) -> usize {
        self.state_dims.len()
    }

    /// Total number of state-action factors.
    pub fn d(&self) -> usize {
        self.state_dims.len() + self.action_dims.len()
    }

    pub fn num_states(&self) -> usize {
        cardinality(&self.state_dims)
    }

    pub fn num_actions(&self) -> usize {
        cardinality(&self.action_dims)
    }

    /// Flat state-action cardinality `X = S * A`.
    pub fn num_pairs(&self) -> usize {
        self.num_states() * self.num_actions()
    }

    pub fn joint_dims(&self) -> Vec<usize> {
        self.state_dims
            .iter()
            .chain(&self.action_dims)
            .copied()
            .collect()
    }

    /// Dimensions of the joint factors selected by `scope`.
    pub fn scope_dims(&self, scope: &Scope) -> Vec<usize> {
        let joint = self.joint_dims();
        scope.indices().iter().map(|&i| joint[i]).collect()
    }

    pub fn scope_cardinality(&self, scope: &Scope) -> usize {
        cardinality(&self.scope_dims(scope))
    }
}

/// Sorted, duplicate-free set of joint factor indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scope(Vec<usize>);

impl Scope {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Scope(indices)
    }

    /// The scope covering every one of `d` joint factors.
    pub fn full(d: usize) -> Self {
        Scope((0..d).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn is_canonical(&self) -> bool {
        self.0.windows(2).all(|w| w[0] < w[1])
    }
}

/// Components of `factors` at the scope's indices, in scope order.
pub fn project_scope(factors: &[usize], scope: &Scope) -> Vec<usize> {
    scope.indices().iter().map(|&i| factors[i]).collect()
}

/// Reward distribution of one scope cell. Support is always inside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardDist {
    Bernoulli(f64),
    Deterministic(f64),
}

impl RewardDist {
    pub fn mean(&self) -> f64 {
        match *self {
            RewardDist::Bernoulli(p) | RewardDist::Deterministic(p) => p,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            RewardDist::Bernoulli(p) => p * (1.0 - p),
            RewardDist::Deterministic(_) => 0.0,
        }
    }

    /// Draws a sample from a uniform variate `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> f64 {
        match *self {
            RewardDist::Bernoulli(p) => {
                if u < p {
                    1.0
                } else {
                    0.0
                }
            }
            RewardDist::Deterministic(v) => v,
        }
    }

    /// Finite outcome list `(value, probability)`; zero-probability outcomes
    /// are kept so the atom count only depends on the distribution family.
    pub fn outcomes(&self) -> Vec<(f64, f64)> {
        match *self {
            RewardDist::Bernoulli(p) => vec![(1.0, p), (0.0, 1.0 - p)],
            RewardDist::Deterministic(v) => vec![(v, 1.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardFactor {
    pub scope: Scope,
    /// One distribution per scope cell, indexed by mixed-radix cell index.
    pub table: Vec<RewardDist>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionFactor {
    pub scope: Scope,
    /// One probability vector over the factor's values per scope cell.
    pub rows: Vec<Vec<f64>>,
}

/// A complete episodic factored MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmdpSpec {
    #[serde(flatten)]
    pub dims: FactorDims,
    pub horizon: usize,
    /// Fixed start state as a factor vector; empty means all zeros.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub initial_state: Vec<usize>,
    pub rewards: Vec<RewardFactor>,
    pub transitions: Vec<TransitionFactor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScopeKind {
    Reward,
    Transition,
}

impl fmt::Display for ScopeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScopeKind::Reward => f.write_str("reward"),
            ScopeKind::Transition => f.write_str("transition"),
        }
    }
}

/// A single problem found by [`validate_spec`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoStateFactors,
    ZeroDimension { position: usize },
    ZeroHorizon,
    NoRewardFactors,
    TransitionCount { expected: usize, actual: usize },
    ScopeNotCanonical { kind: ScopeKind, factor: usize },
    ScopeOutOfRange { kind: ScopeKind, factor: usize, index: usize },
    TableSize { kind: ScopeKind, factor: usize, expected: usize, actual: usize },
    RowLength { factor: usize, cell: usize, expected: usize, actual: usize },
    NegativeProbability { factor: usize, cell: usize },
    RowSum { factor: usize, cell: usize, sum: f64 },
    MeanOutOfRange { factor: usize, cell: usize, mean: f64 },
    InitialState,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            NoStateFactors => write!(f, "no state factors"),
            ZeroDimension { position } => write!(f, "factor {position} has dimension 0"),
            ZeroHorizon => write!(f, "horizon must be positive"),
            NoRewardFactors => write!(f, "at least one reward factor is required"),
            TransitionCount { expected, actual } => {
                write!(f, "expected {expected} transition factors, found {actual}")
            }
            ScopeNotCanonical { kind, factor } => {
                write!(f, "{kind} scope {factor} is not strictly increasing")
            }
            ScopeOutOfRange { kind, factor, index } => {
                write!(f, "{kind} scope {factor} references factor {index} out of range")
            }
            TableSize {
                kind,
                factor,
                expected,
                actual,
            } => write!(
                f,
                "{kind} table {factor} has {actual} cells, expected {expected}"
            ),
            RowLength {
                factor,
                cell,
                expected,
                actual,
            } => write!(
                f,
                "transition {factor} cell {cell}: row length {actual}, expected {expected}"
            ),
            NegativeProbability { factor, cell } => {
                write!(f, "transition {factor} cell {cell}: negative probability")
            }
            RowSum { factor, cell, sum } => {
                write!(f, "transition {factor} cell {cell}: row sum {sum} ≠ 1")
            }
            MeanOutOfRange { factor, cell, mean } => {
                write!(f, "reward {factor} cell {cell}: mean {mean} out of [0,1]")
            }
            InitialState => write!(f, "initial state does not match the state factors"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate_spec(spec: &FmdpSpec) -> ValidationReport {
    let mut out = Vec::new();
    let dims = &spec.dims;
    if dims.state_dims.is_empty() {
        out.push(Violation::NoStateFactors);
    }
    let joint = dims.joint_dims();
    for (position, &d) in joint.iter().enumerate() {
        if d == 0 {
            out.push(Violation::ZeroDimension { position });
        }
    }
    if spec.horizon == 0 {
        out.push(Violation::ZeroHorizon);
    }
    if spec.rewards.is_empty() {
        out.push(Violation::NoRewardFactors);
    }
    if spec.transitions.len() != dims.n() {
        out.push(Violation::TransitionCount {
            expected: dims.n(),
            actual: spec.transitions.len(),
        });
    }
    if !spec.initial_state.is_empty()
        && (spec.initial_state.len() != dims.n()
            || spec
                .initial_state
                .iter()
                .zip(&dims.state_dims)
                .any(|(&x, &d)| x >= d))
    {
        out.push(Violation::InitialState);
    }

    // Table checks need well-formed scopes; skip them for broken ones.
    let scope_ok = |kind, factor, scope: &Scope, out: &mut Vec<Violation>| {
        let mut ok = true;
        if !scope.is_canonical() {
            out.push(Violation::ScopeNotCanonical { kind, factor });
            ok = false;
        }
        for &index in scope.indices() {
            if index >= joint.len() {
                out.push(Violation::ScopeOutOfRange {
                    kind,
                    factor,
                    index,
                });
                ok = false;
            }
        }
        ok
    };

    for (i, rf) in spec.rewards.iter().enumerate() {
        if !scope_ok(ScopeKind::Reward, i, &rf.scope, &mut out) {
            continue;
        }
        let expected = dims.scope_cardinality(&rf.scope);
        if rf.table.len() != expected {
            out.push(Violation::TableSize {
                kind: ScopeKind::Reward,
                factor: i,
                expected,
                actual: rf.table.len(),
            });
        }
        for (cell, dist) in rf.table.iter().enumerate() {
            let mean = dist.mean();
            if !(0.0..=1.0).contains(&mean) {
                out.push(Violation::MeanOutOfRange {
                    factor: i,
                    cell,
                    mean,
                });
            }
        }
    }

    for (j, tf) in spec.transitions.iter().enumerate() {
        if !scope_ok(ScopeKind::Transition, j, &tf.scope, &mut out) {
            continue;
        }
        let expected = dims.scope_cardinality(&tf.scope);
        if tf.rows.len() != expected {
            out.push(Violation::TableSize {
                kind: ScopeKind::Transition,
                factor: j,
                expected,
                actual: tf.rows.len(),
            });
        }
        let width = dims.state_dims.get(j).copied().unwrap_or(0);
        for (cell, row) in tf.rows.iter().enumerate() {
            if row.len() != width {
                out.push(Violation::RowLength {
                    factor: j,
                    cell,
                    expected: width,
                    actual: row.len(),
                });
            }
            if row.iter().any(|&p| p < 0.0 || p.is_nan()) {
                out.push(Violation::NegativeProbability { factor: j, cell });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                out.push(Violation::RowSum {
                    factor: j,
                    cell,
                    sum,
                });
            }
        }
    }
    ValidationReport { violations: out }
}

impl FmdpSpec {
    pub fn n(&self) -> usize {
        self.dims.n()
    }

    /// Number of reward factors.
    pub fn m(&self) -> usize {
        self.rewards.len()
    }

    pub fn num_states(&self) -> usize {
        self.dims.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.dims.num_actions()
    }

    /// The start state as a factor vector.
    pub fn start_state(&self) -> Vec<usize> {
        if self.initial_state.is_empty() {
            vec![0; self.n()]
        } else {
            self.initial_state.clone()
        }
    }

    pub fn start_index(&self) -> usize {
        encode_unchecked(self.start_state(), &self.dims.state_dims)
    }

    /// Returns `Err` listing every violation when the spec is malformed.
    pub fn validated(self) -> Result<Self> {
        let report = validate_spec(&self);
        if report.is_ok() {
            Ok(self)
        } else {
            Err(Error::InvalidSpec(report.to_string()))
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: FmdpSpec =
            serde_json::from_str(text).map_err(|e| Error::Data(e.to_string()))?;
        spec.validated()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialization cannot fail")
    }

    /// Precomputed scope cells for every flat state-action pair.
    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }

    /// Expected total reward `(1/m) Σ_i R̄_i` of a flat pair.
    pub fn mean_reward(&self, layout: &Layout, sa: usize) -> f64 {
        let sum: f64 = self
            .rewards
            .iter()
            .zip(layout.reward_cells(sa))
            .map(|(rf, &c)| rf.table[c].mean())
            .sum();
        sum / self.m() as f64
    }

    /// The `n` per-factor next-state rows of a flat pair.
    pub fn rows<'a>(&'a self, layout: &Layout, sa: usize) -> Vec<&'a [f64]> {
        self.transitions
            .iter()
            .zip(layout.transition_cells(sa))
            .map(|(tf, &c)| tf.rows[c].as_slice())
            .collect()
    }
}

/// Scope-cell lookup table over all flat pairs of a spec.
#[derive(Debug, Clone)]
pub struct Layout {
    m: usize,
    n: usize,
    num_actions: usize,
    cells: Vec<usize>,
}

impl Layout {
    pub fn new(spec: &FmdpSpec) -> Self {
        let dims = &spec.dims;
        let joint = dims.joint_dims();
        let m = spec.m();
        let n = spec.transitions.len();
        let x = dims.num_pairs();
        let mut cells = Vec::with_capacity(x * (m + n));
        let mut factors = vec![0; joint.len()];
        let scopes: Vec<(&Scope, Vec<usize>)> = spec
            .rewards
            .iter()
            .map(|r| &r.scope)
            .chain(spec.transitions.iter().map(|t| &t.scope))
            .map(|s| (s, dims.scope_dims(s)))
            .collect();
        for sa in 0..x {
            decode_into(sa, &joint, &mut factors);
            for (scope, sdims) in &scopes {
                let cell = encode_unchecked(scope.indices().iter().map(|&i| factors[i]), sdims);
                cells.push(cell);
            }
        }
        Layout {
            m,
            n,
            num_actions: dims.num_actions(),
            cells,
        }
    }

    pub fn pair(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    pub fn reward_cells(&self, sa: usize) -> &[usize] {
        let base = sa * (self.m + self.n);
        &self.cells[base..base + self.m]
    }

    pub fn transition_cells(&self, sa: usize) -> &[usize] {
        let base = sa * (self.m + self.n) + self.m;
        &self.cells[base..base + self.n]
    }
}

/// The equivalent unfactored MDP: one state factor of size `S`, one action
/// factor of size `A`, a single full-scope reward with Bernoulli mean
/// `(1/m) Σ R̄_i`, and a single full-scope transition `Π_j ℙ_j`.
pub fn flatten_to_flat_mdp(spec: &FmdpSpec) -> FmdpSpec {
    let layout = spec.layout();
    let s_count = spec.num_states();
    let a_count = spec.num_actions();
    let state_dims = &spec.dims.state_dims;
    let mut table = Vec::with_capacity(s_count * a_count);
    let mut rows = Vec::with_capacity(s_count * a_count);
    let mut next = vec![0; state_dims.len()];
    for sa in 0..s_count * a_count {
        table.push(RewardDist::Bernoulli(spec.mean_reward(&layout, sa)));
        let factor_rows = spec.rows(&layout, sa);
        let row: Vec<f64> = (0..s_count)
            .map(|sp| {
                decode_into(sp, state_dims, &mut next);
                factor_rows
                    .iter()
                    .zip(&next)
                    .map(|(r, &x)| r[x])
                    .product()
            })
            .collect();
        rows.push(row);
    }
    FmdpSpec {
        dims: FactorDims::new(vec![s_count], vec![a_count]),
        horizon: spec.horizon,
        initial_state: vec![spec.start_index()],
        rewards: vec![RewardFactor {
            scope: Scope::full(2),
            table,
        }],
        transitions: vec![TransitionFactor {
            scope: Scope::full(2),
            rows,
        }],
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Two binary state factors, one binary action, each factor depending on
    /// itself and the action.
    pub(crate) fn two_factor_spec() -> FmdpSpec {
        FmdpSpec {
            dims: FactorDims::new(vec![2, 2], vec![2]),
            horizon: 3,
            initial_state: vec![],
            rewards: vec![RewardFactor {
                scope: Scope::new(vec![0, 2]),
                table: vec![
                    RewardDist::Bernoulli(0.1),
                    RewardDist::Bernoulli(0.6),
                    RewardDist::Deterministic(0.3),
                    RewardDist::Bernoulli(0.9),
                ],
            }],
            transitions: vec![
                TransitionFactor {
                    scope: Scope::new(vec![0, 2]),
                    rows: vec![vec![0.5, 0.5]; 4],
                },
                TransitionFactor {
                    scope: Scope::new(vec![1, 2]),
                    rows: vec![vec![0.5, 0.5], vec![0.2, 0.8], vec![1.0, 0.0], vec![0.3, 0.7]],
                },
            ],
        }
    }

    #[test]
    fn project_examples() {
        let x = [1, 0, 2];
        assert_eq!(project_scope(&x, &Scope::new(vec![0, 2])), vec![1, 2]);
        assert_eq!(project_scope(&x, &Scope::new(vec![1])), vec![0]);
        assert_eq!(project_scope(&x, &Scope::new(vec![0, 1, 2])), vec![1, 0, 2]);
    }

    #[test]
    fn valid_spec_is_ok() {
        assert!(validate_spec(&two_factor_spec()).is_ok());
    }

    #[test]
    fn bad_row_sum_is_reported() {
        let mut spec = two_factor_spec();
        spec.transitions[0].rows[1] = vec![0.4, 0.5];
        let report = validate_spec(&spec);
        assert_eq!(report.violations.len(), 1);
        let msg = report.to_string();
        assert!(msg.contains("row sum 0.9 ≠ 1"), "{msg}");
    }

    #[test]
    fn bad_mean_is_reported() {
        let mut spec = two_factor_spec();
        spec.rewards[0].table[2] = RewardDist::Bernoulli(1.5);
        let report = validate_spec(&spec);
        assert!(report.to_string().contains("out of [0,1]"));
    }

    #[test]
    fn structural_violations() {
        let mut spec = two_factor_spec();
        spec.rewards[0].scope = Scope(vec![0, 7]);
        spec.transitions[1].rows.pop();
        spec.initial_state = vec![0, 5];
        let v = validate_spec(&spec).violations;
        assert!(v.contains(&Violation::ScopeOutOfRange {
            kind: ScopeKind::Reward,
            factor: 0,
            index: 7
        }));
        assert!(v.contains(&Violation::TableSize {
            kind: ScopeKind::Transition,
            factor: 1,
            expected: 4,
            actual: 3
        }));
        assert!(v.contains(&Violation::InitialState));
    }

    #[test]
    fn json_round_trip_and_schema() {
        let spec = two_factor_spec();
        let text = spec.to_json();
        assert!(text.contains("\"state_dims\""));
        assert!(text.contains("\"bernoulli\""));
        assert_eq!(FmdpSpec::from_json(&text).unwrap(), spec);

        let literal = r#"{
            "state_dims": [2], "action_dims": [1], "horizon": 1,
            "rewards": [{"scope": [0], "table": [{"deterministic": 0.2}, {"bernoulli": 0.5}]}],
            "transitions": [{"scope": [0], "rows": [[1.0, 0.0], [0.5, 0.5]]}]
        }"#;
        let parsed = FmdpSpec::from_json(literal).unwrap();
        assert_eq!(parsed.rewards[0].table[1], RewardDist::Bernoulli(0.5));
        assert_eq!(parsed.start_state(), vec![0]);

        let broken = literal.replace("[0.5, 0.5]", "[0.5, 0.4]");
        assert!(matches!(
            FmdpSpec::from_json(&broken),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn layout_matches_projection() {
        let spec = two_factor_spec();
        let layout = spec.layout();
        // s = (1, 0), a = 1  ->  sa = 2 * 2 + 1 = 5
        assert_eq!(layout.pair(2, 1), 5);
        assert_eq!(layout.reward_cells(5), &[3]);
        assert_eq!(layout.transition_cells(5), &[3, 1]);
    }

    #[test]
    fn flatten_examples() {
        let spec = two_factor_spec();
        let flat = flatten_to_flat_mdp(&spec);
        assert!(validate_spec(&flat).is_ok());
        assert_eq!(flat.dims.state_dims, vec![4]);
        assert_eq!(flat.rewards[0].scope, Scope::full(2));
        // s = (0,0), a = 0: both rows uniform.
        assert_eq!(flat.transitions[0].rows[0], vec![0.25; 4]);

        let single = FmdpSpec {
            dims: FactorDims::new(vec![1], vec![1]),
            horizon: 1,
            initial_state: vec![],
            rewards: vec![RewardFactor {
                scope: Scope::full(2),
                table: vec![RewardDist::Deterministic(0.7)],
            }],
            transitions: vec![TransitionFactor {
                scope: Scope::full(2),
                rows: vec![vec![1.0]],
            }],
        };
        let flat = flatten_to_flat_mdp(&single);
        assert_eq!(flat.rewards[0].table[0].mean(), 0.7);
    }
}
