use factored_rl::env::gen_random_fmdp;
use factored_rl::oracle::{evaluate_policy, exact_optimal_values, Oracle};
use factored_rl::planner::{factored_backup, nested_variance, sweep, PlanningModel, ZeroBonus};
use factored_rl::{cardinality, decode_index, FlatIndex, flatten_to_flat_mdp, FactorDims, FmdpSpec, Scope};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spec(seed: u64, state_dims: Vec<usize>, actions: usize, horizon: usize) -> FmdpSpec {
    let n = state_dims.len();
    let dims = FactorDims::new(state_dims, vec![actions]);
    let scopes: Vec<Scope> = (0..n)
        .map(|i| Scope::new(vec![i, (i + 1) % n, n]))
        .collect();
    gen_random_fmdp(&dims, &scopes, &scopes, horizon, seed).unwrap()
}

fn random_rows(rng: &mut ChaCha8Rng, dims: &[usize]) -> Vec<Vec<f64>> {
    dims.iter()
        .map(|&k| {
            let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        })
        .collect()
}

fn naive(rows: &[Vec<f64>], dims: &[usize], v: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut second = 0.0;
    for (x, &vx) in v.iter().enumerate() {
        let p: f64 = decode_index(FlatIndex(x), dims)
            .unwrap()
            .iter()
            .zip(rows)
            .map(|(&k, row)| row[k])
            .product();
        mean += p * vx;
        second += p * vx * vx;
    }
    (mean, second - mean * mean)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backup_and_variance_match_enumeration(seed in any::<u64>(), dims in prop::collection::vec(1usize..=4, 1..=3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = random_rows(&mut rng, &dims);
        let v: Vec<f64> = (0..cardinality(&dims)).map(|_| rng.gen::<f64>() * 5.0).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let (mean, var) = naive(&rows, &dims, &v);
        prop_assert!((factored_backup(&refs, &v).unwrap() - mean).abs() < 1e-12);
        let total: f64 = nested_variance(&refs, &v).unwrap().iter().sum();
        prop_assert!((total - var).abs() < 1e-12);
    }

    #[test]
    fn flattening_preserves_optimal_values(seed in any::<u64>()) {
        let spec = random_spec(seed, vec![2, 3], 2, 3);
        let flat = flatten_to_flat_mdp(&spec);
        let a = exact_optimal_values(&spec);
        let b = exact_optimal_values(&flat);
        for (x, y) in a.v_star.iter().zip(&b.v_star) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_bonus_sweep_is_exact(seed in any::<u64>()) {
        let spec = random_spec(seed, vec![2, 2], 3, 4);
        let tables = sweep(&PlanningModel::from_spec(&spec), &ZeroBonus).unwrap();
        let star = exact_optimal_values(&spec);
        for h in 0..=spec.horizon {
            for s in 0..spec.num_states() {
                prop_assert!((tables.v_bar(h, s) - star.v(h, s)).abs() < 1e-10);
                prop_assert!((tables.v_under(h, s) - star.v(h, s)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn optimal_policy_evaluates_to_optimal_value(seed in any::<u64>()) {
        let spec = random_spec(seed, vec![3, 2], 2, 3);
        let star = exact_optimal_values(&spec);
        let v = evaluate_policy(&spec, &star.pi_star).unwrap();
        for (x, y) in v.iter().zip(&star.v_star) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip(seed in any::<u64>()) {
        let spec = random_spec(seed, vec![2, 2], 2, 2);
        prop_assert_eq!(FmdpSpec::from_json(&spec.to_json()).unwrap(), spec);
    }
}

#[test]
fn every_policy_has_non_negative_regret() {
    let spec = random_spec(11, vec![2, 2], 2, 3);
    let oracle = Oracle::new(&spec);
    let star = oracle.optimal_values();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let actions = (0..spec.horizon * spec.num_states()).map(|_| rng.gen_range(0..2)).collect();
        let policy = factored_rl::env::PolicyTable::new(spec.horizon, spec.num_states(), actions).unwrap();
        let v = oracle.evaluate(&policy).unwrap();
        for (s, value) in v.iter().enumerate().take(spec.num_states()) {
            assert!(star.v(0, s) - value >= -1e-12);
        }
    }
}
