use factored_rl::agent::{run, Algorithm, Learner, RunConfig};
use factored_rl::env::{gen_random_fmdp, Simulator};
use factored_rl::rlwk::{build_augmented, fig1, run_rlwk_bf, BudgetGrid, CostModel, RlwkConfig};
use factored_rl::{FactorDims, Scope};

fn single_factor_spec() -> factored_rl::FmdpSpec {
    let dims = FactorDims::new(vec![4], vec![3]);
    let scopes = vec![Scope::new(vec![0, 1])];
    gen_random_fmdp(&dims, &scopes, &scopes, 4, 17).unwrap()
}

#[test]
fn single_factor_learners_coincide_with_flat_baseline() {
    let spec = single_factor_spec();
    let mut ch = Learner::new(&spec, Algorithm::Ch, 200, 0.1).unwrap();
    let mut flat = Learner::new(&spec, Algorithm::FlatCh, 200, 0.1).unwrap();
    let sim = Simulator::new(&spec);
    for k in 0..200 {
        let a = ch.plan().unwrap();
        let b = flat.plan().unwrap();
        assert_eq!(a.policy, b.policy);
        for (x, y) in a.bonus.iter().zip(&b.bonus) {
            assert!((x.is_nan() && y.is_nan()) || (x - y).abs() < 1e-12);
        }
        let traj = sim.run(&a.policy, &spec.start_state(), 3, k).unwrap();
        ch.observe(&traj).unwrap();
        flat.observe(&traj).unwrap();
    }
}

#[test]
fn learner_tables_stay_ordered() {
    let spec = single_factor_spec();
    let mut learner = Learner::new(&spec, Algorithm::Bf, 50, 0.1).unwrap();
    let sim = Simulator::new(&spec);
    for k in 0..50 {
        let t = learner.plan().unwrap();
        for (hi, lo) in t.v_bar.iter().zip(&t.v_under) {
            assert!(*lo >= 0.0 && lo <= hi && *hi <= spec.horizon as f64);
        }
        learner.observe(&sim.run(&t.policy, &spec.start_state(), 1, k).unwrap()).unwrap();
    }
}

#[test]
fn runs_are_reproducible() {
    let spec = single_factor_spec();
    for alg in [Algorithm::Ch, Algorithm::Bf, Algorithm::FlatCh] {
        let cfg = RunConfig::new(alg, 40, 0.1, 5);
        assert_eq!(run(&spec, &cfg).unwrap(), run(&spec, &cfg).unwrap());
    }
}

#[test]
fn zero_cost_knapsack_learner_collects_full_episodes() {
    let spec = single_factor_spec();
    let pairs = spec.dims.num_pairs();
    let aug = build_augmented(spec.clone(), BudgetGrid::new(2, &[1.0]).unwrap(), CostModel::zero(1, pairs)).unwrap();
    let rec = run_rlwk_bf(&aug, &RlwkConfig { episodes: 20, delta: 0.1, seed: 4 }).unwrap();
    assert!(rec.episodes.iter().all(|e| !e.budget_terminated && e.steps == spec.horizon));
}

#[test]
fn knapsack_runs_never_overspend() {
    for file in [fig1::instance1(), fig1::instance2()] {
        let aug = file.build().unwrap();
        for seed in 0..3 {
            let rec = run_rlwk_bf(&aug, &RlwkConfig { episodes: 200, delta: 0.1, seed }).unwrap();
            assert!(rec.episodes.iter().all(|e| e.spent_units[0] <= aug.grid.budgets[0]));
        }
    }
}
