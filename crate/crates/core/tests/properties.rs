use avgcost_core::continuity::eta_diff_bound;
use avgcost_core::generic::{average_cost_generic, solve_nu, GenericCtmdpModel};
use avgcost_core::optimizer::{exhaustive_search, SearchOptions};
use avgcost_core::policy::distance;
use avgcost_core::queue::{average_cost, delta, steady_state, GroupServerModel, HoldingCost, ServerGroup};
use avgcost_core::simulate::{simulate_eta, SimConfig};
use avgcost_core::{ActionSpace, MetricParams, Policy, TailRule};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A queue whose all-on load is `rho` and a random prefix ending all-on.
fn instance(two_groups: bool, mu1: f64, mu2: f64, rho: f64, seed: u64) -> (GroupServerModel, Policy) {
    let mut groups = vec![ServerGroup { servers: 1, mu: mu1, cost: 0.5 }];
    if two_groups {
        groups.push(ServerGroup { servers: 2, mu: mu2, cost: 0.2 });
    }
    let capacity: f64 = groups.iter().map(|g| g.servers as f64 * g.mu).sum();
    let q = GroupServerModel::new(rho * capacity, groups, HoldingCost::Polynomial(vec![0.0, 1.0])).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.random_range(0..6);
    let prefix = (0..len)
        .map(|s| {
            let set = q.actions(s);
            set[rng.random_range(0..set.len())].clone()
        })
        .collect();
    (q, Policy::new(prefix, TailRule::AllOn))
}

fn instances() -> impl Strategy<Value = (GroupServerModel, Policy)> {
    (any::<bool>(), 0.5f64..3.0, 0.2f64..2.0, 0.1f64..0.85, any::<u64>())
        .prop_map(|(two, mu1, mu2, rho, seed)| instance(two, mu1, mu2, rho, seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn steady_state_is_normalized_and_balanced((q, u) in instances()) {
        let ss = steady_state(&q, &u, 1e-12).unwrap();
        let total: f64 = ss.pi.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(ss.tail_mass_bound <= 1e-11);
        let bound = u.bind(&q).unwrap();
        for n in 0..ss.n_trunc {
            let down = q.service_rate(bound.action_at(n + 1).unwrap()).unwrap();
            let flow_up = ss.pi[n] * q.lambda();
            prop_assert!((flow_up - ss.pi[n + 1] * down).abs() <= 1e-12 * flow_up.max(1e-300));
        }
    }

    #[test]
    fn delta_strictly_decreases((q, u) in instances()) {
        let mut prev = f64::INFINITY;
        for n in 0..12 {
            let d = delta(&q, &u, n, 1e-14).unwrap();
            prop_assert!(d.value > 0.0);
            prop_assert!(d.value < prev, "delta({n}) = {} not below {prev}", d.value);
            prev = d.value;
        }
    }

    #[test]
    fn tighter_tolerance_is_consistent((q, u) in instances(), exp in 4i32..10) {
        let tol = 10f64.powi(-exp);
        let a = average_cost(&q, &u, tol).unwrap().eta.unwrap();
        let b = average_cost(&q, &u, tol / 10.0).unwrap().eta.unwrap();
        prop_assert!(a.error_bound <= tol && b.error_bound <= tol / 10.0);
        prop_assert!((a.value - b.value).abs() <= a.error_bound + b.error_bound + 1e-15);
    }

    #[test]
    fn generic_solution_satisfies_balance((q, u) in instances()) {
        let g = GenericCtmdpModel::from_queue(&q);
        let sol = solve_nu(&g, &u, 1e-10).unwrap();
        let max_nu = sol.nu.iter().cloned().fold(0.0, f64::max);
        prop_assert!(sol.residual <= 1e-9 * g.rate_bound() * max_nu, "residual {}", sol.residual);
        prop_assert!(sol.nu.iter().all(|&x| x >= 0.0));
        prop_assert!((sol.nu[0] - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn generic_eta_is_scale_invariant((q, u) in instances(), factor in 0.01f64..100.0) {
        let g = GenericCtmdpModel::from_queue(&q);
        let a = average_cost_generic(&g, &u, 1e-11).unwrap().eta.unwrap();
        let b = average_cost_generic(&g.scaled(factor).unwrap(), &u, 1e-11).unwrap().eta.unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-9 * (1.0 + a.value.abs()));
    }

    #[test]
    fn doubling_is_stable((q, u) in instances()) {
        let g = GenericCtmdpModel::from_queue(&q);
        let coarse = solve_nu(&g, &u, 1e-8).unwrap();
        let fine = solve_nu(&g, &u, 1e-12).unwrap();
        prop_assert!(fine.k_trunc >= coarse.k_trunc);
        for i in 0..coarse.pi.len().min(fine.pi.len()).min(20) {
            prop_assert!((coarse.pi[i] - fine.pi[i]).abs() <= 1e-7);
        }
    }

    #[test]
    fn generic_matches_product_form((q, u) in instances()) {
        let g = GenericCtmdpModel::from_queue(&q);
        let a = average_cost_generic(&g, &u, 1e-11).unwrap().eta.unwrap();
        let b = average_cost(&q, &u, 1e-11).unwrap().eta.unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-8);
    }

    #[test]
    fn policy_text_round_trips((q, u) in instances()) {
        let bound = u.bind(&q).unwrap();
        let back: Policy = bound.to_string().parse().unwrap();
        prop_assert!(back.same_as(&bound).unwrap());
        prop_assert_eq!(distance(&back, &bound, MetricParams::default()).unwrap(), 0.0);
    }
}

#[test]
fn head_rescaling_identity() {
    // pi(m, u') = (1 + sigma) pi(m, u) for m <= n
    for seed in 0..20 {
        let (q, u) = instance(true, 2.0, 1.0, 0.5, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(0..6);
        let mut v = u.bind(&q).unwrap().extended_to(n + 4).unwrap();
        for s in n + 1..n + 4 {
            let set = q.actions(s);
            v.prefix[s] = set[rng.random_range(0..set.len())].clone();
        }
        let rep = eta_diff_bound(&q, &u, &v, 1e-13).unwrap();
        let a = steady_state(&q, &u, 1e-14).unwrap();
        let b = steady_state(&q, &v, 1e-14).unwrap();
        for m in 0..=rep.n {
            let expected = (1.0 + rep.sigma.value) * a.pi[m];
            assert!((b.pi[m] - expected).abs() <= 1e-8 * expected, "seed {seed}, m {m}");
        }
    }
}

#[test]
fn optimizer_is_deterministic_across_thread_counts() {
    let (q, _) = instance(true, 2.0, 1.0, 0.4, 0);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| exhaustive_search(&q, 4, &TailRule::AllOn, 1e-10, SearchOptions::default()).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.best_policy, four.best_policy);
    assert_eq!(one.best_eta, four.best_eta);
    assert_eq!(one.candidates, four.candidates);
}

#[test]
fn simulation_is_reproducible() {
    let (q, u) = instance(true, 2.0, 1.0, 0.5, 9);
    let cfg = SimConfig { horizon: 5e3, warmup: 50.0, seed: 11, batches: 10 };
    assert_eq!(simulate_eta(&q, &u, &cfg).unwrap(), simulate_eta(&q, &u, &cfg).unwrap());
}
