use proptest::prelude::*;

use infomarket::asymptotics::{capacitated_gap_bounds, g_function, predict_gap};
use infomarket::market::{allocate, run_capacitated_trial, run_uncapacitated_trial, PhiAccess, PhiMatrix};
use infomarket::oracles::{brute_force_capacitated, monte_carlo_max_moment, z_score};
use infomarket::rng::RandomStream;
use infomarket::welfare::{gap_from_stats, trial_statistics};
use infomarket::{DistSpec, MarketConfig, Regime, SamplingMode, Setting, Supply};

fn any_spec() -> impl Strategy<Value = DistSpec> {
    prop_oneof![
        (0.5f64..3.0, 1.5f64..6.0).prop_map(|(c, a)| DistSpec::pareto(c, a).unwrap()),
        (1.0f64..4.0, 0.3f64..3.0).prop_map(|(c, l)| DistSpec::exponential(c, l).unwrap()),
        (0.0f64..2.0, 0.1f64..3.0).prop_map(|(a, w)| DistSpec::uniform(a, a + w).unwrap()),
    ]
}

fn light_spec() -> impl Strategy<Value = DistSpec> {
    prop_oneof![
        (0.5f64..3.0, 3.0f64..8.0).prop_map(|(c, a)| DistSpec::pareto(c, a).unwrap()),
        (1.0f64..4.0, 0.3f64..3.0).prop_map(|(c, l)| DistSpec::exponential(c, l).unwrap()),
        (0.0f64..2.0, 0.1f64..3.0).prop_map(|(a, w)| DistSpec::uniform(a, a + w).unwrap()),
    ]
}

fn regime() -> impl Strategy<Value = Regime> {
    prop_oneof![
        Just(Regime::NoInformation),
        Just(Regime::OnlyQuality),
        Just(Regime::FullInformation)
    ]
}

/// A random small instance: q, phi rows and rho.
fn instance(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>, f64)> {
    (1..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..10.0, n),
            prop::collection::vec(prop::collection::vec(0.0f64..10.0, n), n),
            0.0f64..=1.0,
        )
    })
}

fn capacities() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(1u32..4, 1..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn allocation_respects_capacities(caps in capacities(), r in regime(), rho in 0.0f64..=1.0, seed in any::<u64>()) {
        let agents: usize = caps.iter().map(|&c| c as usize).sum();
        let mut s = RandomStream::from_key(seed);
        let dist = DistSpec::exponential(1.0, 1.0).unwrap();
        let q = dist.sample(&mut s, caps.len());
        let out = allocate(r, rho, agents, &q, Some(&caps), PhiAccess::Lazy { dist, stream: s.clone() }, &mut s);
        prop_assert_eq!(out.assignment.len(), agents);
        let mut used = vec![0u32; caps.len()];
        for &y in &out.assignment {
            used[y] += 1;
        }
        prop_assert_eq!(used, caps);
    }

    #[test]
    fn realized_utility_is_sum_of_components((q, phi, rho) in instance(7), r in regime(), seed in any::<u64>()) {
        let m = PhiMatrix::from_rows(phi).unwrap();
        let out = allocate(r, rho, q.len(), &q, None, PhiAccess::Matrix(&m), &mut RandomStream::from_key(seed));
        for (agent, &y) in out.assignment.iter().enumerate() {
            let expected = (1.0 - rho) * q[y] + rho * m.get(agent, y);
            prop_assert!((out.utility[agent] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            prop_assert!((out.q_component[agent] + out.phi_component[agent] - out.utility[agent]).abs() <= 1e-12);
        }
        let mut items = out.assignment.clone();
        items.sort_unstable();
        prop_assert_eq!(items, (0..q.len()).collect::<Vec<_>>());
    }

    #[test]
    fn first_agent_with_full_information_gets_its_best_item((q, phi, rho) in instance(7), seed in any::<u64>()) {
        let m = PhiMatrix::from_rows(phi).unwrap();
        let out = allocate(Regime::FullInformation, rho, q.len(), &q, None, PhiAccess::Matrix(&m), &mut RandomStream::from_key(seed));
        let best = (0..q.len()).map(|y| (1.0 - rho) * q[y] + rho * m.get(0, y)).fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(out.utility[0], best);
    }

    #[test]
    fn without_heterogeneity_quality_and_full_information_coincide((q, phi, _) in instance(7), seed in any::<u64>()) {
        let m = PhiMatrix::from_rows(phi).unwrap();
        let run = |r| allocate(r, 0.0, q.len(), &q, None, PhiAccess::Matrix(&m), &mut RandomStream::from_key(seed)).average_utility();
        let (a, b) = (run(Regime::OnlyQuality), run(Regime::FullInformation));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn single_agent_full_information_dominates_pointwise(spec in any_spec(), rho in 0.0f64..=1.0, trial in 0u64..1000, seed in any::<u64>()) {
        let cfg = MarketConfig::new(20, rho, Supply::Uncapacitated, spec, spec).with_seed(seed);
        let t = run_uncapacitated_trial(&cfg, trial).unwrap();
        let full = t.utility_of(Regime::FullInformation);
        prop_assert!(full >= t.utility_of(Regime::OnlyQuality));
        prop_assert!(full >= t.utility_of(Regime::NoInformation));
    }

    #[test]
    fn capacitated_trial_conserves_total_common_value(spec in light_spec(), n in 1usize..30, trial in 0u64..100, mode in prop_oneof![Just(SamplingMode::Upfront), Just(SamplingMode::Deferred)]) {
        // with unit capacities every item is taken exactly once, so the q part of welfare is regime-independent
        let cfg = MarketConfig::new(n, 0.3, Supply::CapacitatedUnit, spec, spec).with_mode(mode).with_seed(9);
        let t = run_capacitated_trial(&cfg, trial).unwrap();
        let q_sum = |r: Regime| t.outcome(r).q_component.iter().sum::<f64>();
        let reference = q_sum(Regime::NoInformation);
        for r in Regime::ALL {
            prop_assert!((q_sum(r) - reference).abs() <= 1e-9 * reference.abs().max(1.0));
        }
    }

    #[test]
    fn paired_gaps_are_additive(spec in light_spec(), rho in 0.0f64..=1.0, cap in any::<bool>(), seed in any::<u64>()) {
        let supply = if cap { Supply::CapacitatedUnit } else { Supply::Uncapacitated };
        let cfg = MarketConfig::new(12, rho, supply, spec, spec).with_seed(seed);
        let stats = trial_statistics(&cfg, 50).unwrap();
        let a = gap_from_stats(&cfg, &stats, Regime::NoInformation, Regime::OnlyQuality).delta;
        let b = gap_from_stats(&cfg, &stats, Regime::OnlyQuality, Regime::FullInformation).delta;
        let c = gap_from_stats(&cfg, &stats, Regime::NoInformation, Regime::FullInformation).delta;
        prop_assert!((a + b - c).abs() <= 1e-9 * c.abs().max(1.0));
    }

    #[test]
    fn g_lies_between_phase_transition_and_identity(rho in 0.0f64..=1.0, alpha in 1.01f64..200.0) {
        let g = g_function(rho, alpha);
        prop_assert!(g <= rho + 1e-12);
        prop_assert!(g >= (2.0 * rho - 1.0).max(0.0) - 1e-12);
    }

    #[test]
    fn g_decreases_in_alpha(rho in 0.01f64..0.99, a in 1.01f64..50.0, step in 0.01f64..50.0) {
        prop_assert!(g_function(rho, a + step) <= g_function(rho, a) + 1e-12);
    }

    #[test]
    fn capacitated_bounds_width_is_weighted_common_mean(q in any_spec(), phi in any_spec(), rho in 0.0f64..=1.0, n in 1usize..300) {
        let b = capacitated_gap_bounds(&q, &phi, rho, n).unwrap();
        let width = (1.0 - rho) * q.mean();
        prop_assert!((b.upper - b.lower - width).abs() <= 1e-9 * width.max(1.0));
        prop_assert!(b.phi_n >= phi.mean() - 1e-12);
    }

    #[test]
    fn end_to_end_prediction_is_sum_of_steps(spec in any_spec(), rho in 0.05f64..0.95, n in 10usize..5000, cap in any::<bool>()) {
        let setting = if cap { Setting::Capacitated } else { Setting::Uncapacitated };
        let p = |from, to| predict_gap(setting, from, to, &spec, &spec, rho, n);
        if let (Ok(a), Ok(b), Ok(c)) = (
            p(Regime::NoInformation, Regime::OnlyQuality),
            p(Regime::OnlyQuality, Regime::FullInformation),
            p(Regime::NoInformation, Regime::FullInformation),
        ) {
            let sum = a.predicted_gap + b.predicted_gap;
            prop_assert!((sum - c.predicted_gap).abs() <= 1e-9 * sum.abs().max(1.0));
        }
        prop_assert!(p(Regime::FullInformation, Regime::OnlyQuality).is_err());
    }

    #[test]
    fn brute_force_is_invariant_to_item_relabeling((q, phi, rho) in instance(6), r in regime(), perm_seed in any::<u64>()) {
        let n = q.len();
        let mut perm: Vec<usize> = (0..n).collect();
        RandomStream::from_key(perm_seed).shuffle(&mut perm);
        let q2: Vec<f64> = perm.iter().map(|&y| q[y]).collect();
        let phi2: Vec<Vec<f64>> = phi.iter().map(|row| perm.iter().map(|&y| row[y]).collect()).collect();
        let a = brute_force_capacitated(&q, &PhiMatrix::from_rows(phi).unwrap(), rho, r).unwrap();
        let b = brute_force_capacitated(&q2, &PhiMatrix::from_rows(phi2).unwrap(), rho, r).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn brute_force_without_information_is_the_grand_mean((q, phi, rho) in instance(6)) {
        // each agent's item is marginally uniform under random choice
        let n = q.len() as f64;
        let mean_q = q.iter().sum::<f64>() / n;
        let mean_phi = phi.iter().flatten().sum::<f64>() / (n * n);
        let expected = (1.0 - rho) * mean_q + rho * mean_phi;
        let got = brute_force_capacitated(&q, &PhiMatrix::from_rows(phi).unwrap(), rho, Regime::NoInformation).unwrap();
        prop_assert!((got - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn max_moment_matches_monte_carlo(spec in light_spec(), seed in any::<u64>()) {
        for m in [2u64, 10, 100] {
            let mc = monte_carlo_max_moment(&spec, m, 20_000, seed ^ m);
            let z = z_score(&mc, spec.exact_max_moment(m));
            // loose bound: many cases run per invocation
            prop_assert!(z.abs() < 5.0, "{} m={}: z={}", spec, m, z);
        }
    }
}
