use aabsp::datalab::{fit_mle, log_likelihood, mc_bayes_risk, simulate_dataset, suff_stats, FailureRecord, Regime};
use aabsp::decision::{
    bayes_decision, log_h1, log_h1_quadrature, posterior_expected_loss, threshold_c, threshold_c1, ExponentVector,
    FailureCounts, SuffStats,
};
use aabsp::model::{expected_acceptance_loss, n_upper_bound, Action};
use aabsp::numerics::{find_root_monotone, minimize_scalar_unimodal, regularized_incomplete_beta, Bracket};
use aabsp::optimizer::{compare_modes, PlanFamily};
use aabsp::risk::bayes_risk;
use aabsp::{CostModel, LossPoly, Plan, PriorSpec, RawDataset, SearchConfig, Theta};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Setup {
    priors: PriorSpec,
    loss: LossPoly,
    c_r: f64,
}

fn setup() -> impl Strategy<Value = Setup> {
    (1usize..=2)
        .prop_flat_map(|j| {
            (
                prop::collection::vec(if j == 1 { 1.1f64..6.0 } else { 0.6f64..6.0 }, j),
                prop::collection::vec(0.5f64..5.0, j),
                prop::collection::vec(1.5f64..20.0, j),
                0.0f64..3.0,
                prop::collection::vec(0.0f64..4.0, j),
                prop::collection::vec(0.0f64..4.0, j * j),
                0.2f64..1.2,
            )
        })
        .prop_map(|(alpha, beta, l, a0, a, q, frac)| {
            let j = alpha.len();
            let quad: Vec<Vec<f64>> = (0..j)
                .map(|i| (0..j).map(|k| if k >= i { q[i * j + k] } else { 0.0 }).collect())
                .collect();
            let priors = PriorSpec::new(alpha, beta, l).unwrap();
            let loss = LossPoly::new(a0, a, quad).unwrap();
            // Rejection cost around the prior mean loss, so both actions occur.
            let c_r = a0 + 0.1 + frac * (expected_acceptance_loss(&priors, &loss) - a0);
            Setup { priors, loss, c_r }
        })
}

fn counts_for(j: usize) -> impl Strategy<Value = FailureCounts> {
    (prop::collection::vec(0u32..4, j), prop::collection::vec(0u32..4, j))
        .prop_map(|(d1, d2)| FailureCounts::new(d1, d2).unwrap())
}

fn with_counts() -> impl Strategy<Value = (Setup, FailureCounts)> {
    setup().prop_flat_map(|s| {
        let j = s.priors.risks();
        (Just(s), counts_for(j))
    })
}

fn phi(s: &Setup, counts: &FailureCounts, w1: f64, w2: f64, delta: bool) -> f64 {
    let st = SuffStats::new(w1, w2, counts.clone(), delta).unwrap();
    posterior_expected_loss(&st, &s.priors, &s.loss).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn posterior_loss_decreases_in_exposure((s, counts) in with_counts(), delta in any::<bool>()) {
        prop_assume!(!s.loss.is_constant());
        let grid: Vec<f64> = (0..20).map(|i| 0.05 + 0.4 * i as f64).collect();
        for &w2 in &grid {
            for pair in grid.windows(2) {
                prop_assert!(phi(&s, &counts, pair[1], w2, delta) < phi(&s, &counts, pair[0], w2, delta));
            }
        }
        for &w1 in &grid {
            for pair in grid.windows(2) {
                prop_assert!(phi(&s, &counts, w1, pair[1], delta) < phi(&s, &counts, w1, pair[0], delta));
            }
        }
    }

    #[test]
    fn decision_matches_threshold_form(
        (s, counts) in with_counts(),
        n_extra in 0u32..4,
        tau1 in 0.1f64..3.0,
        points in prop::collection::vec((0.0f64..1.0, 0.0f64..8.0), 30),
    ) {
        let delta = true;
        let n = counts.total() + n_extra;
        let cap = n as f64 * tau1;
        let c_prime = threshold_c(&counts, &s.priors, &s.loss, s.c_r, n, tau1).unwrap();
        for (u, w2) in points {
            let w1 = u * cap;
            let st = SuffStats::new(w1, w2, counts.clone(), delta).unwrap();
            let direct = bayes_decision(&st, &s.priors, &s.loss, s.c_r).unwrap();
            let margin = (posterior_expected_loss(&st, &s.priors, &s.loss).unwrap() - s.c_r).abs();
            if margin < 1e-7 {
                continue;
            }
            let c1 = threshold_c1(w1, &counts, &s.priors, &s.loss, s.c_r, delta).unwrap();
            let by_threshold = if w1 > c_prime || w2 >= c1 { Action::Accept } else { Action::Reject };
            prop_assert_eq!(direct, by_threshold, "w1={} w2={} c'={} c1={}", w1, w2, c_prime, c1);
        }
    }

    #[test]
    fn acceptance_is_monotone(
        (s, counts) in with_counts(),
        delta in any::<bool>(),
        w in (0.0f64..6.0, 0.0f64..6.0, 0.0f64..3.0, 0.0f64..3.0),
    ) {
        let (w1, w2, dw1, dw2) = w;
        let at = |a: f64, b: f64| {
            bayes_decision(&SuffStats::new(a, b, counts.clone(), delta).unwrap(), &s.priors, &s.loss, s.c_r).unwrap()
        };
        if at(w1, w2) == Action::Accept {
            prop_assert_eq!(at(w1 + dw1, w2 + dw2), Action::Accept);
        }
    }

    #[test]
    fn h1_paths_agree((s, counts) in with_counts(), w1 in 0.0f64..20.0, w2 in 0.01f64..20.0) {
        let st = SuffStats::new(w1, w2, counts, true).unwrap();
        let j = s.priors.risks();
        let mut vectors = vec![ExponentVector::zero(j)];
        for a in 0..j {
            vectors.push(ExponentVector::unit(j, a));
            for b in a..j {
                vectors.push(ExponentVector::pair(j, a, b));
            }
        }
        for p in vectors {
            let beta = log_h1(&st, &s.priors, &p).unwrap();
            let quad = log_h1_quadrature(&st, &s.priors, &p).unwrap();
            prop_assert!((beta - quad).exp_m1().abs() < 1e-8, "{:?}: {} vs {}", p, beta, quad);
        }
    }

    #[test]
    fn incomplete_beta_symmetry(x in 0.0f64..=1.0, a in 0.1f64..30.0, b in 0.1f64..30.0, dx in 0.0f64..0.2) {
        let fwd = regularized_incomplete_beta(x, a, b).unwrap();
        let back = regularized_incomplete_beta(1.0 - x, b, a).unwrap();
        prop_assert!((fwd + back - 1.0).abs() < 1e-10);
        let further = regularized_incomplete_beta((x + dx).min(1.0), a, b).unwrap();
        prop_assert!(further >= fwd - 1e-14);
    }

    #[test]
    fn root_and_minimum_contracts(shift in -3.0f64..3.0, scale in 0.1f64..5.0) {
        let f = |x: f64| scale * (x - shift).powi(3) + (x - shift);
        let tol = 1e-9;
        let root = find_root_monotone(f, Bracket::new(-10.0, 10.0).unwrap(), tol).unwrap().root().unwrap();
        prop_assert!(f(root).abs() <= f(root - tol).abs().max(f(root + tol).abs()));
        let g = |x: f64| -> Result<f64, aabsp::Error> { Ok(scale * (x - shift).powi(2) + x.cos()) };
        let (arg, val) = minimize_scalar_unimodal(g, Bracket::new(-6.0, 6.0).unwrap(), 1e-6, 25).unwrap();
        prop_assert!(val <= g(-6.0).unwrap() && val <= g(6.0).unwrap());
        prop_assert!((-6.0..=6.0).contains(&arg));
    }
}

fn costs_for(s: &Setup, c_a: f64) -> CostModel {
    CostModel::new(0.3, 0.1, 0.5, c_a, s.c_r).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn unaccelerated_risk_ignores_tau1(s in setup(), n in 1u32..6, r_frac in 0.0f64..1.0) {
        let r = 1 + ((n - 1) as f64 * r_frac) as u32;
        let costs = costs_for(&s, 0.2);
        let base = bayes_risk(&Plan::new(n, r, 0, 0.0).unwrap(), &s.priors, &s.loss, &costs).unwrap().total;
        for tau in [0.5, 1.0, 5.0] {
            let other = bayes_risk(&Plan::new(n, r, 0, tau).unwrap(), &s.priors, &s.loss, &costs).unwrap().total;
            prop_assert!((other - base).abs() <= 1e-6 * base.abs().max(1.0));
        }
    }

    #[test]
    fn risk_components_are_sane(s in setup(), n in 1u32..6, r_frac in 0.0f64..1.0, m_frac in 0.0f64..=1.0, tau in 0.0f64..2.0) {
        let r = 1 + ((n - 1) as f64 * r_frac) as u32;
        let m = (r as f64 * m_frac) as u32;
        let costs = costs_for(&s, 0.2);
        let e = bayes_risk(&Plan::new(n, r, m, tau).unwrap(), &s.priors, &s.loss, &costs).unwrap();
        prop_assert!(e.sampling_cost >= 0.0 && e.stress_cost >= 0.0 && e.time_cost >= 0.0 && e.decision_loss >= 0.0);
        let ceiling = expected_acceptance_loss(&s.priors, &s.loss).min(s.c_r);
        prop_assert!(e.decision_loss <= ceiling + 1e-6, "{} > {}", e.decision_loss, ceiling);
        prop_assert!((e.total - (e.sampling_cost + e.stress_cost + e.time_cost + e.decision_loss)).abs() < 1e-12);
    }

    #[test]
    fn adaptive_family_nests_the_others(s in setup(), tau in 0.05f64..1.5, c_a in 0.0f64..0.5) {
        let costs = costs_for(&s, c_a);
        let cfg = SearchConfig { fixed_tau: Some(tau), n_max_override: Some(4), ..SearchConfig::default() };
        let cmp = compare_modes(&s.priors, &s.loss, &costs, &cfg).unwrap().comparisons.unwrap();
        prop_assert!(cmp.aabsp.eval.total <= cmp.acbsp.eval.total + 1e-12);
        prop_assert!(cmp.aabsp.eval.total <= cmp.cbsp.eval.total + 1e-12);
        let cheaper = CostModel { c_a: 0.0, ..costs };
        let cbsp0 = compare_modes(&s.priors, &s.loss, &cheaper, &cfg.with_mode(PlanFamily::Cbsp)).unwrap();
        prop_assert_eq!(cbsp0.best_plan, cmp.cbsp.plan);
        prop_assert_eq!(cbsp0.best_eval.total, cmp.cbsp.eval.total);
    }

    #[test]
    fn sample_size_bound_monotone(s in setup(), margin in 0.05f64..1.0, bump in 0.01f64..0.5) {
        let base = CostModel::new(0.1 + margin, 0.1, 0.5, 0.1, s.c_r).unwrap();
        let dearer = CostModel { c_s: base.c_s + bump, ..base };
        let stricter = CostModel { c_r: base.c_r + bump, ..base };
        let n0 = n_upper_bound(&s.priors, &s.loss, &base).unwrap();
        prop_assert!(n_upper_bound(&s.priors, &s.loss, &dearer).unwrap() <= n0);
        prop_assert!(n_upper_bound(&s.priors, &s.loss, &stricter).unwrap() >= n0);
    }

    #[test]
    fn simulation_is_reproducible_and_order_free(seed in any::<u64>(), lam in (0.1f64..2.0, 0.1f64..2.0), phi in (1.0f64..5.0, 1.0f64..5.0)) {
        let theta = Theta::new(vec![lam.0, lam.1], vec![phi.0, phi.1]).unwrap();
        let plan = Plan::new(6, 4, 2, 0.4).unwrap();
        let a = simulate_dataset(&theta, &plan, seed).unwrap();
        let b = simulate_dataset(&theta, &plan, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let mut shuffled: Vec<FailureRecord<f64>> = a.data.records.clone();
        shuffled.reverse();
        let again = RawDataset::new(6, 0.4, 2, Regime::Type2 { r: 4 }, shuffled, a.data.stress_changed).unwrap();
        prop_assert_eq!(suff_stats(&again, &plan).unwrap(), a.stats);
    }

    #[test]
    fn mle_is_a_local_maximum(seed in any::<u64>(), lam in (0.2f64..2.0, 0.2f64..2.0), phi in (1.5f64..5.0, 1.5f64..5.0)) {
        let theta = Theta::new(vec![lam.0, lam.1], vec![phi.0, phi.1]).unwrap();
        let plan = Plan::new(40, 30, 30, 0.5).unwrap();
        let sim = simulate_dataset(&theta, &plan, seed).unwrap();
        let fit = fit_mle(&sim.data).unwrap();
        prop_assume!(fit.phi_hat.iter().all(Option::is_some) && fit.lambda_hat.iter().all(|l| *l > 0.0));
        let l: Vec<f64> = fit.lambda_hat.clone();
        let p: Vec<f64> = fit.phi_hat.iter().map(|x| x.unwrap()).collect();
        prop_assume!(p.iter().all(|x| *x > 0.0));
        let best = log_likelihood(&sim.stats, &l, &p);
        for k in 0..2 {
            for h in [0.99, 1.01] {
                let mut l2 = l.clone();
                l2[k] *= h;
                prop_assert!(log_likelihood(&sim.stats, &l2, &p) <= best);
                let mut p2 = p.clone();
                p2[k] *= h;
                prop_assert!(log_likelihood(&sim.stats, &l, &p2) <= best);
            }
        }
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let priors = PriorSpec::new(vec![2.5, 2.2], vec![1.5, 2.0], vec![10.0, 10.0]).unwrap();
    let loss = LossPoly::new(2.0, vec![3.0, 3.0], vec![vec![4.0, 4.0], vec![0.0, 4.0]]).unwrap();
    let costs = CostModel::new(0.5, 0.25, 5.0, 0.1, 40.0).unwrap();
    let cfg = SearchConfig { fixed_tau: Some(0.14), n_max_override: Some(5), ..SearchConfig::default() };
    let plan = Plan::new(5, 3, 2, 0.14).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            (
                compare_modes(&priors, &loss, &costs, &cfg).unwrap(),
                mc_bayes_risk(&plan, &priors, &loss, &costs, 20_000, 3).unwrap(),
            )
        })
    };
    let one = run(1);
    for threads in [2, 5] {
        assert_eq!(run(threads), one, "{threads} threads");
    }
}
