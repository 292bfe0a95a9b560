use proptest::prelude::*;

use dcsbm::asymptotics::{
    chi2_pvalue, gaussian_pvalue, null_moments, poisson_moments, PoissonMomentConfig, VarianceMode,
};
use dcsbm::bp::{bp_sweep, em_update, pair_beliefs, run_bp, BpConfig, BpState, Problem};
use dcsbm::graph::{block_statistics, load_edge_list, Graph, LoadOptions};
use dcsbm::models::{
    loglik_complete_dc, loglik_complete_sbm, mle_dc, mle_sbm, sample_dcsbm, sample_sbm, DcParams, PowerLaw,
    SbmParams,
};
use dcsbm::selection::lambda_ground_state;

/// A multigraph on `n` nodes with some isolated nodes and repeated pairs.
fn graph_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n, 1u32..3), 0..3 * n)
            .prop_map(move |edges| Graph::from_edges(n, edges.into_iter().filter(|(u, v, _)| u != v)))
    })
}

fn graph_and_labels(max_n: usize, k: usize) -> impl Strategy<Value = (Graph, Vec<usize>)> {
    graph_strategy(max_n).prop_flat_map(move |g| {
        let n = g.n();
        (Just(g), prop::collection::vec(0..k, n))
    })
}

fn params_strategy(k: usize) -> impl Strategy<Value = SbmParams> {
    (
        prop::collection::vec(0.1f64..1.0, k),
        prop::collection::vec(0.01f64..1.0, k * (k + 1) / 2),
    )
        .prop_map(move |(gamma, upper)| {
            let total: f64 = gamma.iter().sum();
            let gamma = gamma.iter().map(|g| g / total).collect();
            let mut omega = vec![0.0; k * k];
            let mut i = 0;
            for r in 0..k {
                for s in r..k {
                    omega[r * k + s] = upper[i];
                    omega[s * k + r] = upper[i];
                    i += 1;
                }
            }
            SbmParams::new(gamma, omega).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn degree_and_block_counts_sum_to_twice_m((g, labels) in graph_and_labels(20, 3)) {
        let total: u64 = g.degrees().iter().sum();
        prop_assert_eq!(total, 2 * g.m());
        let a = block_statistics(&g, &labels, 3).unwrap();
        prop_assert_eq!(a.block_edge_counts.iter().sum::<u64>(), 2 * g.m());
        prop_assert_eq!(a.block_sizes.iter().sum::<usize>(), g.n());
        for r in 0..3 {
            for s in 0..3 {
                prop_assert_eq!(a.edge_count(r, s), a.edge_count(s, r));
            }
        }
    }

    #[test]
    fn edge_list_round_trip(g in graph_strategy(25)) {
        let mut text = Vec::new();
        g.write_edge_list(&mut text).unwrap();
        let (back, _) = load_edge_list(text.as_slice(), LoadOptions::default()).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn edge_slots_point_along_edges(g in graph_strategy(25)) {
        let slots = g.edge_slots();
        prop_assert_eq!(slots.len(), g.edges().len());
        for (e, &slot) in g.edges().iter().zip(&slots) {
            prop_assert!(g.slots(e.u).contains(&slot));
            prop_assert_eq!(g.target(slot), e.v);
            prop_assert_eq!(g.multiplicity(slot), e.multiplicity);
        }
    }

    #[test]
    fn block_statistics_ignore_node_order((g, labels) in graph_and_labels(15, 2), seed in any::<u64>()) {
        // Relabel nodes by a random permutation, carrying labels along.
        let n = g.n();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let moved = Graph::from_edges(n, g.edges().iter().map(|e| (perm[e.u], perm[e.v], e.multiplicity)));
        let mut moved_labels = vec![0; n];
        for u in 0..n {
            moved_labels[perm[u]] = labels[u];
        }
        let a = block_statistics(&g, &labels, 2).unwrap();
        let b = block_statistics(&moved, &moved_labels, 2).unwrap();
        prop_assert_eq!(&a.block_sizes, &b.block_sizes);
        prop_assert_eq!(&a.block_edge_counts, &b.block_edge_counts);
        prop_assert_eq!(&a.block_mean_degrees, &b.block_mean_degrees);
        prop_assert!((lambda_ground_state(&g, &a) - lambda_ground_state(&moved, &b)).abs() < 1e-9);
    }

    #[test]
    fn lambda_is_nonnegative_and_label_invariant((g, labels) in graph_and_labels(20, 3)) {
        let a = block_statistics(&g, &labels, 3).unwrap();
        let lambda = lambda_ground_state(&g, &a);
        prop_assert!(lambda >= -1e-9, "lambda = {}", lambda);
        let swapped: Vec<usize> = labels.iter().map(|&l| (l + 1) % 3).collect();
        let b = block_statistics(&g, &swapped, 3).unwrap();
        prop_assert!((lambda - lambda_ground_state(&g, &b)).abs() < 1e-9);
    }

    #[test]
    fn unit_theta_likelihoods_coincide((g, labels) in graph_and_labels(15, 2), params in params_strategy(2)) {
        let a = block_statistics(&g, &labels, 2).unwrap();
        let dc = DcParams { gamma: params.gamma.clone(), omega: params.omega.clone(), theta: vec![1.0; g.n()] };
        prop_assert_eq!(loglik_complete_dc(&g, &a, &dc), loglik_complete_sbm(&g, &a, &params));
    }

    #[test]
    fn estimates_are_local_maxima((g, labels) in graph_and_labels(12, 2), which in 0usize..3, up in any::<bool>()) {
        let a = block_statistics(&g, &labels, 2).unwrap();
        let factor = if up { 1.01 } else { 0.99 };
        let (r, s) = [(0, 0), (0, 1), (1, 1)][which];

        let best = mle_sbm(&g, &a).params;
        let top = loglik_complete_sbm(&g, &a, &best);
        let mut omega = best.omega.clone();
        omega[r * 2 + s] *= factor;
        omega[s * 2 + r] = omega[r * 2 + s];
        let trial = SbmParams { gamma: best.gamma.clone(), omega };
        prop_assert!(loglik_complete_sbm(&g, &a, &trial) <= top + 1e-9 * top.abs().max(1.0));

        let best = mle_dc(&g, &a).params;
        let top = loglik_complete_dc(&g, &a, &best);
        let mut omega = best.omega.clone();
        omega[r * 2 + s] *= factor;
        omega[s * 2 + r] = omega[r * 2 + s];
        let trial = DcParams { omega, ..best.clone() };
        prop_assert!(loglik_complete_dc(&g, &a, &trial) <= top + 1e-9 * top.abs().max(1.0));
    }

    #[test]
    fn samplers_are_reproducible(seed in any::<u64>(), params in params_strategy(2)) {
        let scaled = SbmParams { omega: params.omega.iter().map(|w| w * 0.05).collect(), ..params };
        prop_assert_eq!(sample_sbm(60, &scaled, seed).unwrap(), sample_sbm(60, &scaled, seed).unwrap());
        let rule = PowerLaw::default();
        let a = sample_dcsbm(60, &scaled, &rule, seed).unwrap();
        let b = sample_dcsbm(60, &scaled, &rule, seed).unwrap();
        prop_assert_eq!(a.graph, b.graph);
        prop_assert_eq!(a.params, b.params);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn messages_stay_normalized(g in graph_strategy(30), params in params_strategy(3), seed in any::<u64>()) {
        let scaled = SbmParams { omega: params.omega.iter().map(|w| w * 0.1).collect(), ..params };
        let t: Vec<f64> = g.degrees().iter().map(|&d| (d as f64).max(0.5)).collect();
        let problem = Problem::new(&g, t);
        let mut state = BpState::new(&g, 3, 0.1, seed);
        for _ in 0..5 {
            bp_sweep(&mut state, &problem, &scaled, &BpConfig::default());
            for chunk in state.messages.chunks(3).chain(state.marginals.chunks(3)) {
                prop_assert!((chunk.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(chunk.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn block_relabeling_permutes_marginals(g in graph_strategy(20), params in params_strategy(3), seed in any::<u64>()) {
        let n = g.n();
        let scaled = SbmParams { omega: params.omega.iter().map(|w| w * 0.1).collect(), ..params };
        // Block r of the original is block perm[r] of the relabeled problem.
        let perm = [2usize, 0, 1];
        let mut gamma = vec![0.0; 3];
        let mut omega = vec![0.0; 9];
        for r in 0..3 {
            gamma[perm[r]] = scaled.gamma[r];
            for s in 0..3 {
                omega[perm[r] * 3 + perm[s]] = scaled.omega[r * 3 + s];
            }
        }
        let relabeled = SbmParams { gamma, omega };

        let start = BpState::new(&g, 3, 0.2, seed);
        let mut moved_marginals = vec![0.0; 3 * n];
        for u in 0..n {
            for r in 0..3 {
                moved_marginals[u * 3 + perm[r]] = start.marginals[u * 3 + r];
            }
        }
        let mut a = BpState::from_marginals(&g, &start.marginals, 3, seed);
        let mut b = BpState::from_marginals(&g, &moved_marginals, 3, seed);
        let problem = Problem::new(&g, vec![1.0; n]);
        let config = BpConfig { max_sweeps: 10, ..BpConfig::default() };
        run_bp(&mut a, &problem, &scaled, &config);
        run_bp(&mut b, &problem, &relabeled, &config);
        for u in 0..n {
            for r in 0..3 {
                prop_assert!((a.marginals[u * 3 + r] - b.marginals[u * 3 + perm[r]]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hard_marginals_reproduce_estimates((g, labels) in graph_and_labels(15, 2), params in params_strategy(2)) {
        let n = g.n();
        let mut marginals = vec![0.0; 2 * n];
        for (u, &l) in labels.iter().enumerate() {
            marginals[2 * u + l] = 1.0;
        }
        let problem = Problem::new(&g, vec![1.0; n]);
        let state = BpState::from_marginals(&g, &marginals, 2, 0);
        let beliefs = pair_beliefs(&state, &problem, &params);
        let updated = em_update(&problem, &marginals, &beliefs);
        let a = block_statistics(&g, &labels, 2).unwrap();
        prop_assert_eq!(updated, mle_sbm(&g, &a).params);
    }

    #[test]
    fn tighter_tails_barely_move_the_moments(mu in 0.05f64..60.0) {
        let loose = PoissonMomentConfig { tail_mass_tolerance: 1e-9, ..PoissonMomentConfig::default() };
        let tight = PoissonMomentConfig { tail_mass_tolerance: 5e-10, ..loose };
        let a = poisson_moments(mu, &loose);
        let b = poisson_moments(mu, &tight);
        for (x, y) in [(a.f, b.f), (a.phi, b.phi), (a.c, b.c)] {
            prop_assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0), "{} vs {}", x, y);
            prop_assert!((x - y).abs() <= 10.0 * loose.tail_mass_tolerance * x.abs().max(1.0), "{} vs {}", x, y);
        }
    }

    #[test]
    fn v_identity(mu in 0.01f64..200.0) {
        let m = poisson_moments(mu, &PoissonMomentConfig::default());
        let a = 1.0 + mu.ln();
        let direct = m.phi + mu * a * a - 2.0 * m.c * a;
        prop_assert!((m.v() - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn pvalues_decrease_in_lambda(
        sizes in prop::collection::vec(20usize..200, 1..4),
        mu in 1.0f64..8.0,
        lo in 0.0f64..200.0,
        step in 0.5f64..20.0,
    ) {
        let mus = vec![mu; sizes.len()];
        let m = null_moments(&sizes, &mus, VarianceMode::Limiting, &PoissonMomentConfig::default()).unwrap();
        let hi = lo + step;
        let (pl, ph) = (gaussian_pvalue(lo, &m), gaussian_pvalue(hi, &m));
        prop_assert!((0.0..=1.0).contains(&pl) && (0.0..=1.0).contains(&ph));
        if pl > 1e-300 && pl < 1.0 {
            prop_assert!(ph < pl);
        }
        let n: usize = sizes.iter().sum();
        let (cl, ch) = (chi2_pvalue(lo, n, sizes.len()).unwrap(), chi2_pvalue(hi, n, sizes.len()).unwrap());
        prop_assert!((0.0..=1.0).contains(&cl) && (0.0..=1.0).contains(&ch));
        if lo > 0.0 && cl > 1e-300 && cl < 1.0 {
            prop_assert!(ch < cl);
        }
    }
}

#[test]
fn f_and_v_approach_one_half_from_above() {
    let cfg = PoissonMomentConfig::default();
    let grid: Vec<f64> = (0..=80).map(|i| 2.0 + 0.1 * i as f64).collect();
    let f: Vec<f64> = grid.iter().map(|&mu| poisson_moments(mu, &cfg).f).collect();
    let v: Vec<f64> = grid.iter().map(|&mu| poisson_moments(mu, &cfg).v()).collect();
    assert!(f.iter().all(|&x| x > 0.5));
    assert!(v.iter().all(|&x| x > 0.5));
    assert!(f.windows(2).all(|w| w[1] < w[0]));
    assert!(v[v.len() - 1] < v[10]);
    // Below mu ~ 1.66 the variance coefficient drops under one half.
    assert!(poisson_moments(1.0, &cfg).v() < 0.5);
    assert!(poisson_moments(1.0, &cfg).f > 0.5);
}

#[test]
fn single_block_degrees_are_poisson() {
    // n = 10^4, expected degree 4: chi-squared goodness of fit at the 1% level.
    let n = 10_000;
    let params = SbmParams::new(vec![1.0], vec![4.0 / (n as f64 - 1.0)]).unwrap();
    let (g, _) = sample_sbm(n, &params, 17).unwrap();
    let mu: f64 = 4.0;
    let mut observed = vec![0.0; 12];
    for &d in g.degrees() {
        observed[(d as usize).min(11)] += 1.0;
    }
    let pmf = |d: usize| (d as f64 * mu.ln() - mu - (1..=d).map(|i| (i as f64).ln()).sum::<f64>()).exp();
    let mut expected: Vec<f64> = (0..11).map(|d| n as f64 * pmf(d)).collect();
    expected.push(n as f64 - expected.iter().sum::<f64>());
    let stat: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    // 99th percentile of chi-squared with 11 degrees of freedom
    assert!(stat < 24.725, "chi-squared statistic {stat}");
}
