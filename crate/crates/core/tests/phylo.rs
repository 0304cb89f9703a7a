mod common;

use common::{auc, brute_force_column, chain_enumeration, compose, expm, jc_generator, rel};
use embio::em::EmConfig;
use embio::phylo::{
    chain_forward_backward, column_likelihood, conservation_scores, fit, jc_transition,
    log_likelihood, parse_newick, simulate, PhyloHmmParams,
};
use embio::rng::rng_from_seed;
use rand::Rng;

const FOUR_LEAVES: &str = "((A:0.3,B:0.3):0.2,(C:0.3,D:0.3):0.2);";

#[test]
fn closed_form_kernel_matches_matrix_exponential() {
    let q = jc_generator();
    for beta in [0.01, 0.1, 0.5, 1.0, 5.0] {
        let closed = jc_transition(beta).unwrap();
        let oracle = expm(&q, beta);
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (closed[i][j] - oracle[i][j]).abs() < 1e-12,
                    "beta {beta}: {} vs {}",
                    closed[i][j],
                    oracle[i][j]
                );
            }
        }
    }
}

#[test]
fn kernel_composes() {
    for (s, t) in [(0.01, 0.2), (0.5, 0.5), (1.0, 3.0), (0.3, 5.0)] {
        let left = compose(&jc_transition(s).unwrap(), &jc_transition(t).unwrap());
        let right = jc_transition(s + t).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((left[i][j] - right[i][j]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn pruning_matches_ancestral_enumeration() {
    let mut rng = rng_from_seed(5);
    for draw in 0..50 {
        let b: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..2.0)).collect();
        let newick = format!("((A:{},B:{}):{},C:{});", b[0], b[1], b[2], b[3]);
        let tree = parse_newick(newick.as_bytes()).unwrap();
        let lens = tree.branch_lengths();
        let column: Vec<u8> = (0..3).map(|_| rng.random_range(0..4)).collect();
        let scale = rng.random_range(0.1..1.0);
        let got = column_likelihood(&tree, &lens, &column, scale).unwrap();
        let want = brute_force_column(&tree, &lens, &column, scale);
        assert!(
            (got - want).abs() / want < 1e-10,
            "draw {draw}: {got} vs {want}"
        );
    }
}

#[test]
fn chain_matches_path_enumeration() {
    let mut rng = rng_from_seed(9);
    for _ in 0..50 {
        let len = rng.random_range(1..=6);
        let ec: Vec<f64> = (0..len).map(|_| rng.random_range(0.01..1.0)).collect();
        let en: Vec<f64> = (0..len).map(|_| rng.random_range(0.01..1.0)).collect();
        let (mu, nu) = (rng.random_range(0.01..0.99), rng.random_range(0.01..0.99));
        let got = chain_forward_backward(&ec, &en, mu, nu).unwrap();
        let want = chain_enumeration(&ec, &en, mu, nu);
        assert!(rel(got.loglik, want.loglik) < 1e-12);
        for (a, b) in got.conserved.iter().zip(&want.conserved) {
            assert!((a - b).abs() < 1e-12);
        }
        for s in 0..2 {
            for t in 0..2 {
                assert!((got.transitions[s][t] - want.transitions[s][t]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn simulated_parameters_are_recovered() {
    let tree = parse_newick(FOUR_LEAVES.as_bytes()).unwrap();
    let truth = PhyloHmmParams::from_tree(&tree, 0.1, 0.05, 0.3);
    let (aln, hidden) = simulate(&tree, &truth, 2000, 1).unwrap();
    let em = EmConfig::default().with_restarts(3).with_seed(1);
    let fit = fit::<f64>(&aln, &tree, &em).unwrap();
    let p = &fit.params;
    assert!((p.rho - 0.3).abs() <= 0.1, "rho {}", p.rho);
    assert!((p.mu - 0.1).abs() <= 0.05, "mu {}", p.mu);
    assert!((p.nu - 0.05).abs() <= 0.05, "nu {}", p.nu);
    assert!(fit.trace.is_monotone(1e-9));
    let scores = conservation_scores(&aln, &tree, p).unwrap();
    let a = auc(&scores, &hidden);
    assert!(a >= 0.8, "auc {a}");
}

#[test]
fn fit_dominates_truth_when_states_coincide() {
    let tree = parse_newick(FOUR_LEAVES.as_bytes()).unwrap();
    let truth = PhyloHmmParams::from_tree(&tree, 0.1, 0.05, 0.999);
    let (aln, _) = simulate(&tree, &truth, 500, 4).unwrap();
    let fit = fit::<f64>(
        &aln,
        &tree,
        &EmConfig::default().with_restarts(2).with_seed(4),
    )
    .unwrap();
    let at_truth: f64 = log_likelihood(&aln, &tree, &truth).unwrap();
    assert!(
        fit.loglik >= at_truth - 1e-6 * at_truth.abs(),
        "{} < {at_truth}",
        fit.loglik
    );
}

#[test]
fn simulation_is_reproducible() {
    let tree = parse_newick(FOUR_LEAVES.as_bytes()).unwrap();
    let truth = PhyloHmmParams::from_tree(&tree, 0.1, 0.05, 0.3);
    assert_eq!(
        simulate(&tree, &truth, 100, 1).unwrap(),
        simulate(&tree, &truth, 100, 1).unwrap()
    );
}
