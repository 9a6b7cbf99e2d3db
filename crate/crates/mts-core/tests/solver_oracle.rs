//! Independent dense check of the per-state constrained solves.
//!
//! The production tree solve propagates piecewise-linear responses up and
//! pressures down. The oracle here ignores all of that: it enumerates
//! every active-set assignment (held vs growing for each empty leaf,
//! clamped vs priced for each internal node), solves the resulting linear
//! system by Gaussian elimination, keeps the feasible assignment, and
//! demands the two agree.

mod common;

use common::{dense_kkt, random_kkt_tree, random_state};
use mts_core::{
    star_multiplier_solve, tree_multiplier_solve, EntropicRegularizer, LeafDistribution,
    WeightedRootedTree,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn tree_solve_matches_dense_active_set_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut checked = 0usize;
    let mut with_empty = 0usize;
    for round in 0..500 {
        let tree = random_kkt_tree(&mut rng);
        let n = tree.n_leaves();
        let eta = rng.gen_range(1.0..5.0);
        // Leaf shifts sum upward; keep the root total inside (0, 1].
        let leaf_delta = rng.gen_range(0.2..1.0) / n as f64;
        let reg = EntropicRegularizer::tree_with(&tree, eta, leaf_delta).unwrap();
        let p = random_state(&mut rng, n);
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        if p.iter().any(|&v| v == 0.0) {
            with_empty += 1;
        }

        let state = LeafDistribution::from_masses(&tree, p.clone()).unwrap();
        let got = tree_multiplier_solve(&tree, &state, &c, &reg).unwrap();
        let want = dense_kkt(&tree, &p, &c, &reg)
            .unwrap_or_else(|| panic!("round {round}: no feasible assignment"));

        let tol = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs() + b.abs());
        assert!(tol(got.mu, want.mu), "round {round}: mu {} vs {}", got.mu, want.mu);
        for ix in 0..tree.n_nodes() {
            assert!(
                tol(got.drift[ix], want.drift[ix]),
                "round {round}: drift[{ix}] {} vs {}",
                got.drift[ix],
                want.drift[ix]
            );
            assert!(
                tol(got.lambda_hat[ix], want.lambda_hat[ix]),
                "round {round}: lambda[{ix}] {} vs {}",
                got.lambda_hat[ix],
                want.lambda_hat[ix]
            );
        }
        for pos in 0..n {
            assert!(
                tol(got.xi[pos], want.xi[pos]),
                "round {round}: xi[{pos}] {} vs {}",
                got.xi[pos],
                want.xi[pos]
            );
        }
        assert!(got.residuals.max_abs() <= 1e-9, "round {round}: residuals too large");
        checked += 1;
    }
    println!("checked {checked} trees, {with_empty} had empty leaves");
    assert_eq!(checked, 500);
    assert!(with_empty > 100, "generator stopped producing empty leaves");
}

#[test]
fn depth_one_tree_solve_is_the_star_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    for round in 0..100 {
        let n = rng.gen_range(2..=8usize);
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..3.0)).collect();
        let tree = WeightedRootedTree::star(&weights).unwrap();
        let eta = rng.gen_range(1.0..5.0);
        let delta = rng.gen_range(0.2..1.0) / n as f64;
        let reg = EntropicRegularizer::tree_with(&tree, eta, delta).unwrap();
        let p = random_state(&mut rng, n);
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();

        let state = LeafDistribution::from_masses(&tree, p.clone()).unwrap();
        let via_tree = tree_multiplier_solve(&tree, &state, &c, &reg).unwrap();

        let s: Vec<f64> = (0..n).map(|i| eta / weights[i] * (p[i] + delta)).collect();
        let via_star = star_multiplier_solve(&p, &s, &c);

        assert!((via_tree.mu - via_star.mu).abs() < 1e-9, "round {round}: mu mismatch");
        let leaf_drifts = via_tree.leaf_drifts(Some(&tree));
        for i in 0..n {
            assert!(
                (leaf_drifts[i] - via_star.drift[i]).abs() < 1e-9,
                "round {round}: drift {i} mismatch"
            );
            assert!((via_tree.xi[i] - via_star.xi[i]).abs() < 1e-9);
        }
    }
}

#[test]
fn nonnegative_costs_never_clamp_internal_nodes() {
    // At zero pressure every subtree response is nonpositive, so the inner
    // multiplier solve stays on the priced branch for any costs >= 0.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    for _ in 0..200 {
        let tree = random_kkt_tree(&mut rng);
        let n = tree.n_leaves();
        let reg = EntropicRegularizer::tree_with(
            &tree,
            rng.gen_range(1.0..5.0),
            rng.gen_range(0.2..1.0) / n as f64,
        )
        .unwrap();
        let p = random_state(&mut rng, n);
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        let state = LeafDistribution::from_masses(&tree, p).unwrap();
        let sol = tree_multiplier_solve(&tree, &state, &c, &reg).unwrap();
        assert_eq!(sol.clamp_events, 0);
        assert!(sol.mu >= 0.0);
    }
}
