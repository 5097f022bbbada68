mod common;

use gpcompose::algebra::{expand_changes, simplify, to_expr, max_gram_diff};
use gpcompose::gp::{cholesky, gram};
use gpcompose::{parse, render};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn expr_from(seed: u64, depth: usize) -> gpcompose::KernelExpr {
    common::random_expr(&mut ChaCha8Rng::seed_from_u64(seed), depth)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn render_then_parse_is_identity(seed in any::<u64>()) {
        let e = expr_from(seed, 4);
        prop_assert_eq!(parse(&render(&e)).unwrap(), e);
    }

    #[test]
    fn simplify_preserves_the_kernel(seed in any::<u64>()) {
        let e = expr_from(seed, 4);
        let grid = common::uniform_grid(20, -3.0, 3.0);
        let d = max_gram_diff(&e, &to_expr(&simplify(&e)), &grid);
        prop_assert!(d <= 1e-9, "{} differs by {d}", render(&e));
    }

    #[test]
    fn simplify_is_idempotent(seed in any::<u64>()) {
        let e = expr_from(seed, 4);
        let once = simplify(&e);
        prop_assert!(simplify(&to_expr(&once)).approx_eq(&once, 1e-12), "{}", render(&e));
    }

    #[test]
    fn expand_changes_removes_change_nodes(seed in any::<u64>()) {
        let e = expr_from(seed, 4);
        let x = expand_changes(&e);
        prop_assert!(!x.has_changes());
        let grid = common::uniform_grid(12, -3.0, 3.0);
        prop_assert!(max_gram_diff(&e, &x, &grid) <= 1e-10);
    }

    #[test]
    fn gram_is_symmetric_and_psd(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = common::random_expr(&mut rng, 3);
        let x = common::random_grid(&mut rng, 15, -3.0, 3.0, 0.0);
        let k = gram(&e, &x, &x);
        prop_assert!((&k - k.transpose()).amax() <= 1e-12 * (1.0 + k.amax()));
        let min = SymmetricEigen::new(k.clone()).eigenvalues.min();
        prop_assert!(min >= -1e-8, "min eigenvalue {min} for {}", render(&e));
        let mut noisy = k;
        for i in 0..noisy.nrows() {
            noisy[(i, i)] += 0.1;
        }
        prop_assert!(cholesky(&noisy).is_ok());
    }
}
