mod common;

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in 0..24 {
        let err = common::gradient_check(seed);
        assert!(err < 1e-4, "seed {seed}: max relative error {err:e}");
    }
}

#[test]
fn fused_cross_entropy_matches_composed_loss() {
    for seed in 0..24 {
        let err = common::fused_loss_check(seed);
        assert!(err < 1e-4, "seed {seed}: max relative error {err:e}");
    }
}
