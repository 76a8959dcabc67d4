mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_gradient_matches_central_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (net, batch) = common::random_net_and_batch(&mut rng);
        let g = common::gradient_check(&net, &batch, 1e-5);
        prop_assert!(g.max_rel_error < 1e-4, "relative error {}", g.max_rel_error);
        prop_assert!(g.skipped * 20 <= g.checked + g.skipped, "{} of {} skipped", g.skipped, g.checked + g.skipped);
    }
}
