mod common;

use decaf::envs::{EnvKind, EnvSpec};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = EnvKind> {
    prop::sample::select(EnvKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn random_policy_keeps_invariants(kind in kind(), env_seed in any::<u64>(), policy_seed in any::<u64>()) {
        let spec = EnvSpec::new(kind);
        if let Err(e) = common::random_policy_episode(&spec, env_seed, policy_seed) {
            return Err(TestCaseError::fail(format!("{kind}: {e}")));
        }
    }

    #[test]
    fn episodes_are_deterministic(kind in kind(), env_seed in any::<u64>(), policy_seed in any::<u64>()) {
        let spec = EnvSpec::new(kind);
        let a = common::random_policy_episode(&spec, env_seed, policy_seed).unwrap();
        let b = common::random_policy_episode(&spec, env_seed, policy_seed).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn shaped_job_keeps_invariants() {
    let spec = EnvSpec::new(EnvKind::Job).with_shaping(true);
    for s in 0..5 {
        common::random_policy_episode(&spec, s, s + 100).unwrap();
    }
}

#[test]
fn short_horizons_and_small_grids() {
    let mut p = decaf::envs::EnvParams::default();
    p.horizon = Some(3);
    p.job_grid = 3;
    p.plant_grid = 4;
    for kind in EnvKind::ALL {
        let spec = EnvSpec::with_params(kind, p.clone());
        let t = common::random_policy_episode(&spec, 1, 2).unwrap();
        assert_eq!(t.allocations.len(), 3, "{kind}");
    }
}
