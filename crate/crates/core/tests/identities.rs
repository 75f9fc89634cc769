//! Algebraic identities on random instances, driven by proptest seeds.

mod common;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kraus_sets_are_complete(seed in any::<u64>()) {
        prop_assert!(common::kraus_completeness(seed, 1) < 1e-12);
    }

    #[test]
    fn orthogonality_fix_keeps_channel(seed in any::<u64>()) {
        prop_assert!(common::orthogonality_fixing(seed, 1) < 1e-10);
    }

    #[test]
    fn branch_images_orthogonal_with_invariant_rate_sum(seed in any::<u64>()) {
        prop_assert!(common::branch_identities(seed, 1) < 1e-10);
    }

    #[test]
    fn effective_hamiltonian_matches_liouvillian(seed in any::<u64>()) {
        prop_assert!(common::heff_matching(seed, 1) < 1e-11);
    }

    #[test]
    fn liouvillian_preserves_trace_and_hermiticity(seed in any::<u64>()) {
        prop_assert!(common::trace_preservation(seed, 1) < 1e-12);
    }

    #[test]
    fn shift_and_rotation_leave_generator_unchanged(seed in any::<u64>()) {
        prop_assert!(common::gauge_invariance(seed, 1) < 1e-11);
    }
}
