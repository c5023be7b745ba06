mod common;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fabric_matches_interpreter(seed in any::<u64>()) {
        common::semantic_case(seed).map_err(TestCaseError::fail)?;
    }
}
