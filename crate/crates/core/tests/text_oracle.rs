//! The text pipeline against a deliberately naive reference implementation.

mod support;

use proptest::prelude::*;
use support::text_reference::{check_pipeline, corpus_strategy};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn pipeline_matches_reference(pairs in corpus_strategy()) {
        check_pipeline(&pairs)?;
    }
}
