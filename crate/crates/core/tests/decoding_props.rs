mod common;

use adapipe::parserhead::{cle_decode, tree_score};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn spanning_tree_is_optimal(seed in any::<u64>(), n in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores = common::random_scores(&mut rng, n);
        let heads = cle_decode(&scores);
        prop_assert_eq!(heads.len(), n);
        prop_assert_eq!(heads.iter().filter(|&&h| h == 0).count(), 1);
        prop_assert!(adapipe::conllu::validate_heads(
            &heads.iter().map(|&h| Some(h)).collect::<Vec<_>>(),
            false
        ).is_empty());
        prop_assert!((tree_score(&scores, &heads) - common::brute_force_tree(&scores)).abs() < 1e-9);
    }

    #[test]
    fn crf_matches_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (em, crf) = common::random_crf(&mut rng, 6, 5);
        let (z, best) = common::enumerate_crf(&em, &crf);
        prop_assert!((crf.log_partition(&em) - z).abs() < 1e-9);
        let (path, score) = crf.viterbi(&em);
        prop_assert!((common::path_score(&em, &crf, &path) - best).abs() < 1e-9);
        prop_assert!((score - best).abs() < 1e-9);
    }
}
