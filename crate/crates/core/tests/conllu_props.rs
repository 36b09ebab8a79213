mod common;

use adapipe::conllu::{canonicalize, parse_conllu, serialize_conllu};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn thousand_random_sentences_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let gold = common::random_treebank(&mut rng, 1000);
    let text = serialize_conllu(&gold).unwrap();
    let parsed = parse_conllu(&text).unwrap();
    assert_eq!(parsed, gold);
    assert_eq!(serialize_conllu(&parsed).unwrap(), text);
    assert!(gold.iter().any(|s| !s.mwt_ranges.is_empty()));
    assert!(gold.iter().any(|s| s.rows.iter().any(|r| !r.space_after())));
}

fn noisy(text: &str, bom: bool, crlf: bool, trailing_ws: bool, extra_blank: usize) -> String {
    let mut out = String::new();
    if bom {
        out.push('\u{feff}');
    }
    let nl = if crlf { "\r\n" } else { "\n" };
    for line in text.lines() {
        out.push_str(line);
        if trailing_ws && !line.is_empty() {
            out.push_str(" \t");
        }
        out.push_str(nl);
    }
    for _ in 0..extra_blank {
        out.push_str(nl);
    }
    out
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(seed in any::<u64>(), count in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold = common::random_treebank(&mut rng, count);
        let text = serialize_conllu(&gold).unwrap();
        prop_assert_eq!(parse_conllu(&text).unwrap(), gold);
    }

    #[test]
    fn parse_then_serialize_is_canonical(
        seed in any::<u64>(),
        bom in any::<bool>(),
        crlf in any::<bool>(),
        trailing_ws in any::<bool>(),
        extra_blank in 0usize..3,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold = common::random_treebank(&mut rng, 4);
        let mut text = noisy(&serialize_conllu(&gold).unwrap(), bom, crlf, trailing_ws, extra_blank);
        if extra_blank == 0 {
            // drop the final blank line entirely
            while text.ends_with('\n') || text.ends_with('\r') {
                text.pop();
            }
        }
        let parsed = parse_conllu(&text).unwrap();
        prop_assert_eq!(serialize_conllu(&parsed).unwrap(), canonicalize(&text));
    }

    #[test]
    fn surface_text_has_one_token_per_range(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = common::random_sentence(&mut rng, 1);
        let covered: usize = s.mwt_ranges.iter().map(|m| m.end - m.start + 1).sum();
        prop_assert_eq!(s.tokens().len(), s.rows.len() - covered + s.mwt_ranges.len());
    }
}
