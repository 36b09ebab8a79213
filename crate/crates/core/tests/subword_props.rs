mod common;

use adapipe::subword::{chunk, train_vocab, SubwordVocab, UNK};
use proptest::prelude::*;

fn toy_vocab() -> SubwordVocab {
    train_vocab("the cat sat on the mat. Über straße, naïve café! 東京 こんにちは", 80, 0).unwrap()
}

#[test]
fn merges_follow_the_reference_on_a_fixed_corpus() {
    let corpus = "low lower lowest newer newest wider, widest! aaa aaaa";
    for target in [20, 30, 40, 60] {
        let v = train_vocab(corpus, target, 0).unwrap();
        assert_eq!(v.pieces(), common::naive_bpe(corpus, target).as_slice());
    }
}

proptest! {
    #[test]
    fn merges_match_reference(corpus in "[abcd .,é\u{301}]{1,60}", extra in 0usize..25) {
        let alphabet = {
            let mut a: Vec<char> = corpus.chars().filter(|c| !c.is_whitespace()).collect();
            a.sort_unstable();
            a.dedup();
            a.len()
        };
        prop_assume!(alphabet > 0);
        let target = 4 + alphabet + extra;
        let v = train_vocab(&corpus, target, 0).unwrap();
        let expected = common::naive_bpe(&corpus, target);
        prop_assert_eq!(v.pieces(), expected.as_slice());
    }

    #[test]
    fn offsets_tile_the_non_space_text(text in any::<String>()) {
        let v = toy_vocab();
        let chars: Vec<char> = text.chars().collect();
        let seq = v.tokenize(&text);
        let rebuilt: String = seq.offsets.iter().flat_map(|&(a, b)| chars[a..b].iter()).collect();
        let expected: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        prop_assert_eq!(rebuilt, expected);
        for (i, &(a, b)) in seq.offsets.iter().enumerate() {
            prop_assert!(a < b);
            let piece: String = chars[a..b].iter().collect();
            if seq.piece_ids[i] == UNK {
                prop_assert_eq!(b - a, 1);
            } else {
                prop_assert_eq!(v.piece(seq.piece_ids[i]), piece.as_str());
            }
            if i > 0 {
                let same = seq.space_split_index[i] == seq.space_split_index[i - 1];
                prop_assert_eq!(seq.continuation[i], same);
                prop_assert_eq!(same, seq.offsets[i - 1].1 == a);
            }
        }
    }

    #[test]
    fn chunks_cover_every_piece_once(len in 0usize..3000, max_len in 3usize..600) {
        let chunks = chunk(len, max_len);
        let mut next = 0;
        for c in &chunks {
            prop_assert_eq!(c.start, next);
            prop_assert!(!c.is_empty() && c.len() <= max_len - 2);
            next = c.end;
        }
        prop_assert_eq!(next, len);
        prop_assert_eq!(chunks.len(), len.div_ceil(max_len - 2));
    }
}
