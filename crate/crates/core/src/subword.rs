//! Byte-pair subword vocabulary, greedy longest-match tokenization with
//! character offsets, and chunking to the encoder's maximum length.
//!
//! Text is first split at whitespace. Inside each whitespace-delimited
//! substring, every character that is neither alphanumeric nor a combining
//! mark stands alone as its own unit, so merges never glue punctuation to a
//! word. Offsets count Unicode scalar values, not bytes.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap, HashMap, HashSet};
use std::ops::Range;

use thiserror::Error;

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const PAD: usize = 2;
pub const UNK: usize = 3;
pub const SPECIALS: [&str; 4] = ["<s>", "</s>", "<pad>", "<unk>"];

/// Rendering prefix for pieces that continue a whitespace-delimited substring.
pub const CONTINUATION_MARKER: &str = "##";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("target size {target} cannot hold {alphabet} characters plus 4 specials")]
    TargetTooSmall { target: usize, alphabet: usize },
    #[error("vocabulary line {line}: {message}")]
    BadFile { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubwordVocab {
    pieces: Vec<String>,
    index: HashMap<String, usize>,
    max_piece_chars: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WordpieceSeq {
    pub piece_ids: Vec<usize>,
    /// Half-open `(start, end)` character offsets into the source text.
    pub offsets: Vec<(usize, usize)>,
    /// Index of the whitespace-delimited substring (or input word) each piece
    /// came from.
    pub space_split_index: Vec<usize>,
    /// Whether the piece continues its substring rather than starting it.
    pub continuation: Vec<bool>,
}

impl WordpieceSeq {
    pub fn len(&self) -> usize {
        self.piece_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.piece_ids.is_empty()
    }

    /// Pieces of every substring: `groups()[i]` lists the piece indices with
    /// `space_split_index == i`.
    pub fn groups(&self, count: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); count];
        for (p, &w) in self.space_split_index.iter().enumerate() {
            out[w].push(p);
        }
        out
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

fn is_combining_mark(c: char) -> bool {
    matches!(c as u32, 0x0300..=0x036F | 0x1AB0..=0x1AFF | 0x1DC0..=0x1DFF | 0x20D0..=0x20FF | 0xFE20..=0xFE2F)
}

/// Splits `chars[range]` (no whitespace) into maximal word-character runs and
/// single other characters.
fn units(chars: &[char], range: Range<usize>) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut i = range.start;
    while i < range.end {
        if is_word_char(chars[i]) {
            let start = i;
            while i < range.end && is_word_char(chars[i]) {
                i += 1;
            }
            out.push(start..i);
        } else {
            out.push(i..i + 1);
            i += 1;
        }
    }
    out
}

/// Whitespace-delimited substrings of `chars` as character ranges.
fn space_split(chars: &[char]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        out.push(start..i);
    }
    out
}

impl SubwordVocab {
    /// Builds a vocabulary from an explicit piece list; the first four pieces
    /// must be the specials in order.
    pub fn from_pieces(pieces: Vec<String>) -> Result<Self, VocabError> {
        for (i, s) in SPECIALS.iter().enumerate() {
            if pieces.get(i).map(String::as_str) != Some(*s) {
                return Err(VocabError::BadFile {
                    line: i,
                    message: format!("expected special `{}`", s),
                });
            }
        }
        let mut index = HashMap::with_capacity(pieces.len());
        let mut max_piece_chars = 1;
        for (i, p) in pieces.iter().enumerate() {
            if p.is_empty() || p.chars().any(char::is_whitespace) {
                return Err(VocabError::BadFile {
                    line: i,
                    message: "piece is empty or contains whitespace".into(),
                });
            }
            if index.insert(p.clone(), i).is_some() {
                return Err(VocabError::BadFile {
                    line: i,
                    message: format!("duplicate piece `{}`", p),
                });
            }
            if i >= SPECIALS.len() {
                max_piece_chars = max_piece_chars.max(p.chars().count());
            }
        }
        Ok(SubwordVocab {
            pieces,
            index,
            max_piece_chars,
        })
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn piece(&self, id: usize) -> &str {
        &self.pieces[id]
    }

    pub fn id(&self, piece: &str) -> Option<usize> {
        self.index.get(piece).copied()
    }

    /// Piece text with the continuation marker applied.
    pub fn display(&self, id: usize, continuation: bool) -> String {
        if continuation && id >= SPECIALS.len() {
            format!("{}{}", CONTINUATION_MARKER, self.pieces[id])
        } else {
            self.pieces[id].clone()
        }
    }

    /// One piece per line, line number = id.
    pub fn to_file_string(&self) -> String {
        let mut s = self.pieces.join("\n");
        s.push('\n');
        s
    }

    pub fn from_file_string(text: &str) -> Result<Self, VocabError> {
        Self::from_pieces(text.lines().map(str::to_string).collect())
    }

    /// Greedy longest-match segmentation of `text`.
    pub fn tokenize(&self, text: &str) -> WordpieceSeq {
        let chars: Vec<char> = text.chars().collect();
        let mut seq = WordpieceSeq::default();
        for (w, range) in space_split(&chars).into_iter().enumerate() {
            self.tokenize_range(&chars, range, w, &mut seq);
        }
        seq
    }

    /// Tokenizes pre-split words as if joined by single spaces. Piece offsets
    /// refer to that joined string and `space_split_index` is the word index
    /// even when a word contains whitespace. A word yielding no pieces gets a
    /// zero-width `<unk>`.
    pub fn tokenize_words<S: AsRef<str>>(&self, words: &[S]) -> WordpieceSeq {
        let mut seq = WordpieceSeq::default();
        let mut base = 0;
        for (w, word) in words.iter().enumerate() {
            let chars: Vec<char> = word.as_ref().chars().collect();
            let before = seq.len();
            for range in space_split(&chars) {
                self.tokenize_range(&chars, range, w, &mut seq);
            }
            if seq.len() == before {
                seq.piece_ids.push(UNK);
                seq.offsets.push((0, 0));
                seq.space_split_index.push(w);
                seq.continuation.push(false);
            }
            for o in &mut seq.offsets[before..] {
                o.0 += base;
                o.1 += base;
            }
            base += chars.len() + 1;
        }
        seq
    }

    fn tokenize_range(&self, chars: &[char], range: Range<usize>, w: usize, seq: &mut WordpieceSeq) {
        let substring_start = range.start;
        let mut buf = String::new();
        for unit in units(chars, range) {
            let mut p = unit.start;
            while p < unit.end {
                let longest = self.max_piece_chars.min(unit.end - p);
                let mut matched = None;
                for len in (1..=longest).rev() {
                    buf.clear();
                    buf.extend(&chars[p..p + len]);
                    if let Some(&id) = self.index.get(buf.as_str()) {
                        if id >= SPECIALS.len() {
                            matched = Some((id, len));
                            break;
                        }
                    }
                }
                let (id, len) = matched.unwrap_or((UNK, 1));
                seq.piece_ids.push(id);
                seq.offsets.push((p, p + len));
                seq.space_split_index.push(w);
                seq.continuation.push(p != substring_start);
                p += len;
            }
        }
    }
}

/// Trains a byte-pair vocabulary of at most `target_size` pieces.
///
/// Merges are counted over the units described in the module docs. The most
/// frequent adjacent pair merges first; ties go to the lexicographically
/// smallest `(left, right)` pair, so the result depends only on the corpus and
/// `target_size`. `_seed` is accepted for interface stability and unused.
pub fn train_vocab(corpus: &str, target_size: usize, _seed: u64) -> Result<SubwordVocab, VocabError> {
    let chars: Vec<char> = corpus.chars().collect();
    let mut unit_counts: BTreeMap<String, i64> = BTreeMap::new();
    for range in space_split(&chars) {
        for u in units(&chars, range) {
            *unit_counts.entry(chars[u].iter().collect()).or_insert(0) += 1;
        }
    }
    if unit_counts.is_empty() {
        return Err(VocabError::EmptyCorpus);
    }
    let alphabet: Vec<char> = {
        let mut set: Vec<char> = unit_counts.keys().flat_map(|u| u.chars()).collect();
        set.sort_unstable();
        set.dedup();
        set
    };
    if target_size < alphabet.len() + SPECIALS.len() {
        return Err(VocabError::TargetTooSmall {
            target: target_size,
            alphabet: alphabet.len(),
        });
    }

    let mut symbols: Vec<String> = alphabet.iter().map(|c| c.to_string()).collect();
    let mut symbol_id: HashMap<String, u32> =
        symbols.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
    let mut pieces: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    let mut in_vocab: HashSet<String> = pieces.iter().cloned().collect();
    for s in &symbols {
        if in_vocab.insert(s.clone()) {
            pieces.push(s.clone());
        }
    }

    let mut words: Vec<(Vec<u32>, i64)> = unit_counts
        .iter()
        .map(|(u, &c)| (u.chars().map(|ch| symbol_id[&ch.to_string()]).collect(), c))
        .collect();

    let mut pair_counts: HashMap<(u32, u32), i64> = HashMap::new();
    let mut locations: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (wi, (syms, count)) in words.iter().enumerate() {
        for p in syms.windows(2) {
            let key = (p[0], p[1]);
            *pair_counts.entry(key).or_insert(0) += count;
            locations.entry(key).or_default().insert(wi);
        }
    }
    // max-heap on count, then lexicographically smallest strings
    type Entry = (i64, Reverse<(String, String)>, (u32, u32));
    let mut heap: BinaryHeap<Entry> = pair_counts
        .iter()
        .map(|(&k, &c)| (c, Reverse((symbols[k.0 as usize].clone(), symbols[k.1 as usize].clone())), k))
        .collect();

    while pieces.len() < target_size {
        let best = loop {
            match heap.pop() {
                None => break None,
                Some((c, _, key)) if pair_counts.get(&key) == Some(&c) && c > 0 => break Some(key),
                Some(_) => continue,
            }
        };
        let Some((left, right)) = best else { break };
        let merged = format!("{}{}", symbols[left as usize], symbols[right as usize]);
        let new_id = *symbol_id.entry(merged.clone()).or_insert_with(|| {
            symbols.push(merged.clone());
            (symbols.len() - 1) as u32
        });
        if in_vocab.insert(merged.clone()) {
            pieces.push(merged);
        }
        let mut affected: Vec<usize> = locations
            .remove(&(left, right))
            .unwrap_or_default()
            .into_iter()
            .collect();
        affected.sort_unstable();
        let mut touched: HashSet<(u32, u32)> = HashSet::new();
        for wi in affected {
            let (syms, count) = &mut words[wi];
            if !syms.windows(2).any(|p| p[0] == left && p[1] == right) {
                continue;
            }
            for p in syms.windows(2) {
                let key = (p[0], p[1]);
                *pair_counts.get_mut(&key).unwrap() -= *count;
                touched.insert(key);
            }
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
                    out.push(new_id);
                    i += 2;
                } else {
                    out.push(syms[i]);
                    i += 1;
                }
            }
            *syms = out;
            for p in syms.windows(2) {
                let key = (p[0], p[1]);
                *pair_counts.entry(key).or_insert(0) += *count;
                locations.entry(key).or_default().insert(wi);
                touched.insert(key);
            }
        }
        let mut touched: Vec<_> = touched.into_iter().collect();
        touched.sort_unstable();
        for key in touched {
            let c = pair_counts[&key];
            if c > 0 {
                heap.push((
                    c,
                    Reverse((symbols[key.0 as usize].clone(), symbols[key.1 as usize].clone())),
                    key,
                ));
            }
        }
    }
    SubwordVocab::from_pieces(pieces)
}

/// Consecutive, non-overlapping piece-index ranges covering `0..len`, each at
/// most `max_len - 2` long (room for the `<s>` and `</s>` sentinels).
pub fn chunk(len: usize, max_len: usize) -> Vec<Range<usize>> {
    assert!(max_len > 2, "max_len must leave room for content between sentinels");
    let size = max_len - 2;
    (0..len)
        .step_by(size)
        .map(|start| start..(start + size).min(len))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(extra: &[&str]) -> SubwordVocab {
        let mut p: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        p.extend(extra.iter().map(|s| s.to_string()));
        SubwordVocab::from_pieces(p).unwrap()
    }

    #[test]
    fn longest_match_wins() {
        let v = vocab(&["Jo", "hn", "John"]);
        let s = v.tokenize("John");
        assert_eq!(s.piece_ids, vec![v.id("John").unwrap()]);
        assert_eq!(s.offsets, vec![(0, 4)]);
    }

    #[test]
    fn whitespace_runs_are_skipped() {
        let v = vocab(&["a", "b"]);
        let s = v.tokenize("a  b");
        assert_eq!(s.offsets, vec![(0, 1), (3, 4)]);
        assert_eq!(s.space_split_index, vec![0, 1]);
        assert_eq!(s.continuation, vec![false, false]);
    }

    #[test]
    fn unknown_character() {
        let v = vocab(&["n"]);
        let s = v.tokenize("né");
        assert_eq!(s.piece_ids, vec![v.id("n").unwrap(), UNK]);
        assert_eq!(s.offsets, vec![(0, 1), (1, 2)]);
        assert_eq!(s.continuation, vec![false, true]);
        assert_eq!(v.display(UNK, true), "<unk>");
    }

    #[test]
    fn punctuation_stands_alone() {
        let v = vocab(&["ran", "n.", ".", "ra"]);
        let s = v.tokenize("ran.");
        assert_eq!(s.offsets, vec![(0, 3), (3, 4)]);
    }

    #[test]
    fn specials_are_not_matched_from_text() {
        let v = vocab(&["<", ">", "s"]);
        let s = v.tokenize("<s>");
        assert_eq!(s.len(), 3);
        assert!(s.piece_ids.iter().all(|&id| id > UNK));
    }

    #[test]
    fn single_character_corpus() {
        let v = train_vocab("xxxx xx x", 10, 0).unwrap();
        assert!(v.pieces().starts_with(&["<s>".to_string(), "</s>".into(), "<pad>".into(), "<unk>".into()]));
        assert!(v.id("x").is_some());
    }

    #[test]
    fn target_too_small() {
        assert_eq!(
            train_vocab("abc", 6, 0),
            Err(VocabError::TargetTooSmall { target: 6, alphabet: 3 })
        );
        assert_eq!(train_vocab("  \n", 10, 0), Err(VocabError::EmptyCorpus));
    }

    #[test]
    fn file_round_trip() {
        let v = train_vocab("hello world, hello there", 20, 0).unwrap();
        assert_eq!(SubwordVocab::from_file_string(&v.to_file_string()).unwrap(), v);
    }

    #[test]
    fn chunk_examples() {
        assert_eq!(chunk(5, 7), vec![0..5]);
        assert_eq!(chunk(10, 7), vec![0..5, 5..10]);
        assert!(chunk(0, 7).is_empty());
        assert_eq!(chunk(700, 512), vec![0..510, 510..700]);
    }

    #[test]
    fn tokenize_words_aligns_by_word() {
        let v = vocab(&["a", "b", "c"]);
        let s = v.tokenize_words(&["ab", "", "c"]);
        assert_eq!(s.space_split_index, vec![0, 0, 1, 2]);
        assert_eq!(s.offsets, vec![(0, 1), (1, 2), (3, 3), (4, 5)]);
        assert_eq!(s.piece_ids[2], UNK);
    }
}
