//! Independent reference implementations and random generators shared by the
//! integration tests.
#![allow(dead_code)]

use adapipe::conllu::{MwtRange, TreebankSentence, WordRow};
use adapipe::ner::Crf;
use adapipe_neural::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---- byte-pair vocabulary ----

fn is_word_char(c: char) -> bool {
    let u = c as u32;
    c.is_alphanumeric()
        || (0x300..=0x36F).contains(&u)
        || (0x1AB0..=0x1AFF).contains(&u)
        || (0x1DC0..=0x1DFF).contains(&u)
        || (0x20D0..=0x20FF).contains(&u)
        || (0xFE20..=0xFE2F).contains(&u)
}

/// Merge units of a corpus: whitespace split, then maximal word-character
/// runs; any other character is a unit on its own.
pub fn naive_units(corpus: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in corpus.split_whitespace() {
        let mut run = String::new();
        for c in word.chars() {
            if is_word_char(c) {
                run.push(c);
            } else {
                if !run.is_empty() {
                    out.push(std::mem::take(&mut run));
                }
                out.push(c.to_string());
            }
        }
        if !run.is_empty() {
            out.push(run);
        }
    }
    out
}

/// Textbook BPE: recount every adjacent pair from scratch each round, merge
/// the most frequent (ties to the smallest `(left, right)` strings).
pub fn naive_bpe(corpus: &str, target: usize) -> Vec<String> {
    let mut words: Vec<Vec<String>> = naive_units(corpus)
        .into_iter()
        .map(|u| u.chars().map(|c| c.to_string()).collect())
        .collect();
    let mut alphabet: Vec<char> = corpus.chars().filter(|c| !c.is_whitespace()).collect();
    alphabet.sort_unstable();
    alphabet.dedup();
    let mut pieces: Vec<String> = ["<s>", "</s>", "<pad>", "<unk>"].iter().map(|s| s.to_string()).collect();
    pieces.extend(alphabet.iter().map(|c| c.to_string()));
    while pieces.len() < target {
        let mut counts: std::collections::BTreeMap<(String, String), usize> = Default::default();
        for w in &words {
            for p in w.windows(2) {
                *counts.entry((p[0].clone(), p[1].clone())).or_default() += 1;
            }
        }
        let Some(max) = counts.values().copied().max() else { break };
        // BTreeMap iterates in ascending key order
        let (left, right) = counts.into_iter().find(|(_, c)| *c == max).unwrap().0;
        let merged = format!("{}{}", left, right);
        for w in &mut words {
            let mut out = Vec::with_capacity(w.len());
            let mut i = 0;
            while i < w.len() {
                if i + 1 < w.len() && w[i] == left && w[i + 1] == right {
                    out.push(merged.clone());
                    i += 2;
                } else {
                    out.push(w[i].clone());
                    i += 1;
                }
            }
            *w = out;
        }
        if !pieces.contains(&merged) {
            pieces.push(merged);
        }
    }
    pieces
}

// ---- dependency trees ----

fn is_single_root_tree(heads: &[usize]) -> bool {
    let n = heads.len();
    if heads.iter().filter(|&&h| h == 0).count() != 1 {
        return false;
    }
    for start in 1..=n {
        let mut node = start;
        for _ in 0..=n {
            if node == 0 {
                break;
            }
            node = heads[node - 1];
        }
        if node != 0 {
            return false;
        }
    }
    true
}

/// Best score over every head assignment that forms a tree with exactly one
/// child of the root. `scores[h][d]` as for the decoder.
pub fn brute_force_tree(scores: &[Vec<f64>]) -> f64 {
    let n = scores.len() - 1;
    let mut heads = vec![0usize; n];
    let mut best = f64::NEG_INFINITY;
    loop {
        if heads.iter().enumerate().all(|(d, &h)| h != d + 1) && is_single_root_tree(&heads) {
            let s: f64 = heads.iter().enumerate().map(|(d, &h)| scores[h][d + 1]).sum();
            best = best.max(s);
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            heads[i] += 1;
            if heads[i] <= n {
                break;
            }
            heads[i] = 0;
            i += 1;
        }
    }
}

pub fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![f64::NEG_INFINITY; n + 1]; n + 1];
    for (h, row) in s.iter_mut().enumerate() {
        for (d, v) in row.iter_mut().enumerate().skip(1) {
            if h != d {
                *v = rng.gen_range(-5.0..5.0);
            }
        }
    }
    s
}

// ---- linear-chain CRF ----

pub fn all_paths(t: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..t {
        out = out
            .into_iter()
            .flat_map(|p: Vec<usize>| {
                (0..l).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

/// Score of a path computed directly from the parameters.
pub fn path_score(em: &Tensor, crf: &Crf, path: &[usize]) -> f64 {
    let mut s = crf.start[path[0]] + crf.stop[*path.last().unwrap()];
    for (t, &y) in path.iter().enumerate() {
        s += em.get(t, y);
        if t > 0 {
            s += crf.trans.get(path[t - 1], y);
        }
    }
    s
}

/// `(log Z, best score)` by enumeration.
pub fn enumerate_crf(em: &Tensor, crf: &Crf) -> (f64, f64) {
    let (t, l) = (em.rows(), crf.labels());
    let mut path = vec![0usize; t];
    let mut scores = Vec::with_capacity(l.pow(t as u32));
    'paths: loop {
        scores.push(path_score(em, crf, &path));
        for y in path.iter_mut() {
            *y += 1;
            if *y < l {
                continue 'paths;
            }
            *y = 0;
        }
        break;
    }
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z = best + scores.iter().map(|s| (s - best).exp()).sum::<f64>().ln();
    (z, best)
}

/// Random emissions and parameters; some transitions between non-zero labels
/// are forbidden, label 0 always stays reachable.
pub fn random_crf(rng: &mut ChaCha8Rng, max_t: usize, max_l: usize) -> (Tensor, Crf) {
    let t = rng.gen_range(1..=max_t);
    let l = rng.gen_range(2..=max_l);
    let em = Tensor::from_vec(t, l, (0..t * l).map(|_| rng.gen_range(-2.0..2.0)).collect());
    let mut trans = Tensor::from_vec(l, l, (0..l * l).map(|_| rng.gen_range(-1.0..1.0)).collect());
    for i in 1..l {
        for j in 1..l {
            if rng.gen_bool(0.3) {
                trans.set(i, j, f64::NEG_INFINITY);
            }
        }
    }
    let edge = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..l)
            .map(|j| if j > 0 && rng.gen_bool(0.2) { f64::NEG_INFINITY } else { rng.gen_range(-1.0..1.0) })
            .collect()
    };
    let start = edge(rng);
    let stop = edge(rng);
    (em, Crf { trans, start, stop })
}

// ---- CoNLL-U ----

const LETTERS: &[char] = &['a', 'b', 'k', 'o', 't', 'z', 'é', 'ß', 'ж', 'ω', 'ق', '中', '-', '\'', '.'];
const UPOS: &[&str] = &["NOUN", "VERB", "ADJ", "DET", "PRON", "ADP", "PUNCT", "_"];
const FEATS: &[&str] = &["Case", "Gender", "Number", "Person", "Tense", "VerbForm"];
const DEPRELS: &[&str] = &["root", "nsubj", "obj", "det", "amod", "case", "punct", "acl:relcl", "nmod:poss"];

fn random_form(rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(1..=6);
    (0..len).map(|_| *LETTERS.choose(rng).unwrap()).collect()
}

fn random_feats(rng: &mut ChaCha8Rng) -> String {
    let mut names: Vec<&str> = FEATS.iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
    if names.is_empty() {
        return "_".into();
    }
    names.sort_by_key(|n| n.to_lowercase());
    names
        .iter()
        .map(|n| format!("{}={}", n, ["Sing", "Plur", "Nom", "Past"][rng.gen_range(0..4)]))
        .collect::<Vec<_>>()
        .join("|")
}

fn random_misc(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..4) {
        0 => "SpaceAfter=No".into(),
        1 => "Gloss=x|SpaceAfter=No".into(),
        2 => "NER=B-PER".into(),
        _ => "_".into(),
    }
}

/// A random well-formed sentence: a single-root tree (or no heads at all),
/// optional multi-word tokens and `SpaceAfter=No` marks.
pub fn random_sentence(rng: &mut ChaCha8Rng, index: usize) -> TreebankSentence {
    let n = rng.gen_range(1..=9);
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut heads = vec![0usize; n];
    for (k, &w) in order.iter().enumerate().skip(1) {
        heads[w - 1] = order[rng.gen_range(0..k)];
    }
    let parsed = rng.gen_bool(0.9);
    let mut rows: Vec<WordRow> = (1..=n)
        .map(|id| {
            let mut r = WordRow::new(id, random_form(rng));
            r.lemma = if rng.gen_bool(0.1) { "_".into() } else { random_form(rng) };
            r.upos = UPOS.choose(rng).unwrap().to_string();
            r.xpos = if rng.gen_bool(0.5) { "_".into() } else { format!("X{}", rng.gen_range(0..5)) };
            r.feats = random_feats(rng);
            r.misc = random_misc(rng);
            if parsed {
                r.head = Some(heads[id - 1]);
                r.deprel = if heads[id - 1] == 0 { "root".into() } else { DEPRELS[1..].choose(rng).unwrap().to_string() };
            }
            r
        })
        .collect();
    let mut mwt_ranges = Vec::new();
    let mut i = 1;
    while i < n {
        if rng.gen_bool(0.25) {
            let end = (i + rng.gen_range(1..=2)).min(n);
            let form: String = rows[i - 1..end].iter().map(|r| r.form.as_str()).collect();
            let misc = if rng.gen_bool(0.4) { "SpaceAfter=No".to_string() } else { "_".to_string() };
            for r in &mut rows[i - 1..end] {
                r.misc = "_".into();
            }
            mwt_ranges.push(MwtRange { start: i, end, form, misc });
            i = end + 1;
        } else {
            i += 1;
        }
    }
    let mut s = TreebankSentence {
        comments: vec![format!("# sent_id = s{}", index)],
        rows,
        mwt_ranges,
    };
    if rng.gen_bool(0.7) {
        let text = s.reconstructed_text();
        s.comments.push(format!("# text = {}", text.trim_end()));
    }
    if rng.gen_bool(0.2) {
        s.comments.insert(0, "# newdoc".into());
    }
    s
}

pub fn random_treebank(rng: &mut ChaCha8Rng, count: usize) -> Vec<TreebankSentence> {
    (0..count).map(|i| random_sentence(rng, i + 1)).collect()
}
