//! CoNLL 2018 shared task evaluation: span F1 for tokens, sentences and
//! words, aligned-word F1 for tags, lemmas and attachments, and exact-match
//! entity F1.
//!
//! Spans are measured over the concatenation of all token forms with
//! whitespace removed, so both files must spell the same characters. Words
//! inside multi-word tokens share their token's span and are aligned by the
//! longest common subsequence of lowercased forms within the smallest region
//! closed under overlapping multi-word tokens.
//!
//! Comparison rules: FEATS keep only universal features, DEPREL drops its
//! subtype, a gold lemma of `_` matches anything.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::TreebankSentence;
use crate::ner::EntitySpan;

const UNIVERSAL_FEATURES: [&str; 21] = [
    "PronType", "NumType", "Poss", "Reflex", "Foreign", "Abbr", "Gender", "Animacy", "Number",
    "Case", "Definite", "Degree", "VerbForm", "Mood", "Tense", "Aspect", "Voice", "Evident",
    "Polarity", "Person", "Polite",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("the concatenation of tokens differs at character {0}")]
    TextMismatch(usize),
    #[error("sentence {0}: empty form")]
    EmptyForm(usize),
}

/// Counts behind one metric.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric: String,
    pub gold: usize,
    pub system: usize,
    pub correct: usize,
    /// Aligned words, for metrics computed over the alignment.
    pub aligned: Option<usize>,
}

/// `100 * num / den` rounded half-up to two decimals; `0` when `den == 0`.
pub fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        return 0.0;
    }
    let (num, den) = (num as u128, den as u128);
    let hundredths = (20_000 * num + den) / (2 * den);
    hundredths as f64 / 100.0
}

impl MetricScore {
    pub fn precision(&self) -> f64 {
        percent(self.correct, self.system)
    }

    pub fn recall(&self) -> f64 {
        percent(self.correct, self.gold)
    }

    pub fn f1(&self) -> f64 {
        percent(2 * self.correct, self.gold + self.system)
    }

    pub fn aligned_accuracy(&self) -> Option<f64> {
        self.aligned.map(|a| percent(self.correct, a))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metrics: Vec<MetricScore>,
    pub ner: Option<MetricScore>,
}

impl ScoreReport {
    pub fn get(&self, metric: &str) -> Option<&MetricScore> {
        self.metrics.iter().chain(&self.ner).find(|m| m.metric == metric)
    }

    /// F1 of `metric` as a percentage.
    pub fn f1(&self, metric: &str) -> Option<f64> {
        self.get(metric).map(MetricScore::f1)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let row = |m: &MetricScore| {
            serde_json::json!({
                "metric": m.metric,
                "precision": m.precision(),
                "recall": m.recall(),
                "f1": m.f1(),
                "aligned_accuracy": m.aligned_accuracy(),
                "gold": m.gold,
                "system": m.system,
                "correct": m.correct,
                "aligned": m.aligned,
            })
        };
        serde_json::json!({
            "metrics": self.metrics.iter().chain(&self.ner).map(row).collect::<Vec<_>>(),
        })
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Metric     | Precision |    Recall |  F1 Score | AligndAcc")?;
        writeln!(f, "-----------+-----------+-----------+-----------+-----------")?;
        for m in self.metrics.iter().chain(&self.ner) {
            write!(
                f,
                "{:<11}|{:>10.2} |{:>10.2} |{:>10.2} |",
                m.metric,
                m.precision(),
                m.recall(),
                m.f1()
            )?;
            match m.aligned_accuracy() {
                Some(a) => writeln!(f, "{:>10.2}", a)?,
                None => writeln!(f)?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Span {
    start: usize,
    end: usize,
}

#[derive(Debug, Clone)]
struct Word {
    span: Span,
    is_multiword: bool,
    form: String,
    lemma: String,
    upos: String,
    xpos: String,
    feats: String,
    deprel: String,
    /// Index of the head word in the flat word list; `None` for the root.
    parent: Option<usize>,
}

struct Document {
    chars: Vec<char>,
    tokens: Vec<Span>,
    sentences: Vec<Span>,
    words: Vec<Word>,
}

fn strip_whitespace(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

fn universal_feats(feats: &str) -> String {
    let mut kept: Vec<&str> = feats
        .split('|')
        .filter(|f| {
            let name = f.split('=').next().unwrap_or("");
            UNIVERSAL_FEATURES.contains(&name)
        })
        .collect();
    kept.sort_unstable();
    kept.join("|")
}

fn load(sentences: &[TreebankSentence]) -> Result<Document, ScoreError> {
    let mut doc = Document {
        chars: Vec::new(),
        tokens: Vec::new(),
        sentences: Vec::new(),
        words: Vec::new(),
    };
    for (si, s) in sentences.iter().enumerate() {
        let sent_start = doc.chars.len();
        let first_word = doc.words.len();
        for tok in s.tokens() {
            let form = strip_whitespace(tok.form);
            if form.is_empty() {
                return Err(ScoreError::EmptyForm(si + 1));
            }
            let start = doc.chars.len();
            doc.chars.extend(form.chars());
            let span = Span {
                start,
                end: doc.chars.len(),
            };
            doc.tokens.push(span);
            for r in &s.rows[tok.words.clone()] {
                doc.words.push(Word {
                    span,
                    is_multiword: tok.is_mwt,
                    form: r.form.clone(),
                    lemma: r.lemma.clone(),
                    upos: r.upos.clone(),
                    xpos: r.xpos.clone(),
                    feats: universal_feats(&r.feats),
                    deprel: r.deprel.split(':').next().unwrap_or("").to_string(),
                    parent: match r.head {
                        Some(h) if h > 0 => Some(first_word + h - 1),
                        _ => None,
                    },
                });
            }
        }
        doc.sentences.push(Span {
            start: sent_start,
            end: doc.chars.len(),
        });
    }
    Ok(doc)
}

fn spans_score(metric: &str, gold: &[Span], system: &[Span]) -> MetricScore {
    let (mut correct, mut gi, mut si) = (0, 0, 0);
    while gi < gold.len() && si < system.len() {
        if system[si].start < gold[gi].start {
            si += 1;
        } else if gold[gi].start < system[si].start {
            gi += 1;
        } else {
            correct += usize::from(gold[gi].end == system[si].end);
            gi += 1;
            si += 1;
        }
    }
    MetricScore {
        metric: metric.to_string(),
        gold: gold.len(),
        system: system.len(),
        correct,
        aligned: None,
    }
}

fn beyond_end(words: &[Word], i: usize, end: usize) -> bool {
    match words.get(i) {
        None => true,
        Some(w) if w.is_multiword => w.span.start >= end,
        Some(w) => w.span.end > end,
    }
}

fn extend_end(w: &Word, end: usize) -> usize {
    if w.is_multiword && w.span.end > end {
        w.span.end
    } else {
        end
    }
}

/// Smallest region starting at `(gi, si)` closed under multi-word tokens:
/// `(gs, ss, gi, si)` with the region being `gs..gi` and `ss..si`.
fn find_multiword_span(gold: &[Word], system: &[Word], mut gi: usize, mut si: usize) -> (usize, usize, usize, usize) {
    let mut end;
    if gold[gi].is_multiword {
        end = gold[gi].span.end;
        if !system[si].is_multiword && system[si].span.start < gold[gi].span.start {
            si += 1;
        }
    } else {
        end = system[si].span.end;
        if !gold[gi].is_multiword && gold[gi].span.start < system[si].span.start {
            gi += 1;
        }
    }
    let (gs, ss) = (gi, si);
    while !beyond_end(gold, gi, end) || !beyond_end(system, si, end) {
        if gi < gold.len() && (si >= system.len() || gold[gi].span.start <= system[si].span.start) {
            end = extend_end(&gold[gi], end);
            gi += 1;
        } else {
            end = extend_end(&system[si], end);
            si += 1;
        }
    }
    (gs, ss, gi, si)
}

/// Pairs `(gold index, system index)` of aligned words.
fn align_words(gold: &[Word], system: &[Word]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let (mut gi, mut si) = (0, 0);
    while gi < gold.len() && si < system.len() {
        if gold[gi].is_multiword || system[si].is_multiword {
            let (gs, ss, ge, se) = find_multiword_span(gold, system, gi, si);
            gi = ge;
            si = se;
            if ge > gs && se > ss {
                let (gn, sn) = (ge - gs, se - ss);
                let same = |g: usize, s: usize| gold[gs + g].form.to_lowercase() == system[ss + s].form.to_lowercase();
                let mut lcs = vec![vec![0usize; sn + 1]; gn + 1];
                for g in (0..gn).rev() {
                    for s in (0..sn).rev() {
                        lcs[g][s] = if same(g, s) { 1 + lcs[g + 1][s + 1] } else { 0 };
                        lcs[g][s] = lcs[g][s].max(lcs[g + 1][s]).max(lcs[g][s + 1]);
                    }
                }
                let (mut g, mut s) = (0, 0);
                while g < gn && s < sn {
                    if same(g, s) {
                        pairs.push((gs + g, ss + s));
                        g += 1;
                        s += 1;
                    } else if lcs[g][s] == lcs[g + 1][s] {
                        g += 1;
                    } else {
                        s += 1;
                    }
                }
            }
        } else if gold[gi].span == system[si].span {
            pairs.push((gi, si));
            gi += 1;
            si += 1;
        } else if gold[gi].span.start <= system[si].span.start {
            gi += 1;
        } else {
            si += 1;
        }
    }
    pairs
}

/// Scores a system treebank against gold.
pub fn evaluate(gold: &[TreebankSentence], system: &[TreebankSentence]) -> Result<ScoreReport, ScoreError> {
    let g = load(gold)?;
    let s = load(system)?;
    if let Some(i) = (0..g.chars.len().max(s.chars.len())).find(|&i| g.chars.get(i) != s.chars.get(i)) {
        return Err(ScoreError::TextMismatch(i));
    }
    let mut metrics = vec![
        spans_score("Tokens", &g.tokens, &s.tokens),
        spans_score("Sentences", &g.sentences, &s.sentences),
    ];
    let pairs = align_words(&g.words, &s.words);
    metrics.push(MetricScore {
        metric: "Words".into(),
        gold: g.words.len(),
        system: s.words.len(),
        correct: pairs.len(),
        aligned: None,
    });
    let mut sys_to_gold = vec![None; s.words.len()];
    for &(gw, sw) in &pairs {
        sys_to_gold[sw] = Some(gw);
    }
    // head of a system word expressed in gold indices; `Err` when unaligned
    let sys_parent = |w: &Word| -> Result<Option<usize>, ()> {
        match w.parent {
            None => Ok(None),
            Some(p) => sys_to_gold[p].map(Some).ok_or(()),
        }
    };
    type Key<'w> = Box<dyn Fn(&Word, &Word) -> bool + 'w>;
    let keys: Vec<(&str, Key)> = vec![
        ("UPOS", Box::new(|a: &Word, b: &Word| a.upos == b.upos)),
        ("XPOS", Box::new(|a: &Word, b: &Word| a.xpos == b.xpos)),
        ("UFeats", Box::new(|a: &Word, b: &Word| a.feats == b.feats)),
        ("Lemmas", Box::new(|a: &Word, b: &Word| a.lemma == "_" || a.lemma == b.lemma)),
        ("UAS", Box::new(|a: &Word, b: &Word| sys_parent(b) == Ok(a.parent))),
        (
            "LAS",
            Box::new(|a: &Word, b: &Word| sys_parent(b) == Ok(a.parent) && a.deprel == b.deprel),
        ),
    ];
    for (name, key) in keys {
        let correct = pairs.iter().filter(|&&(gw, sw)| key(&g.words[gw], &s.words[sw])).count();
        metrics.push(MetricScore {
            metric: name.to_string(),
            gold: g.words.len(),
            system: s.words.len(),
            correct,
            aligned: Some(pairs.len()),
        });
    }
    Ok(ScoreReport { metrics, ner: None })
}

/// Exact-match entity F1 over parallel sentences.
pub fn score_ner(gold: &[Vec<EntitySpan>], system: &[Vec<EntitySpan>]) -> MetricScore {
    let mut score = MetricScore {
        metric: "Entities".into(),
        gold: 0,
        system: 0,
        correct: 0,
        aligned: None,
    };
    for (i, g) in gold.iter().enumerate() {
        let s: &[EntitySpan] = system.get(i).map_or(&[], Vec::as_slice);
        let gs: HashSet<&EntitySpan> = g.iter().collect();
        let ss: HashSet<&EntitySpan> = s.iter().collect();
        score.gold += gs.len();
        score.system += ss.len();
        score.correct += gs.intersection(&ss).count();
    }
    score.system += system.iter().skip(gold.len()).map(Vec::len).sum::<usize>();
    score
}
