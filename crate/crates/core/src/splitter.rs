//! Joint token and sentence segmentation: a 4-way classifier over wordpiece
//! representations and the aggregation of piece labels into tokens,
//! multi-word tokens and sentences.

use adapipe_neural::{FeedForward, Graph, Init, Linear, ParamStore, Var};
#[cfg(test)]
use adapipe_neural::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conllu::TreebankSentence;
use crate::encoder::{AdapterSet, BaseEncoder, EncodedText, EncoderError};
use crate::subword::{SubwordVocab, WordpieceSeq};
use crate::training::{epoch_batches, TrainConfig, Trainer};

/// Ordered by strength; the derived order is also the argmax tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoundaryLabel {
    Inside = 0,
    EndToken = 1,
    EndMwt = 2,
    EndSentence = 3,
}

impl BoundaryLabel {
    pub const ALL: [BoundaryLabel; 4] = [
        BoundaryLabel::Inside,
        BoundaryLabel::EndToken,
        BoundaryLabel::EndMwt,
        BoundaryLabel::EndSentence,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegToken {
    /// Character offsets, half-open.
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub is_mwt: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Segmentation {
    pub sentences: Vec<Vec<SegToken>>,
}

impl Segmentation {
    pub fn tokens(&self) -> impl Iterator<Item = &SegToken> {
        self.sentences.iter().flatten()
    }
}

/// Turns per-piece labels into tokens and sentences.
///
/// A token closes at every `END_*` piece and starts at the first piece after
/// the previous token. `END_MWT` marks the token as multi-word and
/// `END_SENTENCE` also closes the sentence. Pieces left open at the end are
/// closed into a final token and sentence.
pub fn aggregate(labels: &[BoundaryLabel], seq: &WordpieceSeq, text: &str) -> Segmentation {
    assert_eq!(labels.len(), seq.len(), "one label per piece");
    let chars: Vec<char> = text.chars().collect();
    let mut seg = Segmentation::default();
    let mut sentence = Vec::new();
    let mut token_start: Option<usize> = None;
    for (p, &label) in labels.iter().enumerate() {
        let (start, end) = seq.offsets[p];
        let ts = *token_start.get_or_insert(start);
        if label == BoundaryLabel::Inside {
            continue;
        }
        sentence.push(SegToken {
            start: ts,
            end,
            text: chars[ts..end].iter().collect(),
            is_mwt: label == BoundaryLabel::EndMwt,
        });
        token_start = None;
        if label == BoundaryLabel::EndSentence {
            seg.sentences.push(std::mem::take(&mut sentence));
        }
    }
    if let Some(ts) = token_start {
        let end = seq.offsets[seq.len() - 1].1;
        sentence.push(SegToken {
            start: ts,
            end,
            text: chars[ts..end].iter().collect(),
            is_mwt: false,
        });
    }
    if !sentence.is_empty() {
        seg.sentences.push(sentence);
    }
    seg
}

/// Gold token spans against a reconstructed raw text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldDocument {
    pub text: String,
    /// `(start, end, is_mwt)` character spans per sentence.
    pub sentences: Vec<Vec<(usize, usize, bool)>>,
}

/// Rebuilds raw text from token surfaces: single spaces between tokens unless
/// `SpaceAfter=No`, and between sentences unless the last token says
/// `SpaceAfter=No`.
pub fn gold_document(sentences: &[TreebankSentence]) -> GoldDocument {
    let mut text = String::new();
    let mut len = 0usize;
    let mut spans = Vec::with_capacity(sentences.len());
    let mut pending_space = false;
    for s in sentences {
        let mut sent = Vec::new();
        for t in s.tokens() {
            if pending_space {
                text.push(' ');
                len += 1;
            }
            let start = len;
            text.push_str(t.form);
            len += t.form.chars().count();
            sent.push((start, len, t.is_mwt));
            pending_space = t.space_after;
        }
        spans.push(sent);
    }
    GoldDocument {
        text,
        sentences: spans,
    }
}

/// Gold piece labels: every piece takes the strongest boundary ending inside
/// it or at its end. Returns the labels and the number of gold boundaries
/// that fall strictly inside a piece.
pub fn project_gold(seq: &WordpieceSeq, doc: &GoldDocument) -> (Vec<BoundaryLabel>, usize) {
    let mut labels = vec![BoundaryLabel::Inside; seq.len()];
    let mut mismatches = 0;
    for sentence in &doc.sentences {
        for (i, &(_, end, is_mwt)) in sentence.iter().enumerate() {
            let label = if i + 1 == sentence.len() {
                BoundaryLabel::EndSentence
            } else if is_mwt {
                BoundaryLabel::EndMwt
            } else {
                BoundaryLabel::EndToken
            };
            // piece containing character end - 1
            let p = seq.offsets.partition_point(|&(_, e)| e < end);
            if p >= seq.len() || seq.offsets[p].0 >= end {
                continue;
            }
            if seq.offsets[p].1 != end {
                mismatches += 1;
            }
            labels[p] = labels[p].max(label);
        }
    }
    (labels, mismatches)
}

/// Feed-forward head producing 4 logits per piece. The output layer starts at
/// zero, so an untrained head labels everything `INSIDE`.
#[derive(Debug, Clone)]
pub struct SplitterHead {
    pub store: ParamStore,
    ffn: FeedForward,
}

impl SplitterHead {
    pub fn new(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let inner = Linear::new(&mut store, "splitter/inner", dim, hidden, &mut rng);
        let outer = Linear::with_init(&mut store, "splitter/outer", hidden, 4, Init::Zeros, &mut rng);
        SplitterHead {
            store,
            ffn: FeedForward { inner, outer },
        }
    }

    pub fn hidden(&self) -> usize {
        self.ffn.inner.d_out
    }

    pub fn logits<'a>(&'a self, g: &mut Graph<'a>, reps: Var) -> Var {
        self.ffn.forward(g, &self.store, reps)
    }
}

/// Argmax label per piece (ties to the weaker label).
pub fn predict_boundaries(enc: &EncodedText, head: &SplitterHead) -> Vec<BoundaryLabel> {
    if enc.reps.rows() == 0 {
        return Vec::new();
    }
    let mut g = Graph::new();
    let reps = g.constant(enc.reps.clone());
    let logits = head.logits(&mut g, reps);
    g.argmax_rows(logits).into_iter().map(BoundaryLabel::from_index).collect()
}

/// Tokenizes, encodes under `adapter` and aggregates.
pub fn segment(
    base: &BaseEncoder,
    adapter: Option<&AdapterSet>,
    head: &SplitterHead,
    vocab: &SubwordVocab,
    text: &str,
) -> Result<Segmentation, EncoderError> {
    let seq = vocab.tokenize(text);
    if seq.is_empty() {
        return Ok(Segmentation::default());
    }
    let enc = base.encode(adapter, &seq)?;
    Ok(aggregate(&predict_boundaries(&enc, head), &seq, text))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitterTrainReport {
    pub epoch_losses: Vec<f64>,
    pub boundaries: usize,
    /// Gold boundaries falling strictly inside a wordpiece.
    pub mismatched_boundaries: usize,
}

struct Example {
    seq: WordpieceSeq,
    labels: Vec<usize>,
}

/// Consecutive runs of sentences filling at most one encoder chunk each.
fn packed_windows<'t>(treebank: &'t [TreebankSentence], vocab: &SubwordVocab, budget: usize) -> Vec<&'t [TreebankSentence]> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut used = 0;
    for (i, s) in treebank.iter().enumerate() {
        let pieces = vocab.tokenize(&s.text()).len() + 1;
        if i > start && used + pieces > budget {
            out.push(&treebank[start..i]);
            start = i;
            used = 0;
        }
        used += pieces;
    }
    if start < treebank.len() {
        out.push(&treebank[start..]);
    }
    out
}

/// Trains the head (and `adapter`, when given) on gold segmentation. The
/// treebank is cut into windows of `window` consecutive sentences, and again
/// into windows packed up to one encoder chunk so that the head also sees
/// late positions; raw text is reconstructed with [`gold_document`].
pub fn train_splitter(
    base: &BaseEncoder,
    mut adapter: Option<&mut AdapterSet>,
    head: &mut SplitterHead,
    vocab: &SubwordVocab,
    treebank: &[TreebankSentence],
    window: usize,
    config: &TrainConfig,
) -> Result<SplitterTrainReport, EncoderError> {
    let mut examples = Vec::new();
    let mut boundaries = 0;
    let mut mismatched = 0;
    let window = window.max(1);
    let short: Vec<&[TreebankSentence]> = treebank.chunks(window).collect();
    let packed = packed_windows(treebank, vocab, base.config.max_len - 2);
    let packed_count = if packed.iter().any(|w| w.len() > window) { packed.len() } else { 0 };
    for (k, group) in short.iter().chain(&packed[..packed_count]).enumerate() {
        let doc = gold_document(group);
        let seq = vocab.tokenize(&doc.text);
        if seq.is_empty() {
            continue;
        }
        let (labels, mismatches) = project_gold(&seq, &doc);
        if k < short.len() {
            boundaries += doc.sentences.iter().map(Vec::len).sum::<usize>();
            mismatched += mismatches;
        }
        examples.push(Example {
            seq,
            labels: labels.into_iter().map(BoundaryLabel::index).collect(),
        });
    }
    if mismatched > 0 {
        log::warn!(
            "{} of {} gold token boundaries fall inside a wordpiece",
            mismatched,
            boundaries
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trainer = Trainer::new(config, examples.len());
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut epoch_loss = 0.0;
        let mut pieces = 0usize;
        for batch in epoch_batches(examples.len(), config.batch_size, &mut rng) {
            let mut grads = adapipe_neural::Gradients::new();
            let mut weight = 0.0;
            for &i in &batch {
                let ex = &examples[i];
                let mut g = Graph::new();
                let enc = base.encode_graph(&mut g, adapter.as_deref(), &ex.seq)?;
                let logits = head.logits(&mut g, enc.reps);
                let loss = g.cross_entropy(logits, &ex.labels, None);
                epoch_loss += g.scalar(loss);
                weight += ex.labels.len() as f64;
                grads.merge(g.backward(loss));
            }
            pieces += weight as usize;
            let mut stores: Vec<&mut ParamStore> = vec![&mut head.store];
            if let Some(a) = adapter.as_deref_mut() {
                stores.push(&mut a.store);
            }
            trainer.step(&mut stores, grads, weight)?;
        }
        epoch_losses.push(epoch_loss / pieces.max(1) as f64);
    }
    Ok(SplitterTrainReport {
        epoch_losses,
        boundaries,
        mismatched_boundaries: mismatched,
    })
}
