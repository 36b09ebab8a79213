//! Character-level transduction for multi-word token expansion and
//! lemmatization: a frequency dictionary first, then a GRU encoder-decoder
//! with dot-product attention, then the identity.

use std::collections::BTreeMap;

use adapipe_neural::{Embedding, Graph, GruCell, Linear, ParamStore, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::TreebankSentence;
use crate::training::{epoch_batches, TrainConfig, Trainer};

/// Joins the words of an expanded multi-word token.
pub const SEPARATOR: char = ' ';

const UNK: usize = 0;
const BOS: usize = 1;
const EOS: usize = 2;
const UNKNOWN_TAG: &str = "<unk>";

#[derive(Debug, Error)]
pub enum TransducerError {
    #[error("no training pairs")]
    EmptyTrainingSet,
    #[error("bad transducer metadata: {0}")]
    Format(String),
    #[error(transparent)]
    Neural(#[from] adapipe_neural::NeuralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Dictionary,
    Model,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transduction {
    pub input: String,
    pub output: String,
    pub source: Source,
}

/// One training example.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TransducerPair {
    pub input: String,
    pub context: String,
    pub output: String,
}

impl TransducerPair {
    pub fn new(input: &str, context: &str, output: &str) -> Self {
        TransducerPair {
            input: input.to_string(),
            context: context.to_string(),
            output: output.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransducerConfig {
    pub char_dim: usize,
    pub tag_dim: usize,
    pub hidden: usize,
    /// Dictionary keys are lowercased inputs.
    pub lowercase_keys: bool,
    /// Uppercase the output's first letter when the input's is uppercase.
    pub restore_initial_case: bool,
    /// Unseen all-caps inputs of two or more letters map to themselves.
    pub acronym_guard: bool,
    pub train: TrainConfig,
}

impl TransducerConfig {
    pub fn lemmatizer() -> Self {
        TransducerConfig {
            char_dim: 16,
            tag_dim: 8,
            hidden: 32,
            lowercase_keys: true,
            restore_initial_case: false,
            acronym_guard: true,
            train: TrainConfig {
                epochs: 30,
                lr: 3e-3,
                ..TrainConfig::default()
            },
        }
    }

    pub fn mwt() -> Self {
        TransducerConfig {
            restore_initial_case: true,
            acronym_guard: false,
            ..Self::lemmatizer()
        }
    }
}

/// Serializable description of everything but the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransducerMeta {
    pub config: TransducerConfig,
    pub chars: Vec<char>,
    pub tags: Vec<String>,
    /// `(key, context, output)`
    pub dictionary: Vec<(String, String, String)>,
}

#[derive(Debug, Clone)]
pub struct TransducerModel {
    pub store: ParamStore,
    pub config: TransducerConfig,
    chars: Vec<char>,
    char_index: BTreeMap<char, usize>,
    tags: Vec<String>,
    dictionary: BTreeMap<(String, String), String>,
    char_emb: Embedding,
    tag_emb: Embedding,
    enc_fwd: GruCell,
    enc_bwd: GruCell,
    bridge: Linear,
    attn: Linear,
    dec: GruCell,
    out: Linear,
}

/// Most frequent output per `(key, context)`, ties to the smallest output.
fn build_dictionary(pairs: &[TransducerPair], lowercase: bool) -> BTreeMap<(String, String), String> {
    let mut counts: BTreeMap<(String, String), BTreeMap<&str, usize>> = BTreeMap::new();
    for p in pairs {
        let key = if lowercase { p.input.to_lowercase() } else { p.input.clone() };
        *counts
            .entry((key, p.context.clone()))
            .or_default()
            .entry(p.output.as_str())
            .or_insert(0) += 1;
    }
    counts
        .into_iter()
        .map(|(k, outs)| {
            // BTreeMap iterates outputs in order, so the first maximum wins
            let mut best = ("", 0);
            for (o, c) in outs {
                if c > best.1 {
                    best = (o, c);
                }
            }
            (k, best.0.to_string())
        })
        .collect()
}

fn is_acronym(s: &str) -> bool {
    let letters: Vec<char> = s.chars().filter(|c| c.is_alphabetic()).collect();
    letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase())
}

fn restore_case(input: &str, output: String) -> String {
    let starts_upper = input.chars().next().is_some_and(char::is_uppercase);
    let mut chars = output.chars();
    match chars.next() {
        Some(c) if starts_upper && c.is_lowercase() => c.to_uppercase().chain(chars).collect(),
        _ => output,
    }
}

impl TransducerModel {
    fn with_meta(meta: TransducerMeta, seed: u64) -> Self {
        let c = &meta.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let s = &mut store;
        let v = meta.chars.len() + 3;
        let h = c.hidden;
        let char_emb = Embedding::new(s, "chars", v, c.char_dim, &mut rng);
        let tag_emb = Embedding::new(s, "tags", meta.tags.len(), c.tag_dim, &mut rng);
        let enc_fwd = GruCell::new(s, "enc_fwd", c.char_dim, h, &mut rng);
        let enc_bwd = GruCell::new(s, "enc_bwd", c.char_dim, h, &mut rng);
        let bridge = Linear::new(s, "bridge", 2 * h, h, &mut rng);
        let attn = Linear::new(s, "attn", 2 * h, h, &mut rng);
        let dec = GruCell::new(s, "dec", c.char_dim + c.tag_dim, h, &mut rng);
        let out = Linear::new(s, "out", 3 * h, v, &mut rng);
        let char_index = meta.chars.iter().enumerate().map(|(i, &ch)| (ch, i + 3)).collect();
        TransducerModel {
            store,
            config: meta.config,
            chars: meta.chars,
            char_index,
            tags: meta.tags,
            dictionary: meta
                .dictionary
                .into_iter()
                .map(|(k, c, o)| ((k, c), o))
                .collect(),
            char_emb,
            tag_emb,
            enc_fwd,
            enc_bwd,
            bridge,
            attn,
            dec,
            out,
        }
    }

    /// Untrained model with the alphabet and tag set of `pairs` and their
    /// dictionary.
    pub fn new(pairs: &[TransducerPair], config: TransducerConfig, seed: u64) -> Self {
        let mut chars: Vec<char> = pairs
            .iter()
            .flat_map(|p| p.input.chars().chain(p.output.chars()))
            .collect();
        chars.sort_unstable();
        chars.dedup();
        let mut tags: Vec<String> = pairs.iter().map(|p| p.context.clone()).collect();
        tags.sort();
        tags.dedup();
        tags.insert(0, UNKNOWN_TAG.to_string());
        let dictionary = build_dictionary(pairs, config.lowercase_keys)
            .into_iter()
            .map(|((k, c), o)| (k, c, o))
            .collect();
        Self::with_meta(
            TransducerMeta {
                config,
                chars,
                tags,
                dictionary,
            },
            seed,
        )
    }

    pub fn meta(&self) -> TransducerMeta {
        TransducerMeta {
            config: self.config.clone(),
            chars: self.chars.clone(),
            tags: self.tags.clone(),
            dictionary: self
                .dictionary
                .iter()
                .map(|((k, c), o)| (k.clone(), c.clone(), o.clone()))
                .collect(),
        }
    }

    pub fn from_parts(meta: TransducerMeta, tensors: &[(String, Tensor)]) -> Result<Self, TransducerError> {
        let mut m = Self::with_meta(meta, 0);
        m.store.load_named(tensors)?;
        Ok(m)
    }

    pub fn num_params(&self) -> usize {
        self.store.num_values()
    }

    pub fn dictionary_len(&self) -> usize {
        self.dictionary.len()
    }

    fn char_id(&self, c: char) -> usize {
        self.char_index.get(&c).copied().unwrap_or(UNK)
    }

    fn tag_id(&self, tag: &str) -> usize {
        self.tags.iter().position(|t| t == tag).unwrap_or(0)
    }

    fn key(&self, input: &str) -> String {
        if self.config.lowercase_keys {
            input.to_lowercase()
        } else {
            input.to_string()
        }
    }

    pub fn lookup(&self, input: &str, context: &str) -> Option<&str> {
        self.dictionary
            .get(&(self.key(input), context.to_string()))
            .map(String::as_str)
    }

    /// Encoder states (`n x 2h`), attention keys and the decoder's initial
    /// state.
    fn encode<'a>(&self, g: &mut Graph<'a>, s: &'a ParamStore, input: &[usize]) -> (Var, Var, Var) {
        let h0 = g.constant(Tensor::zeros(1, self.config.hidden));
        let emb = self.char_emb.forward(g, s, input);
        let n = input.len();
        let xs: Vec<Var> = (0..n).map(|i| g.slice_rows(emb, i, 1)).collect();
        let mut fwd = Vec::with_capacity(n);
        let mut h = h0;
        for &x in &xs {
            h = self.enc_fwd.step(g, s, x, h);
            fwd.push(h);
        }
        let mut bwd = vec![h0; n];
        let mut h = h0;
        for i in (0..n).rev() {
            h = self.enc_bwd.step(g, s, xs[i], h);
            bwd[i] = h;
        }
        let fwd_all = g.concat_rows(&fwd);
        let bwd_all = g.concat_rows(&bwd);
        let states = g.concat_cols(&[fwd_all, bwd_all]);
        let keys = self.attn.forward(g, s, states);
        let summary = g.concat_cols(&[fwd[n - 1], bwd[0]]);
        let init = self.bridge.forward(g, s, summary);
        let init = g.tanh(init);
        (states, keys, init)
    }

    /// One decoder step: new state and `1 x V` logits.
    #[allow(clippy::too_many_arguments)]
    fn decode_step<'a>(
        &self,
        g: &mut Graph<'a>,
        s: &'a ParamStore,
        states: Var,
        keys: Var,
        tag: Var,
        prev: usize,
        h: Var,
    ) -> (Var, Var) {
        let e = self.char_emb.forward(g, s, &[prev]);
        let x = g.concat_cols(&[e, tag]);
        let h = self.dec.step(g, s, x, h);
        let scores = g.matmul_nt(h, keys);
        let alpha = g.softmax_rows(scores);
        let ctx = g.matmul(alpha, states);
        let feat = g.concat_cols(&[h, ctx]);
        (h, self.out.forward(g, s, feat))
    }

    /// Teacher-forced summed cross-entropy of `output` (plus end symbol),
    /// with parameters drawn from `s`.
    pub fn loss_with<'a>(&self, g: &mut Graph<'a>, s: &'a ParamStore, pair: &TransducerPair) -> Var {
        let input: Vec<usize> = pair.input.chars().map(|c| self.char_id(c)).collect();
        assert!(!input.is_empty(), "empty transducer input");
        let mut targets: Vec<usize> = pair.output.chars().map(|c| self.char_id(c)).collect();
        targets.push(EOS);
        let (states, keys, mut h) = self.encode(g, s, &input);
        let tag = self.tag_emb.forward(g, s, &[self.tag_id(&pair.context)]);
        let mut logits = Vec::with_capacity(targets.len());
        let mut prev = BOS;
        for &t in &targets {
            let (nh, l) = self.decode_step(g, s, states, keys, tag, prev, h);
            h = nh;
            logits.push(l);
            prev = t;
        }
        let all = g.concat_rows(&logits);
        g.cross_entropy(all, &targets, None)
    }

    /// Greedy decoding capped at `2 * len + 5` symbols.
    pub fn decode(&self, input: &str, context: &str) -> String {
        let ids: Vec<usize> = input.chars().map(|c| self.char_id(c)).collect();
        if ids.is_empty() {
            return String::new();
        }
        let mut g = Graph::new();
        let s = &self.store;
        let (states, keys, mut h) = self.encode(&mut g, s, &ids);
        let tag = self.tag_emb.forward(&mut g, s, &[self.tag_id(context)]);
        let mut out = String::new();
        let mut prev = BOS;
        for _ in 0..2 * ids.len() + 5 {
            let (nh, logits) = self.decode_step(&mut g, s, states, keys, tag, prev, h);
            h = nh;
            let next = g.argmax_rows(logits)[0];
            if next == EOS {
                break;
            }
            if next >= 3 {
                out.push(self.chars[next - 3]);
            }
            prev = next;
        }
        out
    }

    /// Dictionary, then model, then identity. Never returns empty output for
    /// a nonempty input.
    pub fn transduce(&self, input: &str, context: &str) -> Transduction {
        let finish = |output: String, source| {
            let output = if self.config.restore_initial_case && source != Source::Identity {
                restore_case(input, output)
            } else {
                output
            };
            Transduction {
                input: input.to_string(),
                output,
                source,
            }
        };
        if let Some(o) = self.lookup(input, context) {
            return finish(o.to_string(), Source::Dictionary);
        }
        if self.config.acronym_guard && is_acronym(input) {
            return finish(input.to_string(), Source::Identity);
        }
        let decoded = self.decode(input, context);
        if decoded.trim().is_empty() {
            finish(input.to_string(), Source::Identity)
        } else {
            finish(decoded, Source::Model)
        }
    }

    /// Words of a multi-word token; a single word when expansion fails.
    pub fn expand_mwt(&self, surface: &str) -> Vec<String> {
        let t = self.transduce(surface, "_");
        let words: Vec<String> = t
            .output
            .split(SEPARATOR)
            .filter(|w| !w.is_empty())
            .map(str::to_string)
            .collect();
        if words.is_empty() {
            vec![surface.to_string()]
        } else {
            words
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransducerTrainReport {
    pub epoch_losses: Vec<f64>,
    /// Distinct pairs the network was trained on.
    pub distinct_pairs: usize,
}

/// Builds the dictionary and trains the network on the distinct pairs.
pub fn train_transducer(
    pairs: &[TransducerPair],
    config: TransducerConfig,
) -> Result<(TransducerModel, TransducerTrainReport), TransducerError> {
    let pairs: Vec<TransducerPair> = pairs.iter().filter(|p| !p.input.is_empty()).cloned().collect();
    if pairs.is_empty() {
        return Err(TransducerError::EmptyTrainingSet);
    }
    let train = config.train.clone();
    let mut model = TransducerModel::new(&pairs, config, train.seed);
    let mut distinct = pairs.clone();
    distinct.sort();
    distinct.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed.wrapping_add(1));
    let mut trainer = Trainer::new(&train, distinct.len());
    let mut epoch_losses = Vec::with_capacity(train.epochs);
    for _ in 0..train.epochs {
        let mut total = 0.0;
        let mut symbols = 0.0;
        for batch in epoch_batches(distinct.len(), train.batch_size, &mut rng) {
            let mut grads = adapipe_neural::Gradients::new();
            let mut weight = 0.0;
            for &i in &batch {
                let mut g = Graph::new();
                let loss = model.loss_with(&mut g, &model.store, &distinct[i]);
                total += g.scalar(loss);
                weight += (distinct[i].output.chars().count() + 1) as f64;
                grads.merge(g.backward(loss));
            }
            symbols += weight;
            trainer.step(&mut [&mut model.store], grads, weight)?;
        }
        epoch_losses.push(total / symbols.max(1.0));
    }
    Ok((
        model,
        TransducerTrainReport {
            epoch_losses,
            distinct_pairs: distinct.len(),
        },
    ))
}

/// `(form, UPOS, lemma)` for every word.
pub fn lemma_pairs(treebank: &[TreebankSentence]) -> Vec<TransducerPair> {
    treebank
        .iter()
        .flat_map(|s| &s.rows)
        .filter(|r| !r.form.is_empty() && r.lemma != "_")
        .map(|r| TransducerPair::new(&r.form, &r.upos, &r.lemma))
        .collect()
}

/// `(surface, "_", words joined by the separator)` for every multi-word token.
pub fn mwt_pairs(treebank: &[TreebankSentence]) -> Vec<TransducerPair> {
    let mut out = Vec::new();
    for s in treebank {
        for m in &s.mwt_ranges {
            let words: Vec<&str> = s.rows[m.start - 1..m.end].iter().map(|r| r.form.as_str()).collect();
            out.push(TransducerPair::new(&m.form, "_", &words.join(&SEPARATOR.to_string())));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> TransducerConfig {
        TransducerConfig {
            char_dim: 4,
            tag_dim: 2,
            hidden: 5,
            train: TrainConfig {
                epochs: 1,
                ..TrainConfig::default()
            },
            ..TransducerConfig::lemmatizer()
        }
    }

    #[test]
    fn dictionary_takes_majority() {
        let mut pairs = vec![TransducerPair::new("ran", "VERB", "run"); 3];
        pairs.push(TransducerPair::new("ran", "VERB", "ran"));
        let m = TransducerModel::new(&pairs, quick(), 0);
        assert_eq!(m.lookup("ran", "VERB"), Some("run"));
        let t = m.transduce("ran", "VERB");
        assert_eq!((t.output.as_str(), t.source), ("run", Source::Dictionary));
    }

    #[test]
    fn dictionary_tie_takes_smallest() {
        let pairs = vec![TransducerPair::new("x", "_", "b"), TransducerPair::new("x", "_", "a")];
        assert_eq!(TransducerModel::new(&pairs, quick(), 0).lookup("x", "_"), Some("a"));
    }

    #[test]
    fn mwt_dictionary_expansion() {
        let pairs = vec![TransducerPair::new("del", "_", "de la"); 10];
        let m = TransducerModel::new(&pairs, TransducerConfig::mwt(), 0);
        assert_eq!(m.expand_mwt("del"), vec!["de", "la"]);
        assert_eq!(m.expand_mwt("Del"), vec!["De", "la"]);
    }

    #[test]
    fn untrained_model_falls_back_to_identity() {
        let pairs = vec![TransducerPair::new("ab", "X", "ab")];
        let mut m = TransducerModel::new(&pairs, quick(), 0);
        // force the end symbol to win at every step
        let b = m.store.id("out/b").unwrap();
        m.store.value_mut(b).data_mut()[EOS] = 100.0;
        let t = m.transduce("zz", "X");
        assert_eq!((t.output.as_str(), t.source), ("zz", Source::Identity));
        assert_eq!(m.expand_mwt("zz"), vec!["zz"]);
    }

    #[test]
    fn acronyms_are_kept() {
        let pairs = vec![TransducerPair::new("casa", "NOUN", "casa")];
        let m = TransducerModel::new(&pairs, quick(), 0);
        let t = m.transduce("NATO", "PROPN");
        assert_eq!((t.output.as_str(), t.source), ("NATO", Source::Identity));
    }

    #[test]
    fn meta_round_trip() {
        let pairs = vec![TransducerPair::new("gatos", "NOUN", "gato")];
        let (m, _) = train_transducer(&pairs, quick()).unwrap();
        let back = TransducerModel::from_parts(m.meta(), &m.store.named_tensors()).unwrap();
        assert_eq!(back.meta(), m.meta());
        assert_eq!(back.decode("gatas", "NOUN"), m.decode("gatas", "NOUN"));
    }

    #[test]
    fn empty_training_set_is_rejected() {
        assert!(matches!(
            train_transducer(&[], quick()),
            Err(TransducerError::EmptyTrainingSet)
        ));
    }
}
