//! The shared encoder, per-(language, component) adapters, the activation
//! registry and masked-denoising pretraining of the base weights.
//!
//! Input representation of a chunk `<s> w_1 .. w_n </s>` is
//! `LN(E[w] + P[pos] + B[continuation])`, followed by post-norm transformer
//! layers. When an adapter set is active, layer `l`'s output `r` becomes
//! `Up(ReLU(Down(LN_a(r)))) + r` with a layer norm private to the adapter.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;

use adapipe_neural::{
    sha256_hex, Adam, AdamConfig, Embedding, Graph, Init, LayerNorm, Linear, NamedTensors,
    NeuralError, ParamStore, Tensor, TransformerLayer, Var, WarmupLinear, IGNORE_TARGET,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::subword::{chunk, SubwordVocab, WordpieceSeq, BOS, EOS, PAD, SPECIALS};

pub const DEFAULT_BOTTLENECK: usize = 16;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("no adapter set is active")]
    NoActiveAdapter,
    #[error("no adapter set registered for ({language}, {component})")]
    Unregistered {
        language: String,
        component: AdapterComponent,
    },
    #[error("piece id {id} outside vocabulary of {vocab}")]
    PieceOutOfRange { id: usize, vocab: usize },
    #[error("adapter set for dimension {adapter} and {adapter_layers} layers does not fit encoder ({dim}, {layers} layers)")]
    AdapterMismatch {
        adapter: usize,
        adapter_layers: usize,
        dim: usize,
        layers: usize,
    },
    #[error("bottleneck {bottleneck} must be smaller than model dimension {dim}")]
    Bottleneck { bottleneck: usize, dim: usize },
    #[error("encoder file: {0}")]
    Format(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    /// Maximum chunk length including the two sentinels.
    pub max_len: usize,
}

impl EncoderConfig {
    /// Default dimensions: 2 layers, width 64, 4 heads, feed-forward 128,
    /// 512 positions.
    pub fn with_vocab(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            dim: 64,
            layers: 2,
            heads: 4,
            ffn_dim: 128,
            max_len: 512,
        }
    }
}

/// The frozen shared encoder.
#[derive(Debug, Clone)]
pub struct BaseEncoder {
    pub config: EncoderConfig,
    pub store: ParamStore,
    embedding: Embedding,
    positions: Embedding,
    continuation: Embedding,
    input_norm: LayerNorm,
    layers: Vec<TransformerLayer>,
}

/// Per-piece representations of a whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedText {
    /// `K x d`, one row per wordpiece.
    pub reps: Tensor,
    /// `chunks x d`, the `<s>` output of every chunk.
    pub cls: Tensor,
    pub chunks: Vec<Range<usize>>,
}

impl EncodedText {
    /// Index of the chunk containing piece `p`.
    pub fn chunk_of(&self, p: usize) -> usize {
        self.chunks
            .iter()
            .position(|c| c.contains(&p))
            .expect("piece outside every chunk")
    }
}

/// Graph nodes of an encoding, for training through the encoder.
#[derive(Debug, Clone)]
pub struct EncodedVars {
    /// `K x d`
    pub reps: Var,
    /// One `1 x d` node per chunk.
    pub cls: Vec<Var>,
    pub chunks: Vec<Range<usize>>,
}

impl EncodedVars {
    pub fn chunk_of(&self, p: usize) -> usize {
        self.chunks
            .iter()
            .position(|c| c.contains(&p))
            .expect("piece outside every chunk")
    }
}

impl BaseEncoder {
    /// Randomly initialized encoder with every parameter frozen.
    pub fn new(config: EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.dim;
        let embedding = Embedding::new(&mut store, "embedding", config.vocab_size, d, &mut rng);
        let positions = Embedding::new(&mut store, "positions", config.max_len, d, &mut rng);
        let continuation = Embedding::new(&mut store, "continuation", 2, d, &mut rng);
        let input_norm = LayerNorm::new(&mut store, "input_norm", d);
        let layers = (0..config.layers)
            .map(|l| {
                TransformerLayer::new(
                    &mut store,
                    &format!("layer{}", l),
                    d,
                    config.heads,
                    config.ffn_dim,
                    &mut rng,
                )
            })
            .collect();
        store.freeze_all();
        BaseEncoder {
            config,
            store,
            embedding,
            positions,
            continuation,
            input_norm,
            layers,
        }
    }

    pub fn num_params(&self) -> usize {
        self.store.num_values()
    }

    pub fn to_named(&self) -> NamedTensors {
        let meta = serde_json::to_string(&self.config).expect("config serializes");
        NamedTensors::new(meta, self.store.named_tensors())
    }

    /// Bytes of the encoder file.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_named().to_bytes()
    }

    /// SHA-256 of [`Self::to_bytes`].
    pub fn checksum(&self) -> String {
        sha256_hex(&self.to_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EncoderError> {
        let named = NamedTensors::from_bytes(bytes)?;
        let config: EncoderConfig =
            serde_json::from_str(&named.meta).map_err(|e| EncoderError::Format(e.to_string()))?;
        let mut enc = BaseEncoder::new(config, 0);
        enc.store.load_named(&named.tensors)?;
        enc.store.freeze_all();
        Ok(enc)
    }

    fn check_ids(&self, seq: &WordpieceSeq) -> Result<(), EncoderError> {
        match seq.piece_ids.iter().find(|&&id| id >= self.config.vocab_size) {
            Some(&id) => Err(EncoderError::PieceOutOfRange {
                id,
                vocab: self.config.vocab_size,
            }),
            None => Ok(()),
        }
    }

    fn check_adapter(&self, adapter: Option<&AdapterSet>) -> Result<(), EncoderError> {
        if let Some(a) = adapter {
            if a.dim != self.config.dim || a.layers.len() != self.config.layers {
                return Err(EncoderError::AdapterMismatch {
                    adapter: a.dim,
                    adapter_layers: a.layers.len(),
                    dim: self.config.dim,
                    layers: self.config.layers,
                });
            }
        }
        Ok(())
    }

    /// Runs one chunk `<s> ids </s>` and returns all `n + 2` output rows.
    fn forward_chunk<'a>(
        &'a self,
        g: &mut Graph<'a>,
        adapter: Option<&'a AdapterSet>,
        ids: &[usize],
        continuation: &[bool],
    ) -> Var {
        let mut full = Vec::with_capacity(ids.len() + 2);
        full.push(BOS);
        full.extend_from_slice(ids);
        full.push(EOS);
        let mut flags = Vec::with_capacity(full.len());
        flags.push(0);
        flags.extend(continuation.iter().map(|&c| c as usize));
        flags.push(0);
        let positions: Vec<usize> = (0..full.len()).collect();
        let e = self.embedding.forward(g, &self.store, &full);
        let p = self.positions.forward(g, &self.store, &positions);
        let b = self.continuation.forward(g, &self.store, &flags);
        let x = g.add(e, p);
        let x = g.add(x, b);
        let mut h = self.input_norm.forward(g, &self.store, x);
        for (l, layer) in self.layers.iter().enumerate() {
            h = match adapter {
                Some(a) => layer.forward_with_hook(g, &self.store, h, |g, r| a.forward_layer(g, l, r)),
                None => layer.forward(g, &self.store, h),
            };
        }
        h
    }

    /// Encodes `seq` chunk by chunk into graph nodes. With `adapter` set, the
    /// adapter's parameters are trainable leaves of `g`.
    pub fn encode_graph<'a>(
        &'a self,
        g: &mut Graph<'a>,
        adapter: Option<&'a AdapterSet>,
        seq: &WordpieceSeq,
    ) -> Result<EncodedVars, EncoderError> {
        self.check_ids(seq)?;
        self.check_adapter(adapter)?;
        let chunks = chunk(seq.len(), self.config.max_len);
        let mut parts = Vec::with_capacity(chunks.len());
        let mut cls = Vec::with_capacity(chunks.len());
        for c in &chunks {
            let out = self.forward_chunk(
                g,
                adapter,
                &seq.piece_ids[c.clone()],
                &seq.continuation[c.clone()],
            );
            cls.push(g.slice_rows(out, 0, 1));
            parts.push(g.slice_rows(out, 1, c.len()));
        }
        let reps = match parts.len() {
            0 => g.constant(Tensor::zeros(0, self.config.dim)),
            1 => parts[0],
            _ => g.concat_rows(&parts),
        };
        Ok(EncodedVars { reps, cls, chunks })
    }

    /// Forward-only encoding.
    pub fn encode(
        &self,
        adapter: Option<&AdapterSet>,
        seq: &WordpieceSeq,
    ) -> Result<EncodedText, EncoderError> {
        let mut g = Graph::new();
        let vars = self.encode_graph(&mut g, adapter, seq)?;
        let reps = g.value(vars.reps).clone();
        let mut cls = Tensor::zeros(vars.cls.len(), self.config.dim);
        for (i, &c) in vars.cls.iter().enumerate() {
            cls.row_mut(i).copy_from_slice(g.value(c).row(0));
        }
        Ok(EncodedText {
            reps,
            cls,
            chunks: vars.chunks,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterComponent {
    Splitter,
    Tagparse,
    Ner,
}

impl AdapterComponent {
    pub const ALL: [AdapterComponent; 3] = [
        AdapterComponent::Splitter,
        AdapterComponent::Tagparse,
        AdapterComponent::Ner,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdapterComponent::Splitter => "splitter",
            AdapterComponent::Tagparse => "tagparse",
            AdapterComponent::Ner => "ner",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for AdapterComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct AdapterLayer {
    pub norm: LayerNorm,
    pub down: Linear,
    pub up: Linear,
}

/// Trainable adapters of one (language, component) pair: one
/// `(LN, Down, Up)` triple per encoder layer.
#[derive(Debug, Clone)]
pub struct AdapterSet {
    pub language: String,
    pub component: AdapterComponent,
    pub dim: usize,
    pub bottleneck: usize,
    pub store: ParamStore,
    pub layers: Vec<AdapterLayer>,
}

impl AdapterSet {
    /// Down projections random, Up projections zero, so a fresh set is the
    /// identity.
    pub fn new(
        language: &str,
        component: AdapterComponent,
        config: &EncoderConfig,
        bottleneck: usize,
        seed: u64,
    ) -> Result<Self, EncoderError> {
        if bottleneck == 0 || bottleneck >= config.dim {
            return Err(EncoderError::Bottleneck {
                bottleneck,
                dim: config.dim,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let layers = (0..config.layers)
            .map(|l| AdapterLayer {
                norm: LayerNorm::new(&mut store, &format!("layer{}/norm", l), config.dim),
                down: Linear::new(&mut store, &format!("layer{}/down", l), config.dim, bottleneck, &mut rng),
                up: Linear::with_init(
                    &mut store,
                    &format!("layer{}/up", l),
                    bottleneck,
                    config.dim,
                    Init::Zeros,
                    &mut rng,
                ),
            })
            .collect();
        Ok(AdapterSet {
            language: language.to_string(),
            component,
            dim: config.dim,
            bottleneck,
            store,
            layers,
        })
    }

    pub fn num_params(&self) -> usize {
        self.store.num_values()
    }

    /// `Up(ReLU(Down(LN(r)))) + r` for layer `l`.
    pub fn forward_layer<'a>(&'a self, g: &mut Graph<'a>, l: usize, r: Var) -> Var {
        adapter_forward(g, &self.store, &self.layers[l], r)
    }

    /// Sets every Up weight and bias to zero.
    pub fn zero_up(&mut self) {
        for layer in &self.layers {
            for id in [layer.up.weight, layer.up.bias] {
                self.store.value_mut(id).data_mut().fill(0.0);
            }
        }
    }
}

/// The adapter formula over graph nodes.
pub fn adapter_forward<'a>(g: &mut Graph<'a>, store: &'a ParamStore, layer: &AdapterLayer, r: Var) -> Var {
    let c = layer.norm.forward(g, store, r);
    let down = layer.down.forward(g, store, c);
    let act = g.relu(down);
    let up = layer.up.forward(g, store, act);
    g.add(up, r)
}

/// Which registered set is active.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Activation {
    pub language: String,
    pub component: AdapterComponent,
}

/// All adapter sets of a pipeline over one base encoder, at most one active.
#[derive(Debug, Default)]
pub struct AdapterRegistry {
    sets: HashMap<(String, AdapterComponent), AdapterSet>,
    active: Option<(String, AdapterComponent)>,
}

impl AdapterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a set. Replacing the active set keeps it active.
    pub fn register(&mut self, set: AdapterSet) {
        self.sets.insert((set.language.clone(), set.component), set);
    }

    pub fn unregister(&mut self, language: &str, component: AdapterComponent) -> Option<AdapterSet> {
        let key = (language.to_string(), component);
        if self.active.as_ref() == Some(&key) {
            self.active = None;
        }
        self.sets.remove(&key)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn contains(&self, language: &str, component: AdapterComponent) -> bool {
        self.sets.contains_key(&(language.to_string(), component))
    }

    pub fn get(&self, language: &str, component: AdapterComponent) -> Option<&AdapterSet> {
        self.sets.get(&(language.to_string(), component))
    }

    /// Registered pairs in sorted order.
    pub fn pairs(&self) -> Vec<(String, AdapterComponent)> {
        let mut v: Vec<_> = self.sets.keys().cloned().collect();
        v.sort();
        v
    }

    pub fn activate(
        &mut self,
        language: &str,
        component: AdapterComponent,
    ) -> Result<Activation, EncoderError> {
        let key = (language.to_string(), component);
        if !self.sets.contains_key(&key) {
            return Err(EncoderError::Unregistered {
                language: language.to_string(),
                component,
            });
        }
        self.active = Some(key);
        Ok(Activation {
            language: language.to_string(),
            component,
        })
    }

    pub fn deactivate(&mut self) {
        self.active = None;
    }

    pub fn active(&self) -> Option<&AdapterSet> {
        self.active.as_ref().and_then(|k| self.sets.get(k))
    }

    /// Encodes under the active set.
    pub fn encode(&self, base: &BaseEncoder, seq: &WordpieceSeq) -> Result<EncodedText, EncoderError> {
        let set = self.active().ok_or(EncoderError::NoActiveAdapter)?;
        base.encode(Some(set), seq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub mask_prob: f64,
    /// Lines longer than this many pieces are truncated.
    pub max_pieces: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            steps: 300,
            batch_size: 8,
            lr: 2e-3,
            mask_prob: 0.15,
            max_pieces: 64,
            seed: 0,
        }
    }
}

/// Masked-denoising pretraining of every base parameter, then refreezing.
///
/// A random `mask_prob` share of the pieces of each line (at least one) is
/// replaced by `<pad>`, which doubles as the mask symbol, and predicted from
/// the output through the tied input embedding. Returns the mean loss of
/// every step.
pub fn pretrain(
    base: &mut BaseEncoder,
    vocab: &SubwordVocab,
    lines: &[&str],
    config: &PretrainConfig,
) -> Result<Vec<f64>, EncoderError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let seqs: Vec<WordpieceSeq> = lines
        .iter()
        .map(|l| {
            let mut s = vocab.tokenize(l);
            let n = s.len().min(config.max_pieces).min(base.config.max_len - 2);
            s.piece_ids.truncate(n);
            s.offsets.truncate(n);
            s.space_split_index.truncate(n);
            s.continuation.truncate(n);
            s
        })
        .filter(|s| !s.is_empty())
        .collect();
    if seqs.is_empty() || config.steps == 0 {
        return Ok(Vec::new());
    }
    base.store.unfreeze_all();
    let mut adam = Adam::new(AdamConfig::default());
    let schedule = WarmupLinear::with_fraction(config.lr, config.steps, 0.1);
    let mut losses = Vec::with_capacity(config.steps);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut cursor = order.len();
    let result = (|| {
        for step in 0..config.steps {
            let mut grads = adapipe_neural::Gradients::new();
            let mut total = 0.0;
            let mut count = 0usize;
            for _ in 0..config.batch_size {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                let seq = &seqs[order[cursor]];
                cursor += 1;
                let mut masked = seq.clone();
                let mut targets = vec![IGNORE_TARGET; seq.len()];
                for i in 0..seq.len() {
                    if rng.gen_bool(config.mask_prob) {
                        targets[i] = seq.piece_ids[i];
                        masked.piece_ids[i] = PAD;
                    }
                }
                if targets.iter().all(|&t| t == IGNORE_TARGET) {
                    let i = rng.gen_range(0..seq.len());
                    targets[i] = seq.piece_ids[i];
                    masked.piece_ids[i] = PAD;
                }
                let rows: Vec<usize> = (0..seq.len()).filter(|&i| targets[i] != IGNORE_TARGET).collect();
                let gold: Vec<usize> = rows.iter().map(|&i| targets[i]).collect();
                let mut g = Graph::new();
                let enc = base.encode_graph(&mut g, None, &masked)?;
                let h = g.gather_rows(enc.reps, &rows);
                let table = g.param(&base.store, base.embedding.table);
                let logits = g.matmul_nt(h, table);
                // never predict a special
                let mut allowed = vec![true; rows.len() * base.config.vocab_size];
                for r in 0..rows.len() {
                    for s in 0..SPECIALS.len() {
                        allowed[r * base.config.vocab_size + s] = false;
                    }
                }
                let loss = g.cross_entropy(logits, &gold, Some(&allowed));
                total += g.scalar(loss);
                count += rows.len();
                grads.merge(g.backward(loss));
            }
            grads.scale(1.0 / count as f64);
            adam.step(&mut [&mut base.store], &grads, schedule.rate(step))?;
            losses.push(total / count as f64);
        }
        Ok(())
    })();
    base.store.freeze_all();
    result.map(|_| losses)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EncoderConfig {
        EncoderConfig {
            vocab_size: 20,
            dim: 8,
            layers: 2,
            heads: 2,
            ffn_dim: 16,
            max_len: 6,
        }
    }

    fn seq(ids: &[usize]) -> WordpieceSeq {
        WordpieceSeq {
            piece_ids: ids.to_vec(),
            offsets: (0..ids.len()).map(|i| (i, i + 1)).collect(),
            space_split_index: (0..ids.len()).collect(),
            continuation: vec![false; ids.len()],
        }
    }

    #[test]
    fn output_length_matches_pieces_across_chunks() {
        let base = BaseEncoder::new(tiny(), 1);
        let e = base.encode(None, &seq(&[4, 5, 6, 7, 8, 9, 10, 11, 12])).unwrap();
        assert_eq!(e.reps.rows(), 9);
        assert_eq!(e.chunks, vec![0..4, 4..8, 8..9]);
        assert_eq!(e.cls.rows(), 3);
        assert!(e.reps.is_finite());
    }

    #[test]
    fn rejects_out_of_range_ids() {
        let base = BaseEncoder::new(tiny(), 1);
        assert!(matches!(
            base.encode(None, &seq(&[25])),
            Err(EncoderError::PieceOutOfRange { id: 25, vocab: 20 })
        ));
    }

    #[test]
    fn fresh_adapter_is_identity() {
        let base = BaseEncoder::new(tiny(), 1);
        let a = AdapterSet::new("xx", AdapterComponent::Ner, &tiny(), 3, 2).unwrap();
        let s = seq(&[4, 9, 13]);
        assert_eq!(base.encode(Some(&a), &s).unwrap(), base.encode(None, &s).unwrap());
    }

    #[test]
    fn adapter_on_balanced_input_returns_residual() {
        let config = EncoderConfig {
            dim: 2,
            heads: 1,
            ..tiny()
        };
        let mut a = AdapterSet::new("xx", AdapterComponent::Tagparse, &config, 1, 0).unwrap();
        let layer = a.layers[0].clone();
        *a.store.value_mut(layer.down.weight) = Tensor::from_rows(&[vec![1.0], vec![1.0]]);
        *a.store.value_mut(layer.up.weight) = Tensor::from_rows(&[vec![1.0, 1.0]]);
        let mut g = Graph::new();
        let r = g.constant(Tensor::row_vector(vec![1.0, -1.0]));
        let h = a.forward_layer(&mut g, 0, r);
        assert_eq!(g.value(h).data(), &[1.0, -1.0]);
    }

    #[test]
    fn bottleneck_must_be_narrower() {
        assert!(matches!(
            AdapterSet::new("xx", AdapterComponent::Ner, &tiny(), 8, 0),
            Err(EncoderError::Bottleneck { .. })
        ));
    }

    #[test]
    fn registry_errors_name_the_pair() {
        let mut reg = AdapterRegistry::new();
        let err = reg.activate("zz", AdapterComponent::Tagparse).unwrap_err();
        assert_eq!(err.to_string(), "no adapter set registered for (zz, tagparse)");
        let base = BaseEncoder::new(tiny(), 1);
        assert!(matches!(reg.encode(&base, &seq(&[4])), Err(EncoderError::NoActiveAdapter)));
    }

    #[test]
    fn file_round_trip() {
        let base = BaseEncoder::new(tiny(), 3);
        let back = BaseEncoder::from_bytes(&base.to_bytes()).unwrap();
        assert_eq!(back.checksum(), base.checksum());
        assert_eq!(back.config, base.config);
    }

    #[test]
    fn pretraining_lowers_loss_and_refreezes() {
        let vocab = crate::subword::train_vocab("ab ba abab baba aab bba", 12, 0).unwrap();
        let mut base = BaseEncoder::new(EncoderConfig { vocab_size: vocab.len(), ..tiny() }, 4);
        let lines = ["ab ba abab", "baba aab bba", "ab ab ba"];
        let losses = pretrain(
            &mut base,
            &vocab,
            &lines,
            &PretrainConfig {
                steps: 60,
                batch_size: 3,
                lr: 1e-2,
                mask_prob: 0.3,
                max_pieces: 4,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(losses.len(), 60);
        let head: f64 = losses[..10].iter().sum();
        let tail: f64 = losses[50..].iter().sum();
        assert!(tail < head, "{} vs {}", head, tail);
        assert_eq!(base.store.num_trainable_values(), 0);
    }
}
