//! Joint UPOS / XPOS / UFeats tagging and biaffine dependency parsing over
//! wordpiece-averaged word vectors, with Chu-Liu/Edmonds decoding.
//!
//! Word `i` is the mean of its pieces. Tags come from three feed-forward
//! classifiers. For parsing, `[x_cls; t_1..t_N]` passes through a shared
//! feed-forward block, then through separate head and dependent projections
//! for arcs and for labels. Arc scores are
//! `S[j][i] = h_i^T U d_j + w_h . h_i + w_d . d_j + b` for head `i` (0 = root)
//! of dependent `j`.

use std::collections::HashMap;

use adapipe_neural::{
    FeedForward, Graph, Init, Linear, ParamId, ParamStore, Tensor, Var,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conllu::TreebankSentence;
use crate::encoder::{AdapterSet, BaseEncoder, EncodedText, EncodedVars, EncoderError};
use crate::subword::{SubwordVocab, WordpieceSeq};
use crate::training::{epoch_batches, TrainConfig, Trainer};

/// Tag inventory ordered by training frequency (descending, ties
/// lexicographic), so id 0 is the most frequent tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TagVocab {
    tags: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for TagVocab {
    fn from(tags: Vec<String>) -> Self {
        Self::from_tags(tags)
    }
}

impl From<TagVocab> for Vec<String> {
    fn from(v: TagVocab) -> Self {
        v.tags
    }
}

impl TagVocab {
    pub fn build<'a>(tags: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tags {
            *counts.entry(t).or_insert(0) += 1;
        }
        let mut sorted: Vec<(&str, usize)> = counts.into_iter().collect();
        sorted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_tags(sorted.into_iter().map(|(t, _)| t.to_string()).collect())
    }

    pub fn from_tags(tags: Vec<String>) -> Self {
        let index = tags.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        TagVocab { tags, index }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn id(&self, tag: &str) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn tag(&self, id: usize) -> &str {
        &self.tags[id]
    }

    /// True when the column carries no information (only `_`).
    pub fn is_trivial(&self) -> bool {
        self.tags.iter().all(|t| t == "_")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagParseDims {
    pub tag_hidden: usize,
    pub dep_dim: usize,
    pub arc_dim: usize,
    pub label_dim: usize,
}

impl Default for TagParseDims {
    fn default() -> Self {
        TagParseDims {
            tag_hidden: 32,
            dep_dim: 32,
            arc_dim: 32,
            label_dim: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagParseVocabs {
    pub upos: TagVocab,
    pub xpos: TagVocab,
    pub feats: TagVocab,
    pub deprel: TagVocab,
}

impl TagParseVocabs {
    pub fn from_treebank(sentences: &[TreebankSentence]) -> Self {
        let rows = || sentences.iter().flat_map(|s| &s.rows);
        TagParseVocabs {
            upos: TagVocab::build(rows().map(|r| r.upos.as_str())),
            xpos: TagVocab::build(rows().map(|r| r.xpos.as_str())),
            feats: TagVocab::build(rows().map(|r| r.feats.as_str())),
            deprel: TagVocab::build(rows().map(|r| r.deprel.as_str())),
        }
    }

    pub fn xpos_enabled(&self) -> bool {
        !self.xpos.is_trivial()
    }
}

#[derive(Debug, Clone)]
struct Biaffine {
    head: Linear,
    dep: Linear,
    w_head: Linear,
    w_dep: Linear,
    outputs: usize,
    width: usize,
}

/// The tagging and parsing head of one (language or shared) model.
#[derive(Debug, Clone)]
pub struct TagParseHead {
    pub store: ParamStore,
    pub dims: TagParseDims,
    pub vocabs: TagParseVocabs,
    upos: FeedForward,
    xpos: Option<FeedForward>,
    feats: FeedForward,
    dep: FeedForward,
    arc: Biaffine,
    label: Biaffine,
    arc_u: ParamId,
    label_u: ParamId,
}

fn tagger(store: &mut ParamStore, name: &str, d: usize, h: usize, n: usize, rng: &mut ChaCha8Rng) -> FeedForward {
    FeedForward {
        inner: Linear::new(store, &format!("{}/inner", name), d, h, rng),
        outer: Linear::with_init(store, &format!("{}/outer", name), h, n, Init::Zeros, rng),
    }
}

impl TagParseHead {
    pub fn new(dim: usize, dims: TagParseDims, vocabs: TagParseVocabs, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let s = &mut store;
        let upos = tagger(s, "tagparse/upos", dim, dims.tag_hidden, vocabs.upos.len(), &mut rng);
        let xpos = vocabs
            .xpos_enabled()
            .then(|| tagger(s, "tagparse/xpos", dim, dims.tag_hidden, vocabs.xpos.len(), &mut rng));
        let feats = tagger(s, "tagparse/feats", dim, dims.tag_hidden, vocabs.feats.len(), &mut rng);
        let dep = FeedForward::new(s, "tagparse/dep", dim, dims.dep_dim, dims.dep_dim, &mut rng);
        let mut biaffine = |s: &mut ParamStore, name: &str, width: usize, outputs: usize| {
            let u = s.add_init(
                format!("{}/u", name),
                width,
                width * outputs,
                Init::Zeros,
                &mut rng,
            );
            let b = Biaffine {
                head: Linear::new(s, &format!("{}/head", name), dims.dep_dim, width, &mut rng),
                dep: Linear::new(s, &format!("{}/dep", name), dims.dep_dim, width, &mut rng),
                w_head: Linear::with_init(s, &format!("{}/w_head", name), width, outputs, Init::Zeros, &mut rng),
                w_dep: Linear::with_init(s, &format!("{}/w_dep", name), width, outputs, Init::Zeros, &mut rng),
                outputs,
                width,
            };
            (b, u)
        };
        let (arc, arc_u) = biaffine(s, "tagparse/arc", dims.arc_dim, 1);
        let (label, label_u) = biaffine(s, "tagparse/label", dims.label_dim, vocabs.deprel.len());
        TagParseHead {
            store,
            dims,
            vocabs,
            upos,
            xpos,
            feats,
            dep,
            arc,
            label,
            arc_u,
            label_u,
        }
    }

    pub fn num_params(&self) -> usize {
        self.store.num_values()
    }
}

/// One training or inference sentence: word forms tokenized word by word.
#[derive(Debug, Clone)]
pub struct SentenceInput {
    pub seq: WordpieceSeq,
    /// Piece indices of every word.
    pub groups: Vec<Vec<usize>>,
}

impl SentenceInput {
    pub fn new<S: AsRef<str>>(vocab: &SubwordVocab, words: &[S]) -> Self {
        let seq = vocab.tokenize_words(words);
        let groups = seq.groups(words.len());
        SentenceInput { seq, groups }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Gold targets of one sentence (ids into the head's vocabularies).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceGold {
    pub upos: Vec<usize>,
    pub xpos: Vec<usize>,
    pub feats: Vec<usize>,
    /// 0 = root, else 1-based word index.
    pub heads: Vec<usize>,
    pub deprel: Vec<usize>,
}

/// `N x K` averaging matrix of word-to-piece groups.
fn averaging_matrix(groups: &[Vec<usize>], pieces: usize) -> Tensor {
    let mut a = Tensor::zeros(groups.len(), pieces);
    for (w, g) in groups.iter().enumerate() {
        assert!(!g.is_empty(), "word {} has no wordpiece", w);
        let share = 1.0 / g.len() as f64;
        for &p in g {
            a.set(w, p, share);
        }
    }
    a
}

/// Word vectors as means of their pieces' representations (`N x d`).
pub fn word_vectors(enc: &EncodedText, groups: &[Vec<usize>]) -> Tensor {
    averaging_matrix(groups, enc.reps.rows()).matmul(&enc.reps)
}

/// Graph version of [`word_vectors`] plus the root vector: `(t, x_cls)` where
/// `x_cls` is the `<s>` output of the chunk holding the sentence's first piece.
pub fn word_vectors_graph(g: &mut Graph<'_>, enc: &EncodedVars, groups: &[Vec<usize>]) -> (Var, Var) {
    let pieces = g.value(enc.reps).rows();
    let a = g.constant(averaging_matrix(groups, pieces));
    let t = g.matmul(a, enc.reps);
    let first = groups.iter().flatten().copied().min().unwrap_or(0);
    (t, enc.cls[enc.chunk_of(first)])
}

/// Per-sentence graph outputs.
pub struct TagParseVars<'a> {
    store: &'a ParamStore,
    pub upos: Var,
    pub xpos: Option<Var>,
    pub feats: Var,
    /// `N x (N + 1)`; row `j - 1` holds the scores of every head for word `j`.
    pub arcs: Var,
    /// Label projections `(heads, deps)`, `(N + 1) x label_dim` each.
    label_proj: (Var, Var),
}

impl TagParseHead {
    fn biaffine_proj<'a>(&self, g: &mut Graph<'a>, s: &'a ParamStore, b: &Biaffine, r: Var) -> (Var, Var) {
        let h = b.head.forward(g, s, r);
        let h = g.relu(h);
        let d = b.dep.forward(g, s, r);
        let d = g.relu(d);
        (h, d)
    }

    /// `rows x outputs` scores for paired head rows `h` and dependent rows `d`
    /// (both `rows x a`).
    fn biaffine_pairs<'a>(&self, g: &mut Graph<'a>, s: &'a ParamStore, b: &Biaffine, u: ParamId, h: Var, d: Var) -> Var {
        let u = g.param(s, u);
        let hu = g.matmul(h, u); // rows x (outputs * a)
        let tiled = if b.outputs == 1 {
            d
        } else {
            let copies = vec![d; b.outputs];
            g.concat_cols(&copies)
        };
        let prod = g.mul(hu, tiled);
        let mut blocks = Tensor::zeros(b.outputs * b.width, b.outputs);
        for o in 0..b.outputs {
            for k in 0..b.width {
                blocks.set(o * b.width + k, o, 1.0);
            }
        }
        let blocks = g.constant(blocks);
        let bilinear = g.matmul(prod, blocks);
        let lh = b.w_head.forward(g, s, h);
        let ld = b.w_dep.forward(g, s, d);
        let lin = g.add(lh, ld);
        g.add(bilinear, lin)
    }

    /// Builds every score for a sentence with word vectors `t` and root `cls`.
    pub fn forward<'a>(&'a self, g: &mut Graph<'a>, t: Var, cls: Var) -> TagParseVars<'a> {
        self.forward_with(g, &self.store, t, cls)
    }

    /// [`Self::forward`] drawing parameters from `s`, a store with the same
    /// layout as the head's own.
    pub fn forward_with<'a>(&self, g: &mut Graph<'a>, s: &'a ParamStore, t: Var, cls: Var) -> TagParseVars<'a> {
        let upos = self.upos.forward(g, s, t);
        let xpos = self.xpos.as_ref().map(|f| f.forward(g, s, t));
        let feats = self.feats.forward(g, s, t);
        let n = g.value(t).rows();
        let r = g.concat_rows(&[cls, t]);
        let r = self.dep.forward(g, s, r);
        let r = g.relu(r);
        let (h, d) = self.biaffine_proj(g, s, &self.arc, r);
        let d_words = g.slice_rows(d, 1, n);
        // bilinear: D U H^T
        let u = g.param(s, self.arc_u);
        let du = g.matmul(d_words, u);
        let bil = g.matmul_nt(du, h); // N x (N+1)
        let head_term = self.arc.w_head.forward(g, s, h); // (N+1) x 1, includes b
        let head_term = g.transpose(head_term);
        let dep_w = g.param(s, self.arc.w_dep.weight);
        let dep_term = g.matmul(d_words, dep_w); // N x 1
        let arcs = g.add_row(bil, head_term);
        let arcs = g.add_col(arcs, dep_term);
        let label_proj = self.biaffine_proj(g, s, &self.label, r);
        TagParseVars {
            store: s,
            upos,
            xpos,
            feats,
            arcs,
            label_proj,
        }
    }

    /// `N x labels` label scores for the given head of every word.
    pub fn label_scores<'a>(&self, g: &mut Graph<'a>, vars: &TagParseVars<'a>, heads: &[usize]) -> Var {
        let (h, d) = vars.label_proj;
        let hh = g.gather_rows(h, heads);
        let dd = g.slice_rows(d, 1, heads.len());
        self.biaffine_pairs(g, vars.store, &self.label, self.label_u, hh, dd)
    }

    /// Summed joint loss: UPOS + XPOS + UFeats + head selection + labels on
    /// gold arcs.
    pub fn loss<'a>(&self, g: &mut Graph<'a>, vars: &TagParseVars<'a>, gold: &SentenceGold) -> Var {
        let n = gold.heads.len();
        let mut parts = vec![
            g.cross_entropy(vars.upos, &gold.upos, None),
            g.cross_entropy(vars.feats, &gold.feats, None),
        ];
        if let Some(x) = vars.xpos {
            parts.push(g.cross_entropy(x, &gold.xpos, None));
        }
        let mut allowed = vec![true; n * (n + 1)];
        for j in 0..n {
            allowed[j * (n + 1) + j + 1] = false;
        }
        parts.push(g.cross_entropy(vars.arcs, &gold.heads, Some(&allowed)));
        let labels = self.label_scores(g, vars, &gold.heads);
        parts.push(g.cross_entropy(labels, &gold.deprel, None));
        g.add_scalars(&parts)
    }

    /// Gold ids for a treebank sentence; `None` when it uses a tag outside
    /// the head's vocabularies or lacks heads.
    pub fn gold(&self, s: &TreebankSentence) -> Option<SentenceGold> {
        let v = &self.vocabs;
        let ids = |vocab: &TagVocab, f: &dyn Fn(&crate::conllu::WordRow) -> &str| -> Option<Vec<usize>> {
            s.rows.iter().map(|r| vocab.id(f(r))).collect()
        };
        Some(SentenceGold {
            upos: ids(&v.upos, &|r| &r.upos)?,
            xpos: if v.xpos_enabled() {
                ids(&v.xpos, &|r| &r.xpos)?
            } else {
                vec![0; s.rows.len()]
            },
            feats: ids(&v.feats, &|r| &r.feats)?,
            heads: s.rows.iter().map(|r| r.head).collect::<Option<Vec<_>>>()?,
            deprel: ids(&v.deprel, &|r| &r.deprel)?,
        })
    }
}

/// Tags and tree of one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseResult {
    pub upos: Vec<String>,
    pub xpos: Vec<String>,
    pub feats: Vec<String>,
    pub heads: Vec<usize>,
    pub deprel: Vec<String>,
    /// `N x (N + 1)` arc scores.
    pub arc_scores: Tensor,
}

/// Runs the head on precomputed word vectors.
pub fn parse_vectors(head: &TagParseHead, t: &Tensor, cls: &[f64]) -> ParseResult {
    let mut g = Graph::new();
    let tv = g.constant(t.clone());
    let cv = g.constant(Tensor::row_vector(cls.to_vec()));
    let vars = head.forward(&mut g, tv, cv);
    let v = &head.vocabs;
    let names = |vocab: &TagVocab, ids: Vec<usize>| ids.into_iter().map(|i| vocab.tag(i).to_string()).collect::<Vec<_>>();
    let upos = names(&v.upos, g.argmax_rows(vars.upos));
    let feats = names(&v.feats, g.argmax_rows(vars.feats));
    let xpos = match vars.xpos {
        Some(x) => names(&v.xpos, g.argmax_rows(x)),
        None => vec!["_".to_string(); t.rows()],
    };
    let arc_scores = g.value(vars.arcs).clone();
    let heads = decode_heads(&arc_scores);
    let labels = head.label_scores(&mut g, &vars, &heads);
    let deprel = names(&v.deprel, g.argmax_rows(labels));
    ParseResult {
        upos,
        xpos,
        feats,
        heads,
        deprel,
        arc_scores,
    }
}

/// Encodes the sentence's words under `adapter` and parses.
pub fn parse_sentence(
    base: &BaseEncoder,
    adapter: Option<&AdapterSet>,
    head: &TagParseHead,
    input: &SentenceInput,
) -> Result<ParseResult, EncoderError> {
    let enc = base.encode(adapter, &input.seq)?;
    Ok(parse_encoded(head, &enc, input))
}

pub fn parse_encoded(head: &TagParseHead, enc: &EncodedText, input: &SentenceInput) -> ParseResult {
    let t = word_vectors(enc, &input.groups);
    let first = input.groups.iter().flatten().copied().min().unwrap_or(0);
    parse_vectors(head, &t, enc.cls.row(enc.chunk_of(first)))
}

/// Heads from an `N x (N + 1)` dependent-major score matrix.
pub fn decode_heads(arcs: &Tensor) -> Vec<usize> {
    let n = arcs.rows();
    let mut scores = vec![vec![f64::NEG_INFINITY; n + 1]; n + 1];
    for j in 1..=n {
        for i in 0..=n {
            if i != j {
                scores[i][j] = arcs.get(j - 1, i);
            }
        }
    }
    cle_decode(&scores)
}

/// Maximum spanning arborescence rooted at node 0 with exactly one child of
/// the root. `scores[h][d]` is the score of arc `h -> d` (use
/// `f64::NEG_INFINITY` for forbidden arcs; the diagonal and column 0 are
/// ignored). Returns the head of every word `1..n` in order.
///
/// Ties: each node prefers its lowest-index best head, and among single-root
/// candidates the lowest-index root child wins.
pub fn cle_decode(scores: &[Vec<f64>]) -> Vec<usize> {
    let n = scores.len();
    if n <= 1 {
        return Vec::new();
    }
    let unconstrained = chu_liu_edmonds(scores);
    if unconstrained[1..].iter().filter(|&&h| h == 0).count() == 1 {
        return unconstrained[1..].to_vec();
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for child in 1..n {
        if scores[0][child] == f64::NEG_INFINITY {
            continue;
        }
        let mut s = scores.to_vec();
        for (d, row) in s[0].iter_mut().enumerate() {
            if d != child {
                *row = f64::NEG_INFINITY;
            }
        }
        let heads = chu_liu_edmonds(&s);
        let score = tree_score(scores, &heads[1..]);
        if best.as_ref().map_or(true, |(b, _)| score > *b) {
            best = Some((score, heads));
        }
    }
    match best {
        Some((_, heads)) => heads[1..].to_vec(),
        None => unconstrained[1..].to_vec(),
    }
}

/// Sum of `scores[heads[d-1]][d]`.
pub fn tree_score(scores: &[Vec<f64>], heads: &[usize]) -> f64 {
    heads.iter().enumerate().map(|(d, &h)| scores[h][d + 1]).sum()
}

fn best_head(scores: &[Vec<f64>], d: usize) -> usize {
    let mut best = usize::MAX;
    let mut best_score = f64::NEG_INFINITY;
    for (h, row) in scores.iter().enumerate() {
        if h == d {
            continue;
        }
        let s = row[d];
        if best == usize::MAX || s > best_score {
            best = h;
            best_score = s;
        }
    }
    best
}

fn find_cycle(heads: &[usize]) -> Option<Vec<usize>> {
    let n = heads.len();
    let mut state = vec![0u8; n];
    state[0] = 2;
    for start in 1..n {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = heads[v];
        }
        if state[v] == 1 {
            let pos = path.iter().position(|&p| p == v).unwrap();
            return Some(path[pos..].to_vec());
        }
        for p in path {
            state[p] = 2;
        }
    }
    None
}

/// Unconstrained Chu-Liu/Edmonds; returns heads indexed by node (entry 0
/// unused).
fn chu_liu_edmonds(scores: &[Vec<f64>]) -> Vec<usize> {
    let n = scores.len();
    let mut heads = vec![0usize; n];
    for (d, h) in heads.iter_mut().enumerate().skip(1) {
        *h = best_head(scores, d);
    }
    let cycle = match find_cycle(&heads) {
        None => return heads,
        Some(c) => c,
    };
    let in_cycle: Vec<bool> = (0..n).map(|v| cycle.contains(&v)).collect();
    // contracted node ids: every non-cycle node keeps its order, the cycle
    // becomes the last node
    let kept: Vec<usize> = (0..n).filter(|&v| !in_cycle[v]).collect();
    let c = kept.len();
    let m = c + 1;
    let mut new_scores = vec![vec![f64::NEG_INFINITY; m]; m];
    let mut enter = vec![usize::MAX; m]; // for arcs u -> cycle: which cycle node
    let mut leave = vec![usize::MAX; m]; // for arcs cycle -> w: which cycle node
    for (a, &u) in kept.iter().enumerate() {
        for (b, &w) in kept.iter().enumerate() {
            if a != b {
                new_scores[a][b] = scores[u][w];
            }
        }
        // into the cycle
        let mut best = f64::NEG_INFINITY;
        for &v in &cycle {
            let own = scores[heads[v]][v];
            let s = scores[u][v] - own;
            let s = if s.is_nan() { f64::NEG_INFINITY } else { s };
            if enter[a] == usize::MAX || s > best || (s == best && v < enter[a]) {
                best = s;
                enter[a] = v;
            }
        }
        new_scores[a][c] = best;
        // out of the cycle
        let mut best = f64::NEG_INFINITY;
        for &v in &cycle {
            let s = scores[v][u];
            if leave[a] == usize::MAX || s > best || (s == best && v < leave[a]) {
                best = s;
                leave[a] = v;
            }
        }
        new_scores[c][a] = best;
    }
    let sub = chu_liu_edmonds(&new_scores);
    let mut out = heads.clone();
    for (b, &w) in kept.iter().enumerate().skip(1) {
        let h = sub[b];
        out[w] = if h == c { leave[b] } else { kept[h] };
    }
    let entering_from = sub[c];
    let v = enter[entering_from];
    out[v] = kept[entering_from];
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagParseTrainReport {
    pub epoch_losses: Vec<f64>,
    /// Sentences dropped for missing heads or unknown tags.
    pub skipped: usize,
}

struct Example {
    input: SentenceInput,
    gold: SentenceGold,
    /// Frozen encodings, used when no adapter is trained.
    cached: Option<EncodedText>,
}

/// Trains the head, and `adapter` when given, on gold-segmented sentences.
/// Without an adapter the encoder output is fixed, so it is computed once.
pub fn train_tagparse(
    base: &BaseEncoder,
    mut adapter: Option<&mut AdapterSet>,
    head: &mut TagParseHead,
    vocab: &SubwordVocab,
    treebank: &[TreebankSentence],
    config: &TrainConfig,
) -> Result<TagParseTrainReport, EncoderError> {
    let mut examples = Vec::new();
    let mut skipped = 0;
    for s in treebank {
        let Some(gold) = head.gold(s) else {
            skipped += 1;
            continue;
        };
        let words: Vec<&str> = s.rows.iter().map(|r| r.form.as_str()).collect();
        let input = SentenceInput::new(vocab, &words);
        let cached = match adapter {
            None => Some(base.encode(None, &input.seq)?),
            Some(_) => None,
        };
        examples.push(Example { input, gold, cached });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trainer = Trainer::new(config, examples.len());
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut epoch_loss = 0.0;
        let mut words = 0usize;
        for batch in epoch_batches(examples.len(), config.batch_size, &mut rng) {
            let mut grads = adapipe_neural::Gradients::new();
            let mut weight = 0.0;
            for &i in &batch {
                let ex = &examples[i];
                let mut g = Graph::new();
                let (t, cls) = match &ex.cached {
                    Some(enc) => {
                        let t = g.constant(word_vectors(enc, &ex.input.groups));
                        let first = ex.input.groups.iter().flatten().copied().min().unwrap_or(0);
                        let cls = g.constant(Tensor::row_vector(enc.cls.row(enc.chunk_of(first)).to_vec()));
                        (t, cls)
                    }
                    None => {
                        let enc = base.encode_graph(&mut g, adapter.as_deref(), &ex.input.seq)?;
                        word_vectors_graph(&mut g, &enc, &ex.input.groups)
                    }
                };
                let vars = head.forward(&mut g, t, cls);
                let loss = head.loss(&mut g, &vars, &ex.gold);
                epoch_loss += g.scalar(loss);
                weight += ex.gold.heads.len() as f64;
                grads.merge(g.backward(loss));
            }
            words += weight as usize;
            let mut stores: Vec<&mut ParamStore> = vec![&mut head.store];
            if let Some(a) = adapter.as_deref_mut() {
                stores.push(&mut a.store);
            }
            trainer.step(&mut stores, grads, weight).map_err(EncoderError::from)?;
        }
        epoch_losses.push(epoch_loss / words.max(1) as f64);
    }
    Ok(TagParseTrainReport {
        epoch_losses,
        skipped,
    })
}
