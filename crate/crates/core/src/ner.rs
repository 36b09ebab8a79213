//! Named entity recognition: BIOES token labels from a feed-forward emission
//! head and a linear-chain CRF whose structurally illegal transitions score
//! `-inf`.

use std::fmt;

use adapipe_neural::{FeedForward, Graph, Init, Linear, ParamId, ParamStore, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{AdapterSet, BaseEncoder, EncodedText, EncoderError};
use crate::parserhead::{word_vectors, word_vectors_graph, SentenceInput};
use crate::subword::SubwordVocab;
use crate::training::{epoch_batches, TrainConfig, Trainer};

#[derive(Debug, Error, PartialEq)]
pub enum NerError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("tag `{0}` is not in a BIO or BIOES scheme")]
    UnknownScheme(String),
}

/// `log(sum(exp(xs)))`, `-inf` when every term is `-inf`.
fn lse(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Transition scores of a linear-chain CRF; `-inf` marks a forbidden move.
#[derive(Debug, Clone, PartialEq)]
pub struct Crf {
    /// `trans[i][j]`: label `i` followed by label `j`.
    pub trans: Tensor,
    pub start: Vec<f64>,
    pub stop: Vec<f64>,
}

impl Crf {
    pub fn labels(&self) -> usize {
        self.start.len()
    }

    /// Score of `path`; `-inf` when it uses a forbidden transition.
    pub fn path_score(&self, emissions: &Tensor, path: &[usize]) -> f64 {
        if path.is_empty() {
            return 0.0;
        }
        let mut s = self.start[path[0]] + self.stop[path[path.len() - 1]];
        for (t, &y) in path.iter().enumerate() {
            s += emissions.get(t, y);
            if t > 0 {
                s += self.trans.get(path[t - 1], y);
            }
        }
        s
    }

    pub fn is_legal(&self, path: &[usize]) -> bool {
        path.is_empty()
            || (self.start[path[0]] > f64::NEG_INFINITY
                && self.stop[path[path.len() - 1]] > f64::NEG_INFINITY
                && path.windows(2).all(|w| self.trans.get(w[0], w[1]) > f64::NEG_INFINITY))
    }

    /// Forward log-scores `alpha[t][j]`.
    fn alphas(&self, em: &Tensor) -> Vec<Vec<f64>> {
        let (n, l) = (em.rows(), self.labels());
        let mut alpha = vec![vec![0.0; l]; n];
        for j in 0..l {
            alpha[0][j] = self.start[j] + em.get(0, j);
        }
        for t in 1..n {
            for j in 0..l {
                alpha[t][j] = em.get(t, j) + lse((0..l).map(|i| alpha[t - 1][i] + self.trans.get(i, j)));
            }
        }
        alpha
    }

    /// Backward log-scores `beta[t][i]` (including the stop score).
    fn betas(&self, em: &Tensor) -> Vec<Vec<f64>> {
        let (n, l) = (em.rows(), self.labels());
        let mut beta = vec![vec![0.0; l]; n];
        beta[n - 1].clone_from(&self.stop);
        for t in (0..n - 1).rev() {
            for i in 0..l {
                beta[t][i] = lse((0..l).map(|j| self.trans.get(i, j) + em.get(t + 1, j) + beta[t + 1][j]));
            }
        }
        beta
    }

    /// Forward algorithm in log space. Zero for an empty sequence.
    pub fn log_partition(&self, emissions: &Tensor) -> f64 {
        if emissions.rows() == 0 {
            return 0.0;
        }
        let alpha = self.alphas(emissions);
        let last = &alpha[emissions.rows() - 1];
        lse((0..self.labels()).map(|j| last[j] + self.stop[j]))
    }

    /// Best legal path and its score. Ties go to the smallest label id.
    pub fn viterbi(&self, emissions: &Tensor) -> (Vec<usize>, f64) {
        let (n, l) = (emissions.rows(), self.labels());
        if n == 0 {
            return (Vec::new(), 0.0);
        }
        let mut delta: Vec<f64> = (0..l).map(|j| self.start[j] + emissions.get(0, j)).collect();
        let mut back = vec![vec![0usize; l]; n];
        for t in 1..n {
            let mut next = vec![f64::NEG_INFINITY; l];
            for j in 0..l {
                let mut best = (0, f64::NEG_INFINITY);
                for (i, d) in delta.iter().enumerate() {
                    let s = d + self.trans.get(i, j);
                    if s > best.1 {
                        best = (i, s);
                    }
                }
                back[t][j] = best.0;
                next[j] = best.1 + emissions.get(t, j);
            }
            delta = next;
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (j, d) in delta.iter().enumerate() {
            let s = d + self.stop[j];
            if s > best.1 {
                best = (j, s);
            }
        }
        let mut path = vec![best.0; n];
        for t in (1..n).rev() {
            path[t - 1] = back[t][path[t]];
        }
        (path, best.1)
    }

    /// Unary marginals `T x L` and summed pairwise marginals `L x L`.
    fn marginals(&self, em: &Tensor) -> (Tensor, Tensor, f64) {
        let (n, l) = (em.rows(), self.labels());
        let alpha = self.alphas(em);
        let beta = self.betas(em);
        let log_z = lse((0..l).map(|j| alpha[n - 1][j] + self.stop[j]));
        let mut unary = Tensor::zeros(n, l);
        for t in 0..n {
            for j in 0..l {
                unary.set(t, j, (alpha[t][j] + beta[t][j] - log_z).exp());
            }
        }
        let mut pair = Tensor::zeros(l, l);
        for t in 1..n {
            for i in 0..l {
                for j in 0..l {
                    let s = alpha[t - 1][i] + self.trans.get(i, j) + em.get(t, j) + beta[t][j] - log_z;
                    if s > f64::NEG_INFINITY {
                        pair.set(i, j, pair.get(i, j) + s.exp());
                    }
                }
            }
        }
        (unary, pair, log_z)
    }
}

/// Negative log-likelihood `logZ - score(gold)` as a graph node over
/// emissions (`T x L`), transitions (`L x L`), start and stop (`1 x L`).
pub fn crf_nll<'a>(g: &mut Graph<'a>, emissions: Var, trans: Var, start: Var, stop: Var, gold: &[usize]) -> Var {
    let em = g.value(emissions).clone();
    let crf = Crf {
        trans: g.value(trans).clone(),
        start: g.value(start).data().to_vec(),
        stop: g.value(stop).data().to_vec(),
    };
    assert_eq!(em.rows(), gold.len(), "one gold label per step");
    let l = crf.labels();
    if gold.is_empty() {
        return g.custom(
            &[emissions, trans, start, stop],
            Tensor::zeros(1, 1),
            Box::new(|_| vec![None, None, None, None]),
        );
    }
    let (unary, pair, log_z) = crf.marginals(&em);
    let nll = log_z - crf.path_score(&em, gold);
    let mut d_em = unary.clone();
    let mut d_trans = pair;
    let mut d_start = Tensor::zeros(1, l);
    let mut d_stop = Tensor::zeros(1, l);
    for j in 0..l {
        d_start.set(0, j, unary.get(0, j));
        d_stop.set(0, j, unary.get(em.rows() - 1, j));
    }
    for (t, &y) in gold.iter().enumerate() {
        d_em.set(t, y, d_em.get(t, y) - 1.0);
        if t > 0 {
            d_trans.set(gold[t - 1], y, d_trans.get(gold[t - 1], y) - 1.0);
        }
    }
    d_start.set(0, gold[0], d_start.get(0, gold[0]) - 1.0);
    let last = gold[gold.len() - 1];
    d_stop.set(0, last, d_stop.get(0, last) - 1.0);
    g.custom(
        &[emissions, trans, start, stop],
        Tensor::from_vec(1, 1, vec![nll]),
        Box::new(move |up: &Tensor| {
            let s = up.get(0, 0);
            [&d_em, &d_trans, &d_start, &d_stop]
                .into_iter()
                .map(|t| Some(t.map(|v| v * s)))
                .collect()
        }),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prefix {
    B,
    I,
    E,
    S,
}

/// The BIOES label set over sorted entity types: `O` is 0, then
/// `B-, I-, E-, S-` for each type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerLabels {
    types: Vec<String>,
}

impl NerLabels {
    pub fn new<S: AsRef<str>>(types: &[S]) -> Self {
        let mut types: Vec<String> = types.iter().map(|t| t.as_ref().to_string()).collect();
        types.sort();
        types.dedup();
        NerLabels { types }
    }

    /// Types mentioned by BIOES (or BIO) tags.
    pub fn from_tags<'a>(tags: impl IntoIterator<Item = &'a str>) -> Self {
        let types: Vec<&str> = tags.into_iter().filter_map(|t| t.get(2..).filter(|_| t != "O")).collect();
        Self::new(&types)
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn len(&self) -> usize {
        1 + 4 * self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn decode(&self, id: usize) -> Option<(Prefix, usize)> {
        if id == 0 {
            return None;
        }
        let p = [Prefix::B, Prefix::I, Prefix::E, Prefix::S][(id - 1) % 4];
        Some((p, (id - 1) / 4))
    }

    pub fn name(&self, id: usize) -> String {
        match self.decode(id) {
            None => "O".to_string(),
            Some((p, t)) => format!("{:?}-{}", p, self.types[t]),
        }
    }

    pub fn id(&self, tag: &str) -> Option<usize> {
        if tag == "O" {
            return Some(0);
        }
        let (p, ty) = parse_tag(tag)?;
        let t = self.types.iter().position(|x| x == ty)?;
        let off = match p {
            Prefix::B => 0,
            Prefix::I => 1,
            Prefix::E => 2,
            Prefix::S => 3,
        };
        Some(1 + 4 * t + off)
    }

    pub fn allowed(&self, prev: usize, next: usize) -> bool {
        let open = |id| matches!(self.decode(id), Some((Prefix::B | Prefix::I, _)));
        match (self.decode(prev), self.decode(next)) {
            (Some((Prefix::B | Prefix::I, a)), Some((Prefix::I | Prefix::E, b))) => a == b,
            _ => !open(prev) && !matches!(self.decode(next), Some((Prefix::I | Prefix::E, _))),
        }
    }

    pub fn allowed_start(&self, id: usize) -> bool {
        !matches!(self.decode(id), Some((Prefix::I | Prefix::E, _)))
    }

    pub fn allowed_stop(&self, id: usize) -> bool {
        !matches!(self.decode(id), Some((Prefix::B | Prefix::I, _)))
    }

    /// `0` for legal transitions and `-inf` otherwise: `(trans, start, stop)`.
    pub fn constraint_masks(&self) -> (Tensor, Tensor, Tensor) {
        let l = self.len();
        let mask = |ok: bool| if ok { 0.0 } else { f64::NEG_INFINITY };
        let mut trans = Tensor::zeros(l, l);
        let mut start = Tensor::zeros(1, l);
        let mut stop = Tensor::zeros(1, l);
        for i in 0..l {
            for j in 0..l {
                trans.set(i, j, mask(self.allowed(i, j)));
            }
            start.set(0, i, mask(self.allowed_start(i)));
            stop.set(0, i, mask(self.allowed_stop(i)));
        }
        (trans, start, stop)
    }

    /// Applies the structural constraints to learned scores.
    pub fn constrain(&self, trans: &Tensor, start: &[f64], stop: &[f64]) -> Crf {
        let (mt, ms, me) = self.constraint_masks();
        let mut t = trans.clone();
        t.add_assign(&mt);
        Crf {
            trans: t,
            start: start.iter().zip(ms.data()).map(|(a, b)| a + b).collect(),
            stop: stop.iter().zip(me.data()).map(|(a, b)| a + b).collect(),
        }
    }
}

fn parse_tag(tag: &str) -> Option<(Prefix, &str)> {
    let (p, ty) = tag.split_once('-')?;
    let p = match p {
        "B" => Prefix::B,
        "I" => Prefix::I,
        "E" => Prefix::E,
        "S" => Prefix::S,
        _ => return None,
    };
    (!ty.is_empty()).then_some((p, ty))
}

/// Inclusive token span of one entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    #[serde(rename = "type")]
    pub entity_type: String,
    pub token_start: usize,
    pub token_end: usize,
}

impl EntitySpan {
    pub fn new(entity_type: &str, token_start: usize, token_end: usize) -> Self {
        EntitySpan {
            entity_type: entity_type.to_string(),
            token_start,
            token_end,
        }
    }
}

impl fmt::Display for EntitySpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}..={}]", self.entity_type, self.token_start, self.token_end)
    }
}

/// Spans of a BIOES sequence and the number of repairs made to illegal
/// runs. A broken run is truncated at the last token before the break; a
/// stray `I-`/`E-` opens a new run.
pub fn bioes_to_spans<S: AsRef<str>>(tags: &[S]) -> (Vec<EntitySpan>, usize) {
    let mut spans = Vec::new();
    let mut repairs = 0;
    let mut open: Option<(String, usize)> = None;
    let close = |open: &mut Option<(String, usize)>, end: usize, spans: &mut Vec<EntitySpan>| {
        if let Some((ty, s)) = open.take() {
            spans.push(EntitySpan::new(&ty, s, end));
        }
    };
    for (t, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let parsed = parse_tag(tag);
        if parsed.is_none() && tag != "O" {
            repairs += 1;
        }
        let continues = |ty: &str, open: &Option<(String, usize)>| open.as_ref().is_some_and(|(o, _)| o == ty);
        match parsed {
            None => {
                if open.is_some() {
                    repairs += 1;
                    close(&mut open, t - 1, &mut spans);
                }
            }
            Some((Prefix::S, ty)) | Some((Prefix::B, ty)) => {
                if open.is_some() {
                    repairs += 1;
                    close(&mut open, t - 1, &mut spans);
                }
                open = Some((ty.to_string(), t));
                if parsed.unwrap().0 == Prefix::S {
                    close(&mut open, t, &mut spans);
                }
            }
            Some((p, ty)) => {
                if !continues(ty, &open) {
                    repairs += 1;
                    if open.is_some() {
                        close(&mut open, t - 1, &mut spans);
                    }
                    open = Some((ty.to_string(), t));
                }
                if p == Prefix::E {
                    close(&mut open, t, &mut spans);
                }
            }
        }
    }
    if open.is_some() {
        repairs += 1;
        close(&mut open, tags.len() - 1, &mut spans);
    }
    (spans, repairs)
}

/// BIOES tags of non-overlapping spans over `len` tokens.
pub fn spans_to_bioes(spans: &[EntitySpan], len: usize) -> Vec<String> {
    let mut tags = vec!["O".to_string(); len];
    for s in spans {
        let ty = &s.entity_type;
        if s.token_start == s.token_end {
            tags[s.token_start] = format!("S-{}", ty);
            continue;
        }
        tags[s.token_start] = format!("B-{}", ty);
        for tag in &mut tags[s.token_start + 1..s.token_end] {
            *tag = format!("I-{}", ty);
        }
        tags[s.token_end] = format!("E-{}", ty);
    }
    tags
}

/// Converts BIO (or already BIOES) tags to BIOES. An `I-` that does not
/// continue a run of its type starts one.
pub fn bio_to_bioes<S: AsRef<str>>(tags: &[S]) -> Result<Vec<String>, NerError> {
    let mut spans = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (t, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        if tag == "O" {
            if let Some((ty, s)) = open.take() {
                spans.push(EntitySpan::new(&ty, s, t - 1));
            }
            continue;
        }
        let (p, ty) = parse_tag(tag).ok_or_else(|| NerError::UnknownScheme(tag.to_string()))?;
        let continues = matches!(p, Prefix::I | Prefix::E) && open.as_ref().is_some_and(|(o, _)| o == ty);
        if !continues {
            if let Some((oty, s)) = open.take() {
                spans.push(EntitySpan::new(&oty, s, t - 1));
            }
            open = Some((ty.to_string(), t));
        }
        if matches!(p, Prefix::E | Prefix::S) {
            let (oty, s) = open.take().expect("run is open");
            spans.push(EntitySpan::new(&oty, s, t));
        }
    }
    if let Some((ty, s)) = open {
        spans.push(EntitySpan::new(&ty, s, tags.len() - 1));
    }
    Ok(spans_to_bioes(&spans, tags.len()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NerSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

/// Reads `token<TAB>tag` lines with blank lines between sentences.
pub fn read_ner_corpus(text: &str) -> Result<Vec<NerSentence>, NerError> {
    let mut out = Vec::new();
    let mut cur = NerSentence {
        tokens: Vec::new(),
        tags: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            if !cur.tokens.is_empty() {
                out.push(std::mem::replace(
                    &mut cur,
                    NerSentence {
                        tokens: Vec::new(),
                        tags: Vec::new(),
                    },
                ));
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(NerError::Format {
                line: i + 1,
                message: "expected `token<TAB>tag`".into(),
            });
        }
        cur.tokens.push(fields[0].to_string());
        cur.tags.push(fields[1].to_string());
    }
    if !cur.tokens.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

pub fn write_ner_corpus(sentences: &[NerSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for (tok, tag) in s.tokens.iter().zip(&s.tags) {
            out.push_str(tok);
            out.push('\t');
            out.push_str(tag);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Emission head plus learned transition scores.
#[derive(Debug, Clone)]
pub struct NerHead {
    pub store: ParamStore,
    pub labels: NerLabels,
    ffn: FeedForward,
    trans: ParamId,
    start: ParamId,
    stop: ParamId,
}

impl NerHead {
    pub fn new(dim: usize, hidden: usize, labels: NerLabels, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let l = labels.len();
        let ffn = FeedForward {
            inner: Linear::new(&mut store, "ner/inner", dim, hidden, &mut rng),
            outer: Linear::with_init(&mut store, "ner/outer", hidden, l, Init::Zeros, &mut rng),
        };
        let trans = store.add("ner/trans", Tensor::zeros(l, l));
        let start = store.add("ner/start", Tensor::zeros(1, l));
        let stop = store.add("ner/stop", Tensor::zeros(1, l));
        NerHead {
            store,
            labels,
            ffn,
            trans,
            start,
            stop,
        }
    }

    pub fn hidden(&self) -> usize {
        self.ffn.inner.d_out
    }

    pub fn crf(&self) -> Crf {
        self.labels.constrain(
            self.store.value(self.trans),
            self.store.value(self.start).data(),
            self.store.value(self.stop).data(),
        )
    }

    pub fn emissions<'a>(&self, g: &mut Graph<'a>, s: &'a ParamStore, t: Var) -> Var {
        self.ffn.forward(g, s, t)
    }

    /// CRF negative log-likelihood of gold label ids for token vectors `t`,
    /// with parameters drawn from `s`.
    pub fn loss_with<'a>(&self, g: &mut Graph<'a>, s: &'a ParamStore, t: Var, gold: &[usize]) -> Var {
        let em = self.emissions(g, s, t);
        let (mt, ms, me) = self.labels.constraint_masks();
        let parts = [(self.trans, mt), (self.start, ms), (self.stop, me)].map(|(id, mask)| {
            let p = g.param(s, id);
            let m = g.constant(mask);
            g.add(p, m)
        });
        crf_nll(g, em, parts[0], parts[1], parts[2], gold)
    }

    /// Viterbi tags for token vectors.
    pub fn tag_vectors(&self, t: &Tensor) -> Vec<String> {
        let mut g = Graph::new();
        let tv = g.constant(t.clone());
        let em = self.emissions(&mut g, &self.store, tv);
        let (path, _) = self.crf().viterbi(g.value(em));
        path.into_iter().map(|y| self.labels.name(y)).collect()
    }
}

/// BIOES tags of a tokenized sentence.
pub fn tag_tokens<S: AsRef<str>>(
    base: &BaseEncoder,
    adapter: Option<&AdapterSet>,
    head: &NerHead,
    vocab: &SubwordVocab,
    tokens: &[S],
) -> Result<Vec<String>, EncoderError> {
    if tokens.is_empty() {
        return Ok(Vec::new());
    }
    let input = SentenceInput::new(vocab, tokens);
    let enc = base.encode(adapter, &input.seq)?;
    Ok(head.tag_vectors(&word_vectors(&enc, &input.groups)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NerTrainReport {
    pub epoch_losses: Vec<f64>,
    /// Sentences dropped for tags outside the label set.
    pub skipped: usize,
}

/// Trains the head (and `adapter`, when given) on BIOES-tagged sentences.
pub fn train_ner(
    base: &BaseEncoder,
    mut adapter: Option<&mut AdapterSet>,
    head: &mut NerHead,
    vocab: &SubwordVocab,
    corpus: &[NerSentence],
    config: &TrainConfig,
) -> Result<NerTrainReport, EncoderError> {
    struct Example {
        input: SentenceInput,
        gold: Vec<usize>,
        cached: Option<EncodedText>,
    }
    let mut examples = Vec::new();
    let mut skipped = 0;
    for s in corpus.iter().filter(|s| !s.tokens.is_empty()) {
        let Some(gold) = s.tags.iter().map(|t| head.labels.id(t)).collect::<Option<Vec<_>>>() else {
            skipped += 1;
            continue;
        };
        let input = SentenceInput::new(vocab, &s.tokens);
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
        let mut total = 0.0;
        let mut tokens = 0.0;
        for batch in epoch_batches(examples.len(), config.batch_size, &mut rng) {
            let mut grads = adapipe_neural::Gradients::new();
            let mut weight = 0.0;
            for &i in &batch {
                let ex = &examples[i];
                let mut g = Graph::new();
                let t = match &ex.cached {
                    Some(enc) => g.constant(word_vectors(enc, &ex.input.groups)),
                    None => {
                        let enc = base.encode_graph(&mut g, adapter.as_deref(), &ex.input.seq)?;
                        word_vectors_graph(&mut g, &enc, &ex.input.groups).0
                    }
                };
                let loss = head.loss_with(&mut g, &head.store, t, &ex.gold);
                total += g.scalar(loss);
                weight += ex.gold.len() as f64;
                grads.merge(g.backward(loss));
            }
            tokens += weight;
            let mut stores: Vec<&mut ParamStore> = vec![&mut head.store];
            if let Some(a) = adapter.as_deref_mut() {
                stores.push(&mut a.store);
            }
            trainer.step(&mut stores, grads, weight)?;
        }
        epoch_losses.push(total / tokens.max(1.0));
    }
    Ok(NerTrainReport { epoch_losses, skipped })
}
