//! Packaging, loading and running the full pipeline: splitter, multi-word
//! token expander, tagger/parser, lemmatizer and NER over one shared encoder.

pub mod document;
pub mod package;
pub mod train;

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock, Weak};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conllu::TreebankSentence;
use crate::encoder::{AdapterComponent, AdapterRegistry, AdapterSet, BaseEncoder, EncoderError};
use crate::ner::{bioes_to_spans, tag_tokens, NerSentence};
use crate::parserhead::{parse_sentence, SentenceInput};
use crate::scorer::{evaluate, score_ner, ScoreError, ScoreReport};
use crate::seq2seq::TransducerError;
use crate::splitter::{gold_document, segment};
use crate::subword::{SubwordVocab, VocabError};

pub use document::{Document, Sentence, Token, TokenId, Word, WordAnnotation};
pub use package::{read_manifest, save_package, LanguageBundle, Manifest, ManifestLanguage, Stage};
pub use train::{train_bundles, LanguageData, TrainLog, TrainLogEntry, TrainOptions};

/// Environment variable naming the directory that holds installed packages.
pub const CACHE_DIR_ENV: &str = "ADAPIPE_CACHE_DIR";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("checksum mismatch in {0}")]
    Checksum(PathBuf),
    #[error("{path} was built for encoder {found}, package encoder is {expected}")]
    EncoderMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("unknown language `{0}`")]
    UnknownLanguage(String),
    #[error("language `{0}` is not loaded")]
    NotLoaded(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Transducer(#[from] TransducerError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

impl PipelineError {
    /// Process exit code: 1 usage, 2 data, 3 checksum.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Checksum(_) | PipelineError::EncoderMismatch { .. } => 3,
            PipelineError::UnknownLanguage(_) | PipelineError::NotLoaded(_) | PipelineError::Usage(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Splitter,
    Mwt,
    Tagparse,
    Lemma,
    Ner,
}

impl ComponentKind {
    /// Run order.
    pub const ALL: [ComponentKind; 5] = [
        ComponentKind::Splitter,
        ComponentKind::Mwt,
        ComponentKind::Tagparse,
        ComponentKind::Lemma,
        ComponentKind::Ner,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ComponentKind::Splitter => "splitter",
            ComponentKind::Mwt => "mwt",
            ComponentKind::Tagparse => "tagparse",
            ComponentKind::Lemma => "lemma",
            ComponentKind::Ner => "ner",
        }
    }

    /// The adapter slot of encoder-based components.
    pub fn adapter_component(self) -> Option<AdapterComponent> {
        match self {
            ComponentKind::Splitter => Some(AdapterComponent::Splitter),
            ComponentKind::Tagparse => Some(AdapterComponent::Tagparse),
            ComponentKind::Ner => Some(AdapterComponent::Ner),
            ComponentKind::Mwt | ComponentKind::Lemma => None,
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ComponentKind {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ComponentKind::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| PipelineError::Usage(format!("unknown component `{}`", s)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Per-language adapters and heads.
    #[default]
    Adapters,
    /// One adapter set and head per component, trained on all languages.
    Multilingual,
    /// Heads only, over the bare encoder.
    NoAdapters,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Adapters => "adapters",
            TrainMode::Multilingual => "multilingual",
            TrainMode::NoAdapters => "no-adapters",
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for TrainMode {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adapters" => Ok(TrainMode::Adapters),
            "multilingual" => Ok(TrainMode::Multilingual),
            "no-adapters" | "no_adapters" => Ok(TrainMode::NoAdapters),
            _ => Err(PipelineError::Usage(format!("unknown mode `{}`", s))),
        }
    }
}

/// Resolves a package argument: an existing directory is used as is,
/// otherwise it is looked up under `$ADAPIPE_CACHE_DIR`.
pub fn resolve_package_dir(arg: &str) -> PathBuf {
    let direct = PathBuf::from(arg);
    if direct.is_dir() {
        return direct;
    }
    match std::env::var_os(CACHE_DIR_ENV) {
        Some(dir) if !direct.is_absolute() => {
            let cached = PathBuf::from(dir).join(arg);
            if cached.is_dir() {
                cached
            } else {
                direct
            }
        }
        _ => direct,
    }
}

type EncoderCache = Mutex<HashMap<String, Weak<BaseEncoder>>>;

fn encoder_cache() -> &'static EncoderCache {
    static CACHE: OnceLock<EncoderCache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// The process-wide copy of the encoder with this checksum, parsed from
/// `load` only when no live copy exists.
pub fn shared_encoder(
    checksum: &str,
    load: impl FnOnce() -> Result<BaseEncoder, PipelineError>,
) -> Result<Arc<BaseEncoder>, PipelineError> {
    let mut cache = encoder_cache().lock().unwrap_or_else(|e| e.into_inner());
    if let Some(e) = cache.get(checksum).and_then(Weak::upgrade) {
        return Ok(e);
    }
    let e = Arc::new(load()?);
    cache.retain(|_, w| w.strong_count() > 0);
    cache.insert(checksum.to_string(), Arc::downgrade(&e));
    Ok(e)
}

/// Number of distinct encoder copies alive in this process.
pub fn live_encoder_copies() -> usize {
    let cache = encoder_cache().lock().unwrap_or_else(|e| e.into_inner());
    cache.values().filter(|w| w.strong_count() > 0).count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleMemory {
    pub language: String,
    pub bytes: u64,
}

/// Bytes held by a pipeline: the encoder counted once plus every bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub encoder_bytes: u64,
    pub vocab_bytes: u64,
    pub bundles: Vec<BundleMemory>,
    pub total: u64,
}

/// Input to [`Pipeline::annotate`].
#[derive(Debug, Clone, Copy)]
pub enum Input<'a> {
    Raw(&'a str),
    Pretokenized(&'a [Vec<String>]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentTiming {
    /// A component name or `end-to-end`.
    pub component: String,
    pub skipped: bool,
    pub seconds: f64,
    /// Tokens (words for word-level components) processed.
    pub tokens: usize,
    pub tokens_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub entries: Vec<ComponentTiming>,
}

impl TimingReport {
    pub fn get(&self, component: &str) -> Option<&ComponentTiming> {
        self.entries.iter().find(|e| e.component == component)
    }
}

impl fmt::Display for TimingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<11}| {:>9} | {:>8} | {:>12}", "Component", "Seconds", "Tokens", "Tokens/sec")?;
        writeln!(f, "{}", "-".repeat(50))?;
        for e in &self.entries {
            if e.skipped {
                writeln!(f, "{:<11}| {:>9} | {:>8} | {:>12}", e.component, "skipped", "-", "-")?;
            } else {
                writeln!(
                    f,
                    "{:<11}| {:>9.3} | {:>8} | {:>12.1}",
                    e.component, e.seconds, e.tokens, e.tokens_per_second
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    ran: bool,
    time: Duration,
    tokens: usize,
}

#[derive(Debug, Default)]
struct Timings([Tally; 5]);

impl Timings {
    fn record(&mut self, c: ComponentKind, start: Instant, tokens: usize) {
        let t = &mut self.0[c as usize];
        t.ran = true;
        t.time += start.elapsed();
        t.tokens += tokens;
    }

    fn report(&self, start: Instant, tokens: usize) -> TimingReport {
        let mut entries: Vec<ComponentTiming> = ComponentKind::ALL
            .into_iter()
            .map(|c| timing_entry(c.name(), self.0[c as usize]))
            .collect();
        entries.push(timing_entry(
            "end-to-end",
            Tally {
                ran: true,
                time: start.elapsed(),
                tokens,
            },
        ));
        TimingReport { entries }
    }
}

fn timing_entry(component: &str, tally: Tally) -> ComponentTiming {
    let seconds = tally.time.as_secs_f64();
    ComponentTiming {
        component: component.to_string(),
        skipped: !tally.ran,
        seconds,
        tokens: tally.tokens,
        tokens_per_second: if seconds > 0.0 { tally.tokens as f64 / seconds } else { 0.0 },
    }
}

#[derive(Debug)]
struct Loaded {
    bundle: LanguageBundle,
    bytes: u64,
    last_used: u64,
}

#[derive(Debug)]
struct PackageSource {
    dir: PathBuf,
    manifest: Manifest,
}

/// One execution context over a shared encoder. Bundles load lazily and the
/// least recently used ones are evicted beyond the byte budget.
#[derive(Debug)]
pub struct Pipeline {
    base: Arc<BaseEncoder>,
    encoder_checksum: String,
    encoder_bytes: u64,
    vocab: Arc<SubwordVocab>,
    vocab_bytes: u64,
    source: Option<PackageSource>,
    loaded: HashMap<String, Loaded>,
    registry: AdapterRegistry,
    budget: Option<u64>,
    clock: u64,
}

/// A word being built during annotation.
#[derive(Debug, Clone)]
struct WorkWord {
    text: String,
    annotation: WordAnnotation,
}

#[derive(Debug, Clone)]
struct WorkToken {
    text: String,
    span: [usize; 2],
    mwt_candidate: bool,
    words: Vec<WorkWord>,
    ner: Option<String>,
}

fn work_token(text: String, span: [usize; 2], mwt_candidate: bool) -> WorkToken {
    WorkToken {
        words: vec![WorkWord {
            text: text.clone(),
            annotation: WordAnnotation::default(),
        }],
        text,
        span,
        mwt_candidate,
        ner: None,
    }
}

fn char_slice(chars: &[char], span: [usize; 2]) -> String {
    chars[span[0]..span[1]].iter().collect()
}

/// Whitespace-delimited tokens in one sentence, used when no splitter exists.
fn whitespace_segmentation(chars: &[char]) -> Vec<Vec<WorkToken>> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in chars.iter().chain(std::iter::once(&' ')).enumerate() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                tokens.push(work_token(char_slice(chars, [s, i]), [s, i], false));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if tokens.is_empty() {
        Vec::new()
    } else {
        vec![tokens]
    }
}

fn strip_namespace(tag: &str) -> &str {
    tag.split_once(':').map_or(tag, |(_, t)| t)
}

impl Pipeline {
    /// Opens a package and loads `languages` (all of them when `None`).
    pub fn load(dir: &Path, languages: Option<&[String]>) -> Result<(Pipeline, MemoryReport), PipelineError> {
        let manifest = read_manifest(dir)?;
        let base = shared_encoder(&manifest.encoder_checksum, || {
            let (path, bytes) = package::read_verified(dir, &manifest.encoder_file, &manifest.encoder_checksum)?;
            BaseEncoder::from_bytes(&bytes).map_err(|e| PipelineError::Format {
                path,
                message: e.to_string(),
            })
        })?;
        let (vocab_path, vocab_bytes) = package::read_verified(dir, &manifest.vocab_file, &manifest.vocab_checksum)?;
        let vocab_text = String::from_utf8(vocab_bytes).map_err(|e| PipelineError::Format {
            path: vocab_path.clone(),
            message: e.to_string(),
        })?;
        let vocab = SubwordVocab::from_file_string(&vocab_text)?;
        if vocab.len() != base.config.vocab_size {
            return Err(PipelineError::Data(format!(
                "vocabulary has {} pieces, encoder expects {}",
                vocab.len(),
                base.config.vocab_size
            )));
        }
        let mut p = Pipeline {
            encoder_checksum: manifest.encoder_checksum.clone(),
            encoder_bytes: manifest.encoder_bytes,
            base,
            vocab: Arc::new(vocab),
            vocab_bytes: vocab_text.len() as u64,
            source: Some(PackageSource {
                dir: dir.to_path_buf(),
                manifest,
            }),
            loaded: HashMap::new(),
            registry: AdapterRegistry::new(),
            budget: None,
            clock: 0,
        };
        let all: Vec<String> = p.languages();
        for lang in languages.unwrap_or(&all) {
            p.ensure_loaded(lang)?;
        }
        let report = p.memory_report();
        Ok((p, report))
    }

    /// An in-memory pipeline over already trained bundles.
    pub fn from_parts(base: Arc<BaseEncoder>, vocab: Arc<SubwordVocab>, bundles: Vec<LanguageBundle>) -> Pipeline {
        let encoder_bytes = base.to_bytes();
        let checksum = adapipe_neural::sha256_hex(&encoder_bytes);
        let mut p = Pipeline {
            encoder_checksum: checksum.clone(),
            encoder_bytes: encoder_bytes.len() as u64,
            vocab_bytes: vocab.to_file_string().len() as u64,
            base,
            vocab,
            source: None,
            loaded: HashMap::new(),
            registry: AdapterRegistry::new(),
            budget: None,
            clock: 0,
        };
        for b in bundles {
            let bytes = b.to_bytes(&checksum).len() as u64;
            p.insert(b, bytes);
        }
        p
    }

    pub fn base(&self) -> &Arc<BaseEncoder> {
        &self.base
    }

    pub fn vocab(&self) -> &SubwordVocab {
        &self.vocab
    }

    pub fn encoder_checksum(&self) -> &str {
        &self.encoder_checksum
    }

    /// Caps the bytes of loaded bundles; least recently used ones beyond it
    /// are dropped (and reloaded from the package on demand).
    pub fn set_budget(&mut self, bytes: Option<u64>) {
        self.budget = bytes;
        self.evict(None);
    }

    /// Languages available: the manifest's, or the in-memory bundles'.
    pub fn languages(&self) -> Vec<String> {
        let mut v: Vec<String> = match &self.source {
            Some(s) => s.manifest.languages.iter().map(|l| l.code.clone()).collect(),
            None => self.loaded.keys().cloned().collect(),
        };
        v.sort();
        v
    }

    /// Currently loaded languages, sorted.
    pub fn loaded_languages(&self) -> Vec<String> {
        let mut v: Vec<String> = self.loaded.keys().cloned().collect();
        v.sort();
        v
    }

    pub fn bundle(&self, language: &str) -> Option<&LanguageBundle> {
        self.loaded.get(language).map(|l| &l.bundle)
    }

    pub fn memory_report(&self) -> MemoryReport {
        let mut bundles: Vec<BundleMemory> = self
            .loaded
            .iter()
            .map(|(lang, l)| BundleMemory {
                language: lang.clone(),
                bytes: l.bytes,
            })
            .collect();
        bundles.sort_by(|a, b| a.language.cmp(&b.language));
        let total = self.encoder_bytes + self.vocab_bytes + bundles.iter().map(|b| b.bytes).sum::<u64>();
        MemoryReport {
            encoder_bytes: self.encoder_bytes,
            vocab_bytes: self.vocab_bytes,
            bundles,
            total,
        }
    }

    fn insert(&mut self, bundle: LanguageBundle, bytes: u64) {
        let lang = bundle.language.clone();
        self.unload(&lang);
        for a in bundle.adapters() {
            self.registry.register(a.clone());
        }
        self.clock += 1;
        self.loaded.insert(
            lang.clone(),
            Loaded {
                bundle,
                bytes,
                last_used: self.clock,
            },
        );
        self.evict(Some(&lang));
    }

    fn unload(&mut self, language: &str) {
        if self.loaded.remove(language).is_some() {
            for c in AdapterComponent::ALL {
                self.registry.unregister(language, c);
            }
        }
    }

    /// Drops least recently used bundles until within budget, never `keep`.
    /// Bundles without a package to reload from are never evicted.
    fn evict(&mut self, keep: Option<&str>) {
        let Some(budget) = self.budget else { return };
        if self.source.is_none() {
            return;
        }
        loop {
            let used: u64 = self.loaded.values().map(|l| l.bytes).sum();
            if used <= budget {
                return;
            }
            let victim = self
                .loaded
                .iter()
                .filter(|(lang, _)| Some(lang.as_str()) != keep)
                .min_by_key(|(_, l)| l.last_used)
                .map(|(lang, _)| lang.clone());
            match victim {
                Some(v) => self.unload(&v),
                None => return,
            }
        }
    }

    fn ensure_loaded(&mut self, language: &str) -> Result<(), PipelineError> {
        self.clock += 1;
        if let Some(l) = self.loaded.get_mut(language) {
            l.last_used = self.clock;
            return Ok(());
        }
        let Some(src) = &self.source else {
            return Err(PipelineError::UnknownLanguage(language.to_string()));
        };
        let entry = src
            .manifest
            .language(language)
            .ok_or_else(|| PipelineError::UnknownLanguage(language.to_string()))?;
        let (path, bytes) = package::read_verified(&src.dir, &entry.bundle, &entry.checksum)?;
        let bundle = LanguageBundle::from_bytes(&bytes, &self.base.config, &self.encoder_checksum, &path)?;
        if bundle.language != language {
            return Err(PipelineError::Format {
                path,
                message: format!("bundle is for language `{}`", bundle.language),
            });
        }
        self.insert(bundle, bytes.len() as u64);
        Ok(())
    }

    /// Activates the adapter set of (`language`, `component`) if the bundle
    /// has one, otherwise runs the bare encoder.
    fn switch(&mut self, language: &str, component: ComponentKind) -> Result<(), PipelineError> {
        let slot = component.adapter_component().expect("encoder component");
        if self.registry.contains(language, slot) {
            self.registry.activate(language, slot)?;
        } else {
            self.registry.deactivate();
        }
        Ok(())
    }

    fn active_adapter(&self) -> Option<&AdapterSet> {
        self.registry.active()
    }

    pub fn annotate(&mut self, language: &str, input: Input<'_>) -> Result<Document, PipelineError> {
        let mut timings = Timings::default();
        self.annotate_timed(language, input, &mut timings)
    }

    /// Annotates every text of `corpus` and reports per-component throughput.
    pub fn timing_report(&mut self, language: &str, corpus: &[String]) -> Result<TimingReport, PipelineError> {
        let mut timings = Timings::default();
        let start = Instant::now();
        let mut tokens = 0;
        for text in corpus {
            let doc = self.annotate_timed(language, Input::Raw(text), &mut timings)?;
            tokens += doc.sentences.iter().map(|s| s.tokens.len()).sum::<usize>();
        }
        Ok(timings.report(start, tokens))
    }

    /// [`Pipeline::annotate`] plus the timing of this one call.
    pub fn annotate_with_timing(
        &mut self,
        language: &str,
        input: Input<'_>,
    ) -> Result<(Document, TimingReport), PipelineError> {
        let mut timings = Timings::default();
        let start = Instant::now();
        let doc = self.annotate_timed(language, input, &mut timings)?;
        let tokens = doc.sentences.iter().map(|s| s.tokens.len()).sum();
        Ok((doc, timings.report(start, tokens)))
    }

    fn annotate_timed(
        &mut self,
        language: &str,
        input: Input<'_>,
        timings: &mut Timings,
    ) -> Result<Document, PipelineError> {
        self.ensure_loaded(language)?;
        // The bundle is cloned out of the map so that activation switching
        // can borrow `self` mutably; heads are small next to the encoder.
        let bundle = self.loaded[language].bundle.clone();
        let mut notices = Vec::new();
        let (text, mut sentences) = match input {
            Input::Raw(text) => {
                let chars: Vec<char> = text.chars().collect();
                let sentences = match &bundle.splitter {
                    Some(stage) => {
                        let start = Instant::now();
                        self.switch(language, ComponentKind::Splitter)?;
                        let seg = segment(&self.base, self.active_adapter(), &stage.head, &self.vocab, text)?;
                        let out: Vec<Vec<WorkToken>> = seg
                            .sentences
                            .into_iter()
                            .map(|s| {
                                s.into_iter()
                                    .map(|t| work_token(t.text, [t.start, t.end], t.is_mwt))
                                    .collect()
                            })
                            .collect();
                        timings.record(ComponentKind::Splitter, start, out.iter().map(Vec::len).sum());
                        out
                    }
                    None => {
                        notices.push("splitter: not in bundle, split on whitespace".to_string());
                        whitespace_segmentation(&chars)
                    }
                };
                (text.to_string(), sentences)
            }
            Input::Pretokenized(sents) => {
                let mut text = String::new();
                let mut pos = 0usize;
                let mut out = Vec::new();
                for s in sents.iter().filter(|s| !s.is_empty()) {
                    let mut tokens = Vec::new();
                    for tok in s {
                        if pos > 0 {
                            text.push(' ');
                            pos += 1;
                        }
                        let len = tok.chars().count();
                        text.push_str(tok);
                        let candidate = bundle.mwt.as_ref().is_some_and(|m| m.lookup(tok, "_").is_some());
                        tokens.push(work_token(tok.clone(), [pos, pos + len], candidate));
                        pos += len;
                    }
                    out.push(tokens);
                }
                (text, out)
            }
        };

        let candidates = sentences.iter().flatten().filter(|t| t.mwt_candidate).count();
        match &bundle.mwt {
            Some(model) => {
                let start = Instant::now();
                for t in sentences.iter_mut().flatten().filter(|t| t.mwt_candidate) {
                    let words = model.expand_mwt(&t.text);
                    t.words = words
                        .into_iter()
                        .map(|w| WorkWord {
                            text: w,
                            annotation: WordAnnotation::default(),
                        })
                        .collect();
                }
                timings.record(ComponentKind::Mwt, start, candidates);
            }
            None if candidates > 0 => notices.push("mwt: not in bundle, multi-word tokens kept whole".to_string()),
            None => notices.push("mwt: not in bundle".to_string()),
        }

        match &bundle.tagparse {
            Some(stage) => {
                let start = Instant::now();
                self.switch(language, ComponentKind::Tagparse)?;
                let mut words = 0;
                for sent in sentences.iter_mut() {
                    let forms: Vec<String> = sent.iter().flat_map(|t| &t.words).map(|w| w.text.clone()).collect();
                    if forms.is_empty() {
                        continue;
                    }
                    words += forms.len();
                    let input = SentenceInput::new(&self.vocab, &forms);
                    let r = parse_sentence(&self.base, self.active_adapter(), &stage.head, &input)?;
                    for (i, w) in sent.iter_mut().flat_map(|t| &mut t.words).enumerate() {
                        let a = &mut w.annotation;
                        a.upos = Some(r.upos[i].clone());
                        a.xpos = Some(if bundle.xpos_namespaced {
                            strip_namespace(&r.xpos[i]).to_string()
                        } else {
                            r.xpos[i].clone()
                        });
                        a.feats = Some(r.feats[i].clone());
                        a.head = Some(r.heads[i]);
                        a.deprel = Some(r.deprel[i].clone());
                    }
                }
                timings.record(ComponentKind::Tagparse, start, words);
            }
            None => notices.push("tagparse: not in bundle".to_string()),
        }

        match &bundle.lemma {
            Some(model) => {
                let start = Instant::now();
                let mut words = 0;
                for w in sentences.iter_mut().flatten().flat_map(|t| &mut t.words) {
                    let ctx = w.annotation.upos.clone().unwrap_or_else(|| "_".into());
                    w.annotation.lemma = Some(model.transduce(&w.text, &ctx).output);
                    words += 1;
                }
                timings.record(ComponentKind::Lemma, start, words);
            }
            None => notices.push("lemma: not in bundle".to_string()),
        }

        match &bundle.ner {
            Some(stage) => {
                let start = Instant::now();
                self.switch(language, ComponentKind::Ner)?;
                let mut tokens = 0;
                for sent in sentences.iter_mut() {
                    let forms: Vec<&str> = sent.iter().map(|t| t.text.as_str()).collect();
                    let tags = tag_tokens(&self.base, self.active_adapter(), &stage.head, &self.vocab, &forms)?;
                    tokens += tags.len();
                    for (t, tag) in sent.iter_mut().zip(tags) {
                        t.ner = Some(tag);
                    }
                }
                timings.record(ComponentKind::Ner, start, tokens);
            }
            None => notices.push("ner: not in bundle".to_string()),
        }
        self.registry.deactivate();

        Ok(build_document(text, sentences, notices))
    }

    /// Scores raw-text annotation of the gold treebank's text (and NER, when
    /// a gold corpus is given) with the CoNLL 2018 metrics.
    pub fn evaluate(
        &mut self,
        language: &str,
        gold: &[TreebankSentence],
        ner_gold: Option<&[NerSentence]>,
    ) -> Result<ScoreReport, PipelineError> {
        let text = gold_document(gold).text;
        let doc = self.annotate(language, Input::Raw(&text))?;
        let mut report = evaluate(gold, &doc.to_treebank())?;
        if let Some(ner_gold) = ner_gold {
            if self.bundle(language).is_some_and(|b| b.ner.is_some()) {
                let tokens: Vec<Vec<String>> = ner_gold.iter().map(|s| s.tokens.clone()).collect();
                let sys = self.annotate(language, Input::Pretokenized(&tokens))?;
                let gold_spans: Vec<_> = ner_gold.iter().map(|s| bioes_to_spans(&s.tags).0).collect();
                let sys_spans: Vec<_> = sys
                    .sentences
                    .iter()
                    .map(|s| {
                        let tags: Vec<String> = s.tokens.iter().map(|t| t.ner.clone().unwrap_or_else(|| "O".into())).collect();
                        bioes_to_spans(&tags).0
                    })
                    .collect();
                report.ner = Some(score_ner(&gold_spans, &sys_spans));
            }
        }
        Ok(report)
    }

    /// Tags and parses the gold words of every sentence, keeping the gold
    /// segmentation, lemmas and MISC.
    pub fn tagparse_gold_words(
        &mut self,
        language: &str,
        gold: &[TreebankSentence],
    ) -> Result<Vec<TreebankSentence>, PipelineError> {
        self.ensure_loaded(language)?;
        let bundle = &self.loaded[language].bundle;
        let Some(stage) = bundle.tagparse.clone() else {
            return Err(PipelineError::Usage(format!("language `{}` has no tagparse component", language)));
        };
        let namespaced = bundle.xpos_namespaced;
        self.switch(language, ComponentKind::Tagparse)?;
        let mut out = Vec::with_capacity(gold.len());
        for s in gold {
            let mut s = s.clone();
            if !s.rows.is_empty() {
                let forms: Vec<&str> = s.rows.iter().map(|r| r.form.as_str()).collect();
                let input = SentenceInput::new(&self.vocab, &forms);
                let r = parse_sentence(&self.base, self.active_adapter(), &stage.head, &input)?;
                for (i, row) in s.rows.iter_mut().enumerate() {
                    row.upos = r.upos[i].clone();
                    row.xpos = if namespaced {
                        strip_namespace(&r.xpos[i]).to_string()
                    } else {
                        r.xpos[i].clone()
                    };
                    row.feats = r.feats[i].clone();
                    row.head = Some(r.heads[i]);
                    row.deprel = r.deprel[i].clone();
                }
            }
            out.push(s);
        }
        self.registry.deactivate();
        Ok(out)
    }
}

fn build_document(text: String, sentences: Vec<Vec<WorkToken>>, notices: Vec<String>) -> Document {
    let chars: Vec<char> = text.chars().collect();
    let mut doc = Document {
        text,
        sentences: Vec::new(),
        notices,
    };
    for (si, sent) in sentences.into_iter().enumerate() {
        if sent.is_empty() {
            continue;
        }
        let span = [sent[0].span[0], sent[sent.len() - 1].span[1]];
        let mut next_id = 1;
        let mut tokens = Vec::with_capacity(sent.len());
        for t in sent {
            let n = t.words.len();
            let first = next_id;
            next_id += n;
            let mut words = t.words.into_iter().enumerate().map(|(i, w)| Word {
                id: first + i,
                text: w.text,
                annotation: w.annotation,
            });
            tokens.push(if n == 1 {
                let w = words.next().expect("one word");
                Token {
                    id: TokenId::Word(first),
                    text: t.text,
                    span: t.span,
                    expanded: None,
                    annotation: w.annotation,
                    ner: t.ner,
                }
            } else {
                Token {
                    id: TokenId::Range(first, first + n - 1),
                    text: t.text,
                    span: t.span,
                    expanded: Some(words.collect()),
                    annotation: WordAnnotation::default(),
                    ner: t.ner,
                }
            });
        }
        doc.sentences.push(Sentence {
            id: si + 1,
            text: char_slice(&chars, span),
            span,
            tokens,
        });
    }
    doc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_and_component_names() {
        for m in [TrainMode::Adapters, TrainMode::Multilingual, TrainMode::NoAdapters] {
            assert_eq!(m.name().parse::<TrainMode>().unwrap(), m);
        }
        assert_eq!("no_adapters".parse::<TrainMode>().unwrap(), TrainMode::NoAdapters);
        for c in ComponentKind::ALL {
            assert_eq!(c.name().parse::<ComponentKind>().unwrap(), c);
        }
        assert!("pos".parse::<ComponentKind>().is_err());
    }

    #[test]
    fn whitespace_fallback() {
        let chars: Vec<char> = " ab  c\nd ".chars().collect();
        let s = whitespace_segmentation(&chars);
        assert_eq!(s.len(), 1);
        let spans: Vec<[usize; 2]> = s[0].iter().map(|t| t.span).collect();
        assert_eq!(spans, vec![[1, 3], [5, 6], [7, 8]]);
        assert!(whitespace_segmentation(&[' ', '\n']).is_empty());
    }

    #[test]
    fn document_ids_and_spans() {
        let mut del = work_token("Del".into(), [0, 3], true);
        del.words = ["de", "el"]
            .iter()
            .map(|w| WorkWord {
                text: w.to_string(),
                annotation: WordAnnotation::default(),
            })
            .collect();
        let sents = vec![vec![del, work_token("río".into(), [4, 7], false)]];
        let doc = build_document("Del río".into(), sents, Vec::new());
        let s = &doc.sentences[0];
        assert_eq!(s.text, "Del río");
        assert_eq!(s.tokens[0].id, TokenId::Range(1, 2));
        assert_eq!(s.tokens[1].id, TokenId::Word(3));
        assert_eq!(s.words().len(), 3);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::Checksum(PathBuf::from("x")).exit_code(), 3);
        assert_eq!(PipelineError::UnknownLanguage("zz".into()).exit_code(), 1);
        assert_eq!(PipelineError::Data("bad".into()).exit_code(), 2);
    }
}
