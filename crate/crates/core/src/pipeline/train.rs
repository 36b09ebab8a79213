//! Training every component of one or more languages into bundles.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ComponentKind, LanguageBundle, PipelineError, Stage, TrainMode};
use crate::conllu::TreebankSentence;
use crate::encoder::{AdapterComponent, AdapterSet, BaseEncoder, DEFAULT_BOTTLENECK};
use crate::ner::{bio_to_bioes, train_ner, NerHead, NerLabels, NerSentence};
use crate::parserhead::{train_tagparse, TagParseDims, TagParseHead, TagParseVocabs};
use crate::seq2seq::{lemma_pairs, mwt_pairs, train_transducer, TransducerConfig, TransducerModel};
use crate::splitter::{train_splitter, SplitterHead};
use crate::subword::SubwordVocab;
use crate::training::TrainConfig;

/// Training data of one language.
#[derive(Debug, Clone)]
pub struct LanguageData {
    pub language: String,
    pub treebank: Vec<TreebankSentence>,
    /// BIO or BIOES tagged sentences.
    pub ner: Option<Vec<NerSentence>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub mode: TrainMode,
    pub components: Vec<ComponentKind>,
    pub seed: u64,
    pub bottleneck: usize,
    pub splitter: TrainConfig,
    pub splitter_hidden: usize,
    /// Consecutive sentences per splitter training example.
    pub splitter_window: usize,
    pub tagparse: TrainConfig,
    pub tagparse_dims: TagParseDims,
    pub ner: TrainConfig,
    pub ner_hidden: usize,
    pub mwt: TransducerConfig,
    pub lemma: TransducerConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        let cfg = |epochs| TrainConfig {
            epochs,
            lr: 3e-3,
            ..TrainConfig::default()
        };
        let mut mwt = TransducerConfig::mwt();
        mwt.train.epochs = 60;
        let mut lemma = TransducerConfig::lemmatizer();
        lemma.train.epochs = 60;
        TrainOptions {
            mode: TrainMode::Adapters,
            components: ComponentKind::ALL.to_vec(),
            seed: 0,
            bottleneck: DEFAULT_BOTTLENECK,
            splitter: cfg(300),
            splitter_hidden: 32,
            splitter_window: 4,
            tagparse: cfg(120),
            tagparse_dims: TagParseDims::default(),
            ner: cfg(60),
            ner_hidden: 32,
            mwt,
            lemma,
        }
    }
}

impl TrainOptions {
    pub fn with_mode(mode: TrainMode) -> Self {
        TrainOptions {
            mode,
            ..Self::default()
        }
    }

    fn wants(&self, c: ComponentKind) -> bool {
        self.components.contains(&c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    /// A language code, or all codes joined by `+` for shared models.
    pub language: String,
    pub component: ComponentKind,
    pub mode: TrainMode,
    pub examples: usize,
    pub epoch_losses: Vec<f64>,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<TrainLogEntry>,
}

impl TrainLog {
    pub fn to_json_lines(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("log entry serializes") + "\n")
            .collect()
    }
}

fn derive_seed(seed: u64, slot: usize, component: ComponentKind) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((slot as u64) << 8)
        .wrapping_add(component as u64 + 1)
}

fn with_seed(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..cfg.clone()
    }
}

fn bioes_corpus(corpus: &[NerSentence]) -> Result<Vec<NerSentence>, PipelineError> {
    corpus
        .iter()
        .map(|s| {
            if s.tokens.len() != s.tags.len() {
                return Err(PipelineError::Data("NER sentence with unequal token and tag counts".into()));
            }
            Ok(NerSentence {
                tokens: s.tokens.clone(),
                tags: bio_to_bioes(&s.tags).map_err(|e| PipelineError::Data(e.to_string()))?,
            })
        })
        .collect()
}

/// Prefixes every XPOS with `<language>:`.
fn namespace_xpos(language: &str, treebank: &[TreebankSentence]) -> Vec<TreebankSentence> {
    let mut out = treebank.to_vec();
    for row in out.iter_mut().flat_map(|s| &mut s.rows) {
        if row.xpos != "_" {
            row.xpos = format!("{}:{}", language, row.xpos);
        }
    }
    out
}

/// The encoder-based stages of one training slot (a language, or all
/// languages in multilingual mode).
struct SharedStages {
    splitter: Option<Stage<SplitterHead>>,
    tagparse: Option<Stage<TagParseHead>>,
    ner: Option<Stage<NerHead>>,
}

struct Trainer<'a> {
    base: &'a BaseEncoder,
    vocab: &'a SubwordVocab,
    options: &'a TrainOptions,
    log: TrainLog,
}

impl Trainer<'_> {
    fn adapter(&self, language: &str, comp: AdapterComponent, seed: u64) -> Result<Option<AdapterSet>, PipelineError> {
        match self.options.mode {
            TrainMode::NoAdapters => Ok(None),
            _ => Ok(Some(AdapterSet::new(
                language,
                comp,
                &self.base.config,
                self.options.bottleneck,
                seed,
            )?)),
        }
    }

    fn record(
        &mut self,
        language: &str,
        component: ComponentKind,
        examples: usize,
        epoch_losses: Vec<f64>,
        start: Instant,
        note: Option<String>,
    ) {
        self.log.entries.push(TrainLogEntry {
            language: language.to_string(),
            component,
            mode: self.options.mode,
            examples,
            epoch_losses,
            seconds: start.elapsed().as_secs_f64(),
            note,
        });
    }

    fn stages(
        &mut self,
        label: &str,
        slot: usize,
        treebank: &[TreebankSentence],
        ner: Option<&[NerSentence]>,
    ) -> Result<SharedStages, PipelineError> {
        let o = self.options;
        let dim = self.base.config.dim;
        let mut out = SharedStages {
            splitter: None,
            tagparse: None,
            ner: None,
        };
        if o.wants(ComponentKind::Splitter) && !treebank.is_empty() {
            let start = Instant::now();
            let seed = derive_seed(o.seed, slot, ComponentKind::Splitter);
            let mut head = SplitterHead::new(dim, o.splitter_hidden, seed);
            let mut adapter = self.adapter(label, AdapterComponent::Splitter, seed ^ 1)?;
            let report = train_splitter(
                self.base,
                adapter.as_mut(),
                &mut head,
                self.vocab,
                treebank,
                o.splitter_window,
                &with_seed(&o.splitter, seed),
            )?;
            let note = (report.mismatched_boundaries > 0).then(|| {
                format!(
                    "{} of {} token boundaries inside a wordpiece",
                    report.mismatched_boundaries, report.boundaries
                )
            });
            self.record(label, ComponentKind::Splitter, treebank.len(), report.epoch_losses, start, note);
            out.splitter = Some(Stage { adapter, head });
        }
        if o.wants(ComponentKind::Tagparse) && !treebank.is_empty() {
            let start = Instant::now();
            let seed = derive_seed(o.seed, slot, ComponentKind::Tagparse);
            let vocabs = TagParseVocabs::from_treebank(treebank);
            let mut head = TagParseHead::new(dim, o.tagparse_dims, vocabs, seed);
            let mut adapter = self.adapter(label, AdapterComponent::Tagparse, seed ^ 1)?;
            let report = train_tagparse(
                self.base,
                adapter.as_mut(),
                &mut head,
                self.vocab,
                treebank,
                &with_seed(&o.tagparse, seed),
            )?;
            let note = (report.skipped > 0).then(|| format!("{} sentences without a complete tree", report.skipped));
            self.record(
                label,
                ComponentKind::Tagparse,
                treebank.len() - report.skipped,
                report.epoch_losses,
                start,
                note,
            );
            out.tagparse = Some(Stage { adapter, head });
        }
        if let Some(corpus) = ner.filter(|c| o.wants(ComponentKind::Ner) && !c.is_empty()) {
            let start = Instant::now();
            let seed = derive_seed(o.seed, slot, ComponentKind::Ner);
            let corpus = bioes_corpus(corpus)?;
            let labels = NerLabels::from_tags(corpus.iter().flat_map(|s| &s.tags).map(String::as_str));
            let mut head = NerHead::new(dim, o.ner_hidden, labels, seed);
            let mut adapter = self.adapter(label, AdapterComponent::Ner, seed ^ 1)?;
            let report = train_ner(
                self.base,
                adapter.as_mut(),
                &mut head,
                self.vocab,
                &corpus,
                &with_seed(&o.ner, seed),
            )?;
            self.record(label, ComponentKind::Ner, corpus.len(), report.epoch_losses, start, None);
            out.ner = Some(Stage { adapter, head });
        }
        Ok(out)
    }

    fn transducers(
        &mut self,
        language: &str,
        slot: usize,
        treebank: &[TreebankSentence],
    ) -> Result<(Option<TransducerModel>, Option<TransducerModel>), PipelineError> {
        let o = self.options;
        let run = |this: &mut Self, kind: ComponentKind, pairs: Vec<crate::seq2seq::TransducerPair>, cfg: &TransducerConfig| {
            let start = Instant::now();
            let mut cfg = cfg.clone();
            cfg.train.seed = derive_seed(o.seed, slot, kind);
            let (model, report) = train_transducer(&pairs, cfg)?;
            this.record(language, kind, report.distinct_pairs, report.epoch_losses, start, None);
            Ok::<_, PipelineError>(model)
        };
        let mwt = match mwt_pairs(treebank) {
            p if p.is_empty() || !o.wants(ComponentKind::Mwt) => None,
            p => Some(run(self, ComponentKind::Mwt, p, &o.mwt)?),
        };
        let lemma = match lemma_pairs(treebank) {
            p if p.is_empty() || !o.wants(ComponentKind::Lemma) => None,
            p => Some(run(self, ComponentKind::Lemma, p, &o.lemma)?),
        };
        Ok((mwt, lemma))
    }
}

/// Renames a shared stage's adapter for one language.
fn for_language<H: Clone>(stage: &Option<Stage<H>>, language: &str) -> Option<Stage<H>> {
    stage.as_ref().map(|s| Stage {
        adapter: s.adapter.as_ref().map(|a| AdapterSet {
            language: language.to_string(),
            ..a.clone()
        }),
        head: s.head.clone(),
    })
}

/// Trains bundles for every language in `data`. The base encoder is only
/// read. In multilingual mode the encoder-based components are trained once
/// on the concatenated data (XPOS namespaced by language) and copied into
/// every bundle; transducers stay per language in all modes.
pub fn train_bundles(
    base: &BaseEncoder,
    vocab: &SubwordVocab,
    data: &[LanguageData],
    options: &TrainOptions,
) -> Result<(Vec<LanguageBundle>, TrainLog), PipelineError> {
    if vocab.len() != base.config.vocab_size {
        return Err(PipelineError::Data(format!(
            "vocabulary has {} pieces, encoder expects {}",
            vocab.len(),
            base.config.vocab_size
        )));
    }
    if data.is_empty() {
        return Err(PipelineError::Usage("no training data".into()));
    }
    let mut langs: Vec<&str> = data.iter().map(|d| d.language.as_str()).collect();
    langs.sort();
    if langs.windows(2).any(|w| w[0] == w[1]) {
        return Err(PipelineError::Usage("a language appears twice".into()));
    }
    if options.mode == TrainMode::Multilingual && data.len() < 2 {
        return Err(PipelineError::Usage("multilingual mode needs at least two treebanks".into()));
    }
    let mut trainer = Trainer {
        base,
        vocab,
        options,
        log: TrainLog::default(),
    };
    let shared = match options.mode {
        TrainMode::Multilingual => {
            let label = langs.join("+");
            let treebank: Vec<TreebankSentence> = data
                .iter()
                .flat_map(|d| namespace_xpos(&d.language, &d.treebank))
                .collect();
            let ner: Vec<NerSentence> = data.iter().flat_map(|d| d.ner.iter().flatten().cloned()).collect();
            let ner = (!ner.is_empty()).then_some(ner.as_slice());
            Some(trainer.stages(&label, 0, &treebank, ner)?)
        }
        _ => None,
    };
    let mut bundles = Vec::with_capacity(data.len());
    for (slot, d) in data.iter().enumerate() {
        let stages = match &shared {
            Some(s) => SharedStages {
                splitter: for_language(&s.splitter, &d.language),
                tagparse: for_language(&s.tagparse, &d.language),
                ner: for_language(&s.ner, &d.language),
            },
            None => trainer.stages(&d.language, slot + 1, &d.treebank, d.ner.as_deref())?,
        };
        let (mwt, lemma) = trainer.transducers(&d.language, slot + 1, &d.treebank)?;
        bundles.push(LanguageBundle {
            language: d.language.clone(),
            mode: options.mode,
            bottleneck: options.bottleneck,
            xpos_namespaced: shared.is_some(),
            splitter: stages.splitter,
            mwt,
            tagparse: stages.tagparse,
            lemma,
            ner: stages.ner,
        });
    }
    Ok((bundles, trainer.log))
}
