//! On-disk package: `manifest.json`, the shared `encoder.bin`, `vocab.txt`
//! and one `<lang>.bundle` per language holding every trained component of
//! that language.

use std::fs;
use std::path::{Path, PathBuf};

use adapipe_neural::{sha256_hex, NamedTensors, NeuralError, Tensor};
use serde::{Deserialize, Serialize};

use super::{ComponentKind, PipelineError, TrainMode};
use crate::encoder::{AdapterComponent, AdapterSet, BaseEncoder, EncoderConfig};
use crate::ner::{NerHead, NerLabels};
use crate::parserhead::{TagParseDims, TagParseHead, TagParseVocabs};
use crate::seq2seq::{TransducerMeta, TransducerModel};
use crate::splitter::SplitterHead;
use crate::subword::SubwordVocab;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ENCODER_FILE: &str = "encoder.bin";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestLanguage {
    pub code: String,
    pub bundle: String,
    pub checksum: String,
    pub bytes: u64,
    pub mode: TrainMode,
    pub components: Vec<ComponentKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub encoder_file: String,
    pub encoder_checksum: String,
    pub encoder_bytes: u64,
    pub encoder_config: EncoderConfig,
    pub vocab_file: String,
    pub vocab_checksum: String,
    pub languages: Vec<ManifestLanguage>,
}

impl Manifest {
    pub fn language(&self, code: &str) -> Option<&ManifestLanguage> {
        self.languages.iter().find(|l| l.code == code)
    }
}

/// A task head with the adapter set it runs under (`None` without adapters).
#[derive(Debug, Clone)]
pub struct Stage<H> {
    pub adapter: Option<AdapterSet>,
    pub head: H,
}

/// Every component of one language.
#[derive(Debug, Clone)]
pub struct LanguageBundle {
    pub language: String,
    pub mode: TrainMode,
    pub bottleneck: usize,
    /// XPOS tags carry a `<treebank>:` prefix to strip on output.
    pub xpos_namespaced: bool,
    pub splitter: Option<Stage<SplitterHead>>,
    pub mwt: Option<TransducerModel>,
    pub tagparse: Option<Stage<TagParseHead>>,
    pub lemma: Option<TransducerModel>,
    pub ner: Option<Stage<NerHead>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitterMeta {
    hidden: usize,
    adapter: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct TagParseMeta {
    dims: TagParseDims,
    vocabs: TagParseVocabs,
    adapter: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct NerMeta {
    hidden: usize,
    labels: NerLabels,
    adapter: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleMeta {
    format_version: u32,
    language: String,
    mode: TrainMode,
    encoder_checksum: String,
    bottleneck: usize,
    xpos_namespaced: bool,
    splitter: Option<SplitterMeta>,
    mwt: Option<TransducerMeta>,
    tagparse: Option<TagParseMeta>,
    lemma: Option<TransducerMeta>,
    ner: Option<NerMeta>,
}

fn push_prefixed(out: &mut Vec<(String, Tensor)>, prefix: &str, named: Vec<(String, Tensor)>) {
    out.extend(named.into_iter().map(|(n, t)| (format!("{}/{}", prefix, n), t)));
}

impl LanguageBundle {
    pub fn components(&self) -> Vec<ComponentKind> {
        let present = [
            self.splitter.is_some(),
            self.mwt.is_some(),
            self.tagparse.is_some(),
            self.lemma.is_some(),
            self.ner.is_some(),
        ];
        ComponentKind::ALL
            .into_iter()
            .zip(present)
            .filter_map(|(c, p)| p.then_some(c))
            .collect()
    }

    pub fn adapters(&self) -> Vec<&AdapterSet> {
        [
            self.splitter.as_ref().and_then(|s| s.adapter.as_ref()),
            self.tagparse.as_ref().and_then(|s| s.adapter.as_ref()),
            self.ner.as_ref().and_then(|s| s.adapter.as_ref()),
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    pub fn num_params(&self) -> usize {
        let adapters: usize = self.adapters().iter().map(|a| a.num_params()).sum();
        adapters
            + self.splitter.as_ref().map_or(0, |s| s.head.store.num_values())
            + self.tagparse.as_ref().map_or(0, |s| s.head.num_params())
            + self.ner.as_ref().map_or(0, |s| s.head.store.num_values())
            + self.mwt.as_ref().map_or(0, TransducerModel::num_params)
            + self.lemma.as_ref().map_or(0, TransducerModel::num_params)
    }

    pub fn to_named(&self, encoder_checksum: &str) -> NamedTensors {
        let mut tensors = Vec::new();
        let mut stage = |name: &str, adapter: Option<&AdapterSet>, head: &adapipe_neural::ParamStore| {
            if let Some(a) = adapter {
                push_prefixed(&mut tensors, &format!("{}.adapter", name), a.store.named_tensors());
            }
            push_prefixed(&mut tensors, &format!("{}.head", name), head.named_tensors());
        };
        if let Some(s) = &self.splitter {
            stage("splitter", s.adapter.as_ref(), &s.head.store);
        }
        if let Some(s) = &self.tagparse {
            stage("tagparse", s.adapter.as_ref(), &s.head.store);
        }
        if let Some(s) = &self.ner {
            stage("ner", s.adapter.as_ref(), &s.head.store);
        }
        if let Some(m) = &self.mwt {
            push_prefixed(&mut tensors, "mwt", m.store.named_tensors());
        }
        if let Some(m) = &self.lemma {
            push_prefixed(&mut tensors, "lemma", m.store.named_tensors());
        }
        let meta = BundleMeta {
            format_version: FORMAT_VERSION,
            language: self.language.clone(),
            mode: self.mode,
            encoder_checksum: encoder_checksum.to_string(),
            bottleneck: self.bottleneck,
            xpos_namespaced: self.xpos_namespaced,
            splitter: self.splitter.as_ref().map(|s| SplitterMeta {
                hidden: s.head.hidden(),
                adapter: s.adapter.is_some(),
            }),
            mwt: self.mwt.as_ref().map(TransducerModel::meta),
            tagparse: self.tagparse.as_ref().map(|s| TagParseMeta {
                dims: s.head.dims,
                vocabs: s.head.vocabs.clone(),
                adapter: s.adapter.is_some(),
            }),
            lemma: self.lemma.as_ref().map(TransducerModel::meta),
            ner: self.ner.as_ref().map(|s| NerMeta {
                hidden: s.head.hidden(),
                labels: s.head.labels.clone(),
                adapter: s.adapter.is_some(),
            }),
        };
        NamedTensors::new(serde_json::to_string(&meta).expect("bundle meta serializes"), tensors)
    }

    pub fn to_bytes(&self, encoder_checksum: &str) -> Vec<u8> {
        self.to_named(encoder_checksum).to_bytes()
    }

    /// Parses a bundle file; `path` is only used in error messages.
    pub fn from_bytes(
        bytes: &[u8],
        config: &EncoderConfig,
        encoder_checksum: &str,
        path: &Path,
    ) -> Result<Self, PipelineError> {
        let format = |message: String| PipelineError::Format {
            path: path.to_path_buf(),
            message,
        };
        let named = NamedTensors::from_bytes(bytes).map_err(|e| match e {
            NeuralError::Checksum { .. } => PipelineError::Checksum(path.to_path_buf()),
            other => format(other.to_string()),
        })?;
        let meta: BundleMeta = serde_json::from_str(&named.meta).map_err(|e| format(e.to_string()))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(format(format!("unsupported format version {}", meta.format_version)));
        }
        if meta.encoder_checksum != encoder_checksum {
            return Err(PipelineError::EncoderMismatch {
                path: path.to_path_buf(),
                expected: encoder_checksum.to_string(),
                found: meta.encoder_checksum,
            });
        }
        let lang = meta.language.clone();
        let adapter = |comp: AdapterComponent, name: &str, present: bool| -> Result<Option<AdapterSet>, PipelineError> {
            if !present {
                return Ok(None);
            }
            let mut a = AdapterSet::new(&lang, comp, config, meta.bottleneck, 0)?;
            a.store
                .load_named(&named.with_prefix(&format!("{}.adapter/", name)))
                .map_err(|e| format(e.to_string()))?;
            Ok(Some(a))
        };
        let load = |store: &mut adapipe_neural::ParamStore, prefix: &str| {
            store
                .load_named(&named.with_prefix(prefix))
                .map_err(|e| format(e.to_string()))
        };
        let splitter = match &meta.splitter {
            None => None,
            Some(m) => {
                let mut head = SplitterHead::new(config.dim, m.hidden, 0);
                load(&mut head.store, "splitter.head/")?;
                Some(Stage {
                    adapter: adapter(AdapterComponent::Splitter, "splitter", m.adapter)?,
                    head,
                })
            }
        };
        let tagparse = match meta.tagparse {
            None => None,
            Some(m) => {
                let mut head = TagParseHead::new(config.dim, m.dims, m.vocabs, 0);
                load(&mut head.store, "tagparse.head/")?;
                Some(Stage {
                    adapter: adapter(AdapterComponent::Tagparse, "tagparse", m.adapter)?,
                    head,
                })
            }
        };
        let ner = match meta.ner {
            None => None,
            Some(m) => {
                let mut head = NerHead::new(config.dim, m.hidden, m.labels, 0);
                load(&mut head.store, "ner.head/")?;
                Some(Stage {
                    adapter: adapter(AdapterComponent::Ner, "ner", m.adapter)?,
                    head,
                })
            }
        };
        let transducer = |m: Option<TransducerMeta>, prefix: &str| -> Result<Option<TransducerModel>, PipelineError> {
            m.map(|m| TransducerModel::from_parts(m, &named.with_prefix(prefix)).map_err(|e| format(e.to_string())))
                .transpose()
        };
        Ok(LanguageBundle {
            language: meta.language.clone(),
            mode: meta.mode,
            bottleneck: meta.bottleneck,
            xpos_namespaced: meta.xpos_namespaced,
            splitter,
            mwt: transducer(meta.mwt, "mwt/")?,
            tagparse,
            lemma: transducer(meta.lemma, "lemma/")?,
            ner,
        })
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, PipelineError> {
    fs::read(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    fs::write(path, bytes).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn bundle_file_name(language: &str) -> String {
    format!("{}.bundle", language)
}

/// Writes a package into `dir` (created if missing). Languages of a package
/// already there over the same encoder are kept unless replaced; any other
/// existing package is overwritten.
pub fn save_package(
    dir: &Path,
    base: &BaseEncoder,
    vocab: &SubwordVocab,
    bundles: &[LanguageBundle],
) -> Result<Manifest, PipelineError> {
    fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let encoder = base.to_bytes();
    let encoder_checksum = sha256_hex(&encoder);
    write_file(&dir.join(ENCODER_FILE), &encoder)?;
    let vocab_text = vocab.to_file_string();
    let vocab_checksum = sha256_hex(vocab_text.as_bytes());
    let mut languages: Vec<ManifestLanguage> = match read_manifest(dir) {
        Ok(old) if old.encoder_checksum == encoder_checksum && old.vocab_checksum == vocab_checksum => old
            .languages
            .into_iter()
            .filter(|l| !bundles.iter().any(|b| b.language == l.code))
            .collect(),
        _ => Vec::new(),
    };
    write_file(&dir.join(VOCAB_FILE), vocab_text.as_bytes())?;
    for b in bundles {
        let bytes = b.to_bytes(&encoder_checksum);
        let name = bundle_file_name(&b.language);
        write_file(&dir.join(&name), &bytes)?;
        languages.push(ManifestLanguage {
            code: b.language.clone(),
            bundle: name,
            checksum: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
            mode: b.mode,
            components: b.components(),
        });
    }
    languages.sort_by(|a, b| a.code.cmp(&b.code));
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        encoder_file: ENCODER_FILE.into(),
        encoder_checksum,
        encoder_bytes: encoder.len() as u64,
        encoder_config: base.config.clone(),
        vocab_file: VOCAB_FILE.into(),
        vocab_checksum,
        languages,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, PipelineError> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = read_file(&path)?;
    let m: Manifest = serde_json::from_slice(&bytes).map_err(|e| PipelineError::Format {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if m.format_version != FORMAT_VERSION {
        return Err(PipelineError::Format {
            path,
            message: format!("unsupported format version {}", m.format_version),
        });
    }
    Ok(m)
}

/// Reads a file and checks it against the manifest's checksum.
pub(crate) fn read_verified(dir: &Path, file: &str, checksum: &str) -> Result<(PathBuf, Vec<u8>), PipelineError> {
    let path = dir.join(file);
    let bytes = read_file(&path)?;
    if sha256_hex(&bytes) != checksum {
        return Err(PipelineError::Checksum(path));
    }
    Ok((path, bytes))
}
