//! The annotated document: text, sentences, tokens and expanded words with
//! character spans, convertible to and from CoNLL-U.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::conllu::{InvariantViolation, MwtRange, TreebankSentence, WordRow};

/// A token id: a word number, or an `i-j` range for multi-word tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenId {
    Word(usize),
    Range(usize, usize),
}

impl Serialize for TokenId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            TokenId::Word(i) => s.serialize_u64(i as u64),
            TokenId::Range(a, b) => s.serialize_str(&format!("{}-{}", a, b)),
        }
    }
}

impl<'de> Deserialize<'de> for TokenId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(usize),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(i) => Ok(TokenId::Word(i)),
            Repr::Str(s) => {
                let bad = || serde::de::Error::custom(format!("bad token id `{}`", s));
                let (a, b) = s.split_once('-').ok_or_else(bad)?;
                Ok(TokenId::Range(a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
            }
        }
    }
}

/// Word-level annotation; absent fields were not predicted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordAnnotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upos: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xpos: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feats: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deprel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma: Option<String>,
    /// MISC entries other than `SpaceAfter` and `NER`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub misc: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Word {
    pub id: usize,
    pub text: String,
    #[serde(flatten)]
    pub annotation: WordAnnotation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub id: TokenId,
    pub text: String,
    /// Character offsets into the document text, half-open.
    pub span: [usize; 2],
    /// Syntactic words of a multi-word token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expanded: Option<Vec<Word>>,
    /// Annotation of a single-word token.
    #[serde(flatten)]
    pub annotation: WordAnnotation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ner: Option<String>,
}

impl Token {
    /// The token's words: its expansion, or itself as one word.
    pub fn words(&self) -> Vec<Word> {
        match (&self.expanded, self.id) {
            (Some(ws), _) => ws.clone(),
            (None, TokenId::Word(id)) | (None, TokenId::Range(id, _)) => vec![Word {
                id,
                text: self.text.clone(),
                annotation: self.annotation.clone(),
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: usize,
    pub text: String,
    pub span: [usize; 2],
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn words(&self) -> Vec<Word> {
        self.tokens.iter().flat_map(Token::words).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub text: String,
    pub sentences: Vec<Sentence>,
    /// Components that were skipped and why.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notices: Vec<String>,
}

fn or_blank(v: &Option<String>) -> String {
    v.clone().unwrap_or_else(|| "_".into())
}

fn field(v: &str) -> Option<String> {
    (v != "_").then(|| v.to_string())
}

fn misc_string(extra: &Option<String>, ner: &Option<String>, space_after: bool) -> String {
    let mut parts: Vec<String> = extra
        .as_deref()
        .map(|m| m.split('|').map(str::to_string).collect())
        .unwrap_or_default();
    if let Some(n) = ner {
        parts.push(format!("NER={}", n));
    }
    if !space_after {
        parts.push("SpaceAfter=No".into());
    }
    parts.sort();
    if parts.is_empty() {
        "_".into()
    } else {
        parts.join("|")
    }
}

/// Splits MISC into (other entries, NER tag, space after).
fn split_misc(misc: &str) -> (Option<String>, Option<String>, bool) {
    let mut extra = Vec::new();
    let mut ner = None;
    let mut space = true;
    for m in misc.split('|').filter(|m| !m.is_empty() && *m != "_") {
        if m == "SpaceAfter=No" {
            space = false;
        } else if let Some(tag) = m.strip_prefix("NER=") {
            ner = Some(tag.to_string());
        } else {
            extra.push(m);
        }
    }
    let extra = (!extra.is_empty()).then(|| extra.join("|"));
    (extra, ner, space)
}

impl Document {
    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// CoNLL-U sentences with `sent_id` and `text` comments. Tokens directly
    /// followed by the next token get `SpaceAfter=No`; NER tags go to MISC as
    /// `NER=<tag>`.
    pub fn to_treebank(&self) -> Vec<TreebankSentence> {
        let starts: Vec<usize> = self.sentences.iter().flat_map(|s| &s.tokens).map(|t| t.span[0]).collect();
        let mut next_index = 0;
        let mut out = Vec::with_capacity(self.sentences.len());
        for s in &self.sentences {
            let mut sent = TreebankSentence {
                comments: vec![format!("# sent_id = {}", s.id), format!("# text = {}", s.text)],
                rows: Vec::new(),
                mwt_ranges: Vec::new(),
            };
            for t in &s.tokens {
                next_index += 1;
                let space_after = starts.get(next_index).is_none_or(|&next| next != t.span[1]);
                let misc = misc_string(&t.annotation.misc, &t.ner, space_after);
                match &t.expanded {
                    Some(words) => {
                        sent.mwt_ranges.push(MwtRange {
                            start: words[0].id,
                            end: words[words.len() - 1].id,
                            form: t.text.clone(),
                            misc,
                        });
                        for w in words {
                            let mut row = row_of(w);
                            row.misc = misc_string(&w.annotation.misc, &None, true);
                            sent.rows.push(row);
                        }
                    }
                    None => {
                        for w in t.words() {
                            let mut row = row_of(&w);
                            row.misc = misc.clone();
                            sent.rows.push(row);
                        }
                    }
                }
            }
            out.push(sent);
        }
        out
    }

    pub fn to_conllu(&self) -> Result<String, InvariantViolation> {
        crate::conllu::serialize_conllu(&self.to_treebank())
    }

    /// Rebuilds a document from CoNLL-U. The text joins tokens with single
    /// spaces unless `SpaceAfter=No`, including across sentences.
    pub fn from_treebank(sentences: &[TreebankSentence]) -> Self {
        let mut doc = Document::default();
        let mut len = 0usize;
        let mut pending_space = false;
        for (si, s) in sentences.iter().enumerate() {
            let mut tokens = Vec::new();
            let mut sent_start = None;
            for st in s.tokens() {
                if pending_space {
                    doc.text.push(' ');
                    len += 1;
                }
                let start = len;
                sent_start.get_or_insert(start);
                doc.text.push_str(st.form);
                len += st.form.chars().count();
                pending_space = st.space_after;
                let rows = &s.rows[st.words.clone()];
                if st.is_mwt {
                    let (extra, ner, _) = split_misc(
                        &s.mwt_ranges
                            .iter()
                            .find(|r| r.start == rows[0].id)
                            .map(|r| r.misc.clone())
                            .unwrap_or_default(),
                    );
                    tokens.push(Token {
                        id: TokenId::Range(rows[0].id, rows[rows.len() - 1].id),
                        text: st.form.to_string(),
                        span: [start, len],
                        expanded: Some(rows.iter().map(word_of).collect()),
                        annotation: WordAnnotation {
                            misc: extra,
                            ..WordAnnotation::default()
                        },
                        ner,
                    });
                } else {
                    let w = word_of(&rows[0]);
                    let (_, ner, _) = split_misc(&rows[0].misc);
                    tokens.push(Token {
                        id: TokenId::Word(w.id),
                        text: w.text,
                        span: [start, len],
                        expanded: None,
                        annotation: w.annotation,
                        ner,
                    });
                }
            }
            let start = sent_start.unwrap_or(len);
            let end = tokens.last().map_or(start, |t| t.span[1]);
            doc.sentences.push(Sentence {
                id: si + 1,
                text: doc.text.chars().skip(start).take(end - start).collect(),
                span: [start, end],
                tokens,
            });
        }
        doc
    }
}

fn row_of(w: &Word) -> WordRow {
    let a = &w.annotation;
    let mut row = WordRow::new(w.id, w.text.clone());
    row.lemma = or_blank(&a.lemma);
    row.upos = or_blank(&a.upos);
    row.xpos = or_blank(&a.xpos);
    row.feats = or_blank(&a.feats);
    row.head = a.head;
    row.deprel = or_blank(&a.deprel);
    row
}

fn word_of(r: &WordRow) -> Word {
    let (extra, _, _) = split_misc(&r.misc);
    Word {
        id: r.id,
        text: r.form.clone(),
        annotation: WordAnnotation {
            upos: field(&r.upos),
            xpos: field(&r.xpos),
            feats: field(&r.feats),
            head: r.head,
            deprel: field(&r.deprel),
            lemma: field(&r.lemma),
            misc: extra,
        },
    }
}
