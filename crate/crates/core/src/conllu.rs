//! Reading, validating and writing CoNLL-U treebanks.
//!
//! Ten tab-separated columns per word line, `#` comment lines, blank-line
//! sentence separators, `_` for empty fields and `i-j` multi-word token range
//! lines. Empty nodes (`3.1`) are skipped on read and never written.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct ConlluError {
    pub line: usize,
    pub message: String,
}

impl ConlluError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConlluError {
            line,
            message: message.into(),
        }
    }
}

/// Refusal to serialize a sentence that breaks a structural invariant.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("sentence {sentence}: {invariant}")]
pub struct InvariantViolation {
    pub sentence: usize,
    pub invariant: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordRow {
    pub id: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    /// Canonical `Name=Value|...` string sorted by feature name, or `_`.
    pub feats: String,
    /// `None` is written as `_` (unparsed data).
    pub head: Option<usize>,
    pub deprel: String,
    pub deps: String,
    pub misc: String,
}

impl WordRow {
    /// A row with every column except id and form set to `_`.
    pub fn new(id: usize, form: impl Into<String>) -> Self {
        WordRow {
            id,
            form: form.into(),
            lemma: "_".into(),
            upos: "_".into(),
            xpos: "_".into(),
            feats: "_".into(),
            head: None,
            deprel: "_".into(),
            deps: "_".into(),
            misc: "_".into(),
        }
    }

    pub fn space_after(&self) -> bool {
        space_after(&self.misc)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MwtRange {
    pub start: usize,
    pub end: usize,
    pub form: String,
    pub misc: String,
}

impl MwtRange {
    pub fn space_after(&self) -> bool {
        space_after(&self.misc)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TreebankSentence {
    /// Full comment lines, each beginning with `#`.
    pub comments: Vec<String>,
    pub rows: Vec<WordRow>,
    pub mwt_ranges: Vec<MwtRange>,
}

/// A surface token: either a plain word or a multi-word token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurfaceToken<'a> {
    pub form: &'a str,
    /// 0-based indices into `rows` of the words this token covers.
    pub words: std::ops::Range<usize>,
    pub is_mwt: bool,
    pub space_after: bool,
}

impl TreebankSentence {
    /// Value of a `# key = value` comment.
    pub fn comment_value(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let body = c.strip_prefix('#')?.trim_start();
            let rest = body.strip_prefix(key)?.trim_start();
            rest.strip_prefix('=').map(str::trim)
        })
    }

    /// Surface tokens in order; MWT ranges replace the words they cover.
    pub fn tokens(&self) -> Vec<SurfaceToken<'_>> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.rows.len() {
            let id = self.rows[i].id;
            if let Some(r) = self.mwt_ranges.iter().find(|r| r.start == id) {
                let n = r.end - r.start + 1;
                out.push(SurfaceToken {
                    form: &r.form,
                    words: i..i + n,
                    is_mwt: true,
                    space_after: r.space_after(),
                });
                i += n;
            } else {
                let w = &self.rows[i];
                out.push(SurfaceToken {
                    form: &w.form,
                    words: i..i + 1,
                    is_mwt: false,
                    space_after: w.space_after(),
                });
                i += 1;
            }
        }
        out
    }

    /// Raw text rebuilt from the surface tokens: single spaces between tokens
    /// unless `SpaceAfter=No`. Trailing space after the last token is dropped.
    pub fn reconstructed_text(&self) -> String {
        let tokens = self.tokens();
        let mut text = String::new();
        for (i, t) in tokens.iter().enumerate() {
            text.push_str(t.form);
            if t.space_after && i + 1 < tokens.len() {
                text.push(' ');
            }
        }
        text
    }

    /// `# text` comment when present, otherwise [`Self::reconstructed_text`].
    pub fn text(&self) -> String {
        match self.comment_value("text") {
            Some(t) => t.to_string(),
            None => self.reconstructed_text(),
        }
    }

    pub fn heads(&self) -> Vec<Option<usize>> {
        self.rows.iter().map(|r| r.head).collect()
    }
}

/// Whether a MISC field leaves `SpaceAfter` at its default (yes).
pub fn space_after(misc: &str) -> bool {
    !misc.split('|').any(|m| m == "SpaceAfter=No")
}

/// Sorts `Name=Value` pairs case-insensitively by name. `_` and the empty
/// string both become `_`.
pub fn canonical_feats(feats: &str) -> String {
    if feats.is_empty() || feats == "_" {
        return "_".into();
    }
    let mut pairs: Vec<&str> = feats.split('|').collect();
    pairs.sort_by(|a, b| {
        let name = |s: &str| s.split('=').next().unwrap_or("").to_lowercase();
        name(a).cmp(&name(b)).then_with(|| a.cmp(b))
    });
    pairs.join("|")
}

/// Strips a byte-order mark, trailing whitespace on every line and any
/// trailing blank lines, then terminates the last sentence with one blank line.
pub fn canonicalize(text: &str) -> String {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let lines: Vec<&str> = text.lines().map(|l| l.trim_end()).collect();
    let end = lines.iter().rposition(|l| !l.is_empty()).map_or(0, |i| i + 1);
    if end == 0 {
        return String::new();
    }
    let mut out = lines[..end].join("\n");
    out.push_str("\n\n");
    out
}

enum IdKind {
    Word(usize),
    Range(usize, usize),
    Empty,
}

fn parse_id(field: &str, line: usize) -> Result<IdKind, ConlluError> {
    let bad = || ConlluError::at(line, format!("non-integer ID `{}`", field));
    if field.contains('.') {
        return Ok(IdKind::Empty);
    }
    if let Some((a, b)) = field.split_once('-') {
        let a: usize = a.parse().map_err(|_| bad())?;
        let b: usize = b.parse().map_err(|_| bad())?;
        return Ok(IdKind::Range(a, b));
    }
    let id: usize = field.parse().map_err(|_| bad())?;
    if id == 0 {
        return Err(ConlluError::at(line, "word ID 0 is reserved for the root"));
    }
    Ok(IdKind::Word(id))
}

#[derive(Default)]
struct SentenceBuilder {
    sentence: TreebankSentence,
    first_line: usize,
    head_lines: Vec<usize>,
    range_lines: Vec<usize>,
}

impl SentenceBuilder {
    fn is_empty(&self) -> bool {
        self.sentence.rows.is_empty()
            && self.sentence.comments.is_empty()
            && self.sentence.mwt_ranges.is_empty()
    }

    fn finish(self) -> Result<(TreebankSentence, Option<String>), ConlluError> {
        let SentenceBuilder {
            sentence,
            first_line,
            head_lines,
            range_lines,
        } = self;
        if sentence.rows.is_empty() {
            return Err(ConlluError::at(first_line, "sentence has no word lines"));
        }
        let n = sentence.rows.len();
        for (row, &line) in sentence.rows.iter().zip(&head_lines) {
            if let Some(h) = row.head {
                if h > n {
                    return Err(ConlluError::at(
                        line,
                        format!("HEAD {} out of range 0..{}", h, n),
                    ));
                }
            }
        }
        for (r, &line) in sentence.mwt_ranges.iter().zip(&range_lines) {
            if r.start > r.end || r.end > n {
                return Err(ConlluError::at(
                    line,
                    format!("multi-word token range {}-{} does not cover existing words", r.start, r.end),
                ));
            }
        }
        for (i, a) in sentence.mwt_ranges.iter().enumerate() {
            for b in &sentence.mwt_ranges[i + 1..] {
                if a.start <= b.end && b.start <= a.end {
                    return Err(ConlluError::at(
                        range_lines[i],
                        format!(
                            "overlapping multi-word token ranges {}-{} and {}-{}",
                            a.start, a.end, b.start, b.end
                        ),
                    ));
                }
            }
        }
        let mut warning = None;
        if sentence.rows.iter().all(|r| r.head.is_some()) {
            let violations = validate_tree(&sentence, true);
            if let Some(v) = violations.first() {
                return Err(ConlluError::at(first_line, format!("invalid tree: {}", v)));
            }
            let roots = sentence.rows.iter().filter(|r| r.head == Some(0)).count();
            if roots > 1 {
                warning = Some(format!(
                    "line {}: {} words attached to the root",
                    first_line, roots
                ));
            }
        }
        Ok((sentence, warning))
    }
}

/// Parses a CoNLL-U document. Multiple root attachments are accepted and
/// reported through `log::warn!`; see [`parse_conllu_with_warnings`].
pub fn parse_conllu(text: &str) -> Result<Vec<TreebankSentence>, ConlluError> {
    let (sentences, warnings) = parse_conllu_with_warnings(text)?;
    for w in warnings {
        log::warn!("{}", w);
    }
    Ok(sentences)
}

pub fn parse_conllu_with_warnings(
    text: &str,
) -> Result<(Vec<TreebankSentence>, Vec<String>), ConlluError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut sentences = Vec::new();
    let mut warnings = Vec::new();
    let mut current = SentenceBuilder::default();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            if !current.is_empty() {
                let (s, w) = std::mem::take(&mut current).finish()?;
                sentences.push(s);
                warnings.extend(w);
            }
            continue;
        }
        if current.is_empty() {
            current.first_line = line_no;
        }
        if line.starts_with('#') {
            if !current.sentence.rows.is_empty() || !current.sentence.mwt_ranges.is_empty() {
                return Err(ConlluError::at(line_no, "comment line inside a sentence"));
            }
            current.sentence.comments.push(line.to_string());
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 10 {
            return Err(ConlluError::at(
                line_no,
                format!("expected 10 tab-separated fields, found {}", fields.len()),
            ));
        }
        match parse_id(fields[0], line_no)? {
            IdKind::Empty => continue,
            IdKind::Range(start, end) => {
                let expected = current.sentence.rows.len() + 1;
                if start != expected {
                    return Err(ConlluError::at(
                        line_no,
                        format!("range {}-{} must precede word {}", start, end, start),
                    ));
                }
                if start > end {
                    return Err(ConlluError::at(
                        line_no,
                        format!("range {}-{} has start after end", start, end),
                    ));
                }
                if fields[2..9].iter().any(|f| *f != "_") {
                    return Err(ConlluError::at(
                        line_no,
                        "multi-word token line must have `_` in columns 3-9",
                    ));
                }
                current.sentence.mwt_ranges.push(MwtRange {
                    start,
                    end,
                    form: fields[1].to_string(),
                    misc: fields[9].to_string(),
                });
                current.range_lines.push(line_no);
            }
            IdKind::Word(id) => {
                let expected = current.sentence.rows.len() + 1;
                if id != expected {
                    return Err(ConlluError::at(
                        line_no,
                        format!("word IDs must be consecutive: expected {}, found {}", expected, id),
                    ));
                }
                let head = match fields[6] {
                    "_" => None,
                    h => Some(h.parse::<usize>().map_err(|_| {
                        ConlluError::at(line_no, format!("non-integer HEAD `{}`", h))
                    })?),
                };
                current.sentence.rows.push(WordRow {
                    id,
                    form: fields[1].to_string(),
                    lemma: fields[2].to_string(),
                    upos: fields[3].to_string(),
                    xpos: fields[4].to_string(),
                    feats: canonical_feats(fields[5]),
                    head,
                    deprel: fields[7].to_string(),
                    deps: fields[8].to_string(),
                    misc: fields[9].to_string(),
                });
                current.head_lines.push(line_no);
            }
        }
    }
    if !current.is_empty() {
        let (s, w) = current.finish()?;
        sentences.push(s);
        warnings.extend(w);
    }
    Ok((sentences, warnings))
}

fn check_field(value: &str, what: &str, sentence: usize) -> Result<(), InvariantViolation> {
    let violation = |why: &str| InvariantViolation {
        sentence,
        invariant: format!("{} {}", what, why),
    };
    if value.is_empty() {
        return Err(violation("is empty (use `_`)"));
    }
    if value.contains('\t') || value.contains('\n') || value.contains('\r') {
        return Err(violation("contains a tab or newline"));
    }
    Ok(())
}

/// Checks every structural invariant a sentence must satisfy to be written.
pub fn check_invariants(s: &TreebankSentence, index: usize) -> Result<(), InvariantViolation> {
    let fail = |invariant: String| InvariantViolation {
        sentence: index,
        invariant,
    };
    if s.rows.is_empty() {
        return Err(fail("sentence has no words".into()));
    }
    let n = s.rows.len();
    for (i, r) in s.rows.iter().enumerate() {
        if r.id != i + 1 {
            return Err(fail(format!("word IDs must be 1..{} consecutive", n)));
        }
        if let Some(h) = r.head {
            if h > n {
                return Err(fail(format!("HEAD {} of word {} out of range 0..{}", h, r.id, n)));
            }
        }
        for (value, what) in [
            (&r.form, "FORM"),
            (&r.lemma, "LEMMA"),
            (&r.upos, "UPOS"),
            (&r.xpos, "XPOS"),
            (&r.feats, "FEATS"),
            (&r.deprel, "DEPREL"),
            (&r.deps, "DEPS"),
            (&r.misc, "MISC"),
        ] {
            check_field(value, &format!("{} of word {}", what, r.id), index)?;
        }
    }
    for c in &s.comments {
        if !c.starts_with('#') || c.contains('\n') {
            return Err(fail(format!("comment `{}` must be one line starting with `#`", c)));
        }
    }
    let mut ranges: Vec<&MwtRange> = s.mwt_ranges.iter().collect();
    ranges.sort_by_key(|r| r.start);
    for (i, r) in ranges.iter().enumerate() {
        if r.start > r.end || r.start == 0 || r.end > n {
            return Err(fail(format!(
                "multi-word token range {}-{} must satisfy 1 <= start <= end <= {}",
                r.start, r.end, n
            )));
        }
        if let Some(next) = ranges.get(i + 1) {
            if next.start <= r.end {
                return Err(fail(format!(
                    "multi-word token ranges {}-{} and {}-{} overlap",
                    r.start, r.end, next.start, next.end
                )));
            }
        }
        check_field(&r.form, &format!("FORM of range {}-{}", r.start, r.end), index)?;
        check_field(&r.misc, &format!("MISC of range {}-{}", r.start, r.end), index)?;
    }
    Ok(())
}

/// Writes sentences as CoNLL-U; each sentence is followed by a blank line.
pub fn serialize_conllu(sentences: &[TreebankSentence]) -> Result<String, InvariantViolation> {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        check_invariants(s, i + 1)?;
        for c in &s.comments {
            out.push_str(c);
            out.push('\n');
        }
        for r in &s.rows {
            if let Some(range) = s.mwt_ranges.iter().find(|m| m.start == r.id) {
                out.push_str(&format!(
                    "{}-{}\t{}\t_\t_\t_\t_\t_\t_\t_\t{}\n",
                    range.start, range.end, range.form, range.misc
                ));
            }
            let head = r.head.map_or_else(|| "_".to_string(), |h| h.to_string());
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.id,
                r.form,
                r.lemma,
                r.upos,
                r.xpos,
                canonical_feats(&r.feats),
                head,
                r.deprel,
                r.deps,
                r.misc
            ));
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeViolation {
    MissingHead { word: usize },
    NoRoot,
    MultipleRoots { words: Vec<usize> },
    /// Word ids on the cycle, starting from the smallest.
    Cycle { words: Vec<usize> },
}

impl fmt::Display for TreeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeViolation::MissingHead { word } => write!(f, "word {} has no head", word),
            TreeViolation::NoRoot => write!(f, "no node attached to root"),
            TreeViolation::MultipleRoots { words } => {
                write!(f, "multiple root attachments: words {:?}", words)
            }
            TreeViolation::Cycle { words } => write!(f, "cycle through words {:?}", words),
        }
    }
}

/// Structural problems of a sentence's head graph. The result is empty iff
/// the heads form a tree rooted at 0 (with a single root child unless
/// `allow_multiple_roots`).
pub fn validate_tree(sentence: &TreebankSentence, allow_multiple_roots: bool) -> Vec<TreeViolation> {
    validate_heads(&sentence.heads(), allow_multiple_roots)
}

/// [`validate_tree`] over a bare head vector (`heads[i]` is the head of word
/// `i + 1`).
pub fn validate_heads(heads: &[Option<usize>], allow_multiple_roots: bool) -> Vec<TreeViolation> {
    let n = heads.len();
    let mut out = Vec::new();
    for (i, h) in heads.iter().enumerate() {
        if h.is_none() {
            out.push(TreeViolation::MissingHead { word: i + 1 });
        }
    }
    if !out.is_empty() {
        return out;
    }
    let heads: Vec<usize> = heads.iter().map(|h| h.unwrap()).collect();
    let roots: Vec<usize> = (1..=n).filter(|&w| heads[w - 1] == 0).collect();
    if roots.is_empty() {
        out.push(TreeViolation::NoRoot);
    } else if roots.len() > 1 && !allow_multiple_roots {
        out.push(TreeViolation::MultipleRoots { words: roots });
    }
    // 0 = unvisited, 1 = on current path, 2 = done
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut v = start;
        while v <= n && state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = heads[v - 1];
            if v > n {
                break;
            }
        }
        if v <= n && state[v] == 1 {
            let pos = path.iter().position(|&p| p == v).unwrap();
            let mut cycle = path[pos..].to_vec();
            let min_pos = cycle.iter().enumerate().min_by_key(|(_, &w)| w).unwrap().0;
            cycle.rotate_left(min_pos);
            out.push(TreeViolation::Cycle { words: cycle });
        }
        for p in path {
            state[p] = 2;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_word_sentence() {
        let s = parse_conllu("1\tJohn\t_\tPROPN\t_\t_\t2\tnsubj\t_\t_\n2\truns\t_\tVERB\t_\t_\t0\troot\t_\t_\n\n").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].rows.len(), 2);
        assert_eq!(s[0].rows[1].head, Some(0));
        assert_eq!(s[0].rows[1].deprel, "root");
    }

    #[test]
    fn multiword_range() {
        let text = "1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n1\tde\tde\tADP\t_\t_\t0\troot\t_\t_\n2\tel\tel\tDET\t_\t_\t1\tdet\t_\t_\n\n";
        let s = parse_conllu(text).unwrap();
        assert_eq!(
            s[0].mwt_ranges,
            vec![MwtRange {
                start: 1,
                end: 2,
                form: "del".into(),
                misc: "_".into()
            }]
        );
        assert_eq!(s[0].rows.iter().map(|r| r.id).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(serialize_conllu(&s).unwrap(), text);
    }

    #[test]
    fn wrong_column_count_names_the_line() {
        let err = parse_conllu("# c\n1\ta\t_\tX\t_\t_\t0\troot\t_\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.message.contains("expected 10 tab-separated fields"), "{}", err);
    }

    #[test]
    fn other_parse_errors() {
        let e = parse_conllu("x\ta\t_\tX\t_\t_\t0\troot\t_\t_\n").unwrap_err();
        assert!(e.message.contains("non-integer ID"));
        let e = parse_conllu("1\ta\t_\tX\t_\t_\t5\troot\t_\t_\n").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.message.contains("out of range"));
        let text = "1-2\tab\t_\t_\t_\t_\t_\t_\t_\t_\n1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n2-3\tbc\t_\t_\t_\t_\t_\t_\t_\t_\n2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n3\tc\t_\tX\t_\t_\t1\tdep\t_\t_\n";
        let e = parse_conllu(text).unwrap_err();
        assert!(e.message.contains("overlapping"), "{}", e);
        assert_eq!(e.line, 1);
    }

    #[test]
    fn empty_nodes_and_bom_are_dropped() {
        let text = "\u{feff}1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n1.1\tgap\t_\tX\t_\t_\t_\t_\t0:root\t_\n\n";
        let s = parse_conllu(text).unwrap();
        assert_eq!(s[0].rows.len(), 1);
        assert_eq!(
            serialize_conllu(&s).unwrap(),
            "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n\n"
        );
    }

    #[test]
    fn feats_are_written_in_canonical_order() {
        let mut row = WordRow::new(1, "x");
        row.feats = "Number=Sing|Case=Nom".into();
        row.head = Some(0);
        let s = TreebankSentence {
            rows: vec![row],
            ..Default::default()
        };
        let out = serialize_conllu(&[s]).unwrap();
        assert_eq!(out.split('\t').nth(5).unwrap(), "Case=Nom|Number=Sing");
    }

    #[test]
    fn serialize_empty_and_refusals() {
        assert_eq!(serialize_conllu(&[]).unwrap(), "");
        let mut row = WordRow::new(1, "a");
        row.head = Some(3);
        let bad = TreebankSentence {
            rows: vec![row],
            ..Default::default()
        };
        let err = serialize_conllu(&[bad]).unwrap_err();
        assert!(err.invariant.contains("HEAD 3"), "{}", err);
        let row = WordRow::new(1, "a\tb");
        let bad = TreebankSentence {
            rows: vec![row],
            ..Default::default()
        };
        assert!(serialize_conllu(&[bad]).unwrap_err().invariant.contains("tab"));
    }

    #[test]
    fn tree_validation_examples() {
        assert!(validate_heads(&[Some(2), Some(0)], false).is_empty());
        let v = validate_heads(&[Some(2), Some(1)], false);
        assert_eq!(
            v,
            vec![TreeViolation::NoRoot, TreeViolation::Cycle { words: vec![1, 2] }]
        );
        assert_eq!(v[0].to_string(), "no node attached to root");
        let v = validate_heads(&[Some(0), Some(0)], false);
        assert_eq!(v, vec![TreeViolation::MultipleRoots { words: vec![1, 2] }]);
        assert!(validate_heads(&[Some(0), Some(0)], true).is_empty());
        let v = validate_heads(&[Some(0), Some(3), Some(2)], true);
        assert_eq!(v, vec![TreeViolation::Cycle { words: vec![2, 3] }]);
    }

    #[test]
    fn cyclic_gold_is_rejected_with_line() {
        let text = "# sent\n1\ta\t_\tX\t_\t_\t2\tdep\t_\t_\n2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n";
        let e = parse_conllu(text).unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.message.contains("no node attached to root"));
    }

    #[test]
    fn multiple_roots_warn_but_parse() {
        let text = "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n2\tb\t_\tX\t_\t_\t0\troot\t_\t_\n";
        let (s, w) = parse_conllu_with_warnings(text).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn text_reconstruction_honours_space_after() {
        let text = "1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n1\tde\t_\tADP\t_\t_\t3\tcase\t_\t_\n2\tel\t_\tDET\t_\t_\t3\tdet\t_\t_\n3\tpueblo\t_\tNOUN\t_\t_\t0\troot\t_\tSpaceAfter=No\n4\t.\t_\tPUNCT\t_\t_\t3\tpunct\t_\t_\n\n";
        let s = parse_conllu(text).unwrap();
        assert_eq!(s[0].reconstructed_text(), "del pueblo.");
        assert_eq!(s[0].text(), "del pueblo.");
        let toks = s[0].tokens();
        assert_eq!(toks.len(), 3);
        assert!(toks[0].is_mwt);
        assert_eq!(toks[0].words, 0..2);
    }

    #[test]
    fn canonicalize_trims() {
        assert_eq!(canonicalize("a\t \nb  \n\n\n"), "a\nb\n\n");
        assert_eq!(canonicalize("\n\n"), "");
    }
}
