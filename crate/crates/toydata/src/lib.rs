//! Synthetic treebanks for three toy languages.
//!
//! Every language has its own syllable inventory, word order, inflection and
//! closed-class words. Sentences come with full CoNLL-U annotation (lemmas,
//! tags, features, trees), surface tokens with multi-word contractions, BIO
//! entity tags and raw text. Output is plain text in the usual file formats,
//! so this crate has no dependency on the pipeline itself.
//!
//! Lexicons depend only on the language; sentence sampling depends on the
//! seed passed to [`generate`].

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordOrder {
    Svo,
    Sov,
    Vso,
}

#[derive(Debug, Clone)]
pub struct ToyLanguage {
    pub code: &'static str,
    pub order: WordOrder,
    pub adj_after_noun: bool,
    pub postpositions: bool,
    pub has_xpos: bool,
    consonants: &'static [&'static str],
    vowels: &'static [&'static str],
    /// Definite singular, definite plural, indefinite singular, indefinite plural.
    dets: [&'static str; 4],
    adpositions: &'static [&'static str],
    /// (adposition, definite singular determiner surface) -> contraction
    contractions: &'static [(&'static str, &'static str)],
    lexicon_seed: u64,
}

pub const LANGUAGE_CODES: [&str; 3] = ["xa", "xb", "xc"];

/// The toy language with the given code (`xa`, `xb` or `xc`).
pub fn language(code: &str) -> Option<ToyLanguage> {
    match code {
        "xa" => Some(ToyLanguage {
            code: "xa",
            order: WordOrder::Svo,
            adj_after_noun: true,
            postpositions: false,
            has_xpos: true,
            consonants: &["b", "c", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t", "v", "ch", "ll"],
            vowels: &["a", "e", "i", "o", "u"],
            dets: ["el", "los", "un", "unos"],
            adpositions: &["de", "en", "con", "por", "a"],
            contractions: &[("de", "del"), ("a", "al")],
            lexicon_seed: 11,
        }),
        "xb" => Some(ToyLanguage {
            code: "xb",
            order: WordOrder::Sov,
            adj_after_noun: false,
            postpositions: true,
            has_xpos: false,
            consonants: &["k", "t", "p", "s", "h", "m", "n", "r", "w", "y", "sh", "ts"],
            vowels: &["a", "i", "u", "o", "e"],
            dets: ["sono", "sorera", "aru", "arura"],
            adpositions: &["ni", "de", "to", "kara", "made"],
            contractions: &[],
            lexicon_seed: 23,
        }),
        "xc" => Some(ToyLanguage {
            code: "xc",
            order: WordOrder::Vso,
            adj_after_noun: false,
            postpositions: false,
            has_xpos: true,
            consonants: &["b", "d", "g", "k", "l", "m", "n", "r", "s", "t", "z", "sch", "w"],
            vowels: &["a", "e", "i", "o", "u", "ä", "ö", "ü"],
            dets: ["dör", "dü", "ein", "einz"],
            adpositions: &["zu", "mit", "ün", "bei"],
            contractions: &[("zu", "zum"), ("bei", "beim")],
            lexicon_seed: 37,
        }),
        _ => None,
    }
}

struct Lexicon {
    nouns: Vec<String>,
    verbs: Vec<String>,
    adjs: Vec<String>,
    persons: Vec<String>,
    places: Vec<String>,
    orgs: Vec<String>,
    org_suffix: Vec<String>,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

impl ToyLanguage {
    fn lexicon(&self) -> Lexicon {
        let mut rng = ChaCha8Rng::seed_from_u64(self.lexicon_seed);
        let mut seen: HashSet<String> = HashSet::new();
        for w in self.dets.iter().chain(self.adpositions) {
            seen.insert(w.to_string());
        }
        for (_, c) in self.contractions {
            seen.insert(c.to_string());
        }
        let mut make = |n: usize, min_syl: usize, max_syl: usize, rng: &mut ChaCha8Rng| {
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let syl = rng.gen_range(min_syl..=max_syl);
                let mut w = String::new();
                for _ in 0..syl {
                    w.push_str(self.consonants.choose(rng).unwrap());
                    w.push_str(self.vowels.choose(rng).unwrap());
                }
                if rng.gen_bool(0.3) {
                    w.push_str(self.consonants.choose(rng).unwrap());
                }
                if seen.insert(w.clone()) {
                    out.push(w);
                }
            }
            out
        };
        let nouns = make(1500, 2, 3, &mut rng);
        let verbs = make(600, 1, 3, &mut rng);
        let adjs = make(400, 2, 3, &mut rng);
        let persons = make(300, 2, 3, &mut rng).iter().map(|w| capitalize(w)).collect();
        let places = make(200, 2, 4, &mut rng).iter().map(|w| capitalize(w)).collect();
        let orgs = make(100, 1, 3, &mut rng).iter().map(|w| capitalize(w)).collect();
        let org_suffix = make(4, 2, 2, &mut rng).iter().map(|w| capitalize(w)).collect();
        Lexicon {
            nouns,
            verbs,
            adjs,
            persons,
            places,
            orgs,
            org_suffix,
        }
    }

    fn noun_form(&self, stem: &str, plural: bool) -> String {
        if !plural {
            return stem.to_string();
        }
        match self.code {
            "xa" => {
                if stem.ends_with(|c: char| "aeiou".contains(c)) {
                    format!("{}s", stem)
                } else {
                    format!("{}es", stem)
                }
            }
            "xb" => format!("{}tachi", stem),
            _ => format!("{}en", stem),
        }
    }

    fn verb_lemma(&self, stem: &str) -> String {
        match self.code {
            "xa" => format!("{}ar", stem),
            "xb" => format!("{}u", stem),
            _ => format!("{}en", stem),
        }
    }

    fn verb_form(&self, stem: &str, past: bool, plural: bool) -> String {
        let suffix = match (self.code, past, plural) {
            ("xa", false, false) => "a",
            ("xa", false, true) => "an",
            ("xa", true, false) => "ó",
            ("xa", true, true) => "aron",
            ("xb", false, _) => "u",
            ("xb", true, _) => "ta",
            (_, false, false) => "t",
            (_, false, true) => "n",
            (_, true, false) => "te",
            (_, true, true) => "ten",
        };
        format!("{}{}", stem, suffix)
    }

    fn adj_form(&self, stem: &str, plural: bool) -> String {
        match (self.code, plural) {
            ("xa", false) => format!("{}o", stem),
            ("xa", true) => format!("{}os", stem),
            ("xb", _) => format!("{}i", stem),
            (_, false) => format!("{}e", stem),
            (_, true) => format!("{}en", stem),
        }
    }

    fn adj_lemma(&self, stem: &str) -> String {
        self.adj_form(stem, false)
    }

    fn xpos(&self, upos: &str, plural: bool, past: bool) -> String {
        if !self.has_xpos {
            return "_".into();
        }
        let tag = match (self.code, upos) {
            ("xa", "NOUN") => if plural { "NCP" } else { "NCS" },
            ("xa", "PROPN") => "NP",
            ("xa", "VERB") => if past { "VMIS" } else { "VMIP" },
            ("xa", "ADJ") => if plural { "AQP" } else { "AQS" },
            ("xa", "DET") => "DA",
            ("xa", "ADP") => "SP",
            ("xa", "PUNCT") => "FP",
            (_, "NOUN") => "NN",
            (_, "PROPN") => "NE",
            (_, "VERB") => if past { "VVPAST" } else { "VVFIN" },
            (_, "ADJ") => "ADJA",
            (_, "DET") => "ART",
            (_, "ADP") => "APPR",
            (_, "PUNCT") => "PUNCT",
            _ => "X",
        };
        tag.into()
    }
}

#[derive(Debug, Clone)]
struct Word {
    form: String,
    lemma: String,
    upos: &'static str,
    xpos: String,
    feats: String,
    /// Local index of the head within the phrase; `None` for the phrase head.
    head: Option<usize>,
    deprel: &'static str,
    entity: Option<(&'static str, bool)>,
}

struct Phrase {
    words: Vec<Word>,
    head: usize,
    deprel: &'static str,
}

fn number_feat(plural: bool) -> &'static str {
    if plural {
        "Number=Plur"
    } else {
        "Number=Sing"
    }
}

struct Generator<'l> {
    lang: &'l ToyLanguage,
    lex: Lexicon,
}

impl<'l> Generator<'l> {
    fn noun_phrase(&self, rng: &mut ChaCha8Rng, allow_names: bool) -> (Vec<Word>, usize, bool) {
        let l = self.lang;
        if allow_names && rng.gen_bool(0.25) {
            return self.name(rng);
        }
        let plural = rng.gen_bool(0.35);
        let stem = self.lex.nouns.choose(rng).unwrap();
        let noun = Word {
            form: l.noun_form(stem, plural),
            lemma: stem.clone(),
            upos: "NOUN",
            xpos: l.xpos("NOUN", plural, false),
            feats: number_feat(plural).into(),
            head: None,
            deprel: "",
            entity: None,
        };
        let det = rng.gen_bool(0.75).then(|| {
            let definite = rng.gen_bool(0.6);
            let idx = match (definite, plural) {
                (true, false) => 0,
                (true, true) => 1,
                (false, false) => 2,
                (false, true) => 3,
            };
            let def = if definite { "Definite=Def" } else { "Definite=Ind" };
            Word {
                form: l.dets[idx].into(),
                lemma: l.dets[if definite { 0 } else { 2 }].into(),
                upos: "DET",
                xpos: l.xpos("DET", plural, false),
                feats: format!("{}|{}", def, number_feat(plural)),
                head: None,
                deprel: "det",
                entity: None,
            }
        });
        let adj = rng.gen_bool(0.35).then(|| {
            let stem = self.lex.adjs.choose(rng).unwrap();
            Word {
                form: l.adj_form(stem, plural),
                lemma: l.adj_lemma(stem),
                upos: "ADJ",
                xpos: l.xpos("ADJ", plural, false),
                feats: if l.code == "xb" { "_".into() } else { number_feat(plural).into() },
                head: None,
                deprel: "amod",
                entity: None,
            }
        });
        let mut words = Vec::new();
        if let Some(d) = det {
            words.push(d);
        }
        if let (Some(a), false) = (&adj, l.adj_after_noun) {
            words.push(a.clone());
        }
        let head = words.len();
        words.push(noun);
        if let (Some(a), true) = (adj, l.adj_after_noun) {
            words.push(a);
        }
        for (i, w) in words.iter_mut().enumerate() {
            if i != head {
                w.head = Some(head);
            }
        }
        (words, head, false)
    }

    fn name(&self, rng: &mut ChaCha8Rng) -> (Vec<Word>, usize, bool) {
        let l = self.lang;
        let propn = |form: &str, entity: &'static str, begin: bool, head: Option<usize>| Word {
            form: form.into(),
            lemma: form.into(),
            upos: "PROPN",
            xpos: l.xpos("PROPN", false, false),
            feats: "Number=Sing".into(),
            head,
            deprel: if head.is_some() { "flat" } else { "" },
            entity: Some((entity, begin)),
        };
        let words = if rng.gen_bool(0.2) {
            let org = self.lex.orgs.choose(rng).unwrap();
            let suffix = self.lex.org_suffix.choose(rng).unwrap();
            vec![propn(org, "ORG", true, None), propn(suffix, "ORG", false, Some(0))]
        } else if rng.gen_bool(0.4) {
            let first = self.lex.persons.choose(rng).unwrap();
            let last = self.lex.persons.choose(rng).unwrap();
            vec![propn(first, "PER", true, None), propn(last, "PER", false, Some(0))]
        } else {
            vec![propn(self.lex.persons.choose(rng).unwrap(), "PER", true, None)]
        };
        (words, 0, true)
    }

    fn place(&self, rng: &mut ChaCha8Rng) -> (Vec<Word>, usize, bool) {
        let l = self.lang;
        let form = self.lex.places.choose(rng).unwrap();
        let w = Word {
            form: form.clone(),
            lemma: form.clone(),
            upos: "PROPN",
            xpos: l.xpos("PROPN", false, false),
            feats: "Number=Sing".into(),
            head: None,
            deprel: "",
            entity: Some(("LOC", true)),
        };
        (vec![w], 0, true)
    }

    fn adpositional(&self, rng: &mut ChaCha8Rng) -> (Vec<Word>, usize) {
        let l = self.lang;
        let (mut np, mut head, _) = if rng.gen_bool(0.3) {
            self.place(rng)
        } else {
            self.noun_phrase(rng, false)
        };
        let form = l.adpositions.choose(rng).unwrap().to_string();
        let adp = Word {
            lemma: form.clone(),
            form,
            upos: "ADP",
            xpos: l.xpos("ADP", false, false),
            feats: "_".into(),
            head: None,
            deprel: "case",
            entity: None,
        };
        if l.postpositions {
            np.push(adp);
        } else {
            for w in np.iter_mut() {
                w.head = w.head.map(|h| h + 1);
            }
            head += 1;
            np.insert(0, adp);
        }
        let adp_idx = if l.postpositions { np.len() - 1 } else { 0 };
        np[adp_idx].head = Some(head);
        (np, head)
    }

    fn sentence(&self, rng: &mut ChaCha8Rng) -> Vec<Word> {
        let l = self.lang;
        let (subj, subj_head, subj_is_name) = self.noun_phrase(rng, true);
        let subj_plural = !subj_is_name && subj[subj_head].feats.contains("Plur");
        let past = rng.gen_bool(0.5);
        let stem = self.lex.verbs.choose(rng).unwrap();
        let tense = if past { "Tense=Past" } else { "Tense=Pres" };
        let verb_feats = if l.code == "xb" {
            format!("{}|VerbForm=Fin", tense)
        } else {
            format!("{}|{}|VerbForm=Fin", number_feat(subj_plural), tense)
        };
        let verb = Word {
            form: l.verb_form(stem, past, subj_plural),
            lemma: l.verb_lemma(stem),
            upos: "VERB",
            xpos: l.xpos("VERB", false, past),
            feats: verb_feats,
            head: None,
            deprel: "root",
            entity: None,
        };
        let mut subj = Phrase {
            words: subj,
            head: subj_head,
            deprel: "nsubj",
        };
        if rng.gen_bool(0.15) && !subj_is_name {
            // noun modifier inside the subject
            let (pp, pp_head) = self.adpositional(rng);
            let offset = subj.words.len();
            let target = subj.head;
            for (i, mut w) in pp.into_iter().enumerate() {
                w.head = Some(match w.head {
                    Some(h) => h + offset,
                    None => target,
                });
                if i == pp_head {
                    w.deprel = "nmod";
                }
                subj.words.push(w);
            }
        }
        let obj = rng.gen_bool(0.7).then(|| {
            let (w, h, _) = self.noun_phrase(rng, true);
            Phrase {
                words: w,
                head: h,
                deprel: "obj",
            }
        });
        let mut obls = Vec::new();
        if rng.gen_bool(0.5) {
            let (w, h) = self.adpositional(rng);
            obls.push(Phrase {
                words: w,
                head: h,
                deprel: "obl",
            });
            if rng.gen_bool(0.25) {
                let (w, h) = self.adpositional(rng);
                obls.push(Phrase {
                    words: w,
                    head: h,
                    deprel: "obl",
                });
            }
        }
        let verb_phrase = Phrase {
            words: vec![verb],
            head: 0,
            deprel: "root",
        };
        let mut order: Vec<Phrase> = Vec::new();
        match l.order {
            WordOrder::Svo => {
                order.push(subj);
                order.push(verb_phrase);
                order.extend(obj);
                order.extend(obls);
            }
            WordOrder::Sov => {
                order.push(subj);
                order.extend(obls);
                order.extend(obj);
                order.push(verb_phrase);
            }
            WordOrder::Vso => {
                order.push(verb_phrase);
                order.push(subj);
                order.extend(obj);
                order.extend(obls);
            }
        }
        let verb_pos: usize = order
            .iter()
            .take_while(|p| p.deprel != "root")
            .map(|p| p.words.len())
            .sum();
        let mut words = Vec::new();
        for p in order {
            let offset = words.len();
            for (i, mut w) in p.words.into_iter().enumerate() {
                if p.deprel == "root" {
                    w.head = None;
                } else {
                    w.head = Some(match w.head {
                        Some(h) => h + offset,
                        None => verb_pos,
                    });
                    if i == p.head {
                        w.deprel = p.deprel;
                    }
                }
                words.push(w);
            }
        }
        words.push(Word {
            form: ".".into(),
            lemma: ".".into(),
            upos: "PUNCT",
            xpos: l.xpos("PUNCT", false, false),
            feats: "_".into(),
            head: Some(verb_pos),
            deprel: "punct",
            entity: None,
        });
        words
    }
}

struct Token {
    form: String,
    words: std::ops::Range<usize>,
}

fn tokens_for(lang: &ToyLanguage, words: &mut [Word]) -> Vec<Token> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < words.len() {
        if i + 1 < words.len() && words[i].upos == "ADP" && words[i + 1].upos == "DET" {
            if let Some((_, c)) = lang
                .contractions
                .iter()
                .find(|(a, _)| *a == words[i].form)
                .filter(|_| words[i + 1].form == lang.dets[0])
            {
                out.push(Token {
                    form: c.to_string(),
                    words: i..i + 2,
                });
                i += 2;
                continue;
            }
        }
        out.push(Token {
            form: words[i].form.clone(),
            words: i..i + 1,
        });
        i += 1;
    }
    // sentence-initial capitalization on the surface
    out[0].form = capitalize(&out[0].form);
    let first = out[0].words.start;
    words[first].form = capitalize(&words[first].form);
    out
}

/// One generated corpus. All three views describe the same sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    /// CoNLL-U treebank with `# sent_id` and `# text` comments.
    pub conllu: String,
    /// Two-column `token<TAB>tag` BIO file, blank line between sentences.
    pub ner_bio: String,
    /// Sentences joined by single spaces.
    pub raw: String,
}

/// Generates `sentences` sentences of `lang`, deterministic in `seed`.
pub fn generate(lang: &ToyLanguage, sentences: usize, seed: u64) -> Corpus {
    let generator = Generator {
        lang,
        lex: lang.lexicon(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (lang.lexicon_seed << 32));
    let mut conllu = String::new();
    let mut ner = String::new();
    let mut texts = Vec::new();
    for s in 0..sentences {
        let mut words = generator.sentence(&mut rng);
        let tokens = tokens_for(lang, &mut words);
        let n_tok = tokens.len();
        let mut text = String::new();
        for (ti, t) in tokens.iter().enumerate() {
            text.push_str(&t.form);
            let next_is_punct = ti + 1 < n_tok && tokens[ti + 1].form == ".";
            if ti + 1 < n_tok && !next_is_punct {
                text.push(' ');
            }
        }
        conllu.push_str(&format!("# sent_id = {}-{}\n# text = {}\n", lang.code, s + 1, text));
        for (ti, t) in tokens.iter().enumerate() {
            let no_space = ti + 1 < n_tok && tokens[ti + 1].form == ".";
            let misc = if no_space { "SpaceAfter=No" } else { "_" };
            if t.words.len() > 1 {
                conllu.push_str(&format!(
                    "{}-{}\t{}\t_\t_\t_\t_\t_\t_\t_\t{}\n",
                    t.words.start + 1,
                    t.words.end,
                    t.form,
                    misc
                ));
            }
            for wi in t.words.clone() {
                let w = &words[wi];
                let head = w.head.map_or(0, |h| h + 1);
                let word_misc = if t.words.len() == 1 { misc } else { "_" };
                conllu.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t_\t{}\n",
                    wi + 1,
                    w.form,
                    w.lemma,
                    w.upos,
                    w.xpos,
                    w.feats,
                    head,
                    w.deprel,
                    word_misc
                ));
            }
            let tag = match words[t.words.start].entity {
                Some((ty, true)) => format!("B-{}", ty),
                Some((ty, false)) => format!("I-{}", ty),
                None => "O".into(),
            };
            ner.push_str(&format!("{}\t{}\n", t.form, tag));
        }
        conllu.push('\n');
        ner.push('\n');
        texts.push(text);
    }
    Corpus {
        conllu,
        ner_bio: ner,
        raw: texts.join(" "),
    }
}

/// Raw multilingual text for encoder pretraining and vocabulary training:
/// `sentences_per_language` sentences of every toy language, one per line.
/// Every lexicon entry of every language appears at least once in a
/// dedicated word-list line so the vocabulary sees the full alphabet.
pub fn pretraining_text(sentences_per_language: usize, seed: u64) -> String {
    let mut out = String::new();
    for code in LANGUAGE_CODES {
        let lang = language(code).unwrap();
        let corpus = generate(&lang, sentences_per_language, seed);
        for line in corpus.conllu.lines() {
            if let Some(t) = line.strip_prefix("# text = ") {
                out.push_str(t);
                out.push('\n');
            }
        }
        let g = Generator {
            lang: &lang,
            lex: lang.lexicon(),
        };
        let lex = &g.lex;
        for (i, stem) in lex.nouns.iter().enumerate() {
            out.push_str(&lang.noun_form(stem, i % 2 == 1));
            out.push(if i % 12 == 11 { '\n' } else { ' ' });
        }
        for (i, stem) in lex.verbs.iter().enumerate() {
            out.push_str(&lang.verb_form(stem, i % 2 == 0, i % 3 == 0));
            out.push(' ');
            out.push_str(&lang.verb_lemma(stem));
            out.push(if i % 6 == 5 { '\n' } else { ' ' });
        }
        for (i, stem) in lex.adjs.iter().enumerate() {
            out.push_str(&lang.adj_form(stem, i % 2 == 1));
            out.push(if i % 12 == 11 { '\n' } else { ' ' });
        }
        for (i, n) in lex
            .persons
            .iter()
            .chain(&lex.places)
            .chain(&lex.orgs)
            .chain(&lex.org_suffix)
            .enumerate()
        {
            out.push_str(n);
            out.push(if i % 12 == 11 { '\n' } else { ' ' });
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let l = language("xa").unwrap();
        assert_eq!(generate(&l, 5, 1), generate(&l, 5, 1));
        assert_ne!(generate(&l, 5, 1), generate(&l, 5, 2));
    }

    #[test]
    fn contractions_appear_as_ranges() {
        let l = language("xa").unwrap();
        let c = generate(&l, 200, 3);
        assert!(c.conllu.lines().any(|line| line.contains("-") && line.contains("\tdel\t")));
    }

    #[test]
    fn views_agree_on_sentence_count() {
        for code in LANGUAGE_CODES {
            let l = language(code).unwrap();
            let c = generate(&l, 7, 4);
            assert_eq!(c.conllu.matches("# text = ").count(), 7);
            assert_eq!(c.ner_bio.split("\n\n").filter(|s| !s.trim().is_empty()).count(), 7);
            assert_eq!(c.raw.matches('.').count(), 7);
        }
    }

    #[test]
    fn every_sentence_has_one_root() {
        let l = language("xc").unwrap();
        let c = generate(&l, 50, 9);
        for block in c.conllu.split("\n\n").filter(|b| !b.trim().is_empty()) {
            let roots = block
                .lines()
                .filter(|l| !l.starts_with('#'))
                .filter(|l| l.split('\t').nth(6) == Some("0"))
                .count();
            assert_eq!(roots, 1, "{}", block);
        }
    }
}
