//! Document sets, reference summaries and the JSONL corpus format.
//!
//! One JSONL record describes one cluster:
//!
//! ```text
//! {"set_id": "d30001", "documents": [{"doc_id": 1, "sentences": [
//!     {"text": "...", "pos": ["NN", ...], "ner": ["O", ...], "parse_depth": 4}]}],
//!  "references": ["full text", ["pre-split sentence", "..."]]}
//! ```
//!
//! Sentences are pre-split. `pos`, `ner` and `parse_depth` are optional; when
//! given, `pos`/`ner` must have one entry per token produced by [`tokenize`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stopwords::is_stopword;

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[+-]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?$").unwrap());
static ABBREVIATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:\p{L}\.){2,}$").unwrap());

const MAX_PROXY_DEPTH: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pos {
    Noun,
    Verb,
    Adjective,
    Adverb,
    Other,
    Unknown,
}

impl Pos {
    /// Maps Penn Treebank and Universal Dependencies tags onto the coarse classes.
    pub fn from_tag(tag: &str) -> Pos {
        let tag = tag.trim().to_ascii_uppercase();
        match tag.as_str() {
            "NOUN" | "PROPN" => Pos::Noun,
            "VERB" | "AUX" => Pos::Verb,
            "ADJ" => Pos::Adjective,
            "ADV" => Pos::Adverb,
            t if t.starts_with("NN") => Pos::Noun,
            t if t.starts_with("VB") || t == "MD" => Pos::Verb,
            t if t.starts_with("JJ") => Pos::Adjective,
            t if t.starts_with("RB") || t == "WRB" => Pos::Adverb,
            _ => Pos::Other,
        }
    }

    fn canonical_tag(self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::Verb => "VERB",
            Pos::Adjective => "ADJ",
            Pos::Adverb => "ADV",
            Pos::Other | Pos::Unknown => "X",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lower: String,
    pub pos: Pos,
    pub is_named_entity: bool,
    pub is_number: bool,
    pub is_stopword: bool,
}

impl Token {
    pub fn new(surface: &str) -> Token {
        let lower = surface.to_lowercase();
        Token {
            surface: surface.to_string(),
            is_number: is_number(surface),
            is_stopword: is_stopword(&lower),
            lower,
            pos: Pos::Unknown,
            is_named_entity: false,
        }
    }
}

pub fn is_number(s: &str) -> bool {
    NUMBER.is_match(s)
}

fn is_wrapper(c: char) -> bool {
    matches!(
        c,
        '"' | '\''
            | '`'
            | '('
            | ')'
            | '['
            | ']'
            | '{'
            | '}'
            | '<'
            | '>'
            | '\u{201c}'
            | '\u{201d}'
            | '\u{2018}'
            | '\u{2019}'
    )
}

fn is_terminal_punct(c: char) -> bool {
    matches!(c, '.' | ',' | ';' | ':' | '!' | '?')
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '\'' || c == '\u{2019}'
}

/// Splits text into word tokens.
///
/// Whitespace separates chunks; numbers (`1,200`, `-4.5`) and dotted
/// abbreviations (`U.S.`) survive intact, everything else is split at any
/// character other than letters, digits, hyphens and apostrophes.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let stripped = chunk.trim_matches(is_wrapper);
        let numeric = stripped.trim_end_matches(is_terminal_punct).trim_matches(is_wrapper);
        if !numeric.is_empty() && is_number(numeric) {
            out.push(Token::new(numeric));
            continue;
        }
        let abbrev = stripped
            .trim_end_matches(|c: char| is_terminal_punct(c) && c != '.')
            .trim_matches(is_wrapper);
        if ABBREVIATION.is_match(abbrev) {
            out.push(Token::new(abbrev));
            continue;
        }
        for piece in stripped.split(|c: char| !is_word_char(c)) {
            let piece = piece.trim_matches(|c: char| c == '-' || c == '\'' || c == '\u{2019}');
            if !piece.is_empty() {
                out.push(Token::new(piece));
            }
        }
    }
    out
}

/// Splits free text into sentences at `.`, `!` or `?` followed by whitespace,
/// and at line breaks. Dotted abbreviations do not end a sentence.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    for line in text.lines() {
        let mut current: Vec<&str> = Vec::new();
        for word in line.split_whitespace() {
            current.push(word);
            let core = word.trim_end_matches(is_wrapper);
            let ends = core.ends_with(['.', '!', '?']);
            if ends && !ABBREVIATION.is_match(core) {
                sentences.push(current.join(" "));
                current.clear();
            }
        }
        if !current.is_empty() {
            sentences.push(current.join(" "));
        }
    }
    sentences
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    /// Index into [`DocumentSet::sentences`].
    pub id: usize,
    pub doc_index: usize,
    pub doc_id: u64,
    /// 1-based position inside its document.
    pub position: usize,
    pub text: String,
    pub tokens: Vec<Token>,
    pub word_length: usize,
    /// Character count of the sentence text.
    pub byte_length: usize,
    pub subsentence_count: usize,
    pub parse_depth: u32,
}

impl Sentence {
    pub fn lowers(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.lower.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: u64,
    pub first_sentence: usize,
    pub sentence_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordStats {
    pub word: String,
    pub tf: usize,
    pub df: usize,
    pub containing_sentences: Vec<usize>,
}

/// A topic cluster: documents, flattened sentences and set-level statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentSet {
    pub set_id: String,
    pub documents: Vec<Document>,
    pub sentences: Vec<Sentence>,
    /// Non-stopword types sorted by word; the index is the word's ILP column.
    pub vocabulary: Vec<WordStats>,
    word_index: HashMap<String, usize>,
    /// Counts of every case-folded token, stopwords included.
    token_counts: BTreeMap<String, usize>,
    lead_words: HashSet<String>,
}

impl DocumentSet {
    pub fn new(set_id: impl Into<String>, documents: Vec<Document>, sentences: Vec<Sentence>) -> Self {
        compute_stats(DocumentSet {
            set_id: set_id.into(),
            documents,
            sentences,
            vocabulary: Vec::new(),
            word_index: HashMap::new(),
            token_counts: BTreeMap::new(),
            lead_words: HashSet::new(),
        })
    }

    pub fn word(&self, word: &str) -> Option<&WordStats> {
        self.word_index.get(word).map(|&i| &self.vocabulary[i])
    }

    pub fn word_id(&self, word: &str) -> Option<usize> {
        self.word_index.get(word).copied()
    }

    pub fn token_counts(&self) -> &BTreeMap<String, usize> {
        &self.token_counts
    }

    pub fn is_lead_word(&self, word: &str) -> bool {
        self.lead_words.contains(word)
    }

    pub fn document_count(&self) -> usize {
        self.documents.len()
    }

    /// `1 - (position - 1) / (count - 1)`, or 1 for single-sentence documents.
    pub fn position_weight(&self, sentence_id: usize) -> f64 {
        let s = &self.sentences[sentence_id];
        position_weight(s.position, self.documents[s.doc_index].sentence_count)
    }

    /// Total token count (stopwords included).
    pub fn token_total(&self) -> usize {
        self.token_counts.values().sum()
    }

    pub fn to_record(&self, references: Option<&ReferenceSet>) -> CorpusRecord {
        let documents = self
            .documents
            .iter()
            .map(|d| DocumentRecord {
                doc_id: d.doc_id,
                sentences: self.sentences[d.first_sentence..d.first_sentence + d.sentence_count]
                    .iter()
                    .map(|s| {
                        let annotated = s.tokens.iter().any(|t| t.pos != Pos::Unknown);
                        let has_ne = s.tokens.iter().any(|t| t.is_named_entity);
                        SentenceRecord {
                            text: s.text.clone(),
                            pos: annotated
                                .then(|| s.tokens.iter().map(|t| t.pos.canonical_tag().to_string()).collect()),
                            ner: has_ne.then(|| {
                                s.tokens
                                    .iter()
                                    .map(|t| if t.is_named_entity { "ENT" } else { "O" }.to_string())
                                    .collect()
                            }),
                            parse_depth: Some(s.parse_depth),
                        }
                    })
                    .collect(),
            })
            .collect();
        CorpusRecord {
            set_id: self.set_id.clone(),
            documents,
            references: references.map(|r| {
                r.sentence_texts
                    .iter()
                    .map(|sents| ReferenceText::Sentences(sents.clone()))
                    .collect()
            }),
        }
    }
}

pub fn position_weight(position: usize, sentence_count: usize) -> f64 {
    if sentence_count <= 1 {
        1.0
    } else {
        1.0 - (position as f64 - 1.0) / (sentence_count as f64 - 1.0)
    }
}

/// Populates vocabulary, token counts and lead-word set from the sentences.
pub fn compute_stats(mut ds: DocumentSet) -> DocumentSet {
    let mut stats: BTreeMap<String, (usize, HashSet<usize>, Vec<usize>)> = BTreeMap::new();
    let mut token_counts = BTreeMap::new();
    let mut lead_words = HashSet::new();
    for s in &ds.sentences {
        for t in &s.tokens {
            *token_counts.entry(t.lower.clone()).or_insert(0) += 1;
            if s.position == 1 {
                lead_words.insert(t.lower.clone());
            }
            if t.is_stopword {
                continue;
            }
            let entry = stats.entry(t.lower.clone()).or_default();
            entry.0 += 1;
            entry.1.insert(s.doc_index);
            if entry.2.last() != Some(&s.id) {
                entry.2.push(s.id);
            }
        }
    }
    ds.vocabulary = stats
        .into_iter()
        .map(|(word, (tf, docs, sents))| WordStats {
            word,
            tf,
            df: docs.len(),
            containing_sentences: sents,
        })
        .collect();
    ds.word_index = ds
        .vocabulary
        .iter()
        .enumerate()
        .map(|(i, w)| (w.word.clone(), i))
        .collect();
    ds.token_counts = token_counts;
    ds.lead_words = lead_words;
    ds
}

/// Human reference summaries for one cluster, case-folded and sentence-split.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    pub set_id: String,
    /// reference -> sentence -> lower tokens
    pub references: Vec<Vec<Vec<String>>>,
    sentence_texts: Vec<Vec<String>>,
}

impl ReferenceSet {
    pub fn from_texts(set_id: impl Into<String>, texts: &[ReferenceText]) -> Self {
        let sentence_texts: Vec<Vec<String>> = texts
            .iter()
            .map(|t| match t {
                ReferenceText::Text(s) => split_sentences(s),
                ReferenceText::Sentences(v) => v.clone(),
            })
            .collect();
        let references = sentence_texts
            .iter()
            .map(|sents| {
                sents
                    .iter()
                    .map(|s| tokenize(s).into_iter().map(|t| t.lower).collect::<Vec<_>>())
                    .filter(|toks: &Vec<String>| !toks.is_empty())
                    .collect()
            })
            .collect();
        ReferenceSet {
            set_id: set_id.into(),
            references,
            sentence_texts,
        }
    }

    /// Builds a reference set directly from token lists (one entry per reference).
    pub fn from_tokens(set_id: impl Into<String>, references: Vec<Vec<Vec<String>>>) -> Self {
        let sentence_texts = references
            .iter()
            .map(|r| r.iter().map(|s| s.join(" ")).collect())
            .collect();
        ReferenceSet {
            set_id: set_id.into(),
            references,
            sentence_texts,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.references.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReferenceText {
    Text(String),
    Sentences(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub set_id: String,
    pub documents: Vec<DocumentRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub references: Option<Vec<ReferenceText>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: u64,
    pub sentences: Vec<SentenceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ner: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_depth: Option<u32>,
}

/// One parsed cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub docs: DocumentSet,
    pub references: Option<ReferenceSet>,
}

fn subsentence_proxy(text: &str) -> usize {
    1 + text
        .chars()
        .filter(|c| matches!(c, ',' | ';' | ':' | '\u{2014}'))
        .count()
}

impl CorpusRecord {
    pub fn into_cluster(self) -> Result<Cluster> {
        let set_id = self.set_id;
        if self.documents.is_empty() {
            return Err(Error::EmptyCluster(set_id, "no documents".into()));
        }
        let mut documents = Vec::with_capacity(self.documents.len());
        let mut sentences = Vec::new();
        for (doc_index, doc) in self.documents.into_iter().enumerate() {
            if doc.sentences.is_empty() {
                return Err(Error::EmptyCluster(
                    set_id,
                    format!("document {} has no sentences", doc.doc_id),
                ));
            }
            let first_sentence = sentences.len();
            let sentence_count = doc.sentences.len();
            for (k, rec) in doc.sentences.into_iter().enumerate() {
                let mut tokens = tokenize(&rec.text);
                if tokens.is_empty() {
                    return Err(Error::EmptyCluster(
                        set_id,
                        format!("document {} sentence {} has no tokens", doc.doc_id, k + 1),
                    ));
                }
                let where_ = || format!("cluster {} document {} sentence {}", set_id, doc.doc_id, k + 1);
                if let Some(tags) = &rec.pos {
                    if tags.len() != tokens.len() {
                        return Err(Error::data(format!(
                            "{}: {} pos tags for {} tokens",
                            where_(),
                            tags.len(),
                            tokens.len()
                        )));
                    }
                    for (t, tag) in tokens.iter_mut().zip(tags) {
                        t.pos = Pos::from_tag(tag);
                    }
                }
                if let Some(tags) = &rec.ner {
                    if tags.len() != tokens.len() {
                        return Err(Error::data(format!(
                            "{}: {} ner tags for {} tokens",
                            where_(),
                            tags.len(),
                            tokens.len()
                        )));
                    }
                    for (t, tag) in tokens.iter_mut().zip(tags) {
                        let tag = tag.trim();
                        t.is_named_entity = !tag.is_empty() && !tag.eq_ignore_ascii_case("o");
                    }
                }
                let word_length = tokens.len();
                let subsentence_count = subsentence_proxy(&rec.text).min(word_length);
                let parse_depth = match rec.parse_depth {
                    Some(0) => return Err(Error::data(format!("{}: parse_depth must be >= 1", where_()))),
                    Some(d) => d,
                    None => (subsentence_count as u32 + 2).min(MAX_PROXY_DEPTH),
                };
                sentences.push(Sentence {
                    id: sentences.len(),
                    doc_index,
                    doc_id: doc.doc_id,
                    position: k + 1,
                    byte_length: rec.text.trim().chars().count(),
                    text: rec.text,
                    tokens,
                    word_length,
                    subsentence_count,
                    parse_depth,
                });
            }
            documents.push(Document {
                doc_id: doc.doc_id,
                first_sentence,
                sentence_count,
            });
        }
        let references = match self.references {
            Some(texts) => {
                let refs = ReferenceSet::from_texts(set_id.clone(), &texts);
                if refs.is_empty() || refs.references.iter().any(|r| r.is_empty()) {
                    return Err(Error::data(format!("cluster {set_id}: empty reference summary")));
                }
                Some(refs)
            }
            None => None,
        };
        Ok(Cluster {
            docs: DocumentSet::new(set_id, documents, sentences),
            references,
        })
    }
}

/// Parses JSONL corpus text; `source` names the input in error messages.
pub fn parse_corpus_str(text: &str, source: &str) -> Result<Vec<Cluster>> {
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(record.set_id.clone()) {
            return Err(Error::Parse {
                path: source.to_string(),
                line: i + 1,
                message: format!("duplicate set_id `{}`", record.set_id),
            });
        }
        clusters.push(record.into_cluster()?);
    }
    Ok(clusters)
}

pub fn parse_corpus(path: impl AsRef<Path>) -> Result<Vec<Cluster>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus_str(&text, &path.display().to_string())
}

pub fn write_corpus(path: impl AsRef<Path>, clusters: &[Cluster]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for c in clusters {
        serde_json::to_writer(&mut out, &c.docs.to_record(c.references.as_ref()))?;
        out.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lowers(text: &str) -> Vec<String> {
        tokenize(text).into_iter().map(|t| t.lower).collect()
    }

    #[test]
    fn tokenize_rules() {
        let toks = tokenize("The U.S. won 3 games.");
        assert_eq!(
            toks.iter().map(|t| t.lower.as_str()).collect::<Vec<_>>(),
            ["the", "u.s.", "won", "3", "games"]
        );
        assert!(toks[3].is_number);
        assert!(toks[0].is_stopword);
        assert!(!toks[2].is_stopword);
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \t ").is_empty());
        assert_eq!(lowers("state-of-the-art"), ["state-of-the-art"]);
        assert_eq!(lowers("(1,200), -4.5; don't"), ["1,200", "-4.5", "don't"]);
        assert_eq!(lowers("\"Hello,world\" -- ok"), ["hello", "world", "ok"]);
    }

    #[test]
    fn numeric_pattern() {
        for s in ["3", "1,200", "-4.5", "+7", "12,345,678.25"] {
            assert!(is_number(s), "{s}");
        }
        for s in ["1,20", "4.", "a1", "1.2.3", ""] {
            assert!(!is_number(s), "{s}");
        }
    }

    #[test]
    fn sentence_splitting() {
        assert_eq!(
            split_sentences("The U.S. agreed. Talks resume! Next?\nNew line"),
            ["The U.S. agreed.", "Talks resume!", "Next?", "New line"]
        );
    }

    fn record(docs: &[&[&str]]) -> CorpusRecord {
        CorpusRecord {
            set_id: "s".into(),
            documents: docs
                .iter()
                .enumerate()
                .map(|(i, sents)| DocumentRecord {
                    doc_id: i as u64,
                    sentences: sents
                        .iter()
                        .map(|t| SentenceRecord {
                            text: t.to_string(),
                            pos: None,
                            ner: None,
                            parse_depth: None,
                        })
                        .collect(),
                })
                .collect(),
            references: None,
        }
    }

    #[test]
    fn stats_counting() {
        let c = record(&[
            &["Quake hits city.", "Quake kills."],
            &["Rescue teams arrive."],
            &["Quake aftershock."],
            &["The end."],
        ])
        .into_cluster()
        .unwrap();
        let ds = &c.docs;
        let quake = ds.word("quake").unwrap();
        assert_eq!((quake.tf, quake.df), (3, 2));
        assert_eq!(quake.containing_sentences, [0, 1, 3]);
        let rescue = ds.word("rescue").unwrap();
        assert_eq!((rescue.tf, rescue.df, rescue.containing_sentences.len()), (1, 1, 1));
        assert!(ds.word("the").is_none());
        let content_tokens = ds
            .sentences
            .iter()
            .flat_map(|s| &s.tokens)
            .filter(|t| !t.is_stopword)
            .count();
        assert_eq!(ds.vocabulary.iter().map(|w| w.tf).sum::<usize>(), content_tokens);
        let ids: Vec<_> = ds.sentences.iter().map(|s| (s.doc_index, s.position)).collect();
        assert_eq!(ids, [(0, 1), (0, 2), (1, 1), (2, 1), (3, 1)]);
    }

    #[test]
    fn proxies() {
        let c = record(&[&["Well, first; second: third, and more words here"]])
            .into_cluster()
            .unwrap();
        let s = &c.docs.sentences[0];
        assert_eq!(s.subsentence_count, 5);
        assert_eq!(s.parse_depth, 7);
        let c = record(&[&["a, b, c, d, e, f, g, h, i, j"]]).into_cluster().unwrap();
        let s = &c.docs.sentences[0];
        assert_eq!(s.subsentence_count, 10);
        assert_eq!(s.parse_depth, 10);
    }

    #[test]
    fn empty_document_rejected() {
        let err = record(&[&["ok"], &[]]).into_cluster().unwrap_err();
        assert!(matches!(err, Error::EmptyCluster(ref id, _) if id == "s"), "{err}");
    }

    #[test]
    fn annotations_applied() {
        let line = r#"{"set_id":"a","documents":[{"doc_id":1,"sentences":[{"text":"dogs run","pos":["NN","VB"],"ner":["B-ORG","O"]}]}]}"#;
        let c = parse_corpus_str(line, "mem").unwrap();
        let toks = &c[0].docs.sentences[0].tokens;
        assert_eq!(toks[0].pos, Pos::Noun);
        assert_eq!(toks[1].pos, Pos::Verb);
        assert!(toks[0].is_named_entity && !toks[1].is_named_entity);
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = "{\"set_id\":\"a\",\"documents\":[{\"doc_id\":1,\"sentences\":[{\"text\":\"x\"}]}]}\n{oops";
        match parse_corpus_str(text, "mem") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn position_weights() {
        assert_eq!(position_weight(1, 1), 1.0);
        assert_eq!(position_weight(1, 5), 1.0);
        assert_eq!(position_weight(5, 5), 0.0);
        assert_eq!(position_weight(3, 5), 0.5);
    }
}
