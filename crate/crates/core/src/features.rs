//! Candidate-summary features for reranking.
//!
//! Each candidate maps to 23 values in three fixed blocks: word level (11),
//! sentence level (6) and summary level (6). Raw values are scaled to `[0, 1]`
//! by a [`MinMaxScaler`] fitted on the training pool.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{split_sentences, tokenize, DocumentSet, Pos, Token};
use crate::error::{Error, Result};
use crate::ilp::{CandidateSource, CandidateSummary};
use crate::par::{self, Execution};
use crate::scaling::MinMaxScaler;

pub const FEATURE_SCHEMA: &str = "summary-features-v1:23";
pub const WORD_LEVEL_DIM: usize = 11;
pub const SENTENCE_LEVEL_DIM: usize = 6;
pub const SUMMARY_LEVEL_DIM: usize = 6;
pub const FEATURE_DIM: usize = WORD_LEVEL_DIM + SENTENCE_LEVEL_DIM + SUMMARY_LEVEL_DIM;

/// Lidstone smoothing constant of the unigram distributions.
pub const LIDSTONE_ALPHA: f64 = 0.001;

/// Position weight given to external-candidate sentences not found in the set.
pub const UNMATCHED_POSITION_WEIGHT: f64 = 0.5;

/// Indices of the two embedding-based dimensions.
pub const EMBEDDING_DIMS: [usize; 2] = [20, 22];

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "word_tf_sum",
    "word_df_sum",
    "word_noun_ratio",
    "word_verb_ratio",
    "word_adverb_ratio",
    "word_adjective_ratio",
    "word_ne_ratio",
    "word_stopword_ratio",
    "word_number_ratio",
    "word_unique_ratio",
    "word_lead_ratio",
    "sent_min_length",
    "sent_max_length",
    "sent_mean_length",
    "sent_mean_position",
    "sent_max_position",
    "sent_count",
    "sumdoc_tfidf_cosine",
    "sumdoc_js",
    "sumdoc_overlap",
    "sumdoc_embedding_cosine",
    "sumsum_overlap",
    "sumsum_embedding_cosine",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFeatures {
    pub word_level: Vec<f64>,
    pub sentence_level: Vec<f64>,
    pub summary_level: Vec<f64>,
    pub schema_id: String,
}

impl SummaryFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURE_DIM);
        v.extend_from_slice(&self.word_level);
        v.extend_from_slice(&self.sentence_level);
        v.extend_from_slice(&self.summary_level);
        v
    }

    pub fn from_vec(v: &[f64]) -> Result<SummaryFeatures> {
        if v.len() != FEATURE_DIM {
            return Err(Error::DimensionMismatch {
                expected: FEATURE_DIM,
                got: v.len(),
            });
        }
        let (w, rest) = v.split_at(WORD_LEVEL_DIM);
        let (s, m) = rest.split_at(SENTENCE_LEVEL_DIM);
        Ok(SummaryFeatures {
            word_level: w.to_vec(),
            sentence_level: s.to_vec(),
            summary_level: m.to_vec(),
            schema_id: FEATURE_SCHEMA.to_string(),
        })
    }
}

/// Word vectors keyed by lowercase word.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn load(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// One word per line followed by its whitespace-separated components.
    pub fn parse(text: &str, source: &str) -> Result<EmbeddingTable> {
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let err = |message: String| Error::Parse {
                path: source.to_string(),
                line: i + 1,
                message,
            };
            let v = parts
                .map(|p| p.parse::<f64>().map_err(|e| err(format!("bad component `{p}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                return Err(err(format!("word `{word}` has no finite vector")));
            }
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(err(format!("word `{word}` has {} components, expected {d}", v.len())));
                }
                _ => {}
            }
            vectors.entry(word.to_lowercase()).or_insert(v);
        }
        let dim = dim.ok_or_else(|| Error::Parse {
            path: source.to_string(),
            line: 0,
            message: "embedding file has no vectors".into(),
        })?;
        Ok(EmbeddingTable { dim, vectors })
    }

    /// Mean vector over in-vocabulary words, `None` if there are none.
    pub fn mean<'a>(&self, words: impl IntoIterator<Item = (&'a str, f64)>) -> Option<Vec<f64>> {
        let mut sum = vec![0.0; self.dim];
        let mut n = 0.0;
        for (w, weight) in words {
            if let Some(v) = self.vectors.get(w) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += weight * x;
                }
                n += weight;
            }
        }
        (n > 0.0).then(|| sum.into_iter().map(|s| s / n).collect())
    }
}

/// Cosine of two vectors mapped onto `[0, 1]` as `(cos + 1) / 2`; 0 when
/// either side is missing or has zero norm.
pub fn embedding_similarity(a: Option<&[f64]>, b: Option<&[f64]>) -> f64 {
    let (Some(a), Some(b)) = (a, b) else {
        return 0.0;
    };
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    let cos = (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0);
    (cos + 1.0) / 2.0
}

/// Unigram counts of a token stream.
pub fn counts<'a>(tokens: impl IntoIterator<Item = &'a str>) -> BTreeMap<&'a str, f64> {
    let mut m = BTreeMap::new();
    for t in tokens {
        *m.entry(t).or_insert(0.0) += 1.0;
    }
    m
}

/// Lidstone-smoothed distributions of `p` and `q` over their union vocabulary,
/// aligned by word.
fn smoothed(p: &BTreeMap<&str, f64>, q: &BTreeMap<&str, f64>) -> (Vec<f64>, Vec<f64>) {
    let union: BTreeSet<&str> = p.keys().chain(q.keys()).copied().collect();
    let v = union.len() as f64;
    let np: f64 = p.values().sum();
    let nq: f64 = q.values().sum();
    let dp = np + LIDSTONE_ALPHA * v;
    let dq = nq + LIDSTONE_ALPHA * v;
    union
        .iter()
        .map(|w| {
            (
                (p.get(w).copied().unwrap_or(0.0) + LIDSTONE_ALPHA) / dp,
                (q.get(w).copied().unwrap_or(0.0) + LIDSTONE_ALPHA) / dq,
            )
        })
        .unzip()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| if a == b { 0.0 } else { a * (a / b).ln() })
        .sum()
}

/// Jensen-Shannon divergence (natural log), in `[0, ln 2]`. Zero for empty input.
pub fn js_divergence(p: &BTreeMap<&str, f64>, q: &BTreeMap<&str, f64>) -> f64 {
    if p.is_empty() && q.is_empty() {
        return 0.0;
    }
    let (a, b) = smoothed(p, q);
    let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
    (0.5 * kl(&a, &m) + 0.5 * kl(&b, &m)).clamp(0.0, std::f64::consts::LN_2)
}

/// `KL(p || q)` with the same smoothing as [`js_divergence`].
pub fn kl_divergence(p: &BTreeMap<&str, f64>, q: &BTreeMap<&str, f64>) -> f64 {
    if p.is_empty() && q.is_empty() {
        return 0.0;
    }
    let (a, b) = smoothed(p, q);
    kl(&a, &b).max(0.0)
}

/// `|A ∩ B| / |A ∪ B|`; 0 when both are empty.
pub fn jaccard(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

pub fn sparse_cosine(a: &BTreeMap<&str, f64>, b: &BTreeMap<&str, f64>) -> f64 {
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(k, x)| b.get(k).map(|y| x * y)).sum();
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// A candidate resolved against its document set.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryView {
    pub sentences: Vec<ViewSentence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewSentence {
    pub tokens: Vec<Token>,
    pub position_weight: f64,
}

impl SummaryView {
    pub fn resolve(c: &CandidateSummary, ds: &DocumentSet) -> Result<SummaryView> {
        if c.set_id != ds.set_id {
            return Err(Error::data(format!(
                "candidate for set `{}` resolved against set `{}`",
                c.set_id, ds.set_id
            )));
        }
        let sentences = match c.source {
            CandidateSource::Ilp => c
                .sentence_ids
                .iter()
                .map(|&sid| {
                    let s = ds
                        .sentences
                        .get(sid)
                        .ok_or_else(|| Error::data(format!("set `{}` has no sentence {sid}", ds.set_id)))?;
                    Ok(ViewSentence {
                        tokens: s.tokens.clone(),
                        position_weight: ds.position_weight(sid),
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            CandidateSource::External => {
                let mut index: HashMap<Vec<&str>, usize> = HashMap::new();
                for s in &ds.sentences {
                    index
                        .entry(s.tokens.iter().map(|t| t.lower.as_str()).collect())
                        .or_insert(s.id);
                }
                split_sentences(&c.text)
                    .iter()
                    .map(|text| tokenize(text))
                    .filter(|tokens| !tokens.is_empty())
                    .map(|tokens| {
                        let key: Vec<&str> = tokens.iter().map(|t| t.lower.as_str()).collect();
                        match index.get(&key) {
                            Some(&sid) => ViewSentence {
                                tokens: ds.sentences[sid].tokens.clone(),
                                position_weight: ds.position_weight(sid),
                            },
                            None => ViewSentence {
                                tokens,
                                position_weight: UNMATCHED_POSITION_WEIGHT,
                            },
                        }
                    })
                    .collect()
            }
        };
        let view = SummaryView { sentences };
        if view.token_count() == 0 {
            return Err(Error::data(format!(
                "empty summary `{}` for set `{}`",
                c.model_key(),
                c.set_id
            )));
        }
        Ok(view)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }

    fn content_types(&self) -> BTreeSet<&str> {
        self.tokens()
            .filter(|t| !t.is_stopword)
            .map(|t| t.lower.as_str())
            .collect()
    }
}

pub fn word_level(view: &SummaryView, ds: &DocumentSet) -> Vec<f64> {
    let n = view.token_count().max(1) as f64;
    let mut tf = 0usize;
    let mut df = 0usize;
    let mut pos = [0usize; 4];
    let (mut ne, mut stop, mut num, mut lead) = (0usize, 0usize, 0usize, 0usize);
    let mut types = BTreeSet::new();
    for t in view.tokens() {
        if let Some(w) = ds.word(&t.lower) {
            tf += w.tf;
            df += w.df;
        }
        match t.pos {
            Pos::Noun => pos[0] += 1,
            Pos::Verb => pos[1] += 1,
            Pos::Adverb => pos[2] += 1,
            Pos::Adjective => pos[3] += 1,
            Pos::Other | Pos::Unknown => {}
        }
        ne += usize::from(t.is_named_entity);
        stop += usize::from(t.is_stopword);
        num += usize::from(t.is_number);
        lead += usize::from(ds.is_lead_word(&t.lower));
        types.insert(t.lower.as_str());
    }
    vec![
        tf as f64,
        df as f64,
        pos[0] as f64 / n,
        pos[1] as f64 / n,
        pos[2] as f64 / n,
        pos[3] as f64 / n,
        ne as f64 / n,
        stop as f64 / n,
        num as f64 / n,
        types.len() as f64 / n,
        lead as f64 / n,
    ]
}

pub fn sentence_level(view: &SummaryView) -> Vec<f64> {
    let k = view.sentences.len();
    if k == 0 {
        return vec![0.0; SENTENCE_LEVEL_DIM];
    }
    let lengths: Vec<f64> = view.sentences.iter().map(|s| s.tokens.len() as f64).collect();
    let weights: Vec<f64> = view.sentences.iter().map(|s| s.position_weight).collect();
    let kf = k as f64;
    vec![
        lengths.iter().copied().fold(f64::INFINITY, f64::min),
        lengths.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        lengths.iter().sum::<f64>() / kf,
        weights.iter().sum::<f64>() / kf,
        weights.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        kf,
    ]
}

/// Document-side quantities shared by every candidate of a set.
#[derive(Debug, Clone)]
pub struct SetContext<'a> {
    ds: &'a DocumentSet,
    idf: BTreeMap<&'a str, f64>,
    unknown_idf: f64,
    doc_tfidf: BTreeMap<&'a str, f64>,
    doc_counts: BTreeMap<&'a str, f64>,
    doc_types: BTreeSet<&'a str>,
    doc_embedding: Option<Vec<f64>>,
    embeddings: Option<&'a EmbeddingTable>,
}

impl<'a> SetContext<'a> {
    pub fn new(ds: &'a DocumentSet, embeddings: Option<&'a EmbeddingTable>) -> SetContext<'a> {
        let n = ds.document_count() as f64;
        let idf_of = |df: usize| ((n + 1.0) / (df as f64 + 1.0)).ln() + 1.0;
        let idf: BTreeMap<&str, f64> = ds.vocabulary.iter().map(|w| (w.word.as_str(), idf_of(w.df))).collect();
        let doc_tfidf = ds
            .vocabulary
            .iter()
            .map(|w| (w.word.as_str(), w.tf as f64 * idf[w.word.as_str()]))
            .collect();
        let doc_counts: BTreeMap<&str, f64> = ds.token_counts().iter().map(|(w, &c)| (w.as_str(), c as f64)).collect();
        let doc_embedding = embeddings.and_then(|e| e.mean(doc_counts.iter().map(|(w, c)| (*w, *c))));
        SetContext {
            ds,
            idf,
            unknown_idf: idf_of(0),
            doc_tfidf,
            doc_counts,
            doc_types: ds.vocabulary.iter().map(|w| w.word.as_str()).collect(),
            doc_embedding,
            embeddings,
        }
    }

    pub fn document_set(&self) -> &'a DocumentSet {
        self.ds
    }

    pub fn js_to_documents(&self, view: &SummaryView) -> f64 {
        js_divergence(&counts(view.tokens().map(|t| t.lower.as_str())), &self.doc_counts)
    }

    /// `KL(summary || documents)`, or the reverse when `reverse` is set.
    pub fn kl_to_documents(&self, view: &SummaryView, reverse: bool) -> f64 {
        let summary = counts(view.tokens().map(|t| t.lower.as_str()));
        if reverse {
            kl_divergence(&self.doc_counts, &summary)
        } else {
            kl_divergence(&summary, &self.doc_counts)
        }
    }

    fn embedding(&self, view: &SummaryView) -> Option<Vec<f64>> {
        self.embeddings?.mean(view.tokens().map(|t| (t.lower.as_str(), 1.0)))
    }
}

/// Summary-level block. `others` holds the content-type sets and embedding
/// means of the other pool members.
fn summary_level_with(
    view: &SummaryView,
    ctx: &SetContext<'_>,
    own_types: &BTreeSet<&str>,
    own_embedding: Option<&[f64]>,
    others: &[(&BTreeSet<&str>, Option<&[f64]>)],
) -> Vec<f64> {
    let mut tfidf = BTreeMap::new();
    for t in view.tokens().filter(|t| !t.is_stopword) {
        let idf = ctx.idf.get(t.lower.as_str()).copied().unwrap_or(ctx.unknown_idf);
        *tfidf.entry(t.lower.as_str()).or_insert(0.0) += idf;
    }
    let (sum_overlap, sum_embed) = if others.is_empty() {
        (0.0, 0.0)
    } else {
        let k = others.len() as f64;
        (
            others.iter().map(|(t, _)| jaccard(own_types, t)).sum::<f64>() / k,
            others
                .iter()
                .map(|(_, e)| embedding_similarity(own_embedding, *e))
                .sum::<f64>()
                / k,
        )
    };
    vec![
        sparse_cosine(&tfidf, &ctx.doc_tfidf),
        ctx.js_to_documents(view),
        jaccard(own_types, &ctx.doc_types),
        embedding_similarity(own_embedding, ctx.doc_embedding.as_deref()),
        sum_overlap,
        sum_embed,
    ]
}

/// Summary-level block of `pool[index]` against the rest of the pool.
pub fn summary_level(pool: &[SummaryView], index: usize, ctx: &SetContext<'_>) -> Vec<f64> {
    let types: Vec<BTreeSet<&str>> = pool.iter().map(SummaryView::content_types).collect();
    let embeds: Vec<Option<Vec<f64>>> = pool.iter().map(|v| ctx.embedding(v)).collect();
    let others: Vec<_> = (0..pool.len())
        .filter(|&j| j != index)
        .map(|j| (&types[j], embeds[j].as_deref()))
        .collect();
    summary_level_with(&pool[index], ctx, &types[index], embeds[index].as_deref(), &others)
}

/// Raw (unscaled) features for every candidate of one set's pool, in pool order.
pub fn extract_pool(pool: &[CandidateSummary], ctx: &SetContext<'_>, exec: Execution) -> Result<Vec<SummaryFeatures>> {
    let ds = ctx.document_set();
    let views = par::map(exec, pool, |c| SummaryView::resolve(c, ds))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let types: Vec<BTreeSet<&str>> = views.iter().map(SummaryView::content_types).collect();
    let embeds: Vec<Option<Vec<f64>>> = par::map(exec, &views, |v| ctx.embedding(v));
    Ok(par::map_indexed(exec, views.len(), |i| {
        let others: Vec<_> = (0..views.len())
            .filter(|&j| j != i)
            .map(|j| (&types[j], embeds[j].as_deref()))
            .collect();
        SummaryFeatures {
            word_level: word_level(&views[i], ds),
            sentence_level: sentence_level(&views[i]),
            summary_level: summary_level_with(&views[i], ctx, &types[i], embeds[i].as_deref(), &others),
            schema_id: FEATURE_SCHEMA.to_string(),
        }
    }))
}

/// Fits the `[0, 1]` scaler on raw training features.
pub fn fit_scaler(features: &[SummaryFeatures]) -> Result<MinMaxScaler> {
    let rows: Vec<Vec<f64>> = features.iter().map(SummaryFeatures::to_vec).collect();
    MinMaxScaler::fit(rows.iter().map(Vec::as_slice))
}

pub fn apply_scaler(scaler: &MinMaxScaler, f: &SummaryFeatures) -> Result<SummaryFeatures> {
    check_schema(f)?;
    SummaryFeatures::from_vec(&scaler.transform(&f.to_vec())?)
}

pub fn check_schema(f: &SummaryFeatures) -> Result<()> {
    if f.schema_id != FEATURE_SCHEMA {
        return Err(Error::data(format!(
            "feature schema `{}` does not match `{FEATURE_SCHEMA}`",
            f.schema_id
        )));
    }
    let got = f.word_level.len() + f.sentence_level.len() + f.summary_level.len();
    if f.word_level.len() != WORD_LEVEL_DIM
        || f.sentence_level.len() != SENTENCE_LEVEL_DIM
        || f.summary_level.len() != SUMMARY_LEVEL_DIM
    {
        return Err(Error::DimensionMismatch {
            expected: FEATURE_DIM,
            got,
        });
    }
    Ok(())
}

/// One row of a feature dump.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub set_id: String,
    pub model_key: String,
    pub features: Vec<f64>,
}

/// Writes rows as CSV with a `set_id,model_key,<feature names>` header.
pub fn write_feature_csv<W: Write>(out: W, rows: &[FeatureRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["set_id", "model_key"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.set_id.clone(), r.model_key.clone()];
        rec.extend(r.features.iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<feature csv>", e))?;
    Ok(())
}
