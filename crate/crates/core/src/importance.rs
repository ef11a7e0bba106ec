//! Word and sentence importance regression.
//!
//! Linear epsilon-insensitive SVR trained by seeded stochastic subgradient
//! descent. The fitted models produce the nonnegative word and sentence scores
//! used by the extraction ILP.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentSet, Pos, ReferenceSet, Sentence, WordStats};
use crate::error::{Error, Result};
use crate::scaling::{check_finite, scale_one, MinMaxScaler};

/// Word feature schema. Dimensions 9-15 (position, coverage, sentence length,
/// lead and character-length features) complete the partially listed set.
pub const WORD_SCHEMA: &str = "word-importance-v1:15";
pub const WORD_DIM: usize = 15;
pub const SENTENCE_SCHEMA: &str = "sentence-importance-v1:13";
pub const SENTENCE_DIM: usize = 13;

pub const WORD_FEATURE_NAMES: [&str; WORD_DIM] = [
    "tf",
    "df",
    "noun",
    "verb",
    "adjective",
    "adverb",
    "named_entity",
    "number",
    "max_position_weight",
    "min_position_weight",
    "mean_position_weight",
    "sentence_coverage",
    "mean_containing_length",
    "in_lead_sentence",
    "char_length",
];

pub const SENTENCE_FEATURE_NAMES: [&str; SENTENCE_DIM] = [
    "position_weight",
    "word_length",
    "subsentences",
    "parse_depth",
    "stopword_ratio",
    "mean_tf",
    "mean_df",
    "noun_ratio",
    "verb_ratio",
    "adjective_ratio",
    "adverb_ratio",
    "named_entity_ratio",
    "number_ratio",
];

/// Linear model over min-max scaled features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub schema_id: String,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub scaler_min: Vec<f64>,
    pub scaler_max: Vec<f64>,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.weights.len();
        for got in [self.scaler_min.len(), self.scaler_max.len()] {
            if got != d {
                return Err(Error::DimensionMismatch { expected: d, got });
            }
        }
        if self.scaler_min.iter().zip(&self.scaler_max).any(|(lo, hi)| lo > hi) {
            return Err(Error::data(format!(
                "model {}: scaler_min > scaler_max",
                self.schema_id
            )));
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("model weights"));
        }
        Ok(())
    }

    pub fn scale(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .enumerate()
            .map(|(k, &v)| scale_one(v, self.scaler_min[k], self.scaler_max[k]))
            .collect())
    }

    fn raw_score(&self, scaled: &[f64]) -> f64 {
        dot(&self.weights, scaled) + self.bias
    }
}

/// `max(0, w . scale(x) + b)`.
pub fn predict(model: &LinearModel, x: &[f64]) -> Result<f64> {
    let scaled = model.scale(x)?;
    Ok(model.raw_score(&scaled).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionInstance {
    pub features: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 1.0,
            epsilon: 0.1,
            epochs: 50,
            seed: 42,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits `1/2 |w|^2 + c * sum max(0, |w.x + b - y| - epsilon)`.
///
/// Pegasos-style updates with regularization `1 / (n c)` and step
/// `1 / (regularization * t)`; the bias is not regularized. The returned
/// model is the average of the iterates over the second half of training.
pub fn train_svr(data: &[RegressionInstance], params: &SvrParams, schema_id: &str) -> Result<LinearModel> {
    if data.len() < 2 {
        return Err(Error::data("SVR training needs at least 2 instances"));
    }
    if params.c.is_nan() || params.c <= 0.0 || params.epsilon.is_nan() || params.epsilon < 0.0 || params.epochs == 0 {
        return Err(Error::Config(format!("invalid SVR parameters {params:?}")));
    }
    let dim = data[0].features.len();
    for inst in data {
        if inst.features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: inst.features.len(),
            });
        }
        check_finite(&inst.features)?;
        if !inst.target.is_finite() {
            return Err(Error::NonFinite("regression target"));
        }
    }
    let scaler = MinMaxScaler::fit(data.iter().map(|d| d.features.as_slice()))?;
    let xs: Vec<Vec<f64>> = data
        .iter()
        .map(|d| scaler.transform(&d.features))
        .collect::<Result<_>>()?;

    let n = data.len();
    let reg = 1.0 / (n as f64 * params.c);
    let total = params.epochs * n;
    let average_from = total / 2 + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut w_avg = vec![0.0; dim];
    let mut b_avg = 0.0;
    let mut averaged = 0usize;
    let mut t = 0usize;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (reg * t as f64);
            let x = &xs[i];
            let residual = dot(&w, x) + b - data[i].target;
            let shrink = 1.0 - eta * reg;
            w.iter_mut().for_each(|wk| *wk *= shrink);
            if residual.abs() > params.epsilon {
                let g = residual.signum();
                for (wk, xk) in w.iter_mut().zip(x) {
                    *wk -= eta * g * xk;
                }
                b -= eta * g;
            }
            if t >= average_from {
                averaged += 1;
                let k = averaged as f64;
                for (a, wk) in w_avg.iter_mut().zip(&w) {
                    *a += (wk - *a) / k;
                }
                b_avg += (b - b_avg) / k;
            }
        }
    }
    Ok(LinearModel {
        schema_id: schema_id.to_string(),
        weights: w_avg,
        bias: b_avg,
        scaler_min: scaler.min,
        scaler_max: scaler.max,
    })
}

fn pos_index(pos: Pos) -> Option<usize> {
    match pos {
        Pos::Noun => Some(0),
        Pos::Verb => Some(1),
        Pos::Adjective => Some(2),
        Pos::Adverb => Some(3),
        Pos::Other | Pos::Unknown => None,
    }
}

pub fn word_features(w: &WordStats, ds: &DocumentSet) -> Vec<f64> {
    let mut occurrences = 0usize;
    let mut pos_counts = [0usize; 4];
    let mut ne = 0usize;
    let mut weights = Vec::with_capacity(w.containing_sentences.len());
    let mut length_sum = 0usize;
    let mut in_lead = false;
    for &sid in &w.containing_sentences {
        let s = &ds.sentences[sid];
        for t in s.tokens.iter().filter(|t| t.lower == w.word) {
            occurrences += 1;
            if let Some(k) = pos_index(t.pos) {
                pos_counts[k] += 1;
            }
            if t.is_named_entity {
                ne += 1;
            }
        }
        weights.push(ds.position_weight(sid));
        length_sum += s.word_length;
        in_lead |= s.position == 1;
    }
    let majority = |count: usize| if 2 * count > occurrences { 1.0 } else { 0.0 };
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let n = weights.len().max(1) as f64;
    let max_w = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_w = weights.iter().cloned().fold(f64::INFINITY, f64::min);
    vec![
        w.tf as f64,
        w.df as f64,
        majority(pos_counts[0]),
        majority(pos_counts[1]),
        majority(pos_counts[2]),
        majority(pos_counts[3]),
        majority(ne),
        flag(crate::corpus::is_number(&w.word)),
        if weights.is_empty() { 0.0 } else { max_w },
        if weights.is_empty() { 0.0 } else { min_w },
        weights.iter().sum::<f64>() / n,
        w.containing_sentences.len() as f64 / ds.sentences.len().max(1) as f64,
        length_sum as f64 / n,
        flag(in_lead),
        w.word.chars().count() as f64,
    ]
}

pub fn sentence_features(s: &Sentence, ds: &DocumentSet) -> Vec<f64> {
    let n = s.tokens.len().max(1) as f64;
    let mut stop = 0usize;
    let mut pos_counts = [0usize; 4];
    let mut ne = 0usize;
    let mut num = 0usize;
    let mut tf_sum = 0usize;
    let mut df_sum = 0usize;
    let mut content = 0usize;
    for t in &s.tokens {
        if t.is_stopword {
            stop += 1;
        } else {
            content += 1;
            if let Some(ws) = ds.word(&t.lower) {
                tf_sum += ws.tf;
                df_sum += ws.df;
            }
        }
        if let Some(k) = pos_index(t.pos) {
            pos_counts[k] += 1;
        }
        ne += usize::from(t.is_named_entity);
        num += usize::from(t.is_number);
    }
    let mean = |sum: usize| {
        if content == 0 {
            0.0
        } else {
            sum as f64 / content as f64
        }
    };
    vec![
        ds.position_weight(s.id),
        s.word_length as f64,
        s.subsentence_count as f64,
        s.parse_depth as f64,
        stop as f64 / n,
        mean(tf_sum),
        mean(df_sum),
        pos_counts[0] as f64 / n,
        pos_counts[1] as f64 / n,
        pos_counts[2] as f64 / n,
        pos_counts[3] as f64 / n,
        ne as f64 / n,
        num as f64 / n,
    ]
}

/// Occurrences of the word across all reference summaries.
pub fn word_target(w: &WordStats, refs: &ReferenceSet) -> f64 {
    refs.references
        .iter()
        .flatten()
        .flatten()
        .filter(|t| **t == w.word)
        .count() as f64
}

fn content_counts<'a>(tokens: impl IntoIterator<Item = &'a str>) -> BTreeMap<&'a str, f64> {
    let mut m = BTreeMap::new();
    for t in tokens {
        if !crate::stopwords::is_stopword(t) {
            *m.entry(t).or_insert(0.0) += 1.0;
        }
    }
    m
}

pub(crate) fn cosine_counts(a: &BTreeMap<&str, f64>, b: &BTreeMap<&str, f64>) -> f64 {
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let d: f64 = small
        .iter()
        .map(|(k, v)| v * large.get(k).copied().unwrap_or(0.0))
        .sum();
    (d / (na * nb)).clamp(0.0, 1.0)
}

/// Highest cosine similarity (non-stopword unigram counts) to any reference sentence.
pub fn sentence_target(s: &Sentence, refs: &ReferenceSet) -> f64 {
    let own = content_counts(s.tokens.iter().map(|t| t.lower.as_str()));
    refs.references
        .iter()
        .flatten()
        .map(|rs| cosine_counts(&own, &content_counts(rs.iter().map(String::as_str))))
        .fold(0.0, f64::max)
}

pub fn word_instances(ds: &DocumentSet, refs: &ReferenceSet) -> Vec<RegressionInstance> {
    ds.vocabulary
        .iter()
        .map(|w| RegressionInstance {
            features: word_features(w, ds),
            target: word_target(w, refs),
        })
        .collect()
}

pub fn sentence_instances(ds: &DocumentSet, refs: &ReferenceSet) -> Vec<RegressionInstance> {
    ds.sentences
        .iter()
        .map(|s| RegressionInstance {
            features: sentence_features(s, ds),
            target: sentence_target(s, refs),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusRecord, DocumentRecord, SentenceRecord};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn cluster(docs: &[&[&str]]) -> DocumentSet {
        CorpusRecord {
            set_id: "t".into(),
            documents: docs
                .iter()
                .enumerate()
                .map(|(i, s)| DocumentRecord {
                    doc_id: i as u64,
                    sentences: s
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
        .into_cluster()
        .unwrap()
        .docs
    }

    #[test]
    fn word_feature_boundary() {
        let ds = cluster(&[&[
            "Volcano erupts.",
            "Ash falls.",
            "Roads close.",
            "Schools shut.",
            "Crews wait.",
        ]]);
        let f = word_features(ds.word("volcano").unwrap(), &ds);
        assert_eq!(f.len(), WORD_DIM);
        assert_eq!(&f[8..11], [1.0, 1.0, 1.0]);
        assert_eq!(f[11], 0.2);
        assert_eq!(f[13], 1.0);
        assert_eq!(f[14], 7.0);
        // pos unannotated
        assert_eq!(&f[2..6], [0.0; 4]);
    }

    #[test]
    fn word_feature_counts_and_pos() {
        let line = r#"{"set_id":"a","documents":[
            {"doc_id":1,"sentences":[{"text":"storm storm","pos":["NN","NN"]}]},
            {"doc_id":2,"sentences":[{"text":"storm","pos":["NN"]}]}]}"#
            .replace('\n', "");
        let c = crate::corpus::parse_corpus_str(&line, "mem").unwrap();
        let ds = &c[0].docs;
        let f = word_features(ds.word("storm").unwrap(), ds);
        assert_eq!(&f[..6], [3.0, 2.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn sentence_feature_cases() {
        let ds = cluster(&[&["It is what it is.", "Volcano erupts again."]]);
        let f = sentence_features(&ds.sentences[0], &ds);
        assert_eq!(f.len(), SENTENCE_DIM);
        assert_eq!(f[0], 1.0);
        assert_eq!(f[4], 1.0);
        assert_eq!(&f[5..7], [0.0, 0.0]);
        assert_eq!(sentence_features(&ds.sentences[1], &ds)[0], 0.0);

        let line = r#"{"set_id":"a","documents":[{"doc_id":1,"sentences":[{"text":"Obama won 5 states","pos":["X","VBD","CD","NNS"],"ner":["PERSON","O","O","O"]}]}]}"#;
        let c = crate::corpus::parse_corpus_str(line, "mem").unwrap();
        let f = sentence_features(&c[0].docs.sentences[0], &c[0].docs);
        assert_eq!([f[7], f[8], f[11], f[12]], [0.25; 4]);
    }

    #[test]
    fn targets() {
        let ds = cluster(&[&["Alpha beta gamma.", "Zeta eta."]]);
        let refs = ReferenceSet::from_tokens(
            "t",
            vec![
                vec![
                    vec!["alpha".into(), "beta".into(), "delta".into()],
                    vec!["alpha".into()],
                ],
                vec![vec!["alpha".into()]],
            ],
        );
        assert_eq!(word_target(ds.word("alpha").unwrap(), &refs), 3.0);
        assert_eq!(word_target(ds.word("zeta").unwrap(), &refs), 0.0);
        assert_abs_diff_eq!(sentence_target(&ds.sentences[0], &refs), 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(sentence_target(&ds.sentences[1], &refs), 0.0);
        let same = ReferenceSet::from_tokens("t", vec![vec![vec!["zeta".into(), "eta".into()]]]);
        assert_abs_diff_eq!(sentence_target(&ds.sentences[1], &same), 1.0, epsilon = 1e-12);
    }

    fn planted(n: usize, seed: u64) -> Vec<RegressionInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x0: f64 = rng.random();
                let x: Vec<f64> = vec![x0, 5.0, 5.0];
                RegressionInstance {
                    features: x,
                    target: 0.5 + 2.0 * x0,
                }
            })
            .collect()
    }

    #[test]
    fn recovers_single_feature_line() {
        let data = planted(100, 1);
        let params = SvrParams {
            epsilon: 0.0,
            epochs: 200,
            ..Default::default()
        };
        let m = train_svr(&data, &params, "t").unwrap();
        for d in &data {
            let p = predict(&m, &d.features).unwrap();
            assert!((p - d.target).abs() < 1e-2, "{p} vs {}", d.target);
        }
    }

    #[test]
    fn constant_targets() {
        let data: Vec<_> = planted(50, 2)
            .into_iter()
            .map(|d| RegressionInstance { target: 1.5, ..d })
            .collect();
        let params = SvrParams {
            epsilon: 0.0,
            ..Default::default()
        };
        let m = train_svr(&data, &params, "t").unwrap();
        for d in &data {
            assert!((predict(&m, &d.features).unwrap() - 1.5).abs() < 1e-2);
        }
    }

    #[test]
    fn wide_epsilon_keeps_zero_weights() {
        let data: Vec<_> = planted(30, 3)
            .into_iter()
            .map(|d| RegressionInstance {
                target: d.target / 100.0,
                ..d
            })
            .collect();
        let params = SvrParams {
            epsilon: 1.0,
            ..Default::default()
        };
        let m = train_svr(&data, &params, "t").unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let data = planted(40, 4);
        let a = train_svr(&data, &SvrParams::default(), "t").unwrap();
        let b = train_svr(&data, &SvrParams::default(), "t").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predict_clamps_and_checks_dims() {
        let m = LinearModel {
            schema_id: "t".into(),
            weights: vec![0.0, 0.0],
            bias: 0.5,
            scaler_min: vec![0.0, 0.0],
            scaler_max: vec![1.0, 1.0],
        };
        assert_eq!(predict(&m, &[3.0, -2.0]).unwrap(), 0.5);
        let neg = LinearModel {
            bias: -0.3,
            ..m.clone()
        };
        assert_eq!(predict(&neg, &[0.5, 0.5]).unwrap(), 0.0);
        assert!(predict(&m, &[1.0]).is_err());
    }

    #[test]
    fn training_errors() {
        let one = planted(1, 5);
        assert!(train_svr(&one, &SvrParams::default(), "t").is_err());
        let mut bad = planted(3, 5);
        bad[1].features.pop();
        assert!(train_svr(&bad, &SvrParams::default(), "t").is_err());
        let mut nan = planted(3, 5);
        nan[0].target = f64::NAN;
        assert!(train_svr(&nan, &SvrParams::default(), "t").is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = train_svr(&planted(20, 6), &SvrParams::default(), "t").unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: LinearModel = serde_json::from_str(&text).unwrap();
        assert_eq!(m, back);
    }
}
