//! Seeded synthetic news-like corpora with planted salient sentences.
//!
//! Each cluster has its own topic vocabulary. Salient sentences draw most of
//! their content words from it and are more likely near the start of a
//! document; the other sentences draw from a background vocabulary shared by
//! all clusters. Every reference summary is a random subset of the cluster's
//! salient sentences, copied verbatim.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Cluster, CorpusRecord, DocumentRecord, ReferenceText, SentenceRecord};
use crate::error::Result;

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ren", "tas", "vo", "ne", "sil", "dor", "pa", "gru", "fen", "ba", "tor", "lim", "sa", "quo",
    "zer", "hu", "mar", "pel", "ost", "rik", "vun",
];

const FUNCTION_WORDS: [(&str, &str); 12] = [
    ("the", "DT"),
    ("of", "IN"),
    ("and", "CC"),
    ("in", "IN"),
    ("to", "TO"),
    ("was", "VBD"),
    ("for", "IN"),
    ("on", "IN"),
    ("with", "IN"),
    ("by", "IN"),
    ("at", "IN"),
    ("from", "IN"),
];

const CONTENT_TAGS: [&str; 4] = ["NN", "VBD", "JJ", "RB"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub clusters: usize,
    pub docs_per_cluster: (usize, usize),
    pub sentences_per_doc: (usize, usize),
    pub sentence_tokens: (usize, usize),
    pub topic_words: usize,
    pub background_words: usize,
    pub references: usize,
    /// Salient sentences copied into each reference.
    pub reference_sentences: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            clusters: 20,
            docs_per_cluster: (3, 4),
            sentences_per_doc: (6, 8),
            sentence_tokens: (10, 20),
            topic_words: 30,
            background_words: 400,
            references: 3,
            reference_sentences: 6,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone)]
struct Word {
    text: String,
    tag: &'static str,
    entity: bool,
}

fn pseudo_words(rng: &mut ChaCha8Rng, n: usize, taken: &mut std::collections::BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let parts = rng.random_range(2..=3);
        let w: String = (0..parts).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        if !crate::stopwords::is_stopword(&w) && taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn tagged(rng: &mut ChaCha8Rng, words: Vec<String>, entities: usize) -> Vec<Word> {
    words
        .into_iter()
        .enumerate()
        .map(|(i, text)| {
            if i < entities {
                let mut c = text.chars();
                let cap = c
                    .next()
                    .map(|f| f.to_uppercase().chain(c).collect())
                    .unwrap_or_default();
                Word {
                    text: cap,
                    tag: "NNP",
                    entity: true,
                }
            } else {
                Word {
                    text,
                    tag: CONTENT_TAGS.choose(rng).unwrap(),
                    entity: false,
                }
            }
        })
        .collect()
}

/// Zipf-like pick favoring early entries.
fn zipf<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    let u: f64 = rng.random();
    let k = ((items.len() as f64).powf(u) - 1.0).floor() as usize;
    &items[k.min(items.len() - 1)]
}

fn sentence(rng: &mut ChaCha8Rng, len: usize, content: &[Word], extra: &[Word], extra_rate: f64) -> SentenceRecord {
    let mut words: Vec<(&str, &str, bool)> = Vec::with_capacity(len);
    for k in 0..len {
        if k % 3 == 1 {
            let (w, t) = FUNCTION_WORDS.choose(rng).unwrap();
            words.push((w, t, false));
        } else if rng.random_bool(0.04) {
            words.push(("1998", "CD", false));
        } else {
            let w = if rng.random_bool(extra_rate) {
                zipf(rng, extra)
            } else {
                zipf(rng, content)
            };
            words.push((&w.text, w.tag, w.entity));
        }
    }
    let mut text = String::new();
    for (i, (w, _, _)) in words.iter().enumerate() {
        if i > 0 {
            text.push(' ');
        }
        if i == 0 {
            let mut c = w.chars();
            if let Some(f) = c.next() {
                text.extend(f.to_uppercase());
                text.push_str(c.as_str());
            }
        } else {
            text.push_str(w);
        }
    }
    text.push('.');
    SentenceRecord {
        text,
        pos: Some(words.iter().map(|(_, t, _)| t.to_string()).collect()),
        ner: Some(
            words
                .iter()
                .map(|(_, _, e)| if *e { "ENT" } else { "O" }.to_string())
                .collect(),
        ),
        parse_depth: Some(2 + (len / 4) as u32),
    }
}

/// Corpus records with references, deterministic per `cfg.seed`.
pub fn generate_records(cfg: &SyntheticConfig) -> Vec<CorpusRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut taken = std::collections::BTreeSet::new();
    let background = pseudo_words(&mut rng, cfg.background_words.max(1), &mut taken);
    let background = tagged(&mut rng, background, 0);
    let mut records = Vec::with_capacity(cfg.clusters);
    for c in 0..cfg.clusters {
        let topic = pseudo_words(&mut rng, cfg.topic_words.max(1), &mut taken);
        let topic = tagged(&mut rng, topic, cfg.topic_words / 6);
        let n_docs = rng.random_range(cfg.docs_per_cluster.0..=cfg.docs_per_cluster.1.max(cfg.docs_per_cluster.0));
        let mut salient = Vec::new();
        let documents = (0..n_docs)
            .map(|d| {
                let (lo, hi) = cfg.sentences_per_doc;
                let n = rng.random_range(lo.max(1)..=hi.max(lo.max(1)));
                let sentences = (0..n)
                    .map(|p| {
                        let (tlo, thi) = cfg.sentence_tokens;
                        let len = rng.random_range(tlo.max(2)..=thi.max(tlo.max(2)));
                        let p_salient = 0.65 - 0.5 * p as f64 / n.max(2) as f64;
                        if rng.random_bool(p_salient.clamp(0.05, 0.95)) {
                            let s = sentence(&mut rng, len, &topic, &background, 0.15);
                            salient.push(s.text.clone());
                            s
                        } else {
                            sentence(&mut rng, len, &background, &topic, 0.1)
                        }
                    })
                    .collect();
                DocumentRecord {
                    doc_id: (c * 100 + d) as u64,
                    sentences,
                }
            })
            .collect();
        if salient.is_empty() {
            salient.push(sentence(&mut rng, 6, &topic, &background, 0.0).text);
        }
        let references = (0..cfg.references.max(1))
            .map(|_| {
                let k = cfg.reference_sentences.clamp(1, salient.len());
                let mut picked: Vec<String> = salient.choose_multiple(&mut rng, k).cloned().collect();
                picked.shuffle(&mut rng);
                ReferenceText::Sentences(picked)
            })
            .collect();
        records.push(CorpusRecord {
            set_id: format!("syn{c:03}"),
            documents,
            references: Some(references),
        });
    }
    records
}

pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<Cluster>> {
    generate_records(cfg)
        .into_iter()
        .map(CorpusRecord::into_cluster)
        .collect()
}
