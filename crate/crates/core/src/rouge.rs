//! ROUGE-2 recall.
//!
//! Bigrams are formed from case-folded tokens inside each sentence, stopwords
//! included and without stemming. Multiple references are averaged.

use std::collections::HashMap;

use crate::corpus::ReferenceSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BigramBag {
    pub counts: HashMap<(String, String), usize>,
    pub total: usize,
}

pub fn bigrams<S: AsRef<str>>(sentences: &[Vec<S>]) -> BigramBag {
    let mut bag = BigramBag::default();
    for sentence in sentences {
        for pair in sentence.windows(2) {
            let key = (pair[0].as_ref().to_string(), pair[1].as_ref().to_string());
            *bag.counts.entry(key).or_insert(0) += 1;
            bag.total += 1;
        }
    }
    bag
}

/// Clipped bigram matches of `candidate` against `reference`.
pub fn clipped_matches(candidate: &BigramBag, reference: &BigramBag) -> usize {
    reference
        .counts
        .iter()
        .map(|(g, &n)| candidate.counts.get(g).map_or(0, |&c| c.min(n)))
        .sum()
}

pub fn rouge2_recall<S: AsRef<str>>(candidate: &[Vec<S>], refs: &ReferenceSet) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::data(format!("no reference summaries for set {}", refs.set_id)));
    }
    let cand = bigrams(candidate);
    let total: f64 = refs
        .references
        .iter()
        .map(|r| {
            let bag = bigrams(r);
            if bag.total == 0 {
                0.0
            } else {
                clipped_matches(&cand, &bag) as f64 / bag.total as f64
            }
        })
        .sum();
    Ok(total / refs.references.len() as f64)
}
