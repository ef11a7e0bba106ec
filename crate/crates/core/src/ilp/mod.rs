//! Sentence-extraction ILP.
//!
//! Maximize
//!
//! ```text
//! lambda * sum_i (l_i / L) u_i x_i + (1 - lambda) * sum_j (1 / L) v_j y_j
//! ```
//!
//! subject to `sum_i l_i x_i <= L`, `y_j = 1` iff some chosen sentence contains
//! word `j`, and for every exclusion set `X_k` with cap `c_k`:
//! `|chosen ∩ X_k| <= c_k`. With `v_j >= 0` the coverage coupling means the
//! problem is fully determined by the sentence choice `x`, which is what the
//! solver searches over.

mod candidates;
mod solver;

pub use candidates::{
    generate_candidates, load_external_candidates, CandidateSource, CandidateSummary, ExternalRecord, GenerationConfig,
};
pub use solver::{greedy, solve, SolveOptions};

use serde::{Deserialize, Serialize};

use crate::corpus::DocumentSet;
use crate::error::{Error, Result};
use crate::importance::{
    predict, sentence_features, word_features, LinearModel, SENTENCE_DIM, SENTENCE_SCHEMA, WORD_DIM, WORD_SCHEMA,
};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    #[default]
    Words,
    Bytes,
}

impl std::str::FromStr for LengthUnit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "words" => Ok(LengthUnit::Words),
            "bytes" => Ok(LengthUnit::Bytes),
            _ => Err(Error::Config(format!("unknown length unit `{s}` (words|bytes)"))),
        }
    }
}

/// A diversity cap: at most `cap` members of `members` may be chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub members: Vec<usize>,
    pub cap: usize,
}

impl Exclusion {
    /// Cap `floor(beta * |members|)`.
    pub fn with_ratio(mut members: Vec<usize>, beta: f64) -> Exclusion {
        members.sort_unstable();
        members.dedup();
        // the epsilon absorbs products like 0.6 * 5 landing just under an integer
        let cap = (beta * members.len() as f64 + 1e-9).floor().max(0.0) as usize;
        Exclusion { members, cap }
    }
}

/// One solvable instance. Indices are instance-local; `sentence_ids` maps
/// them back to the document set.
#[derive(Debug, Clone, PartialEq)]
pub struct IlpInstance {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub lengths: Vec<usize>,
    /// Sorted, duplicate-free word indices per sentence.
    pub incidence: Vec<Vec<usize>>,
    pub budget: usize,
    pub lambda: f64,
    pub exclusions: Vec<Exclusion>,
    pub sentence_ids: Vec<usize>,
}

impl IlpInstance {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.u.len();
        if self.lengths.len() != n || self.incidence.len() != n || self.sentence_ids.len() != n {
            return Err(Error::data("ILP instance vectors have inconsistent lengths"));
        }
        if self.budget == 0 {
            return Err(Error::Config("budget must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.u.iter().chain(&self.v).any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::data("ILP scores must be finite and nonnegative"));
        }
        if self.lengths.contains(&0) {
            return Err(Error::data("sentence lengths must be positive"));
        }
        for words in &self.incidence {
            if words.windows(2).any(|w| w[0] >= w[1]) || words.last().is_some_and(|&j| j >= self.v.len()) {
                return Err(Error::data("incidence lists must be sorted and index known words"));
            }
        }
        for e in &self.exclusions {
            if e.members.iter().any(|&i| i >= n) {
                return Err(Error::data("exclusion references an unknown sentence"));
            }
        }
        Ok(())
    }

    /// Sorted union of the incidence lists of `chosen`.
    pub fn coverage(&self, chosen: &[usize]) -> Vec<usize> {
        let mut covered: Vec<usize> = chosen.iter().flat_map(|&i| self.incidence[i].iter().copied()).collect();
        covered.sort_unstable();
        covered.dedup();
        covered
    }

    pub fn total_length(&self, chosen: &[usize]) -> usize {
        chosen.iter().map(|&i| self.lengths[i]).sum()
    }
}

/// Objective value of a sentence choice.
pub fn objective(inst: &IlpInstance, chosen: &[usize]) -> Result<f64> {
    if let Some(&bad) = chosen.iter().find(|&&i| i >= inst.len()) {
        return Err(Error::data(format!("unknown sentence index {bad}")));
    }
    let l = inst.budget as f64;
    let sentence_part: f64 = chosen.iter().map(|&i| inst.lengths[i] as f64 / l * inst.u[i]).sum();
    let word_part: f64 = inst.coverage(chosen).iter().map(|&j| inst.v[j] / l).sum();
    Ok(inst.lambda * sentence_part + (1.0 - inst.lambda) * word_part)
}

/// Checks the length budget and every exclusion cap by direct recomputation.
pub fn check_feasible(inst: &IlpInstance, chosen: &[usize]) -> Result<()> {
    let total = inst.total_length(chosen);
    if total > inst.budget {
        return Err(Error::data(format!(
            "selection length {total} exceeds budget {}",
            inst.budget
        )));
    }
    for (k, e) in inst.exclusions.iter().enumerate() {
        let overlap = chosen.iter().filter(|i| e.members.binary_search(i).is_ok()).count();
        if overlap > e.cap {
            return Err(Error::data(format!(
                "selection reuses {overlap} sentences of exclusion set {k} (cap {})",
                e.cap
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Sorted instance indices with `x_i = 1`.
    pub chosen: Vec<usize>,
    /// Sorted word indices with `y_j = 1`.
    pub covered: Vec<usize>,
    pub objective: f64,
    pub total_length: usize,
    pub proven_optimal: bool,
}

/// Predicted sentence and word importance for one document set.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceScores {
    pub sentence: Vec<f64>,
    pub word: Vec<f64>,
}

fn check_model(model: &LinearModel, schema: &str, dim: usize) -> Result<()> {
    model.validate()?;
    if model.schema_id != schema || model.dim() != dim {
        return Err(Error::data(format!(
            "model schema `{}` ({} dims) does not match `{schema}` ({dim} dims)",
            model.schema_id,
            model.dim()
        )));
    }
    Ok(())
}

impl ImportanceScores {
    pub fn compute(
        ds: &DocumentSet,
        sentence_model: &LinearModel,
        word_model: &LinearModel,
        exec: Execution,
    ) -> Result<Self> {
        check_model(sentence_model, SENTENCE_SCHEMA, SENTENCE_DIM)?;
        check_model(word_model, WORD_SCHEMA, WORD_DIM)?;
        let sentence = par::map(exec, &ds.sentences, |s| {
            predict(sentence_model, &sentence_features(s, ds))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let word = par::map(exec, &ds.vocabulary, |w| predict(word_model, &word_features(w, ds)))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(ImportanceScores { sentence, word })
    }
}

/// Builds the instance for a document set from precomputed scores.
///
/// Sentences without any content word are left out. `exclusions` are given
/// in document-set sentence ids.
pub fn instance_from_scores(
    ds: &DocumentSet,
    scores: &ImportanceScores,
    lambda: f64,
    budget: usize,
    unit: LengthUnit,
    exclusions: &[Exclusion],
) -> Result<IlpInstance> {
    if ds.sentences.is_empty() {
        return Err(Error::data(format!("document set {} is empty", ds.set_id)));
    }
    if scores.sentence.len() != ds.sentences.len() || scores.word.len() != ds.vocabulary.len() {
        return Err(Error::data("importance scores do not match the document set"));
    }
    let mut inst = IlpInstance {
        u: Vec::new(),
        v: scores.word.clone(),
        lengths: Vec::new(),
        incidence: Vec::new(),
        budget,
        lambda,
        exclusions: Vec::new(),
        sentence_ids: Vec::new(),
    };
    let mut local = vec![usize::MAX; ds.sentences.len()];
    for s in &ds.sentences {
        let mut words: Vec<usize> = s.tokens.iter().filter_map(|t| ds.word_id(&t.lower)).collect();
        words.sort_unstable();
        words.dedup();
        if words.is_empty() {
            continue;
        }
        local[s.id] = inst.u.len();
        inst.u.push(scores.sentence[s.id]);
        inst.lengths.push(match unit {
            LengthUnit::Words => s.word_length,
            LengthUnit::Bytes => s.byte_length,
        });
        inst.incidence.push(words);
        inst.sentence_ids.push(s.id);
    }
    for e in exclusions {
        let mut members = Vec::with_capacity(e.members.len());
        for &sid in &e.members {
            let i = *local
                .get(sid)
                .ok_or_else(|| Error::data(format!("exclusion names unknown sentence {sid}")))?;
            if i != usize::MAX {
                members.push(i);
            }
        }
        members.sort_unstable();
        inst.exclusions.push(Exclusion { members, cap: e.cap });
    }
    inst.validate()?;
    Ok(inst)
}

#[allow(clippy::too_many_arguments)]
pub fn build_instance(
    ds: &DocumentSet,
    sentence_model: &LinearModel,
    word_model: &LinearModel,
    lambda: f64,
    budget: usize,
    unit: LengthUnit,
    exclusions: &[Exclusion],
) -> Result<IlpInstance> {
    let scores = ImportanceScores::compute(ds, sentence_model, word_model, Execution::Sequential)?;
    instance_from_scores(ds, &scores, lambda, budget, unit, exclusions)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy() -> IlpInstance {
        IlpInstance {
            u: vec![0.9, 0.4, 0.7],
            v: vec![1.0, 2.0, 0.5, 3.0],
            lengths: vec![4, 3, 5],
            incidence: vec![vec![0, 1], vec![1, 2], vec![2, 3]],
            budget: 10,
            lambda: 0.5,
            exclusions: vec![],
            sentence_ids: vec![0, 1, 2],
        }
    }

    #[test]
    fn objective_by_hand() {
        let inst = toy();
        assert_eq!(objective(&inst, &[]).unwrap(), 0.0);
        // {0, 2}: sentence part (4*0.9 + 5*0.7)/10 = 0.71, words {0,1,2,3} = 6.5/10
        let v = objective(&inst, &[0, 2]).unwrap();
        assert!((v - (0.5 * 0.71 + 0.5 * 0.65)).abs() < 1e-12);
        let one = IlpInstance { lambda: 1.0, ..toy() };
        assert!((objective(&one, &[1]).unwrap() - 0.3 * 0.4).abs() < 1e-12);
        let zero = IlpInstance { lambda: 0.0, ..toy() };
        assert!((objective(&zero, &[0, 1]).unwrap() - 0.35).abs() < 1e-12);
        assert!(objective(&inst, &[7]).is_err());
    }

    #[test]
    fn exclusion_caps() {
        assert_eq!(Exclusion::with_ratio(vec![1, 2, 3, 4, 5], 0.6).cap, 3);
        assert_eq!(Exclusion::with_ratio(vec![1], 0.6).cap, 0);
        assert_eq!(Exclusion::with_ratio((0..10).collect(), 0.6).cap, 6);
        let mut inst = toy();
        inst.exclusions.push(Exclusion::with_ratio(vec![0, 1], 0.6));
        assert!(check_feasible(&inst, &[0, 2]).is_ok());
        assert!(check_feasible(&inst, &[0, 1]).is_err());
        inst.budget = 6;
        assert!(check_feasible(&inst, &[0, 2]).is_err());
    }

    #[test]
    fn validation() {
        let mut inst = toy();
        inst.incidence[0] = vec![1, 0];
        assert!(inst.validate().is_err());
        let mut inst = toy();
        inst.u[0] = -1.0;
        assert!(inst.validate().is_err());
        let mut inst = toy();
        inst.budget = 0;
        assert!(inst.validate().is_err());
        assert!(toy().validate().is_ok());
    }
}
