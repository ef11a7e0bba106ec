use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_feasible, instance_from_scores, solve, Exclusion, ImportanceScores, LengthUnit, SolveOptions};
use crate::corpus::DocumentSet;
use crate::error::{Error, Result};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateSource {
    #[default]
    Ilp,
    External,
}

impl CandidateSource {
    fn is_ilp(&self) -> bool {
        *self == CandidateSource::Ilp
    }
}

/// One candidate summary of a document set.
///
/// Serialized as one JSONL line of a candidate pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub set_id: String,
    pub lambda: f64,
    pub iteration: usize,
    /// Document-set sentence ids in document order; empty for external candidates.
    #[serde(default)]
    pub sentence_ids: Vec<usize>,
    pub text: String,
    #[serde(default, skip_serializing_if = "CandidateSource::is_ilp")]
    pub source: CandidateSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_id: Option<String>,
}

impl CandidateSummary {
    /// Model key used in evaluation reports: the `(lambda, iteration)` pair for
    /// ILP candidates, the system id for external ones. The fixed-width lambda
    /// keeps string order equal to numeric order.
    pub fn model_key(&self) -> String {
        match (&self.source, &self.system_id) {
            (CandidateSource::External, Some(id)) => id.clone(),
            _ => format!("lambda={:.6}/iter={:02}", self.lambda, self.iteration),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub budget: usize,
    pub unit: LengthUnit,
    pub beta: f64,
    pub per_lambda: usize,
    pub lambdas: Vec<f64>,
    pub timeout_ms: Option<u64>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            budget: 100,
            unit: LengthUnit::Words,
            beta: 0.6,
            per_lambda: 10,
            lambdas: (0..10).map(|k| k as f64 / 10.0).collect(),
            timeout_ms: None,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("budget must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta {} outside [0, 1]", self.beta)));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::Config(format!("lambda {l} outside [0, 1]")));
        }
        if self.lambdas.is_empty() || self.per_lambda == 0 {
            return Err(Error::Config("need at least one lambda and one iteration".into()));
        }
        Ok(())
    }
}

fn candidates_for_lambda(
    ds: &DocumentSet,
    scores: &ImportanceScores,
    cfg: &GenerationConfig,
    lambda: f64,
) -> Result<Vec<CandidateSummary>> {
    let options = SolveOptions::with_timeout_ms(cfg.timeout_ms);
    let mut out: Vec<CandidateSummary> = Vec::new();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut exclusions: Vec<Exclusion> = Vec::new();
    let mut used: BTreeSet<usize> = BTreeSet::new();
    for iteration in 1..=cfg.per_lambda {
        let inst = instance_from_scores(ds, scores, lambda, cfg.budget, cfg.unit, &exclusions)?;
        let sel = solve(&inst, options)?;
        check_feasible(&inst, &sel.chosen)?;
        if !sel.proven_optimal {
            log::warn!(
                "set {} lambda {lambda} iteration {iteration}: solver timed out",
                ds.set_id
            );
        }
        let mut ids: Vec<usize> = sel.chosen.iter().map(|&i| inst.sentence_ids[i]).collect();
        ids.sort_unstable();
        if ids.is_empty() || !seen.insert(ids.clone()) {
            break;
        }
        used.extend(ids.iter().copied());
        exclusions.push(Exclusion::with_ratio(used.iter().copied().collect(), cfg.beta));
        let text = ids
            .iter()
            .map(|&i| ds.sentences[i].text.trim())
            .collect::<Vec<_>>()
            .join(" ");
        out.push(CandidateSummary {
            set_id: ds.set_id.clone(),
            lambda,
            iteration,
            sentence_ids: ids,
            text,
            source: CandidateSource::Ilp,
            system_id: None,
        });
    }
    Ok(out)
}

/// k-best diverse candidates for every lambda, ordered by (lambda, iteration).
///
/// Within one lambda, after iteration k the union `X_k` of all sentences used
/// so far gets the cap `floor(beta * |X_k|)`; the caps accumulate and reset for
/// the next lambda. A lambda stops early on an empty or repeated solution.
pub fn generate_candidates(
    ds: &DocumentSet,
    scores: &ImportanceScores,
    cfg: &GenerationConfig,
    exec: Execution,
) -> Result<Vec<CandidateSummary>> {
    cfg.validate()?;
    let per_lambda = par::map(exec, &cfg.lambdas, |&lambda| {
        candidates_for_lambda(ds, scores, cfg, lambda)
    });
    let mut out = Vec::new();
    for chunk in per_lambda {
        out.extend(chunk?);
    }
    Ok(out)
}

/// Line format of an external candidate file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRecord {
    pub set_id: String,
    pub system_id: String,
    pub text: String,
}

/// Reads externally produced summaries (one `{set_id, system_id, text}` per line).
pub fn load_external_candidates(path: impl AsRef<Path>, known_sets: &HashSet<String>) -> Result<Vec<CandidateSummary>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_external_candidates(&text, &path.display().to_string(), known_sets)
}

pub(crate) fn parse_external_candidates(
    text: &str,
    source: &str,
    known_sets: &HashSet<String>,
) -> Result<Vec<CandidateSummary>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            message,
        };
        let rec: ExternalRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if !known_sets.contains(&rec.set_id) {
            return Err(parse_err(format!("unknown set_id `{}`", rec.set_id)));
        }
        if rec.text.trim().is_empty() {
            return Err(parse_err(format!(
                "empty summary for system `{}` on set `{}`",
                rec.system_id, rec.set_id
            )));
        }
        if !seen.insert((rec.system_id.clone(), rec.set_id.clone())) {
            return Err(parse_err(format!(
                "duplicate summary for system `{}` on set `{}`",
                rec.system_id, rec.set_id
            )));
        }
        out.push(CandidateSummary {
            set_id: rec.set_id,
            lambda: 0.0,
            iteration: 0,
            sentence_ids: Vec::new(),
            text: rec.text,
            source: CandidateSource::External,
            system_id: Some(rec.system_id),
        });
    }
    Ok(out)
}
