//! Evaluation reports: per-set ROUGE-2 matrices and their aggregates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub key: String,
    pub mean: f64,
}

/// Aggregates over `per_set`. A model missing from a set counts as 0 there,
/// so every model mean is taken over the same set collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_set: BTreeMap<String, BTreeMap<String, f64>>,
    pub upper_bound: f64,
    pub average: f64,
    pub best_model: ModelScore,
    pub worst_model: ModelScore,
    /// Mean ROUGE-2 of the reranker's selections.
    pub approach: Option<f64>,
    /// Reference-free baselines such as JS/KL reranking, by name.
    pub baselines: BTreeMap<String, f64>,
}

impl EvaluationReport {
    pub fn from_matrix(per_set: BTreeMap<String, BTreeMap<String, f64>>) -> Result<EvaluationReport> {
        if per_set.is_empty() || per_set.values().all(BTreeMap::is_empty) {
            return Err(Error::data("cannot build a report from an empty score matrix"));
        }
        if per_set.values().flat_map(|m| m.values()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("report score"));
        }
        let models: BTreeSet<&str> = per_set.values().flat_map(|m| m.keys().map(String::as_str)).collect();
        let sets = per_set.len() as f64;
        let means: Vec<(&str, f64)> = models
            .iter()
            .map(|&k| {
                let total: f64 = per_set.values().map(|m| m.get(k).copied().unwrap_or(0.0)).sum();
                (k, total / sets)
            })
            .collect();
        let upper_bound = per_set
            .values()
            .map(|m| m.values().copied().fold(0.0, f64::max))
            .sum::<f64>()
            / sets;
        // first key wins ties for best, last key for worst
        let mut best = means[0];
        let mut worst = means[0];
        for &(k, m) in &means[1..] {
            if m > best.1 {
                best = (k, m);
            }
            if m <= worst.1 {
                worst = (k, m);
            }
        }
        let average = (means.iter().map(|(_, m)| m).sum::<f64>() / means.len() as f64).clamp(worst.1, best.1);
        Ok(EvaluationReport {
            upper_bound,
            average,
            best_model: ModelScore {
                key: best.0.to_string(),
                mean: best.1,
            },
            worst_model: ModelScore {
                key: worst.0.to_string(),
                mean: worst.1,
            },
            per_set,
            approach: None,
            baselines: BTreeMap::new(),
        })
    }

    /// `worst <= average <= best <= upper bound`.
    pub fn ordering_holds(&self) -> bool {
        self.worst_model.mean <= self.average
            && self.average <= self.best_model.mean
            && self.best_model.mean <= self.upper_bound
    }

    pub fn render_table(&self) -> String {
        let mut rows: Vec<(String, f64)> = vec![("Upper bound".into(), self.upper_bound)];
        if let Some(a) = self.approach {
            rows.push(("Approach".into(), a));
        }
        for (name, v) in &self.baselines {
            rows.push((name.clone(), *v));
        }
        rows.push((format!("Best model ({})", self.best_model.key), self.best_model.mean));
        rows.push(("Average".into(), self.average));
        rows.push((format!("Worst model ({})", self.worst_model.key), self.worst_model.mean));
        table(&format!("System ({} sets)", self.per_set.len()), &rows)
    }
}

/// Two-column text table with scores as percentages to 3 decimals.
pub fn table(header: &str, rows: &[(String, f64)]) -> String {
    let width = rows
        .iter()
        .map(|(n, _)| n.chars().count())
        .chain([header.chars().count()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "{header:<width$}  ROUGE-2 (%)");
    let _ = writeln!(out, "{}  -----------", "-".repeat(width));
    for (name, v) in rows {
        let _ = writeln!(out, "{name:<width$}  {:>11.3}", 100.0 * v);
    }
    out
}

/// One row of an ablation comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mask: String,
    pub label: String,
    pub approach: f64,
}

pub fn render_ablation(rows: &[AblationRow]) -> String {
    let rows: Vec<(String, f64)> = rows.iter().map(|r| (r.label.clone(), r.approach)).collect();
    table("Features", &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: &[(&str, &[(&str, f64)])]) -> BTreeMap<String, BTreeMap<String, f64>> {
        rows.iter()
            .map(|(s, m)| (s.to_string(), m.iter().map(|(k, v)| (k.to_string(), *v)).collect()))
            .collect()
    }

    #[test]
    fn hand_example() {
        let r = EvaluationReport::from_matrix(matrix(&[
            ("s1", &[("A", 0.10), ("B", 0.04)]),
            ("s2", &[("A", 0.02), ("B", 0.08)]),
        ]))
        .unwrap();
        assert!((r.upper_bound - 0.09).abs() < 1e-12);
        assert!((r.average - 0.06).abs() < 1e-12);
        assert_eq!(r.best_model.key, "A");
        assert_eq!(r.worst_model.key, "B");
        assert!((r.best_model.mean - 0.06).abs() < 1e-12);
        assert!(r.ordering_holds());
    }

    #[test]
    fn dominant_model_reaches_upper_bound() {
        let r = EvaluationReport::from_matrix(matrix(&[
            ("s1", &[("A", 0.3), ("B", 0.1)]),
            ("s2", &[("A", 0.2), ("B", 0.15)]),
        ]))
        .unwrap();
        assert_eq!(r.best_model.key, "A");
        assert_eq!(r.best_model.mean, r.upper_bound);
    }

    #[test]
    fn missing_entries_count_as_zero() {
        let r =
            EvaluationReport::from_matrix(matrix(&[("s1", &[("A", 0.4), ("B", 0.2)]), ("s2", &[("A", 0.4)])])).unwrap();
        assert!((r.worst_model.mean - 0.1).abs() < 1e-12);
        assert!(r.ordering_holds());
        assert!(EvaluationReport::from_matrix(BTreeMap::new()).is_err());
    }

    #[test]
    fn table_uses_percentages() {
        let mut r = EvaluationReport::from_matrix(matrix(&[("s1", &[("A", 0.1234567)])])).unwrap();
        r.approach = Some(0.1);
        let t = r.render_table();
        assert!(t.contains("12.346"), "{t}");
        assert!(t.contains("10.000"), "{t}");
    }

    proptest! {
        #[test]
        fn ordering_on_random_matrices(
            m in prop::collection::vec(prop::collection::vec(prop::option::weighted(0.9, 0.0..1.0f64), 1..8), 1..10)
        ) {
            let per_set = m
                .iter()
                .enumerate()
                .map(|(s, row)| {
                    (format!("s{s}"), row.iter().enumerate().filter_map(|(k, v)| v.map(|v| (format!("m{k}"), v))).collect())
                })
                .collect::<BTreeMap<String, BTreeMap<String, f64>>>();
            if let Ok(r) = EvaluationReport::from_matrix(per_set) {
                prop_assert!(r.ordering_holds());
            }
        }
    }
}
