//! End-to-end stages: train, summarize, evaluate, external reranking and
//! ablation, plus their on-disk artifacts.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::{Cluster, DocumentSet, ReferenceSet};
use crate::error::{Error, Result};
use crate::features::{extract_pool, EmbeddingTable, SetContext, SummaryFeatures, SummaryView, FEATURE_SCHEMA};
use crate::ilp::{generate_candidates, CandidateSummary, ImportanceScores};
use crate::importance::{sentence_instances, train_svr, word_instances, LinearModel, SENTENCE_SCHEMA, WORD_SCHEMA};
use crate::par;
use crate::report::{AblationRow, EvaluationReport};
use crate::reranker::{divergence_rank, select_best, DivergenceMetric, MaskPreset, RankerModel, TrainingPool};
use crate::rouge::rouge2_recall;

pub const WORD_MODEL_FILE: &str = "word_svr.json";
pub const SENTENCE_MODEL_FILE: &str = "sentence_svr.json";
pub const RANKER_FILE: &str = "ranker.json";
pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const POOL_FILE: &str = "pool.jsonl";
pub const SELECTIONS_FILE: &str = "selections.jsonl";
pub const SUMMARIES_DIR: &str = "summaries";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const INGEST_FILE: &str = "corpus.jsonl";
pub const INGEST_STATS_FILE: &str = "ingest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Models {
    pub word: LinearModel,
    pub sentence: LinearModel,
    pub ranker: RankerModel,
}

impl Models {
    pub fn load(dir: &Path) -> Result<Models> {
        Ok(Models {
            word: read_json(&dir.join(WORD_MODEL_FILE))?,
            sentence: read_json(&dir.join(SENTENCE_MODEL_FILE))?,
            ranker: read_json::<RankerModel>(&dir.join(RANKER_FILE)).and_then(|r| r.validate().map(|_| r))?,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<Vec<String>> {
        write_json(&dir.join(WORD_MODEL_FILE), &self.word)?;
        write_json(&dir.join(SENTENCE_MODEL_FILE), &self.sentence)?;
        write_json(&dir.join(RANKER_FILE), &self.ranker)?;
        Ok(vec![
            WORD_MODEL_FILE.into(),
            SENTENCE_MODEL_FILE.into(),
            RANKER_FILE.into(),
        ])
    }
}

/// Provenance of an output directory. Contains no timestamps so reruns are
/// byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed_svr: u64,
    pub seed_ranker: u64,
    pub stopword_list: String,
    pub schemas: BTreeMap<String, String>,
    pub sets: Vec<String>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, sets: Vec<String>, mut files: Vec<String>) -> Manifest {
        files.sort();
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed_svr: cfg.seed_svr,
            seed_ranker: cfg.seed_ranker,
            stopword_list: crate::stopwords::STOPWORD_LIST_VERSION.to_string(),
            schemas: [
                ("word".to_string(), WORD_SCHEMA.to_string()),
                ("sentence".to_string(), SENTENCE_SCHEMA.to_string()),
                ("features".to_string(), FEATURE_SCHEMA.to_string()),
            ]
            .into(),
            sets,
            files,
        }
    }
}

/// The final summary of one set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub set_id: String,
    /// `None` when the set produced no candidate.
    pub model_key: Option<String>,
    #[serde(default)]
    pub sentence_ids: Vec<usize>,
    pub text: String,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub set_id: String,
    pub documents: usize,
    pub sentences: usize,
    pub tokens: usize,
    pub vocabulary: usize,
    pub references: usize,
}

pub fn ingest_stats(clusters: &[Cluster]) -> Vec<IngestStats> {
    clusters
        .iter()
        .map(|c| IngestStats {
            set_id: c.docs.set_id.clone(),
            documents: c.docs.document_count(),
            sentences: c.docs.sentences.len(),
            tokens: c.docs.token_total(),
            vocabulary: c.docs.vocabulary.len(),
            references: c.references.as_ref().map_or(0, |r| r.references.len()),
        })
        .collect()
}

pub fn load_embeddings(cfg: &RunConfig) -> Result<Option<EmbeddingTable>> {
    cfg.embeddings.as_ref().map(EmbeddingTable::load).transpose()
}

fn references(c: &Cluster) -> Result<&ReferenceSet> {
    c.references
        .as_ref()
        .filter(|r| !r.is_empty())
        .ok_or_else(|| Error::data(format!("set `{}` has no reference summaries", c.docs.set_id)))
}

fn require_nonempty(clusters: &[Cluster]) -> Result<()> {
    if clusters.is_empty() {
        return Err(Error::data("corpus contains no document sets"));
    }
    Ok(())
}

/// Word and sentence importance regressors.
pub fn train_importance(clusters: &[Cluster], cfg: &RunConfig) -> Result<(LinearModel, LinearModel)> {
    require_nonempty(clusters)?;
    let exec = cfg.execution;
    let per_set = par::map(exec, clusters, |c| {
        let refs = references(c)?;
        Ok((word_instances(&c.docs, refs), sentence_instances(&c.docs, refs)))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut words = Vec::new();
    let mut sentences = Vec::new();
    for (w, s) in per_set {
        words.extend(w);
        sentences.extend(s);
    }
    let params = cfg.svr();
    let jobs = [(&words, WORD_SCHEMA), (&sentences, SENTENCE_SCHEMA)];
    let mut fitted = par::map(exec, &jobs, |(data, schema)| train_svr(data, &params, schema)).into_iter();
    let word = fitted.next().expect("two jobs")?;
    let sentence = fitted.next().expect("two jobs")?;
    Ok((word, sentence))
}

/// Candidates of one set with their raw features.
#[derive(Debug, Clone, PartialEq)]
pub struct SetPool {
    pub set_id: String,
    pub candidates: Vec<CandidateSummary>,
    pub features: Vec<SummaryFeatures>,
}

fn features_for(
    ds: &DocumentSet,
    candidates: Vec<CandidateSummary>,
    emb: Option<&EmbeddingTable>,
    cfg: &RunConfig,
) -> Result<SetPool> {
    let ctx = SetContext::new(ds, emb);
    let features = extract_pool(&candidates, &ctx, cfg.execution)?;
    Ok(SetPool {
        set_id: ds.set_id.clone(),
        candidates,
        features,
    })
}

/// ILP candidate pools with features for every set, in corpus order.
pub fn candidate_pools(
    clusters: &[Cluster],
    word: &LinearModel,
    sentence: &LinearModel,
    cfg: &RunConfig,
    emb: Option<&EmbeddingTable>,
) -> Result<Vec<SetPool>> {
    let generation = cfg.generation();
    par::map(cfg.execution, clusters, |c| {
        let scores = ImportanceScores::compute(&c.docs, sentence, word, cfg.execution)?;
        let candidates = generate_candidates(&c.docs, &scores, &generation, cfg.execution)?;
        if candidates.is_empty() {
            log::warn!(
                "set {}: no feasible candidate within budget {}",
                c.docs.set_id,
                cfg.budget
            );
        }
        features_for(&c.docs, candidates, emb, cfg)
    })
    .into_iter()
    .collect()
}

/// Case-folded sentence tokens of a candidate, as seen by ROUGE.
pub fn candidate_sentences(c: &CandidateSummary, ds: &DocumentSet) -> Result<Vec<Vec<String>>> {
    let view = SummaryView::resolve(c, ds)?;
    Ok(view
        .sentences
        .iter()
        .map(|s| s.tokens.iter().map(|t| t.lower.clone()).collect())
        .collect())
}

fn rouge_scores(pool: &SetPool, c: &Cluster) -> Result<Vec<f64>> {
    let refs = references(c)?;
    pool.candidates
        .iter()
        .map(|cand| rouge2_recall(&candidate_sentences(cand, &c.docs)?, refs))
        .collect()
}

/// Raw features paired with ROUGE-2 targets, ready for ranker training.
pub fn training_pools(clusters: &[Cluster], pools: &[SetPool], cfg: &RunConfig) -> Result<Vec<TrainingPool>> {
    let idx: Vec<usize> = (0..pools.len()).collect();
    par::map(cfg.execution, &idx, |&i| {
        let targets = rouge_scores(&pools[i], &clusters[i])?;
        Ok((
            pools[i].set_id.clone(),
            pools[i].features.iter().cloned().zip(targets).collect(),
        ))
    })
    .into_iter()
    .collect()
}

pub struct TrainOutput {
    pub models: Models,
    pub pools: Vec<TrainingPool>,
}

pub fn train(clusters: &[Cluster], cfg: &RunConfig, emb: Option<&EmbeddingTable>) -> Result<TrainOutput> {
    cfg.validate()?;
    require_nonempty(clusters)?;
    for c in clusters {
        references(c)?;
    }
    let (word, sentence) = train_importance(clusters, cfg)?;
    let pools = candidate_pools(clusters, &word, &sentence, cfg, emb)?;
    let training = training_pools(clusters, &pools, cfg)?;
    let ranker = RankerModel::train(&training, cfg.mask, &cfg.ranker())?;
    log::info!(
        "ranker trained on {} pairs, training accuracy {:.4}",
        ranker.metadata.pairs,
        ranker.metadata.training_accuracy
    );
    Ok(TrainOutput {
        models: Models { word, sentence, ranker },
        pools: training,
    })
}

/// Scores each pool with the ranker and selects one candidate per set.
pub fn select(pools: &[SetPool], ranker: &RankerModel, cfg: &RunConfig) -> Result<Vec<SelectionRecord>> {
    par::map(cfg.execution, pools, |p| {
        if p.candidates.is_empty() {
            log::warn!("set {}: empty summary", p.set_id);
            return Ok(SelectionRecord {
                set_id: p.set_id.clone(),
                model_key: None,
                sentence_ids: Vec::new(),
                text: String::new(),
                score: None,
            });
        }
        let scored = p
            .candidates
            .iter()
            .zip(&p.features)
            .map(|(c, f)| Ok((c.clone(), ranker.score(f)?)))
            .collect::<Result<Vec<_>>>()?;
        let best = select_best(&scored)?;
        let (c, score) = &scored[best];
        Ok(SelectionRecord {
            set_id: p.set_id.clone(),
            model_key: Some(c.model_key()),
            sentence_ids: c.sentence_ids.clone(),
            text: c.text.clone(),
            score: Some(*score),
        })
    })
    .into_iter()
    .collect()
}

pub struct RunOutput {
    pub pools: Vec<SetPool>,
    pub selections: Vec<SelectionRecord>,
}

pub fn summarize(
    clusters: &[Cluster],
    models: &Models,
    cfg: &RunConfig,
    emb: Option<&EmbeddingTable>,
) -> Result<RunOutput> {
    cfg.validate()?;
    require_nonempty(clusters)?;
    let pools = candidate_pools(clusters, &models.word, &models.sentence, cfg, emb)?;
    let selections = select(&pools, &models.ranker, cfg)?;
    Ok(RunOutput { pools, selections })
}

/// Groups external candidates by set (corpus order) and scores them.
pub fn rerank_external(
    clusters: &[Cluster],
    candidates: Vec<CandidateSummary>,
    ranker: &RankerModel,
    cfg: &RunConfig,
    emb: Option<&EmbeddingTable>,
) -> Result<RunOutput> {
    require_nonempty(clusters)?;
    let mut by_set: BTreeMap<String, Vec<CandidateSummary>> = BTreeMap::new();
    let systems: BTreeSet<String> = candidates.iter().filter_map(|c| c.system_id.clone()).collect();
    for c in candidates {
        by_set.entry(c.set_id.clone()).or_default().push(c);
    }
    let mut work = Vec::new();
    for c in clusters {
        let pool = by_set.remove(&c.docs.set_id).unwrap_or_default();
        if pool.is_empty() {
            log::warn!("set {}: no external candidates", c.docs.set_id);
            continue;
        }
        let present: BTreeSet<&str> = pool.iter().filter_map(|c| c.system_id.as_deref()).collect();
        for s in systems.iter().filter(|s| !present.contains(s.as_str())) {
            log::warn!("system {s} has no summary for set {}; excluded there", c.docs.set_id);
        }
        work.push((c, pool));
    }
    if let Some(unknown) = by_set.keys().next() {
        return Err(Error::data(format!("candidates reference unknown set `{unknown}`")));
    }
    let pools = par::map(cfg.execution, &work, |(c, pool)| {
        features_for(&c.docs, pool.clone(), emb, cfg)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let selections = select(&pools, ranker, cfg)?;
    Ok(RunOutput { pools, selections })
}

/// ROUGE-2 matrix of the pools, the selections' mean and the JS/KL baselines.
pub fn evaluate(
    clusters: &[Cluster],
    pools: &[CandidateSummary],
    selections: &[SelectionRecord],
    cfg: &RunConfig,
) -> Result<EvaluationReport> {
    let mut grouped: BTreeMap<&str, Vec<CandidateSummary>> = BTreeMap::new();
    for c in pools {
        grouped.entry(c.set_id.as_str()).or_default().push(c.clone());
    }
    let known: HashSet<&str> = clusters.iter().map(|c| c.docs.set_id.as_str()).collect();
    if let Some(bad) = grouped.keys().find(|k| !known.contains(*k)) {
        return Err(Error::data(format!("pool references unknown set `{bad}`")));
    }
    let selected: BTreeMap<&str, &SelectionRecord> = selections.iter().map(|s| (s.set_id.as_str(), s)).collect();
    let evaluated: Vec<&Cluster> = clusters
        .iter()
        .filter(|c| grouped.contains_key(c.docs.set_id.as_str()) || selected.contains_key(c.docs.set_id.as_str()))
        .collect();
    if evaluated.is_empty() {
        return Err(Error::data("nothing to evaluate: no pool entries match the corpus"));
    }
    struct SetEval {
        set_id: String,
        scores: BTreeMap<String, f64>,
        approach: Option<f64>,
        js: Option<f64>,
        kl: Option<f64>,
    }
    let per_set = par::map(cfg.execution, &evaluated, |c| {
        let refs = references(c)?;
        let set_id = c.docs.set_id.as_str();
        let pool = grouped.get(set_id).map(Vec::as_slice).unwrap_or(&[]);
        let rouge = pool
            .iter()
            .map(|cand| rouge2_recall(&candidate_sentences(cand, &c.docs)?, refs))
            .collect::<Result<Vec<f64>>>()?;
        let mut scores = BTreeMap::new();
        for (cand, r) in pool.iter().zip(&rouge) {
            if scores.insert(cand.model_key(), *r).is_some() {
                return Err(Error::data(format!(
                    "set `{set_id}` has duplicate model key `{}`",
                    cand.model_key()
                )));
            }
        }
        let approach = match selected.get(set_id) {
            None => None,
            Some(sel) => Some(match &sel.model_key {
                None => 0.0,
                Some(k) => *scores
                    .get(k)
                    .ok_or_else(|| Error::data(format!("selection `{k}` for set `{set_id}` is not in the pool")))?,
            }),
        };
        let (js, kl) = if pool.is_empty() {
            (None, None)
        } else {
            let ctx = SetContext::new(&c.docs, None);
            let js = divergence_rank(pool, &ctx, DivergenceMetric::Js, cfg.kl_direction)?[0].0;
            let kl = divergence_rank(pool, &ctx, DivergenceMetric::Kl, cfg.kl_direction)?[0].0;
            (Some(rouge[js]), Some(rouge[kl]))
        };
        Ok(SetEval {
            set_id: set_id.to_string(),
            scores,
            approach,
            js,
            kl,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let matrix: BTreeMap<String, BTreeMap<String, f64>> =
        per_set.iter().map(|e| (e.set_id.clone(), e.scores.clone())).collect();
    let mut report = EvaluationReport::from_matrix(matrix)?;
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    report.approach = mean(per_set.iter().filter_map(|e| e.approach).collect());
    if let Some(js) = mean(per_set.iter().filter_map(|e| e.js).collect()) {
        report.baselines.insert("JS baseline".into(), js);
    }
    if let Some(kl) = mean(per_set.iter().filter_map(|e| e.kl).collect()) {
        report.baselines.insert("KL baseline".into(), kl);
    }
    Ok(report)
}

/// Retrains the ranker under every mask on the training pools and reports the
/// mean ROUGE-2 of its selections on the test pools.
pub fn ablate(
    train_pools: &[TrainingPool],
    test_clusters: &[Cluster],
    test_pools: &[SetPool],
    cfg: &RunConfig,
) -> Result<Vec<AblationRow>> {
    let targets: Vec<Vec<f64>> = test_pools
        .iter()
        .zip(test_clusters)
        .map(|(p, c)| rouge_scores(p, c))
        .collect::<Result<_>>()?;
    MaskPreset::ALL
        .iter()
        .map(|&mask| {
            let ranker = RankerModel::train(train_pools, mask, &cfg.ranker())?;
            let selections = select(test_pools, &ranker, cfg)?;
            let total: f64 = selections
                .iter()
                .zip(test_pools.iter().zip(&targets))
                .map(|(s, (p, t))| {
                    s.model_key
                        .as_ref()
                        .and_then(|k| p.candidates.iter().position(|c| &c.model_key() == k))
                        .map_or(0.0, |i| t[i])
                })
                .sum();
            Ok(AblationRow {
                mask: mask.name().to_string(),
                label: mask.label().to_string(),
                approach: total / test_pools.len().max(1) as f64,
            })
        })
        .collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, rows: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `pool.jsonl`, `selections.jsonl` and one text file per selection.
pub fn write_run(dir: &Path, run: &RunOutput) -> Result<Vec<String>> {
    create_dir(dir)?;
    write_jsonl(&dir.join(POOL_FILE), run.pools.iter().flat_map(|p| &p.candidates))?;
    write_jsonl(&dir.join(SELECTIONS_FILE), &run.selections)?;
    let summaries = dir.join(SUMMARIES_DIR);
    create_dir(&summaries)?;
    let mut files = vec![POOL_FILE.to_string(), SELECTIONS_FILE.to_string()];
    for s in &run.selections {
        let name = format!("{}.txt", sanitize(&s.set_id));
        let path = summaries.join(&name);
        let mut text = s.text.clone();
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        files.push(format!("{SUMMARIES_DIR}/{name}"));
    }
    Ok(files)
}

pub fn write_report(dir: &Path, report: &EvaluationReport) -> Result<Vec<String>> {
    create_dir(dir)?;
    write_json(&dir.join(REPORT_JSON), report)?;
    let path = dir.join(REPORT_TXT);
    fs::write(&path, report.render_table()).map_err(|e| Error::io(&path, e))?;
    Ok(vec![REPORT_JSON.into(), REPORT_TXT.into()])
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}
