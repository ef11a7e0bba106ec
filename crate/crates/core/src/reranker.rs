//! Pairwise linear reranker and divergence baselines.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    check_schema, fit_scaler, SetContext, SummaryFeatures, SummaryView, EMBEDDING_DIMS, FEATURE_DIM, FEATURE_SCHEMA,
    SENTENCE_LEVEL_DIM, WORD_LEVEL_DIM,
};
use crate::ilp::CandidateSummary;
use crate::importance::dot;
use crate::scaling::MinMaxScaler;

/// Minimum ROUGE-2 gap for two candidates to form a training pair.
pub const PAIR_THRESHOLD: f64 = 1e-6;

/// Ablation presets over the three feature blocks and the embedding dims.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskPreset {
    #[default]
    All,
    NoWord,
    NoSentence,
    NoSummary,
    NoEmbedding,
}

impl MaskPreset {
    pub const ALL: [MaskPreset; 5] = [
        MaskPreset::All,
        MaskPreset::NoWord,
        MaskPreset::NoSentence,
        MaskPreset::NoSummary,
        MaskPreset::NoEmbedding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MaskPreset::All => "all",
            MaskPreset::NoWord => "no-word",
            MaskPreset::NoSentence => "no-sentence",
            MaskPreset::NoSummary => "no-summary",
            MaskPreset::NoEmbedding => "no-embedding",
        }
    }

    /// Row label used in ablation tables.
    pub fn label(self) -> &'static str {
        match self {
            MaskPreset::All => "All features",
            MaskPreset::NoWord => "w/o word-level",
            MaskPreset::NoSentence => "w/o sentence-level",
            MaskPreset::NoSummary => "w/o summary-level",
            MaskPreset::NoEmbedding => "w/o embedding",
        }
    }

    pub fn mask(self) -> FeatureMask {
        let mut on = vec![true; FEATURE_DIM];
        let word = 0..WORD_LEVEL_DIM;
        let sentence = WORD_LEVEL_DIM..WORD_LEVEL_DIM + SENTENCE_LEVEL_DIM;
        let summary = WORD_LEVEL_DIM + SENTENCE_LEVEL_DIM..FEATURE_DIM;
        match self {
            MaskPreset::All => {}
            MaskPreset::NoWord => on[word].fill(false),
            MaskPreset::NoSentence => on[sentence].fill(false),
            MaskPreset::NoSummary => on[summary].fill(false),
            MaskPreset::NoEmbedding => EMBEDDING_DIMS.iter().for_each(|&k| on[k] = false),
        }
        FeatureMask(on)
    }
}

impl fmt::Display for MaskPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        MaskPreset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown mask `{s}` (all|no-word|no-sentence|no-summary|no-embedding)"
            ))
        })
    }
}

/// `true` keeps a dimension; disabled dimensions score as 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureMask(pub Vec<bool>);

impl FeatureMask {
    pub fn apply(&self, x: &mut [f64]) {
        for (v, &on) in x.iter_mut().zip(&self.0) {
            if !on {
                *v = 0.0;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingPair {
    pub query_id: String,
    pub better: Vec<f64>,
    pub worse: Vec<f64>,
    pub margin: f64,
}

/// All ordered pairs within each set whose targets differ by more than
/// [`PAIR_THRESHOLD`]. Sets are visited in key order, candidates in pool order.
pub fn build_pairs(pools: &BTreeMap<String, Vec<(Vec<f64>, f64)>>) -> Vec<RankingPair> {
    let mut pairs = Vec::new();
    for (set_id, items) in pools {
        if items.len() < 2 {
            log::warn!("set {set_id}: fewer than 2 candidates, no ranking pairs");
            continue;
        }
        for (a, (fa, ra)) in items.iter().enumerate() {
            for (b, (fb, rb)) in items.iter().enumerate() {
                if a != b && ra - rb > PAIR_THRESHOLD {
                    pairs.push(RankingPair {
                        query_id: set_id.clone(),
                        better: fa.clone(),
                        worse: fb.clone(),
                        margin: ra - rb,
                    });
                }
            }
        }
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankParams {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for RankParams {
    fn default() -> Self {
        RankParams {
            c: 1.0,
            epochs: 100,
            seed: 42,
        }
    }
}

/// Minimizes `1/2 |w|^2 + c * sum max(0, 1 - w.(better - worse))`.
///
/// Dual coordinate descent: every epoch visits the pairs in a freshly
/// shuffled order and solves each box-constrained dual coordinate exactly.
/// Stops early once no coordinate violates optimality by more than
/// [`DUAL_TOLERANCE`].
pub fn train_ranksvm(pairs: &[RankingPair], params: &RankParams) -> Result<Vec<f64>> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::data("no ranking pairs to train on"))?;
    if params.c.is_nan() || params.c <= 0.0 || params.epochs == 0 {
        return Err(Error::Config(format!("invalid ranker parameters {params:?}")));
    }
    let dim = first.better.len();
    let mut diffs = Vec::with_capacity(pairs.len());
    for p in pairs {
        for got in [p.better.len(), p.worse.len()] {
            if got != dim {
                return Err(Error::DimensionMismatch { expected: dim, got });
            }
        }
        let d: Vec<f64> = p.better.iter().zip(&p.worse).map(|(a, b)| a - b).collect();
        if d.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("ranking pair features"));
        }
        diffs.push(d);
    }
    let sq_norms: Vec<f64> = diffs.iter().map(|d| dot(d, d)).collect();
    let mut alpha = vec![0.0; diffs.len()];
    let mut w = vec![0.0; dim];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        let mut worst = 0.0f64;
        for &i in &order {
            if sq_norms[i] == 0.0 {
                continue;
            }
            let g = dot(&w, &diffs[i]) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == params.c {
                g.max(0.0)
            } else {
                g
            };
            worst = worst.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / sq_norms[i]).clamp(0.0, params.c);
                let step = alpha[i] - old;
                for (wk, dk) in w.iter_mut().zip(&diffs[i]) {
                    *wk += step * dk;
                }
            }
        }
        if worst < DUAL_TOLERANCE {
            break;
        }
    }
    Ok(w)
}

/// Optimality tolerance of the ranker's dual solver.
pub const DUAL_TOLERANCE: f64 = 1e-6;

/// Fraction of pairs with `w.better > w.worse`.
pub fn pairwise_accuracy(weights: &[f64], pairs: &[RankingPair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let correct = pairs
        .iter()
        .filter(|p| dot(weights, &p.better) > dot(weights, &p.worse))
        .count();
    correct as f64 / pairs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub params: RankParams,
    pub mask: MaskPreset,
    pub sets: usize,
    pub candidates: usize,
    pub pairs: usize,
    pub training_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankerModel {
    pub schema_id: String,
    pub weights: Vec<f64>,
    pub scaler: MinMaxScaler,
    pub feature_mask: FeatureMask,
    pub metadata: TrainingMetadata,
}

/// Raw features and ROUGE-2 targets of one training pool.
pub type TrainingPool = (String, Vec<(SummaryFeatures, f64)>);

impl RankerModel {
    /// Fits the scaler on every raw training vector, then trains on the
    /// scaled and masked pairs.
    pub fn train(pools: &[TrainingPool], mask: MaskPreset, params: &RankParams) -> Result<RankerModel> {
        let all: Vec<SummaryFeatures> = pools
            .iter()
            .flat_map(|(_, v)| v.iter().map(|(f, _)| f.clone()))
            .collect();
        for f in &all {
            check_schema(f)?;
        }
        let scaler = fit_scaler(&all)?;
        let mut model = RankerModel {
            schema_id: FEATURE_SCHEMA.to_string(),
            weights: vec![0.0; FEATURE_DIM],
            scaler,
            feature_mask: mask.mask(),
            metadata: TrainingMetadata {
                params: *params,
                mask,
                sets: pools.len(),
                candidates: all.len(),
                pairs: 0,
                training_accuracy: 0.0,
            },
        };
        let mut grouped = BTreeMap::new();
        for (set_id, items) in pools {
            let rows = items
                .iter()
                .map(|(f, r)| Ok((model.transform(f)?, *r)))
                .collect::<Result<Vec<_>>>()?;
            if grouped.insert(set_id.clone(), rows).is_some() {
                return Err(Error::data(format!("duplicate training pool for set `{set_id}`")));
            }
        }
        let pairs = build_pairs(&grouped);
        let mut weights = train_ranksvm(&pairs, params)?;
        model.feature_mask.apply(&mut weights);
        model.metadata.pairs = pairs.len();
        model.metadata.training_accuracy = pairwise_accuracy(&weights, &pairs);
        model.weights = weights;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_id != FEATURE_SCHEMA {
            return Err(Error::data(format!(
                "ranker schema `{}` does not match `{FEATURE_SCHEMA}`",
                self.schema_id
            )));
        }
        for got in [self.weights.len(), self.scaler.dim(), self.feature_mask.0.len()] {
            if got != FEATURE_DIM {
                return Err(Error::DimensionMismatch {
                    expected: FEATURE_DIM,
                    got,
                });
            }
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("ranker weights"));
        }
        Ok(())
    }

    /// Scaled and masked feature vector.
    pub fn transform(&self, f: &SummaryFeatures) -> Result<Vec<f64>> {
        check_schema(f)?;
        let mut x = self.scaler.transform(&f.to_vec())?;
        self.feature_mask.apply(&mut x);
        Ok(x)
    }

    pub fn score(&self, f: &SummaryFeatures) -> Result<f64> {
        Ok(dot(&self.weights, &self.transform(f)?))
    }
}

/// Index of the highest score; ties go to the smaller lambda, then the
/// smaller iteration, then the earlier pool position.
pub fn select_best(pool: &[(CandidateSummary, f64)]) -> Result<usize> {
    if pool.is_empty() {
        return Err(Error::data("cannot select from an empty pool"));
    }
    if pool.iter().any(|(_, s)| s.is_nan()) {
        return Err(Error::NonFinite("candidate score"));
    }
    let mut best = 0;
    for (i, (c, s)) in pool.iter().enumerate().skip(1) {
        let (b, bs) = &pool[best];
        let better = match s.total_cmp(bs) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => (c.lambda, c.iteration) < (b.lambda, b.iteration),
        };
        if better {
            best = i;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceMetric {
    #[default]
    Js,
    Kl,
}

/// Argument order of the KL baseline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlDirection {
    #[default]
    SummaryDocument,
    DocumentSummary,
}

impl FromStr for KlDirection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "summary-document" => Ok(KlDirection::SummaryDocument),
            "document-summary" => Ok(KlDirection::DocumentSummary),
            _ => Err(Error::Config(format!(
                "unknown KL direction `{s}` (summary-document|document-summary)"
            ))),
        }
    }
}

/// Pool indices with their divergence to the documents, ascending and stable.
pub fn divergence_rank(
    pool: &[CandidateSummary],
    ctx: &SetContext<'_>,
    metric: DivergenceMetric,
    direction: KlDirection,
) -> Result<Vec<(usize, f64)>> {
    let mut ranked = pool
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let view = SummaryView::resolve(c, ctx.document_set())?;
            let d = match metric {
                DivergenceMetric::Js => ctx.js_to_documents(&view),
                DivergenceMetric::Kl => ctx.kl_to_documents(&view, direction == KlDirection::DocumentSummary),
            };
            Ok((i, d))
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusRecord, DocumentRecord, DocumentSet, SentenceRecord};
    use crate::ilp::CandidateSource;
    use rand::Rng;

    fn pools(sets: &[&[f64]]) -> BTreeMap<String, Vec<(Vec<f64>, f64)>> {
        sets.iter()
            .enumerate()
            .map(|(s, scores)| (format!("s{s}"), scores.iter().map(|&r| (vec![r], r)).collect()))
            .collect()
    }

    #[test]
    fn pair_counts() {
        assert_eq!(build_pairs(&pools(&[&[0.1, 0.2, 0.3]])).len(), 3);
        assert!(build_pairs(&pools(&[&[0.2, 0.2, 0.2]])).is_empty());
        let two = build_pairs(&pools(&[&[0.1, 0.2], &[0.5, 0.3]]));
        assert_eq!(two.len(), 2);
        assert!(two.iter().all(|p| p.better[0] > p.worse[0]));
        assert_ne!(two[0].query_id, two[1].query_id);
        assert!(build_pairs(&pools(&[&[0.1]])).is_empty());
    }

    fn planted(rng: &mut ChaCha8Rng, w: &[f64], sets: usize, per: usize) -> BTreeMap<String, Vec<(Vec<f64>, f64)>> {
        (0..sets)
            .map(|s| {
                let items = (0..per)
                    .map(|_| {
                        let x: Vec<f64> = (0..w.len()).map(|_| rng.random::<f64>()).collect();
                        let r = dot(w, &x);
                        (x, r)
                    })
                    .collect();
                (format!("q{s:02}"), items)
            })
            .collect()
    }

    #[test]
    fn separable_training_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pairs = build_pairs(&planted(&mut rng, &w, 5, 15));
        // c = 1 trades a few near-tied pairs for margin; a harder margin separates them
        let params = RankParams {
            c: 10.0,
            ..Default::default()
        };
        let learned = train_ranksvm(&pairs, &params).unwrap();
        let acc = pairwise_accuracy(&learned, &pairs);
        assert!(acc >= 0.99, "{acc}");
    }

    #[test]
    fn single_pair_geometry() {
        let pair = RankingPair {
            query_id: "q".into(),
            better: vec![1.0, 0.5, 0.0],
            worse: vec![0.0, 1.0, 0.2],
            margin: 0.1,
        };
        let w = train_ranksvm(std::slice::from_ref(&pair), &RankParams::default()).unwrap();
        assert!(dot(&w, &pair.better) > dot(&w, &pair.worse));
        assert!(train_ranksvm(&[], &RankParams::default()).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs = build_pairs(&planted(&mut rng, &[1.0, -2.0, 0.5], 3, 6));
        let p = RankParams::default();
        let a = train_ranksvm(&pairs, &p).unwrap();
        let b = train_ranksvm(&pairs, &p).unwrap();
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    fn cand(lambda: f64, iteration: usize) -> CandidateSummary {
        CandidateSummary {
            set_id: "s".into(),
            lambda,
            iteration,
            sentence_ids: vec![0],
            text: String::new(),
            source: CandidateSource::Ilp,
            system_id: None,
        }
    }

    #[test]
    fn select_best_tie_rule() {
        let pool = vec![(cand(0.0, 1), 0.2), (cand(0.4, 1), 0.9), (cand(0.1, 3), 0.9)];
        assert_eq!(select_best(&pool).unwrap(), 2);
        let mut rev = pool.clone();
        rev.reverse();
        assert_eq!(rev[select_best(&rev).unwrap()].0, cand(0.1, 3));
        assert_eq!(select_best(&pool[..1]).unwrap(), 0);
        assert!(select_best(&[]).is_err());
    }

    fn features(v: Vec<f64>) -> SummaryFeatures {
        SummaryFeatures::from_vec(&v).unwrap()
    }

    fn random_pools(seed: u64) -> Vec<TrainingPool> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..4)
            .map(|s| {
                let items = (0..6)
                    .map(|_| {
                        let x: Vec<f64> = (0..FEATURE_DIM).map(|_| rng.random::<f64>() * 10.0).collect();
                        let r = x[0] - x[12] + 0.5 * x[18];
                        (features(x), r)
                    })
                    .collect();
                (format!("s{s}"), items)
            })
            .collect()
    }

    #[test]
    fn masking_zeroes_weights_and_scores() {
        let pools = random_pools(1);
        let m = RankerModel::train(&pools, MaskPreset::NoSentence, &RankParams::default()).unwrap();
        let sentence = WORD_LEVEL_DIM..WORD_LEVEL_DIM + SENTENCE_LEVEL_DIM;
        assert!(m.weights[sentence].iter().all(|&w| w == 0.0));
        let mut all_off = m.clone();
        all_off.feature_mask = FeatureMask(vec![false; FEATURE_DIM]);
        assert_eq!(all_off.score(&pools[0].1[0].0).unwrap(), 0.0);
        let mut zero = m.clone();
        zero.weights = vec![0.0; FEATURE_DIM];
        assert_eq!(zero.score(&pools[0].1[0].0).unwrap(), 0.0);
    }

    #[test]
    fn positive_column_scaling_leaves_scores_unchanged() {
        let pools = random_pools(2);
        let m = RankerModel::train(&pools, MaskPreset::All, &RankParams::default()).unwrap();
        let stretched: Vec<TrainingPool> = pools
            .iter()
            .map(|(id, items)| {
                let items = items
                    .iter()
                    .map(|(f, r)| {
                        let mut v = f.to_vec();
                        v[3] *= 4.0;
                        (features(v), *r)
                    })
                    .collect();
                (id.clone(), items)
            })
            .collect();
        let m2 = RankerModel::train(&stretched, MaskPreset::All, &RankParams::default()).unwrap();
        for ((_, a), (_, b)) in pools.iter().zip(&stretched) {
            for ((fa, _), (fb, _)) in a.iter().zip(b) {
                let (ta, tb) = (m.transform(fa).unwrap(), m2.transform(fb).unwrap());
                for (x, y) in ta.iter().zip(&tb) {
                    assert!((x - y).abs() < 1e-12);
                }
                assert!((m.score(fa).unwrap() - m2.score(fb).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn score_is_linear_on_scaled_vectors() {
        let m = RankerModel::train(&random_pools(3), MaskPreset::All, &RankParams::default()).unwrap();
        let a: Vec<f64> = (0..FEATURE_DIM).map(|k| k as f64 / FEATURE_DIM as f64).collect();
        let b: Vec<f64> = (0..FEATURE_DIM).map(|k| 1.0 - k as f64 / 40.0).collect();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.3 * x + 0.7 * y).collect();
        let s = |x: &[f64]| dot(&m.weights, x);
        assert!((s(&mix) - (0.3 * s(&a) + 0.7 * s(&b))).abs() < 1e-9);
    }

    #[test]
    fn model_json_round_trip() {
        let m = RankerModel::train(&random_pools(4), MaskPreset::NoEmbedding, &RankParams::default()).unwrap();
        let back: RankerModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        back.validate().unwrap();
    }

    #[test]
    fn mask_presets() {
        assert_eq!(MaskPreset::All.mask().0.iter().filter(|&&b| b).count(), FEATURE_DIM);
        assert_eq!(
            MaskPreset::NoWord.mask().0.iter().filter(|&&b| !b).count(),
            WORD_LEVEL_DIM
        );
        assert_eq!(MaskPreset::NoEmbedding.mask().0.iter().filter(|&&b| !b).count(), 2);
        for p in MaskPreset::ALL {
            assert_eq!(p.name().parse::<MaskPreset>().unwrap(), p);
        }
        assert!("none".parse::<MaskPreset>().is_err());
    }

    fn set() -> DocumentSet {
        CorpusRecord {
            set_id: "s".into(),
            documents: vec![DocumentRecord {
                doc_id: 0,
                sentences: ["Floods hit the valley.", "Crews rescue families."]
                    .iter()
                    .map(|t| SentenceRecord {
                        text: t.to_string(),
                        pos: None,
                        ner: None,
                        parse_depth: None,
                    })
                    .collect(),
            }],
            references: None,
        }
        .into_cluster()
        .unwrap()
        .docs
    }

    #[test]
    fn divergence_ranking() {
        let ds = set();
        let ctx = SetContext::new(&ds, None);
        let mut disjoint = cand(0.0, 1);
        disjoint.source = CandidateSource::External;
        disjoint.system_id = Some("x".into());
        disjoint.text = "Zebras juggle quietly.".into();
        let mut whole = cand(0.0, 2);
        whole.sentence_ids = vec![0, 1];
        let pool = vec![disjoint, cand(0.0, 3), whole];
        for metric in [DivergenceMetric::Js, DivergenceMetric::Kl] {
            for dir in [KlDirection::SummaryDocument, KlDirection::DocumentSummary] {
                let r = divergence_rank(&pool, &ctx, metric, dir).unwrap();
                assert_eq!(r[0].0, 2);
                assert_eq!(r[2].0, 0);
            }
        }
        assert_eq!(
            divergence_rank(&pool, &ctx, DivergenceMetric::Js, KlDirection::default()).unwrap()[0].1,
            0.0
        );
    }
}
