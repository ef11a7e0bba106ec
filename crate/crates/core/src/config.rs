use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ilp::{GenerationConfig, LengthUnit};
use crate::importance::SvrParams;
use crate::par::Execution;
use crate::reranker::{KlDirection, MaskPreset, RankParams};

/// Everything that determines a run. Serialized into every output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub budget: usize,
    pub unit: LengthUnit,
    pub lambdas: Vec<f64>,
    pub per_lambda: usize,
    pub beta: f64,
    pub timeout_ms: Option<u64>,
    pub svr_c: f64,
    pub svr_epsilon: f64,
    pub svr_epochs: usize,
    pub ranker_c: f64,
    pub ranker_epochs: usize,
    pub seed_svr: u64,
    pub seed_ranker: u64,
    pub mask: MaskPreset,
    pub embeddings: Option<PathBuf>,
    pub kl_direction: KlDirection,
    pub execution: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        let generation = GenerationConfig::default();
        let svr = SvrParams::default();
        let rank = RankParams::default();
        RunConfig {
            budget: generation.budget,
            unit: generation.unit,
            lambdas: generation.lambdas,
            per_lambda: generation.per_lambda,
            beta: generation.beta,
            timeout_ms: generation.timeout_ms,
            svr_c: svr.c,
            svr_epsilon: svr.epsilon,
            svr_epochs: svr.epochs,
            ranker_c: rank.c,
            ranker_epochs: rank.epochs,
            seed_svr: svr.seed,
            seed_ranker: rank.seed,
            mask: MaskPreset::All,
            embeddings: None,
            kl_direction: KlDirection::SummaryDocument,
            execution: Execution::Parallel,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.generation().validate()?;
        if self.svr_c.is_nan()
            || self.svr_c <= 0.0
            || self.svr_epsilon.is_nan()
            || self.svr_epsilon < 0.0
            || self.svr_epochs == 0
        {
            return Err(Error::Config("SVR needs c > 0, epsilon >= 0 and epochs > 0".into()));
        }
        if self.ranker_c.is_nan() || self.ranker_c <= 0.0 || self.ranker_epochs == 0 {
            return Err(Error::Config("ranker needs c > 0 and epochs > 0".into()));
        }
        Ok(())
    }

    pub fn generation(&self) -> GenerationConfig {
        GenerationConfig {
            budget: self.budget,
            unit: self.unit,
            beta: self.beta,
            per_lambda: self.per_lambda,
            lambdas: self.lambdas.clone(),
            timeout_ms: self.timeout_ms,
        }
    }

    pub fn svr(&self) -> SvrParams {
        SvrParams {
            c: self.svr_c,
            epsilon: self.svr_epsilon,
            epochs: self.svr_epochs,
            seed: self.seed_svr,
        }
    }

    pub fn ranker(&self) -> RankParams {
        RankParams {
            c: self.ranker_c,
            epochs: self.ranker_epochs,
            seed: self.seed_ranker,
        }
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
