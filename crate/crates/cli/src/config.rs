use std::path::{Path, PathBuf};

use moral_core::curation::ChatConfig;
use moral_core::evaluation::{ContextMode, EvalConfig, RaWeights, StatementMode};
use moral_core::model::{ToyModelConfig, TrainConfig};
use moral_core::retrieval::{HttpEmbedderConfig, SplitConfig};
use moral_core::{AdapterConfig, Error, Result, RetrievalConfig};
use serde::{Deserialize, Serialize};

/// Everything a run needs. Built-in defaults are overridden by the config
/// file, which is overridden by command-line flags. The run seed replaces
/// the seeds of the nested model and training sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory of `.txt`/`.md` documents, one subdirectory per domain.
    pub corpus: PathBuf,
    /// Every file a command writes goes below this directory.
    pub out_dir: PathBuf,
    pub seed: u64,
    pub split: SplitConfig,
    pub retrieval: RetrievalConfig,
    pub curation: CurationSection,
    pub model: ToyModelConfig,
    pub train: TrainConfig,
    pub train_prompt: TrainPrompt,
    pub eval: EvalSection,
    pub embedder: EmbedderSection,
    /// Live question/answer generator; the offline stub when absent.
    pub generator: Option<ChatConfig>,
    /// Live judges; the offline stub judge when empty.
    pub judges: Vec<ChatConfig>,
    pub gradcheck: GradcheckSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: PathBuf::from("corpus"),
            out_dir: PathBuf::from("runs/default"),
            seed: 0,
            split: SplitConfig::default(),
            retrieval: RetrievalConfig::default(),
            curation: CurationSection::default(),
            model: ToyModelConfig::default(),
            train: TrainConfig::default(),
            train_prompt: TrainPrompt::default(),
            eval: EvalSection::default(),
            embedder: EmbedderSection::default(),
            generator: None,
            judges: Vec::new(),
            gradcheck: GradcheckSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationSection {
    pub train_fraction: f64,
    pub max_in_flight: usize,
}

impl Default for CurationSection {
    fn default() -> Self {
        CurationSection {
            train_fraction: 0.8,
            max_in_flight: 4,
        }
    }
}

/// How a record becomes a training prompt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainPrompt {
    /// The closed-book evaluation prompt around the question.
    #[default]
    ClosedBook,
    /// The open-book evaluation prompt with the golden chunk as context.
    OpenBook,
    /// The bare question.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub context_mode: ContextMode,
    pub ra_weights: RaWeights,
    pub statement_mode: StatementMode,
    pub refusal_phrases: Vec<String>,
    pub qr_m: usize,
    pub max_in_flight: usize,
    pub max_new_tokens: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalConfig::default();
        EvalSection {
            context_mode: e.context_mode,
            ra_weights: e.ra_weights,
            statement_mode: e.statement_mode,
            refusal_phrases: e.refusal_phrases,
            qr_m: e.qr_m,
            max_in_flight: e.max_in_flight,
            max_new_tokens: 48,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderSection {
    #[default]
    Trigram,
    Http(HttpEmbedderConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub epsilon: f64,
    pub threshold: f64,
    pub d_model: usize,
    pub d_ff: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub n_experts: usize,
    pub top_k: usize,
    pub rank: usize,
    pub alpha: f64,
    /// Scale of the random values written into the adapters before the
    /// check, so every expert factor carries signal.
    pub perturbation: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        GradcheckSection {
            epsilon: 1e-5,
            threshold: 1e-5,
            d_model: 4,
            d_ff: 8,
            n_layers: 2,
            n_heads: 2,
            n_experts: 8,
            top_k: 2,
            rank: 2,
            alpha: 4.0,
            perturbation: 0.5,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }

    /// Propagates the run seed and validates every section.
    pub fn finish(mut self) -> Result<Self> {
        self.model.seed = self.seed;
        self.train.seed = self.seed;
        self.split.validate()?;
        self.retrieval.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.eval_config().validate()?;
        Ok(self)
    }

    pub fn adapter(&self) -> AdapterConfig {
        self.train.adapter()
    }

    pub fn curation_config(&self) -> moral_core::curation::CurationConfig {
        moral_core::curation::CurationConfig {
            split: self.split.clone(),
            retrieval: self.retrieval,
            seed: self.seed,
            train_fraction: self.curation.train_fraction,
            max_in_flight: self.curation.max_in_flight,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            retrieval: self.retrieval,
            context_mode: self.eval.context_mode,
            ra_weights: self.eval.ra_weights,
            statement_mode: self.eval.statement_mode,
            refusal_phrases: self.eval.refusal_phrases.clone(),
            qr_m: self.eval.qr_m,
            max_in_flight: self.eval.max_in_flight,
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out_dir.join("data")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.out_dir.join("model")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.out_dir.join("reports")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_reject_unknown_keys() {
        let d = RunConfig::default();
        let text = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), d);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 3}"#).is_err());
        let partial: RunConfig = serde_json::from_str(r#"{"seed": 3, "retrieval": {"theta": 0.5}}"#).unwrap();
        assert_eq!(
            (partial.seed, partial.retrieval.theta, partial.train.lr),
            (3, 0.5, 1e-4)
        );
    }

    #[test]
    fn seed_reaches_nested_sections() {
        let c = RunConfig {
            seed: 9,
            ..RunConfig::default()
        }
        .finish()
        .unwrap();
        assert_eq!((c.model.seed, c.train.seed), (9, 9));
        assert_eq!(RunConfig::default().retrieval.theta, 0.87);
    }

    #[test]
    fn invalid_theta_is_a_config_error() {
        let c = RunConfig {
            retrieval: RetrievalConfig { theta: 1.5 },
            ..RunConfig::default()
        };
        assert!(matches!(c.finish(), Err(Error::Config(_))));
    }
}
