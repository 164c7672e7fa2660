//! Experiment orchestration behind the command-line tool: configuration,
//! data generation, pretraining, multi-seed reward training, evaluation and
//! report assembly.

mod commands;
mod report;

pub use commands::{
    cmd_evaluate, cmd_gen_data, cmd_pretrain, cmd_rl, load_split, load_vocab, EvaluationReport, RunSummary,
    SeedResult, Split,
};
pub use report::{cmd_report, mean_std, MeanStd, Report};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{TaskSpec, TransformKind};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::rewards::{BaseReward, RewardTransform};
use crate::training::{Algorithm, OptimizerKind, TrainConfig};

/// Which task a run adapts to and is evaluated on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// The pretraining task.
    In,
    /// The shifted task.
    #[default]
    Cross,
}

impl Domain {
    pub fn prefix(self) -> &'static str {
        match self {
            Domain::In => "in",
            Domain::Cross => "cross",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding the generated corpora and vocabulary.
    pub dir: PathBuf,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub seed: u64,
    /// Share of the pretraining set drawn from the cross-domain task.
    pub pretrain_mix: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: PathBuf::from("data"),
            train_size: 4000,
            dev_size: 400,
            test_size: 400,
            seed: 7,
            pretrain_mix: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Strictly ascending beam sizes.
    pub beam_sizes: Vec<usize>,
    pub split: Split,
    pub domain: Domain,
    /// Dev examples decoded for the learning curve during training.
    pub dev_subset: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            beam_sizes: vec![1, 5, 50],
            split: Split::Test,
            domain: Domain::Cross,
            dev_subset: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Name used in reports; derived from the training settings when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seeds: vec![42, 8, 64],
            out_dir: PathBuf::from("runs"),
            label: None,
        }
    }
}

/// Everything one invocation needs, read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Pretraining task.
    pub task: TaskSpec,
    /// Shifted task used for cross-domain adaptation.
    pub cross_task: TaskSpec,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let task = TaskSpec {
            vocab_size: 12,
            length_range: (3, 7),
            mapping_seed: 1,
            transform: TransformKind::SubstitutionCipher,
            remap: 0,
            remap_seed: 0,
        };
        let cross_task = TaskSpec {
            remap: 4,
            remap_seed: 2,
            ..task.clone()
        };
        ExperimentConfig {
            task,
            cross_task,
            data: DataConfig::default(),
            model: ModelConfig {
                vocab_size: 0,
                layers: 2,
                model_dim: 32,
                heads: 4,
                ff_dim: 64,
                dropout: 0.1,
                tied_embeddings: true,
                max_len: 10,
                label_smoothing: 0.1,
            },
            pretrain: TrainConfig {
                algorithm: Algorithm::CePretrain,
                learning_rate: 1e-3,
                optimizer: OptimizerKind::Adam,
                max_steps: 2000,
                eval_every: 100,
                token_budget: 200,
                ..TrainConfig::default()
            },
            train: TrainConfig {
                algorithm: Algorithm::Pg,
                learning_rate: 1e-4,
                optimizer: OptimizerKind::Adam,
                reward: BaseReward::Bleu,
                transform: RewardTransform::None,
                max_steps: 500,
                eval_every: 50,
                token_budget: 200,
                ..TrainConfig::default()
            },
            eval: EvalConfig::default(),
            run: RunConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a TOML document. Keys it leaves out, at any depth, keep the
    /// values of [`ExperimentConfig::default`].
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg_err = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        let user: toml::Table = toml::from_str(text).map_err(|e| cfg_err(&e))?;
        let mut merged = toml::Table::try_from(ExperimentConfig::default()).map_err(|e| cfg_err(&e))?;
        merge(&mut merged, user);
        let cfg: ExperimentConfig = toml::Value::Table(merged).try_into().map_err(|e| cfg_err(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate_for_model(self.model.max_len)?;
        self.cross_task.validate_for_model(self.model.max_len)?;
        if self.task.vocab_size != self.cross_task.vocab_size {
            return Err(Error::Config("task and cross_task must share vocab_size".into()));
        }
        if !(0.0..1.0).contains(&self.data.pretrain_mix) {
            return Err(Error::Config(format!(
                "data.pretrain_mix must be in [0, 1), got {}",
                self.data.pretrain_mix
            )));
        }
        if self.data.train_size == 0 || self.data.dev_size == 0 || self.data.test_size == 0 {
            return Err(Error::Config("data split sizes must be positive".into()));
        }
        if self.pretrain.algorithm != Algorithm::CePretrain {
            return Err(Error::Config("pretrain.algorithm must be ce_pretrain".into()));
        }
        if self.train.algorithm == Algorithm::CePretrain {
            return Err(Error::Config("train.algorithm must be a fine-tuning algorithm".into()));
        }
        self.pretrain.validate()?;
        self.train.validate()?;
        if self.run.seeds.is_empty() {
            return Err(Error::Config("run.seeds must not be empty".into()));
        }
        let ks = &self.eval.beam_sizes;
        if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "eval.beam_sizes must be positive and strictly ascending, got {ks:?}"
            )));
        }
        if self.eval.dev_subset == 0 {
            return Err(Error::Config("eval.dev_subset must be positive".into()));
        }
        Ok(())
    }

    /// Report label for the configured training run.
    pub fn label(&self) -> String {
        if let Some(l) = &self.run.label {
            return l.clone();
        }
        let t = &self.train;
        let name = match t.algorithm {
            Algorithm::CePretrain => "pretrain".to_string(),
            Algorithm::Pg => {
                let mut s = format!("pg-{}", enum_name(&t.reward));
                if t.transform != RewardTransform::None {
                    s = format!("{s}-{}", enum_name(&t.transform));
                }
                format!("{s}-tau{}", t.tau)
            }
            Algorithm::Mrt => format!("mrt-n{}-a{}", t.n_samples, t.mrt_alpha),
            Algorithm::SelfTrain => "self-train".into(),
            Algorithm::FineTune => "fine-tune".into(),
        };
        format!("{name}-lr{}", t.learning_rate)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn enum_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}
