//! Update rules and training loops: cross-entropy pretraining, single-sample
//! policy gradient, minimum risk training, self-training and supervised
//! fine-tuning, plus an exact enumeration oracle for small policies.

mod mrt;
mod optim;
mod oracle;
mod pg;
mod supervised;

pub use mrt::{mrt_risk, mrt_sample_set, mrt_step};
pub use optim::{Optimizer, OptimizerKind, PlateauScheduler};
pub use oracle::{enumerate_outputs, exact_expected_reward, exact_pg_gradient, ENUMERATION_LIMIT};
pub use pg::{pg_gradient, pg_step, PgGradient};
pub use supervised::{fine_tune_step, self_train_step};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BatchStream, EncodedCorpus, Example, Sentence};
use crate::diagnostics::evaluate;
use crate::error::{Error, Result};
use crate::model::SeqModel;
use crate::rewards::{BaseReward, Reward, RewardPipeline, RewardTransform};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    CePretrain,
    Pg,
    Mrt,
    SelfTrain,
    FineTune,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    /// Optimizer for everything except pretraining, which always uses Adam.
    pub optimizer: OptimizerKind,
    pub tau: f64,
    pub reward: BaseReward,
    pub transform: RewardTransform,
    pub n_samples: usize,
    pub mrt_alpha: f64,
    /// Maximum target tokens (EOS included) per batch.
    pub token_budget: usize,
    pub max_steps: u64,
    pub seed: u64,
    pub eval_every: u64,
    pub patience: usize,
    pub decrease_factor: f64,
    pub min_learning_rate: f64,
    /// Sampled outputs copied into each step report.
    pub log_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::CePretrain,
            learning_rate: 3e-4,
            optimizer: OptimizerKind::Sgd,
            tau: 1.0,
            reward: BaseReward::Bleu,
            transform: RewardTransform::None,
            n_samples: 1,
            mrt_alpha: 0.005,
            token_budget: 256,
            max_steps: 1000,
            seed: 42,
            eval_every: 100,
            patience: 5,
            decrease_factor: 0.7,
            min_learning_rate: 2e-8,
            log_samples: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.mrt_alpha > 0.0 && self.mrt_alpha.is_finite()) {
            return bad(format!("mrt_alpha must be positive, got {}", self.mrt_alpha));
        }
        match self.algorithm {
            Algorithm::Pg if self.n_samples != 1 => {
                return bad(format!("pg draws exactly 1 sample, n_samples = {}", self.n_samples))
            }
            Algorithm::Mrt if self.n_samples < 2 => {
                return bad(format!("mrt needs n_samples >= 2, got {}", self.n_samples))
            }
            _ => {}
        }
        if self.token_budget == 0 || self.eval_every == 0 {
            return bad("token_budget and eval_every must be positive".into());
        }
        if !(self.decrease_factor > 0.0 && self.decrease_factor <= 1.0) {
            return bad(format!("decrease_factor must be in (0, 1], got {}", self.decrease_factor));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleLog {
    pub source: Sentence,
    pub sample: Sentence,
    pub reward: Reward,
}

impl SampleLog {
    pub(crate) fn collect(
        batch: &[&Example],
        samples: &[Sentence],
        rewards: &[Reward],
        limit: usize,
    ) -> Option<Vec<SampleLog>> {
        (limit > 0).then(|| {
            batch
                .iter()
                .zip(samples)
                .zip(rewards)
                .take(limit)
                .map(|((ex, s), &reward)| SampleLog {
                    source: ex.source.clone(),
                    sample: s.clone(),
                    reward,
                })
                .collect()
        })
    }
}

/// Outcome of one update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    /// Mean base reward of the sampled outputs (0 for supervised steps).
    pub mean_reward: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub tokens: usize,
    pub skipped: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub samples_logged: Option<Vec<SampleLog>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    pub split: String,
    pub metric: String,
    pub beam: usize,
    pub value: f64,
    pub accuracy: f64,
    pub learning_rate: f64,
}

/// One line of a metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Step(StepReport),
    Eval(EvalRecord),
}

pub struct TrainOutcome {
    /// Best-dev model for pretraining, final model otherwise.
    pub model: SeqModel,
    pub best_dev: f64,
    pub evals: Vec<EvalRecord>,
}

/// Runs `cfg.max_steps` updates of `cfg.algorithm`, evaluating greedy dev
/// BLEU at step 0, every `eval_every` steps and after the last step. Every
/// report and evaluation is passed to `sink` in order.
pub fn train(
    mut model: SeqModel,
    train: &EncodedCorpus,
    dev: &EncodedCorpus,
    cfg: &TrainConfig,
    sink: &mut dyn FnMut(&LogRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let pretraining = cfg.algorithm == Algorithm::CePretrain;
    let mut opt = if pretraining {
        Optimizer::adam(cfg.learning_rate)
    } else {
        Optimizer::new(cfg.optimizer, cfg.learning_rate)
    };
    let mut scheduler = PlateauScheduler::new(cfg.patience, cfg.decrease_factor, cfg.min_learning_rate);
    let mut pipeline = RewardPipeline::new(cfg.reward, cfg.transform);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sample_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);
    let mut stream = BatchStream::new(train, cfg.token_budget, cfg.seed)?;

    let mut evals = Vec::new();
    let mut eval = |model: &SeqModel, step: u64, lr: f64, sink: &mut dyn FnMut(&LogRecord) -> Result<()>| {
        let e = evaluate(model, dev, 1)?;
        let rec = EvalRecord {
            step,
            split: "dev".into(),
            metric: "bleu".into(),
            beam: 1,
            value: e.bleu,
            accuracy: e.accuracy,
            learning_rate: lr,
        };
        sink(&LogRecord::Eval(rec.clone()))?;
        evals.push(rec);
        Ok::<f64, Error>(e.bleu)
    };

    let start = model.step_count;
    let first = eval(&model, start, opt.learning_rate(), sink)?;
    let mut best_dev = first;
    let mut best = pretraining.then(|| model.clone());
    if pretraining {
        scheduler.observe(first, &mut opt);
    }
    for i in 1..=cfg.max_steps {
        let idx = stream.next().expect("batch stream is endless");
        let batch: Vec<&Example> = idx.iter().map(|&j| &train.examples[j]).collect();
        let report = match cfg.algorithm {
            Algorithm::CePretrain | Algorithm::FineTune => {
                fine_tune_step(&mut model, &batch, &mut opt, Some(&mut dropout_rng))?
            }
            Algorithm::SelfTrain => self_train_step(&mut model, &batch, &mut opt, Some(&mut dropout_rng))?,
            Algorithm::Pg => pg_step(
                &mut model,
                &batch,
                cfg.tau,
                &mut pipeline,
                &mut opt,
                cfg.log_samples,
                &mut sample_rng,
            )?,
            Algorithm::Mrt => mrt_step(
                &mut model,
                &batch,
                cfg.n_samples,
                cfg.mrt_alpha,
                cfg.reward,
                &mut opt,
                cfg.log_samples,
                &mut sample_rng,
            )?,
        };
        sink(&LogRecord::Step(report))?;
        if i % cfg.eval_every == 0 || i == cfg.max_steps {
            let value = eval(&model, model.step_count, opt.learning_rate(), sink)?;
            if pretraining && scheduler.observe(value, &mut opt) {
                best = Some(model.clone());
            }
            best_dev = best_dev.max(value);
            if !pretraining {
                best_dev = value;
            }
        }
    }
    Ok(TrainOutcome {
        model: best.unwrap_or(model),
        best_dev,
        evals,
    })
}
