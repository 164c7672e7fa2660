use rand::Rng;

use super::{Optimizer, SampleLog, StepReport};
use crate::data::{Example, Sentence};
use crate::error::Result;
use crate::model::{sample_sequence, sequence_log_prob_grad, Gradients, SeqModel};
use crate::rewards::{Reward, RewardPipeline};

/// Summed single-sample score-function gradient for one batch.
#[derive(Clone, Debug)]
pub struct PgGradient {
    /// `Σ_k r_k · ∇ log p_τ(y_k | x_k)`, not normalized.
    pub grads: Gradients,
    pub samples: Vec<Sentence>,
    pub raw_rewards: Vec<Reward>,
    pub rewards: Vec<Reward>,
    /// Sampled tokens in the batch, EOS included.
    pub tokens: usize,
}

/// Draws one sample per source at temperature `tau`, scores it with `reward`
/// (hypothesis without EOS, reference), maps the batch of rewards through
/// `transform` and accumulates the weighted log-probability gradients under
/// the same tempered distribution.
pub fn pg_gradient<R: Rng>(
    model: &SeqModel,
    batch: &[&Example],
    tau: f64,
    reward: impl Fn(&[usize], &[usize]) -> Reward,
    transform: impl FnOnce(&[Reward]) -> Vec<Reward>,
    rng: &mut R,
) -> Result<PgGradient> {
    let max_len = model.config.max_len;
    let mut samples = Vec::with_capacity(batch.len());
    let mut raw_rewards = Vec::with_capacity(batch.len());
    for ex in batch {
        let h = sample_sequence(model, &ex.source, tau, max_len, rng)?;
        raw_rewards.push(reward(h.content(), &ex.reference));
        samples.push(h.tokens);
    }
    let rewards = transform(&raw_rewards);
    let mut grads = Gradients::zeros_like(model);
    for ((ex, y), &r) in batch.iter().zip(&samples).zip(&rewards) {
        sequence_log_prob_grad(model, &ex.source, y, tau, r, &mut grads)?;
    }
    let tokens = samples.iter().map(Vec::len).sum();
    Ok(PgGradient {
        grads,
        samples,
        raw_rewards,
        rewards,
        tokens,
    })
}

/// One policy-gradient ascent step: the batch gradient is divided by the
/// number of sampled tokens. A non-finite gradient leaves the model unchanged
/// and is flagged in the report.
pub fn pg_step<R: Rng>(
    model: &mut SeqModel,
    batch: &[&Example],
    tau: f64,
    pipeline: &mut RewardPipeline,
    opt: &mut Optimizer,
    log_samples: usize,
    rng: &mut R,
) -> Result<StepReport> {
    let base = pipeline.base;
    let g = pg_gradient(
        model,
        batch,
        tau,
        |h, r| base.score(h, r),
        |raw| pipeline.transform_batch(raw),
        rng,
    )?;
    finish(model, batch, g, opt, log_samples)
}

fn finish(
    model: &mut SeqModel,
    batch: &[&Example],
    mut g: PgGradient,
    opt: &mut Optimizer,
    log_samples: usize,
) -> Result<StepReport> {
    g.grads.scale(1.0 / g.tokens.max(1) as f64);
    let finite = g.grads.all_finite();
    if finite {
        opt.ascend(model, &g.grads);
    } else {
        log::warn!("non-finite policy gradient at step {}; update skipped", model.step_count + 1);
    }
    model.step_count += 1;
    let n = g.raw_rewards.len().max(1) as f64;
    Ok(StepReport {
        step: model.step_count,
        mean_reward: g.raw_rewards.iter().sum::<f64>() / n,
        loss: -g.rewards.iter().sum::<f64>() / n,
        grad_norm: g.grads.l2_norm(),
        tokens: g.tokens,
        skipped: !finite,
        samples_logged: SampleLog::collect(batch, &g.samples, &g.raw_rewards, log_samples),
    })
}
