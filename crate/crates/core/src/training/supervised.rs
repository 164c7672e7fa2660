use rand_chacha::ChaCha8Rng;

use super::{Optimizer, StepReport};
use crate::data::Example;
use crate::error::Result;
use crate::model::{ce_loss_and_grads, greedy_decode, SeqModel};

/// One label-smoothed cross-entropy descent step on the true references.
pub fn fine_tune_step(
    model: &mut SeqModel,
    batch: &[&Example],
    opt: &mut Optimizer,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<StepReport> {
    let (loss, grads) = ce_loss_and_grads(model, batch, model.config.label_smoothing, dropout_rng)?;
    opt.descend(model, &grads);
    model.step_count += 1;
    Ok(StepReport {
        step: model.step_count,
        mean_reward: 0.0,
        loss,
        grad_norm: grads.l2_norm(),
        tokens: batch.iter().map(|e| e.target_len()).sum(),
        skipped: false,
        samples_logged: None,
    })
}

/// Greedy-decodes every source and takes a cross-entropy step towards the
/// decoded outputs. Outputs that hit the length limit without EOS are left
/// out; if none remain, only the step counter advances.
pub fn self_train_step(
    model: &mut SeqModel,
    batch: &[&Example],
    opt: &mut Optimizer,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<StepReport> {
    let mut pseudo = Vec::with_capacity(batch.len());
    for ex in batch {
        let h = greedy_decode(model, &ex.source, model.config.max_len)?;
        if h.finished() {
            pseudo.push(Example {
                source: ex.source.clone(),
                reference: h.content().to_vec(),
            });
        }
    }
    if pseudo.is_empty() {
        model.step_count += 1;
        return Ok(StepReport {
            step: model.step_count,
            mean_reward: 0.0,
            loss: 0.0,
            grad_norm: 0.0,
            tokens: 0,
            skipped: true,
            samples_logged: None,
        });
    }
    let refs: Vec<&Example> = pseudo.iter().collect();
    fine_tune_step(model, &refs, opt, dropout_rng)
}
