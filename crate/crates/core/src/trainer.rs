//! Joint training: minibatch Adam with inverse-time decay, per-epoch
//! validation, best-model selection and early stopping.
//!
//! Examples inside a batch run forward and backward on parallel workers; their
//! gradients are summed in batch order afterwards, so results do not depend on
//! the thread count.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::corpus::{batch_iterator, token_ids, Dataset, EncodedExample, Example, Vocabularies};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::model::{Model, Prediction};
use crate::optim::{clip_global_norm, lr_at_step, Adam};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Optimizer steps completed by the end of the epoch.
    pub steps: u64,
    /// Rate used for the epoch's last step.
    pub learning_rate: f64,
    /// Mean per-example training loss over the epoch.
    pub train_loss: f64,
    pub valid: EvalReport,
    /// Whether this epoch became the selected model.
    pub improved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Holds the selected (best-validation) model and the full history.
    pub checkpoint: Checkpoint,
    pub sizes: SplitSizes,
    pub stopped_early: bool,
}

/// Predicted labels for a list of utterances, with scores when gold labels exist.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub intents: Vec<String>,
    pub tags: Vec<Vec<String>>,
}

/// Mean joint loss over `batch` and its summed-then-averaged gradients.
pub fn batch_loss_and_grads(
    model: &Model,
    batch: &[&EncodedExample],
    config: &TrainConfig,
    masks: Vec<Option<Tensor>>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let weights = config.loss_weights();
    let per_example: Vec<(f64, Vec<Vec<f64>>)> = batch
        .par_iter()
        .zip(masks)
        .map(|(ex, mask)| model.loss_and_grads(ex, weights, mask))
        .collect::<Result<_>>()?;
    let n = batch.len() as f64;
    let mut losses = Vec::with_capacity(batch.len());
    let mut total: Option<Vec<Vec<f64>>> = None;
    for (loss, grads) in per_example {
        losses.push(loss);
        match &mut total {
            None => total = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
    let mut grads = total.unwrap_or_default();
    grads.iter_mut().flatten().for_each(|g| *g /= n);
    Ok((losses, grads))
}

/// Inverted-dropout mask for `len` embedded tokens, or `None` when dropout is off.
fn dropout_mask(config: &TrainConfig, step: u64, position: usize, len: usize) -> Option<Tensor> {
    if config.dropout == 0.0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_D80F);
    rng.set_stream(step);
    rng.set_word_pos((position as u128) << 40);
    let keep = 1.0 - config.dropout;
    let data = (0..len * config.embedding_dim)
        .map(|_| if rng.random_bool(keep) { 1.0 / keep } else { 0.0 })
        .collect();
    Some(Tensor::new(vec![len, config.embedding_dim], data).expect("mask shape"))
}

fn better(a: &EvalReport, b: &EvalReport) -> bool {
    (a.sentence_accuracy, a.slot.f1) > (b.sentence_accuracy, b.slot.f1)
}

/// Loads `root` and trains on it.
pub fn train(root: impl AsRef<Path>, config: &TrainConfig, on_epoch: impl FnMut(&EpochMetrics)) -> Result<TrainOutcome> {
    config.validate()?;
    let dataset = Dataset::load(root)?;
    train_dataset(&dataset, config, on_epoch)
}

/// Trains on an in-memory dataset, calling `on_epoch` after each validation pass.
pub fn train_dataset(
    dataset: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut vocab = Vocabularies::build(&dataset.train)?;
    vocab.extend_labels(&dataset.valid);
    if let Some(test) = &dataset.test {
        vocab.extend_labels(test);
    }
    let train_data = vocab.encode_all(&dataset.train)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::init(
        config.model_config(),
        vocab.tokens.len(),
        vocab.intents.len(),
        vocab.slots.len(),
        &mut rng,
    )?;
    let sizes: Vec<usize> = model.tensors().iter().map(|(_, t)| t.len()).collect();
    let mut adam = Adam::new(config.adam(), &sizes);

    let mut history = Vec::new();
    let mut best: Option<(Model, EvalReport, usize)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut lr = config.lr0;

    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        for batch in batch_iterator(&train_data, config.batch_size, Some(config.seed), epoch as u64) {
            let step = adam.steps();
            let examples: Vec<&EncodedExample> = batch.indices.iter().map(|&i| &train_data[i]).collect();
            let masks = examples
                .iter()
                .enumerate()
                .map(|(k, ex)| dropout_mask(config, step, k, ex.tokens.len()))
                .collect();
            let (losses, mut grads) = batch_loss_and_grads(&model, &examples, config, masks)?;
            let diverged = losses.iter().find(|l| !l.is_finite()).copied();
            let norm = clip_global_norm(&mut grads, config.clip_norm);
            if let Some(loss) = diverged.or((!norm.is_finite()).then_some(norm)) {
                return Err(Error::Divergence {
                    step: step + 1,
                    epoch,
                    loss,
                });
            }
            loss_sum += losses.iter().sum::<f64>();
            lr = lr_at_step(step, config.lr0, config.decay_p);
            adam.step(&mut model.tensors_mut(), &grads, lr)?;
        }

        let valid = evaluate(&model, &vocab, &dataset.valid)?.report;
        let improved = best.as_ref().is_none_or(|(_, b, _)| better(&valid, b));
        let metrics = EpochMetrics {
            epoch,
            steps: adam.steps(),
            learning_rate: lr,
            train_loss: loss_sum / train_data.len() as f64,
            valid: valid.clone(),
            improved,
        };
        on_epoch(&metrics);
        history.push(metrics);
        if improved {
            best = Some((model.clone(), valid, epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = epoch < config.epochs;
                break;
            }
        }
    }

    let (model, _, best_epoch) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: *config,
            vocabularies: vocab,
            model,
            history,
            best_epoch,
        },
        sizes: SplitSizes {
            train: dataset.train.len(),
            valid: dataset.valid.len(),
            test: dataset.test.as_ref().map(Vec::len),
        },
        stopped_early,
    })
}

/// Decodes token sequences into (intent, tags) label strings.
pub fn predict_labels(model: &Model, vocab: &Vocabularies, utterances: &[Vec<String>]) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let preds: Vec<Prediction> = utterances
        .par_iter()
        .map(|tokens| model.predict(&token_ids(&vocab.tokens, tokens)))
        .collect::<Result<_>>()?;
    let name = |v: &crate::corpus::Vocabulary, id: usize| v.name(id).unwrap_or("O").to_string();
    let intents = preds.iter().map(|p| name(&vocab.intents, p.intent)).collect();
    let tags = preds
        .iter()
        .map(|p| p.slots.iter().map(|&s| name(&vocab.slots, s)).collect())
        .collect();
    Ok((intents, tags))
}

/// Predicts every example and scores it against its gold labels. Labels
/// absent from the checkpoint's vocabularies are errors.
pub fn evaluate(model: &Model, vocab: &Vocabularies, examples: &[Example]) -> Result<Evaluation> {
    for ex in examples {
        vocab.encode(ex)?;
    }
    let tokens: Vec<Vec<String>> = examples.iter().map(|e| e.tokens.clone()).collect();
    let (intents, tags) = predict_labels(model, vocab, &tokens)?;
    let gold_intents: Vec<String> = examples.iter().map(|e| e.intent.clone()).collect();
    let gold_tags: Vec<Vec<String>> = examples.iter().map(|e| e.slot_tags.clone()).collect();
    let report = EvalReport::compute(&gold_intents, &intents, &gold_tags, &tags)?;
    Ok(Evaluation { report, intents, tags })
}
