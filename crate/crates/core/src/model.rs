//! The full tagger: BLSTM encoder, slot and intent attention, the SF-ID
//! block, the two output heads and an optional CRF over slot labels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{contexts, AttentionParams, AttentionVars, ContextSet};
use crate::autodiff::{grad_check, GradCheckReport, Graph, Tensor, Var};
use crate::corpus::EncodedExample;
use crate::crf::{nll_graph, viterbi, CrfParams};
use crate::encoder::{encode_embedded, EncoderParams, EncoderStates, EncoderVars};
use crate::error::{Error, ShapeError};
use crate::sfid::{predict_intent, predict_slots, run_sf_id, ModeConfig, ReinforceState, SfIdParams, SfIdVars};

/// Layer widths plus the SF-ID wiring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    /// Per direction; encoder states are twice as wide.
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub id_proj_dim: usize,
    pub sfid: ModeConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            hidden_dim: 64,
            attention_dim: 64,
            id_proj_dim: 64,
            sfid: ModeConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), Error> {
        for (name, v) in [
            ("embedding_dim", self.embedding_dim),
            ("hidden_dim", self.hidden_dim),
            ("attention_dim", self.attention_dim),
            ("id_proj_dim", self.id_proj_dim),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        self.sfid.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: EncoderParams,
    pub slot_attention: AttentionParams,
    pub intent_attention: AttentionParams,
    pub sfid: SfIdParams,
    pub crf: CrfParams,
}

/// Graph handles for every parameter of a [`Model`].
#[derive(Debug, Clone, Copy)]
pub struct ModelVars {
    pub encoder: EncoderVars,
    pub slot_attention: AttentionVars,
    pub intent_attention: AttentionVars,
    pub sfid: SfIdVars,
    pub transitions: Var,
}

impl ModelVars {
    /// In [`Model::tensors`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = self.encoder.vars();
        out.extend(self.slot_attention.vars());
        out.extend(self.intent_attention.vars());
        out.extend(self.sfid.vars());
        out.push(self.transitions);
        out
    }
}

/// Everything the forward pass of one utterance produces.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    pub encoded: EncoderStates,
    pub contexts: ContextSet,
    pub reinforce: ReinforceState,
    /// `1 x |intents|`
    pub intent_logits: Var,
    /// `T x |slots|`
    pub slot_scores: Var,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub intent: usize,
    pub slots: Vec<usize>,
}

/// Relative weights of the two loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub intent: f64,
    pub slot: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { intent: 1.0, slot: 1.0 }
    }
}

impl Model {
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, vocab: usize, intents: usize, slots: usize, rng: &mut R) -> Result<Self, Error> {
        config.validate()?;
        let width = 2 * config.hidden_dim;
        Ok(Self {
            config,
            encoder: EncoderParams::init(vocab, config.embedding_dim, config.hidden_dim, rng),
            slot_attention: AttentionParams::init(width, config.attention_dim, rng),
            intent_attention: AttentionParams::init(width, config.attention_dim, rng),
            sfid: SfIdParams::init(width, config.id_proj_dim, intents, slots, rng),
            crf: CrfParams::new(slots),
        })
    }

    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = prefixed("encoder", self.encoder.tensors());
        out.extend(prefixed("slot_attention", self.slot_attention.tensors()));
        out.extend(prefixed("intent_attention", self.intent_attention.tensors()));
        out.extend(prefixed("sfid", self.sfid.tensors()));
        out.push(("crf.transitions".into(), &self.crf.transitions));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.slot_attention.tensors_mut());
        out.extend(self.intent_attention.tensors_mut());
        out.extend(self.sfid.tensors_mut());
        out.push(&mut self.crf.transitions);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn intents(&self) -> usize {
        self.sfid.intent_head.shape()[1]
    }

    pub fn slots(&self) -> usize {
        self.sfid.slot_head.shape()[1]
    }

    pub fn vocab(&self) -> usize {
        self.encoder.embedding.shape()[0]
    }

    pub fn bind<'p>(&'p self, g: &mut Graph<'p>) -> ModelVars {
        ModelVars {
            encoder: self.encoder.bind(g),
            slot_attention: self.slot_attention.bind(g),
            intent_attention: self.intent_attention.bind(g),
            sfid: self.sfid.bind(g),
            transitions: g.param(&self.crf.transitions),
        }
    }

    /// Forward pass over one utterance. `embedding_mask`, if given, scales the
    /// embedded rows elementwise (inverted dropout during training).
    pub fn forward(
        &self,
        g: &mut Graph<'_>,
        vars: &ModelVars,
        ids: &[usize],
        embedding_mask: Option<Tensor>,
    ) -> Result<Forward, Error> {
        if ids.is_empty() {
            return Err(ShapeError::EmptyAxis { op: "forward", shape: vec![0] }.into());
        }
        let mut x = g.gather_rows(vars.encoder.embedding, ids)?;
        if let Some(mask) = embedding_mask {
            let m = g.constant(mask);
            x = g.mul(x, m)?;
        }
        let encoded = encode_embedded(g, &vars.encoder, x)?;
        let ctx = contexts(g, encoded.states, encoded.last, &vars.slot_attention, &vars.intent_attention)?;
        let reinforce = run_sf_id(g, encoded.states, &ctx, &self.config.sfid, &vars.sfid)?;
        let intent_logits = predict_intent(g, encoded.last, reinforce.r_inte, &vars.sfid)?;
        let slot_scores = predict_slots(g, encoded.states, reinforce.r_slot, &vars.sfid)?;
        Ok(Forward {
            encoded,
            contexts: ctx,
            reinforce,
            intent_logits,
            slot_scores,
        })
    }

    /// `w_i · CE(intent) + w_s · slot loss` for one example. The slot loss is
    /// the CRF negative log-likelihood, or the per-token cross-entropy averaged
    /// over positions without the CRF.
    pub fn example_loss(
        &self,
        g: &mut Graph<'_>,
        vars: &ModelVars,
        ex: &EncodedExample,
        weights: LossWeights,
        embedding_mask: Option<Tensor>,
    ) -> Result<Var, Error> {
        let out = self.forward(g, vars, &ex.tokens, embedding_mask)?;
        let intent = g.cross_entropy(out.intent_logits, &[ex.intent])?;
        let slot = if self.config.sfid.crf {
            nll_graph(g, out.slot_scores, vars.transitions, &ex.slots)?
        } else {
            g.cross_entropy(out.slot_scores, &ex.slots)?
        };
        let intent = g.scale(intent, weights.intent)?;
        let slot = g.scale(slot, weights.slot)?;
        Ok(g.add(intent, slot)?)
    }

    /// Loss value and the gradient of every parameter in [`Model::tensors`] order.
    pub fn loss_and_grads(
        &self,
        ex: &EncodedExample,
        weights: LossWeights,
        embedding_mask: Option<Tensor>,
    ) -> Result<(f64, Vec<Vec<f64>>), Error> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let loss = self.example_loss(&mut g, &vars, ex, weights, embedding_mask)?;
        let value = g.scalar(loss);
        g.backward(loss)?;
        let grads = vars
            .vars()
            .into_iter()
            .zip(self.tensors())
            .map(|(v, (_, t))| {
                let mut buf = vec![0.0; t.len()];
                g.accumulate_grad(v, &mut buf);
                buf
            })
            .collect();
        Ok((value, grads))
    }

    /// Intent argmax plus slot labels: Viterbi with the CRF, per-position argmax without.
    pub fn predict(&self, ids: &[usize]) -> Result<Prediction, Error> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let out = self.forward(&mut g, &vars, ids, None)?;
        let intent = argmax(g.value(out.intent_logits));
        let scores = g.tensor(out.slot_scores);
        let slots = if self.config.sfid.crf {
            viterbi(&scores, &self.crf)?.0
        } else {
            (0..ids.len()).map(|t| argmax(scores.row(t))).collect()
        };
        Ok(Prediction { intent, slots })
    }
}

/// Checks the analytic gradient of every parameter tensor of `model` on one
/// example against central differences, returning one report per tensor.
pub fn model_grad_check(
    model: &Model,
    ex: &EncodedExample,
    weights: LossWeights,
    eps: f64,
    tol: f64,
) -> Result<Vec<(String, GradCheckReport)>, Error> {
    let (_, grads) = model.loss_and_grads(ex, weights, None)?;
    let names: Vec<(String, Vec<usize>)> = model.tensors().into_iter().map(|(n, t)| (n, t.shape().to_vec())).collect();
    let mut out = Vec::with_capacity(names.len());
    for (k, ((name, shape), grad)) in names.into_iter().zip(grads).enumerate() {
        let analytic = Tensor::new(shape, grad)?;
        let eval = |t: &Tensor| {
            let mut probe = model.clone();
            *probe.tensors_mut()[k] = t.clone();
            let mut g = Graph::new();
            let vars = probe.bind(&mut g);
            probe
                .example_loss(&mut g, &vars, ex, weights, None)
                .map_or(f64::NAN, |l| g.scalar(l))
        };
        let report = grad_check(eval, model.tensors()[k].1, &analytic, eps, tol);
        out.push((name, report));
    }
    Ok(out)
}

fn prefixed<'a>(prefix: &str, v: Vec<(String, &'a Tensor)>) -> Vec<(String, &'a Tensor)> {
    v.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)).collect()
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
