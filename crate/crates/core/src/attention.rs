//! Additive attention producing the slot context vectors and the sentence
//! intent context vector from encoder states.
//!
//! Scores are `e(q, h_j) = vᵀ tanh(q W + h_j U)`; slot attention queries with
//! every `h_i`, intent attention with the summary state `h_T`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::ShapeError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    /// `2d_h x d_a`, applied to the query.
    pub query: Tensor,
    /// `2d_h x d_a`, applied to each key.
    pub key: Tensor,
    /// `d_a x 1` scoring vector.
    pub score: Tensor,
}

impl AttentionParams {
    pub fn init<R: Rng + ?Sized>(width: usize, proj: usize, rng: &mut R) -> Self {
        let b_in = 1.0 / (width as f64).sqrt();
        let b_proj = 1.0 / (proj as f64).sqrt();
        Self {
            query: Tensor::uniform(&[width, proj], b_in, rng),
            key: Tensor::uniform(&[width, proj], b_in, rng),
            score: Tensor::uniform(&[proj, 1], b_proj, rng),
        }
    }

    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("query".into(), &self.query),
            ("key".into(), &self.key),
            ("score".into(), &self.score),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.query, &mut self.key, &mut self.score]
    }

    pub fn bind<'p>(&'p self, g: &mut Graph<'p>) -> AttentionVars {
        AttentionVars {
            query: g.param(&self.query),
            key: g.param(&self.key),
            score: g.param(&self.score),
        }
    }

    pub fn bind_owned(&self, g: &mut Graph<'_>) -> AttentionVars {
        AttentionVars {
            query: g.input(self.query.clone()),
            key: g.input(self.key.clone()),
            score: g.input(self.score.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub query: Var,
    pub key: Var,
    pub score: Var,
}

impl AttentionVars {
    pub fn vars(&self) -> Vec<Var> {
        vec![self.query, self.key, self.score]
    }
}

/// Slot and intent contexts of one utterance.
#[derive(Debug, Clone, Copy)]
pub struct ContextSet {
    /// `T x 2d_h`, row `i` is `c_slot^i`.
    pub slot: Var,
    /// `T x T` slot attention weights, rows sum to 1.
    pub slot_weights: Var,
    /// `1 x 2d_h`.
    pub intent: Var,
    /// `T x 1` intent attention weights.
    pub intent_weights: Var,
}

/// Scores `act(P[i] + Q[j] (+ bias)) · w` for every pair `(i, j)`, as a `T_p x T_q` matrix.
pub(crate) fn pairwise_scores(
    g: &mut Graph<'_>,
    p: Var,
    q: Var,
    bias: Option<Var>,
    weights: Var,
    act: crate::autodiff::Unary,
) -> Result<Var, ShapeError> {
    let (tp, tq) = (g.shape(p)[0], g.shape(q)[0]);
    let left: Vec<usize> = (0..tp).flat_map(|i| std::iter::repeat_n(i, tq)).collect();
    let right: Vec<usize> = (0..tp).flat_map(|_| 0..tq).collect();
    let pl = g.gather_rows(p, &left)?;
    let qr = g.gather_rows(q, &right)?;
    let mut s = g.add(pl, qr)?;
    if let Some(b) = bias {
        s = g.add(s, b)?;
    }
    let s = g.unary(act, s);
    let e = g.matmul(s, weights)?;
    g.reshape(e, &[tp, tq])
}

/// `c_slot^i = Σ_j α_ij h_j` with `α_i· = softmax_j e(h_i, h_j)`. Returns `(C_slot, A_slot)`.
pub fn slot_context(g: &mut Graph<'_>, states: Var, p: &AttentionVars) -> Result<(Var, Var), ShapeError> {
    let q = g.matmul(states, p.query)?;
    let k = g.matmul(states, p.key)?;
    let scores = pairwise_scores(g, q, k, None, p.score, crate::autodiff::Unary::Tanh)?;
    let weights = g.softmax(scores, 1)?;
    let context = g.matmul(weights, states)?;
    Ok((context, weights))
}

/// `c_inte = Σ_j α_j h_j` with `α = softmax_j e(h_T, h_j)`. Returns `(c_inte, a_inte)`.
pub fn intent_context(g: &mut Graph<'_>, states: Var, last: Var, p: &AttentionVars) -> Result<(Var, Var), ShapeError> {
    let t_len = g.shape(states)[0];
    let q = g.matmul(last, p.query)?;
    let k = g.matmul(states, p.key)?;
    let s = g.add(k, q)?;
    let s = g.tanh(s);
    let scores = g.matmul(s, p.score)?;
    let weights = g.softmax(scores, 0)?;
    let row = g.reshape(weights, &[1, t_len])?;
    let context = g.matmul(row, states)?;
    Ok((context, weights))
}

pub fn contexts(
    g: &mut Graph<'_>,
    states: Var,
    last: Var,
    slot: &AttentionVars,
    intent: &AttentionVars,
) -> Result<ContextSet, ShapeError> {
    let (slot_ctx, slot_weights) = slot_context(g, states, slot)?;
    let (intent_ctx, intent_weights) = intent_context(g, states, last, intent)?;
    Ok(ContextSet {
        slot: slot_ctx,
        slot_weights,
        intent: intent_ctx,
        intent_weights,
    })
}
