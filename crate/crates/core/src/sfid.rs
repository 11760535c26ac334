//! The SF-ID network: an SF subnet that gates slot contexts with intent
//! information, an ID subnet that pools slot information into the intent
//! representation, their SF-First and ID-First wirings, the iteration
//! mechanism, and the output heads.
//!
//! With `C` the slot contexts (`T x D`), `H` the encoder states and `c` the
//! intent context:
//!
//! * SF subnet: `f_i = Σ_d V_d tanh(C_i + q W)_d`, `r_slot^i = f_i C_i`, where
//!   the query `q` is `c` on the first SF pass and the latest `r_inte` after.
//! * ID subnet: `e_ij = w · tanh(r_slot^i V1 + H_j V2 + b)`,
//!   `α_i = exp(e_ii) / Σ_j exp(e_ij)`, `r = Σ_i α_i r_slot^i`, `r_inte = r + c`.
//!   The ID-First opening pass instead scores `σ(H_i V1 + C_j V2 + b)` and pools `H_i`.
//!
//! The same parameters are reused on every iteration.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{pairwise_scores, ContextSet};
use crate::autodiff::{Graph, Tensor, Unary, Var};
use crate::error::{Error, ShapeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SfFirst,
    IdFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Both subnets, exchanging reinforce vectors across iterations.
    Full,
    /// Both subnets run once on the attention contexts, never exchanging vectors.
    NoInteraction,
    SfOnly,
    IdOnly,
    /// No SF-ID block: the heads see the attention contexts directly.
    None,
}

/// How the SF subnet reduces `V * tanh(...)` to correlation factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Correlation {
    /// One factor per position (sum over hidden dimensions).
    PerPosition,
    /// A single factor for the sentence (sum over positions as well).
    Global,
}

macro_rules! keyword_enum {
    ($ty:ty, $what:literal, $($variant:path => $name:literal),+ $(,)?) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self, Error> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(Error::Config(format!(
                        concat!("unknown ", $what, " {:?} (expected one of: {})"),
                        s,
                        [$($name),+].join(", ")
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $name,)+ })
            }
        }
    };
}

keyword_enum!(Mode, "mode", Mode::SfFirst => "sf-first", Mode::IdFirst => "id-first");
keyword_enum!(
    Ablation, "ablation",
    Ablation::Full => "full",
    Ablation::NoInteraction => "no-interaction",
    Ablation::SfOnly => "sf-only",
    Ablation::IdOnly => "id-only",
    Ablation::None => "none",
);
keyword_enum!(
    Correlation, "correlation",
    Correlation::PerPosition => "per-position",
    Correlation::Global => "global",
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeConfig {
    pub mode: Mode,
    pub iterations: usize,
    pub crf: bool,
    pub ablation: Ablation,
    pub correlation: Correlation,
}

impl Default for ModeConfig {
    fn default() -> Self {
        Self {
            mode: Mode::SfFirst,
            iterations: 3,
            crf: true,
            ablation: Ablation::Full,
            correlation: Correlation::PerPosition,
        }
    }
}

impl ModeConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfIdParams {
    /// `D x 1`
    pub sf_v: Tensor,
    /// `D x D`
    pub sf_w: Tensor,
    /// `d_e x 1`
    pub id_w: Tensor,
    /// `D x d_e`
    pub id_v1: Tensor,
    /// `D x d_e`
    pub id_v2: Tensor,
    /// `d_e`
    pub id_b: Tensor,
    /// `2D x |intents|`
    pub intent_head: Tensor,
    /// `2D x |slots|`
    pub slot_head: Tensor,
}

impl SfIdParams {
    pub fn init<R: Rng + ?Sized>(width: usize, id_proj: usize, intents: usize, slots: usize, rng: &mut R) -> Self {
        let inv = |n: usize| 1.0 / (n as f64).sqrt();
        Self {
            sf_v: Tensor::uniform(&[width, 1], inv(width), rng),
            sf_w: Tensor::uniform(&[width, width], inv(width), rng),
            id_w: Tensor::uniform(&[id_proj, 1], inv(id_proj), rng),
            id_v1: Tensor::uniform(&[width, id_proj], inv(width), rng),
            id_v2: Tensor::uniform(&[width, id_proj], inv(width), rng),
            id_b: Tensor::zeros(&[id_proj]),
            intent_head: Tensor::uniform(&[2 * width, intents], inv(2 * width), rng),
            slot_head: Tensor::uniform(&[2 * width, slots], inv(2 * width), rng),
        }
    }

    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("sf_v".into(), &self.sf_v),
            ("sf_w".into(), &self.sf_w),
            ("id_w".into(), &self.id_w),
            ("id_v1".into(), &self.id_v1),
            ("id_v2".into(), &self.id_v2),
            ("id_b".into(), &self.id_b),
            ("intent_head".into(), &self.intent_head),
            ("slot_head".into(), &self.slot_head),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.sf_v,
            &mut self.sf_w,
            &mut self.id_w,
            &mut self.id_v1,
            &mut self.id_v2,
            &mut self.id_b,
            &mut self.intent_head,
            &mut self.slot_head,
        ]
    }

    pub fn bind<'p>(&'p self, g: &mut Graph<'p>) -> SfIdVars {
        let v: Vec<Var> = self.tensors().into_iter().map(|(_, t)| g.param(t)).collect();
        SfIdVars::from_slice(&v)
    }

    pub fn bind_owned(&self, g: &mut Graph<'_>) -> SfIdVars {
        let v: Vec<Var> = self.tensors().into_iter().map(|(_, t)| g.input(t.clone())).collect();
        SfIdVars::from_slice(&v)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SfIdVars {
    pub sf_v: Var,
    pub sf_w: Var,
    pub id_w: Var,
    pub id_v1: Var,
    pub id_v2: Var,
    pub id_b: Var,
    pub intent_head: Var,
    pub slot_head: Var,
}

impl SfIdVars {
    /// From vars in [`SfIdParams::tensors`] order.
    pub fn from_slice(v: &[Var]) -> Self {
        Self {
            sf_v: v[0],
            sf_w: v[1],
            id_w: v[2],
            id_v1: v[3],
            id_v2: v[4],
            id_b: v[5],
            intent_head: v[6],
            slot_head: v[7],
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        vec![
            self.sf_v,
            self.sf_w,
            self.id_w,
            self.id_v1,
            self.id_v2,
            self.id_b,
            self.intent_head,
            self.slot_head,
        ]
    }
}

/// Correlation factors and slot reinforce vectors.
#[derive(Debug, Clone, Copy)]
pub struct SfOutput {
    /// `T x 1` per position, or `[1]` in the global reading.
    pub factors: Var,
    /// `T x D`
    pub r_slot: Var,
}

/// Reinforce vector, intent reinforce vector and the pooling weights.
#[derive(Debug, Clone, Copy)]
pub struct IdOutput {
    /// `1 x D`
    pub r: Var,
    /// `1 x D`
    pub r_inte: Var,
    /// `T x 1` weights `α_i`.
    pub alpha: Var,
    /// `T x T` row-softmax of the pair scores; `α_i` is its diagonal.
    pub pair_weights: Var,
}

pub fn sf_subnet(
    g: &mut Graph<'_>,
    c_slot: Var,
    intent_vec: Var,
    p: &SfIdVars,
    correlation: Correlation,
) -> Result<SfOutput, ShapeError> {
    let projected = g.matmul(intent_vec, p.sf_w)?;
    let z = g.add(c_slot, projected)?;
    let z = g.tanh(z);
    let mut factors = g.matmul(z, p.sf_v)?;
    if correlation == Correlation::Global {
        factors = g.sum(factors);
    }
    let r_slot = g.mul(c_slot, factors)?;
    Ok(SfOutput { factors, r_slot })
}

/// `α_i = softmax_j(e_ij)` evaluated at `j = i`; pooled `Σ α_i values_i`.
fn diagonal_pool(g: &mut Graph<'_>, scores: Var, values: Var, c_inte: Var) -> Result<IdOutput, ShapeError> {
    let t_len = g.shape(scores)[0];
    let pair_weights = g.softmax(scores, 1)?;
    let eye = g.constant(Tensor::identity(t_len));
    let diag = g.mul(pair_weights, eye)?;
    let alpha = g.sum_axis(diag, 1)?;
    let row = g.reshape(alpha, &[1, t_len])?;
    let r = g.matmul(row, values)?;
    let r_inte = g.add(r, c_inte)?;
    Ok(IdOutput {
        r,
        r_inte,
        alpha,
        pair_weights,
    })
}

fn check_rows(g: &Graph<'_>, op: &'static str, a: Var, b: Var) -> Result<(), ShapeError> {
    if g.shape(a).first() != g.shape(b).first() {
        return Err(ShapeError::Mismatch {
            op,
            left: g.shape(a).to_vec(),
            right: g.shape(b).to_vec(),
        });
    }
    Ok(())
}

/// ID subnet fed by slot reinforce vectors.
pub fn id_subnet_from_slots(
    g: &mut Graph<'_>,
    r_slot: Var,
    states: Var,
    c_inte: Var,
    p: &SfIdVars,
) -> Result<IdOutput, ShapeError> {
    check_rows(g, "id_subnet_from_slots", r_slot, states)?;
    let left = g.matmul(r_slot, p.id_v1)?;
    let right = g.matmul(states, p.id_v2)?;
    let scores = pairwise_scores(g, left, right, Some(p.id_b), p.id_w, Unary::Tanh)?;
    diagonal_pool(g, scores, r_slot, c_inte)
}

/// ID subnet of the ID-First opening pass, fed by hidden states and slot contexts.
pub fn id_subnet_from_states(
    g: &mut Graph<'_>,
    states: Var,
    c_slot: Var,
    c_inte: Var,
    p: &SfIdVars,
) -> Result<IdOutput, ShapeError> {
    check_rows(g, "id_subnet_from_states", states, c_slot)?;
    let left = g.matmul(states, p.id_v1)?;
    let right = g.matmul(c_slot, p.id_v2)?;
    let scores = pairwise_scores(g, left, right, Some(p.id_b), p.id_w, Unary::Sigmoid)?;
    diagonal_pool(g, scores, states, c_inte)
}

/// Working set after the SF-ID block.
#[derive(Debug, Clone, Copy)]
pub struct ReinforceState {
    pub factors: Option<Var>,
    /// `T x D`
    pub r_slot: Var,
    pub r: Option<Var>,
    /// `1 x D`
    pub r_inte: Var,
    pub iterations: usize,
}

pub fn run_sf_id(
    g: &mut Graph<'_>,
    states: Var,
    ctx: &ContextSet,
    config: &ModeConfig,
    p: &SfIdVars,
) -> Result<ReinforceState, Error> {
    config.validate()?;
    let corr = config.correlation;
    let base = ReinforceState {
        factors: None,
        r_slot: ctx.slot,
        r: None,
        r_inte: ctx.intent,
        iterations: 0,
    };
    let state = match config.ablation {
        Ablation::None => base,
        Ablation::SfOnly => {
            let sf = sf_subnet(g, ctx.slot, ctx.intent, p, corr)?;
            ReinforceState {
                factors: Some(sf.factors),
                r_slot: sf.r_slot,
                iterations: 1,
                ..base
            }
        }
        Ablation::IdOnly => {
            let id = id_subnet_from_slots(g, ctx.slot, states, ctx.intent, p)?;
            ReinforceState {
                r: Some(id.r),
                r_inte: id.r_inte,
                iterations: 1,
                ..base
            }
        }
        Ablation::NoInteraction => {
            let sf = sf_subnet(g, ctx.slot, ctx.intent, p, corr)?;
            let id = id_subnet_from_states(g, states, ctx.slot, ctx.intent, p)?;
            ReinforceState {
                factors: Some(sf.factors),
                r_slot: sf.r_slot,
                r: Some(id.r),
                r_inte: id.r_inte,
                iterations: 1,
            }
        }
        Ablation::Full => {
            let mut s = base;
            for k in 1..=config.iterations {
                match config.mode {
                    Mode::SfFirst => {
                        let query = if k == 1 { ctx.intent } else { s.r_inte };
                        let sf = sf_subnet(g, ctx.slot, query, p, corr)?;
                        let id = id_subnet_from_slots(g, sf.r_slot, states, ctx.intent, p)?;
                        s = ReinforceState {
                            factors: Some(sf.factors),
                            r_slot: sf.r_slot,
                            r: Some(id.r),
                            r_inte: id.r_inte,
                            iterations: k,
                        };
                    }
                    Mode::IdFirst => {
                        let id = if k == 1 {
                            id_subnet_from_states(g, states, ctx.slot, ctx.intent, p)?
                        } else {
                            id_subnet_from_slots(g, s.r_slot, states, ctx.intent, p)?
                        };
                        let sf = sf_subnet(g, ctx.slot, id.r_inte, p, corr)?;
                        s = ReinforceState {
                            factors: Some(sf.factors),
                            r_slot: sf.r_slot,
                            r: Some(id.r),
                            r_inte: id.r_inte,
                            iterations: k,
                        };
                    }
                }
            }
            s
        }
    };
    Ok(state)
}

/// Intent logits `concat(h_T, r_inte) W_inte` (`1 x |intents|`); softmax gives the distribution.
pub fn predict_intent(g: &mut Graph<'_>, last: Var, r_inte: Var, p: &SfIdVars) -> Result<Var, ShapeError> {
    let joined = g.concat(last, r_inte, 1)?;
    g.matmul(joined, p.intent_head)
}

/// Per-position slot scores `concat(h_i, r_slot^i) W_slot` (`T x |slots|`).
/// These are softmax logits without the CRF and emissions with it.
pub fn predict_slots(g: &mut Graph<'_>, states: Var, r_slot: Var, p: &SfIdVars) -> Result<Var, ShapeError> {
    check_rows(g, "predict_slots", states, r_slot)?;
    let joined = g.concat(states, r_slot, 1)?;
    g.matmul(joined, p.slot_head)
}

#[cfg(test)]
mod tests;
