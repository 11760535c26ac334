//! Linear-chain CRF over slot labels.
//!
//! A labelling `y` of a `T x L` emission table scores
//! `Σ_t emit[t][y_t] + Σ_{t>0} trans[y_{t-1}][y_t]`. There are no start or
//! stop scores: a chain opens with a bare emission.

use serde::{Deserialize, Serialize};

use crate::autodiff::{log_sum_exp, Graph, Tensor, Var};
use crate::error::ShapeError;

/// Label-transition scores; entry `(a, b)` scores `b` following `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    pub transitions: Tensor,
}

impl CrfParams {
    /// Zero transitions: the CRF starts out as independent per-position classifiers.
    pub fn new(labels: usize) -> Self {
        Self {
            transitions: Tensor::zeros(&[labels, labels]),
        }
    }

    pub fn labels(&self) -> usize {
        self.transitions.shape()[0]
    }

    fn check(&self, emissions: &Tensor) -> Result<(usize, usize), ShapeError> {
        let shape = emissions.shape();
        let l = self.labels();
        if shape.len() != 2 || shape[1] != l || shape[0] == 0 {
            return Err(ShapeError::Mismatch {
                op: "crf",
                left: shape.to_vec(),
                right: self.transitions.shape().to_vec(),
            });
        }
        Ok((shape[0], l))
    }
}

pub fn sequence_score(emissions: &Tensor, labels: &[usize], params: &CrfParams) -> Result<f64, ShapeError> {
    let (t_len, l) = params.check(emissions)?;
    if labels.len() != t_len {
        return Err(ShapeError::Mismatch {
            op: "sequence_score",
            left: emissions.shape().to_vec(),
            right: vec![labels.len()],
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= l) {
        return Err(ShapeError::Index {
            op: "sequence_score",
            index: bad,
            extent: l,
        });
    }
    let mut score = 0.0;
    for (t, &y) in labels.iter().enumerate() {
        score += emissions.at(t, y);
        if t > 0 {
            score += params.transitions.at(labels[t - 1], y);
        }
    }
    Ok(score)
}

/// Forward algorithm in log space.
pub fn log_partition(emissions: &Tensor, params: &CrfParams) -> Result<f64, ShapeError> {
    let (t_len, l) = params.check(emissions)?;
    let mut alpha = emissions.row(0).to_vec();
    let mut next = vec![0.0; l];
    for t in 1..t_len {
        for (b, slot) in next.iter_mut().enumerate() {
            *slot = log_sum_exp((0..l).map(|a| alpha[a] + params.transitions.at(a, b))) + emissions.at(t, b);
        }
        std::mem::swap(&mut alpha, &mut next);
    }
    Ok(log_sum_exp(alpha.iter().copied()))
}

/// Negative log-likelihood of the gold labelling.
pub fn nll(emissions: &Tensor, gold: &[usize], params: &CrfParams) -> Result<f64, ShapeError> {
    Ok(log_partition(emissions, params)? - sequence_score(emissions, gold, params)?)
}

/// Highest-scoring labelling and its score. Among equal scores the labelling
/// with the smallest label at the latest differing position wins.
pub fn viterbi(emissions: &Tensor, params: &CrfParams) -> Result<(Vec<usize>, f64), ShapeError> {
    let (t_len, l) = params.check(emissions)?;
    let mut delta = emissions.row(0).to_vec();
    let mut back = vec![vec![0usize; l]; t_len];
    let mut next = vec![0.0; l];
    for t in 1..t_len {
        for b in 0..l {
            let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
            for (a, d) in delta.iter().enumerate() {
                let s = d + params.transitions.at(a, b);
                if s > best {
                    best = s;
                    arg = a;
                }
            }
            next[b] = best + emissions.at(t, b);
            back[t][b] = arg;
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let (mut last, mut best) = (0, f64::NEG_INFINITY);
    for (b, &d) in delta.iter().enumerate() {
        if d > best {
            best = d;
            last = b;
        }
    }
    let mut path = vec![last; t_len];
    for t in (1..t_len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok((path, best))
}

/// Differentiable CRF negative log-likelihood on a graph. `emissions` is
/// `T x L`, `transitions` is `L x L`.
pub fn nll_graph(g: &mut Graph<'_>, emissions: Var, transitions: Var, gold: &[usize]) -> Result<Var, ShapeError> {
    let shape = g.shape(emissions).to_vec();
    if shape.len() != 2 || shape[0] != gold.len() || gold.is_empty() || g.shape(transitions) != [shape[1], shape[1]] {
        return Err(ShapeError::Mismatch {
            op: "crf_nll",
            left: shape,
            right: g.shape(transitions).to_vec(),
        });
    }
    let (t_len, l) = (shape[0], shape[1]);
    if let Some(&bad) = gold.iter().find(|&&y| y >= l) {
        return Err(ShapeError::Index {
            op: "crf_nll",
            index: bad,
            extent: l,
        });
    }

    let mut alpha = g.gather_rows(emissions, &[0])?;
    for t in 1..t_len {
        let column = g.reshape(alpha, &[l, 1])?;
        let scores = g.add(column, transitions)?;
        let reduced = g.log_sum_exp(scores, 0)?;
        let emit = g.gather_rows(emissions, &[t])?;
        alpha = g.add(reduced, emit)?;
    }
    let log_z = g.log_sum_exp(alpha, 1)?;
    let log_z = g.reshape(log_z, &[1])?;

    let mut picks = Tensor::zeros(&[t_len, l]);
    let mut steps = Tensor::zeros(&[l, l]);
    for (t, &y) in gold.iter().enumerate() {
        picks.data_mut()[t * l + y] = 1.0;
        if t > 0 {
            steps.data_mut()[gold[t - 1] * l + y] += 1.0;
        }
    }
    let picks = g.constant(picks);
    let steps = g.constant(steps);
    let e = g.mul(emissions, picks)?;
    let e = g.sum(e);
    let tr = g.mul(transitions, steps)?;
    let tr = g.sum(tr);
    let gold_score = g.add(e, tr)?;
    g.sub(log_z, gold_score)
}
