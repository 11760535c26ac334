//! Token embedding followed by a single-layer bi-directional LSTM.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::ShapeError;

/// One LSTM gate: `act(x W_x + h W_h + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub input_weights: Tensor,
    pub recurrent_weights: Tensor,
    pub bias: Tensor,
}

impl GateParams {
    fn init<R: Rng + ?Sized>(input: usize, hidden: usize, bias: f64, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            input_weights: Tensor::uniform(&[input, hidden], bound, rng),
            recurrent_weights: Tensor::uniform(&[hidden, hidden], bound, rng),
            bias: Tensor::full(&[hidden], bias),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_gate: GateParams,
    pub forget_gate: GateParams,
    pub output_gate: GateParams,
    pub candidate: GateParams,
}

impl LstmParams {
    /// Uniform `±1/√hidden` weights, zero biases except the forget gate at 1.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            input_gate: GateParams::init(input, hidden, 0.0, rng),
            forget_gate: GateParams::init(input, hidden, 1.0, rng),
            output_gate: GateParams::init(input, hidden, 0.0, rng),
            candidate: GateParams::init(input, hidden, 0.0, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.input_gate.bias.len()
    }

    fn gates(&self) -> [&GateParams; 4] {
        [&self.input_gate, &self.forget_gate, &self.output_gate, &self.candidate]
    }

    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let names = ["input_gate", "forget_gate", "output_gate", "candidate"];
        names
            .iter()
            .zip(self.gates())
            .flat_map(|(n, g)| {
                [
                    (format!("{n}.input_weights"), &g.input_weights),
                    (format!("{n}.recurrent_weights"), &g.recurrent_weights),
                    (format!("{n}.bias"), &g.bias),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        [
            &mut self.input_gate,
            &mut self.forget_gate,
            &mut self.output_gate,
            &mut self.candidate,
        ]
        .into_iter()
        .flat_map(|g| [&mut g.input_weights, &mut g.recurrent_weights, &mut g.bias])
        .collect()
    }

    /// Binds copies of the parameters, for graphs that may outlive `self`.
    pub fn bind_owned(&self, g: &mut Graph<'_>) -> LstmVars {
        let mut bind_gate = |p: &GateParams| GateVars {
            input_weights: g.input(p.input_weights.clone()),
            recurrent_weights: g.input(p.recurrent_weights.clone()),
            bias: g.input(p.bias.clone()),
        };
        LstmVars {
            input_gate: bind_gate(&self.input_gate),
            forget_gate: bind_gate(&self.forget_gate),
            output_gate: bind_gate(&self.output_gate),
            candidate: bind_gate(&self.candidate),
        }
    }

    pub fn bind<'p>(&'p self, g: &mut Graph<'p>) -> LstmVars {
        let mut bind_gate = |p: &'p GateParams| GateVars {
            input_weights: g.param(&p.input_weights),
            recurrent_weights: g.param(&p.recurrent_weights),
            bias: g.param(&p.bias),
        };
        LstmVars {
            input_gate: bind_gate(&self.input_gate),
            forget_gate: bind_gate(&self.forget_gate),
            output_gate: bind_gate(&self.output_gate),
            candidate: bind_gate(&self.candidate),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GateVars {
    pub input_weights: Var,
    pub recurrent_weights: Var,
    pub bias: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub input_gate: GateVars,
    pub forget_gate: GateVars,
    pub output_gate: GateVars,
    pub candidate: GateVars,
}

impl LstmVars {
    fn gates(&self) -> [GateVars; 4] {
        [self.input_gate, self.forget_gate, self.output_gate, self.candidate]
    }

    pub fn vars(&self) -> Vec<Var> {
        self.gates()
            .iter()
            .flat_map(|g| [g.input_weights, g.recurrent_weights, g.bias])
            .collect()
    }
}

/// One LSTM update for a `1 x d_in` input row: `i, f, o` are sigmoid gates,
/// `g` the tanh candidate, `c' = f*c + i*g`, `h' = o*tanh(c')`.
pub fn lstm_cell_step(g: &mut Graph<'_>, p: &LstmVars, x: Var, h: Var, c: Var) -> Result<(Var, Var), ShapeError> {
    let mut projected = [x; 4];
    for (slot, gate) in projected.iter_mut().zip(p.gates()) {
        *slot = g.matmul(x, gate.input_weights)?;
    }
    step_projected(g, p, projected, h, c)
}

/// LSTM update given the precomputed input projections `x W_x` of the four gates.
fn step_projected(g: &mut Graph<'_>, p: &LstmVars, projected: [Var; 4], h: Var, c: Var) -> Result<(Var, Var), ShapeError> {
    let mut pre = [h; 4];
    for ((slot, gate), xw) in pre.iter_mut().zip(p.gates()).zip(projected) {
        let hw = g.matmul(h, gate.recurrent_weights)?;
        let s = g.add(xw, hw)?;
        *slot = g.add(s, gate.bias)?;
    }
    let i = g.sigmoid(pre[0]);
    let f = g.sigmoid(pre[1]);
    let o = g.sigmoid(pre[2]);
    let cand = g.tanh(pre[3]);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Runs one direction over the rows of `x` (`T x d_in`); returns the `1 x d_h` state per position.
fn run_direction(g: &mut Graph<'_>, p: &LstmVars, x: Var, hidden: usize, reverse: bool) -> Result<Vec<Var>, ShapeError> {
    let t_len = g.shape(x)[0];
    let mut projections = [x; 4];
    for (slot, gate) in projections.iter_mut().zip(p.gates()) {
        *slot = g.matmul(x, gate.input_weights)?;
    }
    let mut h = g.constant(Tensor::zeros(&[1, hidden]));
    let mut c = h;
    let mut states = vec![h; t_len];
    let order: Vec<usize> = if reverse { (0..t_len).rev().collect() } else { (0..t_len).collect() };
    for t in order {
        let mut rows = projections;
        for (row, proj) in rows.iter_mut().zip(projections) {
            *row = g.gather_rows(proj, &[t])?;
        }
        (h, c) = step_projected(g, p, rows, h, c)?;
        states[t] = h;
    }
    Ok(states)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub embedding: Tensor,
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl EncoderParams {
    /// Embeddings uniform in `±0.1`; LSTM as in [`LstmParams::init`].
    pub fn init<R: Rng + ?Sized>(vocab: usize, emb: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            embedding: Tensor::uniform(&[vocab, emb], 0.1, rng),
            forward: LstmParams::init(emb, hidden, rng),
            backward: LstmParams::init(emb, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        out.extend(self.forward.tensors().into_iter().map(|(n, t)| (format!("forward.{n}"), t)));
        out.extend(self.backward.tensors().into_iter().map(|(n, t)| (format!("backward.{n}"), t)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embedding];
        out.extend(self.forward.tensors_mut());
        out.extend(self.backward.tensors_mut());
        out
    }

    pub fn bind<'p>(&'p self, g: &mut Graph<'p>) -> EncoderVars {
        EncoderVars {
            embedding: g.param(&self.embedding),
            forward: self.forward.bind(g),
            backward: self.backward.bind(g),
            hidden: self.hidden(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderVars {
    pub embedding: Var,
    pub forward: LstmVars,
    pub backward: LstmVars,
    hidden: usize,
}

impl EncoderVars {
    pub fn vars(&self) -> Vec<Var> {
        let mut out = vec![self.embedding];
        out.extend(self.forward.vars());
        out.extend(self.backward.vars());
        out
    }
}

/// Per-token BLSTM states of one utterance.
#[derive(Debug, Clone, Copy)]
pub struct EncoderStates {
    /// `T x 2d_h`; row `t` is `[forward_t, backward_t]`.
    pub states: Var,
    /// `1 x 2d_h`: forward state at the last token joined with backward state at the first.
    pub last: Var,
}

/// Encodes the embedded rows `x` (`T x d_emb`) of one utterance.
pub fn encode_embedded(g: &mut Graph<'_>, p: &EncoderVars, x: Var) -> Result<EncoderStates, ShapeError> {
    let fw = run_direction(g, &p.forward, x, p.hidden, false)?;
    let bw = run_direction(g, &p.backward, x, p.hidden, true)?;
    let t_len = fw.len();
    let stack = |g: &mut Graph<'_>, rows: &[Var]| -> Result<Var, ShapeError> {
        let mut acc = rows[0];
        for &r in &rows[1..] {
            acc = g.concat(acc, r, 0)?;
        }
        Ok(acc)
    };
    let fw_m = stack(g, &fw)?;
    let bw_m = stack(g, &bw)?;
    let states = g.concat(fw_m, bw_m, 1)?;
    let last = g.concat(fw[t_len - 1], bw[0], 1)?;
    Ok(EncoderStates { states, last })
}

/// Embeds and encodes one utterance of token ids.
pub fn encode(g: &mut Graph<'_>, p: &EncoderVars, ids: &[usize]) -> Result<EncoderStates, ShapeError> {
    if ids.is_empty() {
        return Err(ShapeError::EmptyAxis { op: "encode", shape: vec![0] });
    }
    let x = g.gather_rows(p.embedding, ids)?;
    encode_embedded(g, p, x)
}

/// Encodes every row of a padded batch over its unpadded prefix, returning the
/// `T_b x 2d_h` state matrix of each example.
pub fn encode_batch(params: &EncoderParams, batch: &crate::corpus::Batch) -> Result<Vec<Tensor>, ShapeError> {
    (0..batch.len())
        .map(|b| {
            let mut g = Graph::new();
            let vars = params.bind(&mut g);
            let enc = encode(&mut g, &vars, batch.row(b).0)?;
            Ok(g.tensor(enc.states))
        })
        .collect()
}
