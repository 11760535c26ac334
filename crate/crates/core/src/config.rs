//! Training configuration and its line-oriented `key = value` text form.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{LossWeights, ModelConfig};
use crate::optim::AdamConfig;
use crate::sfid::{Ablation, Correlation, Mode, ModeConfig};

/// Every knob of a training run. Each field is also a config-file key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr0: f64,
    pub decay_p: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub clip_norm: f64,
    pub intent_weight: f64,
    pub slot_weight: f64,
    /// Inverted dropout on embedded tokens during training.
    pub dropout: f64,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub id_proj_dim: usize,
    pub mode: Mode,
    pub iterations: usize,
    pub crf: bool,
    pub ablation: Ablation,
    pub correlation: Correlation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let a = AdamConfig::default();
        Self {
            epochs: 30,
            batch_size: 16,
            seed: 1,
            lr0: 0.01,
            decay_p: 0.05,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            patience: 10,
            clip_norm: 5.0,
            intent_weight: 1.0,
            slot_weight: 1.0,
            dropout: 0.0,
            embedding_dim: m.embedding_dim,
            hidden_dim: m.hidden_dim,
            attention_dim: m.attention_dim,
            id_proj_dim: m.id_proj_dim,
            mode: m.sfid.mode,
            iterations: m.sfid.iterations,
            crf: m.sfid.crf,
            ablation: m.sfid.ablation,
            correlation: m.sfid.correlation,
        }
    }
}

/// Keys accepted by [`TrainConfig::set`], in the order [`TrainConfig::to_kv`] writes them.
pub const TRAIN_KEYS: &[&str] = &[
    "epochs",
    "batch_size",
    "seed",
    "lr0",
    "decay_p",
    "beta1",
    "beta2",
    "epsilon",
    "patience",
    "clip_norm",
    "intent_weight",
    "slot_weight",
    "dropout",
    "embedding_dim",
    "hidden_dim",
    "attention_dim",
    "id_proj_dim",
    "mode",
    "iterations",
    "crf",
    "ablation",
    "correlation",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, Error> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let fail = |msg: &str| Err(Error::Config(msg.into()));
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return fail("lr0 must be positive");
        }
        if !(self.decay_p >= 0.0 && self.decay_p.is_finite()) {
            return fail("decay_p must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("adam betas must lie in [0, 1)");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return fail("epsilon must be positive");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return fail("clip_norm must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if !(self.intent_weight >= 0.0 && self.slot_weight >= 0.0) {
            return fail("loss weights must be non-negative");
        }
        self.model_config().validate()
    }

    pub fn mode_config(&self) -> ModeConfig {
        ModeConfig {
            mode: self.mode,
            iterations: self.iterations,
            crf: self.crf,
            ablation: self.ablation,
            correlation: self.correlation,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            embedding_dim: self.embedding_dim,
            hidden_dim: self.hidden_dim,
            attention_dim: self.attention_dim,
            id_proj_dim: self.id_proj_dim,
            sfid: self.mode_config(),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            intent: self.intent_weight,
            slot: self.slot_weight,
        }
    }

    /// Sets one key from its text form. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        match key {
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "lr0" => self.lr0 = parse(key, value)?,
            "decay_p" => self.decay_p = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "clip_norm" => self.clip_norm = parse(key, value)?,
            "intent_weight" => self.intent_weight = parse(key, value)?,
            "slot_weight" => self.slot_weight = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "embedding_dim" => self.embedding_dim = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "attention_dim" => self.attention_dim = parse(key, value)?,
            "id_proj_dim" => self.id_proj_dim = parse(key, value)?,
            "mode" => self.mode = value.parse()?,
            "iterations" => self.iterations = parse(key, value)?,
            "crf" => self.crf = parse(key, value)?,
            "ablation" => self.ablation = value.parse()?,
            "correlation" => self.correlation = value.parse()?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "seed" => self.seed.to_string(),
            "lr0" => self.lr0.to_string(),
            "decay_p" => self.decay_p.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "epsilon" => self.epsilon.to_string(),
            "patience" => self.patience.to_string(),
            "clip_norm" => self.clip_norm.to_string(),
            "intent_weight" => self.intent_weight.to_string(),
            "slot_weight" => self.slot_weight.to_string(),
            "dropout" => self.dropout.to_string(),
            "embedding_dim" => self.embedding_dim.to_string(),
            "hidden_dim" => self.hidden_dim.to_string(),
            "attention_dim" => self.attention_dim.to_string(),
            "id_proj_dim" => self.id_proj_dim.to_string(),
            "mode" => self.mode.to_string(),
            "iterations" => self.iterations.to_string(),
            "crf" => self.crf.to_string(),
            "ablation" => self.ablation.to_string(),
            "correlation" => self.correlation.to_string(),
            _ => return None,
        })
    }

    /// All keys as `key = value` lines.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for key in TRAIN_KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }
}

/// Splits config text into `(line number, key, value)` triples. Blank lines
/// and lines starting with `#` are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(usize, String, String)>, Error> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {line:?}", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        out.push((i + 1, k.to_string(), v.to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        let mut back = TrainConfig {
            epochs: 1,
            mode: Mode::IdFirst,
            crf: false,
            ..c
        };
        for (_, k, v) in parse_kv(&c.to_kv()).unwrap() {
            back.set(&k, &v).unwrap();
        }
        assert_eq!(back, c);
    }

    #[test]
    fn every_key_is_gettable_and_settable() {
        let mut c = TrainConfig::default();
        for key in TRAIN_KEYS {
            let v = c.get(key).unwrap();
            c.set(key, &v).unwrap();
        }
        assert_eq!(c, TrainConfig::default());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let mut c = TrainConfig::default();
        for (k, v) in [("learning_rate", "0.1"), ("epochs", "many"), ("mode", "both"), ("crf", "yes")] {
            assert_eq!(c.set(k, v).unwrap_err().exit_code(), 2, "{k}");
        }
        assert!(parse_kv("epochs 3").is_err());
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let kv = parse_kv("# run\n\n  epochs = 4  \nmode=id-first\n").unwrap();
        assert_eq!(kv, vec![(3, "epochs".into(), "4".into()), (4, "mode".into(), "id-first".into())]);
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        let bad = [
            TrainConfig { epochs: 0, ..TrainConfig::default() },
            TrainConfig { lr0: 0.0, ..TrainConfig::default() },
            TrainConfig { decay_p: -0.1, ..TrainConfig::default() },
            TrainConfig { iterations: 0, ..TrainConfig::default() },
            TrainConfig { dropout: 1.0, ..TrainConfig::default() },
            TrainConfig { hidden_dim: 0, ..TrainConfig::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    proptest! {
        #[test]
        fn floats_survive_the_text_form(lr in 1e-6f64..1.0, p in 0.0f64..1.0, seed in any::<u64>()) {
            let c = TrainConfig { lr0: lr, decay_p: p, seed, ..TrainConfig::default() };
            let mut back = TrainConfig::default();
            for (_, k, v) in parse_kv(&c.to_kv()).unwrap() {
                back.set(&k, &v).unwrap();
            }
            prop_assert_eq!(back, c);
        }
    }
}
