//! Slot F1 (conlleval span convention), intent accuracy and sentence-level
//! semantic frame accuracy.

mod iob;

use std::collections::HashSet;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

pub use iob::Tag;

use crate::error::{Error, Result, TagError};

/// A labelled chunk `[start, end]` (inclusive, 0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub slot_type: String,
}

/// Chunks of an IOB sequence under the conlleval rules: a chunk opens at
/// `B-x`, or at an `I-x` whose predecessor is not inside an `x` chunk, and
/// runs through the following `I-x` tags.
pub fn extract_spans<S: AsRef<str>>(tags: &[S]) -> Result<Vec<Span>, TagError> {
    let parsed: Vec<Tag<'_>> = tags.iter().map(|t| Tag::parse(t.as_ref())).collect::<Result<_, _>>()?;
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, tag) in parsed.iter().enumerate() {
        let continues = matches!((tag, open), (Tag::Inside(t), Some((_, cur))) if *t == cur);
        if continues {
            continue;
        }
        if let Some((start, ty)) = open.take() {
            spans.push(Span {
                start,
                end: i - 1,
                slot_type: ty.to_string(),
            });
        }
        if let Some(ty) = tag.slot_type() {
            open = Some((i, ty));
        }
    }
    if let Some((start, ty)) = open {
        spans.push(Span {
            start,
            end: parsed.len() - 1,
            slot_type: ty.to_string(),
        });
    }
    Ok(spans)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SlotScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_spans: usize,
    pub predicted_spans: usize,
    pub correct_spans: usize,
}

impl SlotScore {
    fn from_counts(gold: usize, predicted: usize, correct: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            gold_spans: gold,
            predicted_spans: predicted,
            correct_spans: correct,
        }
    }
}

/// Micro-averaged span precision, recall and F1 over a corpus.
pub fn slot_f1<S: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<S>]) -> Result<SlotScore> {
    if gold.len() != pred.len() {
        return Err(Error::Alignment("slot_f1 sentences", gold.len(), pred.len()));
    }
    let (mut g, mut p, mut c) = (0, 0, 0);
    for (gs, ps) in gold.iter().zip(pred) {
        if gs.len() != ps.len() {
            return Err(Error::Alignment("slot_f1 tags", gs.len(), ps.len()));
        }
        let gold_spans: HashSet<Span> = extract_spans(gs)?.into_iter().collect();
        let pred_spans = extract_spans(ps)?;
        g += gold_spans.len();
        p += pred_spans.len();
        c += pred_spans.iter().filter(|s| gold_spans.contains(s)).count();
    }
    Ok(SlotScore::from_counts(g, p, c))
}

pub fn intent_accuracy<S: PartialEq>(gold: &[S], pred: &[S]) -> Result<f64> {
    if gold.len() != pred.len() {
        return Err(Error::Alignment("intent_accuracy", gold.len(), pred.len()));
    }
    let hits = gold.iter().zip(pred).filter(|(a, b)| a == b).count();
    Ok(rate(hits, gold.len()))
}

/// Fraction of sentences with the right intent and an identical tag sequence.
pub fn sentence_accuracy<I: PartialEq, S: AsRef<str>>(
    gold_intents: &[I],
    pred_intents: &[I],
    gold_tags: &[Vec<S>],
    pred_tags: &[Vec<S>],
) -> Result<f64> {
    Ok(rate(
        sentence_hits(gold_intents, pred_intents, gold_tags, pred_tags, |g, p| {
            Ok(g.len() == p.len() && g.iter().zip(p).all(|(a, b)| a.as_ref() == b.as_ref()))
        })?,
        gold_intents.len(),
    ))
}

/// Like [`sentence_accuracy`] but compares extracted span sets instead of raw tags.
pub fn sentence_accuracy_by_spans<I: PartialEq, S: AsRef<str>>(
    gold_intents: &[I],
    pred_intents: &[I],
    gold_tags: &[Vec<S>],
    pred_tags: &[Vec<S>],
) -> Result<f64> {
    Ok(rate(
        sentence_hits(gold_intents, pred_intents, gold_tags, pred_tags, |g, p| {
            let mut a = extract_spans(g)?;
            let mut b = extract_spans(p)?;
            a.sort();
            b.sort();
            Ok(a == b)
        })?,
        gold_intents.len(),
    ))
}

fn sentence_hits<I: PartialEq, S: AsRef<str>>(
    gold_intents: &[I],
    pred_intents: &[I],
    gold_tags: &[Vec<S>],
    pred_tags: &[Vec<S>],
    slots_match: impl Fn(&[S], &[S]) -> Result<bool>,
) -> Result<usize> {
    let n = gold_intents.len();
    for len in [pred_intents.len(), gold_tags.len(), pred_tags.len()] {
        if len != n {
            return Err(Error::Alignment("sentence_accuracy", n, len));
        }
    }
    let mut hits = 0;
    for i in 0..n {
        if gold_intents[i] == pred_intents[i] && slots_match(&gold_tags[i], &pred_tags[i])? {
            hits += 1;
        }
    }
    Ok(hits)
}

fn rate(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub slot: SlotScore,
    pub intent_accuracy: f64,
    pub sentence_accuracy: f64,
    pub sentence_accuracy_spans: f64,
    pub sentences: usize,
    pub correct_intents: usize,
    pub correct_sentences: usize,
}

impl EvalReport {
    pub fn compute(
        gold_intents: &[String],
        pred_intents: &[String],
        gold_tags: &[Vec<String>],
        pred_tags: &[Vec<String>],
    ) -> Result<Self> {
        let slot = slot_f1(gold_tags, pred_tags)?;
        let intent_accuracy = intent_accuracy(gold_intents, pred_intents)?;
        let sentence_accuracy = sentence_accuracy(gold_intents, pred_intents, gold_tags, pred_tags)?;
        let sentence_accuracy_spans = sentence_accuracy_by_spans(gold_intents, pred_intents, gold_tags, pred_tags)?;
        let n = gold_intents.len();
        Ok(Self {
            slot,
            intent_accuracy,
            sentence_accuracy,
            sentence_accuracy_spans,
            sentences: n,
            correct_intents: (intent_accuracy * n as f64).round() as usize,
            correct_sentences: (sentence_accuracy * n as f64).round() as usize,
        })
    }

    /// Flat `key = value` lines.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let rows: [(&str, String); 12] = [
            ("slot_precision", fmt_rate(self.slot.precision)),
            ("slot_recall", fmt_rate(self.slot.recall)),
            ("slot_f1", fmt_rate(self.slot.f1)),
            ("intent_accuracy", fmt_rate(self.intent_accuracy)),
            ("sentence_accuracy", fmt_rate(self.sentence_accuracy)),
            ("sentence_accuracy_spans", fmt_rate(self.sentence_accuracy_spans)),
            ("gold_spans", self.slot.gold_spans.to_string()),
            ("predicted_spans", self.slot.predicted_spans.to_string()),
            ("correct_spans", self.slot.correct_spans.to_string()),
            ("sentences", self.sentences.to_string()),
            ("correct_intents", self.correct_intents.to_string()),
            ("correct_sentences", self.correct_sentences.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

fn fmt_rate(x: f64) -> String {
    format!("{x:.6}")
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "slot F1 {:.2}  intent acc {:.2}  sentence acc {:.2}",
            100.0 * self.slot.f1,
            100.0 * self.intent_accuracy,
            100.0 * self.sentence_accuracy
        )
    }
}
