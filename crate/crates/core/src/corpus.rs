//! ATIS/Snips-style three-file splits, vocabularies and padded batches.
//!
//! A split directory holds `seq.in` (space-separated tokens), `seq.out`
//! (space-separated IOB tags, one per token) and `label` (one intent per
//! line). A dataset root holds `train/`, `valid/` and `test/` splits.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CorpusError, Error, Result};
use crate::metrics::Tag;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// One utterance: tokens, one IOB tag per token, and a sentence intent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub tokens: Vec<String>,
    pub slot_tags: Vec<String>,
    pub intent: String,
}

impl Example {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Reads `seq.in`, `seq.out` and `label` from a split directory.
pub fn load_split(dir: impl AsRef<Path>) -> Result<Vec<Example>, CorpusError> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(CorpusError::MissingSplit(dir.to_path_buf()));
    }
    let seq_in = read_lines(&dir.join("seq.in"))?;
    let seq_out = read_lines(&dir.join("seq.out"))?;
    let labels = read_lines(&dir.join("label"))?;
    for (other, lines) in [(&seq_out, "seq.out"), (&labels, "label")] {
        if other.1.len() != seq_in.1.len() {
            return Err(CorpusError::LineCount {
                a: seq_in.0.clone(),
                a_lines: seq_in.1.len(),
                b: dir.join(lines),
                b_lines: other.1.len(),
            });
        }
    }
    let mut examples = Vec::with_capacity(seq_in.1.len());
    for (i, ((words, tags), label)) in seq_in.1.iter().zip(&seq_out.1).zip(&labels.1).enumerate() {
        let line = i + 1;
        let tokens: Vec<String> = words.split_whitespace().map(str::to_string).collect();
        let slot_tags: Vec<String> = tags.split_whitespace().map(str::to_string).collect();
        let intent = label.trim();
        if tokens.is_empty() {
            return Err(CorpusError::EmptyLine { path: seq_in.0.clone(), line });
        }
        if slot_tags.is_empty() {
            return Err(CorpusError::EmptyLine { path: seq_out.0.clone(), line });
        }
        if intent.is_empty() {
            return Err(CorpusError::EmptyLine { path: labels.0.clone(), line });
        }
        if tokens.len() != slot_tags.len() {
            return Err(CorpusError::TokenCount {
                path: seq_out.0.clone(),
                line,
                tokens: tokens.len(),
                tags: slot_tags.len(),
            });
        }
        if let Some(bad) = slot_tags.iter().find(|t| Tag::parse(t).is_err()) {
            return Err(CorpusError::MalformedTag {
                path: seq_out.0.clone(),
                line,
                tag: bad.clone(),
            });
        }
        examples.push(Example {
            tokens,
            slot_tags,
            intent: intent.to_string(),
        });
    }
    Ok(examples)
}

/// Reads a `seq.in`-format file: one non-empty line of tokens per utterance.
pub fn load_token_lines(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>, CorpusError> {
    let (path, lines) = read_lines(path.as_ref())?;
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let toks: Vec<String> = l.split_whitespace().map(str::to_string).collect();
            if toks.is_empty() {
                Err(CorpusError::EmptyLine { path: path.clone(), line: i + 1 })
            } else {
                Ok(toks)
            }
        })
        .collect()
}

fn read_lines(path: &Path) -> Result<(PathBuf, Vec<String>), CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let lines = text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect();
    Ok((path.to_path_buf(), lines))
}

/// The three splits of a dataset root.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
    pub test: Option<Vec<Example>>,
}

impl Dataset {
    /// Loads `train/` and `valid/` (required) and `test/` (if present).
    pub fn load(root: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let root = root.as_ref();
        let test_dir = root.join("test");
        Ok(Self {
            train: load_split(root.join("train"))?,
            valid: load_split(root.join("valid"))?,
            test: if test_dir.exists() { Some(load_split(test_dir)?) } else { None },
        })
    }
}

/// Bijection between strings and dense ids, in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    entries: Vec<String>,
    index: HashMap<String, usize>,
    with_reserved: bool,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    entries: Vec<String>,
    with_reserved: bool,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        let index = r.entries.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        Self {
            entries: r.entries,
            index,
            with_reserved: r.with_reserved,
        }
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        Self {
            entries: v.entries,
            with_reserved: v.with_reserved,
        }
    }
}

impl Vocabulary {
    /// Token vocabulary with `<pad>` = 0 and `<unk>` = 1.
    pub fn with_reserved() -> Self {
        let mut v = Self {
            entries: Vec::new(),
            index: HashMap::new(),
            with_reserved: true,
        };
        v.insert(PAD_TOKEN);
        v.insert(UNK_TOKEN);
        v
    }

    /// Label vocabulary without reserved entries.
    pub fn labels() -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
            with_reserved: false,
        }
    }

    pub fn insert(&mut self, s: &str) -> usize {
        if let Some(&id) = self.index.get(s) {
            return id;
        }
        self.entries.push(s.to_string());
        self.index.insert(s.to_string(), self.entries.len() - 1);
        self.entries.len() - 1
    }

    pub fn get(&self, s: &str) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.entries.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }
}

/// Token ids of an utterance; unseen tokens map to `<unk>`.
pub fn token_ids(vocab: &Vocabulary, tokens: &[String]) -> Vec<usize> {
    tokens
        .iter()
        .map(|t| vocab.get(&t.to_lowercase()).unwrap_or(UNK_ID))
        .collect()
}

/// Token, slot-tag and intent vocabularies built from a training split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub tokens: Vocabulary,
    pub slots: Vocabulary,
    pub intents: Vocabulary,
}

/// Example encoded as vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub tokens: Vec<usize>,
    pub slots: Vec<usize>,
    pub intent: usize,
}

impl Vocabularies {
    pub fn build(train: &[Example]) -> Result<Self, CorpusError> {
        if train.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut tokens = Vocabulary::with_reserved();
        let mut slots = Vocabulary::labels();
        let mut intents = Vocabulary::labels();
        for ex in train {
            for t in &ex.tokens {
                tokens.insert(&t.to_lowercase());
            }
            for s in &ex.slot_tags {
                slots.insert(s);
            }
            intents.insert(&ex.intent);
        }
        Ok(Self { tokens, slots, intents })
    }

    /// Adds the slot tags and intents of `examples` without touching the token vocabulary.
    pub fn extend_labels(&mut self, examples: &[Example]) {
        for ex in examples {
            for s in &ex.slot_tags {
                self.slots.insert(s);
            }
            self.intents.insert(&ex.intent);
        }
    }

    /// Encodes an example; slot tags and intents unseen in training are errors.
    pub fn encode(&self, ex: &Example) -> Result<EncodedExample, CorpusError> {
        let slots = ex
            .slot_tags
            .iter()
            .map(|s| {
                self.slots.get(s).ok_or_else(|| CorpusError::UnknownLabel {
                    kind: "slot",
                    label: s.clone(),
                })
            })
            .collect::<Result<_, _>>()?;
        let intent = self.intents.get(&ex.intent).ok_or_else(|| CorpusError::UnknownLabel {
            kind: "intent",
            label: ex.intent.clone(),
        })?;
        Ok(EncodedExample {
            tokens: token_ids(&self.tokens, &ex.tokens),
            slots,
            intent,
        })
    }

    pub fn encode_all(&self, examples: &[Example]) -> Result<Vec<EncodedExample>, CorpusError> {
        examples.iter().map(|e| self.encode(e)).collect()
    }

    /// Inverse of [`Vocabularies::encode`]; tokens come back lowercased, unseen ones as `<unk>`.
    pub fn decode(&self, enc: &EncodedExample) -> Result<Example> {
        let lookup = |v: &Vocabulary, id: usize| {
            v.name(id)
                .map(str::to_string)
                .ok_or_else(|| Error::Config(format!("id {id} outside vocabulary of size {}", v.len())))
        };
        Ok(Example {
            tokens: enc.tokens.iter().map(|&t| lookup(&self.tokens, t)).collect::<Result<_>>()?,
            slot_tags: enc.slots.iter().map(|&s| lookup(&self.slots, s)).collect::<Result<_>>()?,
            intent: lookup(&self.intents, enc.intent)?,
        })
    }
}

/// Padded, masked minibatch. Row `b` is valid for `t < lengths[b]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub token_ids: Vec<Vec<usize>>,
    pub slot_ids: Vec<Vec<usize>>,
    pub intent_ids: Vec<usize>,
    pub lengths: Vec<usize>,
    pub mask: Vec<Vec<bool>>,
    /// Position of each row in the source list.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn from_examples(data: &[EncodedExample], indices: &[usize]) -> Self {
        let max_len = indices.iter().map(|&i| data[i].tokens.len()).max().unwrap_or(0);
        let pad = |v: &[usize]| {
            let mut row = v.to_vec();
            row.resize(max_len, PAD_ID);
            row
        };
        Self {
            token_ids: indices.iter().map(|&i| pad(&data[i].tokens)).collect(),
            slot_ids: indices.iter().map(|&i| pad(&data[i].slots)).collect(),
            intent_ids: indices.iter().map(|&i| data[i].intent).collect(),
            lengths: indices.iter().map(|&i| data[i].tokens.len()).collect(),
            mask: indices
                .iter()
                .map(|&i| (0..max_len).map(|t| t < data[i].tokens.len()).collect())
                .collect(),
            indices: indices.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.mask.first().map_or(0, Vec::len)
    }

    /// Unpadded token and slot ids of row `b`.
    pub fn row(&self, b: usize) -> (&[usize], &[usize]) {
        let n = self.lengths[b];
        (&self.token_ids[b][..n], &self.slot_ids[b][..n])
    }
}

/// Batches covering every example once. With `shuffle_seed`, the order is a
/// deterministic function of the seed and `epoch`; otherwise it is the input order.
pub fn batch_iterator(
    data: &[EncodedExample],
    batch_size: usize,
    shuffle_seed: Option<u64>,
    epoch: u64,
) -> impl Iterator<Item = Batch> + '_ {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut order: Vec<usize> = (0..data.len()).collect();
    if let Some(seed) = shuffle_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch);
        order.shuffle(&mut rng);
    }
    let chunks: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    chunks.into_iter().map(move |idx| Batch::from_examples(data, &idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_split(dir: &Path, seq_in: &str, seq_out: &str, label: &str) {
        fs::create_dir_all(dir).unwrap();
        for (name, body) in [("seq.in", seq_in), ("seq.out", seq_out), ("label", label)] {
            fs::File::create(dir.join(name)).unwrap().write_all(body.as_bytes()).unwrap();
        }
    }

    fn ex(tokens: &str, tags: &str, intent: &str) -> Example {
        Example {
            tokens: tokens.split(' ').map(String::from).collect(),
            slot_tags: tags.split(' ').map(String::from).collect(),
            intent: intent.into(),
        }
    }

    #[test]
    fn loads_table_one_sentence() {
        let tmp = tempfile::tempdir().unwrap();
        write_split(
            tmp.path(),
            "what flights leave from phoenix\nhi\n",
            "O O O O B-fromloc\nO\n",
            "atis_flight\ngreet\n",
        );
        let data = load_split(tmp.path()).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data[0].len(), 5);
        assert_eq!(data[0].intent, "atis_flight");
        assert_eq!(data[0].slot_tags[4], "B-fromloc");
        assert_eq!(data[1].len(), 1);
    }

    #[test]
    fn load_errors() {
        let tmp = tempfile::tempdir().unwrap();
        write_split(tmp.path(), "a b\na b c d e\n", "O O\nO O O O\n", "x\ny\n");
        match load_split(tmp.path()).unwrap_err() {
            CorpusError::TokenCount { line, tokens, tags, .. } => assert_eq!((line, tokens, tags), (2, 5, 4)),
            e => panic!("{e}"),
        }
        write_split(tmp.path(), "a\nb\n", "O\nO\n", "x\n");
        let err = load_split(tmp.path()).unwrap_err();
        assert!(matches!(err, CorpusError::LineCount { .. }));
        assert!(err.to_string().contains("label"), "{err}");
        write_split(tmp.path(), "a\n\nc\n", "O\n\nO\n", "x\ny\nz\n");
        assert!(matches!(load_split(tmp.path()).unwrap_err(), CorpusError::EmptyLine { line: 2, .. }));
        write_split(tmp.path(), "a\n", "Q-x\n", "x\n");
        assert!(matches!(load_split(tmp.path()).unwrap_err(), CorpusError::MalformedTag { .. }));
        assert!(matches!(
            load_split(tmp.path().join("nope")).unwrap_err(),
            CorpusError::MissingSplit(_)
        ));
    }

    #[test]
    fn vocabulary_contracts() {
        let train = vec![ex("a b c", "O O B-x", "i1"), ex("c b a", "B-y O O", "i2")];
        let v = Vocabularies::build(&train).unwrap();
        assert_eq!(v.tokens.len(), 3 + 2);
        assert_eq!(v.tokens.get(PAD_TOKEN), Some(PAD_ID));
        assert_eq!(v.tokens.get(UNK_TOKEN), Some(UNK_ID));
        assert_eq!(v.slots.entries(), &["O", "B-x", "B-y"]);
        assert_eq!(v.intents.entries(), &["i1", "i2"]);
        let enc = v.encode(&ex("a zzz", "O O", "i2")).unwrap();
        assert_eq!(enc.tokens, vec![2, UNK_ID]);
        assert_eq!(Vocabularies::build(&train).unwrap(), v);
        assert!(matches!(Vocabularies::build(&[]), Err(CorpusError::Empty)));
        assert!(matches!(
            v.encode(&ex("a", "B-z", "i1")),
            Err(CorpusError::UnknownLabel { kind: "slot", .. })
        ));
        assert!(matches!(
            v.encode(&ex("a", "O", "i9")),
            Err(CorpusError::UnknownLabel { kind: "intent", .. })
        ));
    }

    #[test]
    fn lowercases_before_lookup() {
        let v = Vocabularies::build(&[ex("Denver", "B-c", "i")]).unwrap();
        assert_eq!(v.tokens.get("denver"), Some(2));
        assert_eq!(v.encode(&ex("DENVER", "B-c", "i")).unwrap().tokens, vec![2]);
    }

    #[test]
    fn batch_sizes_and_masks() {
        let data: Vec<EncodedExample> = (0..10)
            .map(|i| EncodedExample {
                tokens: vec![2; 1 + i % 4],
                slots: vec![0; 1 + i % 4],
                intent: 0,
            })
            .collect();
        let sizes: Vec<usize> = batch_iterator(&data, 4, Some(3), 0).map(|b| b.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let a: Vec<Batch> = batch_iterator(&data, 4, Some(3), 1).collect();
        let b: Vec<Batch> = batch_iterator(&data, 4, Some(3), 1).collect();
        assert_eq!(a, b);
        let c: Vec<Batch> = batch_iterator(&data, 4, Some(3), 2).collect();
        assert_ne!(a, c);

        let two = vec![
            EncodedExample { tokens: vec![2, 3, 4], slots: vec![1, 1, 1], intent: 0 },
            EncodedExample { tokens: vec![2, 3, 4, 5, 6], slots: vec![1; 5], intent: 1 },
        ];
        let batch = batch_iterator(&two, 2, None, 0).next().unwrap();
        assert_eq!(batch.max_len(), 5);
        assert_eq!(batch.mask[0].iter().filter(|&&m| m).count(), 3);
        assert_eq!(batch.token_ids[0], vec![2, 3, 4, PAD_ID, PAD_ID]);
        assert_eq!(batch.row(0).0, &[2, 3, 4]);
    }

    fn arb_example() -> impl Strategy<Value = Example> {
        (1usize..7).prop_flat_map(|n| {
            (
                proptest::collection::vec("[a-zA-Z]{1,4}", n),
                proptest::collection::vec(prop_oneof![Just("O".to_string()), "[BI]-[a-c]"], n),
                "[a-c]{1,3}",
            )
                .prop_map(|(tokens, slot_tags, intent)| Example { tokens, slot_tags, intent })
        })
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(train in proptest::collection::vec(arb_example(), 1..12)) {
            let v = Vocabularies::build(&train).unwrap();
            for e in &train {
                let back = v.decode(&v.encode(e).unwrap()).unwrap();
                let lowered: Vec<String> = e.tokens.iter().map(|t| t.to_lowercase()).collect();
                prop_assert_eq!(back.tokens, lowered);
                prop_assert_eq!(&back.slot_tags, &e.slot_tags);
                prop_assert_eq!(&back.intent, &e.intent);
            }
        }

        #[test]
        fn masked_positions_reproduce_token_multiset(
            train in proptest::collection::vec(arb_example(), 1..20),
            bs in 1usize..6,
            seed in 0u64..1000,
        ) {
            let v = Vocabularies::build(&train).unwrap();
            let enc = v.encode_all(&train).unwrap();
            let mut expected: Vec<usize> = enc.iter().flat_map(|e| e.tokens.clone()).collect();
            let mut seen = Vec::new();
            for b in batch_iterator(&enc, bs, Some(seed), 0) {
                for (row, mask) in b.token_ids.iter().zip(&b.mask) {
                    seen.extend(row.iter().zip(mask).filter(|(_, &m)| m).map(|(&t, _)| t));
                    prop_assert!(row.iter().zip(mask).all(|(&t, &m)| m || t == PAD_ID));
                }
            }
            expected.sort_unstable();
            seen.sort_unstable();
            prop_assert_eq!(expected, seen);
        }
    }
}
