//! A small, seeded, ATIS-flavoured corpus generator for tests, examples and
//! smoke runs when the real corpora are not at hand.

use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Example;
use crate::error::{Error, Result};

const CITIES: &[&str] = &["boston", "denver", "atlanta", "dallas", "new york", "san francisco", "pittsburgh", "baltimore"];
const DAYS: &[&str] = &["monday", "tuesday", "friday", "sunday", "tomorrow"];
const TIMES: &[&str] = &["morning", "evening", "afternoon"];
const AIRLINES: &[&str] = &["delta", "united", "american airlines"];

/// Pushes `words` tagged as one span of `slot` (or `O` when `slot` is empty).
fn push(tokens: &mut Vec<String>, tags: &mut Vec<String>, words: &str, slot: &str) {
    for (k, w) in words.split(' ').enumerate() {
        tokens.push(w.to_string());
        tags.push(match (slot, k) {
            ("", _) => "O".to_string(),
            (s, 0) => format!("B-{s}"),
            (s, _) => format!("I-{s}"),
        });
    }
}

fn pick<'a, R: Rng + ?Sized>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty list")
}

/// One utterance from a handful of intent templates.
pub fn utterance<R: Rng + ?Sized>(rng: &mut R) -> Example {
    let (mut tokens, mut tags) = (Vec::new(), Vec::new());
    let intent = match rng.random_range(0..5) {
        0 => {
            push(&mut tokens, &mut tags, pick(rng, &["show me flights", "i want to fly", "list flights"]), "");
            push(&mut tokens, &mut tags, "from", "");
            push(&mut tokens, &mut tags, pick(rng, CITIES), "fromloc.city_name");
            push(&mut tokens, &mut tags, "to", "");
            push(&mut tokens, &mut tags, pick(rng, CITIES), "toloc.city_name");
            if rng.random_bool(0.5) {
                push(&mut tokens, &mut tags, "on", "");
                push(&mut tokens, &mut tags, pick(rng, DAYS), "depart_date.day_name");
            }
            "atis_flight"
        }
        1 => {
            push(&mut tokens, &mut tags, pick(rng, &["how much is a ticket", "what is the fare"]), "");
            push(&mut tokens, &mut tags, "from", "");
            push(&mut tokens, &mut tags, pick(rng, CITIES), "fromloc.city_name");
            push(&mut tokens, &mut tags, "to", "");
            push(&mut tokens, &mut tags, pick(rng, CITIES), "toloc.city_name");
            "atis_airfare"
        }
        2 => {
            push(&mut tokens, &mut tags, pick(rng, &["ground transportation in", "is there a taxi in"]), "");
            push(&mut tokens, &mut tags, pick(rng, CITIES), "city_name");
            "atis_ground_service"
        }
        3 => {
            push(&mut tokens, &mut tags, "which", "");
            push(&mut tokens, &mut tags, pick(rng, AIRLINES), "airline_name");
            push(&mut tokens, &mut tags, "flights leave", "");
            push(&mut tokens, &mut tags, pick(rng, CITIES), "fromloc.city_name");
            push(&mut tokens, &mut tags, "in the", "");
            push(&mut tokens, &mut tags, pick(rng, TIMES), "depart_time.period_of_day");
            "atis_airline"
        }
        _ => {
            push(&mut tokens, &mut tags, "what does", "");
            push(&mut tokens, &mut tags, pick(rng, &["fare code y", "restriction ap", "class q"]), "fare_basis_code");
            push(&mut tokens, &mut tags, "mean", "");
            "atis_abbreviation"
        }
    };
    Example {
        tokens,
        slot_tags: tags,
        intent: intent.to_string(),
    }
}

/// `n` utterances drawn from a generator seeded with `seed`.
pub fn examples(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| utterance(&mut rng)).collect()
}

/// Writes `examples` as a split directory (`seq.in`, `seq.out`, `label`).
pub fn write_split(dir: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let dir = dir.as_ref();
    let io = |source| Error::Io {
        path: dir.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(io)?;
    let join = |f: &dyn Fn(&Example) -> String| examples.iter().map(|e| f(e) + "\n").collect::<String>();
    fs::write(dir.join("seq.in"), join(&|e| e.tokens.join(" "))).map_err(io)?;
    fs::write(dir.join("seq.out"), join(&|e| e.slot_tags.join(" "))).map_err(io)?;
    fs::write(dir.join("label"), join(&|e| e.intent.clone())).map_err(io)?;
    Ok(())
}

/// Writes `train/`, `valid/` and `test/` splits under `root`. Validation and
/// test examples use different seeds from training.
pub fn write_dataset(root: impl AsRef<Path>, train: usize, valid: usize, test: usize, seed: u64) -> Result<()> {
    let root = root.as_ref();
    write_split(root.join("train"), &examples(train, seed))?;
    write_split(root.join("valid"), &examples(valid, seed.wrapping_add(1)))?;
    write_split(root.join("test"), &examples(test, seed.wrapping_add(2)))?;
    Ok(())
}
