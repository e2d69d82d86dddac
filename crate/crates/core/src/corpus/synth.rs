//! Synthetic corpora with planted class markers.
//!
//! Background words are consonant-vowel syllable strings sampled from a Zipf
//! law. Marker words are vowel-consonant syllable strings, so they can never
//! collide with background words, and their first subword chunk is unique to
//! each marker.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Document, LabelSpace, DEFAULT_MAX_PIECE_LEN};
use crate::error::{Error, Result};

const CONSONANTS: [char; 12] = ['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't'];
const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];
const SYLLABLES: usize = CONSONANTS.len() * VOWELS.len();

/// Class name → planted marker words.
pub type PlantedMarkers = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub docs_per_class: usize,
    pub background_vocab_size: usize,
    pub markers_per_class: usize,
    pub marker_injection_prob: f64,
    /// Inclusive word-count range of the background part of a document.
    pub doc_length: (usize, usize),
    pub multilabel_prob: f64,
    pub zipf_exponent: f64,
    pub max_piece_len: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 4,
            docs_per_class: 500,
            background_vocab_size: 5000,
            markers_per_class: 3,
            marker_injection_prob: 0.8,
            doc_length: (30, 60),
            multilabel_prob: 0.1,
            zipf_exponent: 1.0,
            max_piece_len: DEFAULT_MAX_PIECE_LEN,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_classes", self.num_classes),
            ("docs_per_class", self.docs_per_class),
            ("background_vocab_size", self.background_vocab_size),
            ("markers_per_class", self.markers_per_class),
            ("doc_length.min", self.doc_length.0),
            ("max_piece_len", self.max_piece_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::validation(format!("{name} must be positive")));
            }
        }
        for (name, p) in [
            ("marker_injection_prob", self.marker_injection_prob),
            ("multilabel_prob", self.multilabel_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!(
                    "{name} must be in [0, 1], got {p}"
                )));
            }
        }
        if self.doc_length.0 > self.doc_length.1 {
            return Err(Error::validation("doc_length min exceeds max"));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return Err(Error::validation(
                "zipf_exponent must be finite and non-negative",
            ));
        }
        if self.background_vocab_size <= self.markers_per_class * self.num_classes {
            return Err(Error::validation(
                "background_vocab_size must exceed markers_per_class * num_classes",
            ));
        }
        if self.markers_per_class * self.num_classes > SYLLABLES {
            return Err(Error::validation(format!(
                "at most {SYLLABLES} marker words are supported"
            )));
        }
        if self.multilabel_prob > 0.0 && self.num_classes < 2 {
            return Err(Error::validation(
                "multilabel documents need at least two classes",
            ));
        }
        Ok(())
    }
}

/// Little-endian syllable digits of `n`, at least `min_digits` long.
fn digits(mut n: usize, min_digits: usize) -> Vec<usize> {
    let mut out = Vec::new();
    while n > 0 || out.len() < min_digits {
        out.push(n % SYLLABLES);
        n /= SYLLABLES;
    }
    out
}

fn background_word(index: usize) -> String {
    // offset keeps every word at two syllables or more; no leading zero digit
    // on the most significant end makes the encoding injective
    digits(index + SYLLABLES, 2)
        .into_iter()
        .flat_map(|d| [CONSONANTS[d / VOWELS.len()], VOWELS[d % VOWELS.len()]])
        .collect()
}

fn marker_word(index: usize) -> String {
    // three syllables; the first one varies fastest so the leading chunk is unique
    digits(index + SYLLABLES * SYLLABLES, 3)
        .into_iter()
        .flat_map(|d| [VOWELS[d % VOWELS.len()], CONSONANTS[d / VOWELS.len()]])
        .collect()
}

pub fn class_name(index: usize) -> String {
    format!("C{index}")
}

pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<(Corpus, PlantedMarkers)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let classes: Vec<String> = (0..config.num_classes).map(class_name).collect();
    let label_space = LabelSpace::new(classes.clone())?;

    let markers: Vec<Vec<String>> = (0..config.num_classes)
        .map(|c| {
            (0..config.markers_per_class)
                .map(|j| marker_word(c * config.markers_per_class + j))
                .collect()
        })
        .collect();
    let background: Vec<String> = (0..config.background_vocab_size)
        .map(background_word)
        .collect();
    let zipf = WeightedIndex::new(
        (1..=config.background_vocab_size).map(|rank| (rank as f64).powf(-config.zipf_exponent)),
    )
    .map_err(|e| Error::validation(format!("zipf weights: {e}")))?;

    let mut documents = Vec::with_capacity(config.num_classes * config.docs_per_class);
    for c in 0..config.num_classes {
        for i in 0..config.docs_per_class {
            let len = rng.gen_range(config.doc_length.0..=config.doc_length.1);
            let mut words: Vec<&str> = (0..len)
                .map(|_| background[zipf.sample(&mut rng)].as_str())
                .collect();
            let mut labels = vec![c];
            if rng.gen_bool(config.multilabel_prob) {
                let other = (c + rng.gen_range(1..config.num_classes)) % config.num_classes;
                labels.push(other);
            }
            for &l in &labels {
                for m in &markers[l] {
                    if rng.gen_bool(config.marker_injection_prob) {
                        words.push(m.as_str());
                    }
                }
            }
            words.shuffle(&mut rng);
            documents.push(Document::new(
                format!("syn-{c}-{i:05}"),
                words.join(" "),
                labels.iter().map(|&l| classes[l].clone()),
                config.max_piece_len,
            ));
        }
    }

    let corpus = Corpus::new(label_space, documents)?;
    let planted = classes
        .into_iter()
        .zip(markers)
        .map(|(c, ms)| (c, ms.into_iter().collect()))
        .collect();
    Ok((corpus, planted))
}

/// Write the class → markers sidecar as pretty JSON.
pub fn write_markers(path: &Path, planted: &PlantedMarkers) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), planted)?;
    Ok(())
}
