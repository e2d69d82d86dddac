//! Iterative multilabel stratification into a training and a validation part.
//!
//! Labels are processed rarest first. Every still-unassigned document carrying
//! the current label goes to the part that most needs that label, ties broken
//! by overall need and then by the seeded generator. Unlabelled documents are
//! placed last, and a final pass moves documents between parts until the
//! training size is within one of `ratio * len`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Corpus;
use crate::error::{Error, Result};

const TRAIN: usize = 0;
const VALIDATION: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    ratio: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(ratio: f64, seed: u64) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::validation(format!(
                "split ratio must be in (0, 1), got {ratio}"
            )));
        }
        Ok(Self { ratio, seed })
    }

    /// Fraction of documents assigned to training.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Corpus,
    pub validation: Corpus,
    /// Corpus indices of the training documents, ascending.
    pub train_indices: Vec<usize>,
    /// Corpus indices of the validation documents, ascending.
    pub validation_indices: Vec<usize>,
    /// Classes too small to stratify.
    pub warnings: Vec<String>,
}

pub fn stratified_split(corpus: &Corpus, spec: SplitSpec) -> Split {
    let n = corpus.len();
    let num_classes = corpus.label_space().len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let doc_labels: Vec<Vec<usize>> = corpus
        .documents()
        .iter()
        .map(|d| {
            d.labels
                .iter()
                .filter_map(|l| corpus.label_space().index_of(l))
                .collect()
        })
        .collect();

    let class_counts = corpus.class_counts();
    let mut warnings = Vec::new();
    for (c, &count) in class_counts.iter().enumerate() {
        if count < 2 {
            let msg = format!(
                "class {:?} has {count} document(s); cannot stratify, assigned best-effort",
                corpus.label_space().name(c)
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    let ratios = [spec.ratio, 1.0 - spec.ratio];
    let mut need_total = [ratios[0] * n as f64, ratios[1] * n as f64];
    let mut need: Vec<[f64; 2]> = class_counts
        .iter()
        .map(|&c| [ratios[0] * c as f64, ratios[1] * c as f64])
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut remaining = class_counts.clone();

    let assign = |doc: usize,
                  part: usize,
                  assignment: &mut Vec<Option<usize>>,
                  need: &mut Vec<[f64; 2]>,
                  need_total: &mut [f64; 2],
                  remaining: &mut Vec<usize>| {
        assignment[doc] = Some(part);
        need_total[part] -= 1.0;
        for &l in &doc_labels[doc] {
            need[l][part] -= 1.0;
            remaining[l] -= 1;
        }
    };

    while let Some(label) = (0..num_classes)
        .filter(|&l| remaining[l] > 0)
        .min_by_key(|&l| (remaining[l], l))
    {
        for &doc in &order {
            if assignment[doc].is_some() || !doc_labels[doc].contains(&label) {
                continue;
            }
            let part = pick_part(&need[label], &need_total, &mut rng);
            assign(
                doc,
                part,
                &mut assignment,
                &mut need,
                &mut need_total,
                &mut remaining,
            );
        }
    }

    for &doc in &order {
        if assignment[doc].is_none() {
            let part = pick_part(&need_total, &need_total, &mut rng);
            assign(
                doc,
                part,
                &mut assignment,
                &mut need,
                &mut need_total,
                &mut remaining,
            );
        }
    }

    let mut parts: Vec<usize> = assignment.into_iter().map(|a| a.unwrap_or(TRAIN)).collect();
    rebalance(&mut parts, &doc_labels, &class_counts, &order, spec.ratio);

    let train_indices: Vec<usize> = (0..n).filter(|&i| parts[i] == TRAIN).collect();
    let validation_indices: Vec<usize> = (0..n).filter(|&i| parts[i] == VALIDATION).collect();
    Split {
        train: corpus.subset(&train_indices),
        validation: corpus.subset(&validation_indices),
        train_indices,
        validation_indices,
        warnings,
    }
}

fn pick_part<R: Rng>(label_need: &[f64; 2], total_need: &[f64; 2], rng: &mut R) -> usize {
    use std::cmp::Ordering::*;
    match label_need[TRAIN].total_cmp(&label_need[VALIDATION]) {
        Greater => TRAIN,
        Less => VALIDATION,
        Equal => match total_need[TRAIN].total_cmp(&total_need[VALIDATION]) {
            Greater => TRAIN,
            Less => VALIDATION,
            Equal => {
                if rng.gen_bool(0.5) {
                    TRAIN
                } else {
                    VALIDATION
                }
            }
        },
    }
}

/// Move documents until `|train - ratio * n| <= 1`, preferring documents whose
/// move hurts per-class proportions least.
fn rebalance(
    parts: &mut [usize],
    doc_labels: &[Vec<usize>],
    class_counts: &[usize],
    order: &[usize],
    ratio: f64,
) {
    let n = parts.len();
    let target = ratio * n as f64;
    let mut train_per_class = vec![0usize; class_counts.len()];
    for (doc, &p) in parts.iter().enumerate() {
        if p == TRAIN {
            for &l in &doc_labels[doc] {
                train_per_class[l] += 1;
            }
        }
    }
    loop {
        let train_len = parts.iter().filter(|&&p| p == TRAIN).count() as f64;
        let (from, to) = if train_len > target + 1.0 {
            (TRAIN, VALIDATION)
        } else if train_len < target - 1.0 {
            (VALIDATION, TRAIN)
        } else {
            return;
        };
        // score = how far the move pushes each class's train share toward ratio
        let score = |doc: usize| -> f64 {
            if doc_labels[doc].is_empty() {
                return f64::INFINITY;
            }
            doc_labels[doc]
                .iter()
                .map(|&l| {
                    let size = class_counts[l] as f64;
                    let share = train_per_class[l] as f64 / size;
                    if from == TRAIN {
                        share - ratio
                    } else {
                        ratio - share
                    }
                })
                .sum()
        };
        let mut best: Option<(usize, f64)> = None;
        for &doc in order {
            if parts[doc] != from {
                continue;
            }
            let s = score(doc);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((doc, s));
            }
        }
        let Some((doc, _)) = best else { return };
        parts[doc] = to;
        for &l in &doc_labels[doc] {
            if to == TRAIN {
                train_per_class[l] += 1;
            } else {
                train_per_class[l] -= 1;
            }
        }
    }
}
