use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{MeanKind, PipelineConfig, RoundResult};
use crate::attribution::WordScoreRecord;
use crate::corpus::Corpus;

/// Cross-round statistics of one (class, word) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub class: String,
    pub word: String,
    pub mean_score: f64,
    pub selection_frequency: f64,
    pub rounds_selected: usize,
    pub instance_count: usize,
    pub doc_frequency: usize,
}

/// Highest-scoring `n` records; equal scores are ordered by word.
pub fn top_n_words(records: &[WordScoreRecord], n: usize) -> Vec<WordScoreRecord> {
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.word.cmp(&b.word))
    });
    sorted.truncate(n);
    sorted
}

#[derive(Default)]
struct Accumulator {
    sum: f64,
    count: usize,
    // (round, sum, count) for rounds in which the pair was selected
    per_round: Vec<(usize, f64, usize)>,
}

/// Mean scores and selection frequencies of every (class, word) ever selected.
///
/// Rounds are merged in ascending `round_index`; the selection-frequency
/// denominator is always `config.rounds`. Output is grouped by class in label
/// order, then ranked by mean score (descending) and word.
pub fn aggregate(
    rounds: &[RoundResult],
    corpus: &Corpus,
    config: &PipelineConfig,
) -> Vec<AggregateRecord> {
    let mut ordered: Vec<&RoundResult> = rounds.iter().collect();
    ordered.sort_by_key(|r| r.round_index);

    let mut acc: BTreeMap<(usize, String), Accumulator> = BTreeMap::new();
    let class_index: HashMap<&str, usize> = corpus
        .label_space()
        .classes()
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    for round in ordered.iter().filter(|r| r.is_completed()) {
        for s in &round.selections {
            let Some(&c) = class_index.get(s.class.as_str()) else {
                log::warn!(
                    "round {} selected unknown class {:?}",
                    round.round_index,
                    s.class
                );
                continue;
            };
            let a = acc.entry((c, s.word.clone())).or_default();
            a.sum += s.score;
            a.count += 1;
            match a.per_round.last_mut() {
                Some((r, sum, count)) if *r == round.round_index => {
                    *sum += s.score;
                    *count += 1;
                }
                _ => a.per_round.push((round.round_index, s.score, 1)),
            }
        }
    }

    let n = config.rounds as f64;
    let mut out: Vec<(usize, AggregateRecord)> = acc
        .into_iter()
        .map(|((c, word), a)| {
            let mean_score = match config.mean_kind {
                MeanKind::Pooled => a.sum / a.count as f64,
                MeanKind::PerRound => {
                    a.per_round
                        .iter()
                        .map(|(_, s, k)| s / *k as f64)
                        .sum::<f64>()
                        / a.per_round.len() as f64
                }
            };
            let doc_frequency = corpus.df(&word);
            (
                c,
                AggregateRecord {
                    class: corpus.label_space().name(c).to_owned(),
                    word,
                    mean_score,
                    selection_frequency: a.per_round.len() as f64 / n,
                    rounds_selected: a.per_round.len(),
                    instance_count: a.count,
                    doc_frequency,
                },
            )
        })
        .collect();
    out.sort_by(|(ca, a), (cb, b)| ca.cmp(cb).then_with(|| rank(a, b)));
    out.into_iter().map(|(_, r)| r).collect()
}

fn rank(a: &AggregateRecord, b: &AggregateRecord) -> Ordering {
    b.mean_score
        .total_cmp(&a.mean_score)
        .then_with(|| a.word.cmp(&b.word))
}

/// Keep records with `selection_frequency > t` and `doc_frequency > k`,
/// ranked by mean score within each class. Classes keep their input order.
pub fn filter_keywords(
    records: &[AggregateRecord],
    config: &PipelineConfig,
) -> Vec<AggregateRecord> {
    let mut class_order: HashMap<&str, usize> = HashMap::new();
    for r in records {
        let next = class_order.len();
        class_order.entry(r.class.as_str()).or_insert(next);
    }
    let mut kept: Vec<AggregateRecord> = records
        .iter()
        .filter(|r| {
            r.selection_frequency > config.sf_threshold && r.doc_frequency > config.min_doc_freq
        })
        .cloned()
        .collect();
    kept.sort_by(|a, b| {
        class_order[a.class.as_str()]
            .cmp(&class_order[b.class.as_str()])
            .then_with(|| rank(a, b))
    });
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, LabelSpace};
    use crate::pipeline::{RoundMetrics, RoundStatus, Selection};

    fn rec(word: &str, score: f64) -> WordScoreRecord {
        WordScoreRecord {
            word: word.into(),
            doc_id: "d".into(),
            class_name: "A".into(),
            score,
        }
    }

    fn words(v: &[WordScoreRecord]) -> Vec<&str> {
        v.iter().map(|r| r.word.as_str()).collect()
    }

    #[test]
    fn top_n_by_score() {
        let r = [rec("a", 0.9), rec("b", 0.5), rec("c", 0.1)];
        assert_eq!(words(&top_n_words(&r, 2)), vec!["a", "b"]);
        assert_eq!(words(&top_n_words(&r, 20)).len(), 3);
    }

    #[test]
    fn top_n_ties_are_lexicographic() {
        // every permutation of the input gives the same answer
        let base = [rec("c", 0.5), rec("a", 0.5), rec("b", 0.5)];
        let perms = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for p in perms {
            let input: Vec<_> = p.iter().map(|&i| base[i].clone()).collect();
            assert_eq!(words(&top_n_words(&input, 2)), vec!["a", "b"]);
        }
    }

    fn round(index: usize, selections: &[(&str, &str, f64)]) -> RoundResult {
        RoundResult {
            round_index: index,
            seed: 0,
            status: RoundStatus::Completed,
            train_docs: 0,
            validation_docs: 0,
            metrics: RoundMetrics::default(),
            selections: selections
                .iter()
                .map(|&(class, word, score)| Selection {
                    class: class.into(),
                    word: word.into(),
                    doc_id: "x".into(),
                    score,
                })
                .collect(),
            explanations: None,
        }
    }

    fn corpus() -> Corpus {
        let docs = (0..7)
            .map(|i| {
                Document::new(
                    format!("d{i}"),
                    if i < 6 { "recipe how" } else { "how" },
                    ["A"],
                    4,
                )
            })
            .collect();
        Corpus::new(LabelSpace::new(["A", "B"]).unwrap(), docs).unwrap()
    }

    #[test]
    fn pooled_mean_and_selection_frequency() {
        let rounds = vec![
            round(1, &[("A", "recipe", 0.2)]),
            round(2, &[("A", "recipe", 0.4)]),
            round(3, &[("A", "recipe", 0.6)]),
            round(0, &[]),
            round(4, &[]),
        ];
        let cfg = PipelineConfig {
            rounds: 5,
            ..PipelineConfig::default()
        };
        let agg = aggregate(&rounds, &corpus(), &cfg);
        assert_eq!(agg.len(), 1);
        let r = &agg[0];
        assert!((r.mean_score - 0.4).abs() < 1e-15);
        assert_eq!(r.selection_frequency, 0.6);
        assert_eq!(r.rounds_selected, 3);
        assert_eq!(r.instance_count, 3);
        assert_eq!(r.doc_frequency, 6);
    }

    #[test]
    fn pooled_versus_per_round_mean() {
        let rounds = vec![
            round(0, &[("A", "how", 0.1), ("A", "how", 0.3)]),
            round(1, &[("A", "how", 0.8)]),
        ];
        let pooled = aggregate(
            &rounds,
            &corpus(),
            &PipelineConfig {
                rounds: 2,
                ..PipelineConfig::default()
            },
        );
        assert!((pooled[0].mean_score - 0.4).abs() < 1e-15);
        assert_eq!(pooled[0].instance_count, 3);
        assert_eq!(pooled[0].rounds_selected, 2);
        let per_round = aggregate(
            &rounds,
            &corpus(),
            &PipelineConfig {
                rounds: 2,
                mean_kind: MeanKind::PerRound,
                ..PipelineConfig::default()
            },
        );
        assert!((per_round[0].mean_score - 0.5).abs() < 1e-15);
    }

    #[test]
    fn failed_rounds_count_in_denominator_only() {
        let mut failed = round(1, &[("A", "how", 0.9)]);
        failed.status = RoundStatus::Failed {
            reason: "diverged".into(),
        };
        let rounds = vec![round(0, &[("A", "how", 0.1)]), failed];
        let agg = aggregate(
            &rounds,
            &corpus(),
            &PipelineConfig {
                rounds: 2,
                ..PipelineConfig::default()
            },
        );
        assert_eq!(agg[0].selection_frequency, 0.5);
        assert!((agg[0].mean_score - 0.1).abs() < 1e-15);
    }

    #[test]
    fn never_selected_has_no_record() {
        let agg = aggregate(
            &[round(0, &[])],
            &corpus(),
            &PipelineConfig {
                rounds: 1,
                ..PipelineConfig::default()
            },
        );
        assert!(agg.is_empty());
    }

    fn agg(class: &str, word: &str, score: f64, sf: f64, df: usize) -> AggregateRecord {
        AggregateRecord {
            class: class.into(),
            word: word.into(),
            mean_score: score,
            selection_frequency: sf,
            rounds_selected: 1,
            instance_count: 1,
            doc_frequency: df,
        }
    }

    #[test]
    fn filter_uses_strict_inequalities() {
        let cfg = PipelineConfig {
            sf_threshold: 0.6,
            min_doc_freq: 5,
            ..PipelineConfig::default()
        };
        assert_eq!(
            filter_keywords(&[agg("A", "w", 0.1, 0.61, 10)], &cfg).len(),
            1
        );
        assert!(filter_keywords(&[agg("A", "w", 0.1, 0.60, 10)], &cfg).is_empty());
        assert!(filter_keywords(&[agg("A", "w", 0.1, 0.9, 5)], &cfg).is_empty());
    }

    #[test]
    fn filter_ranks_within_class() {
        let cfg = PipelineConfig {
            sf_threshold: 0.0,
            min_doc_freq: 0,
            ..PipelineConfig::default()
        };
        let input = [
            agg("B", "x", 0.1, 1.0, 9),
            agg("B", "y", 0.3, 1.0, 9),
            agg("A", "z", 0.2, 1.0, 9),
            agg("A", "a", 0.2, 1.0, 9),
        ];
        let out: Vec<(String, String)> = filter_keywords(&input, &cfg)
            .into_iter()
            .map(|r| (r.class, r.word))
            .collect();
        let expected = [("B", "y"), ("B", "x"), ("A", "a"), ("A", "z")];
        assert_eq!(out, expected.map(|(c, w)| (c.to_owned(), w.to_owned())));
    }
}
