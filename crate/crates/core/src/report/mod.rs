//! Keyword tables, F1 summaries, cross-class uniqueness and marker recovery,
//! plus writing a complete run directory.

mod render;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSpace, PlantedMarkers};
use crate::error::{Error, Result};
use crate::pipeline::{
    write_aggregate_json, write_aggregate_tsv, write_round_artifacts, AggregateRecord, RoundResult,
};

pub use render::{render_f1_summary, render_keyword_table, Format, EMPTY_MARKER};

/// Per-class keyword lists, ranked by mean score, at most `top_m` rows each.
/// Every class of the label space is present, possibly with an empty list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordTable {
    pub top_m: usize,
    pub classes: Vec<ClassKeywords>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassKeywords {
    pub class: String,
    pub keywords: Vec<AggregateRecord>,
}

impl KeywordTable {
    /// `records` must already be filtered; they are re-ranked here.
    pub fn new(records: &[AggregateRecord], label_space: &LabelSpace, top_m: usize) -> Self {
        let classes = label_space
            .classes()
            .iter()
            .map(|class| {
                let mut keywords: Vec<AggregateRecord> = records
                    .iter()
                    .filter(|r| &r.class == class)
                    .cloned()
                    .collect();
                keywords.sort_by(|a, b| {
                    b.mean_score
                        .total_cmp(&a.mean_score)
                        .then_with(|| a.word.cmp(&b.word))
                });
                keywords.truncate(top_m);
                ClassKeywords {
                    class: class.clone(),
                    keywords,
                }
            })
            .collect();
        Self { top_m, classes }
    }

    pub fn words(&self, class: &str) -> Vec<&str> {
        self.classes
            .iter()
            .find(|c| c.class == class)
            .map(|c| c.keywords.iter().map(|r| r.word.as_str()).collect())
            .unwrap_or_default()
    }
}

/// Mean and population standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassF1 {
    pub class: String,
    pub f1_mean: f64,
    pub f1_sd: f64,
    /// Mean number of validation documents carrying the class.
    pub support_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Summary {
    pub per_class: Vec<ClassF1>,
    pub micro_f1_mean: f64,
    pub micro_f1_sd: f64,
    pub rounds_used: usize,
    pub rounds_failed: usize,
}

/// Mean/SD of per-class and micro F1 over completed rounds.
pub fn f1_summary(rounds: &[RoundResult]) -> Result<F1Summary> {
    let mut done: Vec<&RoundResult> = rounds.iter().filter(|r| r.is_completed()).collect();
    if done.is_empty() {
        return Err(Error::validation("no successful rounds to summarize"));
    }
    done.sort_by_key(|r| r.round_index);
    let classes: Vec<String> = done[0]
        .metrics
        .per_class
        .iter()
        .map(|m| m.class.clone())
        .collect();
    let per_class = classes
        .iter()
        .enumerate()
        .map(|(i, class)| {
            let f1: Vec<f64> = done
                .iter()
                .map(|r| r.metrics.per_class[i].scores.f1)
                .collect();
            let support: Vec<f64> = done
                .iter()
                .map(|r| r.metrics.per_class[i].support as f64)
                .collect();
            let (f1_mean, f1_sd) = mean_sd(&f1);
            ClassF1 {
                class: class.clone(),
                f1_mean,
                f1_sd,
                support_mean: mean_sd(&support).0,
            }
        })
        .collect();
    let micro: Vec<f64> = done.iter().map(|r| r.metrics.micro.f1).collect();
    let (micro_f1_mean, micro_f1_sd) = mean_sd(&micro);
    Ok(F1Summary {
        per_class,
        micro_f1_mean,
        micro_f1_sd,
        rounds_used: done.len(),
        rounds_failed: rounds.len() - done.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessStat {
    pub top_m: usize,
    /// Class → number of its top-M words absent from every other class's top-M.
    pub per_class: Vec<(String, usize)>,
    pub mean: f64,
    pub sd: f64,
}

/// Count, per class, the top-M words no other class has in its top-M.
pub fn uniqueness(lists: &[(String, Vec<String>)], top_m: usize) -> UniquenessStat {
    let tops: Vec<HashSet<&str>> = lists
        .iter()
        .map(|(_, words)| words.iter().take(top_m).map(String::as_str).collect())
        .collect();
    let per_class: Vec<(String, usize)> = lists
        .iter()
        .enumerate()
        .map(|(i, (class, _))| {
            let unique = tops[i]
                .iter()
                .filter(|w| {
                    !tops
                        .iter()
                        .enumerate()
                        .any(|(j, other)| j != i && other.contains(*w))
                })
                .count();
            (class.clone(), unique)
        })
        .collect();
    let counts: Vec<f64> = per_class.iter().map(|(_, c)| *c as f64).collect();
    let (mean, sd) = mean_sd(&counts);
    UniquenessStat {
        top_m,
        per_class,
        mean,
        sd,
    }
}

/// Uniqueness over the lists of a keyword table.
pub fn table_uniqueness(table: &KeywordTable, top_m: usize) -> UniquenessStat {
    let lists: Vec<(String, Vec<String>)> = table
        .classes
        .iter()
        .map(|c| {
            (
                c.class.clone(),
                c.keywords.iter().map(|r| r.word.clone()).collect(),
            )
        })
        .collect();
    uniqueness(&lists, top_m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerRecovery {
    pub class: String,
    pub recall: f64,
    /// Fraction of the class's keywords that are its planted markers; 1 for an empty list.
    pub precision: f64,
    pub recovered: Vec<String>,
    pub missed: Vec<String>,
}

pub fn marker_recovery(table: &KeywordTable, planted: &PlantedMarkers) -> Vec<MarkerRecovery> {
    planted
        .iter()
        .map(|(class, markers)| {
            let keywords: BTreeSet<&str> = table.words(class).into_iter().collect();
            let recovered: Vec<String> = markers
                .iter()
                .filter(|m| keywords.contains(m.as_str()))
                .cloned()
                .collect();
            let missed = markers
                .iter()
                .filter(|m| !keywords.contains(m.as_str()))
                .cloned()
                .collect();
            let recall = if markers.is_empty() {
                1.0
            } else {
                recovered.len() as f64 / markers.len() as f64
            };
            let precision = if keywords.is_empty() {
                1.0
            } else {
                recovered.len() as f64 / keywords.len() as f64
            };
            MarkerRecovery {
                class: class.clone(),
                recall,
                precision,
                recovered,
                missed,
            }
        })
        .collect()
}

/// `run-<UTC timestamp>-seed<master_seed>`.
pub fn run_dir_name(timestamp: chrono::DateTime<chrono::Utc>, master_seed: u64) -> String {
    format!(
        "run-{}-seed{master_seed}",
        timestamp.format("%Y%m%dT%H%M%SZ")
    )
}

/// What [`write_reports`] needs besides the round results.
pub struct ReportInputs<'a> {
    pub label_space: &'a LabelSpace,
    pub aggregate: &'a [AggregateRecord],
    pub keywords: &'a [AggregateRecord],
    pub rounds: &'a [RoundResult],
    pub top_m: usize,
    pub planted: Option<&'a PlantedMarkers>,
}

/// Write every report file into `dir` and return their paths.
pub fn write_reports(dir: &Path, inputs: &ReportInputs<'_>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, body: &[u8]| -> Result<()> {
        let path = dir.join(name);
        let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        w.write_all(body).map_err(|e| Error::io(&path, e))?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };

    let table = KeywordTable::new(inputs.keywords, inputs.label_space, inputs.top_m);
    for (name, format) in [
        ("keywords.tsv", Format::Tsv),
        ("keywords.json", Format::Json),
        ("keywords.md", Format::Markdown),
    ] {
        emit(name, render_keyword_table(&table, format)?.as_bytes())?;
    }

    let summary = f1_summary(inputs.rounds)?;
    emit("f1_summary.tsv", render_f1_summary(&summary).as_bytes())?;

    let uniq = table_uniqueness(&table, inputs.top_m);
    emit(
        "uniqueness.json",
        serde_json::to_string_pretty(&uniq)?.as_bytes(),
    )?;

    if let Some(planted) = inputs.planted {
        let full = KeywordTable::new(inputs.keywords, inputs.label_space, usize::MAX);
        let recovery = marker_recovery(&full, planted);
        emit(
            "recovery.json",
            serde_json::to_string_pretty(&recovery)?.as_bytes(),
        )?;
    }

    let mut tsv = Vec::new();
    write_aggregate_tsv(&mut tsv, inputs.aggregate).map_err(|e| Error::io(dir, e))?;
    emit("aggregate.tsv", &tsv)?;
    let mut json = Vec::new();
    write_aggregate_json(&mut json, inputs.aggregate)?;
    emit("aggregate.json", &json)?;

    write_round_artifacts(dir, inputs.rounds)?;
    Ok(written)
}

/// Class → words, for quick lookups in tests and the CLI.
pub fn keyword_map(table: &KeywordTable) -> BTreeMap<String, Vec<String>> {
    table
        .classes
        .iter()
        .map(|c| {
            (
                c.class.clone(),
                c.keywords.iter().map(|r| r.word.clone()).collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{ClassMetrics, RoundMetrics, RoundStatus, Scores};

    fn rec(class: &str, word: &str, score: f64) -> AggregateRecord {
        AggregateRecord {
            class: class.into(),
            word: word.into(),
            mean_score: score,
            selection_frequency: 1.0,
            rounds_selected: 3,
            instance_count: 5,
            doc_frequency: 9,
        }
    }

    fn round(index: usize, micro: f64, class_f1: &[f64]) -> RoundResult {
        RoundResult {
            round_index: index,
            seed: 0,
            status: RoundStatus::Completed,
            train_docs: 0,
            validation_docs: 0,
            metrics: RoundMetrics {
                per_class: class_f1
                    .iter()
                    .enumerate()
                    .map(|(i, &f1)| ClassMetrics {
                        class: format!("c{i}"),
                        support: 10 + index,
                        scores: Scores {
                            f1,
                            ..Scores::default()
                        },
                    })
                    .collect(),
                micro: Scores {
                    f1: micro,
                    ..Scores::default()
                },
            },
            selections: vec![],
            explanations: None,
        }
    }

    #[test]
    fn table_truncates_and_keeps_empty_classes() {
        let space = LabelSpace::new(["A", "B"]).unwrap();
        let t = KeywordTable::new(&[rec("A", "lo", 0.1), rec("A", "hi", 0.9)], &space, 1);
        assert_eq!(t.words("A"), vec!["hi"]);
        assert!(t.words("B").is_empty());
        assert_eq!(t.classes.len(), 2);
    }

    #[test]
    fn two_round_statistics() {
        let s = f1_summary(&[round(0, 0.6, &[0.5]), round(1, 0.7, &[0.7])]).unwrap();
        assert!((s.micro_f1_mean - 0.65).abs() < 1e-12);
        assert!((s.micro_f1_sd - 0.05).abs() < 1e-12);
        assert_eq!(s.per_class[0].support_mean, 10.5);
        let single = f1_summary(&[round(0, 0.6, &[0.5])]).unwrap();
        assert_eq!(single.micro_f1_sd, 0.0);
    }

    #[test]
    fn summary_needs_a_successful_round() {
        let mut r = round(0, 0.6, &[0.5]);
        r.status = RoundStatus::Failed { reason: "x".into() };
        assert!(f1_summary(&[r.clone()]).is_err());
        let s = f1_summary(&[r, round(1, 0.4, &[0.1])]).unwrap();
        assert_eq!((s.rounds_used, s.rounds_failed), (1, 1));
    }

    fn lists(spec: &[(&str, &[&str])]) -> Vec<(String, Vec<String>)> {
        spec.iter()
            .map(|(c, ws)| (c.to_string(), ws.iter().map(|w| w.to_string()).collect()))
            .collect()
    }

    #[test]
    fn uniqueness_counts() {
        let disjoint = uniqueness(&lists(&[("A", &["x", "y"]), ("B", &["z", "w"])]), 2);
        assert_eq!(
            disjoint.per_class.iter().map(|p| p.1).collect::<Vec<_>>(),
            vec![2, 2]
        );
        let same = uniqueness(&lists(&[("A", &["x", "y"]), ("B", &["x", "y"])]), 2);
        assert_eq!(same.mean, 0.0);
        let partial = uniqueness(
            &lists(&[("A", &["x", "y", "z"]), ("B", &["z", "w", "v"])]),
            3,
        );
        assert_eq!(
            partial.per_class.iter().map(|p| p.1).collect::<Vec<_>>(),
            vec![2, 2]
        );
        assert_eq!(partial.sd, 0.0);
    }

    #[test]
    fn recovery_scores() {
        let space = LabelSpace::new(["A"]).unwrap();
        let planted: PlantedMarkers = [(
            "A".to_string(),
            ["m1", "m2", "m3"].map(String::from).into_iter().collect(),
        )]
        .into();
        let five: Vec<_> = ["m1", "m2", "m3", "b1", "b2"]
            .iter()
            .enumerate()
            .map(|(i, w)| rec("A", w, 1.0 - i as f64 / 10.0))
            .collect();
        let r = &marker_recovery(&KeywordTable::new(&five, &space, usize::MAX), &planted)[0];
        assert_eq!((r.recall, r.precision), (1.0, 0.6));

        let r = &marker_recovery(&KeywordTable::new(&[], &space, usize::MAX), &planted)[0];
        assert_eq!((r.recall, r.precision), (0.0, 1.0));

        let two = [rec("A", "m1", 0.5), rec("A", "m3", 0.4)];
        let r = &marker_recovery(&KeywordTable::new(&two, &space, usize::MAX), &planted)[0];
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.missed, vec!["m2"]);
    }

    #[test]
    fn run_dir_naming() {
        use chrono::TimeZone;
        let ts = chrono::Utc.with_ymd_and_hms(2026, 1, 2, 3, 4, 5).unwrap();
        assert_eq!(run_dir_name(ts, 42), "run-20260102T030405Z-seed42");
    }
}
