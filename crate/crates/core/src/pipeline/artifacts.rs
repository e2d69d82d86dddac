//! Round artifacts (`rounds/round-NNNN.json`) and aggregate tables.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use super::{AggregateRecord, RoundResult};
use crate::error::{Error, Result};

const ROUNDS_DIR: &str = "rounds";

pub fn write_round_artifacts(run_dir: &Path, rounds: &[RoundResult]) -> Result<()> {
    let dir = run_dir.join(ROUNDS_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for round in rounds {
        let path = dir.join(format!("round-{:04}.json", round.round_index));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, round)?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Every `round-*.json` under `run_dir/rounds`, sorted by round index.
pub fn read_round_artifacts(run_dir: &Path) -> Result<Vec<RoundResult>> {
    let dir = run_dir.join(ROUNDS_DIR);
    let mut rounds = Vec::new();
    for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        let is_round = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("round-") && n.ends_with(".json"));
        if !is_round {
            continue;
        }
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let round: RoundResult = serde_json::from_reader(BufReader::new(file))?;
        rounds.push(round);
    }
    if rounds.is_empty() {
        return Err(Error::validation(format!(
            "no round artifacts in {}",
            dir.display()
        )));
    }
    rounds.sort_by_key(|r| r.round_index);
    Ok(rounds)
}

pub const AGGREGATE_COLUMNS: [&str; 7] = [
    "class",
    "word",
    "mean_score",
    "selection_frequency",
    "rounds_selected",
    "instance_count",
    "doc_frequency",
];

/// Tab-separated aggregate table with a header row. Floats use the shortest
/// representation that round-trips.
pub fn write_aggregate_tsv<W: Write>(
    mut out: W,
    records: &[AggregateRecord],
) -> std::io::Result<()> {
    writeln!(out, "{}", AGGREGATE_COLUMNS.join("\t"))?;
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.class,
            r.word,
            r.mean_score,
            r.selection_frequency,
            r.rounds_selected,
            r.instance_count,
            r.doc_frequency
        )?;
    }
    Ok(())
}

pub fn write_aggregate_json<W: Write>(out: W, records: &[AggregateRecord]) -> Result<()> {
    serde_json::to_writer_pretty(out, records)?;
    Ok(())
}

pub fn read_aggregate_json(path: &Path) -> Result<Vec<AggregateRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{RoundMetrics, RoundStatus, Selection};

    #[test]
    fn rounds_round_trip_through_files() {
        let rounds: Vec<RoundResult> = (0..3)
            .map(|i| RoundResult {
                round_index: i,
                seed: 1000 + i as u64,
                status: if i == 1 {
                    RoundStatus::Failed {
                        reason: "diverged".into(),
                    }
                } else {
                    RoundStatus::Completed
                },
                train_docs: 10,
                validation_docs: 5,
                metrics: RoundMetrics::default(),
                selections: vec![Selection {
                    class: "A".into(),
                    word: "w".into(),
                    doc_id: "d".into(),
                    score: 0.1 + i as f64 / 3.0,
                }],
                explanations: None,
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        write_round_artifacts(dir.path(), &rounds).unwrap();
        assert_eq!(read_round_artifacts(dir.path()).unwrap(), rounds);
    }

    #[test]
    fn tsv_layout() {
        let mut buf = Vec::new();
        let rec = AggregateRecord {
            class: "ID".into(),
            word: "question".into(),
            mean_score: 0.5874,
            selection_frequency: 1.0,
            rounds_selected: 100,
            instance_count: 412,
            doc_frequency: 77,
        };
        write_aggregate_tsv(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "class\tword\tmean_score\tselection_frequency\trounds_selected\tinstance_count\tdoc_frequency\n\
             ID\tquestion\t0.5874\t1\t100\t412\t77\n"
        );
    }
}
