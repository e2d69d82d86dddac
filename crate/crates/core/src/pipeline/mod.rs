//! Repeated rounds of split → train → predict → attribute → select, followed by
//! cross-round aggregation and stability filtering.

mod aggregate;
mod artifacts;
mod seed;
mod settings;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{explain, Explanation, IgConfig};
use crate::corpus::{stratified_split, Corpus, SplitSpec};
use crate::error::{Error, Result};
use crate::model::{predicted_indices, sigmoid, train, ModelParams, TrainConfig, Vocab};

pub use aggregate::{aggregate, filter_keywords, top_n_words, AggregateRecord};
pub use artifacts::{
    read_aggregate_json, read_round_artifacts, write_aggregate_json, write_aggregate_tsv,
    write_round_artifacts,
};
pub use seed::{round_seed, splitmix64};
pub use settings::{normalize_key, parse_settings, Setting, PIPELINE_KEYS};

/// Which (document, class) decisions contribute word selections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionTarget {
    /// Predicted and gold.
    #[default]
    TruePositive,
    /// Predicted but not gold.
    FalsePositive,
    /// Gold but not predicted.
    FalseNegative,
}

impl SelectionTarget {
    pub fn matches(self, predicted: bool, gold: bool) -> bool {
        match self {
            SelectionTarget::TruePositive => predicted && gold,
            SelectionTarget::FalsePositive => predicted && !gold,
            SelectionTarget::FalseNegative => !predicted && gold,
        }
    }
}

impl FromStr for SelectionTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true-positive" | "tp" => Ok(SelectionTarget::TruePositive),
            "false-positive" | "fp" => Ok(SelectionTarget::FalsePositive),
            "false-negative" | "fn" => Ok(SelectionTarget::FalseNegative),
            _ => Err(Error::validation(format!("unknown selection target {s:?}"))),
        }
    }
}

impl fmt::Display for SelectionTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionTarget::TruePositive => "true-positive",
            SelectionTarget::FalsePositive => "false-positive",
            SelectionTarget::FalseNegative => "false-negative",
        })
    }
}

/// How `mean_score` combines selected instances across rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanKind {
    /// One mean over every selected (document, round) instance.
    #[default]
    Pooled,
    /// Mean of the per-round means, over rounds where the pair was selected.
    PerRound,
}

impl FromStr for MeanKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(MeanKind::Pooled),
            "per-round" => Ok(MeanKind::PerRound),
            _ => Err(Error::validation(format!("unknown mean kind {s:?}"))),
        }
    }
}

impl fmt::Display for MeanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeanKind::Pooled => "pooled",
            MeanKind::PerRound => "per-round",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Training share of each split.
    pub split_ratio: f64,
    /// Words kept per (document, class).
    pub top_n: usize,
    pub rounds: usize,
    /// Keep keywords whose selection frequency is strictly above this.
    pub sf_threshold: f64,
    /// Keep keywords whose document frequency is strictly above this.
    pub min_doc_freq: usize,
    pub ig: IgConfig,
    pub selection_target: SelectionTarget,
    pub mean_kind: MeanKind,
    pub master_seed: u64,
    /// Concurrent rounds. Results do not depend on this.
    pub workers: usize,
    /// Keep every per-document explanation in the round results.
    pub dump_attributions: bool,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            split_ratio: 0.67,
            top_n: 20,
            rounds: 100,
            sf_threshold: 0.6,
            min_doc_freq: 5,
            ig: IgConfig::default(),
            selection_target: SelectionTarget::TruePositive,
            mean_kind: MeanKind::Pooled,
            master_seed: 0,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            dump_attributions: false,
            train: TrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        SplitSpec::new(self.split_ratio, 0)?;
        if self.top_n == 0 {
            return Err(Error::validation("top_n must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(Error::validation("rounds must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.sf_threshold) {
            return Err(Error::validation("sf_threshold must be in [0, 1]"));
        }
        if self.ig.steps == 0 {
            return Err(Error::validation("ig steps must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::validation("workers must be at least 1"));
        }
        self.train.validate()
    }
}

/// Precision/recall/F1 counts for one class or the micro average.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Scores {
    /// Zero-denominator ratios are defined as 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    /// Validation documents carrying this class.
    pub support: usize,
    #[serde(flatten)]
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub per_class: Vec<ClassMetrics>,
    pub micro: Scores,
}

/// One selected word of one (document, class) in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub class: String,
    pub word: String,
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RoundStatus {
    Completed,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round_index: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub status: RoundStatus,
    pub train_docs: usize,
    pub validation_docs: usize,
    pub metrics: RoundMetrics,
    pub selections: Vec<Selection>,
    /// Every explanation that fed a selection, when dumping is enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanations: Option<Vec<Explanation>>,
}

impl RoundResult {
    pub fn is_completed(&self) -> bool {
        self.status == RoundStatus::Completed
    }
}

/// Run round `round_index`. Training divergence yields a failed round, not an error.
pub fn run_round(
    corpus: &Corpus,
    config: &PipelineConfig,
    round_index: usize,
) -> Result<RoundResult> {
    config.validate()?;
    if round_index >= config.rounds {
        return Err(Error::validation(format!(
            "round index {round_index} is outside 0..{}",
            config.rounds
        )));
    }
    let seed = round_seed(config.master_seed, round_index);
    let split = stratified_split(
        corpus,
        SplitSpec::new(
            config.split_ratio,
            seed::stream_seed(seed, seed::SPLIT_STREAM),
        )?,
    );
    let mut result = RoundResult {
        round_index,
        seed,
        status: RoundStatus::Completed,
        train_docs: split.train.len(),
        validation_docs: split.validation.len(),
        metrics: RoundMetrics::default(),
        selections: Vec::new(),
        explanations: config.dump_attributions.then(Vec::new),
    };

    let train_config = TrainConfig {
        seed: seed::stream_seed(seed, seed::MODEL_STREAM),
        ..config.train.clone()
    };
    let init = ModelParams::init(
        Vocab::from_corpus(&split.train),
        corpus.label_space().clone(),
        &train_config,
    );
    let params = match train(init, &split.train, &train_config) {
        Ok((params, _)) => params,
        Err(e @ Error::Diverged { .. }) => {
            log::warn!("round {round_index} failed: {e}");
            result.status = RoundStatus::Failed {
                reason: e.to_string(),
            };
            return Ok(result);
        }
        Err(e) => return Err(e),
    };

    let space = corpus.label_space();
    let classes = space.len();
    let mut counts = vec![(0usize, 0usize, 0usize, 0usize); classes]; // tp, fp, fn, support
    for doc in split.validation.documents() {
        let gold = doc.label_mask(space);
        let mut predicted = vec![false; classes];
        if !doc.subwords.is_empty() {
            let probs: Vec<f64> = params.forward(doc)?.0.into_iter().map(sigmoid).collect();
            for c in predicted_indices(&probs, config.train.decision_threshold) {
                predicted[c] = true;
            }
        }
        for c in 0..classes {
            let entry = &mut counts[c];
            match (predicted[c], gold[c]) {
                (true, true) => entry.0 += 1,
                (true, false) => entry.1 += 1,
                (false, true) => entry.2 += 1,
                (false, false) => {}
            }
            if gold[c] {
                entry.3 += 1;
            }
            if doc.subwords.is_empty() || !config.selection_target.matches(predicted[c], gold[c]) {
                continue;
            }
            let explanation = explain(&params, doc, c, &config.ig)?;
            for record in top_n_words(&explanation.word_scores, config.top_n) {
                result.selections.push(Selection {
                    class: record.class_name,
                    word: record.word,
                    doc_id: record.doc_id,
                    score: record.score,
                });
            }
            if let Some(dump) = result.explanations.as_mut() {
                dump.push(explanation);
            }
        }
    }

    let mut micro = (0, 0, 0);
    result.metrics.per_class = counts
        .iter()
        .enumerate()
        .map(|(c, &(tp, fp, fn_, support))| {
            micro.0 += tp;
            micro.1 += fp;
            micro.2 += fn_;
            ClassMetrics {
                class: space.name(c).to_owned(),
                support,
                scores: Scores::from_counts(tp, fp, fn_),
            }
        })
        .collect();
    result.metrics.micro = Scores::from_counts(micro.0, micro.1, micro.2);
    log::info!(
        "round {round_index}: micro F1 {:.4}, {} selections",
        result.metrics.micro.f1,
        result.selections.len()
    );
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub rounds: Vec<RoundResult>,
    pub aggregate: Vec<AggregateRecord>,
    pub keywords: Vec<AggregateRecord>,
}

/// All rounds (in parallel, up to `config.workers`), then aggregation and filtering.
pub fn run_pipeline(corpus: &Corpus, config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
    let rounds: Vec<RoundResult> = pool.install(|| {
        (0..config.rounds)
            .into_par_iter()
            .map(|i| run_round(corpus, config, i))
            .collect::<Result<Vec<_>>>()
    })?;
    let failed = rounds.iter().filter(|r| !r.is_completed()).count();
    if failed > 0 {
        log::warn!(
            "{failed} of {} rounds failed and count as non-selections",
            config.rounds
        );
    }
    let aggregate = aggregate(&rounds, corpus, config);
    let keywords = filter_keywords(&aggregate, config);
    Ok(PipelineOutput {
        rounds,
        aggregate,
        keywords,
    })
}
