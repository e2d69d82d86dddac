//! Plain-text `key = value` settings for [`PipelineConfig`].
//!
//! Blank lines and lines starting with `#` are ignored. Keys accept `-` or
//! `_` as separators.

use std::fmt::Write;

use super::PipelineConfig;
use crate::attribution::Baseline;
use crate::error::{Error, Result};
use crate::model::Optimizer;

/// Every key understood by [`PipelineConfig::set`].
pub const PIPELINE_KEYS: [&str; 24] = [
    "split_ratio",
    "top_n",
    "rounds",
    "sf_threshold",
    "min_doc_freq",
    "ig_steps",
    "ig_target",
    "baseline",
    "selection_target",
    "mean_kind",
    "master_seed",
    "workers",
    "dump_attributions",
    "epochs",
    "learning_rate",
    "batch_size",
    "embed_dim",
    "hidden_dim",
    "weight_init_scale",
    "optimizer",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
    "decision_threshold",
];

pub fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// One `key = value` entry and the line it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse_settings(text: &str, source: &str) -> Result<Vec<Setting>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: source.to_owned(),
                line: i + 1,
                message: format!("expected key = value, got {line:?}"),
            });
        };
        out.push(Setting {
            line: i + 1,
            key: normalize_key(key),
            value: value.trim().to_owned(),
        });
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::validation(format!("{key} = {value:?}: {e}")))
}

impl PipelineConfig {
    /// Set one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key);
        let train = &mut self.train;
        match key.as_str() {
            "split_ratio" => self.split_ratio = parse(&key, value)?,
            "top_n" => self.top_n = parse(&key, value)?,
            "rounds" => self.rounds = parse(&key, value)?,
            "sf_threshold" => self.sf_threshold = parse(&key, value)?,
            "min_doc_freq" => self.min_doc_freq = parse(&key, value)?,
            "ig_steps" => self.ig.steps = parse(&key, value)?,
            "ig_target" => self.ig.target = value.parse()?,
            "baseline" => {
                self.ig.baseline = if value == "zero" {
                    Baseline::Zero
                } else {
                    Baseline::Custom(
                        value
                            .split(',')
                            .map(|v| parse(&key, v.trim()))
                            .collect::<Result<_>>()?,
                    )
                }
            }
            "selection_target" => self.selection_target = value.parse()?,
            "mean_kind" => self.mean_kind = value.parse()?,
            "master_seed" => self.master_seed = parse(&key, value)?,
            "workers" => self.workers = parse(&key, value)?,
            "dump_attributions" => self.dump_attributions = parse(&key, value)?,
            "epochs" => train.epochs = parse(&key, value)?,
            "learning_rate" => train.learning_rate = parse(&key, value)?,
            "batch_size" => train.batch_size = parse(&key, value)?,
            "embed_dim" => train.embed_dim = parse(&key, value)?,
            "hidden_dim" => train.hidden_dim = parse(&key, value)?,
            "weight_init_scale" => train.weight_init_scale = parse(&key, value)?,
            "decision_threshold" => train.decision_threshold = parse(&key, value)?,
            "optimizer" => {
                train.optimizer = match value {
                    "sgd" => Optimizer::Sgd,
                    "adam" if matches!(train.optimizer, Optimizer::Adam { .. }) => train.optimizer,
                    "adam" => Optimizer::adam(),
                    _ => return Err(Error::validation(format!("unknown optimizer {value:?}"))),
                }
            }
            "adam_beta1" | "adam_beta2" | "adam_epsilon" => {
                let Optimizer::Adam {
                    beta1,
                    beta2,
                    epsilon,
                } = &mut train.optimizer
                else {
                    return Err(Error::validation(format!("{key} needs optimizer = adam")));
                };
                let slot = match key.as_str() {
                    "adam_beta1" => beta1,
                    "adam_beta2" => beta2,
                    _ => epsilon,
                };
                *slot = parse(&key, value)?;
            }
            _ => return Err(Error::validation(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Apply parsed settings in order; errors point at the offending line.
    pub fn apply(&mut self, settings: &[Setting], source: &str) -> Result<()> {
        for s in settings {
            self.set(&s.key, &s.value).map_err(|e| Error::Parse {
                path: source.to_owned(),
                line: s.line,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Every field as `key = value` lines, readable by [`parse_settings`].
    pub fn to_settings(&self) -> String {
        let t = &self.train;
        let baseline = match &self.ig.baseline {
            Baseline::Zero => "zero".to_owned(),
            Baseline::Custom(v) => v.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        };
        let target = match self.ig.target {
            crate::model::OutputTarget::Logit => "logit",
            crate::model::OutputTarget::Probability => "probability",
        };
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("split_ratio", self.split_ratio.to_string());
        line("top_n", self.top_n.to_string());
        line("rounds", self.rounds.to_string());
        line("sf_threshold", self.sf_threshold.to_string());
        line("min_doc_freq", self.min_doc_freq.to_string());
        line("ig_steps", self.ig.steps.to_string());
        line("ig_target", target.to_owned());
        line("baseline", baseline);
        line("selection_target", self.selection_target.to_string());
        line("mean_kind", self.mean_kind.to_string());
        line("master_seed", self.master_seed.to_string());
        line("workers", self.workers.to_string());
        line("dump_attributions", self.dump_attributions.to_string());
        line("epochs", t.epochs.to_string());
        line("learning_rate", t.learning_rate.to_string());
        line("batch_size", t.batch_size.to_string());
        line("embed_dim", t.embed_dim.to_string());
        line("hidden_dim", t.hidden_dim.to_string());
        line("weight_init_scale", t.weight_init_scale.to_string());
        line("decision_threshold", t.decision_threshold.to_string());
        match t.optimizer {
            Optimizer::Sgd => line("optimizer", "sgd".into()),
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                line("optimizer", "adam".into());
                line("adam_beta1", beta1.to_string());
                line("adam_beta2", beta2.to_string());
                line("adam_epsilon", epsilon.to_string());
            }
        }
        out
    }
}
