//! Self-checks behind `igkw check`: finite-difference gradients, IG
//! completeness and a naive recomputation of the aggregate table.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attribution::{completeness_residual, endpoint_outputs, integrated_gradients, IgConfig};
use crate::corpus::{Corpus, Document, LabelSpace};
use crate::error::Result;
use crate::model::{Matrix, ModelParams, TrainConfig, Vocab};
use crate::pipeline::{run_pipeline, PipelineConfig};

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn random_case(rng: &mut ChaCha8Rng) -> (ModelParams, Document, usize) {
    let words: Vec<String> = (0..rng.gen_range(1..=8))
        .map(|_| {
            (0..rng.gen_range(1..=9))
                .map(|_| (b'a' + rng.gen_range(0..8u8)) as char)
                .collect()
        })
        .collect();
    let doc = Document::new("check", words.join(" "), ["k0"], 4);
    let classes = rng.gen_range(1..=4);
    let cfg = TrainConfig {
        embed_dim: rng.gen_range(1..=8),
        hidden_dim: rng.gen_range(1..=8),
        weight_init_scale: rng.gen_range(0.3..1.5),
        seed: rng.gen(),
        ..TrainConfig::default()
    };
    let space = LabelSpace::new((0..classes).map(|c| format!("k{c}"))).expect("distinct names");
    let vocab = Vocab::new(doc.subwords.iter().map(|s| s.piece.clone()));
    let mut params = ModelParams::init(vocab, space, &cfg);
    for b in params
        .hidden_bias
        .iter_mut()
        .chain(params.output_bias.iter_mut())
    {
        *b = rng.gen_range(-0.5..0.5);
    }
    let class = rng.gen_range(0..classes);
    (params, doc, class)
}

/// Input and parameter gradients of `triples` random small models against
/// central differences.
pub fn gradient_check(triples: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_input: f64 = 0.0;
    let mut worst_param: f64 = 0.0;
    for _ in 0..triples {
        let (mut params, doc, class) = random_case(&mut rng);

        let analytic = params.input_gradients(&doc, class)?;
        let x = params.embed(&doc)?;
        let logit = |p: &ModelParams, m: &Matrix| p.forward_inputs(m.clone()).logits[class];
        for i in 0..x.as_slice().len() {
            let mut plus = x.clone();
            plus.as_mut_slice()[i] += FD_STEP;
            let mut minus = x.clone();
            minus.as_mut_slice()[i] -= FD_STEP;
            let numeric = (logit(&params, &plus) - logit(&params, &minus)) / (2.0 * FD_STEP);
            worst_input = worst_input.max(relative_error(analytic.as_slice()[i], numeric));
        }

        let targets: Vec<bool> = (0..params.num_classes())
            .map(|_| rng.gen_bool(0.5))
            .collect();
        let (_, grads) = params.loss_and_gradients(&doc, &targets)?;
        let analytic: Vec<f64> = grads.slices().concat();
        let mut k = 0;
        for block in 0..5 {
            for i in 0..params.slices_mut()[block].len() {
                let orig = params.slices_mut()[block][i];
                params.slices_mut()[block][i] = orig + FD_STEP;
                let up = params.loss(&doc, &targets)?;
                params.slices_mut()[block][i] = orig - FD_STEP;
                let down = params.loss(&doc, &targets)?;
                params.slices_mut()[block][i] = orig;
                let numeric = (up - down) / (2.0 * FD_STEP);
                worst_param = worst_param.max(relative_error(analytic[k], numeric));
                k += 1;
            }
        }
    }
    Ok(CheckResult {
        name: "gradient",
        passed: worst_input <= FD_TOLERANCE && worst_param <= FD_TOLERANCE,
        detail: format!(
            "{triples} random models; worst relative error: inputs {worst_input:.2e}, parameters {worst_param:.2e}"
        ),
    })
}

/// Completeness residual at `steps` for each document's first gold class.
/// Passes when at least 95% of documents are within 1e-3 of max(1, |ΔF|).
pub fn completeness_check(
    params: &ModelParams,
    docs: &[Document],
    steps: usize,
) -> Result<CheckResult> {
    let ig = IgConfig {
        steps,
        ..IgConfig::default()
    };
    let mut within = 0;
    let mut total = 0;
    let mut worst: f64 = 0.0;
    for doc in docs.iter().filter(|d| !d.subwords.is_empty()) {
        let Some(class) = doc
            .labels
            .iter()
            .find_map(|l| params.label_space.index_of(l))
        else {
            continue;
        };
        let attr = integrated_gradients(params, doc, class, &ig)?;
        let (fx, fb) = endpoint_outputs(params, doc, class, &ig)?;
        let rel = completeness_residual(&attr, fx, fb) / (fx - fb).abs().max(1.0);
        worst = worst.max(rel);
        total += 1;
        if rel <= 1e-3 {
            within += 1;
        }
    }
    let share = if total == 0 {
        0.0
    } else {
        within as f64 / total as f64
    };
    Ok(CheckResult {
        name: "completeness",
        passed: total > 0 && share >= 0.95,
        detail: format!(
            "m={steps}: {within}/{total} documents within 1e-3, worst relative residual {worst:.2e}"
        ),
    })
}

/// Run the pipeline with dumped explanations and rebuild every aggregate
/// record from them by brute force.
pub fn oracle_check(corpus: &Corpus, config: &PipelineConfig) -> Result<CheckResult> {
    let config = PipelineConfig {
        dump_attributions: true,
        ..config.clone()
    };
    let out = run_pipeline(corpus, &config)?;
    let mut naive: BTreeMap<(String, String), (f64, usize, BTreeSet<usize>)> = BTreeMap::new();
    for round in out.rounds.iter().filter(|r| r.is_completed()) {
        for e in round.explanations.iter().flatten() {
            let mut ranked: Vec<(&str, f64)> = e
                .word_scores
                .iter()
                .map(|r| (r.word.as_str(), r.score))
                .collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
            for (word, score) in ranked.into_iter().take(config.top_n) {
                let slot = naive
                    .entry((e.class_name.clone(), word.to_owned()))
                    .or_default();
                slot.0 += score;
                slot.1 += 1;
                slot.2.insert(round.round_index);
            }
        }
    }
    let got: HashMap<(String, String), _> = out
        .aggregate
        .iter()
        .map(|r| ((r.class.clone(), r.word.clone()), r))
        .collect();
    let mut mismatches = 0;
    let mut worst: f64 = 0.0;
    for (key, (sum, count, rounds)) in &naive {
        match got.get(key) {
            Some(r) => {
                worst = worst.max((r.mean_score - sum / *count as f64).abs());
                let sf = rounds.len() as f64 / config.rounds as f64;
                if r.instance_count != *count
                    || r.rounds_selected != rounds.len()
                    || r.selection_frequency != sf
                {
                    mismatches += 1;
                }
            }
            None => mismatches += 1,
        }
    }
    mismatches += got.len().abs_diff(naive.len());
    Ok(CheckResult {
        name: "oracle",
        passed: !naive.is_empty() && mismatches == 0 && worst <= 1e-12,
        detail: format!(
            "{} records, {mismatches} count mismatches, worst mean-score difference {worst:.1e}",
            naive.len()
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SynthConfig};

    #[test]
    fn gradients_agree_with_finite_differences() {
        let r = gradient_check(20, 1).unwrap();
        assert!(r.passed, "{}", r.detail);
    }

    #[test]
    fn oracle_matches_on_toy_corpus() {
        let synth = SynthConfig {
            docs_per_class: 8,
            background_vocab_size: 100,
            doc_length: (5, 10),
            ..SynthConfig::default()
        };
        let (corpus, _) = generate_synthetic(&synth, 2).unwrap();
        let config = PipelineConfig {
            rounds: 2,
            top_n: 3,
            workers: 1,
            ig: IgConfig {
                steps: 8,
                ..IgConfig::default()
            },
            train: TrainConfig {
                epochs: 20,
                learning_rate: 0.05,
                batch_size: 8,
                ..TrainConfig::default()
            },
            ..PipelineConfig::default()
        };
        let r = oracle_check(&corpus, &config).unwrap();
        assert!(r.passed, "{}", r.detail);
    }
}
