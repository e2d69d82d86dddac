//! Integrated Gradients over input token embeddings and the reduction from
//! per-dimension attributions to per-word scores.
//!
//! Reduction order: sum embedding dimensions per token, L2-normalize the token
//! scores of the document, then give each word the maximum over all of its
//! subword tokens (across every occurrence of the word).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::model::{sigmoid, Matrix, ModelParams, OutputTarget};

/// Default number of Riemann steps.
pub const DEFAULT_STEPS: usize = 50;

/// Starting point of the integration path.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    /// All-zero embedding for every token.
    #[default]
    Zero,
    /// The same `d`-vector for every token.
    Custom(Vec<f64>),
}

impl Baseline {
    fn materialize(&self, tokens: usize, dim: usize) -> Result<Matrix> {
        match self {
            Baseline::Zero => Ok(Matrix::zeros(tokens, dim)),
            Baseline::Custom(v) => {
                if v.len() != dim {
                    return Err(Error::Shape(format!(
                        "baseline has width {}, embeddings have {dim}",
                        v.len()
                    )));
                }
                Ok(Matrix::from_vec(tokens, dim, v.repeat(tokens)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IgConfig {
    pub baseline: Baseline,
    pub steps: usize,
    pub target: OutputTarget,
}

impl Default for IgConfig {
    fn default() -> Self {
        Self {
            baseline: Baseline::Zero,
            steps: DEFAULT_STEPS,
            target: OutputTarget::Logit,
        }
    }
}

/// IG scores of one (document, class): one row per subword token.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMatrix {
    pub values: Matrix,
    pub class_index: usize,
    pub doc_id: String,
    pub baseline: Baseline,
    pub steps: usize,
}

/// `s_{w,d,c}`: score of word `w` in document `d` for class `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordScoreRecord {
    pub word: String,
    pub doc_id: String,
    pub class_name: String,
    pub score: f64,
}

/// Model output for `class_index` at an explicit input matrix.
pub fn output_at(
    params: &ModelParams,
    inputs: Matrix,
    class_index: usize,
    target: OutputTarget,
) -> f64 {
    let z = params.forward_inputs(inputs).logits[class_index];
    match target {
        OutputTarget::Logit => z,
        OutputTarget::Probability => sigmoid(z),
    }
}

/// Integrated Gradients with the midpoint rule:
///
/// `IG[i][j] = (x − x')[i][j] · (1/m) · Σ_{s=1..m} ∂F/∂x[i][j] at x' + ((s − ½)/m)(x − x')`.
///
/// Steps are summed in ascending order.
pub fn integrate(
    params: &ModelParams,
    inputs: &Matrix,
    baseline: &Matrix,
    class_index: usize,
    steps: usize,
    target: OutputTarget,
) -> std::result::Result<Matrix, usize> {
    assert_eq!(
        inputs.shape(),
        baseline.shape(),
        "input and baseline shapes differ"
    );
    let (t, d) = inputs.shape();
    let delta: Vec<f64> = inputs
        .as_slice()
        .iter()
        .zip(baseline.as_slice())
        .map(|(x, b)| x - b)
        .collect();
    let mut sum = vec![0.0; t * d];
    for s in 1..=steps {
        let alpha = (s as f64 - 0.5) / steps as f64;
        let point: Vec<f64> = baseline
            .as_slice()
            .iter()
            .zip(&delta)
            .map(|(b, dx)| b + alpha * dx)
            .collect();
        let trace = params.forward_inputs(Matrix::from_vec(t, d, point));
        let grad = params.gradient_wrt_inputs(&trace, class_index, target);
        if !grad.is_finite() {
            return Err(s);
        }
        for (acc, g) in sum.iter_mut().zip(grad.as_slice()) {
            *acc += g;
        }
    }
    let values = sum
        .iter()
        .zip(&delta)
        .map(|(g, dx)| dx * g / steps as f64)
        .collect();
    Ok(Matrix::from_vec(t, d, values))
}

/// IG attributions of `doc`'s input embeddings for one class.
pub fn integrated_gradients(
    params: &ModelParams,
    doc: &Document,
    class_index: usize,
    config: &IgConfig,
) -> Result<AttributionMatrix> {
    if config.steps == 0 {
        return Err(Error::validation(
            "integrated gradients needs at least one step",
        ));
    }
    if class_index >= params.num_classes() {
        return Err(Error::validation(format!(
            "class index {class_index} out of range"
        )));
    }
    let inputs = params.embed(doc)?;
    let baseline = config.baseline.materialize(inputs.rows(), inputs.cols())?;
    let values = integrate(
        params,
        &inputs,
        &baseline,
        class_index,
        config.steps,
        config.target,
    )
    .map_err(|step| Error::NonFiniteGradient {
        doc_id: doc.id.clone(),
        class_index,
        step,
    })?;
    Ok(AttributionMatrix {
        values,
        class_index,
        doc_id: doc.id.clone(),
        baseline: config.baseline.clone(),
        steps: config.steps,
    })
}

/// `F(x)` and `F(x')` for the document and its baseline.
pub fn endpoint_outputs(
    params: &ModelParams,
    doc: &Document,
    class_index: usize,
    config: &IgConfig,
) -> Result<(f64, f64)> {
    let inputs = params.embed(doc)?;
    let baseline = config.baseline.materialize(inputs.rows(), inputs.cols())?;
    Ok((
        output_at(params, inputs, class_index, config.target),
        output_at(params, baseline, class_index, config.target),
    ))
}

/// `|Σ IG − (F(x) − F(x'))|`.
pub fn completeness_residual(attr: &AttributionMatrix, f_x: f64, f_baseline: f64) -> f64 {
    (attr.values.sum() - (f_x - f_baseline)).abs()
}

/// Sum over embedding dimensions, one score per token.
pub fn token_scores(attr: &AttributionMatrix) -> Vec<f64> {
    attr.values
        .iter_rows()
        .map(|row| row.iter().sum())
        .collect()
}

/// Divide by the Euclidean norm; an all-zero vector is returned unchanged.
pub fn normalize_document(scores: &[f64]) -> Vec<f64> {
    let norm = scores.iter().map(|s| s * s).sum::<f64>().sqrt();
    if norm == 0.0 {
        return scores.to_vec();
    }
    scores.iter().map(|s| s / norm).collect()
}

/// One record per distinct word, in first-occurrence order, scored with the
/// maximum over all of that word's subword tokens.
pub fn word_scores(
    normalized: &[f64],
    doc: &Document,
    class_name: &str,
) -> Result<Vec<WordScoreRecord>> {
    if normalized.len() != doc.subwords.len() {
        return Err(Error::Shape(format!(
            "{} token scores for {} subwords in document {:?}",
            normalized.len(),
            doc.subwords.len(),
            doc.id
        )));
    }
    let mut position: HashMap<&str, usize> = HashMap::new();
    let mut records: Vec<WordScoreRecord> = Vec::new();
    for (sw, &score) in doc.subwords.iter().zip(normalized) {
        let word = doc.words[sw.word_index].as_str();
        match position.get(word) {
            Some(&i) => {
                if score > records[i].score {
                    records[i].score = score;
                }
            }
            None => {
                position.insert(word, records.len());
                records.push(WordScoreRecord {
                    word: word.to_owned(),
                    doc_id: doc.id.clone(),
                    class_name: class_name.to_owned(),
                    score,
                });
            }
        }
    }
    Ok(records)
}

/// Normalized token scores and word scores of one (document, class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub doc_id: String,
    pub class_name: String,
    pub token_scores: Vec<f64>,
    pub word_scores: Vec<WordScoreRecord>,
}

/// Full chain: IG → token sums → L2 normalization → word max.
pub fn explain(
    params: &ModelParams,
    doc: &Document,
    class_index: usize,
    config: &IgConfig,
) -> Result<Explanation> {
    let attr = integrated_gradients(params, doc, class_index, config)?;
    let normalized = normalize_document(&token_scores(&attr));
    let class_name = params.label_space.name(class_index).to_owned();
    let words = word_scores(&normalized, doc, &class_name)?;
    Ok(Explanation {
        doc_id: doc.id.clone(),
        class_name,
        token_scores: normalized,
        word_scores: words,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, LabelSpace};
    use crate::model::{Activation, TrainConfig, Vocab};
    use proptest::prelude::*;

    fn model(activation: Activation, seed: u64) -> (ModelParams, Document) {
        let doc = Document::new("d", "how to cook recipes fast", ["A"], 4);
        let vocab = Vocab::new(doc.subwords.iter().map(|s| s.piece.clone()));
        let cfg = TrainConfig {
            embed_dim: 4,
            hidden_dim: 3,
            weight_init_scale: 0.8,
            seed,
            ..TrainConfig::default()
        };
        let mut m = ModelParams::init(vocab, LabelSpace::new(["A", "B"]).unwrap(), &cfg);
        m.activation = activation;
        (m, doc)
    }

    fn attr(values: Matrix) -> AttributionMatrix {
        AttributionMatrix {
            values,
            class_index: 0,
            doc_id: "d".into(),
            baseline: Baseline::Zero,
            steps: 1,
        }
    }

    #[test]
    fn linear_model_matches_closed_form() {
        let (m, doc) = model(Activation::Identity, 5);
        let x = m.embed(&doc).unwrap();
        let t = x.rows() as f64;
        // logit_0 = mean(x) · W_h · w_o[:,0] + b, so ∂/∂x[i][j] = (W_h w_o)_j / T
        let w: Vec<f64> = (0..m.embed_dim())
            .map(|j| {
                (0..m.hidden_dim())
                    .map(|k| m.hidden_weights.get(j, k) * m.output_weights.get(k, 0))
                    .sum::<f64>()
                    / t
            })
            .collect();
        for steps in [1, 5, 50] {
            let cfg = IgConfig {
                steps,
                ..IgConfig::default()
            };
            let a = integrated_gradients(&m, &doc, 0, &cfg).unwrap();
            for i in 0..x.rows() {
                for (j, wj) in w.iter().enumerate() {
                    assert!((a.values.get(i, j) - x.get(i, j) * wj).abs() < 1e-12);
                }
            }
            let (fx, fb) = endpoint_outputs(&m, &doc, 0, &cfg).unwrap();
            assert!(completeness_residual(&a, fx, fb) < 1e-12);
        }
    }

    #[test]
    fn input_equal_to_baseline_gives_zero() {
        let (m, doc) = model(Activation::Tanh, 1);
        let x = m.embed(&doc).unwrap();
        let a = integrate(&m, &x, &x, 1, 7, OutputTarget::Logit).unwrap();
        assert!(a.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(completeness_residual(&attr(a), 0.0, 0.0), 0.0);
    }

    #[test]
    fn residual_shrinks_with_steps() {
        let (m, doc) = model(Activation::Tanh, 3);
        let residual = |steps| {
            let cfg = IgConfig {
                steps,
                ..IgConfig::default()
            };
            let a = integrated_gradients(&m, &doc, 1, &cfg).unwrap();
            let (fx, fb) = endpoint_outputs(&m, &doc, 1, &cfg).unwrap();
            completeness_residual(&a, fx, fb)
        };
        assert!(residual(300) < residual(10));
    }

    #[test]
    fn custom_baseline_and_probability_target() {
        let (m, doc) = model(Activation::Tanh, 8);
        let cfg = IgConfig {
            baseline: Baseline::Custom(vec![0.1, -0.2, 0.05, 0.0]),
            steps: 400,
            target: OutputTarget::Probability,
        };
        let a = integrated_gradients(&m, &doc, 0, &cfg).unwrap();
        let (fx, fb) = endpoint_outputs(&m, &doc, 0, &cfg).unwrap();
        assert!(completeness_residual(&a, fx, fb) < 1e-6);
        let bad = IgConfig {
            baseline: Baseline::Custom(vec![0.0; 3]),
            ..IgConfig::default()
        };
        assert!(matches!(
            integrated_gradients(&m, &doc, 0, &bad),
            Err(Error::Shape(_))
        ));
        let zero_steps = IgConfig {
            steps: 0,
            ..IgConfig::default()
        };
        assert!(integrated_gradients(&m, &doc, 0, &zero_steps).is_err());
    }

    #[test]
    fn non_finite_gradient_reports_step() {
        let (mut m, doc) = model(Activation::Tanh, 2);
        m.output_weights.set(0, 0, f64::NAN);
        match integrated_gradients(
            &m,
            &doc,
            0,
            &IgConfig {
                steps: 3,
                ..IgConfig::default()
            },
        ) {
            Err(Error::NonFiniteGradient { step, .. }) => assert_eq!(step, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn token_scores_are_row_sums() {
        let a = attr(Matrix::from_rows(&[vec![1.0, -2.0], vec![3.0, 4.0]]));
        assert_eq!(token_scores(&a), vec![-1.0, 7.0]);
        assert_eq!(token_scores(&attr(Matrix::zeros(3, 2))), vec![0.0; 3]);
    }

    #[test]
    fn l2_normalization() {
        assert_eq!(normalize_document(&[3.0, 4.0]), vec![0.6, 0.8]);
        assert_eq!(normalize_document(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert!(normalize_document(&[]).is_empty());
    }

    #[test]
    fn word_score_max_rules() {
        // "recipes" → reci, ##pes
        let doc = Document::new("d", "recipes to to", ["A"], 4);
        let recs = word_scores(&[0.2, 0.5, 0.1, 0.4], &doc, "A").unwrap();
        let get = |w: &str| recs.iter().find(|r| r.word == w).unwrap().score;
        assert_eq!(recs.len(), 2);
        assert_eq!(get("recipes"), 0.5);
        assert_eq!(get("to"), 0.4);
        let single = Document::new("e", "how", ["A"], 4);
        assert_eq!(word_scores(&[0.31], &single, "A").unwrap()[0].score, 0.31);
        assert!(matches!(
            word_scores(&[0.1], &doc, "A"),
            Err(Error::Shape(_))
        ));
    }

    proptest! {
        #[test]
        fn normalization_absorbs_positive_scale(v in proptest::collection::vec(-10.0f64..10.0, 1..20), lambda in 0.01f64..100.0) {
            let a = normalize_document(&v);
            let scaled: Vec<f64> = v.iter().map(|x| x * lambda).collect();
            let b = normalize_document(&scaled);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            if v.iter().any(|&x| x != 0.0) {
                let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!((norm - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn word_score_is_max_of_its_tokens(words in proptest::collection::vec("[a-e]{1,9}", 1..12),
                                           seed in any::<u64>()) {
            let doc = Document::new("p", words.join(" "), ["A"], 3);
            let mut state = seed | 1;
            let scores: Vec<f64> = doc.subwords.iter().map(|_| {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                (state % 2001) as f64 / 1000.0 - 1.0
            }).collect();
            let recs = word_scores(&scores, &doc, "A").unwrap();
            // brute force over every token position
            for r in &recs {
                let expected = doc.subwords.iter().zip(&scores)
                    .filter(|(sw, _)| doc.words[sw.word_index] == r.word)
                    .map(|(_, &s)| s)
                    .fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(r.score, expected);
            }
            let distinct: std::collections::HashSet<&String> = doc.words.iter().collect();
            prop_assert_eq!(recs.len(), distinct.len());
        }
    }
}
