//! Multilabel classifier: subword embeddings → mean pooling → one hidden
//! layer → one logit per class, with hand-written reverse-mode gradients.

mod matrix;
mod train;

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, LabelSpace};
use crate::error::{Error, Result};

pub use matrix::Matrix;
pub use train::{bce_loss, train, Optimizer, TrainConfig, TrainReport};

/// Hidden-layer nonlinearity. `Identity` makes every logit linear in the inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Which scalar of a class is differentiated for attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputTarget {
    #[default]
    Logit,
    Probability,
}

impl std::str::FromStr for OutputTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logit" => Ok(OutputTarget::Logit),
            "probability" | "prob" => Ok(OutputTarget::Probability),
            _ => Err(Error::validation(format!(
                "unknown attribution target {s:?}"
            ))),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Subword piece → embedding row. The row after the last piece is reserved
/// for unknown pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    pieces: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new(pieces: impl IntoIterator<Item = String>) -> Self {
        let mut pieces: Vec<String> = pieces.into_iter().collect();
        pieces.sort();
        pieces.dedup();
        let index = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        Self { pieces, index }
    }

    /// Every subword piece seen in `corpus`.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        Self::new(
            corpus
                .documents()
                .iter()
                .flat_map(|d| d.subwords.iter().map(|s| s.piece.clone())),
        )
    }

    /// Number of known pieces (the unknown row is not counted).
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn unknown_row(&self) -> usize {
        self.pieces.len()
    }

    pub fn row(&self, piece: &str) -> usize {
        self.index.get(piece).copied().unwrap_or(self.unknown_row())
    }
}

impl From<Vec<String>> for Vocab {
    fn from(pieces: Vec<String>) -> Self {
        Vocab::new(pieces)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.pieces
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub label_space: LabelSpace,
    pub vocab: Vocab,
    pub activation: Activation,
    /// `(vocab.len() + 1) × d`
    pub embedding: Matrix,
    /// `d × h`
    pub hidden_weights: Matrix,
    pub hidden_bias: Vec<f64>,
    /// `h × C`; together with `output_bias` this is the decision layer.
    pub output_weights: Matrix,
    pub output_bias: Vec<f64>,
}

/// Activations cached by [`ModelParams::forward_inputs`] for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input_embeddings: Matrix,
    pub pooled: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub hidden_post: Vec<f64>,
    pub logits: Vec<f64>,
}

impl ModelParams {
    /// Fresh parameters: weights uniform in `±weight_init_scale`, biases zero.
    pub fn init(vocab: Vocab, label_space: LabelSpace, config: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let scale = config.weight_init_scale;
        let mut uniform = |rows: usize, cols: usize| {
            let data = (0..rows * cols)
                .map(|_| {
                    if scale > 0.0 {
                        rng.gen_range(-scale..=scale)
                    } else {
                        0.0
                    }
                })
                .collect();
            Matrix::from_vec(rows, cols, data)
        };
        let (d, h, c) = (config.embed_dim, config.hidden_dim, label_space.len());
        let embedding = uniform(vocab.len() + 1, d);
        let hidden_weights = uniform(d, h);
        let output_weights = uniform(h, c);
        Self {
            label_space,
            vocab,
            activation: Activation::Tanh,
            embedding,
            hidden_weights,
            hidden_bias: vec![0.0; h],
            output_weights,
            output_bias: vec![0.0; c],
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_weights.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.output_bias.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, h, c) = (self.embed_dim(), self.hidden_dim(), self.num_classes());
        let checks = [
            (
                self.embedding.rows() == self.vocab.len() + 1,
                "embedding rows != vocab + 1",
            ),
            (self.hidden_weights.rows() == d, "hidden_weights rows != d"),
            (self.hidden_bias.len() == h, "hidden_bias length != h"),
            (
                self.output_weights.shape() == (h, c),
                "output_weights shape != h × C",
            ),
            (
                c == self.label_space.len(),
                "class count != label space size",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Shape(msg.to_owned()));
            }
        }
        let finite = self.embedding.is_finite()
            && self.hidden_weights.is_finite()
            && self.output_weights.is_finite()
            && self
                .hidden_bias
                .iter()
                .chain(&self.output_bias)
                .all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation(
                "model parameters contain non-finite values",
            ));
        }
        Ok(())
    }

    /// Embedding rows for each subword of `doc`.
    pub fn token_rows(&self, doc: &Document) -> Vec<usize> {
        doc.subwords
            .iter()
            .map(|s| self.vocab.row(&s.piece))
            .collect()
    }

    /// `T × d` input embeddings of `doc`.
    pub fn embed(&self, doc: &Document) -> Result<Matrix> {
        if doc.subwords.is_empty() {
            return Err(Error::validation(format!(
                "document {:?} has no tokens",
                doc.id
            )));
        }
        let rows = self.token_rows(doc);
        let d = self.embed_dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            data.extend_from_slice(self.embedding.row(r));
        }
        Ok(Matrix::from_vec(doc.subwords.len(), d, data))
    }

    pub fn forward(&self, doc: &Document) -> Result<(Vec<f64>, ForwardTrace)> {
        let inputs = self.embed(doc)?;
        let trace = self.forward_inputs(inputs);
        Ok((trace.logits.clone(), trace))
    }

    /// Forward pass on an explicit `T × d` input matrix (`T ≥ 1`).
    pub fn forward_inputs(&self, inputs: Matrix) -> ForwardTrace {
        assert!(inputs.rows() > 0, "forward pass needs at least one token");
        assert_eq!(
            inputs.cols(),
            self.embed_dim(),
            "input width != embedding width"
        );
        let t = inputs.rows() as f64;
        let mut pooled = vec![0.0; inputs.cols()];
        for row in inputs.iter_rows() {
            for (p, &x) in pooled.iter_mut().zip(row) {
                *p += x;
            }
        }
        pooled.iter_mut().for_each(|p| *p /= t);
        let hidden_pre = self.hidden_weights.affine(&pooled, &self.hidden_bias);
        let hidden_post: Vec<f64> = hidden_pre
            .iter()
            .map(|&z| self.activation.apply(z))
            .collect();
        let logits = self.output_weights.affine(&hidden_post, &self.output_bias);
        ForwardTrace {
            input_embeddings: inputs,
            pooled,
            hidden_pre,
            hidden_post,
            logits,
        }
    }

    pub fn probabilities(&self, doc: &Document) -> Result<Vec<f64>> {
        let (logits, _) = self.forward(doc)?;
        Ok(logits.into_iter().map(sigmoid).collect())
    }

    /// Gradient of the pooled vector for `d target / d logit_class = upstream`.
    fn pooled_gradient(&self, trace: &ForwardTrace, class_index: usize, upstream: f64) -> Vec<f64> {
        let c = self.num_classes();
        let mut d_logits = vec![0.0; c];
        d_logits[class_index] = upstream;
        let d_post = self.output_weights.mul_vec(&d_logits);
        let d_pre: Vec<f64> = d_post
            .iter()
            .zip(&trace.hidden_post)
            .map(|(g, &y)| g * self.activation.derivative_from_output(y))
            .collect();
        self.hidden_weights.mul_vec(&d_pre)
    }

    /// Exact gradient of the class output w.r.t. every entry of the traced inputs.
    pub fn gradient_wrt_inputs(
        &self,
        trace: &ForwardTrace,
        class_index: usize,
        target: OutputTarget,
    ) -> Matrix {
        let upstream = match target {
            OutputTarget::Logit => 1.0,
            OutputTarget::Probability => {
                let p = sigmoid(trace.logits[class_index]);
                p * (1.0 - p)
            }
        };
        let t = trace.input_embeddings.rows();
        let d_pooled = self.pooled_gradient(trace, class_index, upstream);
        // mean pooling spreads the pooled gradient evenly over tokens
        let per_token: Vec<f64> = d_pooled.iter().map(|g| g / t as f64).collect();
        let mut out = Matrix::zeros(t, self.embed_dim());
        for i in 0..t {
            out.row_mut(i).copy_from_slice(&per_token);
        }
        out
    }

    /// `∂ logit_class / ∂ input_embeddings` for `doc`.
    pub fn input_gradients(&self, doc: &Document, class_index: usize) -> Result<Matrix> {
        if class_index >= self.num_classes() {
            return Err(Error::validation(format!(
                "class index {class_index} out of range"
            )));
        }
        let (_, trace) = self.forward(doc)?;
        Ok(self.gradient_wrt_inputs(&trace, class_index, OutputTarget::Logit))
    }

    /// Classes whose probability is at least `threshold`.
    pub fn predict(&self, doc: &Document, threshold: f64) -> Result<BTreeSet<String>> {
        let probs = self.probabilities(doc)?;
        Ok(predicted_indices(&probs, threshold)
            .into_iter()
            .map(|c| self.label_space.name(c).to_owned())
            .collect())
    }

    /// Mean per-class binary cross-entropy for one document, adding
    /// `scale × ∂loss/∂params` into `grads`.
    pub fn accumulate_gradients(
        &self,
        doc: &Document,
        targets: &[bool],
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<f64> {
        let rows = self.token_rows(doc);
        let inputs = self.embed(doc)?;
        let trace = self.forward_inputs(inputs);
        let c = self.num_classes() as f64;

        let mut loss = 0.0;
        let d_logits: Vec<f64> = trace
            .logits
            .iter()
            .zip(targets)
            .map(|(&z, &y)| {
                let y = if y { 1.0 } else { 0.0 };
                loss += bce_loss(z, y);
                scale * (sigmoid(z) - y) / c
            })
            .collect();
        loss /= c;

        grads
            .output_weights
            .add_outer(&trace.hidden_post, &d_logits);
        for (g, d) in grads.output_bias.iter_mut().zip(&d_logits) {
            *g += d;
        }
        let d_post = self.output_weights.mul_vec(&d_logits);
        let d_pre: Vec<f64> = d_post
            .iter()
            .zip(&trace.hidden_post)
            .map(|(g, &y)| g * self.activation.derivative_from_output(y))
            .collect();
        grads.hidden_weights.add_outer(&trace.pooled, &d_pre);
        for (g, d) in grads.hidden_bias.iter_mut().zip(&d_pre) {
            *g += d;
        }
        let d_pooled = self.hidden_weights.mul_vec(&d_pre);
        let t = rows.len() as f64;
        for r in rows {
            for (g, d) in grads.embedding.row_mut(r).iter_mut().zip(&d_pooled) {
                *g += d / t;
            }
        }
        Ok(loss)
    }

    /// Loss and full parameter gradient for a single document.
    pub fn loss_and_gradients(&self, doc: &Document, targets: &[bool]) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(self);
        let loss = self.accumulate_gradients(doc, targets, 1.0, &mut grads)?;
        Ok((loss, grads))
    }

    /// Mean per-class binary cross-entropy for one document.
    pub fn loss(&self, doc: &Document, targets: &[bool]) -> Result<f64> {
        let (logits, _) = self.forward(doc)?;
        let c = logits.len() as f64;
        Ok(logits
            .iter()
            .zip(targets)
            .map(|(&z, &y)| bce_loss(z, if y { 1.0 } else { 0.0 }))
            .sum::<f64>()
            / c)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            embed_dim: self.embed_dim(),
            hidden_dim: self.hidden_dim(),
            num_classes: self.num_classes(),
            params: self.clone(),
        };
        serde_json::to_writer(BufWriter::new(file), &ckpt)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::validation(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        ckpt.params.validate()?;
        if (ckpt.embed_dim, ckpt.hidden_dim, ckpt.num_classes)
            != (
                ckpt.params.embed_dim(),
                ckpt.params.hidden_dim(),
                ckpt.params.num_classes(),
            )
        {
            return Err(Error::Shape(
                "checkpoint header disagrees with parameters".into(),
            ));
        }
        Ok(ckpt.params)
    }
}

/// Indices of classes with probability `≥ threshold`.
pub fn predicted_indices(probabilities: &[f64], threshold: f64) -> Vec<usize> {
    probabilities
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= threshold)
        .map(|(i, _)| i)
        .collect()
}

const CHECKPOINT_FORMAT: &str = "ig-keywords-model";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    embed_dim: usize,
    hidden_dim: usize,
    num_classes: usize,
    params: ModelParams,
}

/// Parameter-shaped gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: Matrix,
    pub hidden_weights: Matrix,
    pub hidden_bias: Vec<f64>,
    pub output_weights: Matrix,
    pub output_bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let (er, ec) = params.embedding.shape();
        let (hr, hc) = params.hidden_weights.shape();
        let (or, oc) = params.output_weights.shape();
        Self {
            embedding: Matrix::zeros(er, ec),
            hidden_weights: Matrix::zeros(hr, hc),
            hidden_bias: vec![0.0; params.hidden_bias.len()],
            output_weights: Matrix::zeros(or, oc),
            output_bias: vec![0.0; params.output_bias.len()],
        }
    }

    pub fn clear(&mut self) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub(crate) fn slices(&self) -> [&[f64]; 5] {
        [
            self.embedding.as_slice(),
            self.hidden_weights.as_slice(),
            &self.hidden_bias,
            self.output_weights.as_slice(),
            &self.output_bias,
        ]
    }

    pub(crate) fn slices_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.embedding.as_mut_slice(),
            self.hidden_weights.as_mut_slice(),
            &mut self.hidden_bias,
            self.output_weights.as_mut_slice(),
            &mut self.output_bias,
        ]
    }
}

impl ModelParams {
    pub(crate) fn slices_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.embedding.as_mut_slice(),
            self.hidden_weights.as_mut_slice(),
            &mut self.hidden_bias,
            self.output_weights.as_mut_slice(),
            &mut self.output_bias,
        ]
    }
}
