//! Trainable hashing head: a fully connected code layer squashed by a sigmoid,
//! followed by a fully connected classifier with softmax output.
//!
//! Training minimizes `α·Σ triplet + β·cross-entropy` over mini-batches of
//! triplets with hand-written backpropagation and momentum SGD. At retrieval
//! time the sigmoid outputs are thresholded at 0.5.

mod grad;
mod loss;
mod model_io;
mod train;

pub use grad::{backward, sgd_step, Gradients};
pub use loss::{batch_loss, classification_loss, total_loss, triplet_loss, CrossEntropy};
pub use model_io::{read_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use train::{sample_triplets, train, TrainConfig, TrainOutcome, Triplet, TripletTrace};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct HashHeadParams {
    /// b × d code layer weights.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// K × b classifier weights.
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl HashHeadParams {
    pub fn zeros(dim: usize, bits: usize, classes: usize) -> Self {
        HashHeadParams {
            w1: Matrix::zeros(bits, dim),
            b1: vec![0.0; bits],
            w2: Matrix::zeros(classes, bits),
            b2: vec![0.0; classes],
        }
    }

    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn init(dim: usize, bits: usize, classes: usize, rng: &mut Rng) -> Self {
        let mut p = HashHeadParams::zeros(dim, bits, classes);
        let s1 = 1.0 / (dim as f64).sqrt();
        p.w1.data_mut()
            .iter_mut()
            .for_each(|w| *w = rng.uniform(-s1, s1));
        let s2 = 1.0 / (bits as f64).sqrt();
        p.w2.data_mut()
            .iter_mut()
            .for_each(|w| *w = rng.uniform(-s2, s2));
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn code_bits(&self) -> usize {
        self.w1.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.rows()
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        let (b, k) = (self.code_bits(), self.num_classes());
        if self.b1.len() != b || self.w2.cols() != b || self.b2.len() != k {
            return Err(Error::invalid(
                "hash head parameter shapes are inconsistent",
            ));
        }
        if b == 0 || k == 0 || self.input_dim() == 0 {
            return Err(Error::invalid("hash head dimensions must be positive"));
        }
        Ok(())
    }

    /// Parameter blocks in file order: W1, b1, W2, b2.
    pub(crate) fn blocks(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub(crate) fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.data_mut(),
            &mut self.b1,
            self.w2.data_mut(),
            &mut self.b2,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub pre_activation: Vec<f64>,
    /// Sigmoid outputs in (0, 1): the binary-like code.
    pub code: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax with max subtraction.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn forward(params: &HashHeadParams, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "hash head input",
            expected: params.input_dim(),
            found: x.len(),
        });
    }
    if let Some(col) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "hash head input",
            row: 0,
            col,
        });
    }
    let pre_activation: Vec<f64> = (0..params.code_bits())
        .map(|j| dot(params.w1.row(j), x) + params.b1[j])
        .collect();
    let code: Vec<f64> = pre_activation.iter().map(|&a| sigmoid(a)).collect();
    let logits: Vec<f64> = (0..params.num_classes())
        .map(|k| dot(params.w2.row(k), &code) + params.b2[k])
        .collect();
    let probs = softmax(&logits);
    Ok(ForwardTrace {
        input: x.to_vec(),
        pre_activation,
        code,
        logits,
        probs,
    })
}

/// Thresholds binary-like outputs: `v >= 0.5` becomes 1.
pub fn binarize(code: &[f64]) -> Result<Vec<bool>> {
    code.iter()
        .enumerate()
        .map(|(i, &v)| {
            if v.is_finite() {
                Ok(v >= 0.5)
            } else {
                Err(Error::NonFinite {
                    what: "binary-like code",
                    row: 0,
                    col: i,
                })
            }
        })
        .collect()
}
