use serde::{Deserialize, Serialize};

use super::{backward, batch_loss, forward, sgd_step, ForwardTrace, HashHeadParams};
use crate::error::{Error, Result};
use crate::ingest::{fuse_rows_uniform, Dataset, VideoRecord};
use crate::linalg::Matrix;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub bits: usize,
    pub margin: f64,
    pub alpha: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Triplets per mini-batch.
    pub batch_triplets: usize,
    /// Frames drawn per triplet member before fusion.
    pub frames_per_sample: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            bits: 64,
            margin: 1.0,
            alpha: 1.0,
            beta: 1.0,
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 100,
            batch_triplets: 32,
            frames_per_sample: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if self.bits == 0 {
            return fail("bits must be >= 1".into());
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return fail(format!("margin must be > 0, got {}", self.margin));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0)
            || !(self.alpha.is_finite() && self.beta.is_finite())
        {
            return fail("alpha and beta must be finite and >= 0".into());
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return fail("alpha and beta cannot both be zero".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        if self.batch_triplets == 0 || self.frames_per_sample == 0 {
            return fail("batch_triplets and frames_per_sample must be >= 1".into());
        }
        Ok(())
    }
}

/// Indices into the training set: anchor and positive share a class, the negative does not.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Forward traces for one triplet plus the members' class labels.
#[derive(Clone, Debug)]
pub struct TripletTrace {
    pub anchor: ForwardTrace,
    pub positive: ForwardTrace,
    pub negative: ForwardTrace,
    pub labels: [usize; 3],
}

/// Uniform triplets: anchor over all videos, positive over the anchor's classmates,
/// negative over every other-class video.
pub fn sample_triplets(
    labels: &[usize],
    num_classes: usize,
    rng: &mut Rng,
    count: usize,
) -> Result<Vec<Triplet>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::invalid(format!(
                "label {l} outside 0..{num_classes}"
            )));
        }
        by_class[l].push(i);
    }
    if by_class.iter().filter(|c| !c.is_empty()).count() < 2 {
        return Err(Error::invalid("triplet sampling needs at least 2 classes"));
    }
    if let Some(c) = by_class.iter().position(|c| c.len() == 1) {
        return Err(Error::invalid(format!(
            "class {c} has a single video; triplets need 2"
        )));
    }
    let n = labels.len();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let anchor = rng.below(n);
        let class = &by_class[labels[anchor]];
        let mut positive = class[rng.below(class.len() - 1)];
        if positive == anchor {
            positive = class[class.len() - 1];
        }
        // Rank among non-class videos, then map back to a global index.
        let mut r = rng.below(n - class.len());
        let mut negative = 0;
        for (c, members) in by_class.iter().enumerate() {
            if c == labels[anchor] {
                continue;
            }
            if r < members.len() {
                negative = members[r];
                break;
            }
            r -= members.len();
        }
        out.push(Triplet {
            anchor,
            positive,
            negative,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: HashHeadParams,
    /// Mean batch objective per epoch.
    pub loss_history: Vec<f64>,
}

/// Trains a head on `ds` whose rows correspond one-to-one with `records`
/// (frame spans in `frames`).
///
/// Each epoch draws `ceil(n / batch) · batch` triplets. Every triplet member is
/// represented by the uniform fusion of `frames_per_sample` of its frames
/// (without replacement when the video has enough frames).
pub fn train(
    ds: &Dataset,
    frames: &Matrix,
    records: &[VideoRecord],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if records.len() != ds.len() {
        return Err(Error::DimensionMismatch {
            context: "training records vs dataset rows",
            expected: ds.len(),
            found: records.len(),
        });
    }
    if frames.cols() != ds.dim() {
        return Err(Error::DimensionMismatch {
            context: "frame features vs dataset dim",
            expected: ds.dim(),
            found: frames.cols(),
        });
    }
    for r in records {
        if r.frame_count == 0 || r.frame_start + r.frame_count > frames.rows() {
            return Err(Error::invalid(format!(
                "video {} frame range out of bounds",
                r.video_id
            )));
        }
    }

    let mut rng = Rng::new(cfg.seed);
    let mut params = HashHeadParams::init(ds.dim(), cfg.bits, ds.num_classes, &mut rng);
    let mut velocity = HashHeadParams::zeros(ds.dim(), cfg.bits, ds.num_classes);
    let batches = ds.len().div_ceil(cfg.batch_triplets);
    let mut loss_history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let triplets = sample_triplets(
            &ds.labels,
            ds.num_classes,
            &mut rng,
            batches * cfg.batch_triplets,
        )?;
        let mut epoch_loss = 0.0;
        for chunk in triplets.chunks(cfg.batch_triplets) {
            let mut batch = Vec::with_capacity(chunk.len());
            for t in chunk {
                let mut member = |i: usize| -> Result<ForwardTrace> {
                    let x = sample_fused(frames, &records[i], cfg.frames_per_sample, &mut rng);
                    forward(&params, &x)
                };
                batch.push(TripletTrace {
                    anchor: member(t.anchor)?,
                    positive: member(t.positive)?,
                    negative: member(t.negative)?,
                    labels: [
                        ds.labels[t.anchor],
                        ds.labels[t.positive],
                        ds.labels[t.negative],
                    ],
                });
            }
            let loss = batch_loss(&batch, cfg)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    message: format!("batch loss {loss}"),
                });
            }
            epoch_loss += loss;
            let grads = backward(&params, &batch, cfg);
            sgd_step(&mut params, &grads, &mut velocity, cfg).map_err(|e| Error::Diverged {
                epoch,
                message: e.to_string(),
            })?;
        }
        loss_history.push(epoch_loss / batches as f64);
    }
    Ok(TrainOutcome {
        params,
        loss_history,
    })
}

fn sample_fused(frames: &Matrix, rec: &VideoRecord, count: usize, rng: &mut Rng) -> Vec<f64> {
    let rows: Vec<usize> = if rec.frame_count >= count {
        rng.sample_distinct(rec.frame_count, count)
            .into_iter()
            .map(|i| rec.frame_start + i)
            .collect()
    } else {
        (0..count)
            .map(|_| rec.frame_start + rng.below(rec.frame_count))
            .collect()
    };
    fuse_rows_uniform(frames, &rows)
}
