use super::train::TripletTrace;
use super::{ForwardTrace, TrainConfig};
use crate::error::{Error, Result};
use crate::linalg::squared_distance;

/// Hinge on squared code distances: `max(‖a−p‖² − ‖a−n‖² + m, 0)`.
pub fn triplet_loss(
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
    margin: f64,
) -> Result<f64> {
    if positive.len() != anchor.len() || negative.len() != anchor.len() {
        return Err(Error::DimensionMismatch {
            context: "triplet code lengths",
            expected: anchor.len(),
            found: if positive.len() != anchor.len() {
                positive.len()
            } else {
                negative.len()
            },
        });
    }
    if !(margin > 0.0) {
        return Err(Error::invalid(format!(
            "triplet margin must be > 0, got {margin}"
        )));
    }
    Ok(hinge_argument(anchor, positive, negative, margin).max(0.0))
}

pub(crate) fn hinge_argument(
    anchor: &[f64],
    positive: &[f64],
    negative: &[f64],
    margin: f64,
) -> f64 {
    squared_distance(anchor, positive) - squared_distance(anchor, negative) + margin
}

/// Summed cross-entropy. `clamped` is set when a true-class probability
/// underflowed and was replaced by 1e-300.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossEntropy {
    pub value: f64,
    pub clamped: bool,
}

pub fn classification_loss<'a, I>(traces: I, labels: &[usize]) -> Result<CrossEntropy>
where
    I: IntoIterator<Item = &'a ForwardTrace>,
{
    let mut value = 0.0;
    let mut clamped = false;
    let mut count = 0;
    for (trace, &label) in traces.into_iter().zip(labels) {
        count += 1;
        let p = *trace.probs.get(label).ok_or_else(|| {
            Error::invalid(format!("label {label} outside 0..{}", trace.probs.len()))
        })?;
        let p = if p < 1e-300 {
            clamped = true;
            1e-300
        } else {
            p
        };
        value -= p.ln();
    }
    if count != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "classification traces vs labels",
            expected: labels.len(),
            found: count,
        });
    }
    Ok(CrossEntropy { value, clamped })
}

/// `α · Σ l1 + β · l2`, summed, not averaged.
pub fn total_loss(triplet_losses: &[f64], classification: f64, cfg: &TrainConfig) -> f64 {
    cfg.alpha * triplet_losses.iter().sum::<f64>() + cfg.beta * classification
}

/// Combined objective of a batch of triplet traces.
pub fn batch_loss(batch: &[TripletTrace], cfg: &TrainConfig) -> Result<f64> {
    let mut l1 = Vec::with_capacity(batch.len());
    let mut traces = Vec::with_capacity(3 * batch.len());
    let mut labels = Vec::with_capacity(3 * batch.len());
    for t in batch {
        l1.push(triplet_loss(
            &t.anchor.code,
            &t.positive.code,
            &t.negative.code,
            cfg.margin,
        )?);
        traces.extend([&t.anchor, &t.positive, &t.negative]);
        labels.extend(t.labels);
    }
    let l2 = classification_loss(traces, &labels)?;
    Ok(total_loss(&l1, l2.value, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_with_probs(probs: Vec<f64>) -> ForwardTrace {
        ForwardTrace {
            input: vec![],
            pre_activation: vec![],
            code: vec![],
            logits: vec![],
            probs,
        }
    }

    #[test]
    fn triplet_examples() {
        let v = [0.3, 0.9];
        assert_eq!(triplet_loss(&v, &v, &v, 1.0).unwrap(), 1.0);
        assert_eq!(
            triplet_loss(&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap(),
            0.0
        );
        let l = triplet_loss(&[0.2], &[0.8], &[0.3], 0.5).unwrap();
        // 0.6² − 0.1² + 0.5
        assert!((l - 0.85).abs() < 1e-12, "{l}");
    }

    #[test]
    fn triplet_errors() {
        assert!(triplet_loss(&[0.1], &[0.1, 0.2], &[0.3], 1.0).is_err());
        assert!(triplet_loss(&[0.1], &[0.1], &[0.3], 0.0).is_err());
    }

    #[test]
    fn classification_examples() {
        let uniform = trace_with_probs(vec![0.25; 4]);
        let l = classification_loss([&uniform], &[2]).unwrap();
        assert!((l.value - 4f64.ln()).abs() < 1e-12);
        assert!((l.value - 1.386294).abs() < 1e-6);

        let sure = trace_with_probs(vec![0.0, 1.0]);
        assert_eq!(classification_loss([&sure], &[1]).unwrap().value, 0.0);

        let a = trace_with_probs(vec![0.5, 0.5]);
        let b = trace_with_probs(vec![0.25, 0.75]);
        let l = classification_loss([&a, &b], &[0, 0]).unwrap();
        assert!((l.value - (2f64.ln() + 4f64.ln())).abs() < 1e-12);
        assert!((l.value - 2.079442).abs() < 1e-6);
    }

    #[test]
    fn classification_clamps_underflow() {
        let t = trace_with_probs(vec![0.0, 1.0]);
        let l = classification_loss([&t], &[0]).unwrap();
        assert!(l.clamped);
        assert!((l.value - 300.0 * 10f64.ln()).abs() < 1e-9);
        assert!(classification_loss([&t], &[5]).is_err());
        assert!(classification_loss([&t], &[0, 1]).is_err());
    }

    #[test]
    fn total_loss_examples() {
        let cfg = TrainConfig {
            alpha: 1.0,
            beta: 1.0,
            ..TrainConfig::default()
        };
        let l = total_loss(&[0.85], 4f64.ln(), &cfg);
        assert!((l - (0.85 + 4f64.ln())).abs() < 1e-12);
        assert!((l - 2.236294).abs() < 1e-6);

        let cfg = TrainConfig {
            alpha: 0.0,
            beta: 2.5,
            ..TrainConfig::default()
        };
        assert_eq!(total_loss(&[3.0, 4.0], 1.5, &cfg), 2.5 * 1.5);
        let cfg = TrainConfig {
            alpha: 1.0,
            beta: 0.0,
            ..TrainConfig::default()
        };
        assert_eq!(total_loss(&[0.0, 0.0], 7.0, &cfg), 0.0);
    }
}
