use super::loss::hinge_argument;
use super::train::TripletTrace;
use super::{HashHeadParams, TrainConfig};
use crate::error::{Error, Result};

/// Gradients share the parameter layout.
pub type Gradients = HashHeadParams;

/// Analytic gradient of the combined objective over a batch.
///
/// Accumulation runs in triplet order (anchor, positive, negative), so the
/// result is bit-reproducible. A hinge whose argument is exactly zero
/// contributes nothing.
pub fn backward(params: &HashHeadParams, batch: &[TripletTrace], cfg: &TrainConfig) -> Gradients {
    let mut g = HashHeadParams::zeros(params.input_dim(), params.code_bits(), params.num_classes());
    let bits = params.code_bits();
    let mut d_code = [vec![0.0; bits], vec![0.0; bits], vec![0.0; bits]];

    for t in batch {
        let members = [&t.anchor, &t.positive, &t.negative];
        d_code
            .iter_mut()
            .for_each(|d| d.iter_mut().for_each(|v| *v = 0.0));

        if cfg.alpha != 0.0
            && hinge_argument(
                &t.anchor.code,
                &t.positive.code,
                &t.negative.code,
                cfg.margin,
            ) > 0.0
        {
            for j in 0..bits {
                let (a, p, n) = (t.anchor.code[j], t.positive.code[j], t.negative.code[j]);
                d_code[0][j] = 2.0 * cfg.alpha * (n - p);
                d_code[1][j] = -2.0 * cfg.alpha * (a - p);
                d_code[2][j] = 2.0 * cfg.alpha * (a - n);
            }
        }

        for ((trace, &label), d_f) in members.iter().zip(&t.labels).zip(d_code.iter_mut()) {
            if cfg.beta != 0.0 {
                // d(−ln p_y)/dz = p − onehot(y)
                for (k, &p) in trace.probs.iter().enumerate() {
                    let dz = cfg.beta * (p - if k == label { 1.0 } else { 0.0 });
                    g.b2[k] += dz;
                    for (j, gw) in g.w2.row_mut(k).iter_mut().enumerate() {
                        *gw += dz * trace.code[j];
                    }
                    for (j, df) in d_f.iter_mut().enumerate() {
                        *df += dz * params.w2[(k, j)];
                    }
                }
            }
            for j in 0..bits {
                let f = trace.code[j];
                let da = d_f[j] * f * (1.0 - f);
                if da == 0.0 {
                    continue;
                }
                g.b1[j] += da;
                for (gw, &x) in g.w1.row_mut(j).iter_mut().zip(&trace.input) {
                    *gw += da * x;
                }
            }
        }
    }
    g
}

/// Momentum SGD: `v ← μ·v − lr·g`, `θ ← θ + v`.
///
/// Nothing is modified if the update would produce a non-finite parameter.
pub fn sgd_step(
    params: &mut HashHeadParams,
    grads: &Gradients,
    velocity: &mut HashHeadParams,
    cfg: &TrainConfig,
) -> Result<()> {
    for (name, (p, (g, v))) in ["W1", "b1", "W2", "b2"].iter().zip(
        params
            .blocks()
            .iter()
            .zip(grads.blocks().iter().zip(velocity.blocks().iter())),
    ) {
        if p.len() != g.len() || p.len() != v.len() {
            return Err(Error::DimensionMismatch {
                context: "sgd parameter block",
                expected: p.len(),
                found: g.len().min(v.len()),
            });
        }
        for i in 0..p.len() {
            let nv = cfg.momentum * v[i] - cfg.learning_rate * g[i];
            if !(nv.is_finite() && (p[i] + nv).is_finite()) {
                return Err(Error::invalid(format!(
                    "non-finite update in {name}[{i}]: param {}, grad {}, velocity {}",
                    p[i], g[i], v[i]
                )));
            }
        }
    }
    for ((p, g), v) in params
        .blocks_mut()
        .into_iter()
        .zip(grads.blocks())
        .zip(velocity.blocks_mut())
    {
        for i in 0..p.len() {
            v[i] = cfg.momentum * v[i] - cfg.learning_rate * g[i];
            p[i] += v[i];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash_head::forward;
    use crate::linalg::Matrix;
    use crate::rng::Rng;

    fn trip(p: &HashHeadParams, xs: [&[f64]; 3], labels: [usize; 3]) -> TripletTrace {
        TripletTrace {
            anchor: forward(p, xs[0]).unwrap(),
            positive: forward(p, xs[1]).unwrap(),
            negative: forward(p, xs[2]).unwrap(),
            labels,
        }
    }

    fn is_zero(g: &Gradients) -> bool {
        g.blocks().iter().all(|b| b.iter().all(|&v| v == 0.0))
    }

    #[test]
    fn inactive_hinge_without_classification_is_flat() {
        // Codes saturate: anchor and positive near 1, negative near 0.
        let mut p = HashHeadParams::zeros(1, 2, 2);
        p.w1 = Matrix::from_rows(&[[30.0], [30.0]]).unwrap();
        let t = trip(&p, [&[1.0], &[1.0], &[-1.0]], [0, 0, 1]);
        let cfg = TrainConfig {
            beta: 0.0,
            margin: 0.5,
            ..TrainConfig::default()
        };
        assert!(is_zero(&backward(&p, &[t], &cfg)));
    }

    #[test]
    fn hinge_boundary_takes_zero_branch() {
        // Identical codes make the argument equal the margin; shift margin so it is exactly 0
        // is impossible with m > 0, so place the negative so that ‖a−n‖² = m.
        let mut p = HashHeadParams::zeros(1, 1, 2);
        p.w1[(0, 0)] = 1.0;
        let a = forward(&p, &[0.0]).unwrap();
        let n = forward(&p, &[2.0]).unwrap();
        let gap = (a.code[0] - n.code[0]).powi(2);
        let cfg = TrainConfig {
            beta: 0.0,
            margin: gap,
            ..TrainConfig::default()
        };
        assert_eq!(hinge_argument(&a.code, &a.code, &n.code, cfg.margin), 0.0);
        let t = TripletTrace {
            anchor: a.clone(),
            positive: a,
            negative: n,
            labels: [0, 0, 1],
        };
        assert!(is_zero(&backward(&p, &[t], &cfg)));
    }

    #[test]
    fn doubling_alpha_doubles_gradient() {
        let mut rng = Rng::new(5);
        let p = HashHeadParams::init(4, 3, 2, &mut rng);
        let x: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.gaussian()).collect())
            .collect();
        let t = trip(&p, [&x[0], &x[1], &x[2]], [0, 0, 1]);
        let cfg1 = TrainConfig {
            alpha: 1.0,
            beta: 0.0,
            margin: 1.0,
            ..TrainConfig::default()
        };
        let cfg2 = TrainConfig {
            alpha: 2.0,
            ..cfg1.clone()
        };
        let g1 = backward(&p, std::slice::from_ref(&t), &cfg1);
        let g2 = backward(&p, &[t], &cfg2);
        assert!(!is_zero(&g1));
        for (a, b) in g1.blocks().iter().zip(g2.blocks()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(2.0 * x, *y);
            }
        }
    }

    #[test]
    fn sgd_examples() {
        let cfg = TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            ..TrainConfig::default()
        };
        let mut p = HashHeadParams::zeros(1, 1, 1);
        let mut v = HashHeadParams::zeros(1, 1, 1);
        let mut g = HashHeadParams::zeros(1, 1, 1);
        g.w1[(0, 0)] = 1.0;
        sgd_step(&mut p, &g, &mut v, &cfg).unwrap();
        sgd_step(&mut p, &g, &mut v, &cfg).unwrap();
        assert!((p.w1[(0, 0)] - (-0.1 - 0.19)).abs() < 1e-15);
        assert_eq!(p.b1[0], 0.0);

        let plain = TrainConfig {
            momentum: 0.0,
            ..cfg.clone()
        };
        let mut p = HashHeadParams::zeros(1, 1, 1);
        let mut v = HashHeadParams::zeros(1, 1, 1);
        sgd_step(&mut p, &g, &mut v, &plain).unwrap();
        sgd_step(&mut p, &g, &mut v, &plain).unwrap();
        assert!((p.w1[(0, 0)] + 0.2).abs() < 1e-15);

        let before = p.clone();
        let zero = HashHeadParams::zeros(1, 1, 1);
        let mut v = HashHeadParams::zeros(1, 1, 1);
        sgd_step(&mut p, &zero, &mut v, &cfg).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn sgd_rejects_non_finite() {
        let cfg = TrainConfig::default();
        let mut p = HashHeadParams::zeros(1, 1, 1);
        let mut v = HashHeadParams::zeros(1, 1, 1);
        let mut g = HashHeadParams::zeros(1, 1, 1);
        g.b2[0] = f64::INFINITY;
        let before = p.clone();
        assert!(sgd_step(&mut p, &g, &mut v, &cfg).is_err());
        assert_eq!(p, before);
    }
}
