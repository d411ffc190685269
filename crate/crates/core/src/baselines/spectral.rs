use super::{HasherKind, LinearHasher};
use crate::error::{Error, Result};
use crate::linalg::{pca, Matrix};

/// One spectral-hashing bit: a sinusoid of integer frequency along a principal
/// direction whose training range is `[min, min + extent]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShMode {
    pub component: u32,
    pub frequency: f64,
    pub min: f64,
    pub extent: f64,
}

impl ShMode {
    /// `sin(π/2 + π·k·(v − min)/extent) ≥ 0`
    pub fn bit(&self, v: f64) -> bool {
        let phase = std::f64::consts::FRAC_PI_2
            + std::f64::consts::PI * self.frequency * (v - self.min) / self.extent;
        phase.sin() >= 0.0
    }

    /// Analytic eigenvalue ordering key under the uniform-box model: `(k / extent)²`.
    pub fn eigen_key(&self) -> f64 {
        let w = self.frequency / self.extent;
        w * w
    }
}

/// Spectral hashing with a uniform-box assumption along the top principal directions.
pub fn fit_sh(x: &Matrix, bits: usize) -> Result<LinearHasher> {
    if bits == 0 {
        return Err(Error::invalid("bits must be >= 1"));
    }
    if x.rows() < 2 {
        return Err(Error::invalid(
            "spectral hashing needs at least 2 training rows",
        ));
    }
    let directions = bits.min(x.cols()).min(x.rows() - 1);
    let model = pca(x, directions)?;
    let projected = model.project_rows(x)?;

    let mut candidates = Vec::new();
    for j in 0..directions {
        let col = projected.column(j);
        let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let extent = max - min;
        if !(extent > 1e-12 * (1.0 + min.abs().max(max.abs()))) {
            continue;
        }
        for k in 1..=bits {
            candidates.push(ShMode {
                component: j as u32,
                frequency: k as f64,
                min,
                extent,
            });
        }
    }
    if candidates.len() < bits {
        return Err(Error::invalid(format!(
            "only {} usable spectral modes for {bits} bits",
            candidates.len()
        )));
    }
    // Stable sort keeps (component, frequency) order on ties.
    candidates.sort_by(|a, b| a.eigen_key().total_cmp(&b.eigen_key()));
    candidates.truncate(bits);

    let d = x.cols();
    let mut projection = Matrix::zeros(d, bits);
    for (i, m) in candidates.iter().enumerate() {
        for r in 0..d {
            projection[(r, i)] = model.components[(r, m.component as usize)];
        }
    }
    Ok(LinearHasher {
        kind: HasherKind::Sh,
        mean: model.mean,
        projection,
        sh_modes: Some(candidates),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::encode_linear;
    use crate::linalg::random_gaussian_matrix;
    use crate::rng::Rng;

    #[test]
    fn single_bit_splits_uniform_line_at_median() {
        // 101 evenly spaced points on [0, 100], embedded in 2-D with a tiny second coordinate.
        let rows: Vec<[f64; 2]> = (0..=100)
            .map(|i| [i as f64, if i % 2 == 0 { 1e-3 } else { -1e-3 }])
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let h = fit_sh(&x, 1).unwrap();
        let modes = h.sh_modes.as_ref().unwrap();
        assert_eq!(modes.len(), 1);
        assert_eq!(modes[0].frequency, 1.0);
        assert_eq!(modes[0].component, 0);
        let bits: Vec<bool> = rows
            .iter()
            .map(|r| encode_linear(&h, r).unwrap()[0])
            .collect();
        // Exactly one switch, and it sits at the midpoint.
        let switches: Vec<usize> = (1..bits.len())
            .filter(|&i| bits[i] != bits[i - 1])
            .collect();
        assert_eq!(switches.len(), 1, "{bits:?}");
        assert!((switches[0] as i64 - 50).abs() <= 1, "{switches:?}");
    }

    #[test]
    fn modes_are_in_eigenvalue_order() {
        let x = random_gaussian_matrix(&mut Rng::new(4), 80, 6);
        let h = fit_sh(&x, 12).unwrap();
        let modes = h.sh_modes.unwrap();
        assert_eq!(modes.len(), 12);
        for w in modes.windows(2) {
            assert!(w[0].eigen_key() <= w[1].eigen_key());
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let x = random_gaussian_matrix(&mut Rng::new(9), 40, 5);
        assert_eq!(fit_sh(&x, 8).unwrap(), fit_sh(&x, 8).unwrap());
    }

    #[test]
    fn constant_data_is_rejected() {
        let x = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(fit_sh(&x, 2).is_err());
    }
}
