//! Unsupervised linear hashers: random projections (LSH), PCA with a random
//! rotation (PCA-RR), iterative quantization (ITQ) and spectral hashing (SH).
//!
//! Every hasher centers its input with a stored mean and projects onto a
//! d × b matrix. LSH, PCA-RR and ITQ take the sign of each projection; SH
//! evaluates a sinusoidal eigenfunction along the projected coordinate.

mod io;
mod itq;
mod spectral;

pub use io::{read_hasher, write_hasher, HASHER_MAGIC};
pub use itq::{fit_itq, itq_rotation, quantization_loss, ItqState};
pub use spectral::{fit_sh, ShMode};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{
    column_means, matmul, pca, random_gaussian_matrix, random_orthogonal_matrix, Matrix,
};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HasherKind {
    Lsh,
    PcaRr,
    Itq,
    Sh,
}

impl HasherKind {
    pub fn tag(self) -> u32 {
        match self {
            HasherKind::Lsh => 0,
            HasherKind::PcaRr => 1,
            HasherKind::Itq => 2,
            HasherKind::Sh => 3,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Some(match tag {
            0 => HasherKind::Lsh,
            1 => HasherKind::PcaRr,
            2 => HasherKind::Itq,
            3 => HasherKind::Sh,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            HasherKind::Lsh => "lsh",
            HasherKind::PcaRr => "pca_rr",
            HasherKind::Itq => "itq",
            HasherKind::Sh => "sh",
        }
    }
}

impl fmt::Display for HasherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HasherKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lsh" => Ok(HasherKind::Lsh),
            "pca_rr" | "pcarr" => Ok(HasherKind::PcaRr),
            "itq" => Ok(HasherKind::Itq),
            "sh" => Ok(HasherKind::Sh),
            _ => Err(Error::invalid(format!(
                "unknown hasher {s:?} (expected lsh, pca_rr, itq, sh)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearHasher {
    pub kind: HasherKind,
    pub mean: Vec<f64>,
    /// d × b; column j produces bit j.
    pub projection: Matrix,
    /// One mode per bit, SH only.
    pub sh_modes: Option<Vec<ShMode>>,
}

impl LinearHasher {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn code_bits(&self) -> usize {
        self.projection.cols()
    }

    /// Projections of `x − mean` onto each column.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "hasher input",
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.projection.mul_vec_transposed(&centered)
    }
}

/// Bits of `x`: sign rule (≥ 0 → 1) for projection hashers, mode rule for SH.
pub fn encode_linear(h: &LinearHasher, x: &[f64]) -> Result<Vec<bool>> {
    let proj = h.project(x)?;
    Ok(match (&h.kind, &h.sh_modes) {
        (HasherKind::Sh, Some(modes)) => proj.iter().zip(modes).map(|(&v, m)| m.bit(v)).collect(),
        (HasherKind::Sh, None) => return Err(Error::invalid("spectral hasher has no mode table")),
        _ => proj.iter().map(|&v| v >= 0.0).collect(),
    })
}

/// Random Gaussian projections after centering on the training mean.
pub fn fit_lsh(x: &Matrix, bits: usize, rng: &mut Rng) -> Result<LinearHasher> {
    if x.rows() == 0 {
        return Err(Error::Empty("lsh training data"));
    }
    if bits == 0 || x.cols() == 0 {
        return Err(Error::invalid("lsh needs d >= 1 and b >= 1"));
    }
    Ok(LinearHasher {
        kind: HasherKind::Lsh,
        mean: column_means(x),
        projection: random_gaussian_matrix(rng, x.cols(), bits),
        sh_modes: None,
    })
}

/// Top-b principal directions followed by a random b × b rotation.
/// Returns the hasher and the rotation.
pub fn fit_pca_rr(x: &Matrix, bits: usize, rng: &mut Rng) -> Result<(LinearHasher, Matrix)> {
    check_pca_bits(x, bits)?;
    let model = pca(x, bits)?;
    let rotation = random_orthogonal_matrix(rng, bits);
    let projection = matmul(&model.components, &rotation)?;
    Ok((
        LinearHasher {
            kind: HasherKind::PcaRr,
            mean: model.mean,
            projection,
            sh_modes: None,
        },
        rotation,
    ))
}

pub(crate) fn check_pca_bits(x: &Matrix, bits: usize) -> Result<()> {
    if bits == 0 {
        return Err(Error::invalid("bits must be >= 1"));
    }
    if bits > x.cols() {
        return Err(Error::invalid(format!(
            "{bits} bits exceed the {} available principal components (d = {})",
            x.cols(),
            x.cols()
        )));
    }
    if x.rows() < 2 || bits > x.rows() - 1 {
        return Err(Error::invalid(format!(
            "{bits} bits need at least {} training rows, got {}",
            bits + 1,
            x.rows()
        )));
    }
    Ok(())
}
