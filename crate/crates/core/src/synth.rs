//! Synthetic clustered frame features with a known class structure.
//!
//! Class centers are the vertices of a regular simplex (every pair exactly
//! `cluster_separation` apart) placed by a random rotation; each frame is its
//! class center plus isotropic Gaussian noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::VideoRecord;
use crate::linalg::{random_orthogonal_matrix, Matrix};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub videos_per_class: usize,
    pub frames_per_video: usize,
    pub dim: usize,
    pub cluster_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0
            || self.videos_per_class == 0
            || self.frames_per_video == 0
            || self.dim == 0
        {
            return Err(Error::invalid("synthetic counts must all be >= 1"));
        }
        if self.dim < self.classes {
            return Err(Error::invalid(format!(
                "dim {} must be >= classes {} to place simplex centers",
                self.dim, self.classes
            )));
        }
        if !(self.cluster_separation > 0.0 && self.cluster_separation.is_finite()) {
            return Err(Error::invalid("cluster_separation must be > 0"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub frames: Matrix,
    pub records: Vec<VideoRecord>,
    /// classes × dim.
    pub centers: Matrix,
}

/// Videos are interleaved by class (video `i` has label `i % classes`); each
/// occupies `frames_per_video` consecutive frame rows.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let rotation = random_orthogonal_matrix(&mut rng, spec.dim);
    let scale = spec.cluster_separation / std::f64::consts::SQRT_2;
    let mut centers = Matrix::zeros(spec.classes, spec.dim);
    for c in 0..spec.classes {
        for j in 0..spec.dim {
            centers[(c, j)] = scale * rotation[(j, c)];
        }
    }

    let videos = spec.classes * spec.videos_per_class;
    let rows = videos * spec.frames_per_video;
    let mut data = Vec::with_capacity(rows * spec.dim);
    let mut records = Vec::with_capacity(videos);
    for v in 0..videos {
        let label = v % spec.classes;
        records.push(VideoRecord {
            video_id: format!("vid{v:05}"),
            label,
            frame_start: v * spec.frames_per_video,
            frame_count: spec.frames_per_video,
        });
        for _ in 0..spec.frames_per_video {
            for j in 0..spec.dim {
                data.push(centers[(label, j)] + spec.noise_sigma * rng.gaussian());
            }
        }
    }
    Ok(SyntheticData {
        frames: Matrix::from_raw(rows, spec.dim, data),
        records,
        centers,
    })
}
