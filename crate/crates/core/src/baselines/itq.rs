use super::{check_pca_bits, HasherKind, LinearHasher};
use crate::error::Result;
use crate::linalg::{matmul, orthogonal_polar_factor_near, pca, random_orthogonal_matrix, Matrix};
use crate::rng::Rng;

#[derive(Clone, Debug)]
pub struct ItqState {
    pub rotation: Matrix,
    /// Loss of the random starting rotation.
    pub initial_loss: f64,
    /// `‖B − V·R‖²` after each iteration.
    pub loss_history: Vec<f64>,
    /// First iteration after which the codes stopped changing.
    pub converged_at: Option<usize>,
    /// Some Procrustes step saw a rank-deficient `VᵀB`.
    pub degenerate: bool,
}

/// Sign codes (±1, zero mapped to +1) of `vr` and the squared Frobenius gap to them.
pub fn quantization_loss(vr: &Matrix) -> (Matrix, f64) {
    let mut b = vr.clone();
    let mut loss = 0.0;
    for v in b.data_mut() {
        let s = if *v >= 0.0 { 1.0 } else { -1.0 };
        loss += (s - *v) * (s - *v);
        *v = s;
    }
    (b, loss)
}

fn gap(b: &Matrix, vr: &Matrix) -> f64 {
    b.as_slice()
        .iter()
        .zip(vr.as_slice())
        .map(|(s, v)| (s - v) * (s - v))
        .sum()
}

/// Alternating minimization of `‖B − V·R‖²` over binary `B` and orthogonal `R`,
/// starting from `initial`.
///
/// A rotation update is only accepted if it does not raise the loss, so the
/// history is non-increasing even under rounding.
pub fn itq_rotation(v: &Matrix, initial: Matrix, iterations: usize) -> Result<ItqState> {
    let vt = v.transpose();
    let mut rotation = initial;
    let mut vr = matmul(v, &rotation)?;
    let (mut codes, initial_loss) = quantization_loss(&vr);
    let mut loss_history = Vec::with_capacity(iterations);
    let mut converged_at = None;
    let mut degenerate = false;

    for it in 1..=iterations {
        let (polar, deficient) =
            orthogonal_polar_factor_near(&matmul(&vt, &codes)?, Some(&rotation))?;
        degenerate |= deficient;
        let loss_before = gap(&codes, &vr);
        let candidate_vr = matmul(v, &polar)?;
        let candidate_loss = gap(&codes, &candidate_vr);
        if candidate_loss <= loss_before {
            rotation = polar;
            vr = candidate_vr;
        }
        let (next_codes, loss) = quantization_loss(&vr);
        if converged_at.is_none() && next_codes == codes {
            converged_at = Some(it);
        }
        codes = next_codes;
        loss_history.push(loss);
    }
    Ok(ItqState {
        rotation,
        initial_loss,
        loss_history,
        converged_at,
        degenerate,
    })
}

/// PCA to `bits` dimensions, then a learned rotation initialized from a random
/// orthogonal matrix.
pub fn fit_itq(
    x: &Matrix,
    bits: usize,
    iterations: usize,
    rng: &mut Rng,
) -> Result<(LinearHasher, ItqState)> {
    check_pca_bits(x, bits)?;
    if iterations == 0 {
        return Err(crate::Error::invalid("itq needs at least one iteration"));
    }
    let model = pca(x, bits)?;
    let v = model.project_rows(x)?;
    let start = random_orthogonal_matrix(rng, bits);
    let state = itq_rotation(&v, start, iterations)?;
    let projection = matmul(&model.components, &state.rotation)?;
    Ok((
        LinearHasher {
            kind: HasherKind::Itq,
            mean: model.mean,
            projection,
            sh_modes: None,
        },
        state,
    ))
}
