//! Dense row-major matrices and the handful of decompositions the hashers need:
//! centering, PCA by cyclic Jacobi, one-sided Jacobi SVD, and random
//! Gaussian / orthogonal matrices drawn from [`Rng`].

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting bad lengths and NaN/Inf.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix data length",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "matrix",
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    context: "matrix row length",
                    expected: cols,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        matmul(self, other)
    }

    /// `self · x` for a column vector `x`.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "matrix-vector product",
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `selfᵀ · x` without materializing the transpose.
    pub fn mul_vec_transposed(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::DimensionMismatch {
                context: "transposed matrix-vector product",
                expected: self.rows,
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        Ok(out)
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_raw(idx.len(), self.cols, data)
    }

    /// Largest absolute entry of `selfᵀself − I`.
    pub fn orthogonality_error(&self) -> f64 {
        let g = matmul(&self.transpose(), self).expect("shapes agree");
        let mut worst = 0.0f64;
        for i in 0..g.rows {
            for j in 0..g.cols {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            context: "matmul inner dimension",
            expected: a.cols,
            found: b.rows,
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in orow.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Subtracts column means. Returns the centered matrix and the means.
pub fn center(x: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    if x.rows == 0 {
        return Err(Error::Empty("matrix to center has no rows"));
    }
    let mean = column_means(x);
    let mut out = x.clone();
    for i in 0..out.rows {
        for (v, m) in out.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    Ok((out, mean))
}

pub fn column_means(x: &Matrix) -> Vec<f64> {
    let mut mean = vec![0.0; x.cols];
    for i in 0..x.rows {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    let n = x.rows as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// d × c, one principal direction per column.
    pub components: Matrix,
    /// Descending, non-negative.
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    /// Coordinates of `x` along each principal direction.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                context: "pca projection",
                expected: self.mean.len(),
                found: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        self.components.mul_vec_transposed(&centered)
    }

    /// Projects every row of `x`: n × c.
    pub fn project_rows(&self, x: &Matrix) -> Result<Matrix> {
        let mut data = Vec::with_capacity(x.rows() * self.components.cols());
        for i in 0..x.rows() {
            data.extend(self.project(x.row(i))?);
        }
        Ok(Matrix::from_raw(x.rows(), self.components.cols(), data))
    }
}

/// Top-`c` principal components of the rows of `x` (sample covariance, 1/(n−1)).
///
/// Each component is sign-normalized so that its largest-magnitude entry is positive.
pub fn pca(x: &Matrix, c: usize) -> Result<PcaModel> {
    if x.rows < 2 {
        return Err(Error::invalid(format!(
            "pca needs at least 2 rows, got {}",
            x.rows
        )));
    }
    let max_c = (x.rows - 1).min(x.cols);
    if c == 0 || c > max_c {
        return Err(Error::invalid(format!(
            "pca component count {c} out of range 1..={max_c}"
        )));
    }
    let (xc, mean) = center(x)?;
    if xc.data.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroVariance);
    }
    let mut cov = matmul(&xc.transpose(), &xc)?;
    let scale = 1.0 / (x.rows - 1) as f64;
    cov.data.iter_mut().for_each(|v| *v *= scale);
    let (values, vectors) = symmetric_eigen(&cov);

    let d = x.cols;
    let mut components = Matrix::zeros(d, c);
    for j in 0..c {
        let mut col = vectors.column(j);
        normalize_sign(&mut col);
        for i in 0..d {
            components[(i, j)] = col[i];
        }
    }
    let eigenvalues = values[..c].iter().map(|&v| v.max(0.0)).collect();
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
    })
}

/// Flips `v` so that its largest-magnitude entry (first one on ties) is positive.
fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as columns.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    assert_eq!(a.rows, a.cols, "symmetric_eigen needs a square matrix");
    let n = a.rows;
    let mut a = a.clone();
    let mut v = Matrix::identity(n);
    let total: f64 = a.data.iter().map(|x| x * x).sum();

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off <= 1e-30 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    (values, vectors)
}

#[derive(Clone, Debug)]
pub struct Svd {
    /// m × n with orthonormal columns.
    pub u: Matrix,
    /// Descending.
    pub singular_values: Vec<f64>,
    /// n × n orthogonal.
    pub v: Matrix,
    /// True when some singular value vanished and its left vector was completed
    /// by Gram–Schmidt against the standard basis.
    pub rank_deficient: bool,
}

/// Thin SVD `a = u · diag(s) · vᵀ` of an m × n matrix (m ≥ n) by one-sided Jacobi.
pub fn svd(a: &Matrix) -> Result<Svd> {
    let (m, n) = (a.rows, a.cols);
    if m < n {
        return Err(Error::invalid(format!(
            "svd needs rows >= cols, got {m}x{n}"
        )));
    }
    let mut u = a.clone();
    let mut v = Matrix::identity(n);

    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| u[(i, j)] * u[(i, j)]).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let smax = norms[order[0]];
    let tol = smax * 1e-13 * (m as f64);

    let mut u_out = Matrix::zeros(m, n);
    let mut v_out = Matrix::zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        for i in 0..n {
            v_out[(i, dst)] = v[(i, src)];
        }
        if s > tol && s > 0.0 {
            for i in 0..m {
                u_out[(i, dst)] = u[(i, src)] / s;
            }
            singular_values.push(s);
        } else {
            deficient.push(dst);
            singular_values.push(0.0);
        }
    }
    let rank_deficient = !deficient.is_empty();
    if rank_deficient {
        complete_orthonormal_columns(&mut u_out, &deficient, &[]);
    }
    Ok(Svd {
        u: u_out,
        singular_values,
        v: v_out,
        rank_deficient,
    })
}

/// Fills the listed columns of `q` with unit vectors orthogonal to every other column.
/// `hints[i]`, when given, is tried first for `missing[i]`; standard basis vectors follow.
fn complete_orthonormal_columns(q: &mut Matrix, missing: &[usize], hints: &[Vec<f64>]) {
    let (m, n) = (q.rows, q.cols);
    let mut filled: Vec<usize> = (0..n).filter(|j| !missing.contains(j)).collect();
    let mut basis = 0;
    for (slot, &j) in missing.iter().enumerate() {
        let mut hint = hints.get(slot).cloned();
        while hint.is_some() || basis < m {
            let cand_src = match hint.take() {
                Some(h) => h,
                None => {
                    let mut e = vec![0.0; m];
                    e[basis] = 1.0;
                    basis += 1;
                    e
                }
            };
            let mut cand = cand_src;
            for _ in 0..2 {
                for &k in &filled {
                    let proj: f64 = (0..m).map(|i| cand[i] * q[(i, k)]).sum();
                    for (i, c) in cand.iter_mut().enumerate() {
                        *c -= proj * q[(i, k)];
                    }
                }
            }
            let norm = cand.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > 1e-6 {
                for i in 0..m {
                    q[(i, j)] = cand[i] / norm;
                }
                filled.push(j);
                break;
            }
        }
    }
}

/// Orthogonal `r` maximizing `tr(rᵀ m)` for square `m`, i.e. the polar factor `u vᵀ`.
/// The flag reports a rank-deficient `m`.
pub fn orthogonal_polar_factor(m: &Matrix) -> Result<(Matrix, bool)> {
    orthogonal_polar_factor_near(m, None)
}

/// Like [`orthogonal_polar_factor`], but when `m` is rank-deficient the free
/// directions are resolved toward `previous` (left vectors `previous · v_j`)
/// instead of an arbitrary basis completion.
pub fn orthogonal_polar_factor_near(
    m: &Matrix,
    previous: Option<&Matrix>,
) -> Result<(Matrix, bool)> {
    if m.rows != m.cols {
        return Err(Error::invalid("polar factor needs a square matrix"));
    }
    let mut s = svd(m)?;
    if s.rank_deficient {
        if let Some(prev) = previous {
            let missing: Vec<usize> = (0..m.cols)
                .filter(|&j| s.singular_values[j] == 0.0)
                .collect();
            let hints: Vec<Vec<f64>> = missing
                .iter()
                .map(|&j| prev.mul_vec(&s.v.column(j)))
                .collect::<Result<_>>()?;
            complete_orthonormal_columns(&mut s.u, &missing, &hints);
        }
    }
    Ok((matmul(&s.u, &s.v.transpose())?, s.rank_deficient))
}

/// i.i.d. standard normal entries, filled row-major.
pub fn random_gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gaussian()).collect();
    Matrix::from_raw(rows, cols, data)
}

/// Random n × n orthogonal matrix: a Gaussian matrix orthonormalized column by column
/// with modified Gram–Schmidt (two passes).
pub fn random_orthogonal_matrix(rng: &mut Rng, n: usize) -> Matrix {
    let mut q = random_gaussian_matrix(rng, n, n);
    for j in 0..n {
        loop {
            for _pass in 0..2 {
                for k in 0..j {
                    let proj: f64 = (0..n).map(|i| q[(i, j)] * q[(i, k)]).sum();
                    for i in 0..n {
                        q[(i, j)] -= proj * q[(i, k)];
                    }
                }
            }
            let norm = (0..n).map(|i| q[(i, j)] * q[(i, j)]).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for i in 0..n {
                    q[(i, j)] /= norm;
                }
                break;
            }
            // Numerically dependent column: redraw it.
            for i in 0..n {
                q[(i, j)] = rng.gaussian();
            }
        }
    }
    q
}
