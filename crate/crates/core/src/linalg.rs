//! Small dense linear-algebra helpers shared by the PLDA and VB-HMM code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Force exact symmetry: m <- (m + m^T) / 2.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order and a fixed sign convention on the eigenvectors (the
/// component of largest magnitude is made positive), so results are
/// reproducible across runs.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        let mut best = -1.0_f64;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                pivot = i;
            }
        }
        let flip = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, dst)] = flip * col[i];
        }
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen_desc(m);
    vals.last().copied().unwrap_or(0.0)
}

/// Add diagonal jitter when the matrix is near-singular so downstream
/// Cholesky factorizations succeed. Jitter is 1e-8 * trace / dim with an
/// absolute floor of 1e-10 for matrices with vanishing trace.
pub fn stabilize_spd(m: &mut DMatrix<f64>, what: &str) {
    let n = m.nrows();
    if n == 0 {
        return;
    }
    let min_eig = min_eigenvalue(m);
    if min_eig >= 1e-12 {
        return;
    }
    let trace: f64 = m.diagonal().iter().sum();
    // shift past any negative eigenvalue picked up by rounding
    let jitter = (1e-8 * trace / n as f64)
        .max(1e-10)
        .max(-min_eig + 1e-10);
    log::warn!("{what}: near-singular covariance, adding diagonal jitter {jitter:.3e}");
    for i in 0..n {
        m[(i, i)] += jitter;
    }
}

pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))
}

pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut inv = cholesky(m)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn spd_logdet(m: &DMatrix<f64>) -> Result<f64> {
    let chol = cholesky(m)?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Symmetric square root of a positive semi-definite matrix.
pub fn sqrt_spd(m: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(m, |l| l.max(0.0).sqrt())
}

/// Symmetric inverse square root. Errors when the matrix is singular.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, _) = sym_eigen_desc(m);
    if vals.last().copied().unwrap_or(0.0) <= 1e-300 {
        return Err(Error::Numerical(
            "singular total covariance, cannot whiten".into(),
        ));
    }
    Ok(spectral_map(m, |l| 1.0 / l.sqrt()))
}

fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = m.nrows();
    let (vals, vecs) = sym_eigen_desc(m);
    let mut out = DMatrix::zeros(n, n);
    for (j, &l) in vals.iter().enumerate() {
        let fl = f(l);
        let v = vecs.column(j);
        for r in 0..n {
            for c in 0..n {
                out[(r, c)] += fl * v[r] * v[c];
            }
        }
    }
    symmetrize(&mut out);
    out
}

/// Stack row vectors into an N x D matrix.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(n, d, |i, j| rows[i][j])
}

pub fn mean_row(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    let mut mu = DVector::zeros(m.ncols());
    for i in 0..m.nrows() {
        mu += m.row(i).transpose();
    }
    mu / n
}

/// Population covariance (1/N) of the rows of `m` around `mean`.
pub fn covariance(m: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let (n, d) = m.shape();
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..n {
        let z = m.row(i).transpose() - mean;
        cov.ger(1.0 / n as f64, &z, &z, 1.0);
    }
    symmetrize(&mut cov);
    cov
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
