//! Shared dense linear-algebra helpers: thin SVD with a Gram-matrix fast
//! path for strongly rectangular inputs, pseudo-inverse, orthonormal range
//! bases and principal angles.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Thin singular value decomposition `A = U diag(s) Vt` with
/// `k = min(rows, cols)` retained components, singular values descending.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

/// Cost threshold (approximate flops) above which the Gram-matrix path is
/// used instead of a direct bidiagonalization.
const DIRECT_SVD_FLOP_LIMIT: usize = 300_000_000;

/// Computes a thin SVD. For strongly rectangular matrices the decomposition
/// is obtained from the eigendecomposition of the smaller Gram matrix, which
/// is much cheaper than a direct SVD and accurate for the dominant
/// components. Trailing components with singular value near zero carry no
/// reliable directions on that path.
pub fn thin_svd(a: &DMatrix<f64>) -> ThinSvd {
    let (r, c) = a.shape();
    let k = r.min(c);
    if r.saturating_mul(c).saturating_mul(k) <= DIRECT_SVD_FLOP_LIMIT {
        if let Some(svd) = a.clone().try_svd(true, true, 1.0e-13, 10_000) {
            return ThinSvd {
                u: svd.u.expect("u requested"),
                singular_values: DVector::from_iterator(k, svd.singular_values.iter().copied()),
                v_t: svd.v_t.expect("v_t requested"),
            };
        }
    }
    gram_svd(a)
}

/// Thin SVD via the Gram matrix of the smaller side.
fn gram_svd(a: &DMatrix<f64>) -> ThinSvd {
    let (r, c) = a.shape();
    if c <= r {
        let gram = a.transpose() * a;
        let (values, vectors) = sorted_symmetric_eigen(&gram);
        let sigma = values.map(|v| v.max(0.0).sqrt());
        // U = A V / sigma, with zero columns where sigma underflows.
        let av = a * &vectors;
        let mut u = DMatrix::zeros(r, c);
        for j in 0..c {
            let s = sigma[j];
            if s > 0.0 && s.is_finite() {
                let col = av.column(j) / s;
                u.set_column(j, &col);
            }
        }
        ThinSvd {
            u,
            singular_values: sigma,
            v_t: vectors.transpose(),
        }
    } else {
        let gram = a * a.transpose();
        let (values, vectors) = sorted_symmetric_eigen(&gram);
        let sigma = values.map(|v| v.max(0.0).sqrt());
        let uta = vectors.transpose() * a;
        let mut v_t = DMatrix::zeros(r, c);
        for i in 0..r {
            let s = sigma[i];
            if s > 0.0 && s.is_finite() {
                let row = uta.row(i) / s;
                v_t.set_row(i, &row);
            }
        }
        ThinSvd {
            u: vectors,
            singular_values: sigma,
            v_t,
        }
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Moore-Penrose pseudo-inverse. Singular values below `rel_tol * s_max`
/// are treated as zero. Returns the pseudo-inverse and the numerical rank.
pub fn pinv(a: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    let svd = thin_svd(a);
    let s_max = svd.singular_values.max();
    let cutoff = rel_tol * s_max;
    let k = svd.singular_values.len();
    let mut rank = 0;
    let mut inv_sigma = DVector::zeros(k);
    for i in 0..k {
        if svd.singular_values[i] > cutoff && svd.singular_values[i] > 0.0 {
            inv_sigma[i] = 1.0 / svd.singular_values[i];
            rank += 1;
        }
    }
    let mut vt_scaled = svd.v_t.clone();
    for i in 0..k {
        vt_scaled.row_mut(i).scale_mut(inv_sigma[i]);
    }
    (vt_scaled.transpose() * svd.u.transpose(), rank)
}

/// Orthonormal basis of the column space, keeping directions with singular
/// value above `rel_tol * s_max`. Returns the basis and the numerical rank.
pub fn orthonormal_colspace(a: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    let svd = thin_svd(a);
    let s_max = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > rel_tol * s_max && s > 0.0)
        .count();
    (svd.u.columns(0, rank).into_owned(), rank)
}

/// Principal angles (radians, ascending) between the column spaces of `a`
/// and `b`. Both inputs are orthonormalized first.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "principal angles need matching ambient dimension, got {} and {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let (qa, _) = orthonormal_colspace(a, 1.0e-12);
    let (qb, _) = orthonormal_colspace(b, 1.0e-12);
    let product = qa.transpose() * qb;
    let svd = thin_svd(&product);
    let mut angles: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| s.clamp(-1.0, 1.0).acos())
        .collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(angles)
}

/// Largest principal angle between column spaces.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let angles = principal_angles(a, b)?;
    Ok(angles.last().copied().unwrap_or(0.0))
}
