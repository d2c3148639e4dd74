//! Metrics and classification: reconstruction SNR, observation-matrix
//! registration, Procrustes subspace distance and a nearest-neighbor model
//! classifier.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lds::{observability_matrix, LdsModel, VideoTensor, RANK_TOL};
use crate::linalg;

/// SNR in dB from raw energies; `+inf` when the error energy is zero.
pub fn energy_snr_db(signal_energy: f64, error_energy: f64) -> f64 {
    if error_energy == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (signal_energy / error_energy).log10()
    }
}

/// Reconstruction SNR in dB:
/// `10 log10(sum_t ||y_t||^2 / sum_t ||y_t - yhat_t||^2)`.
pub fn reconstruction_snr(truth: &VideoTensor, estimate: &VideoTensor) -> Result<f64> {
    if truth.y.shape() != estimate.y.shape() {
        return Err(Error::DimensionMismatch(format!(
            "video shapes differ: {:?} vs {:?}",
            truth.y.shape(),
            estimate.y.shape()
        )));
    }
    let signal = truth.y.norm_squared();
    if signal == 0.0 {
        return Err(Error::Numerical("undefined_snr: zero-energy truth".into()));
    }
    let error = (&truth.y - &estimate.y).norm_squared();
    Ok(energy_snr_db(signal, error))
}

/// Result of the best linear registration `L = argmin ||C_hat L - C_ref||_F`.
#[derive(Debug, Clone)]
pub struct Registration {
    pub transform: DMatrix<f64>,
    pub aligned: DMatrix<f64>,
    pub residual: f64,
    /// True when `C_hat` was column rank deficient and a tolerance
    /// pseudo-inverse was used.
    pub rank_deficient: bool,
}

/// Finds the `d x d` transform that best aligns `c_hat` with `c_ref` in the
/// Frobenius sense: `L = pinv(C_hat) C_ref`.
pub fn register(c_hat: &DMatrix<f64>, c_ref: &DMatrix<f64>) -> Result<Registration> {
    if c_hat.nrows() != c_ref.nrows() || c_hat.ncols() != c_ref.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "cannot register {}x{} onto {}x{}",
            c_hat.nrows(),
            c_hat.ncols(),
            c_ref.nrows(),
            c_ref.ncols()
        )));
    }
    let (p, rank) = linalg::pinv(c_hat, 1.0e-12);
    let transform = p * c_ref;
    let aligned = c_hat * &transform;
    let residual = (&aligned - c_ref).norm();
    Ok(Registration {
        transform,
        aligned,
        residual,
        rank_deficient: rank < c_hat.ncols(),
    })
}

/// Orthonormal basis of the observability column space of an LDS,
/// the representation compared by the Procrustes distance.
#[derive(Debug, Clone)]
pub struct SubspaceDescriptor {
    /// `p x rank` orthonormal basis, `p = N * depth`.
    pub basis: DMatrix<f64>,
    pub depth: usize,
    /// True when the observability matrix had numerical rank below `d`.
    pub rank_deficient: bool,
}

impl SubspaceDescriptor {
    /// Builds the descriptor from system matrices at the given stack depth.
    pub fn from_system(c: &DMatrix<f64>, a: &DMatrix<f64>, depth: usize) -> Result<Self> {
        let obs = observability_matrix(c, a, depth)?;
        let (basis, rank) = linalg::orthonormal_colspace(&obs, RANK_TOL);
        Ok(Self {
            basis,
            depth,
            rank_deficient: rank < a.nrows(),
        })
    }

    pub fn from_model(model: &LdsModel, depth: usize) -> Result<Self> {
        Self::from_system(&model.c, &model.a, depth)
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Squared Procrustes distance between subspaces, minimizing
/// `tr((Q1 - Q2 R)'(Q1 - Q2 R))` over unconstrained `R`. The closed form is
/// `d - ||Q2' Q1||_F^2`; with bases of unequal rank the smaller rank is
/// used. Clamped at zero.
pub fn procrustes_distance2(a: &SubspaceDescriptor, b: &SubspaceDescriptor) -> Result<f64> {
    if a.basis.nrows() != b.basis.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "descriptor ambient dims differ: {} vs {}",
            a.basis.nrows(),
            b.basis.nrows()
        )));
    }
    let d = a.dim().min(b.dim()) as f64;
    let overlap = (b.basis.transpose() * &a.basis).norm_squared();
    Ok((d - overlap).max(0.0))
}

/// Nearest-neighbor classification by Procrustes distance between
/// observability subspaces. Ties resolve to the lowest training index.
/// Returns the winning label and its index in the training set.
pub fn nn_classify<L: Clone>(
    train: &[(LdsModel, L)],
    query: &LdsModel,
    depth: usize,
) -> Result<(L, usize)> {
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let query_desc = SubspaceDescriptor::from_model(query, depth)?;
    let mut best: Option<(f64, usize)> = None;
    for (idx, (model, _)) in train.iter().enumerate() {
        let desc = SubspaceDescriptor::from_model(model, depth)?;
        let dist = procrustes_distance2(&query_desc, &desc)?;
        if best.is_none_or(|(b, _)| dist < b) {
            best = Some((dist, idx));
        }
    }
    let (_, idx) = best.unwrap();
    Ok((train[idx].1.clone(), idx))
}
