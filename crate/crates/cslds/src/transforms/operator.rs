//! Row-sampled fast random projections.
//!
//! The measurement matrices are realized matrix-free as a sign-flipped,
//! permuted, normalized Walsh-Hadamard transform with a subset of output
//! rows retained. The full (unsampled) transform is orthonormal, so the
//! adjoint is exact and row selections never increase vector norms.

use std::sync::Arc;

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// In-place unnormalized fast Walsh-Hadamard transform. `data.len()` must be
/// a power of two. The transform matrix is symmetric, and applying it twice
/// scales by `n`.
pub fn fwht(data: &mut [f64]) {
    let n = data.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for i in block..block + h {
                let a = data[i];
                let b = data[i + h];
                data[i] = a + b;
                data[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// A structured compressive measurement operator: selected rows of an
/// orthonormal randomized fast transform.
///
/// Forward action on a length-`logical_len` vector: zero-pad to the next
/// power of two `n`, flip signs, permute, apply the normalized
/// Walsh-Hadamard transform, keep the configured rows. `O(n log n)` time.
#[derive(Debug, Clone)]
pub struct RowSampledFastOperator {
    n: usize,
    logical_len: usize,
    rows: Vec<usize>,
    sign_flip: Arc<[f64]>,
    perm: Arc<[usize]>,
    seed: u64,
}

impl RowSampledFastOperator {
    /// Builds an operator with `num_rows` rows drawn without replacement
    /// from a transform whose randomization is generated by `seed`.
    pub fn from_seed(logical_len: usize, num_rows: usize, seed: u64) -> Result<Self> {
        let n = padded_len(logical_len)?;
        if num_rows > n {
            return Err(Error::Config(format!(
                "cannot select {num_rows} rows from a transform of size {n}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sign_flip, perm) = randomization(n, &mut rng);
        let rows = rand::seq::index::sample(&mut rng, n, num_rows).into_vec();
        Self::from_parts(logical_len, rows, sign_flip, perm, seed)
    }

    /// Assembles an operator from explicit parts. Used by the ensemble
    /// builder (shared randomization across operators) and by tests.
    pub fn from_parts(
        logical_len: usize,
        rows: Vec<usize>,
        sign_flip: Vec<f64>,
        perm: Vec<usize>,
        seed: u64,
    ) -> Result<Self> {
        Self::from_shared(logical_len, rows, sign_flip.into(), perm.into(), seed)
    }

    fn from_shared(
        logical_len: usize,
        rows: Vec<usize>,
        sign_flip: Arc<[f64]>,
        perm: Arc<[usize]>,
        seed: u64,
    ) -> Result<Self> {
        let n = padded_len(logical_len)?;
        if sign_flip.len() != n || perm.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "randomization length {} does not match padded size {n}",
                sign_flip.len()
            )));
        }
        let mut seen = vec![false; n];
        for &r in &rows {
            if r >= n {
                return Err(Error::Config(format!("row index {r} out of range 0..{n}")));
            }
            if seen[r] {
                return Err(Error::Config(format!("duplicate row index {r}")));
            }
            seen[r] = true;
        }
        Ok(Self {
            n,
            logical_len,
            rows,
            sign_flip,
            perm,
            seed,
        })
    }

    pub fn padded_len(&self) -> usize {
        self.n
    }

    pub fn logical_len(&self) -> usize {
        self.logical_len
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Forward measurement: `z = Phi y`.
    pub fn apply(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.logical_len {
            return Err(Error::DimensionMismatch(format!(
                "operator expects length {}, got {}",
                self.logical_len,
                y.len()
            )));
        }
        let mut buf = vec![0.0; self.n];
        for i in 0..self.logical_len {
            buf[i] = y[i] * self.sign_flip[i];
        }
        let mut permuted = vec![0.0; self.n];
        for i in 0..self.n {
            permuted[i] = buf[self.perm[i]];
        }
        fwht(&mut permuted);
        let scale = 1.0 / (self.n as f64).sqrt();
        Ok(DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|&r| permuted[r] * scale),
        ))
    }

    /// Exact adjoint of [`apply`](Self::apply): `y = Phi' z`.
    pub fn adjoint(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.rows.len() {
            return Err(Error::DimensionMismatch(format!(
                "adjoint expects length {}, got {}",
                self.rows.len(),
                z.len()
            )));
        }
        let mut buf = vec![0.0; self.n];
        for (k, &r) in self.rows.iter().enumerate() {
            buf[r] = z[k];
        }
        fwht(&mut buf);
        let scale = 1.0 / (self.n as f64).sqrt();
        let mut unpermuted = vec![0.0; self.n];
        for i in 0..self.n {
            unpermuted[self.perm[i]] = buf[i] * scale;
        }
        Ok(DVector::from_fn(self.logical_len, |i, _| {
            unpermuted[i] * self.sign_flip[i]
        }))
    }
}

/// The time-invariant common operator plus one innovation operator per
/// frame, all row selections of a single randomized transform. Within a
/// frame the innovation rows never collide with the common rows; across
/// frames they may repeat.
#[derive(Debug, Clone)]
pub struct MeasurementEnsemble {
    pub common: RowSampledFastOperator,
    pub innovation: Vec<RowSampledFastOperator>,
}

/// Builds the two-part measurement ensemble for `t_len` frames, fully
/// reproducible from `seed`.
pub fn make_measurement_ensemble(
    logical_len: usize,
    m_common: usize,
    m_innov: usize,
    t_len: usize,
    seed: u64,
) -> Result<MeasurementEnsemble> {
    if m_common + m_innov > logical_len {
        return Err(Error::Config(format!(
            "measurement budget {} + {} exceeds signal length {}",
            m_common, m_innov, logical_len
        )));
    }
    let n = padded_len(logical_len)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sign_flip, perm) = randomization(n, &mut rng);
    let sign_flip: Arc<[f64]> = sign_flip.into();
    let perm: Arc<[usize]> = perm.into();
    let common_rows = rand::seq::index::sample(&mut rng, n, m_common).into_vec();
    let common = RowSampledFastOperator::from_shared(
        logical_len,
        common_rows.clone(),
        Arc::clone(&sign_flip),
        Arc::clone(&perm),
        seed,
    )?;

    let mut in_common = vec![false; n];
    for &r in &common_rows {
        in_common[r] = true;
    }
    let complement: Vec<usize> = (0..n).filter(|&r| !in_common[r]).collect();

    let mut innovation = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut frame_rng = ChaCha8Rng::seed_from_u64(seed);
        frame_rng.set_stream(1 + t as u64);
        let picks = rand::seq::index::sample(&mut frame_rng, complement.len(), m_innov);
        let rows: Vec<usize> = picks.iter().map(|i| complement[i]).collect();
        innovation.push(RowSampledFastOperator::from_shared(
            logical_len,
            rows,
            Arc::clone(&sign_flip),
            Arc::clone(&perm),
            seed,
        )?);
    }
    Ok(MeasurementEnsemble { common, innovation })
}

fn padded_len(logical_len: usize) -> Result<usize> {
    if logical_len == 0 {
        return Err(Error::Config("signal length must be positive".into()));
    }
    Ok(logical_len.next_power_of_two())
}

fn randomization(n: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<usize>) {
    let sign_flip: Vec<f64> = (0..n)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    (sign_flip, perm)
}
