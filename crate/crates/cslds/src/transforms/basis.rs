//! Orthonormal sparsifying bases over column-stacked `h x w` images.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Supported basis families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// Separable 2D type-II discrete cosine transform.
    Dct2d,
    /// Multi-level 2D Haar wavelet pyramid; needs dyadic dimensions.
    Haar2d,
    /// Pass-through (coefficients are the pixels themselves).
    Identity,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            BasisKind::Dct2d => "dct2d",
            BasisKind::Haar2d => "haar2d",
            BasisKind::Identity => "identity",
        };
        f.write_str(name)
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dct2d" => Ok(BasisKind::Dct2d),
            "haar2d" => Ok(BasisKind::Haar2d),
            "identity" => Ok(BasisKind::Identity),
            other => Err(Error::Config(format!("unknown basis kind '{other}'"))),
        }
    }
}

/// An orthonormal basis `Psi` for length `h*w` signals, applied as
/// `analyze = Psi' y` (image to coefficients) and `synthesize = Psi s`
/// (coefficients to image). The two directions are mutual inverses.
#[derive(Debug, Clone)]
pub struct SparsifyingBasis {
    kind: BasisKind,
    h: usize,
    w: usize,
    // Cached 1D DCT matrices for the separable transform.
    dct_rows: Option<DMatrix<f64>>,
    dct_cols: Option<DMatrix<f64>>,
}

impl SparsifyingBasis {
    pub fn new(kind: BasisKind, h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::Config("basis dimensions must be positive".into()));
        }
        if kind == BasisKind::Haar2d && !(h.is_power_of_two() && w.is_power_of_two()) {
            return Err(Error::Config(format!(
                "haar2d needs power-of-two dimensions, got {h}x{w}"
            )));
        }
        let (dct_rows, dct_cols) = match kind {
            BasisKind::Dct2d => (Some(dct_matrix(h)), Some(dct_matrix(w))),
            _ => (None, None),
        };
        Ok(Self {
            kind,
            h,
            w,
            dct_rows,
            dct_cols,
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn len(&self) -> usize {
        self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Image to coefficients: `Psi' y`.
    pub fn analyze(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(y.len())?;
        match self.kind {
            BasisKind::Identity => Ok(y.clone()),
            BasisKind::Dct2d => {
                let img = DMatrix::from_column_slice(self.h, self.w, y.as_slice());
                let d_r = self.dct_rows.as_ref().unwrap();
                let d_c = self.dct_cols.as_ref().unwrap();
                let coeffs = d_r * img * d_c.transpose();
                Ok(DVector::from_column_slice(coeffs.as_slice()))
            }
            BasisKind::Haar2d => {
                let mut img = DMatrix::from_column_slice(self.h, self.w, y.as_slice());
                haar_forward(&mut img);
                Ok(DVector::from_column_slice(img.as_slice()))
            }
        }
    }

    /// Coefficients to image: `Psi s`.
    pub fn synthesize(&self, coeffs: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(coeffs.len())?;
        match self.kind {
            BasisKind::Identity => Ok(coeffs.clone()),
            BasisKind::Dct2d => {
                let c = DMatrix::from_column_slice(self.h, self.w, coeffs.as_slice());
                let d_r = self.dct_rows.as_ref().unwrap();
                let d_c = self.dct_cols.as_ref().unwrap();
                let img = d_r.transpose() * c * d_c;
                Ok(DVector::from_column_slice(img.as_slice()))
            }
            BasisKind::Haar2d => {
                let mut c = DMatrix::from_column_slice(self.h, self.w, coeffs.as_slice());
                haar_inverse(&mut c);
                Ok(DVector::from_column_slice(c.as_slice()))
            }
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "basis expects length {}, got {len}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Orthonormal DCT-II matrix of size `m x m`.
fn dct_matrix(m: usize) -> DMatrix<f64> {
    let mf = m as f64;
    DMatrix::from_fn(m, m, |k, i| {
        let alpha = if k == 0 {
            (1.0 / mf).sqrt()
        } else {
            (2.0 / mf).sqrt()
        };
        alpha * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * mf)).cos()
    })
}

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn haar_forward(img: &mut DMatrix<f64>) {
    let (mut ch, mut cw) = img.shape();
    while ch >= 2 && cw >= 2 {
        // Columns: pairwise averages to the top half, details below.
        let mut scratch = vec![0.0; ch.max(cw)];
        for j in 0..cw {
            for i in 0..ch / 2 {
                let a = img[(2 * i, j)];
                let b = img[(2 * i + 1, j)];
                scratch[i] = (a + b) * SQRT_HALF;
                scratch[ch / 2 + i] = (a - b) * SQRT_HALF;
            }
            for i in 0..ch {
                img[(i, j)] = scratch[i];
            }
        }
        for i in 0..ch {
            for j in 0..cw / 2 {
                let a = img[(i, 2 * j)];
                let b = img[(i, 2 * j + 1)];
                scratch[j] = (a + b) * SQRT_HALF;
                scratch[cw / 2 + j] = (a - b) * SQRT_HALF;
            }
            for j in 0..cw {
                img[(i, j)] = scratch[j];
            }
        }
        ch /= 2;
        cw /= 2;
    }
}

fn haar_inverse(img: &mut DMatrix<f64>) {
    let (h, w) = img.shape();
    // Reconstruct the levels in reverse order of the forward pass.
    let mut sizes = Vec::new();
    let (mut ch, mut cw) = (h, w);
    while ch >= 2 && cw >= 2 {
        sizes.push((ch, cw));
        ch /= 2;
        cw /= 2;
    }
    let mut scratch = vec![0.0; h.max(w)];
    for &(ch, cw) in sizes.iter().rev() {
        for i in 0..ch {
            for j in 0..cw / 2 {
                let a = img[(i, j)];
                let d = img[(i, cw / 2 + j)];
                scratch[2 * j] = (a + d) * SQRT_HALF;
                scratch[2 * j + 1] = (a - d) * SQRT_HALF;
            }
            for j in 0..cw {
                img[(i, j)] = scratch[j];
            }
        }
        for j in 0..cw {
            for i in 0..ch / 2 {
                let a = img[(i, j)];
                let d = img[(ch / 2 + i, j)];
                scratch[2 * i] = (a + d) * SQRT_HALF;
                scratch[2 * i + 1] = (a - d) * SQRT_HALF;
            }
            for i in 0..ch {
                img[(i, j)] = scratch[i];
            }
        }
    }
}
