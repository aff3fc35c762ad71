//! Kernel functions and Gram-matrix blocks shared by every Nystrom variant.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel family tag. Only the RBF kernel is used here; the tag keeps the
/// config extensible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
}

/// Kernel selection plus its bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub gamma: f64,
}

impl KernelConfig {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if gamma <= 0.0 || !gamma.is_finite() {
            return Err(Error::InvalidParam(format!(
                "RBF gamma must be positive and finite, got {gamma}"
            )));
        }
        Ok(Self {
            kind: KernelKind::Rbf,
            gamma,
        })
    }

    /// Upper bound on K(x, x) over the whole input space.
    pub fn kappa(&self) -> f64 {
        match self.kind {
            KernelKind::Rbf => 1.0,
        }
    }
}

/// exp(-gamma * ||x - z||^2) for a single pair of points.
pub fn rbf(x: &[f64], z: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimMismatch(format!(
            "rbf: point dimensions {} and {} differ",
            x.len(),
            z.len()
        )));
    }
    let mut sq = 0.0;
    for (a, b) in x.iter().zip(z.iter()) {
        let d = a - b;
        sq += d * d;
    }
    Ok((-gamma * sq).exp())
}

/// Kernel block M[i][j] = K(rows_i, cols_j) for row-major point sets
/// (one point per matrix row).
///
/// When `rows` and `cols` are the same matrix the result is made exactly
/// symmetric with a unit diagonal by construction.
pub fn gram(rows: &DMatrix<f64>, cols: &DMatrix<f64>, cfg: &KernelConfig) -> Result<DMatrix<f64>> {
    if rows.ncols() != cols.ncols() {
        return Err(Error::DimMismatch(format!(
            "gram: feature dimensions {} and {} differ",
            rows.ncols(),
            cols.ncols()
        )));
    }
    if rows.nrows() == 0 || cols.nrows() == 0 {
        return Err(Error::EmptyData("gram: empty point set".into()));
    }
    let same = std::ptr::eq(rows, cols) || rows == cols;
    let row_sq: DVector<f64> = DVector::from_iterator(
        rows.nrows(),
        rows.row_iter().map(|r| r.iter().map(|v| v * v).sum()),
    );
    let col_sq: DVector<f64> = if same {
        row_sq.clone()
    } else {
        DVector::from_iterator(
            cols.nrows(),
            cols.row_iter().map(|r| r.iter().map(|v| v * v).sum()),
        )
    };
    // ||x||^2 + ||z||^2 - 2 x.z, floored at 0: cancellation can produce
    // tiny negative squared distances.
    let cross = rows * cols.transpose();
    let gamma = match cfg.kind {
        KernelKind::Rbf => cfg.gamma,
    };
    let mut m = DMatrix::zeros(rows.nrows(), cols.nrows());
    for j in 0..cols.nrows() {
        for i in 0..rows.nrows() {
            let sq = (row_sq[i] + col_sq[j] - 2.0 * cross[(i, j)]).max(0.0);
            m[(i, j)] = (-gamma * sq).exp();
        }
    }
    if same {
        for i in 0..m.nrows() {
            m[(i, i)] = 1.0;
            for j in 0..i {
                let v = m[(i, j)];
                m[(j, i)] = v;
            }
        }
    }
    Ok(m)
}
