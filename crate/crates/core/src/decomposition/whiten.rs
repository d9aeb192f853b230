use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;

/// Eigenvalues below `RANK_TOLERANCE × largest` count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Whitening matrix `W` (`D × K`) with `Wᵀ M2 W = I`, the un-whitening matrix
/// `B = (W⁺)ᵀ`, and the retained eigenvalues `s` in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningPair {
    pub w: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub s: DVector<f64>,
}

/// Full spectrum kept alongside the whitening pair; the adjoint needs every
/// eigenpair, not just the retained ones.
#[derive(Debug, Clone)]
pub(crate) struct Spectrum {
    pub pair: WhiteningPair,
    /// All eigenvalues, descending.
    pub values: DVector<f64>,
    /// Matching unit eigenvectors as columns.
    pub vectors: DMatrix<f64>,
}

pub fn whiten(m2: &DMatrix<f64>, k: usize) -> Result<WhiteningPair> {
    Ok(whiten_spectrum(m2, k)?.pair)
}

pub(crate) fn whiten_spectrum(m2: &DMatrix<f64>, k: usize) -> Result<Spectrum> {
    let d = m2.nrows();
    if m2.ncols() != d {
        return Err(Error::Shape(format!("second moment must be square, got {}×{}", d, m2.ncols())));
    }
    if k == 0 || k > d {
        return Err(Error::Shape(format!("cannot whiten to {k} components in dimension {d}")));
    }
    if !m2.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("second moment has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(symmetrize(m2));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        // deterministic sign: largest-magnitude entry positive
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }

    let largest = values[0];
    let tolerance = RANK_TOLERANCE * largest.abs();
    for j in 0..k {
        if !(values[j] > tolerance) || largest <= 0.0 {
            return Err(Error::RankDeficient {
                requested: k,
                index: j,
                value: values[j],
                largest,
                tolerance,
            });
        }
    }
    let s = values.rows(0, k).into_owned();
    let mut w = vectors.columns(0, k).into_owned();
    let mut b = w.clone();
    for j in 0..k {
        let root = s[j].sqrt();
        w.column_mut(j).scale_mut(1.0 / root);
        b.column_mut(j).scale_mut(root);
    }
    Ok(Spectrum {
        pair: WhiteningPair { w, b, s },
        values,
        vectors,
    })
}
