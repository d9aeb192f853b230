use nalgebra::DMatrix;

use crate::data::ParameterMatrix;

/// Column matching of an estimate against a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// `permutation[j]` is the column of the estimate matched to reference column `j`.
    pub permutation: Vec<usize>,
    /// Sign applied to each matched column (always `1.0` without sign flips).
    pub signs: Vec<f64>,
    pub aligned: ParameterMatrix,
    /// Sum over columns of the L2 distance between aligned and reference columns.
    pub distance: f64,
}

/// Optimal column assignment minimizing the summed column L2 distance, with
/// optional per-column sign flips. Exact, via dynamic programming over subsets.
///
/// Panics if the shapes differ or `K > 20`.
pub fn align_columns(a: &ParameterMatrix, reference: &ParameterMatrix, allow_sign_flip: bool) -> Alignment {
    assert_eq!(a.shape(), reference.shape(), "align_columns: shape mismatch");
    let k = a.ncols();
    assert!(k <= 20, "align_columns: too many columns for exact assignment");
    // cost[r][c]: reference column r matched with estimate column c
    let mut cost = vec![vec![0.0; k]; k];
    let mut sign = vec![vec![1.0; k]; k];
    for r in 0..k {
        for c in 0..k {
            let plus = (a.column(c) - reference.column(r)).norm();
            if allow_sign_flip {
                let minus = (-a.column(c) - reference.column(r)).norm();
                if minus < plus {
                    cost[r][c] = minus;
                    sign[r][c] = -1.0;
                    continue;
                }
            }
            cost[r][c] = plus;
        }
    }
    let full = (1usize << k) - 1;
    let mut best = vec![f64::INFINITY; 1 << k];
    let mut choice = vec![usize::MAX; 1 << k];
    best[0] = 0.0;
    for mask in 0..=full {
        if !best[mask].is_finite() {
            continue;
        }
        let r = mask.count_ones() as usize;
        if r == k {
            continue;
        }
        for c in 0..k {
            if mask & (1 << c) != 0 {
                continue;
            }
            let next = mask | (1 << c);
            let val = best[mask] + cost[r][c];
            if val < best[next] {
                best[next] = val;
                choice[next] = c;
            }
        }
    }
    let mut permutation = vec![0; k];
    let mut mask = full;
    for r in (0..k).rev() {
        let c = choice[mask];
        permutation[r] = c;
        mask &= !(1 << c);
    }
    let signs: Vec<f64> = (0..k).map(|r| sign[r][permutation[r]]).collect();
    let aligned = DMatrix::from_fn(a.nrows(), k, |i, r| signs[r] * a[(i, permutation[r])]);
    Alignment {
        permutation,
        signs,
        aligned,
        distance: if k == 0 { 0.0 } else { best[full] },
    }
}

/// `‖aligned(a) − reference‖_F`.
pub fn aligned_distance(a: &ParameterMatrix, reference: &ParameterMatrix, allow_sign_flip: bool) -> f64 {
    (align_columns(a, reference, allow_sign_flip).aligned - reference).norm()
}

/// `‖aligned(a) − reference‖_F / ‖reference‖_F`.
pub fn aligned_relative_error(a: &ParameterMatrix, reference: &ParameterMatrix, allow_sign_flip: bool) -> f64 {
    aligned_distance(a, reference, allow_sign_flip) / reference.norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 2.0, 0.5, 1.0, 0.0, 0.0, 3.0, 1.0])
    }

    #[test]
    fn identical_matrices_align_trivially() {
        let a = sample();
        let al = align_columns(&a, &a, false);
        assert_eq!(al.permutation, vec![0, 1, 2]);
        assert_eq!(al.distance, 0.0);
    }

    #[test]
    fn swapped_columns_are_recovered() {
        let a = sample();
        let mut b = a.clone();
        b.swap_columns(0, 2);
        let al = align_columns(&b, &a, false);
        assert_eq!(al.permutation, vec![2, 1, 0]);
        assert_eq!(al.distance, 0.0);
        assert_eq!(al.aligned, a);
    }

    #[test]
    fn sign_flip_only_when_allowed() {
        let a = sample();
        let b = -a.clone();
        assert_eq!(align_columns(&b, &a, true).distance, 0.0);
        assert!(align_columns(&b, &a, false).distance > 0.0);
    }
}
