#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use rtdm_core::decomposition::{aligned_relative_error, tdm_from_moments, PowerOptions};
use rtdm_core::linalg::Tensor3;
use rtdm_core::models::sample_dirichlet;
use rtdm_core::moments::{Centering, ModelConstants, ModelKind, MomentSet};

/// Exact population moments `Σ β_k a_k a_kᵀ` and `Σ γ_k a_k^{⊗3}`.
pub fn analytic_moments(a: &DMatrix<f64>, consts: &ModelConstants, weights: Option<&[f64]>) -> MomentSet {
    let (beta, gamma) = consts.beta_gamma(weights).unwrap();
    let d = a.nrows();
    let mut m2 = DMatrix::zeros(d, d);
    let mut m3 = Tensor3::zeros(d);
    for k in 0..a.ncols() {
        let col: Vec<f64> = a.column(k).iter().copied().collect();
        m2 += a.column(k) * a.column(k).transpose() * beta[k];
        m3.add_cube(gamma[k], &col);
    }
    let centering = match consts.model {
        ModelKind::Gmm => Centering::Gmm { sigma2: 0.0 },
        ModelKind::Lda => Centering::Lda { k: consts.k, alpha_b: consts.alpha_b },
    };
    MomentSet {
        centering,
        n: 1,
        m1: DVector::zeros(d),
        raw2: DMatrix::zeros(d, d),
        raw3: None,
        m2,
        m3: Some(m3),
    }
}

pub fn random_simplex_weights<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Aligned relative error of TDM on exact moments.
pub fn round_trip_error<R: Rng>(rng: &mut R, lda: bool, d: usize, k: usize) -> f64 {
    if lda {
        let cols: Vec<f64> = (0..k).flat_map(|_| sample_dirichlet(rng, &vec![0.5; d])).collect();
        let a = DMatrix::from_column_slice(d, k, &cols);
        let consts = ModelConstants::lda(k, 0.8);
        let res = tdm_from_moments(&analytic_moments(&a, &consts, None), &consts, &PowerOptions::default()).unwrap();
        aligned_relative_error(&res.a, &a, false)
    } else {
        let a = DMatrix::from_fn(d, k, |_, _| rng.random_range(-2.0..2.0));
        let w = random_simplex_weights(rng, k);
        let consts = ModelConstants::gmm(k, Some(0.0));
        let res = tdm_from_moments(&analytic_moments(&a, &consts, Some(&w)), &consts, &PowerOptions::default()).unwrap();
        aligned_relative_error(&res.a, &a, false)
    }
}
