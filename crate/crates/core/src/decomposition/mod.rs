//! Spectral decomposition of empirical moments: whitening, the whitened third
//! moment, the tensor power method and reconstruction of the parameter matrix.

mod align;
mod power;
mod simplex;
mod whiten;

pub use align::{align_columns, aligned_distance, aligned_relative_error, Alignment};
pub use power::{tensor_power_method, Eigenpair, EigenpairList, PowerOptions};
pub use simplex::{project_to_simplex, simplex_projection_pullback};
pub use whiten::{whiten, WhiteningPair, RANK_TOLERANCE};

pub(crate) use power::{power_update, tensor_power_method_traced, PowerTrace, ZERO_UPDATE_NORM};
pub(crate) use whiten::{whiten_spectrum, Spectrum};

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, ParameterMatrix};
use crate::error::{Error, Result};
use crate::linalg::Tensor3;
use crate::moments::{
    gmm_estimate_sigma2, gmm_moments_second_order, lda_centering_coefficients,
    lda_moments_second_order, Centering, ModelConstants, ModelKind, MomentSet,
};

/// Output of one run of the tensor decomposition method.
#[derive(Debug, Clone)]
pub struct DecompositionResult {
    /// Reported parameters; LDA columns are projected onto the simplex.
    pub a: ParameterMatrix,
    /// Parameters before any feasibility projection.
    pub raw: ParameterMatrix,
    /// Component weights `λ_k^{-2}`, renormalized to sum to one.
    pub weights: Vec<f64>,
    pub eigenpairs: EigenpairList,
    pub whitening: WhiteningPair,
    /// Noise variance the GMM moments were centered with.
    pub sigma2: Option<f64>,
}

/// Sum over observations of their projected third-order statistic, not yet averaged.
///
/// GMM: `Σ_n (Wᵀx_n)^{⊗3}`. LDA: for each document the distinct-position
/// triple estimator, assembled directly in the whitened space.
pub(crate) fn projected_third_sum(x: &Dataset, model: ModelKind, w: &DMatrix<f64>) -> Result<Tensor3> {
    if x.dim() != w.nrows() {
        return Err(Error::Shape(format!(
            "data dimension {} does not match whitening matrix with {} rows",
            x.dim(),
            w.nrows()
        )));
    }
    let k = w.ncols();
    let mut t = Tensor3::zeros(k);
    let wt = w.transpose();
    match model {
        ModelKind::Gmm => {
            for j in 0..x.len() {
                let y = &wt * DVector::from_column_slice(x.column(j));
                t.add_cube(1.0, y.as_slice());
            }
        }
        ModelKind::Lda => {
            let mut wrow = vec![0.0; k];
            for j in 0..x.len() {
                let c = x.column(j);
                let ell: f64 = c.iter().sum();
                if ell < 3.0 {
                    return Err(Error::InsufficientLength { doc: j, length: ell });
                }
                let s = 1.0 / (ell * (ell - 1.0) * (ell - 2.0));
                let mut y = vec![0.0; k];
                let mut q = DMatrix::zeros(k, k);
                let mut diag_cubes = Tensor3::zeros(k);
                for (i, &ci) in c.iter().enumerate() {
                    if ci == 0.0 {
                        continue;
                    }
                    for (r, wr) in wrow.iter_mut().enumerate() {
                        *wr = w[(i, r)];
                    }
                    for r in 0..k {
                        y[r] += ci * wrow[r];
                        for q2 in 0..k {
                            q[(r, q2)] += ci * wrow[r] * wrow[q2];
                        }
                    }
                    diag_cubes.add_cube(2.0 * ci, &wrow);
                }
                t.add_cube(s, &y);
                t.add_sym_matrix_vector(-s, &q, &y);
                t.axpy(s, &diag_cubes);
            }
        }
    }
    Ok(t)
}

/// Whitened centered third moment `M̂3(W, W, W)` from the averaged projected
/// statistic plus the centering terms expressed in the whitened space.
pub(crate) fn whitened_third_from_parts(
    third_sum: &Tensor3,
    n: usize,
    m1: &DVector<f64>,
    raw2: &DMatrix<f64>,
    centering: Centering,
    w: &DMatrix<f64>,
) -> Tensor3 {
    let mut t = third_sum.clone();
    t.scale_mut(1.0 / n as f64);
    let mu = w.transpose() * m1;
    match centering {
        Centering::Gmm { sigma2 } => {
            let g = w.transpose() * w;
            t.add_sym_matrix_vector(-sigma2, &g, mu.as_slice());
        }
        Centering::Lda { k, alpha_b } => {
            let (_, c1, c2) = lda_centering_coefficients(k, alpha_b);
            let pw = w.transpose() * raw2 * w;
            t.add_sym_matrix_vector(-c1, &pw, mu.as_slice());
            t.add_cube(c2, mu.as_slice());
        }
    }
    t
}

fn model_of(centering: Centering) -> ModelKind {
    match centering {
        Centering::Gmm { .. } => ModelKind::Gmm,
        Centering::Lda { .. } => ModelKind::Lda,
    }
}

/// `M̂3(W, W, W)` for the moments of `x`, computed without materializing `M̂3`.
///
/// GMM data uses `consts.sigma2`, or the smallest-covariance-eigenvalue estimate when unset.
pub fn whitened_third_moment(x: &Dataset, whitening: &WhiteningPair, consts: &ModelConstants) -> Result<Tensor3> {
    let moments = second_order_moments(x, consts)?;
    whitened_third_moment_from(&moments, &[x], &whitening.w)
}

/// Whitened third moment for moments that were estimated from the union of `sources`.
pub fn whitened_third_moment_from(moments: &MomentSet, sources: &[&Dataset], w: &DMatrix<f64>) -> Result<Tensor3> {
    if w.nrows() != moments.dim() {
        return Err(Error::Shape(format!(
            "whitening matrix has {} rows but moments have dimension {}",
            w.nrows(),
            moments.dim()
        )));
    }
    let model = model_of(moments.centering);
    let mut sum = Tensor3::zeros(w.ncols());
    let mut n = 0;
    for x in sources {
        sum.axpy(1.0, &projected_third_sum(x, model, w)?);
        n += x.len();
    }
    if n != moments.n {
        return Err(Error::Shape(format!(
            "moments average {} observations but the sources hold {n}",
            moments.n
        )));
    }
    Ok(whitened_third_from_parts(&sum, n, &moments.m1, &moments.raw2, moments.centering, w))
}

/// First and second order moments for `x`; GMM noise variance taken from
/// `consts` or estimated.
pub fn second_order_moments(x: &Dataset, consts: &ModelConstants) -> Result<MomentSet> {
    consts.validate()?;
    match consts.model {
        ModelKind::Gmm => {
            let sigma2 = match consts.sigma2 {
                Some(s) => s,
                None => gmm_estimate_sigma2(x)?,
            };
            gmm_moments_second_order(x, sigma2)
        }
        ModelKind::Lda => lda_moments_second_order(x, consts),
    }
}

/// Maps whitened eigenpairs back to parameter columns.
///
/// With `Wᵀ M2 W = I`, each whitened eigenpair satisfies `λ_k = γ_k β_k^{-3/2}`
/// and `a_k = β_k^{-1/2} B v_k`. For a GMM (`β = γ = w`) this is
/// `w_k = λ_k^{-2}`, `a_k = λ_k B v_k`; for LDA `a_k = λ_k (β/γ) B v_k`.
pub fn reconstruct_parameters(
    pairs: &EigenpairList,
    whitening: &WhiteningPair,
    consts: &ModelConstants,
) -> Result<DecompositionResult> {
    let k = pairs.len();
    if k != whitening.w.ncols() {
        return Err(Error::Shape(format!(
            "{k} eigenpairs for a whitening of rank {}",
            whitening.w.ncols()
        )));
    }
    let largest = pairs.iter().map(|p| p.lambda).fold(0.0f64, f64::max);
    let tolerance = RANK_TOLERANCE * largest;
    for (component, p) in pairs.iter().enumerate() {
        if !(p.lambda > tolerance) {
            return Err(Error::UnrecoverableComponent {
                component,
                lambda: p.lambda,
                tolerance,
            });
        }
    }
    let scale = match consts.model {
        ModelKind::Gmm => 1.0,
        ModelKind::Lda => consts.lda_beta() / consts.lda_gamma(),
    };
    let d = whitening.b.nrows();
    let mut raw = DMatrix::zeros(d, k);
    for (j, p) in pairs.iter().enumerate() {
        let col = &whitening.b * DVector::from_column_slice(&p.v) * (scale * p.lambda);
        raw.set_column(j, &col);
    }
    let inv_sq: Vec<f64> = pairs.iter().map(|p| p.lambda.powi(-2)).collect();
    let total: f64 = inv_sq.iter().sum();
    let weights = inv_sq.iter().map(|w| w / total).collect();
    let a = match consts.model {
        ModelKind::Gmm => raw.clone(),
        ModelKind::Lda => project_columns(&raw),
    };
    Ok(DecompositionResult {
        a,
        raw,
        weights,
        eigenpairs: pairs.clone(),
        whitening: whitening.clone(),
        sigma2: None,
    })
}

/// Simplex projection of every column.
pub fn project_columns(a: &ParameterMatrix) -> ParameterMatrix {
    let mut out = a.clone();
    for j in 0..a.ncols() {
        let col: Vec<f64> = a.column(j).iter().copied().collect();
        out.set_column(j, &DVector::from_vec(project_to_simplex(&col)));
    }
    out
}

/// Tensor decomposition of a dataset.
pub fn tdm(x: &Dataset, consts: &ModelConstants, opts: &PowerOptions) -> Result<DecompositionResult> {
    x.ensure_finite()?;
    let moments = second_order_moments(x, consts)?;
    tdm_with_sources(&moments, &[x], consts, opts)
}

/// Tensor decomposition of precomputed moments with an explicit third moment.
pub fn tdm_from_moments(moments: &MomentSet, consts: &ModelConstants, opts: &PowerOptions) -> Result<DecompositionResult> {
    let m3 = moments
        .m3
        .as_ref()
        .ok_or_else(|| Error::Config("moment set has no explicit third moment".into()))?;
    let whitening = whiten(&moments.m2, consts.k)?;
    let t = m3.multilinear(&whitening.w);
    finish(t, whitening, moments.centering, consts, opts)
}

/// Tensor decomposition of second-order `moments` whose third moment is
/// assembled in the whitened space from `sources`, the data the moments
/// were estimated from.
pub fn tdm_with_sources(
    moments: &MomentSet,
    sources: &[&Dataset],
    consts: &ModelConstants,
    opts: &PowerOptions,
) -> Result<DecompositionResult> {
    let whitening = whiten(&moments.m2, consts.k)?;
    let t = whitened_third_moment_from(moments, sources, &whitening.w)?;
    finish(t, whitening, moments.centering, consts, opts)
}

fn finish(
    t: Tensor3,
    whitening: WhiteningPair,
    centering: Centering,
    consts: &ModelConstants,
    opts: &PowerOptions,
) -> Result<DecompositionResult> {
    let pairs = tensor_power_method(&t, consts.k, opts)?;
    let mut result = reconstruct_parameters(&pairs, &whitening, consts)?;
    if let Centering::Gmm { sigma2 } = centering {
        result.sigma2 = Some(sigma2);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_component_gmm_recovers_mean() {
        let a = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let m2 = &a * a.transpose();
        let mut m3 = Tensor3::zeros(3);
        m3.add_cube(1.0, a.as_slice());
        let moments = MomentSet {
            centering: Centering::Gmm { sigma2: 0.0 },
            n: 1,
            m1: a.clone(),
            raw2: m2.clone(),
            raw3: Some(m3.clone()),
            m2,
            m3: Some(m3),
        };
        let res = tdm_from_moments(&moments, &ModelConstants::gmm(1, Some(0.0)), &PowerOptions::default()).unwrap();
        assert!((res.weights[0] - 1.0).abs() < 1e-12);
        assert!((res.a.column(0) - &a).norm() < 1e-12);
    }

    #[test]
    fn whitened_third_with_identity_matches_explicit() {
        let x = Dataset::from_columns(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.0, 3.0]]).unwrap();
        let m = crate::moments::gmm_moments(&x, 0.7).unwrap();
        let w = DMatrix::identity(2, 2);
        let t = whitened_third_moment_from(&m, &[&x], &w).unwrap();
        let m3 = m.m3.unwrap();
        for (a, b) in t.as_slice().iter().zip(m3.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_eigenvalue_is_unrecoverable() {
        let whitening = whiten(&DMatrix::identity(2, 2), 2).unwrap();
        let pairs = vec![
            Eigenpair { lambda: 1.0, v: vec![1.0, 0.0] },
            Eigenpair { lambda: 0.0, v: vec![0.0, 1.0] },
        ];
        assert!(matches!(
            reconstruct_parameters(&pairs, &whitening, &ModelConstants::gmm(2, Some(0.0))),
            Err(Error::UnrecoverableComponent { component: 1, .. })
        ));
    }
}
