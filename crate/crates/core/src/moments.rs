//! Empirical low-order moments for spherical Gaussian mixtures and LDA.
//!
//! A [`MomentSet`] keeps the raw averaged statistics next to the centered
//! moments. Combining two sets averages the raw statistics and re-applies the
//! centering, so combining cached training moments with pseudo-data moments is
//! exactly the same as recomputing on the concatenated data, even for LDA where
//! the centering is nonlinear in the first moment.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Tensor3;

/// Largest dimension for which an explicit `D × D × D` third moment is built.
pub const EXPLICIT_THIRD_MAX_DIM: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gmm,
    Lda,
}

/// Model-level constants entering the moment forms.
///
/// For LDA `β_k = α/((Kα+1)Kα)` and `γ_k = 2α/((Kα+2)(Kα+1)Kα)` for every k.
/// For a GMM `β_k = γ_k = w_k`, the mixture weights, which are recovered
/// during reconstruction rather than known up front.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConstants {
    pub model: ModelKind,
    pub k: usize,
    /// Dirichlet concentration α_B (LDA only).
    #[serde(default)]
    pub alpha_b: f64,
    /// Spherical noise variance σ² (GMM only); `None` means estimate from data.
    #[serde(default)]
    pub sigma2: Option<f64>,
}

impl ModelConstants {
    pub fn gmm(k: usize, sigma2: Option<f64>) -> Self {
        ModelConstants {
            model: ModelKind::Gmm,
            k,
            alpha_b: 0.0,
            sigma2,
        }
    }

    pub fn lda(k: usize, alpha_b: f64) -> Self {
        ModelConstants {
            model: ModelKind::Lda,
            k,
            alpha_b,
            sigma2: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("component count k must be positive".into()));
        }
        match self.model {
            ModelKind::Lda if !(self.alpha_b > 0.0 && self.alpha_b.is_finite()) => Err(
                Error::Config(format!("alpha_b must be positive, got {}", self.alpha_b)),
            ),
            ModelKind::Gmm if self.sigma2.is_some_and(|s| !(s >= 0.0)) => Err(Error::Config(
                format!("sigma2 must be nonnegative, got {:?}", self.sigma2),
            )),
            _ => Ok(()),
        }
    }

    fn k_alpha(&self) -> f64 {
        self.k as f64 * self.alpha_b
    }

    /// LDA β.
    pub fn lda_beta(&self) -> f64 {
        let ka = self.k_alpha();
        self.alpha_b / ((ka + 1.0) * ka)
    }

    /// LDA γ.
    pub fn lda_gamma(&self) -> f64 {
        let ka = self.k_alpha();
        2.0 * self.alpha_b / ((ka + 2.0) * (ka + 1.0) * ka)
    }

    /// Per-component `(β_k, γ_k)`; GMM needs the mixture weights.
    pub fn beta_gamma(&self, weights: Option<&[f64]>) -> Result<(Vec<f64>, Vec<f64>)> {
        match self.model {
            ModelKind::Lda => Ok((vec![self.lda_beta(); self.k], vec![self.lda_gamma(); self.k])),
            ModelKind::Gmm => {
                let w = weights
                    .ok_or_else(|| Error::Config("GMM β/γ require mixture weights".into()))?;
                if w.len() != self.k {
                    return Err(Error::Shape(format!("expected {} weights, got {}", self.k, w.len())));
                }
                Ok((w.to_vec(), w.to_vec()))
            }
        }
    }

    pub(crate) fn centering(&self, sigma2: f64) -> Centering {
        match self.model {
            ModelKind::Gmm => Centering::Gmm { sigma2 },
            ModelKind::Lda => Centering::Lda {
                k: self.k,
                alpha_b: self.alpha_b,
            },
        }
    }
}

/// How raw statistics turn into the centered moments `M̂2`, `M̂3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Centering {
    Gmm { sigma2: f64 },
    Lda { k: usize, alpha_b: f64 },
}

/// Scalar coefficients of the LDA centering: `(Kα/(Kα+1), Kα/(Kα+2), 2(Kα)²/((Kα+2)(Kα+1)))`.
pub fn lda_centering_coefficients(k: usize, alpha_b: f64) -> (f64, f64, f64) {
    let ka = k as f64 * alpha_b;
    (
        ka / (ka + 1.0),
        ka / (ka + 2.0),
        2.0 * ka * ka / ((ka + 2.0) * (ka + 1.0)),
    )
}

impl Centering {
    pub fn center_second(&self, m1: &DVector<f64>, raw2: &DMatrix<f64>) -> DMatrix<f64> {
        match *self {
            Centering::Gmm { sigma2 } => {
                let mut m2 = raw2.clone();
                for i in 0..m2.nrows() {
                    m2[(i, i)] -= sigma2;
                }
                m2
            }
            Centering::Lda { k, alpha_b } => {
                let (c0, _, _) = lda_centering_coefficients(k, alpha_b);
                raw2 - (m1 * m1.transpose()) * c0
            }
        }
    }

    pub fn center_third(&self, m1: &DVector<f64>, raw2: &DMatrix<f64>, raw3: &Tensor3) -> Tensor3 {
        let mut m3 = raw3.clone();
        let m1s = m1.as_slice();
        match *self {
            Centering::Gmm { sigma2 } => {
                let eye = DMatrix::identity(m1.len(), m1.len());
                m3.add_sym_matrix_vector(-sigma2, &eye, m1s);
            }
            Centering::Lda { k, alpha_b } => {
                let (_, c1, c2) = lda_centering_coefficients(k, alpha_b);
                m3.add_sym_matrix_vector(-c1, raw2, m1s);
                m3.add_cube(c2, m1s);
            }
        }
        m3
    }
}

/// Empirical moment estimates.
///
/// `raw2` is `E[x ⊗ x]` (GMM) or `E[e_w1 ⊗ e_w2]` (LDA); `raw3` likewise for
/// third order. `m2`/`m3` are the centered moments matched against
/// `Σ β_k a_k a_kᵀ` and `Σ γ_k a_k⊗a_k⊗a_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub centering: Centering,
    pub n: usize,
    pub m1: DVector<f64>,
    pub raw2: DMatrix<f64>,
    pub raw3: Option<Tensor3>,
    pub m2: DMatrix<f64>,
    pub m3: Option<Tensor3>,
}

impl MomentSet {
    pub fn dim(&self) -> usize {
        self.m1.len()
    }

    pub(crate) fn from_raw(
        centering: Centering,
        n: usize,
        m1: DVector<f64>,
        raw2: DMatrix<f64>,
        raw3: Option<Tensor3>,
    ) -> Self {
        let m2 = centering.center_second(&m1, &raw2);
        let m3 = raw3.as_ref().map(|r3| centering.center_third(&m1, &raw2, r3));
        MomentSet {
            centering,
            n,
            m1,
            raw2,
            raw3,
            m2,
            m3,
        }
    }
}

/// Smallest eigenvalue of the population covariance `E[x⊗x] − E[x]⊗E[x]`,
/// clamped at zero.
pub fn gmm_estimate_sigma2(x: &Dataset) -> Result<f64> {
    let n = x.len();
    if n < 2 {
        return Err(Error::DegenerateData(format!(
            "noise variance estimation needs at least 2 observations, got {n}"
        )));
    }
    if x.dim() == 0 {
        return Err(Error::DegenerateData("zero-dimensional data".into()));
    }
    let (m1, raw2) = first_two_raw(x);
    let cov = crate::linalg::symmetrize(&(raw2 - &m1 * m1.transpose()));
    let eig = SymmetricEigen::new(cov);
    let smallest = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !smallest.is_finite() {
        return Err(Error::Numeric("covariance eigenvalue is not finite".into()));
    }
    // the covariance is PSD; anything below zero is roundoff
    Ok(smallest.max(0.0))
}

fn first_two_raw(x: &Dataset) -> (DVector<f64>, DMatrix<f64>) {
    let d = x.dim();
    let n = x.len();
    let mut m1 = DVector::zeros(d);
    let mut raw2 = DMatrix::zeros(d, d);
    for j in 0..n {
        let col = x.x.column(j);
        m1 += &col;
        raw2.ger(1.0, &col, &col, 1.0);
    }
    let inv = 1.0 / n as f64;
    (m1 * inv, raw2 * inv)
}

/// GMM moments with an explicit third moment when `D ≤ EXPLICIT_THIRD_MAX_DIM`.
pub fn gmm_moments(x: &Dataset, sigma2: f64) -> Result<MomentSet> {
    gmm_moments_with(x, sigma2, x.dim() <= EXPLICIT_THIRD_MAX_DIM)
}

/// GMM moments without materializing the third moment.
pub fn gmm_moments_second_order(x: &Dataset, sigma2: f64) -> Result<MomentSet> {
    gmm_moments_with(x, sigma2, false)
}

fn gmm_moments_with(x: &Dataset, sigma2: f64, third: bool) -> Result<MomentSet> {
    if x.is_empty() {
        return Err(Error::DegenerateData("empty dataset".into()));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::Domain(format!("sigma2 must be nonnegative, got {sigma2}")));
    }
    let (m1, raw2) = first_two_raw(x);
    let raw3 = if third {
        let d = x.dim();
        let mut t = Tensor3::zeros(d);
        for j in 0..x.len() {
            t.add_cube(1.0, x.column(j));
        }
        t.scale_mut(1.0 / x.len() as f64);
        Some(t)
    } else {
        None
    };
    Ok(MomentSet::from_raw(Centering::Gmm { sigma2 }, x.len(), m1, raw2, raw3))
}

/// Per-document contributions of a (possibly soft) count vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DocStatistics {
    pub length: f64,
    /// `c / ℓ`
    pub word_freq: DVector<f64>,
    /// `(c⊗c − diag(c)) / (ℓ(ℓ−1))`
    pub pairs: DMatrix<f64>,
    /// Average of `e_w1⊗e_w2⊗e_w3` over ordered triples of distinct positions.
    pub triples: Tensor3,
}

fn doc_length(c: &[f64], doc: usize) -> Result<f64> {
    if let Some(bad) = c.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("document {doc} has invalid count {bad}")));
    }
    let ell: f64 = c.iter().sum();
    if ell < 3.0 {
        return Err(Error::InsufficientLength { doc, length: ell });
    }
    Ok(ell)
}

/// Word pair and triple statistics of one document with counts `c` and length `Σc`.
pub fn lda_doc_statistics(c: &[f64]) -> Result<DocStatistics> {
    let ell = doc_length(c, 0)?;
    let d = c.len();
    let cv = DVector::from_column_slice(c);
    let mut pairs = &cv * cv.transpose();
    for i in 0..d {
        pairs[(i, i)] -= c[i];
    }
    pairs /= ell * (ell - 1.0);
    let mut triples = Tensor3::zeros(d);
    accumulate_triples(&mut triples, c, 1.0 / (ell * (ell - 1.0) * (ell - 2.0)));
    Ok(DocStatistics {
        length: ell,
        word_freq: cv / ell,
        pairs,
        triples,
    })
}

/// `t += s·(c⊗c⊗c − Σ_ij c_i c_j (e_i e_i e_j + e_i e_j e_i + e_j e_i e_i) + 2 Σ_i c_i e_i⊗e_i⊗e_i)`,
/// iterating over the support of `c` only.
fn accumulate_triples(t: &mut Tensor3, c: &[f64], s: f64) {
    let support: Vec<usize> = (0..c.len()).filter(|&i| c[i] != 0.0).collect();
    for &a in &support {
        for &b in &support {
            let cab = s * c[a] * c[b];
            for &k in &support {
                t.add_at(a, b, k, cab * c[k]);
            }
        }
    }
    for &i in &support {
        for &j in &support {
            let v = s * c[i] * c[j];
            t.add_at(i, i, j, -v);
            t.add_at(i, j, i, -v);
            t.add_at(j, i, i, -v);
        }
        t.add_at(i, i, i, 2.0 * s * c[i]);
    }
}

/// LDA moments with an explicit third moment when `D ≤ EXPLICIT_THIRD_MAX_DIM`.
pub fn lda_moments(docs: &Dataset, consts: &ModelConstants) -> Result<MomentSet> {
    lda_moments_with(docs, consts, docs.dim() <= EXPLICIT_THIRD_MAX_DIM)
}

/// LDA moments without materializing the third moment.
pub fn lda_moments_second_order(docs: &Dataset, consts: &ModelConstants) -> Result<MomentSet> {
    lda_moments_with(docs, consts, false)
}

fn lda_moments_with(docs: &Dataset, consts: &ModelConstants, third: bool) -> Result<MomentSet> {
    if consts.model != ModelKind::Lda {
        return Err(Error::ModelMismatch("lda_moments called with GMM constants".into()));
    }
    consts.validate()?;
    if docs.is_empty() {
        return Err(Error::DegenerateData("empty corpus".into()));
    }
    let d = docs.dim();
    let n = docs.len();
    let mut m1 = DVector::zeros(d);
    let mut raw2 = DMatrix::zeros(d, d);
    let mut raw3 = third.then(|| Tensor3::zeros(d));
    for j in 0..n {
        let c = docs.column(j);
        let ell = doc_length(c, j)?;
        let cv = DVector::from_column_slice(c);
        m1.axpy(1.0 / ell, &cv, 1.0);
        let w2 = 1.0 / (ell * (ell - 1.0));
        raw2.ger(w2, &cv, &cv, 1.0);
        for i in 0..d {
            raw2[(i, i)] -= w2 * c[i];
        }
        if let Some(t) = raw3.as_mut() {
            accumulate_triples(t, c, 1.0 / (ell * (ell - 1.0) * (ell - 2.0)));
        }
    }
    let inv = 1.0 / n as f64;
    m1 *= inv;
    raw2 *= inv;
    if let Some(t) = raw3.as_mut() {
        t.scale_mut(inv);
    }
    Ok(MomentSet::from_raw(consts.centering(0.0), n, m1, raw2, raw3))
}

/// Observation-count-weighted average of two moment sets.
pub fn combine_moments(mt: &MomentSet, mp: &MomentSet) -> Result<MomentSet> {
    if mt.dim() != mp.dim() {
        return Err(Error::Shape(format!(
            "cannot combine moments of dimension {} and {}",
            mt.dim(),
            mp.dim()
        )));
    }
    if mt.centering != mp.centering {
        return Err(Error::ModelMismatch(format!(
            "moment sets were centered differently: {:?} vs {:?}",
            mt.centering, mp.centering
        )));
    }
    if mp.n == 0 {
        return Ok(mt.clone());
    }
    let total = (mt.n + mp.n) as f64;
    let (wt, wp) = (mt.n as f64 / total, mp.n as f64 / total);
    let m1 = &mt.m1 * wt + &mp.m1 * wp;
    let raw2 = &mt.raw2 * wt + &mp.raw2 * wp;
    let raw3 = match (&mt.raw3, &mp.raw3) {
        (Some(a), Some(b)) => {
            let mut t = a.clone();
            t.scale_mut(wt);
            t.axpy(wp, b);
            Some(t)
        }
        _ => None,
    };
    Ok(MomentSet::from_raw(mt.centering, mt.n + mp.n, m1, raw2, raw3))
}
