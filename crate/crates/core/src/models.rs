//! Generative samplers and differentiable log-likelihoods for the two models.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::data::{Dataset, ParameterMatrix};
use crate::error::{Error, Result};

/// Floor inside logarithms of probabilities.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub a: ParameterMatrix,
    pub weights: Vec<f64>,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub a: ParameterMatrix,
    pub alpha_b: f64,
    pub doc_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Model {
    Gmm(GmmModel),
    Lda(LdaModel),
}

impl GmmModel {
    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.a.ncols() {
            return Err(Error::Shape(format!(
                "{} weights for {} components",
                self.weights.len(),
                self.a.ncols()
            )));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::Domain("mixture weights must lie on the simplex".into()));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(Error::Domain(format!("sigma2 must be nonnegative, got {}", self.sigma2)));
        }
        Ok(())
    }
}

impl LdaModel {
    pub fn validate(&self) -> Result<()> {
        for j in 0..self.a.ncols() {
            let col = self.a.column(j);
            if col.iter().any(|v| *v < 0.0) || (col.sum() - 1.0).abs() > 1e-10 {
                return Err(Error::Domain(format!("topic {j} is not on the simplex")));
            }
        }
        if !(self.alpha_b > 0.0) {
            return Err(Error::Domain(format!("alpha_b must be positive, got {}", self.alpha_b)));
        }
        if self.doc_length < 3 {
            return Err(Error::Domain(format!("document length must be at least 3, got {}", self.doc_length)));
        }
        Ok(())
    }

    /// Mean word distribution `A·1/K` under the symmetric Dirichlet mean.
    pub fn mean_word_distribution(&self) -> DVector<f64> {
        let k = self.a.ncols();
        self.a.column_sum() / k as f64
    }
}

/// Sample from a Dirichlet distribution via normalized Gamma draws.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    loop {
        let draws: Vec<f64> = alpha
            .iter()
            .map(|&a| Gamma::new(a, 1.0).expect("positive concentration").sample(rng))
            .collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|g| g / total).collect();
        }
    }
}

pub fn gmm_sample(model: &GmmModel, n: usize, seed: u64) -> Result<Dataset> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gmm_sample_with(model, n, &mut rng)
}

pub(crate) fn gmm_sample_with<R: Rng + ?Sized>(model: &GmmModel, n: usize, rng: &mut R) -> Result<Dataset> {
    let d = model.a.nrows();
    let choose = WeightedIndex::new(&model.weights).map_err(|e| Error::Domain(format!("mixture weights: {e}")))?;
    let noise = Normal::new(0.0, model.sigma2.sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
    let mut x = DMatrix::zeros(d, n);
    let mut labels = Vec::with_capacity(n);
    for j in 0..n {
        let h = choose.sample(rng);
        labels.push(h);
        for i in 0..d {
            x[(i, j)] = model.a[(i, h)] + noise.sample(rng);
        }
    }
    Ok(Dataset::with_labels(x, labels))
}

pub fn lda_sample(model: &LdaModel, n: usize, seed: u64) -> Result<Dataset> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lda_sample_with(model, n, &mut rng)
}

pub(crate) fn lda_sample_with<R: Rng + ?Sized>(model: &LdaModel, n: usize, rng: &mut R) -> Result<Dataset> {
    let (d, k) = model.a.shape();
    let alpha = vec![model.alpha_b; k];
    let mut x = DMatrix::zeros(d, n);
    for j in 0..n {
        let b = sample_dirichlet(rng, &alpha);
        let p = &model.a * DVector::from_vec(b);
        let words = WeightedIndex::new(p.iter().map(|v| v.max(0.0)))
            .map_err(|e| Error::Domain(format!("word distribution: {e}")))?;
        for _ in 0..model.doc_length {
            x[(words.sample(rng), j)] += 1.0;
        }
    }
    Ok(Dataset::new(x))
}

/// `Σ_n log Σ_k w_k N(x_n | a_k, σ²I)` and its gradient with respect to `x`.
pub fn gmm_loglik(x: &Dataset, model: &GmmModel) -> Result<(f64, DMatrix<f64>)> {
    if !(model.sigma2 > 0.0) {
        return Err(Error::Domain(format!("sigma2 must be positive, got {}", model.sigma2)));
    }
    x.ensure_finite()?;
    let (d, k) = model.a.shape();
    if x.dim() != d {
        return Err(Error::Shape(format!("data dimension {} vs model dimension {d}", x.dim())));
    }
    let log_norm = -0.5 * d as f64 * (2.0 * std::f64::consts::PI * model.sigma2).ln();
    let log_w: Vec<f64> = model.weights.iter().map(|w| w.ln()).collect();
    let mut total = 0.0;
    let mut grad = DMatrix::zeros(d, x.len());
    let mut logits = vec![0.0; k];
    for n in 0..x.len() {
        let xn = x.x.column(n);
        for (c, l) in logits.iter_mut().enumerate() {
            *l = log_w[c] - (xn - model.a.column(c)).norm_squared() / (2.0 * model.sigma2);
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        total += log_norm + max + sum.ln();
        let mut g = grad.column_mut(n);
        for (c, l) in logits.iter().enumerate() {
            let r = (l - max).exp() / sum;
            if r == 0.0 {
                continue;
            }
            g.axpy(r / model.sigma2, &(model.a.column(c) - xn), 1.0);
        }
    }
    Ok((total, grad))
}

/// Mean-topic multinomial surrogate `Σ_n Σ_d c_dn log(ā_d + ε)` and its gradient
/// with respect to the counts.
pub fn lda_surrogate_loglik(docs: &Dataset, model: &LdaModel) -> Result<(f64, DMatrix<f64>)> {
    let d = model.a.nrows();
    if docs.dim() != d {
        return Err(Error::Shape(format!("corpus dimension {} vs model dimension {d}", docs.dim())));
    }
    if let Some(bad) = docs.x.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("negative or invalid count {bad}")));
    }
    let log_p: Vec<f64> = model
        .mean_word_distribution()
        .iter()
        .map(|p| (p + PROB_FLOOR).ln())
        .collect();
    let mut total = 0.0;
    for n in 0..docs.len() {
        total += docs.column(n).iter().zip(&log_p).map(|(c, l)| c * l).sum::<f64>();
    }
    let grad = DMatrix::from_fn(d, docs.len(), |i, _| log_p[i]);
    Ok((total, grad))
}

/// Full multinomial log-probability under the mean word distribution,
/// `Σ_n [log Γ(ℓ_n+1) − Σ_d log Γ(c_dn+1) + Σ_d c_dn log(ā_d + ε)]`, extended to
/// soft counts through the Gamma function; gradient with respect to the counts.
pub fn lda_multinomial_loglik(docs: &Dataset, model: &LdaModel) -> Result<(f64, DMatrix<f64>)> {
    let (mut total, mut grad) = lda_surrogate_loglik(docs, model)?;
    for n in 0..docs.len() {
        let col = docs.column(n);
        let length: f64 = col.iter().sum();
        total += ln_gamma(length + 1.0) - col.iter().map(|c| ln_gamma(c + 1.0)).sum::<f64>();
        let shift = digamma(length + 1.0);
        for (i, c) in col.iter().enumerate() {
            grad[(i, n)] += shift - digamma(c + 1.0);
        }
    }
    Ok((total, grad))
}

/// Mixture-of-unigrams log-probability with uniform topic weights,
/// `Σ_n [log Γ(ℓ_n+1) − Σ_d log Γ(c_dn+1) + log Σ_k (1/K) Π_d (a_dk + ε)^{c_dn}]`,
/// and its gradient with respect to the counts.
pub fn lda_topic_mixture_loglik(docs: &Dataset, model: &LdaModel) -> Result<(f64, DMatrix<f64>)> {
    let (d, k) = model.a.shape();
    if docs.dim() != d {
        return Err(Error::Shape(format!("corpus dimension {} vs model dimension {d}", docs.dim())));
    }
    if let Some(bad) = docs.x.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("negative or invalid count {bad}")));
    }
    let log_a = model.a.map(|v| (v.max(0.0) + PROB_FLOOR).ln());
    let log_k = (k as f64).ln();
    let mut total = 0.0;
    let mut grad = DMatrix::zeros(d, docs.len());
    for n in 0..docs.len() {
        let col = docs.column(n);
        let c = DVector::from_column_slice(col);
        let scores: Vec<f64> = (0..k).map(|j| c.dot(&log_a.column(j)) - log_k).collect();
        let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
        let sum: f64 = weights.iter().sum();
        let length: f64 = col.iter().sum();
        total += top + sum.ln() + ln_gamma(length + 1.0) - col.iter().map(|v| ln_gamma(v + 1.0)).sum::<f64>();
        let shift = digamma(length + 1.0);
        for i in 0..d {
            let mixed: f64 = (0..k).map(|j| weights[j] / sum * log_a[(i, j)]).sum();
            grad[(i, n)] = mixed + shift - digamma(col[i] + 1.0);
        }
    }
    Ok((total, grad))
}

/// Likelihood used for LDA pseudo-documents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LdaLikelihood {
    /// [`lda_surrogate_loglik`].
    #[default]
    MeanTopic,
    /// [`lda_multinomial_loglik`].
    Multinomial,
    /// [`lda_topic_mixture_loglik`].
    TopicMixture,
}

/// Log-likelihood with the chosen LDA likelihood; GMMs ignore the choice.
pub fn model_loglik_with(x: &Dataset, model: &Model, lda: LdaLikelihood) -> Result<(f64, DMatrix<f64>)> {
    match (model, lda) {
        (Model::Lda(m), LdaLikelihood::Multinomial) => lda_multinomial_loglik(x, m),
        (Model::Lda(m), LdaLikelihood::TopicMixture) => lda_topic_mixture_loglik(x, m),
        _ => model_loglik(x, model),
    }
}

pub fn model_loglik(x: &Dataset, model: &Model) -> Result<(f64, DMatrix<f64>)> {
    match model {
        Model::Gmm(m) => gmm_loglik(x, m),
        Model::Lda(m) => lda_surrogate_loglik(x, m),
    }
}

/// Held-out log-likelihood per observation.
pub fn heldout_eval(x: &Dataset, model: &Model) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::DegenerateData("empty test set".into()));
    }
    Ok(model_loglik(x, model)?.0 / x.len() as f64)
}
