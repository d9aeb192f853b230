//! The regularized loss as a function of the pseudo-data, with its gradient.
//!
//! The forward pass is the full decomposition on training plus pseudo-data:
//! combined second-order moments, whitening, the whitened third moment,
//! the power method with the restart winners recorded, and reconstruction.
//! The adjoint walks the same steps backwards.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::data::{Dataset, ParameterMatrix};
use crate::decomposition::{
    power_update, reconstruct_parameters, second_order_moments, simplex_projection_pullback, tdm, tensor_power_method_traced,
    whiten_spectrum, whitened_third_moment_from, DecompositionResult, Eigenpair, PowerOptions, PowerTrace, Spectrum,
    ZERO_UPDATE_NORM,
};
use crate::error::{Error, Result};
use crate::linalg::{dvec, Tensor3};
use crate::models::{gmm_sample_with, lda_sample_with, model_loglik_with, GmmModel, LdaLikelihood, LdaModel, Model};
use crate::moments::{combine_moments, lda_centering_coefficients, Centering, ModelConstants, ModelKind, MomentSet};
use crate::regularizers::Regularizer;

use super::RtdmConfig;

/// Adjoint terms between eigenvalues closer than this (relative to the largest) are dropped.
pub const EIGEN_GAP_SAFEGUARD: f64 = 1e-8;

/// Smoothing added to sampled counts before they become softmax logits.
const COUNT_RELAXATION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    Adjoint,
    FiniteDifference,
}

/// Value of the loss at one pseudo-dataset.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub loss: f64,
    /// `−log p(X_P | A_T)`
    pub data_term: f64,
    /// Signed and weighted regularizer contribution, so `loss = data_term + reg_term`.
    pub reg_term: f64,
    /// Unweighted `R(A_{T∪P})`.
    pub reg_value: f64,
    /// Decomposition of training plus pseudo-data.
    pub result: DecompositionResult,
}

/// Map from the optimized variables to pseudo-observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PseudoParam {
    /// GMM: the variables are the observations.
    Identity,
    /// LDA: column `n` is `ℓ · softmax(z_n)`.
    Softmax { length: f64 },
}

impl PseudoParam {
    pub fn to_data(&self, params: &DMatrix<f64>) -> DMatrix<f64> {
        match *self {
            PseudoParam::Identity => params.clone(),
            PseudoParam::Softmax { length } => {
                let mut out = params.clone();
                for mut col in out.column_iter_mut() {
                    let max = col.max();
                    col.apply(|z| *z = (*z - max).exp());
                    let total = col.sum();
                    col *= length / total;
                }
                out
            }
        }
    }

    /// Gradient with respect to the variables given the gradient with respect to the data.
    pub fn pullback(&self, params: &DMatrix<f64>, data_grad: &DMatrix<f64>) -> DMatrix<f64> {
        match *self {
            PseudoParam::Identity => data_grad.clone(),
            PseudoParam::Softmax { length } => {
                let c = self.to_data(params);
                let mut out = DMatrix::zeros(params.nrows(), params.ncols());
                for n in 0..params.ncols() {
                    let s = c.column(n) / length;
                    let g = data_grad.column(n);
                    let sg = s.dot(&g);
                    for i in 0..params.nrows() {
                        out[(i, n)] = length * s[i] * (g[i] - sg);
                    }
                }
                out
            }
        }
    }
}

/// Everything the adjoint needs from one forward pass.
struct Forward {
    x_p: Dataset,
    moments: MomentSet,
    spectrum: Spectrum,
    trace: PowerTrace,
    result: DecompositionResult,
}

/// Loss `L(X_P) = −log p(X_P | A_T) + λ·sign·R(A_{T∪P})` for a fixed training set.
#[derive(Debug, Clone)]
pub struct RtdmObjective<'a> {
    x_t: &'a Dataset,
    /// With the GMM noise variance fixed to the training estimate.
    consts: ModelConstants,
    reg: Regularizer,
    lambda: f64,
    power: PowerOptions,
    cache: bool,
    fd_step: f64,
    lda_likelihood: LdaLikelihood,
    /// Cached second-order training moments.
    train: MomentSet,
    baseline: DecompositionResult,
    model_t: Model,
    param: PseudoParam,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl<'a> RtdmObjective<'a> {
    /// Fits `A_T = TDM(X_T)` and caches the training moments.
    pub fn new(x_t: &'a Dataset, consts: &ModelConstants, reg: Regularizer, cfg: &RtdmConfig) -> Result<Self> {
        cfg.validate()?;
        consts.validate()?;
        x_t.ensure_finite()?;
        if x_t.len() < consts.k {
            return Err(Error::DegenerateData(format!(
                "{} training observations for {} components",
                x_t.len(),
                consts.k
            )));
        }
        reg.validate(x_t.dim(), consts.k)?;
        let train = second_order_moments(x_t, consts)?;
        let mut consts = *consts;
        if let Centering::Gmm { sigma2 } = train.centering {
            consts.sigma2 = Some(sigma2);
        }
        let baseline = tdm(x_t, &consts, &cfg.power)?;
        let (model_t, param) = match consts.model {
            ModelKind::Gmm => {
                let sigma2 = consts.sigma2.unwrap_or(0.0);
                if !(sigma2 > 0.0) {
                    return Err(Error::DegenerateData(
                        "training noise variance is zero; the pseudo-data likelihood is undefined".into(),
                    ));
                }
                let model = GmmModel {
                    a: baseline.a.clone(),
                    weights: baseline.weights.clone(),
                    sigma2,
                };
                (Model::Gmm(model), PseudoParam::Identity)
            }
            ModelKind::Lda => {
                let length = match cfg.pseudo_doc_length {
                    Some(l) => l,
                    None => {
                        let mut lengths: Vec<f64> = (0..x_t.len()).map(|j| x_t.column(j).iter().sum()).collect();
                        median(&mut lengths)
                    }
                };
                if !(length >= 3.0) {
                    return Err(Error::Config(format!("pseudo document length must be at least 3, got {length}")));
                }
                let model = LdaModel {
                    a: baseline.a.clone(),
                    alpha_b: consts.alpha_b,
                    doc_length: length.round() as usize,
                };
                (Model::Lda(model), PseudoParam::Softmax { length })
            }
        };
        Ok(RtdmObjective {
            x_t,
            consts,
            reg,
            lambda: cfg.lambda,
            power: cfg.power,
            cache: cfg.cache_training_moments,
            fd_step: cfg.fd_step,
            lda_likelihood: cfg.lda_likelihood,
            train,
            baseline,
            model_t,
            param,
        })
    }

    /// `A_T`, the decomposition of the training data alone.
    pub fn baseline(&self) -> &DecompositionResult {
        &self.baseline
    }

    /// Model fitted to the training data, used for the pseudo-data likelihood.
    pub fn training_model(&self) -> &Model {
        &self.model_t
    }

    pub fn constants(&self) -> &ModelConstants {
        &self.consts
    }

    pub fn param(&self) -> PseudoParam {
        self.param
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.reg
    }

    pub fn pseudo_data(&self, params: &DMatrix<f64>) -> Dataset {
        Dataset::new(self.param.to_data(params))
    }

    /// Draws `n_p` pseudo-observations from the training fit and returns them as variables.
    pub fn initial_params<R: Rng + ?Sized>(&self, n_p: usize, rng: &mut R) -> Result<DMatrix<f64>> {
        match &self.model_t {
            Model::Gmm(m) => Ok(gmm_sample_with(m, n_p, rng)?.x),
            Model::Lda(m) => {
                let docs = lda_sample_with(m, n_p, rng)?;
                Ok(docs.x.map(|c| (c + COUNT_RELAXATION).ln()))
            }
        }
    }

    fn forward(&self, x_p: Dataset) -> Result<Forward> {
        if x_p.dim() != self.x_t.dim() {
            return Err(Error::Shape(format!(
                "pseudo-data dimension {} vs training dimension {}",
                x_p.dim(),
                self.x_t.dim()
            )));
        }
        x_p.ensure_finite()?;
        let k = self.consts.k;
        let (moments, spectrum, t) = if x_p.is_empty() {
            let spectrum = whiten_spectrum(&self.train.m2, k)?;
            let t = whitened_third_moment_from(&self.train, &[self.x_t], &spectrum.pair.w)?;
            (self.train.clone(), spectrum, t)
        } else if self.cache {
            let mp = second_order_moments(&x_p, &self.consts)?;
            let moments = combine_moments(&self.train, &mp)?;
            let spectrum = whiten_spectrum(&moments.m2, k)?;
            let t = whitened_third_moment_from(&moments, &[self.x_t, &x_p], &spectrum.pair.w)?;
            (moments, spectrum, t)
        } else {
            let all = self.x_t.concat(&x_p)?;
            let moments = second_order_moments(&all, &self.consts)?;
            let spectrum = whiten_spectrum(&moments.m2, k)?;
            let t = whitened_third_moment_from(&moments, &[&all], &spectrum.pair.w)?;
            (moments, spectrum, t)
        };
        let trace = tensor_power_method_traced(&t, k, &self.power)?;
        let pairs: Vec<Eigenpair> = trace
            .order
            .iter()
            .map(|&e| Eigenpair {
                lambda: trace.extractions[e].lambda,
                v: trace.extractions[e].v.clone(),
            })
            .collect();
        let mut result = reconstruct_parameters(&pairs, &spectrum.pair, &self.consts)?;
        if let Centering::Gmm { sigma2 } = moments.centering {
            result.sigma2 = Some(sigma2);
        }
        Ok(Forward {
            x_p,
            moments,
            spectrum,
            trace,
            result,
        })
    }

    fn assemble(&self, f: &Forward) -> Result<(LossValue, DMatrix<f64>, DMatrix<f64>)> {
        let (ll, ll_grad) = model_loglik_with(&f.x_p, &self.model_t, self.lda_likelihood)?;
        let (reg_value, mut reg_grad) = self.reg.value_and_grad(&f.result.a)?;
        if self.consts.model == ModelKind::Lda {
            for j in 0..reg_grad.ncols() {
                let p: Vec<f64> = f.result.a.column(j).iter().copied().collect();
                let g: Vec<f64> = reg_grad.column(j).iter().copied().collect();
                reg_grad.set_column(j, &DVector::from_vec(simplex_projection_pullback(&p, &g)));
            }
        }
        let weight = self.lambda * self.reg.direction().loss_sign();
        let reg_term = if self.lambda == 0.0 { 0.0 } else { weight * reg_value };
        let value = LossValue {
            loss: -ll + reg_term,
            data_term: -ll,
            reg_term,
            reg_value,
            result: f.result.clone(),
        };
        Ok((value, -ll_grad, reg_grad * weight))
    }

    /// Loss at the given variables.
    pub fn loss(&self, params: &DMatrix<f64>) -> Result<LossValue> {
        self.loss_data(&self.pseudo_data(params))
    }

    /// Loss at the given pseudo-observations.
    pub fn loss_data(&self, x_p: &Dataset) -> Result<LossValue> {
        let f = self.forward(x_p.clone())?;
        Ok(self.assemble(&f)?.0)
    }

    /// Loss and its gradient with respect to the variables.
    pub fn loss_gradient(&self, params: &DMatrix<f64>, mode: GradientMode) -> Result<(LossValue, DMatrix<f64>)> {
        match mode {
            GradientMode::Adjoint => {
                let (value, g) = self.loss_gradient_data(&self.pseudo_data(params))?;
                Ok((value, self.param.pullback(params, &g)))
            }
            GradientMode::FiniteDifference => {
                let value = self.loss(params)?;
                let mut grad = DMatrix::zeros(params.nrows(), params.ncols());
                let mut p = params.clone();
                for idx in 0..params.len() {
                    let orig = params[idx];
                    let h = self.fd_step * orig.abs().max(1.0);
                    p[idx] = orig + h;
                    let up = self.loss(&p)?.loss;
                    p[idx] = orig - h;
                    let down = self.loss(&p)?.loss;
                    p[idx] = orig;
                    grad[idx] = (up - down) / (2.0 * h);
                }
                Ok((value, grad))
            }
        }
    }

    /// Loss and its adjoint gradient with respect to the pseudo-observations.
    ///
    /// For LDA the document lengths are held fixed.
    pub fn loss_gradient_data(&self, x_p: &Dataset) -> Result<(LossValue, DMatrix<f64>)> {
        let f = self.forward(x_p.clone())?;
        let (value, data_grad, a_bar) = self.assemble(&f)?;
        if self.lambda == 0.0 || x_p.is_empty() {
            return Ok((value, data_grad));
        }
        let pipeline_grad = self.backward(&f, &a_bar)?;
        Ok((value, data_grad + pipeline_grad))
    }

    fn backward(&self, f: &Forward, a_bar: &ParameterMatrix) -> Result<DMatrix<f64>> {
        let k = self.consts.k;
        let pair = &f.spectrum.pair;
        let d = pair.w.nrows();
        let scale = match self.consts.model {
            ModelKind::Gmm => 1.0,
            ModelKind::Lda => self.consts.lda_beta() / self.consts.lda_gamma(),
        };

        // reconstruction: a_r = scale · λ_e · B v_e with e = order[r]
        let mut b_bar = DMatrix::zeros(d, k);
        let mut lambda_bar = vec![0.0; k];
        let mut v_bar = vec![vec![0.0; k]; k];
        for (r, &e) in f.trace.order.iter().enumerate() {
            let ex = &f.trace.extractions[e];
            let ab = a_bar.column(r).into_owned();
            let v = dvec(&ex.v);
            lambda_bar[e] = scale * ab.dot(&(&pair.b * &v));
            b_bar.ger(scale * ex.lambda, &ab, &v, 1.0);
            v_bar[e] = (pair.b.transpose() * &ab * (scale * ex.lambda)).as_slice().to_vec();
        }

        let t_bar = power_adjoint(&f.trace, &lambda_bar, &v_bar);

        // whitened third moment
        let n = f.moments.n as f64;
        let mut w_bar = DMatrix::zeros(d, k);
        let mut p_bar = t_bar.clone();
        p_bar.scale_mut(1.0 / n);
        let model = self.consts.model;
        third_sum_adjoint(self.x_t, model, &pair.w, &p_bar, &mut w_bar, None);
        let mut x_bar = DMatrix::zeros(d, f.x_p.len());
        third_sum_adjoint(&f.x_p, model, &pair.w, &p_bar, &mut w_bar, Some(&mut x_bar));

        let m1 = &f.moments.m1;
        let mut m1_bar = DVector::zeros(d);
        let mut raw2_bar = DMatrix::zeros(d, d);
        let mu = pair.w.transpose() * m1;
        let mu_s = mu.as_slice();
        let mu_bar = match f.moments.centering {
            Centering::Gmm { sigma2 } => {
                let g = pair.w.transpose() * &pair.w;
                let g_bar = t_bar.contract_last(mu_s) * (-3.0 * sigma2);
                w_bar += &pair.w * (&g_bar + g_bar.transpose());
                dvec(&t_bar.contract_first_two_with(&g)) * (-3.0 * sigma2)
            }
            Centering::Lda { k, alpha_b } => {
                let (_, c1, c2) = lda_centering_coefficients(k, alpha_b);
                let raw2 = &f.moments.raw2;
                let pw = pair.w.transpose() * raw2 * &pair.w;
                let pw_bar = t_bar.contract_last(mu_s) * (-3.0 * c1);
                let sym_bar = &pw_bar + pw_bar.transpose();
                w_bar += raw2 * &pair.w * &sym_bar;
                raw2_bar += &pair.w * &pw_bar * pair.w.transpose();
                dvec(&t_bar.contract_first_two_with(&pw)) * (-3.0 * c1)
                    + dvec(&t_bar.contract_last_two(mu_s, mu_s)) * (3.0 * c2)
            }
        };
        w_bar.ger(1.0, m1, &mu_bar, 1.0);
        m1_bar += &pair.w * &mu_bar;

        let m2_bar = whitening_adjoint(&f.spectrum, k, &w_bar, &b_bar)?;
        raw2_bar += &m2_bar;
        if let Centering::Lda { k, alpha_b } = f.moments.centering {
            let (c0, _, _) = lda_centering_coefficients(k, alpha_b);
            m1_bar -= (&m2_bar + m2_bar.transpose()) * m1 * c0;
        }

        // pseudo-data contributions to the averaged first and second moments
        let raw2_sym = &raw2_bar + raw2_bar.transpose();
        for j in 0..f.x_p.len() {
            let x = f.x_p.x.column(j);
            let g = match model {
                ModelKind::Gmm => (&m1_bar + &raw2_sym * x) / n,
                ModelKind::Lda => {
                    let ell = x.sum();
                    let mut g = &m1_bar / (ell * n) + &raw2_sym * x / (ell * (ell - 1.0) * n);
                    for i in 0..d {
                        g[i] -= raw2_bar[(i, i)] / (ell * (ell - 1.0) * n);
                    }
                    g
                }
            };
            let mut col = x_bar.column_mut(j);
            col += g;
        }
        Ok(x_bar)
    }
}

/// Adjoint of the power method with deflation, restart winners frozen.
/// Returns the adjoint of the (symmetric) input tensor.
fn power_adjoint(trace: &PowerTrace, lambda_bar: &[f64], v_bar: &[Vec<f64>]) -> Tensor3 {
    let k = lambda_bar.len();
    let mut t_bar = Tensor3::zeros(trace.residual.dim());
    for e in (0..trace.extractions.len()).rev() {
        let ex = &trace.extractions[e];
        let tj = &ex.tensor;
        let v = &ex.v;
        // deflation T_{e+1} = T_e − λ v⊗v⊗v; t_bar currently holds the adjoint of T_{e+1}
        let lam_bar = lambda_bar[e] - t_bar.apply3(v, v, v);
        let tv = t_bar.contract_last_two(v, v);
        let vb: Vec<f64> = (0..k).map(|i| v_bar[e][i] - 3.0 * ex.lambda * tv[i]).collect();
        // λ = σ T(θ, θ, θ), v = σ θ
        let theta = ex.path.last().expect("non-empty path");
        let g = tj.contract_last_two(theta, theta);
        let mut theta_bar: Vec<f64> = (0..k).map(|i| ex.sign * (vb[i] + 3.0 * lam_bar * g[i])).collect();
        t_bar.add_cube(ex.sign * lam_bar, theta);
        for step in (0..ex.path.len() - 1).rev() {
            let th = &ex.path[step];
            let next = &ex.path[step + 1];
            let u = tj.contract_last_two(th, th);
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < ZERO_UPDATE_NORM {
                continue;
            }
            debug_assert_eq!(&power_update(tj, th), next);
            let proj: f64 = next.iter().zip(&theta_bar).map(|(a, b)| a * b).sum();
            let u_bar: Vec<f64> = (0..k).map(|i| (theta_bar[i] - next[i] * proj) / norm).collect();
            t_bar.add_outer(1.0 / 3.0, &u_bar, th, th);
            t_bar.add_outer(1.0 / 3.0, th, &u_bar, th);
            t_bar.add_outer(1.0 / 3.0, th, th, &u_bar);
            theta_bar = tj.contract_last_two(&u_bar, th).into_iter().map(|x| 2.0 * x).collect();
        }
    }
    t_bar
}

/// Accumulates the adjoint of `Σ_n (per-observation whitened third statistic)`
/// into `w_bar`, and into `x_bar` when given. `p_bar` must be symmetric.
fn third_sum_adjoint(
    x: &Dataset,
    model: ModelKind,
    w: &DMatrix<f64>,
    p_bar: &Tensor3,
    w_bar: &mut DMatrix<f64>,
    mut x_bar: Option<&mut DMatrix<f64>>,
) {
    let (d, k) = w.shape();
    let wt = w.transpose();
    for j in 0..x.len() {
        let c = x.x.column(j);
        let y = &wt * c;
        let ys = y.as_slice();
        match model {
            ModelKind::Gmm => {
                let y_bar = dvec(&p_bar.contract_last_two(ys, ys)) * 3.0;
                w_bar.ger(1.0, &c, &y_bar, 1.0);
                if let Some(xb) = x_bar.as_deref_mut() {
                    let mut col = xb.column_mut(j);
                    col += w * &y_bar;
                }
            }
            ModelKind::Lda => {
                let ell = c.sum();
                let s = 1.0 / (ell * (ell - 1.0) * (ell - 2.0));
                let mut q = DMatrix::zeros(k, k);
                for i in 0..d {
                    if c[i] != 0.0 {
                        let wi = w.row(i).transpose();
                        q.ger(c[i], &wi, &wi, 1.0);
                    }
                }
                let y_bar = (dvec(&p_bar.contract_last_two(ys, ys)) - dvec(&p_bar.contract_first_two_with(&q))) * (3.0 * s);
                let q_bar = p_bar.contract_last(ys) * (-3.0 * s);
                let q_sym = &q_bar + q_bar.transpose();
                let mut c_bar = w * &y_bar;
                for i in 0..d {
                    if c[i] == 0.0 {
                        if x_bar.is_some() {
                            let wi: Vec<f64> = w.row(i).iter().copied().collect();
                            c_bar[i] += 2.0 * s * p_bar.apply3(&wi, &wi, &wi);
                            let wv = dvec(&wi);
                            c_bar[i] += wv.dot(&(&q_bar * &wv));
                        }
                        continue;
                    }
                    let wi: Vec<f64> = w.row(i).iter().copied().collect();
                    let wv = dvec(&wi);
                    let g = dvec(&p_bar.contract_last_two(&wi, &wi));
                    c_bar[i] += 2.0 * s * g.dot(&wv) + wv.dot(&(&q_bar * &wv));
                    let row_bar = g * (6.0 * s * c[i]) + &q_sym * &wv * c[i];
                    for r in 0..k {
                        w_bar[(i, r)] += row_bar[r];
                    }
                }
                w_bar.ger(1.0, &c, &y_bar, 1.0);
                if let Some(xb) = x_bar.as_deref_mut() {
                    let mut col = xb.column_mut(j);
                    col += c_bar;
                }
            }
        }
    }
}

/// Adjoint of `(W, B)` with respect to the symmetric matrix they were built from.
fn whitening_adjoint(
    spectrum: &Spectrum,
    k: usize,
    w_bar: &DMatrix<f64>,
    b_bar: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let u = &spectrum.vectors;
    let vals = &spectrum.values;
    let d = u.nrows();
    let s_max = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = EIGEN_GAP_SAFEGUARD * s_max;
    if k < d {
        let gap = vals[k - 1] - vals[k];
        if gap < threshold {
            return Err(Error::DegenerateSpectrum { gap, threshold });
        }
    }
    let mut u_bar = DMatrix::zeros(d, d);
    let mut s_bar = DVector::zeros(d);
    for j in 0..k {
        let sj = vals[j];
        let root = sj.sqrt();
        let uj = u.column(j);
        let wb = w_bar.column(j);
        let bb = b_bar.column(j);
        u_bar.set_column(j, &(wb / root + bb * root));
        s_bar[j] = -0.5 * uj.dot(&wb) / (sj * root) + 0.5 * uj.dot(&bb) / root;
    }
    let utub = u.transpose() * &u_bar;
    let mut inner = DMatrix::from_diagonal(&s_bar);
    for j in 0..k {
        for i in 0..d {
            if i == j {
                continue;
            }
            let gap = vals[j] - vals[i];
            if gap.abs() < threshold {
                continue;
            }
            inner[(i, j)] += utub[(i, j)] / gap;
        }
    }
    let m = u * inner * u.transpose();
    Ok((&m + m.transpose()) * 0.5)
}
