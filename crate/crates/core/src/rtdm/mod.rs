//! Regularized tensor decomposition: optimize pseudo-data with ADAM so that the
//! decomposition of training plus pseudo-data satisfies a regularizer.

mod adam;
mod objective;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use objective::{GradientMode, LossValue, PseudoParam, RtdmObjective, EIGEN_GAP_SAFEGUARD};

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::decomposition::{DecompositionResult, PowerOptions};
use crate::error::{Error, Result};
use crate::models::LdaLikelihood;
use crate::moments::ModelConstants;
use crate::regularizers::Regularizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RtdmConfig {
    /// Regularization weight λ.
    pub lambda: f64,
    /// Number of pseudo-observations N_P.
    pub n_p: usize,
    /// Stop once `‖X_P − X_P'‖₂ ≤ epsilon`.
    pub epsilon: f64,
    pub max_iters: usize,
    pub adam: AdamConfig,
    pub gradient_mode: GradientMode,
    /// Seeds the pseudo-data initialization.
    pub seed: u64,
    pub power: PowerOptions,
    /// LDA pseudo-document length; the median training length when unset.
    pub pseudo_doc_length: Option<f64>,
    /// Likelihood of the LDA pseudo-documents.
    pub lda_likelihood: LdaLikelihood,
    /// Reuse the training moments across iterations instead of recomputing them.
    pub cache_training_moments: bool,
    /// Relative step for finite-difference gradients.
    pub fd_step: f64,
    /// Gradients longer than this multiple of the median of the earlier (applied)
    /// gradient norms are rescaled to it before the ADAM update; 0 disables the guard.
    pub grad_spike_factor: f64,
}

impl Default for RtdmConfig {
    fn default() -> Self {
        RtdmConfig {
            lambda: 1.0,
            n_p: 30,
            epsilon: 1e-4,
            max_iters: 500,
            adam: AdamConfig::default(),
            gradient_mode: GradientMode::Adjoint,
            seed: 0,
            power: PowerOptions::default(),
            pseudo_doc_length: None,
            lda_likelihood: LdaLikelihood::MeanTopic,
            cache_training_moments: true,
            fd_step: 1e-5,
            grad_spike_factor: 10.0,
        }
    }
}

impl RtdmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::Config("fd_step must be positive".into()));
        }
        if !(self.grad_spike_factor >= 0.0) {
            return Err(Error::Config("grad_spike_factor must be nonnegative".into()));
        }
        self.adam.validate()
    }
}

/// State before the update of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub loss: f64,
    pub data_term: f64,
    pub reg_term: f64,
    /// Norm of the update applied to the pseudo-data in this iteration.
    pub delta_xp: f64,
    /// Norm of the loss gradient before any spike rescaling.
    pub grad_norm: f64,
    pub eval_metric: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RtdmTrace {
    pub records: Vec<IterationRecord>,
}

impl RtdmTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn eval_metrics(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.eval_metric).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iter", "loss", "data_term", "reg_term", "delta_xp", "eval_metric"])?;
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                r.loss.to_string(),
                r.data_term.to_string(),
                r.reg_term.to_string(),
                r.delta_xp.to_string(),
                r.eval_metric.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct RtdmOutput {
    /// `A_{T∪P}` at the lowest-loss pseudo-data.
    pub result: DecompositionResult,
    /// `A_T`.
    pub baseline: DecompositionResult,
    pub trace: RtdmTrace,
    /// Lowest-loss pseudo-observations visited, including the final ones.
    pub pseudo: Dataset,
    pub converged: bool,
    /// Value of `R` at `result`, before weighting.
    pub reg_value: f64,
}

/// Per-iteration evaluation hook, called with the iteration index and the current `A_{T∪P}`.
pub type EvalFn<'e> = dyn FnMut(usize, &DecompositionResult) -> Result<f64> + 'e;

/// Runs the optimization loop.
pub fn rtdm_run(
    x_t: &Dataset,
    consts: &ModelConstants,
    reg: Regularizer,
    cfg: &RtdmConfig,
    eval: Option<&mut EvalFn<'_>>,
) -> Result<RtdmOutput> {
    let objective = RtdmObjective::new(x_t, consts, reg, cfg)?;
    rtdm_run_objective(&objective, cfg, eval)
}

pub fn rtdm_run_objective(
    objective: &RtdmObjective<'_>,
    cfg: &RtdmConfig,
    mut eval: Option<&mut EvalFn<'_>>,
) -> Result<RtdmOutput> {
    cfg.validate()?;
    let baseline = objective.baseline().clone();
    if cfg.n_p == 0 {
        let reg_value = objective.regularizer().value(&baseline.a)?;
        return Ok(RtdmOutput {
            result: baseline.clone(),
            baseline,
            trace: RtdmTrace::default(),
            pseudo: Dataset::new(nalgebra::DMatrix::zeros(objective.baseline().a.nrows(), 0)),
            converged: true,
            reg_value,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = objective.initial_params(cfg.n_p, &mut rng)?;
    let mut state = AdamState::new(params.nrows(), params.ncols());
    let mut trace = RtdmTrace::default();
    let mut best: Option<(f64, nalgebra::DMatrix<f64>)> = None;
    let mut converged = false;
    let mut norms: Vec<f64> = Vec::new();
    for iter in 0..cfg.max_iters {
        let (value, mut grad) = objective
            .loss_gradient(&params, cfg.gradient_mode)
            .map_err(|e| e.at_iteration(iter))?;
        if !value.loss.is_finite() || !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::Numeric("loss or gradient is not finite".into()).at_iteration(iter));
        }
        let eval_metric = match eval.as_deref_mut() {
            Some(f) => Some(f(iter, &value.result).map_err(|e| e.at_iteration(iter))?),
            None => None,
        };
        if best.as_ref().is_none_or(|(b, _)| value.loss < *b) {
            best = Some((value.loss, params.clone()));
        }
        let grad_norm = grad.norm();
        let mut applied = grad_norm;
        if cfg.grad_spike_factor > 0.0 && !norms.is_empty() {
            let limit = cfg.grad_spike_factor * median(&norms);
            if grad_norm > limit && limit > 0.0 {
                grad *= limit / grad_norm;
                applied = limit;
            }
        }
        norms.push(applied);
        let next = adam_step(&params, &grad, &mut state, &cfg.adam)?;
        let delta_xp = (objective.param().to_data(&next) - objective.param().to_data(&params)).norm();
        trace.records.push(IterationRecord {
            iter,
            loss: value.loss,
            data_term: value.data_term,
            reg_term: value.reg_term,
            delta_xp,
            grad_norm,
            eval_metric,
        });
        params = next;
        if delta_xp <= cfg.epsilon {
            converged = true;
            break;
        }
    }
    let iters = trace.len();
    let mut final_value = objective.loss(&params).map_err(|e| e.at_iteration(iters))?;
    let (best_loss, best_params) = best.expect("at least one iteration");
    if best_loss < final_value.loss {
        params = best_params;
        final_value = objective.loss(&params).map_err(|e| e.at_iteration(iters))?;
    }
    Ok(RtdmOutput {
        result: final_value.result,
        baseline,
        trace,
        pseudo: objective.pseudo_data(&params),
        converged,
        reg_value: final_value.reg_value,
    })
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
