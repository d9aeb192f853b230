//! Differentiable regularizers `R(A)` on the parameter matrix.
//!
//! Every regularizer returns its value and the exact gradient with respect to
//! `A`. Pair sums `Σ_{i≠j}` count both orderings `(i, j)` and `(j, i)`.

mod tree;

pub use tree::{build_tree_distance, Heading, HeadingTree};

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::data::ParameterMatrix;
use crate::decomposition::align_columns;
use crate::error::{Error, Result};
use crate::models::PROB_FLOOR;

/// Whether a regularizer is minimized (a penalty) or maximized (a log-prior).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Penalty,
    LogPrior,
}

impl Direction {
    /// Multiplier applied to `R` inside a loss that is minimized.
    pub fn loss_sign(self) -> f64 {
        match self {
            Direction::Penalty => 1.0,
            Direction::LogPrior => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    /// Log-density of `A` under i.i.d. `N(0, σ_m²)` entries.
    GaussianPrior { sigma_m2: f64 },
    /// Frobenius distance to a reference matrix after column alignment.
    TransferL2 { prior: ParameterMatrix },
    /// Sum of dot products between distinct columns.
    AntiCorrelation,
    /// `−Σ_k Σ_{i≠j} a_ik a_jk / O_ij` for tree distances `O`.
    TreeDistance { o_star: DMatrix<f64> },
    /// Negative Dirichlet log-density of each column.
    DirichletSparsity { alpha_a: f64 },
}

impl Regularizer {
    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::GaussianPrior { .. } => "gaussian_prior",
            Regularizer::TransferL2 { .. } => "transfer_l2",
            Regularizer::AntiCorrelation => "anti_correlation",
            Regularizer::TreeDistance { .. } => "tree_distance",
            Regularizer::DirichletSparsity { .. } => "dirichlet_sparsity",
        }
    }

    pub fn direction(&self) -> Direction {
        match self {
            Regularizer::GaussianPrior { .. } => Direction::LogPrior,
            _ => Direction::Penalty,
        }
    }

    pub fn validate(&self, d: usize, k: usize) -> Result<()> {
        match self {
            Regularizer::GaussianPrior { sigma_m2 } if !(*sigma_m2 > 0.0) => {
                Err(Error::Config(format!("sigma_m2 must be positive, got {sigma_m2}")))
            }
            Regularizer::DirichletSparsity { alpha_a } if !(*alpha_a > 0.0) => {
                Err(Error::Config(format!("alpha_a must be positive, got {alpha_a}")))
            }
            Regularizer::TransferL2 { prior } if prior.shape() != (d, k) => Err(Error::Shape(format!(
                "prior is {:?}, parameters are {:?}",
                prior.shape(),
                (d, k)
            ))),
            Regularizer::TreeDistance { o_star } => {
                if o_star.shape() != (d, d) {
                    return Err(Error::Shape(format!("O* is {:?}, expected {d}×{d}", o_star.shape())));
                }
                if (o_star - o_star.transpose()).amax() > 0.0 || (0..d).any(|i| o_star[(i, i)] != 1.0) {
                    return Err(Error::Domain("O* must be symmetric with unit diagonal".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `R(A)` and `∂R/∂A`.
    pub fn value_and_grad(&self, a: &ParameterMatrix) -> Result<(f64, DMatrix<f64>)> {
        self.validate(a.nrows(), a.ncols())?;
        match self {
            Regularizer::GaussianPrior { sigma_m2 } => Ok(gaussian_prior_reg(a, *sigma_m2)),
            Regularizer::TransferL2 { prior } => Ok(transfer_l2_reg(a, prior)),
            Regularizer::AntiCorrelation => Ok(anti_correlation_reg(a)),
            Regularizer::TreeDistance { o_star } => tree_reg(a, o_star),
            Regularizer::DirichletSparsity { alpha_a } => dirichlet_sparsity_reg(a, *alpha_a),
        }
    }

    pub fn value(&self, a: &ParameterMatrix) -> Result<f64> {
        Ok(self.value_and_grad(a)?.0)
    }
}

pub fn gaussian_prior_reg(a: &ParameterMatrix, sigma_m2: f64) -> (f64, DMatrix<f64>) {
    let dk = (a.nrows() * a.ncols()) as f64;
    let value = -0.5 * dk * (2.0 * std::f64::consts::PI * sigma_m2).ln() - a.norm_squared() / (2.0 * sigma_m2);
    (value, -a / sigma_m2)
}

/// `‖align(A) − A_prior‖_F`; the gradient is mapped back to the original column order.
pub fn transfer_l2_reg(a: &ParameterMatrix, prior: &ParameterMatrix) -> (f64, DMatrix<f64>) {
    let alignment = align_columns(a, prior, false);
    let diff = &alignment.aligned - prior;
    let value = diff.norm();
    let mut grad = DMatrix::zeros(a.nrows(), a.ncols());
    if value > 0.0 {
        for (r, &c) in alignment.permutation.iter().enumerate() {
            grad.set_column(c, &(diff.column(r) / value));
        }
    }
    (value, grad)
}

pub fn anti_correlation_reg(a: &ParameterMatrix) -> (f64, DMatrix<f64>) {
    let total = a.column_sum();
    let value = total.norm_squared() - a.norm_squared();
    let mut grad = a * -2.0;
    for mut col in grad.column_iter_mut() {
        col.axpy(2.0, &total, 1.0);
    }
    (value, grad)
}

/// Tree regularizer via the trace form `−tr(Aᵀ O* A − Aᵀ A)`.
pub fn tree_reg(a: &ParameterMatrix, o_star: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    if o_star.shape() != (a.nrows(), a.nrows()) {
        return Err(Error::Shape(format!(
            "O* is {:?} but A has {} rows",
            o_star.shape(),
            a.nrows()
        )));
    }
    let oa = o_star * a;
    let value = -(a.dot(&oa) - a.norm_squared());
    let grad = (a - oa) * 2.0;
    Ok((value, grad))
}

/// `−Σ_k log Dir(ã_k | α 1_D)` where `ã_k` is column `k` floored at
/// `PROB_FLOOR` and renormalized.
pub fn dirichlet_sparsity_reg(a: &ParameterMatrix, alpha_a: f64) -> Result<(f64, DMatrix<f64>)> {
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::Domain("parameters contain non-finite entries".into()));
    }
    let d = a.nrows();
    let log_norm = ln_gamma(d as f64 * alpha_a) - d as f64 * ln_gamma(alpha_a);
    let mut value = 0.0;
    let mut grad = DMatrix::zeros(d, a.ncols());
    for k in 0..a.ncols() {
        let floored: Vec<f64> = a.column(k).iter().map(|v| v.max(PROB_FLOOR)).collect();
        let total: f64 = floored.iter().sum();
        let normalized: Vec<f64> = floored.iter().map(|f| f / total).collect();
        if normalized.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Domain(format!("column {k} has a non-positive entry after flooring")));
        }
        value -= log_norm + (alpha_a - 1.0) * normalized.iter().map(|v| v.ln()).sum::<f64>();
        // dR/dã, then through the renormalization and the floor
        let g: Vec<f64> = normalized.iter().map(|v| -(alpha_a - 1.0) / v).collect();
        let g_dot: f64 = g.iter().zip(&normalized).map(|(gi, vi)| gi * vi).sum();
        for i in 0..d {
            if a[(i, k)] > PROB_FLOOR {
                grad[(i, k)] = (g[i] - g_dot) / total;
            }
        }
    }
    Ok((value, grad))
}
