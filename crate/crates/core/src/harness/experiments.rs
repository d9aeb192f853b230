use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::synthetic::{add_poisson_noise, dirichlet_topics, gaussian_means, perturb_topics, tree_local_topics};
use super::{ExperimentConfig, ExperimentKind, ResultTable, TopHeadingRow, TopHeadingTable};
use crate::data::{Dataset, ParameterMatrix};
use crate::decomposition::{aligned_distance, aligned_relative_error, tdm, DecompositionResult, PowerOptions};
use crate::error::{Error, Result};
use crate::models::{gmm_sample_with, heldout_eval, lda_sample_with, GmmModel, LdaModel, Model};
use crate::moments::ModelConstants;
use crate::regularizers::{anti_correlation_reg, build_tree_distance, tree_reg, HeadingTree, Regularizer};
use crate::rtdm::{rtdm_run, RtdmConfig};

/// Threshold above which a topic entry counts as nonzero.
pub const SPARSITY_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub top_headings: Option<TopHeadingTable>,
}

impl ExperimentOutput {
    /// Writes the result table to `path` and any heading listing next to it.
    pub fn write(&self, path: &Path) -> Result<Vec<PathBuf>> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        self.table.save(path)?;
        let mut written = vec![path.to_path_buf()];
        if let Some(top) = &self.top_headings {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
            let extra = path.with_file_name(format!("{stem}_top_headings.csv"));
            top.write_csv(std::fs::File::create(&extra)?)?;
            written.push(extra);
        }
        Ok(written)
    }
}

impl ExperimentConfig {
    pub fn model_constants(&self) -> ModelConstants {
        match self.experiment {
            ExperimentKind::GaussPrior => ModelConstants::gmm(self.k, (!self.estimate_sigma2).then_some(self.sigma2)),
            _ => ModelConstants::lda(self.k, self.alpha_b),
        }
    }

    pub fn heading_tree(&self) -> Result<HeadingTree> {
        let path = self
            .tree_file
            .as_ref()
            .ok_or_else(|| Error::Config("missing field `tree_file`: the mesh experiment needs a heading-tree file".into()))?;
        let tree = HeadingTree::load(path).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read `tree_file` {}: {io}", path.display())),
            other => other,
        })?;
        if tree.len() != self.d {
            return Err(Error::Config(format!("`tree_file` has {} headings but d = {}", tree.len(), self.d)));
        }
        Ok(tree)
    }

    /// Generating model of the experiment.
    pub fn generate_truth<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Model> {
        let lda = |a| {
            Model::Lda(LdaModel {
                a,
                alpha_b: self.alpha_b,
                doc_length: self.doc_length,
            })
        };
        Ok(match self.experiment {
            ExperimentKind::GaussPrior => Model::Gmm(GmmModel {
                a: gaussian_means(rng, self.d, self.k, self.sigma_m2)?,
                weights: vec![1.0 / self.k as f64; self.k],
                sigma2: self.sigma2,
            }),
            ExperimentKind::Transfer | ExperimentKind::Anticorr => {
                lda(dirichlet_topics(rng, self.d, self.k, self.topic_concentration))
            }
            ExperimentKind::Mesh => lda(tree_local_topics(rng, &self.heading_tree()?, self.k, self.locality_scale)),
            ExperimentKind::Sparsity => lda(dirichlet_topics(rng, self.d, self.k, self.alpha_a)),
        })
    }

    /// Training observations; the sparsity experiment adds its count noise.
    pub fn sample_training<R: Rng + ?Sized>(&self, model: &Model, n: usize, rng: &mut R) -> Result<Dataset> {
        let x = sample(model, n, rng)?;
        match self.experiment {
            ExperimentKind::Sparsity => add_poisson_noise(rng, &x, self.poisson_rate),
            _ => Ok(x),
        }
    }

    /// Regularizer of the experiment. Transfer needs the prior topics.
    pub fn regularizer(&self, prior: Option<ParameterMatrix>) -> Result<Regularizer> {
        Ok(match self.experiment {
            ExperimentKind::GaussPrior => Regularizer::GaussianPrior { sigma_m2: self.sigma_m2 },
            ExperimentKind::Transfer => Regularizer::TransferL2 {
                prior: prior.ok_or_else(|| Error::Config("the transfer regularizer needs prior topics".into()))?,
            },
            ExperimentKind::Anticorr => Regularizer::AntiCorrelation,
            ExperimentKind::Mesh => Regularizer::TreeDistance {
                o_star: build_tree_distance(&self.heading_tree()?).1,
            },
            ExperimentKind::Sparsity => Regularizer::DirichletSparsity { alpha_a: self.alpha_a },
        })
    }

    /// Model with the fitted parameters and the experiment's fixed constants.
    pub fn fitted_model(&self, res: &DecompositionResult) -> Model {
        match self.experiment {
            ExperimentKind::GaussPrior => Model::Gmm(GmmModel {
                a: res.a.clone(),
                weights: res.weights.clone(),
                sigma2: res.sigma2.unwrap_or(self.sigma2),
            }),
            _ => Model::Lda(LdaModel {
                a: res.a.clone(),
                alpha_b: self.alpha_b,
                doc_length: self.doc_length,
            }),
        }
    }
}

pub fn sample<R: Rng + ?Sized>(model: &Model, n: usize, rng: &mut R) -> Result<Dataset> {
    match model {
        Model::Gmm(m) => {
            m.validate()?;
            gmm_sample_with(m, n, rng)
        }
        Model::Lda(m) => {
            m.validate()?;
            lda_sample_with(m, n, rng)
        }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let plain = |table| ExperimentOutput {
        table,
        top_headings: None,
    };
    match cfg.experiment {
        ExperimentKind::GaussPrior => run_gauss_prior(cfg).map(plain),
        ExperimentKind::Transfer => run_transfer(cfg).map(plain),
        ExperimentKind::Anticorr => run_anticorr(cfg).map(plain),
        ExperimentKind::Mesh => run_mesh(cfg).map(|(table, top)| ExperimentOutput {
            table,
            top_headings: Some(top),
        }),
        ExperimentKind::Sparsity => run_sparsity(cfg).map(plain),
    }
}

fn rtdm_config(cfg: &ExperimentConfig, lambda: f64, n_p: usize, seed: u64) -> RtdmConfig {
    RtdmConfig {
        lambda,
        n_p,
        seed,
        power: PowerOptions { seed, ..cfg.rtdm.power },
        ..cfg.rtdm.clone()
    }
}

fn power(cfg: &ExperimentConfig, seed: u64) -> PowerOptions {
    PowerOptions { seed, ..cfg.rtdm.power }
}

fn mean_nonzero(a: &ParameterMatrix) -> f64 {
    a.iter().filter(|v| **v > SPARSITY_THRESHOLD).count() as f64 / a.ncols() as f64
}

fn iter_metric(name: &str, iter: usize) -> String {
    format!("{name}@iter={iter}")
}

fn topics(model: &Model) -> &ParameterMatrix {
    match model {
        Model::Gmm(m) => &m.a,
        Model::Lda(m) => &m.a,
    }
}

/// Gaussian mixture with a Gaussian prior on the means.
pub fn run_gauss_prior(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let exp = ExperimentKind::GaussPrior.name();
    let mut table = ResultTable::new();
    let (lambda, n_p) = (cfg.rtdm.lambda, cfg.rtdm.n_p);
    let consts = cfg.model_constants();
    for &seed in &cfg.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = cfg.generate_truth(&mut rng)?;
        let a_true = topics(&truth).clone();
        let x_t = cfg.sample_training(&truth, cfg.n_t, &mut rng)?;
        let x_test = sample(&truth, cfg.n_test, &mut rng)?;
        let test_ll = |res: &DecompositionResult| heldout_eval(&x_test, &cfg.fitted_model(res));
        let mut curve = Vec::new();
        let mut eval = |_: usize, res: &DecompositionResult| -> Result<f64> {
            let v = test_ll(res)?;
            curve.push(v);
            Ok(v)
        };
        let out = rtdm_run(&x_t, &consts, cfg.regularizer(None)?, &rtdm_config(cfg, lambda, n_p, seed), Some(&mut eval))?;
        let mut push = |metric: &str, value: f64| table.push(exp, seed, lambda, n_p, metric, value);
        push("tdm_error", aligned_relative_error(&out.baseline.a, &a_true, false))?;
        push("rtdm_error", aligned_relative_error(&out.result.a, &a_true, false))?;
        push("tdm_test_ll", test_ll(&out.baseline)?)?;
        push("rtdm_test_ll", test_ll(&out.result)?)?;
        push("iterations", out.trace.len() as f64)?;
        push("converged", out.converged as u8 as f64)?;
        for (i, v) in curve.iter().enumerate() {
            push(&iter_metric("test_ll", i), *v)?;
        }
        for r in &out.trace.records {
            push(&iter_metric("loss", r.iter), r.loss)?;
        }
    }
    Ok(table)
}

/// Topic transfer from a related prior topic matrix.
pub fn run_transfer(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let exp = ExperimentKind::Transfer.name();
    let mut table = ResultTable::new();
    let (lambda, n_p) = (cfg.rtdm.lambda, cfg.rtdm.n_p);
    let consts = cfg.model_constants();
    for &seed in &cfg.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = cfg.generate_truth(&mut rng)?;
        let a_true = topics(&truth).clone();
        let a_prior = perturb_topics(&mut rng, &a_true, cfg.perturbation);
        table.push(exp, seed, lambda, n_p, "prior_error", aligned_distance(&a_prior, &a_true, false))?;
        for &n_t in &cfg.n_t_grid {
            let x_t = cfg.sample_training(&truth, n_t, &mut rng)?;
            let mut prior_curve = Vec::new();
            let mut eval = |_: usize, res: &DecompositionResult| -> Result<f64> {
                prior_curve.push(aligned_distance(&res.a, &a_prior, false));
                Ok(aligned_distance(&res.a, &a_true, false))
            };
            let reg = cfg.regularizer(Some(a_prior.clone()))?;
            let out = rtdm_run(&x_t, &consts, reg, &rtdm_config(cfg, lambda, n_p, seed), Some(&mut eval))?;
            let eps = out.trace.eval_metrics();
            let mut push = |metric: &str, value: f64| table.push(exp, seed, lambda, n_p, &format!("{metric}@nt={n_t}"), value);
            push("eps_tdm", aligned_distance(&out.baseline.a, &a_true, false))?;
            push("eps_initial", eps.first().copied().unwrap_or(f64::NAN))?;
            push("eps_final", aligned_distance(&out.result.a, &a_true, false))?;
            push("prior_dist_final", aligned_distance(&out.result.a, &a_prior, false))?;
            for (i, (e, p)) in eps.iter().zip(&prior_curve).enumerate() {
                push(&iter_metric("eps", i), *e)?;
                push(&iter_metric("prior_dist", i), *p)?;
            }
        }
    }
    Ok(table)
}

/// Anti-correlation sweep over N_P and λ.
pub fn run_anticorr(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let exp = ExperimentKind::Anticorr.name();
    let mut table = ResultTable::new();
    let consts = cfg.model_constants();
    for &seed in &cfg.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = cfg.generate_truth(&mut rng)?;
        let a_true = topics(&truth).clone();
        let x_t = cfg.sample_training(&truth, cfg.n_t, &mut rng)?;
        let baseline = tdm(&x_t, &consts, &power(cfg, seed))?;
        table.push(exp, seed, 0.0, 0, "unregularized_correlation", anti_correlation_reg(&baseline.a).0)?;
        for &n_p in &cfg.n_p_grid {
            for &lambda in &cfg.lambda_grid {
                let (a, iters) = if lambda == 0.0 {
                    (baseline.a.clone(), 0)
                } else {
                    let out = rtdm_run(&x_t, &consts, cfg.regularizer(None)?, &rtdm_config(cfg, lambda, n_p, seed), None)?;
                    (out.result.a, out.trace.len())
                };
                let mut push = |metric: &str, value: f64| table.push(exp, seed, lambda, n_p, metric, value);
                push("correlation", anti_correlation_reg(&a).0)?;
                push("lambda_per_np", if n_p == 0 { f64::NAN } else { lambda / n_p as f64 })?;
                push("true_error", aligned_distance(&a, &a_true, false))?;
                push("iterations", iters as f64)?;
            }
        }
    }
    Ok(table)
}

fn top_headings(tree: &HeadingTree, a: &ParameterMatrix, seed: u64, lambda: f64, n_p: usize, n: usize) -> Vec<TopHeadingRow> {
    let mut rows = Vec::new();
    for topic in 0..a.ncols() {
        let mut idx: Vec<usize> = (0..a.nrows()).collect();
        idx.sort_by(|&i, &j| a[(j, topic)].total_cmp(&a[(i, topic)]).then(i.cmp(&j)));
        for (rank, &i) in idx.iter().take(n).enumerate() {
            rows.push(TopHeadingRow {
                seed,
                lambda,
                n_p,
                topic,
                rank: rank + 1,
                heading: tree.headings[i].name.clone(),
                code: tree.headings[i].code_string(),
                weight: a[(i, topic)],
            });
        }
    }
    rows
}

/// Tree-distance regularization over a heading taxonomy.
pub fn run_mesh(cfg: &ExperimentConfig) -> Result<(ResultTable, TopHeadingTable)> {
    let exp = ExperimentKind::Mesh.name();
    let tree = cfg.heading_tree()?;
    let reg = cfg.regularizer(None)?;
    let o_star = match &reg {
        Regularizer::TreeDistance { o_star } => o_star.clone(),
        _ => unreachable!("mesh uses the tree regularizer"),
    };
    let consts = cfg.model_constants();
    let mut table = ResultTable::new();
    let mut top = TopHeadingTable::default();
    for &seed in &cfg.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = cfg.generate_truth(&mut rng)?;
        let x_t = cfg.sample_training(&truth, cfg.n_t, &mut rng)?;
        let x_test = sample(&truth, cfg.n_test, &mut rng)?;
        let baseline = tdm(&x_t, &consts, &power(cfg, seed))?;
        for &n_p in &cfg.n_p_grid {
            for &lambda in &cfg.lambda_grid {
                let res = if lambda == 0.0 {
                    baseline.clone()
                } else {
                    rtdm_run(&x_t, &consts, reg.clone(), &rtdm_config(cfg, lambda, n_p, seed), None)?.result
                };
                table.push(exp, seed, lambda, n_p, "tree_reg", tree_reg(&res.a, &o_star)?.0)?;
                table.push(exp, seed, lambda, n_p, "heldout_ll", heldout_eval(&x_test, &cfg.fitted_model(&res))?)?;
                top.rows.extend(top_headings(&tree, &res.a, seed, lambda, n_p, cfg.top_n));
            }
        }
    }
    Ok((table, top))
}

/// Dirichlet sparsity regularization on noisy counts.
pub fn run_sparsity(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let exp = ExperimentKind::Sparsity.name();
    let mut table = ResultTable::new();
    let (lambda, n_p) = (cfg.rtdm.lambda, cfg.rtdm.n_p);
    let consts = cfg.model_constants();
    let reg = cfg.regularizer(None)?;
    for &seed in &cfg.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = cfg.generate_truth(&mut rng)?;
        let a_true = topics(&truth).clone();
        let x_t = cfg.sample_training(&truth, cfg.n_t, &mut rng)?;
        let mut reg_curve = Vec::new();
        let mut eval = |_: usize, res: &DecompositionResult| -> Result<f64> {
            reg_curve.push(reg.value(&res.a)?);
            Ok(aligned_distance(&res.a, &a_true, false))
        };
        let out = rtdm_run(&x_t, &consts, reg.clone(), &rtdm_config(cfg, lambda, n_p, seed), Some(&mut eval))?;
        let mut push = |metric: &str, value: f64| table.push(exp, seed, lambda, n_p, metric, value);
        push("tdm_error", aligned_distance(&out.baseline.a, &a_true, false))?;
        push("rtdm_error", aligned_distance(&out.result.a, &a_true, false))?;
        push("tdm_reg", reg.value(&out.baseline.a)?)?;
        push("rtdm_reg", reg.value(&out.result.a)?)?;
        push("tdm_nonzero", mean_nonzero(&out.baseline.a))?;
        push("rtdm_nonzero", mean_nonzero(&out.result.a))?;
        push("true_nonzero", mean_nonzero(&a_true))?;
        push("iterations", out.trace.len() as f64)?;
        for (i, (e, r)) in out.trace.eval_metrics().iter().zip(&reg_curve).enumerate() {
            push(&iter_metric("error", i), *e)?;
            push(&iter_metric("reg", i), *r)?;
        }
    }
    Ok(table)
}
