//! Experiment configuration, result tables and the five experiment runners.

mod experiments;
pub mod synthetic;

pub use experiments::{
    run_anticorr, run_experiment, run_gauss_prior, run_mesh, run_sparsity, run_transfer, sample, ExperimentOutput,
    SPARSITY_THRESHOLD,
};

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rtdm::RtdmConfig;

/// Environment variable naming the default directory for experiment output.
pub const OUTPUT_DIR_ENV: &str = "RTDM_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[serde(alias = "GaussPrior")]
    GaussPrior,
    #[serde(alias = "TransferASD", alias = "transfer_asd")]
    Transfer,
    #[serde(alias = "AntiCorr")]
    Anticorr,
    #[serde(alias = "MeshTree")]
    Mesh,
    #[serde(alias = "SparsityNoise")]
    Sparsity,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::GaussPrior,
        ExperimentKind::Transfer,
        ExperimentKind::Anticorr,
        ExperimentKind::Mesh,
        ExperimentKind::Sparsity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GaussPrior => "gauss_prior",
            ExperimentKind::Transfer => "transfer",
            ExperimentKind::Anticorr => "anticorr",
            ExperimentKind::Mesh => "mesh",
            ExperimentKind::Sparsity => "sparsity",
        }
    }

    pub fn from_name(name: &str) -> Result<ExperimentKind> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| {
                let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown experiment {name:?}; expected one of {}", names.join(", ")))
            })
    }

    /// The default configuration shipped with the crate.
    pub fn bundled_config(self) -> &'static str {
        match self {
            ExperimentKind::GaussPrior => include_str!("../../configs/gauss_prior.toml"),
            ExperimentKind::Transfer => include_str!("../../configs/transfer.toml"),
            ExperimentKind::Anticorr => include_str!("../../configs/anticorr.toml"),
            ExperimentKind::Mesh => include_str!("../../configs/mesh.toml"),
            ExperimentKind::Sparsity => include_str!("../../configs/sparsity.toml"),
        }
    }
}

/// Directory the bundled configuration files live in.
pub fn bundled_config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seeds: Vec<u64>,
    /// Observation dimension D.
    pub d: usize,
    /// Number of components K.
    pub k: usize,
    /// Training set size N_T.
    pub n_t: usize,
    pub n_test: usize,
    pub n_t_grid: Vec<usize>,
    pub n_p_grid: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    /// GMM noise variance used to generate data.
    pub sigma2: f64,
    /// Estimate σ² from training data instead of using the generating value.
    pub estimate_sigma2: bool,
    /// Variance of the Gaussian prior on the means.
    pub sigma_m2: f64,
    pub alpha_b: f64,
    pub doc_length: usize,
    /// Dirichlet concentration of generated topics.
    pub topic_concentration: f64,
    /// Dirichlet sparsity parameter α_A.
    pub alpha_a: f64,
    /// Noise scale separating the prior topics from the true ones.
    pub perturbation: f64,
    /// Rate of the Poisson noise added to every count.
    pub poisson_rate: f64,
    pub tree_file: Option<PathBuf>,
    /// Decay length (in tree edges) of tree-local topics.
    pub locality_scale: f64,
    /// Headings listed per topic.
    pub top_n: usize,
    pub rtdm: RtdmConfig,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::GaussPrior,
            seeds: vec![0],
            d: 10,
            k: 4,
            n_t: 200,
            n_test: 1000,
            n_t_grid: Vec::new(),
            n_p_grid: Vec::new(),
            lambda_grid: Vec::new(),
            sigma2: 1.0,
            estimate_sigma2: true,
            sigma_m2: 1.0,
            alpha_b: 1.0,
            doc_length: 20,
            topic_concentration: 1.0,
            alpha_a: 0.1,
            perturbation: 0.01,
            poisson_rate: 0.0,
            tree_file: None,
            locality_scale: 1.0,
            top_n: 8,
            rtdm: RtdmConfig::default(),
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are resolved against its directory.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::from_toml_str(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn bundled(kind: ExperimentKind) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_toml_str(kind.bundled_config())?;
        cfg.resolve_paths(&bundled_config_dir());
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(t) = &self.tree_file {
            if t.is_relative() {
                self.tree_file = Some(base.join(t));
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("d", self.d), ("k", self.k), ("n_t", self.n_t)];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("field `{name}` must be positive")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("field `seeds` must not be empty".into()));
        }
        if self.k > self.d {
            return Err(Error::Config(format!("k = {} exceeds d = {}", self.k, self.d)));
        }
        match self.experiment {
            ExperimentKind::Anticorr | ExperimentKind::Mesh => {
                if self.lambda_grid.is_empty() {
                    return Err(Error::Config("field `lambda_grid` must not be empty".into()));
                }
                if self.n_p_grid.is_empty() {
                    return Err(Error::Config("field `n_p_grid` must not be empty".into()));
                }
            }
            ExperimentKind::Transfer if self.n_t_grid.is_empty() => {
                return Err(Error::Config("field `n_t_grid` must not be empty".into()));
            }
            _ => {}
        }
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Config("field `lambda_grid` must hold nonnegative values".into()));
        }
        if self.experiment == ExperimentKind::Mesh && self.tree_file.is_none() {
            return Err(Error::Config(
                "missing field `tree_file`: the mesh experiment needs a heading-tree file".into(),
            ));
        }
        if matches!(
            self.experiment,
            ExperimentKind::Transfer | ExperimentKind::Anticorr | ExperimentKind::Mesh | ExperimentKind::Sparsity
        ) && self.doc_length < 3
        {
            return Err(Error::Config("field `doc_length` must be at least 3".into()));
        }
        self.rtdm.validate()
    }

    /// Output path: the config's `output`, else `$RTDM_OUTPUT_DIR/<experiment>.csv`, else `./<experiment>.csv`.
    pub fn default_output(&self) -> PathBuf {
        if let Some(p) = &self.output {
            return p.clone();
        }
        let file = format!("{}.csv", self.experiment.name());
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) => PathBuf::from(dir).join(file),
            None => PathBuf::from(file),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: u64,
    pub lambda: f64,
    pub n_p: usize,
    pub metric: String,
    pub value: f64,
}

type RowKey = (String, u64, u64, usize, String);

/// Rows keyed by `(experiment, seed, λ, N_P, metric)`; keys are unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    rows: Vec<ResultRow>,
    keys: HashSet<RowKey>,
}

fn key_of(r: &ResultRow) -> RowKey {
    (r.experiment.clone(), r.seed, r.lambda.to_bits(), r.n_p, r.metric.clone())
}

impl ResultTable {
    pub fn new() -> Self {
        ResultTable::default()
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push_row(&mut self, row: ResultRow) -> Result<()> {
        if !self.keys.insert(key_of(&row)) {
            return Err(Error::Domain(format!(
                "duplicate result key ({}, seed {}, lambda {}, n_p {}, {})",
                row.experiment, row.seed, row.lambda, row.n_p, row.metric
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn push(&mut self, experiment: &str, seed: u64, lambda: f64, n_p: usize, metric: &str, value: f64) -> Result<()> {
        self.push_row(ResultRow {
            experiment: experiment.to_string(),
            seed,
            lambda,
            n_p,
            metric: metric.to_string(),
            value,
        })
    }

    pub fn merge(&mut self, other: ResultTable) -> Result<()> {
        for row in other.rows {
            self.push_row(row)?;
        }
        Ok(())
    }

    pub fn get(&self, seed: u64, lambda: f64, n_p: usize, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.seed == seed && r.lambda.to_bits() == lambda.to_bits() && r.n_p == n_p && r.metric == metric)
            .map(|r| r.value)
    }

    /// First row with the given metric name and seed, whatever λ and N_P.
    pub fn find(&self, seed: u64, metric: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.seed == seed && r.metric == metric)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<ResultTable> {
        let mut table = ResultTable::new();
        for row in csv::Reader::from_reader(reader).deserialize() {
            table.push_row(row?)?;
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<ResultTable> {
        ResultTable::read_csv(std::fs::File::open(path)?)
    }
}

/// One line of a per-topic top-heading listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopHeadingRow {
    pub seed: u64,
    pub lambda: f64,
    pub n_p: usize,
    pub topic: usize,
    pub rank: usize,
    pub heading: String,
    pub code: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopHeadingTable {
    pub rows: Vec<TopHeadingRow>,
}

impl TopHeadingTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<TopHeadingTable> {
        let rows = csv::Reader::from_reader(reader)
            .deserialize()
            .collect::<std::result::Result<Vec<TopHeadingRow>, _>>()?;
        Ok(TopHeadingTable { rows })
    }
}
