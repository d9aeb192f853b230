//! Command-line front end: data generation, fitting, regularized fitting,
//! evaluation and the bundled experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rtdm_core::data::Dataset;
use rtdm_core::decomposition::tdm;
use rtdm_core::harness::synthetic::random_heading_tree;
use rtdm_core::harness::{run_experiment, sample, ExperimentConfig, ExperimentKind};
use rtdm_core::models::{heldout_eval, Model};
use rtdm_core::rtdm::rtdm_run;
use rtdm_core::{Error, Result};

#[derive(Parser)]
#[command(name = "rtdm", version, about = "Regularized tensor decomposition for GMMs and LDA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample training and test data from an experiment's generating model.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training data CSV, one observation per row.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        test_out: Option<PathBuf>,
        /// Generating model as JSON.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
    /// Write a random heading tree with the given number of headings.
    GenerateTree {
        #[arg(long)]
        headings: usize,
        #[arg(long, default_value_t = 8)]
        roots: usize,
        #[arg(long, default_value_t = 5)]
        max_depth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plain tensor decomposition.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fitted model as JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Regularized tensor decomposition with the experiment's regularizer.
    Regularize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Prior topics (model JSON) for the transfer regularizer.
        #[arg(long)]
        prior: Option<PathBuf>,
        /// Per-iteration trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Held-out log-likelihood per observation of a fitted model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one of the bundled experiments.
    Experiment {
        /// gauss_prior, transfer, anticorr, mesh or sparsity.
        name: String,
        /// Defaults to the bundled configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run a single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Result CSV; defaults to `$RTDM_OUTPUT_DIR/<name>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn save_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn seeded(cfg: &ExperimentConfig, seed: u64) -> ExperimentConfig {
    let mut cfg = cfg.clone();
    cfg.rtdm.seed = seed;
    cfg.rtdm.power.seed = seed;
    cfg
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            config,
            seed,
            out,
            test_out,
            truth_out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            cfg.validate()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = cfg.generate_truth(&mut rng)?;
            cfg.sample_training(&truth, cfg.n_t, &mut rng)?.save(&out)?;
            if let Some(path) = test_out {
                sample(&truth, cfg.n_test, &mut rng)?.save(&path)?;
            }
            if let Some(path) = truth_out {
                save_json(&truth, &path)?;
            }
        }
        Command::GenerateTree {
            headings,
            roots,
            max_depth,
            seed,
            out,
        } => {
            if headings == 0 || max_depth == 0 {
                return Err(Error::Config("`headings` and `max_depth` must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tree = random_heading_tree(&mut rng, headings, roots, max_depth);
            std::fs::write(&out, tree.to_text())?;
        }
        Command::Fit { config, data, seed, out } => {
            let cfg = seeded(&ExperimentConfig::load(&config)?, seed);
            cfg.validate()?;
            let x = Dataset::load(&data)?;
            let res = tdm(&x, &cfg.model_constants(), &cfg.rtdm.power)?;
            save_json(&cfg.fitted_model(&res), &out)?;
        }
        Command::Regularize {
            config,
            data,
            seed,
            out,
            prior,
            trace,
        } => {
            let cfg = seeded(&ExperimentConfig::load(&config)?, seed);
            cfg.validate()?;
            let x = Dataset::load(&data)?;
            let prior = match prior {
                Some(path) => Some(match load_model(&path)? {
                    Model::Gmm(m) => m.a,
                    Model::Lda(m) => m.a,
                }),
                None => None,
            };
            let output = rtdm_run(&x, &cfg.model_constants(), cfg.regularizer(prior)?, &cfg.rtdm, None)?;
            save_json(&cfg.fitted_model(&output.result), &out)?;
            if let Some(path) = trace {
                output.trace.save(&path)?;
            }
        }
        Command::Eval { model, data, out } => {
            let value = heldout_eval(&Dataset::load(&data)?, &load_model(&model)?)?;
            match out {
                Some(path) => std::fs::write(path, format!("metric,value\nheldout_ll,{value}\n"))?,
                None => println!("{value}"),
            }
        }
        Command::Experiment { name, config, seed, out } => {
            let kind = ExperimentKind::from_name(&name)?;
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::bundled(kind)?,
            };
            if cfg.experiment != kind {
                return Err(Error::Config(format!(
                    "config is for experiment `{}`, not `{}`",
                    cfg.experiment.name(),
                    kind.name()
                )));
            }
            if let Some(seed) = seed {
                cfg.seeds = vec![seed];
            }
            let path = out.unwrap_or_else(|| cfg.default_output());
            for written in run_experiment(&cfg)?.write(&path)? {
                eprintln!("wrote {}", written.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
