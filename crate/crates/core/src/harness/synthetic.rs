//! Synthetic parameters and data for the experiments.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::data::{Dataset, ParameterMatrix};
use crate::decomposition::project_columns;
use crate::error::{Error, Result};
use crate::models::sample_dirichlet;
use crate::regularizers::{Heading, HeadingTree};

/// Means with i.i.d. `N(0, σ_m²)` entries.
pub fn gaussian_means<R: Rng + ?Sized>(rng: &mut R, d: usize, k: usize, sigma_m2: f64) -> Result<ParameterMatrix> {
    let normal = Normal::new(0.0, sigma_m2.sqrt()).map_err(|e| Error::Config(format!("sigma_m2: {e}")))?;
    Ok(DMatrix::from_fn(d, k, |_, _| normal.sample(rng)))
}

/// Topics drawn column-wise from `Dirichlet(concentration · 1_D)`.
pub fn dirichlet_topics<R: Rng + ?Sized>(rng: &mut R, d: usize, k: usize, concentration: f64) -> ParameterMatrix {
    let alpha = vec![concentration; d];
    let mut a = DMatrix::zeros(d, k);
    for j in 0..k {
        a.set_column(j, &DVector::from_vec(sample_dirichlet(rng, &alpha)));
    }
    a
}

/// Simplex projection of `a + scale · N(0, 1)`.
pub fn perturb_topics<R: Rng + ?Sized>(rng: &mut R, a: &ParameterMatrix, scale: f64) -> ParameterMatrix {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let noisy = a.map(|v| v + scale * normal.sample(rng));
    project_columns(&noisy)
}

/// Adds independent `Poisson(rate)` counts to every entry.
pub fn add_poisson_noise<R: Rng + ?Sized>(rng: &mut R, x: &Dataset, rate: f64) -> Result<Dataset> {
    if rate == 0.0 {
        return Ok(x.clone());
    }
    let poisson = Poisson::new(rate).map_err(|e| Error::Config(format!("poisson rate: {e}")))?;
    Ok(Dataset::new(x.x.map(|c| c + poisson.sample(rng))))
}

/// Random heading tree with `n` headings under `roots` top-level codes and at most `max_depth` levels.
/// A depth limit of one makes every heading top-level.
pub fn random_heading_tree<R: Rng + ?Sized>(rng: &mut R, n: usize, roots: usize, max_depth: usize) -> HeadingTree {
    let roots = if max_depth <= 1 { n } else { roots.clamp(1, n.max(1)) };
    let mut codes: Vec<Vec<String>> = (0..roots).map(|r| vec![format!("C{:02}", r + 1)]).collect();
    let mut children: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    while codes.len() < n {
        let parent = codes[rng.random_range(0..codes.len())].clone();
        if parent.len() >= max_depth {
            continue;
        }
        let count = children.entry(parent.clone()).or_insert(0);
        *count += 1;
        let mut code = parent;
        code.push(format!("{:03}", *count));
        codes.push(code);
    }
    let headings = codes
        .into_iter()
        .enumerate()
        .map(|(i, code)| Heading {
            name: format!("Concept {}", i + 1),
            code,
        })
        .collect();
    HeadingTree { headings }
}

/// Topics concentrated on tree neighborhoods: each topic picks a center heading
/// and weights every heading by `exp(−distance/scale)` times Dirichlet noise.
pub fn tree_local_topics<R: Rng + ?Sized>(rng: &mut R, tree: &HeadingTree, k: usize, scale: f64) -> ParameterMatrix {
    let d = tree.len();
    let mut a = DMatrix::zeros(d, k);
    for j in 0..k {
        let center = rng.random_range(0..d);
        let noise = sample_dirichlet(rng, &vec![1.0; d]);
        let mut col: Vec<f64> = (0..d)
            .map(|i| (-(tree.distance(center, i) as f64) / scale).exp() * noise[i])
            .collect();
        let total: f64 = col.iter().sum();
        col.iter_mut().for_each(|v| *v /= total);
        a.set_column(j, &DVector::from_vec(col));
    }
    a
}
