//! Robust tensor power method with deflation on a symmetric `K × K × K` tensor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Tensor3;

/// Below this norm the update `T(I, θ, θ)` is treated as zero and `θ` is kept.
pub(crate) const ZERO_UPDATE_NORM: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerOptions {
    pub restarts: usize,
    pub iters: usize,
    pub polish: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions {
            restarts: 15,
            iters: 60,
            polish: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub lambda: f64,
    pub v: Vec<f64>,
}

pub type EigenpairList = Vec<Eigenpair>;

/// One extraction: the tensor it ran on and the winning restart's full path.
#[derive(Debug, Clone)]
pub(crate) struct Extraction {
    pub tensor: Tensor3,
    /// `θ_0` (frozen restart winner) through `θ_{iters+polish}`, before any sign flip.
    pub path: Vec<Vec<f64>>,
    /// `+1` or `−1`: sign applied to make λ nonnegative.
    pub sign: f64,
    pub lambda: f64,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct PowerTrace {
    /// In extraction order.
    pub extractions: Vec<Extraction>,
    /// `order[r]` is the extraction reported at rank `r` (descending λ).
    pub order: Vec<usize>,
    pub residual: Tensor3,
}

/// One power update `θ ← T(I, θ, θ)/‖T(I, θ, θ)‖`.
pub(crate) fn power_update(t: &Tensor3, theta: &[f64]) -> Vec<f64> {
    let u = t.contract_last_two(theta, theta);
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < ZERO_UPDATE_NORM {
        return theta.to_vec();
    }
    u.into_iter().map(|x| x / norm).collect()
}

fn random_unit(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..k).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn tensor_power_method(t: &Tensor3, k: usize, opts: &PowerOptions) -> Result<EigenpairList> {
    let trace = tensor_power_method_traced(t, k, opts)?;
    Ok(trace
        .order
        .iter()
        .map(|&e| Eigenpair {
            lambda: trace.extractions[e].lambda,
            v: trace.extractions[e].v.clone(),
        })
        .collect())
}

pub(crate) fn tensor_power_method_traced(t: &Tensor3, k: usize, opts: &PowerOptions) -> Result<PowerTrace> {
    if !t.is_finite() {
        return Err(Error::Numeric("tensor has non-finite entries".into()));
    }
    if opts.restarts == 0 || opts.iters == 0 {
        return Err(Error::Config("power method needs at least one restart and one iteration".into()));
    }
    let dim = t.dim();
    if k > dim {
        return Err(Error::Shape(format!("cannot extract {k} components from a {dim}-dimensional tensor")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut current = t.clone();
    let mut extractions = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for _ in 0..opts.restarts {
            let init = random_unit(&mut rng, dim);
            let mut theta = init.clone();
            for _ in 0..opts.iters {
                theta = power_update(&current, &theta);
            }
            let objective = current.apply3(&theta, &theta, &theta);
            // strict comparison: lowest restart index wins ties
            if best.as_ref().is_none_or(|(b, _)| objective > *b) {
                best = Some((objective, init));
            }
        }
        let (_, init) = best.expect("at least one restart");
        let mut path = Vec::with_capacity(opts.iters + opts.polish + 1);
        path.push(init);
        for _ in 0..opts.iters + opts.polish {
            let next = power_update(&current, path.last().unwrap());
            path.push(next);
        }
        let theta = path.last().unwrap().clone();
        let raw_lambda = current.apply3(&theta, &theta, &theta);
        let sign = if raw_lambda < 0.0 { -1.0 } else { 1.0 };
        let lambda = sign * raw_lambda;
        let v: Vec<f64> = theta.iter().map(|x| sign * x).collect();
        let before = current.clone();
        current.add_cube(-lambda, &v);
        extractions.push(Extraction {
            tensor: before,
            path,
            sign,
            lambda,
            v,
        });
    }
    let mut order: Vec<usize> = (0..extractions.len()).collect();
    order.sort_by(|&a, &b| extractions[b].lambda.total_cmp(&extractions[a].lambda));
    Ok(PowerTrace {
        extractions,
        order,
        residual: current,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_orthogonal_tensor() {
        let mut t = Tensor3::zeros(3);
        let lambdas = [3.0, 2.0, 1.0];
        for (i, l) in lambdas.iter().enumerate() {
            let mut e = vec![0.0; 3];
            e[i] = 1.0;
            t.add_cube(*l, &e);
        }
        for seed in [0, 1, 99] {
            let pairs = tensor_power_method(&t, 3, &PowerOptions { seed, ..Default::default() }).unwrap();
            for (i, p) in pairs.iter().enumerate() {
                assert!((p.lambda - lambdas[i]).abs() < 1e-12, "seed {seed}: {p:?}");
                assert!((p.v[i] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_tensor_gives_zero_eigenvalues() {
        let pairs = tensor_power_method(&Tensor3::zeros(3), 3, &PowerOptions::default()).unwrap();
        assert_eq!(pairs.len(), 3);
        for p in pairs {
            assert_eq!(p.lambda, 0.0);
            let norm: f64 = p.v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_weight_is_sign_flipped() {
        let mut t = Tensor3::zeros(2);
        t.add_cube(-2.0, &[1.0, 0.0]);
        t.add_cube(1.0, &[0.0, 1.0]);
        let pairs = tensor_power_method(&t, 2, &PowerOptions::default()).unwrap();
        assert!(pairs.iter().all(|p| p.lambda >= 0.0));
        assert!((pairs[0].lambda - 2.0).abs() < 1e-12);
        assert!((pairs[0].v[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_tensor_rejected() {
        let mut t = Tensor3::zeros(2);
        t.set(0, 1, 1, f64::NAN);
        assert!(matches!(
            tensor_power_method(&t, 1, &PowerOptions::default()),
            Err(Error::Numeric(_))
        ));
    }
}
