use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rtdm_core::data::Dataset;
use rtdm_core::decomposition::aligned_distance;
use rtdm_core::harness::synthetic::dirichlet_topics;
use rtdm_core::models::{gmm_sample, lda_sample, GmmModel, LdaLikelihood, LdaModel};
use rtdm_core::moments::ModelConstants;
use rtdm_core::regularizers::Regularizer;
use rtdm_core::rtdm::{adam_step, rtdm_run, AdamConfig, AdamState, RtdmConfig};

fn gmm_data(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-3.0..3.0));
    gmm_sample(&GmmModel { a, weights: vec![0.4, 0.6], sigma2: 0.5 }, n, seed + 1).unwrap()
}

fn lda_data(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = dirichlet_topics(&mut rng, 12, 3, 0.3);
    lda_sample(&LdaModel { a, alpha_b: 0.5, doc_length: 15 }, n, seed + 1).unwrap()
}

fn cfg(lambda: f64, n_p: usize, max_iters: usize) -> RtdmConfig {
    RtdmConfig { lambda, n_p, max_iters, adam: AdamConfig { step_size: 0.02, ..Default::default() }, ..Default::default() }
}

#[test]
fn no_pseudo_data_returns_baseline() {
    let x = gmm_data(1, 200);
    let out = rtdm_run(&x, &ModelConstants::gmm(2, None), Regularizer::AntiCorrelation, &cfg(1.0, 0, 10), None).unwrap();
    assert_eq!(out.result.a, out.baseline.a);
    assert!(out.trace.is_empty());
    assert!(out.converged);
    assert_eq!(out.pseudo.len(), 0);
}

#[test]
fn zero_weight_stays_near_baseline() {
    let (n_t, n_p) = (500, 10);
    let x = gmm_data(2, n_t);
    let out = rtdm_run(&x, &ModelConstants::gmm(2, None), Regularizer::AntiCorrelation, &cfg(0.0, n_p, 100), None).unwrap();
    let shift = aligned_distance(&out.result.a, &out.baseline.a, false) / out.baseline.a.norm();
    assert!(shift < 3.0 * n_p as f64 / (n_t + n_p) as f64, "relative shift {shift}");
}

#[test]
fn identical_inputs_give_identical_traces() {
    let x = lda_data(3, 150);
    let consts = ModelConstants::lda(3, 0.5);
    let c = RtdmConfig { lda_likelihood: LdaLikelihood::Multinomial, ..cfg(5.0, 5, 15) };
    let run = || {
        let out = rtdm_run(&x, &consts, Regularizer::AntiCorrelation, &c, None).unwrap();
        let mut buf = Vec::new();
        out.trace.write_csv(&mut buf).unwrap();
        (buf, out.result.a)
    };
    assert_eq!(run(), run());
}

#[test]
fn cached_training_moments_match_recomputation() {
    let cases = [
        (gmm_data(4, 120), ModelConstants::gmm(2, None), Regularizer::GaussianPrior { sigma_m2: 4.0 }),
        (lda_data(5, 120), ModelConstants::lda(3, 0.5), Regularizer::DirichletSparsity { alpha_a: 0.5 }),
    ];
    for (x, consts, reg) in cases {
        let cached = rtdm_run(&x, &consts, reg.clone(), &cfg(1.0, 4, 12), None).unwrap();
        let fresh = rtdm_run(&x, &consts, reg, &RtdmConfig { cache_training_moments: false, ..cfg(1.0, 4, 12) }, None).unwrap();
        assert_eq!(cached.trace.len(), fresh.trace.len());
        for (p, q) in cached.trace.records.iter().zip(&fresh.trace.records) {
            assert!((p.loss - q.loss).abs() <= 1e-10 * p.loss.abs().max(1.0), "iter {}: {} vs {}", p.iter, p.loss, q.loss);
        }
    }
}

#[test]
fn loss_rarely_increases_on_a_well_conditioned_instance() {
    let x = gmm_data(6, 400);
    let out = rtdm_run(&x, &ModelConstants::gmm(2, None), Regularizer::GaussianPrior { sigma_m2: 4.0 }, &cfg(0.5, 10, 100), None).unwrap();
    let losses = out.trace.losses();
    let ups = losses.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(ups as f64 <= 0.05 * (losses.len() - 1) as f64, "{ups} increases in {} steps", losses.len() - 1);
}

#[test]
fn trace_components_add_up() {
    let x = gmm_data(7, 150);
    let out = rtdm_run(&x, &ModelConstants::gmm(2, None), Regularizer::AntiCorrelation, &cfg(2.0, 5, 20), None).unwrap();
    for r in &out.trace.records {
        assert!((r.data_term + r.reg_term - r.loss).abs() <= 1e-10 * r.loss.abs().max(1.0));
    }
    let mut buf = Vec::new();
    out.trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("iter,loss,data_term,reg_term,delta_xp,eval_metric\n"));
    assert_eq!(text.lines().count(), out.trace.len() + 1);
}

#[test]
fn hitting_the_iteration_cap_is_not_an_error() {
    let x = gmm_data(8, 100);
    let out = rtdm_run(&x, &ModelConstants::gmm(2, None), Regularizer::AntiCorrelation, &cfg(1.0, 5, 3), None).unwrap();
    assert!(!out.converged);
    assert_eq!(out.trace.len(), 3);
}

#[test]
fn evaluation_hook_sees_every_iteration() {
    let x = gmm_data(9, 100);
    let mut seen = Vec::new();
    let mut hook = |i: usize, _: &rtdm_core::decomposition::DecompositionResult| -> rtdm_core::Result<f64> {
        seen.push(i);
        Ok(i as f64)
    };
    let out = rtdm_run(&x, &ModelConstants::gmm(2, None), Regularizer::AntiCorrelation, &cfg(1.0, 3, 5), Some(&mut hook)).unwrap();
    assert_eq!(out.trace.eval_metrics(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    assert_eq!(seen, vec![0, 1, 2, 3, 4]);
}

#[test]
fn invalid_configs_are_rejected() {
    let x = gmm_data(1, 50);
    let consts = ModelConstants::gmm(2, None);
    for bad in [
        RtdmConfig { lambda: -1.0, ..Default::default() },
        RtdmConfig { epsilon: 0.0, ..Default::default() },
        RtdmConfig { max_iters: 0, ..Default::default() },
        RtdmConfig { adam: AdamConfig { step_size: 0.0, ..Default::default() }, ..Default::default() },
    ] {
        let err = rtdm_run(&x, &consts, Regularizer::AntiCorrelation, &bad, None).unwrap_err();
        assert!(matches!(err, rtdm_core::Error::Config(_)), "{err}");
    }
}

#[test]
fn adam_zero_gradient_leaves_variables_unchanged() {
    let x = DMatrix::from_element(2, 2, 1.5);
    let mut state = AdamState::new(2, 2);
    assert_eq!(adam_step(&x, &DMatrix::zeros(2, 2), &mut state, &AdamConfig::default()).unwrap(), x);
}

#[test]
fn adam_constant_gradient_moves_by_the_step_size() {
    let cfg = AdamConfig { step_size: 0.1, ..Default::default() };
    let mut x = DMatrix::from_element(1, 2, 0.0);
    let g = DMatrix::from_row_slice(1, 2, &[3.0, -0.002]);
    let mut state = AdamState::new(1, 2);
    let mut last = x.clone();
    for _ in 0..2000 {
        last = x.clone();
        x = adam_step(&x, &g, &mut state, &cfg).unwrap();
    }
    let step = &x - &last;
    assert!((step[0] + 0.1).abs() < 1e-6 && (step[1] - 0.1).abs() < 1e-4, "{step}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adam_first_step_opposes_the_gradient(g in prop::collection::vec(-10.0f64..10.0, 4)) {
        let grad = DMatrix::from_column_slice(2, 2, &g);
        let x = DMatrix::zeros(2, 2);
        let mut state = AdamState::new(2, 2);
        let next = adam_step(&x, &grad, &mut state, &AdamConfig::default()).unwrap();
        for i in 0..4 {
            if g[i].abs() > 1e-6 {
                prop_assert_eq!(next[i].signum(), -g[i].signum());
            }
        }
    }
}
