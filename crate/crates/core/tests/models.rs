use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rtdm_core::data::Dataset;
use rtdm_core::harness::synthetic::dirichlet_topics;
use rtdm_core::models::{
    gmm_loglik, gmm_sample, heldout_eval, lda_multinomial_loglik, lda_sample, lda_surrogate_loglik,
    lda_topic_mixture_loglik, GmmModel, LdaModel, Model,
};

fn gmm(seed: u64) -> GmmModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GmmModel { a: DMatrix::from_fn(4, 3, |_, _| rng.random_range(-3.0..3.0)), weights: vec![0.2, 0.3, 0.5], sigma2: 0.8 }
}

fn lda(seed: u64) -> LdaModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LdaModel { a: dirichlet_topics(&mut rng, 7, 3, 0.7), alpha_b: 0.5, doc_length: 10 }
}

type LogLik = fn(&Dataset, &LdaModel) -> rtdm_core::Result<(f64, DMatrix<f64>)>;

fn fd_check(x: &Dataset, f: impl Fn(&Dataset) -> (f64, DMatrix<f64>)) {
    let (_, grad) = f(x);
    let h = 1e-5;
    for i in 0..x.x.len() {
        let (mut up, mut down) = (x.clone(), x.clone());
        up.x[i] += h;
        down.x[i] -= h;
        let fd = (f(&up).0 - f(&down).0) / (2.0 * h);
        let err = (fd - grad[i]).abs() / fd.abs().max(1.0);
        assert!(err < 1e-5, "entry {i}: {fd} vs {}", grad[i]);
    }
}

#[test]
fn gmm_loglik_gradients_match_differences() {
    for seed in 0..20 {
        let m = gmm(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
        let x = Dataset::new(DMatrix::from_fn(4, 3, |_, _| rng.random_range(-4.0..4.0)));
        fd_check(&x, |x| gmm_loglik(x, &m).unwrap());
    }
}

#[test]
fn lda_loglik_gradients_match_differences() {
    let variants: [LogLik; 3] = [lda_surrogate_loglik, lda_multinomial_loglik, lda_topic_mixture_loglik];
    for seed in 0..20 {
        let m = lda(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
        let x = Dataset::new(DMatrix::from_fn(7, 2, |_, _| rng.random_range(0.2..3.0)));
        for f in variants {
            fd_check(&x, |x| f(x, &m).unwrap());
        }
    }
}

#[test]
fn correct_model_beats_mismatched_model() {
    for seed in 0..5 {
        let (truth, other) = (gmm(seed), gmm(seed + 100));
        let test = gmm_sample(&truth, 500, seed).unwrap();
        assert!(heldout_eval(&test, &Model::Gmm(truth)).unwrap() > heldout_eval(&test, &Model::Gmm(other)).unwrap());
        let (truth, other) = (lda(seed), lda(seed + 100));
        let test = lda_sample(&truth, 500, seed).unwrap();
        assert!(heldout_eval(&test, &Model::Lda(truth)).unwrap() > heldout_eval(&test, &Model::Lda(other)).unwrap());
    }
}

#[test]
fn point_at_mean_beats_distant_point() {
    let m = GmmModel { a: DMatrix::from_column_slice(2, 1, &[1.0, -1.0]), weights: vec![1.0], sigma2: 0.25 };
    let near = Dataset::from_columns(&[vec![1.0, -1.0]]).unwrap();
    let far = Dataset::from_columns(&[vec![1.0 + 10.0 * 0.5, -1.0]]).unwrap();
    let model = Model::Gmm(m);
    assert!(heldout_eval(&near, &model).unwrap() > heldout_eval(&far, &model).unwrap());
}

#[test]
fn empty_test_set_is_rejected() {
    let model = Model::Gmm(gmm(0));
    assert!(heldout_eval(&Dataset::new(DMatrix::zeros(4, 0)), &model).is_err());
}

#[test]
fn samplers_depend_only_on_seed() {
    assert_eq!(gmm_sample(&gmm(1), 20, 3).unwrap(), gmm_sample(&gmm(1), 20, 3).unwrap());
    assert_ne!(gmm_sample(&gmm(1), 20, 3).unwrap(), gmm_sample(&gmm(1), 20, 4).unwrap());
    assert_eq!(lda_sample(&lda(1), 20, 3).unwrap(), lda_sample(&lda(1), 20, 3).unwrap());
    assert_ne!(lda_sample(&lda(1), 20, 3).unwrap(), lda_sample(&lda(1), 20, 4).unwrap());
}

#[test]
fn lda_documents_have_the_model_length() {
    let docs = lda_sample(&lda(2), 50, 1).unwrap();
    for j in 0..docs.len() {
        assert_eq!(docs.column(j).iter().sum::<f64>(), 10.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn heldout_value_ignores_observation_order(seed in 0u64..10_000, n in 2usize..30) {
        let model = Model::Lda(lda(seed));
        let Model::Lda(m) = &model else { unreachable!() };
        let docs = lda_sample(m, n, seed).unwrap();
        let order: Vec<usize> = (0..n).rev().collect();
        let p = heldout_eval(&docs, &model).unwrap();
        let q = heldout_eval(&docs.select(&order), &model).unwrap();
        prop_assert!((p - q).abs() <= 1e-12 * p.abs());
    }
}
