use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use rtdm_core::data::Dataset;
use rtdm_core::models::{gmm_loglik, gmm_sample, lda_sample, sample_dirichlet, GmmModel, LdaModel, Model};
use rtdm_core::moments::ModelConstants;
use rtdm_core::regularizers::Regularizer;
use rtdm_core::rtdm::{GradientMode, RtdmConfig, RtdmObjective};

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

fn gmm_instance(seed: u64) -> (Dataset, ModelConstants) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 3.0).unwrap();
    let a = DMatrix::from_fn(4, 2, |_, _| normal.sample(&mut rng));
    let model = GmmModel { a, weights: vec![0.4, 0.6], sigma2: 0.5 };
    (gmm_sample(&model, 60, seed + 1000).unwrap(), ModelConstants::gmm(2, None))
}

fn lda_instance(seed: u64) -> (Dataset, ModelConstants) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<f64> = (0..2).flat_map(|_| sample_dirichlet(&mut rng, &[0.5; 8])).collect();
    let model = LdaModel { a: DMatrix::from_column_slice(8, 2, &cols), alpha_b: 0.5, doc_length: 12 };
    (lda_sample(&model, 80, seed + 1000).unwrap(), ModelConstants::lda(2, 0.5))
}

fn regularizers(d: usize, k: usize, seed: u64) -> Vec<Regularizer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 77);
    let prior = DMatrix::from_fn(d, k, |_, _| Normal::new(0.0f64, 1.0).unwrap().sample(&mut rng).abs() / d as f64);
    let o_star = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { 1.0 / (1 + (i as i64 - j as i64).unsigned_abs()) as f64 });
    vec![
        Regularizer::GaussianPrior { sigma_m2: 2.0 },
        Regularizer::TransferL2 { prior },
        Regularizer::AntiCorrelation,
        Regularizer::TreeDistance { o_star },
        Regularizer::DirichletSparsity { alpha_a: 0.3 },
    ]
}

fn check(x: &Dataset, consts: &ModelConstants, reg: Regularizer, lambda: f64, seed: u64) -> f64 {
    let cfg = RtdmConfig { lambda, n_p: 3, seed, ..Default::default() };
    let obj = RtdmObjective::new(x, consts, reg, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = obj.initial_params(3, &mut rng).unwrap();
    let (_, adj) = obj.loss_gradient(&p, GradientMode::Adjoint).unwrap();
    let (_, fd) = obj.loss_gradient(&p, GradientMode::FiniteDifference).unwrap();
    rel_err(&adj, &fd)
}

#[test]
fn gmm_adjoint_matches_finite_differences_for_every_regularizer() {
    for seed in 0..10 {
        let (x, c) = gmm_instance(seed);
        for reg in regularizers(4, 2, seed) {
            let name = reg.name();
            let e = check(&x, &c, reg, 1.0, seed);
            assert!(e < 1e-4, "gmm seed {seed} {name}: relative error {e:e}");
        }
    }
}

#[test]
fn lda_adjoint_matches_finite_differences_for_every_regularizer() {
    for seed in 0..10 {
        let (x, c) = lda_instance(seed);
        for reg in regularizers(8, 2, seed) {
            let name = reg.name();
            let e = check(&x, &c, reg, 10.0, seed);
            assert!(e < 1e-4, "lda seed {seed} {name}: relative error {e:e}");
        }
    }
}

#[test]
fn zero_lambda_gradient_is_likelihood_gradient() {
    let (x, c) = gmm_instance(3);
    let cfg = RtdmConfig { lambda: 0.0, n_p: 4, ..Default::default() };
    let obj = RtdmObjective::new(&x, &c, Regularizer::AntiCorrelation, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = obj.initial_params(4, &mut rng).unwrap();
    let (value, g) = obj.loss_gradient(&p, GradientMode::Adjoint).unwrap();
    let Model::Gmm(m) = obj.training_model() else { panic!("expected a GMM") };
    let (ll, ll_grad) = gmm_loglik(&Dataset::new(p.clone()), m).unwrap();
    assert_eq!(value.loss, -ll);
    assert!((g + ll_grad).amax() < 1e-10);
}

#[test]
fn loss_is_linear_in_lambda() {
    let (x, c) = lda_instance(2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = RtdmConfig { lambda: 3.0, n_p: 5, ..Default::default() };
    let o1 = RtdmObjective::new(&x, &c, Regularizer::AntiCorrelation, &base).unwrap();
    let p = o1.initial_params(5, &mut rng).unwrap();
    let v1 = o1.loss(&p).unwrap();
    let o2 = RtdmObjective::new(&x, &c, Regularizer::AntiCorrelation, &RtdmConfig { lambda: 6.0, ..base }).unwrap();
    let v2 = o2.loss(&p).unwrap();
    assert_eq!(v1.data_term, v2.data_term);
    assert!((v2.reg_term - 2.0 * v1.reg_term).abs() <= 1e-12 * v1.reg_term.abs());
}
