use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rtdm_core::data::Dataset;
use rtdm_core::linalg::Tensor3;
use rtdm_core::models::{gmm_sample, lda_sample, sample_dirichlet, GmmModel, LdaModel};
use rtdm_core::moments::{combine_moments, gmm_moments, lda_doc_statistics, lda_moments, ModelConstants};

/// Expands counts into a list of word positions.
fn positions(c: &[usize]) -> Vec<usize> {
    c.iter().enumerate().flat_map(|(w, &n)| std::iter::repeat_n(w, n)).collect()
}

fn brute_force(c: &[usize]) -> (DMatrix<f64>, Tensor3) {
    let d = c.len();
    let words = positions(c);
    let ell = words.len();
    let mut pairs = DMatrix::zeros(d, d);
    let mut triples = Tensor3::zeros(d);
    let (mut n2, mut n3) = (0.0, 0.0);
    for p in 0..ell {
        for q in 0..ell {
            if p == q {
                continue;
            }
            pairs[(words[p], words[q])] += 1.0;
            n2 += 1.0;
            for r in 0..ell {
                if r == p || r == q {
                    continue;
                }
                triples.add_at(words[p], words[q], words[r], 1.0);
                n3 += 1.0;
            }
        }
    }
    triples.scale_mut(1.0 / n3);
    (pairs / n2, triples)
}

fn random_counts(rng: &mut ChaCha8Rng, d: usize) -> Vec<usize> {
    loop {
        let c: Vec<usize> = (0..d).map(|_| if rng.random_bool(0.5) { rng.random_range(0..4) } else { 0 }).collect();
        if c.iter().sum::<usize>() >= 3 {
            return c;
        }
    }
}

#[test]
fn doc_statistics_equal_position_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let d = rng.random_range(2..8);
        let c = random_counts(&mut rng, d);
        let stats = lda_doc_statistics(&c.iter().map(|&v| v as f64).collect::<Vec<_>>()).unwrap();
        let (pairs, triples) = brute_force(&c);
        assert!((stats.pairs - pairs).amax() < 1e-12);
        let diff = stats.triples.as_slice().iter().zip(triples.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12, "{c:?}: {diff:e}");
    }
}

#[test]
fn three_distinct_words_give_uniform_off_diagonal_pairs() {
    let stats = lda_doc_statistics(&[1.0, 1.0, 1.0, 0.0]).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let expected = if i != j && i < 3 && j < 3 { 1.0 / 6.0 } else { 0.0 };
            assert!((stats.pairs[(i, j)] - expected).abs() < 1e-15);
        }
    }
}

#[test]
fn short_documents_are_rejected() {
    assert!(lda_doc_statistics(&[1.0, 1.0, 1.0]).is_ok());
    assert!(lda_doc_statistics(&[1.0, 0.5, 0.0]).is_err());
}

fn gmm_data(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-2.0..2.0));
    gmm_sample(&GmmModel { a, weights: vec![0.2, 0.3, 0.5], sigma2: 0.7 }, n, seed).unwrap()
}

fn lda_data(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<f64> = (0..3).flat_map(|_| sample_dirichlet(&mut rng, &[0.4; 9])).collect();
    lda_sample(&LdaModel { a: DMatrix::from_column_slice(9, 3, &cols), alpha_b: 0.7, doc_length: 8 }, n, seed).unwrap()
}

fn max_diff3(a: &Tensor3, b: &Tensor3) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn combining_gmm_moments_equals_recomputing_on_concatenation() {
    let (xt, xp) = (gmm_data(1, 40), gmm_data(2, 15));
    let joint = gmm_moments(&xt.concat(&xp).unwrap(), 0.7).unwrap();
    let combined = combine_moments(&gmm_moments(&xt, 0.7).unwrap(), &gmm_moments(&xp, 0.7).unwrap()).unwrap();
    assert_eq!(combined.n, 55);
    assert!((combined.m1 - &joint.m1).amax() < 1e-12);
    assert!((combined.m2 - &joint.m2).amax() < 1e-12);
    assert!(max_diff3(combined.m3.as_ref().unwrap(), joint.m3.as_ref().unwrap()) < 1e-12);
}

#[test]
fn combining_lda_moments_equals_recomputing_on_concatenation() {
    let consts = ModelConstants::lda(3, 0.7);
    let (xt, xp) = (lda_data(3, 50), lda_data(4, 20));
    let joint = lda_moments(&xt.concat(&xp).unwrap(), &consts).unwrap();
    let combined = combine_moments(&lda_moments(&xt, &consts).unwrap(), &lda_moments(&xp, &consts).unwrap()).unwrap();
    assert!((combined.m2 - &joint.m2).amax() < 1e-12);
    assert!(max_diff3(combined.m3.as_ref().unwrap(), joint.m3.as_ref().unwrap()) < 1e-12);
}

#[test]
fn gmm_second_moment_matches_population_form() {
    let a = DMatrix::from_row_slice(5, 2, &[2.0, -1.0, 0.5, 1.5, -1.0, 0.0, 0.0, 2.0, 1.0, -0.5]);
    let weights = [0.35, 0.65];
    let x = gmm_sample(&GmmModel { a: a.clone(), weights: weights.to_vec(), sigma2: 0.5 }, 200_000, 9).unwrap();
    let m = gmm_moments(&x, 0.5).unwrap();
    let mut expected = DMatrix::zeros(5, 5);
    for k in 0..2 {
        expected += a.column(k) * a.column(k).transpose() * weights[k];
    }
    let rel = (&m.m2 - &expected).norm() / expected.norm();
    assert!(rel < 0.02, "relative error {rel}");
}

#[test]
fn lda_second_moment_matches_population_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cols: Vec<f64> = (0..4).flat_map(|_| sample_dirichlet(&mut rng, &[0.3; 20])).collect();
    let a = DMatrix::from_column_slice(20, 4, &cols);
    let consts = ModelConstants::lda(4, 1.0);
    let docs = lda_sample(&LdaModel { a: a.clone(), alpha_b: 1.0, doc_length: 30 }, 100_000, 6).unwrap();
    let m = lda_moments(&docs, &consts).unwrap();
    let expected = &a * a.transpose() * consts.lda_beta();
    let rel = (&m.m2 - &expected).norm() / expected.norm();
    assert!(rel < 0.02, "relative error {rel}");
}

fn asymmetry3(t: &Tensor3) -> f64 {
    let n = t.dim();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let v = t.get(i, j, k);
                for p in [t.get(i, k, j), t.get(j, i, k), t.get(j, k, i), t.get(k, i, j), t.get(k, j, i)] {
                    worst = worst.max((v - p).abs() / v.abs().max(1e-300).max(t.frobenius_norm()));
                }
            }
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn moments_are_symmetric(seed in 0u64..1000, n in 3usize..40, lda in any::<bool>()) {
        let m = if lda {
            lda_moments(&lda_data(seed, n), &ModelConstants::lda(3, 0.7)).unwrap()
        } else {
            gmm_moments(&gmm_data(seed, n), 0.7).unwrap()
        };
        prop_assert!((&m.m2 - m.m2.transpose()).amax() <= 1e-12 * m.m2.amax().max(1.0));
        prop_assert!(asymmetry3(m.m3.as_ref().unwrap()) <= 1e-12);
    }

    #[test]
    fn soft_count_statistics_reduce_to_integer_ones(c in prop::collection::vec(0usize..4, 3..7)) {
        prop_assume!(c.iter().sum::<usize>() >= 3);
        let stats = lda_doc_statistics(&c.iter().map(|&v| v as f64).collect::<Vec<_>>()).unwrap();
        let (pairs, triples) = brute_force(&c);
        prop_assert!((stats.pairs - pairs).amax() < 1e-12);
        prop_assert!(max_diff3(&stats.triples, &triples) < 1e-12);
        let freq = DVector::from_iterator(c.len(), c.iter().map(|&v| v as f64)) / c.iter().sum::<usize>() as f64;
        prop_assert!((stats.word_freq - freq).amax() < 1e-15);
    }

    #[test]
    fn combining_with_no_pseudo_weight_is_identity(seed in 0u64..1000) {
        let mt = gmm_moments(&gmm_data(seed, 12), 0.7).unwrap();
        let mut mp = gmm_moments(&gmm_data(seed + 1, 5), 0.7).unwrap();
        mp.n = 0;
        let c = combine_moments(&mt, &mp).unwrap();
        prop_assert_eq!(c.m2, mt.m2);
        prop_assert_eq!(c.n, mt.n);
    }
}
