use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use smagda::linalg::{norm, spectral_norm, DenseMatrix};
use smagda::ncpl::NcplGame;
use smagda::problem::{check_gradients, grad_x_exact, grad_x_stoch, grad_y_exact, grad_y_stoch, LinearProblem, DEFAULT_FD_STEP};
use smagda::rng::{keyed_stream, standard_normal, uniform_box, StreamTag};
use smagda::MinimaxProblem;

fn random_symmetric(n: usize, seed: u64) -> DenseMatrix {
    let mut rng = keyed_stream(seed, 0, StreamTag::Check, 0);
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = standard_normal(&mut rng);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

#[test]
fn spectral_norm_matches_eigendecomposition() {
    for seed in 0..20 {
        let a = random_symmetric(30, seed);
        let m = DMatrix::from_row_slice(30, 30, a.as_slice());
        let eig = SymmetricEigen::new(m);
        let oracle = eig.eigenvalues.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
        let got = spectral_norm(&a).unwrap();
        assert!((got - oracle).abs() <= 1e-9 * oracle, "seed {seed}: {got} vs {oracle}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectral_norm_is_homogeneous(seed in 0u64..1000, c in -50.0f64..50.0) {
        prop_assume!(c.abs() > 1e-3);
        let a = random_symmetric(8, seed);
        let base = spectral_norm(&a).unwrap();
        let scaled = spectral_norm(&a.scaled(c)).unwrap();
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * scaled, "{} vs {}", scaled, c.abs() * base);
    }
}

#[test]
fn gradient_checks() {
    let game = NcplGame::make(5, 5, 1.0, 1.0, 1.0, 1.0, 0).unwrap();
    let report = check_gradients(&game, 100, DEFAULT_FD_STEP, 1e-5, 1).unwrap();
    assert!(report.passed, "{report:?}");

    let lin = LinearProblem { a: vec![1.5, -2.0, 0.25], b: vec![3.0, -1.0] };
    let report = check_gradients(&lin, 100, DEFAULT_FD_STEP, 1e-10, 2).unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn ncpl_noise_is_unbiased_with_unit_variance() {
    let game = NcplGame::make(6, 6, 1.0, 1.0, 1.0, 1.0, 3).unwrap();
    let x = [0.3, -1.0, 2.0, 0.0, 0.5, -0.7];
    let y = [1.0, 0.2, -0.4, 0.9, -2.0, 0.1];
    let exact_x = grad_x_exact(&game, &x, &y).unwrap();
    let exact_y = grad_y_exact(&game, &x, &y).unwrap();
    let draws = 100_000;
    for (block, exact) in [(0, &exact_x), (1, &exact_y)] {
        let mut sum = vec![0.0; 6];
        let mut sq = vec![0.0; 6];
        for k in 0..draws {
            let mut rng = keyed_stream(9, block, StreamTag::Check, k);
            let g = if block == 0 {
                grad_x_stoch(&game, &x, &y, &mut rng).unwrap()
            } else {
                grad_y_stoch(&game, &x, &y, &mut rng).unwrap()
            };
            for i in 0..6 {
                let d = g[i] - exact[i];
                sum[i] += d;
                sq[i] += d * d;
            }
        }
        let n = draws as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        assert!(norm(&mean) <= 5.0 * 1.0 / n.sqrt() * 6f64.sqrt(), "block {block}: {mean:?}");
        for i in 0..6 {
            let var = sq[i] / n - mean[i] * mean[i];
            assert!((0.97..=1.03).contains(&var), "block {block} coord {i}: {var}");
        }
    }
}

#[test]
fn ncpl_noise_tail() {
    let d = 30;
    let game = NcplGame::make(d, d, 1.0, 1.0, 1.0, 1.0, 0).unwrap();
    let x = vec![0.0; d];
    let y = vec![0.0; d];
    let draws = 100_000;
    let mut norms: Vec<f64> = (0..draws)
        .map(|k| {
            let mut rng = keyed_stream(1, 0, StreamTag::Check, k);
            norm(&grad_x_stoch(&game, &x, &y, &mut rng).unwrap())
        })
        .collect();
    norms.sort_by(f64::total_cmp);
    let s = norms[(0.99 * draws as f64) as usize];
    let freq = norms.iter().filter(|&&v| v >= s).count() as f64 / draws as f64;
    let bound = 2.0 * (-s * s / (2.0 * d as f64)).exp();
    assert!(freq <= bound * 1.05, "{freq} > {bound}");
}

#[test]
fn same_stream_same_noise() {
    let game = NcplGame::make(4, 4, 1.0, 1.0, 1.0, 1.0, 0).unwrap();
    let (x, y) = ([1.0; 4], [-1.0; 4]);
    let a = grad_y_stoch(&game, &x, &y, &mut keyed_stream(3, 1, StreamTag::NoiseY, 7)).unwrap();
    let b = grad_y_stoch(&game, &x, &y, &mut keyed_stream(3, 1, StreamTag::NoiseY, 7)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ncpl_gradients_are_lipschitz() {
    let game = NcplGame::make(10, 10, 1.0, 1.0, 1.0, 0.0, 5).unwrap();
    let ell = game.constants().ell();
    let mut rng = keyed_stream(0, 0, StreamTag::Check, 0);
    let ball = |rng: &mut _| {
        let mut v = uniform_box(rng, 10, 1.0);
        let r = 10.0 * rand::Rng::random::<f64>(rng).cbrt() / norm(&v).max(1e-12);
        v.iter_mut().for_each(|c| *c *= r);
        v
    };
    for _ in 0..1000 {
        let (x1, y1, x2, y2) = (ball(&mut rng), ball(&mut rng), ball(&mut rng), ball(&mut rng));
        let dx = norm(&x1.iter().zip(&x2).map(|(a, b)| a - b).collect::<Vec<_>>());
        let dy = norm(&y1.iter().zip(&y2).map(|(a, b)| a - b).collect::<Vec<_>>());
        for grad in [grad_x_exact::<NcplGame>, grad_y_exact::<NcplGame>] {
            let g1 = grad(&game, &x1, &y1).unwrap();
            let g2 = grad(&game, &x2, &y2).unwrap();
            let dg = norm(&g1.iter().zip(&g2).map(|(a, b)| a - b).collect::<Vec<_>>());
            assert!(dg <= 1.001 * ell * (dx + dy), "{dg} vs {}", ell * (dx + dy));
        }
    }
}

#[test]
fn normal_quantile_of_samples() {
    use smagda::harness::empirical_quantiles;
    use statrs::distribution::{ContinuousCDF, Normal};
    let mut rng = keyed_stream(2, 0, StreamTag::Check, 0);
    let samples: Vec<f64> = (0..10_000).map(|_| standard_normal(&mut rng)).collect();
    let q = empirical_quantiles(&samples, &[0.975]).unwrap()[0];
    let oracle = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.975);
    assert!((q - oracle).abs() <= 0.05, "{q} vs {oracle}");
}
