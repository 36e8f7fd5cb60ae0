use hygro::fem::{Mesh, MeshSpec};
use hygro::material::{MaterialParams, Parameter};
use hygro::randfield::{
    assemble_covariance_matrix, build_basis, covariance, moments_to_gaussian, prior_moments,
    sample_gaussian_field, truncation_error, CovarianceSpec, LatentVector, RandFieldError,
    RandomFieldModel,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LENGTHS: CovarianceSpec = CovarianceSpec { l_x1: 0.1, l_x2: 0.04 };

fn centroid_grid() -> Vec<[f64; 2]> {
    Mesh::from_spec(&MeshSpec::WALL).unwrap().centroids()
}

/// Cyclic Jacobi rotations; returns the eigenvalues in descending order.
fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off.sqrt() < 1e-14 * n as f64 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    d.sort_by(|x, y| y.total_cmp(x));
    d
}

#[test]
fn kernel_values() {
    assert_eq!(covariance([0.2, 0.03], [0.2, 0.03], &LENGTHS), 1.0);
    let v = covariance([0.0, 0.0], [0.1, 0.0], &LENGTHS);
    assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    assert!(CovarianceSpec::new(0.0, 0.04).is_err());
    let one = assemble_covariance_matrix(&[[0.3, 0.01]], &LENGTHS);
    assert_eq!(one, DMatrix::from_element(1, 1, 1.0));
}

#[test]
fn spectrum_agrees_with_jacobi_oracle() {
    let grid = centroid_grid();
    let n = grid.len();
    assert_eq!(n, 126);
    let cov = assemble_covariance_matrix(&grid, &LENGTHS);
    assert!((cov.trace() - n as f64).abs() < 1e-12);
    let oracle = jacobi_eigenvalues(cov.clone());
    let basis = build_basis(&grid, &LENGTHS, n).unwrap();
    for (a, b) in basis.eigenvalues.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-10 * n as f64, "{a} vs {b}");
    }
    assert!(oracle.iter().all(|&v| v >= -1e-10 * n as f64));
    assert!(basis.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    assert!(basis.eigenvalues.iter().all(|&v| v > 0.0));
}

#[test]
fn eigenvectors_orthonormal_and_reconstruct() {
    let grid = centroid_grid();
    let cov = assemble_covariance_matrix(&grid, &LENGTHS);
    let basis = build_basis(&grid, &LENGTHS, grid.len()).unwrap();
    let gram = basis.eigenvectors.transpose() * &basis.eigenvectors;
    assert!((gram - DMatrix::identity(grid.len(), grid.len())).amax() < 1e-10);
    let residual = (basis.reconstruct() - &cov).norm() / cov.norm();
    assert!(residual < 1e-8, "{residual:e}");
}

#[test]
fn energy_capture_is_deterministic() {
    let grid = centroid_grid();
    let a = build_basis(&grid, &LENGTHS, 7).unwrap();
    let b = build_basis(&grid, &LENGTHS, 7).unwrap();
    assert_eq!(a.energy_fraction(), b.energy_fraction());
    assert_eq!(a.eigenvectors, b.eigenvectors);
    println!("energy captured by 7 of 126 modes: {:.6}", a.energy_fraction());
    assert!(a.energy_fraction() > 0.0 && a.energy_fraction() < 1.0);
}

#[test]
fn single_mode_activation() {
    let grid = centroid_grid();
    let basis = build_basis(&grid, &LENGTHS, 5).unwrap();
    assert!(sample_gaussian_field(&basis, &[0.0; 5]).unwrap().iter().all(|&v| v == 0.0));
    let f = sample_gaussian_field(&basis, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let s = basis.eigenvalues[0].sqrt();
    for (r, v) in f.iter().enumerate() {
        assert!((v - s * basis.eigenvectors[(r, 0)]).abs() < 1e-15);
    }
    assert!(matches!(
        sample_gaussian_field(&basis, &[1.0]),
        Err(RandFieldError::LatentLength { got: 1, expected: 5 })
    ));
}

#[test]
fn monte_carlo_covariance_matches_kernel() {
    let grid = centroid_grid();
    let n = grid.len();
    let cov = assemble_covariance_matrix(&grid, &LENGTHS);
    let basis = build_basis(&grid, &LENGTHS, n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = 20_000;
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for _ in 0..draws {
        let xi = LatentVector::sample(n, &mut rng);
        let f = nalgebra::DVector::from_vec(sample_gaussian_field(&basis, xi.kle()).unwrap());
        acc.ger(1.0, &f, &f, 1.0);
    }
    acc /= draws as f64;
    let rel = (acc - &cov).norm() / cov.norm();
    println!("Monte Carlo covariance Frobenius error: {rel:.4}");
    assert!(rel < 0.05);
}

#[test]
fn lognormal_moment_conversion() {
    let m = moments_to_gaussian(200.0, 40.0).unwrap();
    assert!((m.sigma_g * m.sigma_g - 1.04f64.ln()).abs() < 1e-15);
    assert!((m.mu_g - 5.27871).abs() < 1e-5);
    let (mean, std) = m.lognormal_mean_std();
    assert!((mean - 200.0).abs() < 1e-12 * 200.0 && (std - 40.0).abs() < 1e-12 * 40.0);
    let fixed = moments_to_gaussian(0.3, 0.0).unwrap();
    assert_eq!((fixed.sigma_g, fixed.mu_g), (0.0, 0.3f64.ln()));
    assert!(moments_to_gaussian(0.0, 1.0).is_err());
}

fn prior_model(modes: usize) -> RandomFieldModel {
    let grid = centroid_grid();
    RandomFieldModel::new(
        build_basis(&grid, &LENGTHS, modes).unwrap(),
        prior_moments(&MaterialParams::MASONRY_MEAN, &MaterialParams::MASONRY_STD).unwrap(),
    )
}

#[test]
fn zero_latent_gives_constant_fields() {
    let model = prior_model(7);
    let f = model.realize(&LatentVector::zeros(7)).unwrap();
    for (k, p) in Parameter::ALL.iter().enumerate() {
        let expected = model.moments[k].mu_g.exp();
        assert!(f.field(*p).iter().all(|&v| v == expected));
    }
}

#[test]
fn field_mean_matches_lognormal_mean() {
    let model = prior_model(126);
    let basis = &model.basis;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 20_000;
    let n = basis.len();
    let mut sums = vec![[0.0; Parameter::COUNT]; n];
    for _ in 0..draws {
        let f = model.realize(&LatentVector::sample(basis.modes(), &mut rng)).unwrap();
        for (s, v) in sums.iter_mut().zip(&f.values) {
            for (a, x) in s.iter_mut().zip(v.to_array()) {
                *a += x;
            }
        }
    }
    for (k, m) in model.moments.iter().enumerate() {
        let (mut est, mut exact) = (0.0, 0.0);
        for e in 0..n {
            let local: f64 = (0..basis.modes()).map(|i| basis.eigenvalues[i] * basis.eigenvectors[(e, i)].powi(2)).sum();
            exact += (m.mu_g + 0.5 * m.sigma_g * m.sigma_g * (1.0 + local)).exp();
            est += sums[e][k] / draws as f64;
        }
        let rel = (est - exact).abs() / exact;
        assert!(rel < 0.01, "{}: {rel}", Parameter::ALL[k].name());
    }
}

#[test]
fn full_truncation_has_zero_error() {
    let model = prior_model(126);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xi = LatentVector::sample(126, &mut rng);
    let a = model.realize(&xi).unwrap().field(Parameter::Lambda0);
    let b = model.truncated(126).unwrap().realize(&xi.truncated(126)).unwrap().field(Parameter::Lambda0);
    assert_eq!(truncation_error(&[a.clone()], &[b]), 0.0);
    assert_eq!(truncation_error(&[vec![1.0]], &[vec![1.0]]), 0.0);
    let c = model.truncated(3).unwrap().realize(&xi.truncated(3)).unwrap().field(Parameter::Lambda0);
    assert!(truncation_error(&[a], &[c]) > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn realized_values_positive(xi in proptest::collection::vec(-10.0..10.0f64, 15)) {
        let model = prior_model(7);
        let f = model.realize(&LatentVector(xi)).unwrap();
        prop_assert!(f.values.iter().all(|v| v.to_array().iter().all(|&x| x > 0.0 && x.is_finite())));
    }

    #[test]
    fn shift_scales_one_field(xi in proptest::collection::vec(-3.0..3.0f64, 15), k in 0usize..8, delta in -2.0..2.0f64) {
        let model = prior_model(7);
        let base = model.realize(&LatentVector(xi.clone())).unwrap();
        let mut moved = xi;
        moved[k] += delta;
        let shifted = model.realize(&LatentVector(moved)).unwrap();
        let factor = (model.moments[k].sigma_g * delta).exp();
        for (a, b) in base.values.iter().zip(&shifted.values) {
            let (a, b) = (a.to_array(), b.to_array());
            for q in 0..Parameter::COUNT {
                if q == k {
                    prop_assert!((b[q] - a[q] * factor).abs() <= 1e-12 * b[q]);
                } else {
                    prop_assert_eq!(a[q], b[q]);
                }
            }
        }
    }
}
