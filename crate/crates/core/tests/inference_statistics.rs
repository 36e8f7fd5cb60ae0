use hygro::inference::{
    autocorrelation_time, metropolis_hastings, run_sampler, Chain, GaussianLikelihood, Posterior,
    SamplerConfig,
};
use nalgebra::{DMatrix, DVector};

fn sampler(n: usize, seed: u64) -> SamplerConfig {
    SamplerConfig {
        n_samples: n,
        warmup: 2000,
        proposal_scale: 1.0,
        seed,
        progress_every: 0,
    }
}

fn coordinate(chain: &Chain, k: usize) -> Vec<f64> {
    chain.samples.iter().map(|x| x[k]).collect()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0))
}

#[test]
fn standard_normal_variance() {
    let mut target = |x: &[f64]| -0.5 * x[0] * x[0];
    let chain = run_sampler(&mut target, &[0.0], &sampler(100_000, 7), &mut |_, _| {}).unwrap();
    let (m, v) = mean_var(&coordinate(&chain, 0));
    println!("N(0,1) target: mean {m:.4}, variance {v:.4}, acceptance {:.3}", chain.acceptance_rate());
    assert!((0.95..=1.05).contains(&v));
}

#[test]
fn conjugate_scalar_posterior() {
    // ξ ~ N(0, 1), z = ξ + ε, ε ~ N(0, 0.5), z = 1.5 → N(1, 1/3)
    let lik = GaussianLikelihood::new(&[1.5], DMatrix::from_element(1, 1, 0.5)).unwrap();
    let mut post = Posterior::new(Some(lik), |x: &[f64]| Ok::<_, ()>(vec![x[0]]));
    let chain = run_sampler(&mut post, &[0.0], &sampler(100_000, 3), &mut |_, _| {}).unwrap();
    let x = coordinate(&chain, 0);
    let (m, v) = mean_var(&x);
    let tau = autocorrelation_time(&x).unwrap();
    let se = (v * tau / x.len() as f64).sqrt();
    println!("conjugate toy: mean {m:.4} ± {se:.4} (τ = {tau:.2}), variance {v:.4}");
    assert!((m - 1.0).abs() < 3.0 * se);
    assert!((v - 1.0 / 3.0).abs() < 0.05 / 3.0);
}

#[test]
fn conjugate_linear_gaussian_posterior() {
    let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.3, 2.0, 0.8, 0.1]);
    let c = DMatrix::from_row_slice(3, 3, &[0.4, 0.1, 0.0, 0.1, 0.3, 0.05, 0.0, 0.05, 0.6]);
    let z = DVector::from_vec(vec![0.7, -1.1, 0.4]);
    let c_inv = c.clone().try_inverse().unwrap();
    let precision = DMatrix::identity(2, 2) + a.transpose() * &c_inv * &a;
    let cov = precision.try_inverse().unwrap();
    let mean = &cov * a.transpose() * &c_inv * &z;

    let lik = GaussianLikelihood::new(z.as_slice(), c).unwrap();
    let forward = |x: &[f64]| Ok::<_, ()>((&a * DVector::from_column_slice(x)).as_slice().to_vec());
    let mut post = Posterior::new(Some(lik), forward);
    let chain = run_sampler(&mut post, &[0.0, 0.0], &sampler(100_000, 19), &mut |_, _| {}).unwrap();
    for k in 0..2 {
        let x = coordinate(&chain, k);
        let (m, _) = mean_var(&x);
        let se = (cov[(k, k)] * autocorrelation_time(&x).unwrap() / x.len() as f64).sqrt();
        println!("coordinate {k}: sampled {m:.4}, exact {:.4}, 3 SE {:.4}", mean[k], 3.0 * se);
        assert!((m - mean[k]).abs() < 3.0 * se);
    }
}

#[test]
fn half_probability_move_accepted_half_the_time() {
    let trials = 10_000;
    let accepted = (0..trials)
        .filter(|&seed| {
            let mut target = |x: &[f64]| if x[0] == 0.0 { 0.0 } else { 0.5f64.ln() };
            metropolis_hastings(&mut target, &[0.0], 1, 1.0, seed).unwrap().accepted[0]
        })
        .count();
    let freq = accepted as f64 / trials as f64;
    let sigma = (0.25 / trials as f64).sqrt();
    println!("acceptance of a ln 0.5 move: {freq:.4}");
    assert!((freq - 0.5).abs() < 3.0 * sigma);
}

#[test]
fn detailed_balance_between_two_bins() {
    // Density ∝ N(0,1) with twice the weight on x ≥ 0: bin masses 1/3 and 2/3.
    let mut target = |x: &[f64]| -0.5 * x[0] * x[0] + if x[0] >= 0.0 { 2f64.ln() } else { 0.0 };
    let chain = metropolis_hastings(&mut target, &[0.1], 100_000, 1.5, 23).unwrap();
    let bins: Vec<usize> = chain.samples.iter().map(|x| usize::from(x[0] >= 0.0)).collect();
    let mut visits = [0usize; 2];
    let mut moves = [0usize; 2];
    for w in bins.windows(2) {
        visits[w[0]] += 1;
        if w[0] != w[1] {
            moves[w[0]] += 1;
        }
    }
    let pi = [1.0 / 3.0, 2.0 / 3.0];
    let p = [moves[0] as f64 / visits[0] as f64, moves[1] as f64 / visits[1] as f64];
    let flux = [pi[0] * p[0], pi[1] * p[1]];
    let sd = [
        pi[0] * (p[0] * (1.0 - p[0]) / visits[0] as f64).sqrt(),
        pi[1] * (p[1] * (1.0 - p[1]) / visits[1] as f64).sqrt(),
    ];
    let tol = 3.0 * (sd[0] * sd[0] + sd[1] * sd[1]).sqrt();
    println!("π_a P(a→b) = {:.5}, π_b P(b→a) = {:.5}, 3σ = {tol:.5}", flux[0], flux[1]);
    assert!((flux[0] - flux[1]).abs() < tol);
}

#[test]
fn additive_constant_does_not_change_the_chain() {
    let mut a = |x: &[f64]| -0.5 * (x[0] * x[0] + 2.0 * x[1] * x[1]);
    let mut b = |x: &[f64]| -0.5 * (x[0] * x[0] + 2.0 * x[1] * x[1]) + 0.25;
    let ca = metropolis_hastings(&mut a, &[0.0, 0.0], 5000, 0.8, 1).unwrap();
    let cb = metropolis_hastings(&mut b, &[0.0, 0.0], 5000, 0.8, 1).unwrap();
    assert_eq!(ca.samples, cb.samples);
    assert_eq!(ca.accepted, cb.accepted);
}

#[test]
fn seeds_determine_chains() {
    let mut t = |x: &[f64]| -0.5 * x.iter().map(|v| v * v).sum::<f64>();
    let a = run_sampler(&mut t, &[0.0; 3], &sampler(3000, 42), &mut |_, _| {}).unwrap();
    let b = run_sampler(&mut t, &[0.0; 3], &sampler(3000, 42), &mut |_, _| {}).unwrap();
    let c = run_sampler(&mut t, &[0.0; 3], &sampler(3000, 43), &mut |_, _| {}).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.samples, c.samples);
}

#[test]
fn scalar_likelihood_value() {
    let sigma2 = 0.04;
    let lik = GaussianLikelihood::new(&[1.0], DMatrix::from_element(1, 1, sigma2)).unwrap();
    let r: f64 = 0.3;
    assert!((lik.log_likelihood(&[1.0 - r]) + r * r / (2.0 * sigma2)).abs() < 1e-12);
    assert_eq!(lik.log_likelihood(&[1.0]), 0.0);
}
