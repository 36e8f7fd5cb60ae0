use hygro::config::{ExperimentConfig, Preset};
use hygro::experiment::{response_truncation_error, Experiment, ObservationOperator};
use hygro::inference::{run_sampler, SamplerConfig};
use statrs::distribution::{ContinuousCDF, Normal};

fn quick_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(Preset::PaperDesk);
    cfg.time.dt_hours = 10.0;
    cfg.mcmc.n_samples = 60;
    cfg.mcmc.warmup = 50;
    cfg.summary.response_sets = 8;
    cfg.summary.prior_samples = 8;
    cfg
}

#[test]
fn noiseless_synthesis_reproduces_operator_output() {
    let exp = Experiment::new(quick_config()).unwrap();
    let reference = exp.draw_reference().unwrap();
    let syn = exp.synthesize_observations(&reference).unwrap();
    assert_eq!(syn.noiseless, exp.observation.apply(&reference.trajectory).unwrap());
    assert_eq!(syn.observations.values.len(), 84);
    assert_eq!(syn.replicates.len(), 100);

    // pooled replicate spread of the temperature entries against the configured noise
    let mut ss = 0.0;
    let mut count = 0usize;
    for k in (0..84).step_by(2) {
        ss += syn.replicates.iter().map(|r| (r[k] - syn.noiseless[k]).powi(2)).sum::<f64>();
        count += syn.replicates.len();
    }
    let ratio = (ss / count as f64).sqrt() / 0.2;
    println!("temperature replicate std / 0.2: {ratio:.3}");
    assert!((ratio - 1.0).abs() < 0.15);
}

#[test]
fn sensor_on_node_reads_nodal_value() {
    let exp = Experiment::new(quick_config()).unwrap();
    let node = 37;
    let op = ObservationOperator::new(&exp.mesh, &[exp.mesh.nodes[node]], &[50.0 * 3600.0]).unwrap();
    let reference = exp.draw_reference().unwrap();
    let snap = reference.trajectory.iter().find(|s| s.t == 50.0 * 3600.0).unwrap();
    let y = op.apply(&reference.trajectory).unwrap();
    assert_eq!(y, vec![snap.theta[node], snap.phi[node]]);
}

#[test]
fn misplaced_sensor_is_a_configuration_error() {
    let mut cfg = quick_config();
    cfg.sensors.explicit = vec![[0.2, 0.03], [0.8, 0.03]];
    assert!(matches!(Experiment::new(cfg), Err(hygro::experiment::ExperimentError::Config(_))));
}

/// Kolmogorov–Smirnov p-value of `x` against N(0, 1), asymptotic form.
fn ks_normal(mut x: Vec<f64>) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal.cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    p.clamp(0.0, 1.0)
}

#[test]
fn without_likelihood_the_posterior_is_the_prior() {
    let mut cfg = quick_config();
    cfg.mcmc.use_likelihood = false;
    let exp = Experiment::new(cfg).unwrap();
    let reference = exp.draw_reference().unwrap();
    let syn = exp.synthesize_observations(&reference).unwrap();
    let mut post = exp.posterior(&syn.observations).unwrap();
    let sampler = SamplerConfig {
        n_samples: 200_000,
        warmup: 2000,
        proposal_scale: 0.5,
        seed: 9,
        progress_every: 0,
    };
    let chain = run_sampler(&mut post, &vec![0.0; exp.latent_len()], &sampler, &mut |_, _| {}).unwrap();
    for k in 0..exp.latent_len() {
        // thin well beyond the autocorrelation time so draws are near independent
        let x: Vec<f64> = chain.samples.iter().step_by(200).map(|s| s[k]).collect();
        let p = ks_normal(x);
        println!("coordinate {k}: KS p = {p:.3}");
        assert!(p > 0.01);
    }
}

#[test]
fn fixed_seeds_give_identical_summaries() {
    let run = || {
        let exp = Experiment::new(quick_config()).unwrap();
        let reference = exp.draw_reference().unwrap();
        let syn = exp.synthesize_observations(&reference).unwrap();
        let chains = exp.infer(&syn.observations, &mut |_, _| {}).unwrap();
        let s = exp.summarize(&chains, &reference).unwrap();
        (chains, s.metrics, s.envelopes, s.posterior_mean, s.posterior_quantiles)
    };
    let a = run();
    let b = run();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
    assert_eq!(a.3, b.3);
    for per_param in &a.4 {
        assert!(per_param.iter().all(|q| q[0] <= q[1] && q[1] <= q[2]));
    }
    for row in &a.2 {
        assert!(row.posterior[0] <= row.posterior[1] && row.posterior[1] <= row.posterior[2]);
        assert!(row.prior[0] <= row.prior[1] && row.prior[1] <= row.prior[2]);
    }
}

#[test]
fn response_error_below_input_error() {
    let mut cfg = ExperimentConfig::preset(Preset::PaperFull);
    cfg.time.dt_hours = 4.0;
    let exp = Experiment::new(cfg).unwrap();
    let r = response_truncation_error(&exp, 7, 20, 200.0 * 3600.0, 31).unwrap();
    println!("{r:?}");
    assert_eq!(r.realizations_used, 20);
    assert!(r.theta < r.input_lambda0 && r.phi < r.input_lambda0);
}
