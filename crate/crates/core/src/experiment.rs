//! The virtual experiment: a reference material drawn with every KLE mode,
//! noisy sensor data synthesized from its response, posterior sampling with
//! a truncated expansion, and comparison of posterior and prior summaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::fem::{FemError, ForwardModel, Kunzel, Mesh, SimState, Trajectory};
use crate::inference::{
    empirical_covariance, potential_scale_reduction, regularize_covariance, run_chains,
    run_sampler, Chain, GaussianLikelihood, InferenceError, ObservationSet, Posterior,
    SamplerConfig,
};
use crate::material::{MaterialParams, Parameter};
use crate::randfield::{
    build_basis, prior_moments, truncation_error, LatentVector, ParameterFields, RandFieldError,
    RandomFieldModel,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    RandField(#[from] RandFieldError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("no admissible reference realization in {0} draws")]
    NoReference(usize),
}

/// Linear interpolation of nodal snapshots to sensor points and times.
#[derive(Debug, Clone)]
pub struct ObservationOperator {
    pub sensors: Vec<[f64; 2]>,
    pub times: Vec<f64>,
    stencils: Vec<([usize; 3], [f64; 3])>,
}

impl ObservationOperator {
    pub fn new(mesh: &Mesh, sensors: &[[f64; 2]], times: &[f64]) -> Result<Self, ExperimentError> {
        let stencils = sensors
            .iter()
            .map(|&x| {
                mesh.locate(x)
                    .map(|(e, w)| (mesh.elements[e], w))
                    .ok_or_else(|| {
                        ExperimentError::Config(format!("sensor ({}, {}) lies outside the domain", x[0], x[1]))
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ObservationOperator {
            sensors: sensors.to_vec(),
            times: times.to_vec(),
            stencils,
        })
    }

    pub fn len(&self) -> usize {
        2 * self.sensors.len() * self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn at(&self, state: &SimState, sensor: usize) -> [f64; 2] {
        let (nodes, w) = self.stencils[sensor];
        let mut out = [0.0; 2];
        for k in 0..3 {
            out[0] += w[k] * state.theta[nodes[k]];
            out[1] += w[k] * state.phi[nodes[k]];
        }
        out
    }

    /// Observation vector in [`ObservationSet`] layout. Snapshot times must
    /// bracket every sampling time.
    pub fn apply(&self, trajectory: &[SimState]) -> Result<Vec<f64>, ExperimentError> {
        let mut out = Vec::with_capacity(self.len());
        for &t in &self.times {
            let tol = 1e-9 * t.abs().max(1.0);
            let exact = trajectory.iter().position(|s| (s.t - t).abs() <= tol);
            let (a, b, w) = match exact {
                Some(i) => (i, i, 0.0),
                None => {
                    let i = trajectory
                        .windows(2)
                        .position(|p| p[0].t <= t && t <= p[1].t)
                        .ok_or_else(|| {
                            ExperimentError::Config(format!("sampling time {t} s outside the simulated horizon"))
                        })?;
                    let (t0, t1) = (trajectory[i].t, trajectory[i + 1].t);
                    (i, i + 1, (t - t0) / (t1 - t0))
                }
            };
            for s in 0..self.sensors.len() {
                let va = self.at(&trajectory[a], s);
                let vb = self.at(&trajectory[b], s);
                out.push((1.0 - w) * va[0] + w * vb[0]);
                out.push((1.0 - w) * va[1] + w * vb[1]);
            }
        }
        Ok(out)
    }
}

/// The ground-truth material of the virtual experiment.
#[derive(Debug, Clone)]
pub struct Reference {
    /// Latent draw with every KLE mode: 8 shifts followed by `n` coefficients.
    pub latent: LatentVector,
    pub fields: ParameterFields,
    /// Snapshots at [`Experiment::record_times`].
    pub trajectory: Trajectory,
    /// Inadmissible draws skipped before this one.
    pub rejected_draws: usize,
}

/// Synthesized measurements.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub observations: ObservationSet,
    pub noiseless: Vec<f64>,
    pub replicates: Vec<Vec<f64>>,
}

/// Noisy replicates of `clean`, their mean as the data vector and their
/// regularized empirical covariance. Entries alternate θ/φ.
pub fn synthesize_with_noise(
    clean: &[f64],
    sigma_theta: f64,
    sigma_phi: f64,
    replicates: usize,
    regularization: f64,
    seed: u64,
) -> (Vec<f64>, Vec<Vec<f64>>, nalgebra::DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reps: Vec<Vec<f64>> = (0..replicates)
        .map(|_| {
            clean
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let sigma = if i % 2 == 0 { sigma_theta } else { sigma_phi };
                    v + sigma * rng.sample::<f64, _>(StandardNormal)
                })
                .collect()
        })
        .collect();
    let n = clean.len();
    let mut mean = vec![0.0; n];
    for r in &reps {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= replicates as f64);
    let cov = empirical_covariance(&reps);
    let cov = if cov.trace() > 0.0 {
        regularize_covariance(&cov, regularization)
    } else {
        cov + nalgebra::DMatrix::identity(n, n) * regularization
    };
    (mean, reps, cov)
}

/// Pipeline state shared by all stages.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub mesh: Mesh,
    /// Field model with every eigenmode, used for the reference material.
    pub full_model: RandomFieldModel,
    /// Field model with the configured number of modes, used for inference.
    pub model: RandomFieldModel,
    pub forward: ForwardModel<Kunzel>,
    pub observation: ObservationOperator,
    pub probe_nodes: Vec<usize>,
}

fn union_times(sets: &[&[f64]]) -> Vec<f64> {
    let mut all: Vec<f64> = sets.iter().flat_map(|s| s.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    all.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1.0));
    all
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, ExperimentError> {
        config.validate().map_err(ExperimentError::Config)?;
        let mesh = Mesh::from_spec(&config.mesh)?;
        let grid = mesh.centroids();
        let moments = prior_moments(&config.prior.mean, &config.prior.std)?;
        let full_model = RandomFieldModel::new(build_basis(&grid, &config.correlation, grid.len())?, moments);
        let model = full_model.truncated(config.kle_modes)?;
        let forward = ForwardModel::new(mesh.clone(), config.boundary, config.solver(), Kunzel)?;
        let observation = ObservationOperator::new(&mesh, &config.sensor_points(), &config.measurement_times())?;
        let probe_nodes = config
            .summary
            .probe_points
            .iter()
            .map(|p| mesh.nearest_node([p[0] * config.mesh.width, p[1] * config.mesh.height]))
            .collect();
        Ok(Experiment {
            config,
            mesh,
            full_model,
            model,
            forward,
            observation,
            probe_nodes,
        })
    }

    pub fn initial_state(&self) -> SimState {
        SimState::uniform(self.mesh.node_count(), self.config.initial.theta, self.config.initial.phi)
    }

    /// Measurement times, envelope times and the horizon, merged.
    pub fn record_times(&self) -> Vec<f64> {
        let t_end = [self.config.solver().t_end];
        union_times(&[&self.config.measurement_times(), &self.config.envelope_times(), &t_end])
    }

    pub fn simulate(&self, fields: &ParameterFields, times: &[f64]) -> Result<Trajectory, FemError> {
        self.forward.solve(&self.initial_state(), fields, times)
    }

    /// Predicted observation vector for a material.
    pub fn predict(&self, fields: &ParameterFields) -> Result<Vec<f64>, ExperimentError> {
        let traj = self.simulate(fields, &self.observation.times)?;
        self.observation.apply(&traj)
    }

    /// Predicted observations for a latent vector of the truncated model.
    pub fn predict_latent(&self, xi: &[f64]) -> Result<Vec<f64>, ExperimentError> {
        let fields = self.model.realize(&LatentVector(xi.to_vec()))?;
        self.predict(&fields)
    }

    pub fn latent_len(&self) -> usize {
        self.model.latent_len()
    }

    /// Draws the reference material from the prior with all eigenmodes,
    /// skipping draws the forward model cannot solve.
    pub fn draw_reference(&self) -> Result<Reference, ExperimentError> {
        const MAX_DRAWS: usize = 1000;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seeds.reference);
        let times = self.record_times();
        for attempt in 0..MAX_DRAWS {
            let latent = LatentVector::sample(self.full_model.basis.modes(), &mut rng);
            let fields = self.full_model.realize(&latent)?;
            if let Ok(trajectory) = self.simulate(&fields, &times) {
                return Ok(Reference {
                    latent,
                    fields,
                    trajectory,
                    rejected_draws: attempt,
                });
            }
        }
        Err(ExperimentError::NoReference(MAX_DRAWS))
    }

    /// Rebuilds a reference from a stored full-rank latent vector.
    pub fn reference_from_latent(&self, latent: LatentVector, rejected_draws: usize) -> Result<Reference, ExperimentError> {
        let expected = self.full_model.latent_len();
        if latent.len() != expected {
            return Err(ExperimentError::Config(format!(
                "reference latent has {} entries, the full expansion needs {expected}",
                latent.len()
            )));
        }
        let fields = self.full_model.realize(&latent)?;
        let trajectory = self.simulate(&fields, &self.record_times())?;
        Ok(Reference {
            latent,
            fields,
            trajectory,
            rejected_draws,
        })
    }

    /// Noisy replicate measurements of the reference response.
    pub fn synthesize_observations(&self, reference: &Reference) -> Result<Synthesis, ExperimentError> {
        let clean = self.observation.apply(&reference.trajectory)?;
        let n = &self.config.noise;
        let (mean, replicates, cov) = synthesize_with_noise(
            &clean,
            n.sigma_theta,
            n.sigma_phi,
            n.replicates,
            n.regularization,
            self.config.seeds.noise,
        );
        Ok(Synthesis {
            observations: ObservationSet {
                sensors: self.observation.sensors.clone(),
                times: self.observation.times.clone(),
                values: mean,
                covariance: cov.transpose().as_slice().to_vec(),
            },
            noiseless: clean,
            replicates,
        })
    }

    /// Log posterior over the truncated latent vector.
    pub fn posterior(
        &self,
        obs: &ObservationSet,
    ) -> Result<Posterior<impl FnMut(&[f64]) -> Result<Vec<f64>, ExperimentError> + '_>, ExperimentError> {
        if obs.values.len() != self.observation.len() {
            return Err(ExperimentError::Config(format!(
                "observation set has {} values, the sensor layout produces {}",
                obs.values.len(),
                self.observation.len()
            )));
        }
        let likelihood = if self.config.mcmc.use_likelihood {
            Some(GaussianLikelihood::from_observations(obs)?)
        } else {
            None
        };
        Ok(Posterior::new(likelihood, move |xi: &[f64]| self.predict_latent(xi)))
    }

    fn sampler_config(&self) -> SamplerConfig {
        let m = &self.config.mcmc;
        SamplerConfig {
            n_samples: m.n_samples,
            warmup: m.warmup,
            proposal_scale: m.proposal_scale,
            seed: self.config.seeds.chain,
            progress_every: m.progress_every,
        }
    }

    /// Runs the configured chains from ξ = 0. With several chains they run in
    /// parallel with seeds `chain, chain + 1, ...`; progress is only reported
    /// for a single chain.
    pub fn infer(
        &self,
        obs: &ObservationSet,
        progress: &mut dyn FnMut(usize, f64),
    ) -> Result<Vec<Chain>, ExperimentError> {
        let init = vec![0.0; self.latent_len()];
        let cfg = self.sampler_config();
        if self.config.mcmc.chains == 1 {
            let mut post = self.posterior(obs)?;
            Ok(vec![run_sampler(&mut post, &init, &cfg, progress)?])
        } else {
            self.posterior(obs)?;
            let chains = run_chains(
                |_| self.posterior(obs).expect("checked above"),
                &init,
                &cfg,
                self.config.mcmc.chains,
            )?;
            Ok(chains)
        }
    }

    /// Prior mean of each property at each element for the truncated model:
    /// exp(μ_g + σ_g² (1 + Σ ς_i ψ_i²) / 2).
    pub fn prior_mean_fields(&self) -> Vec<MaterialParams> {
        let basis = &self.model.basis;
        (0..basis.len())
            .map(|e| {
                let local: f64 = (0..basis.modes())
                    .map(|i| basis.eigenvalues[i] * basis.eigenvectors[(e, i)].powi(2))
                    .sum();
                let mut v = [0.0; Parameter::COUNT];
                for (k, m) in self.model.moments.iter().enumerate() {
                    v[k] = (m.mu_g + 0.5 * m.sigma_g * m.sigma_g * (1.0 + local)).exp();
                }
                MaterialParams::from_array(v)
            })
            .collect()
    }

    /// Replays latent vectors through the forward model in parallel; failed
    /// solves come back as `None`. Order follows the input.
    pub fn replay(&self, latents: &[Vec<f64>], times: &[f64]) -> Vec<Option<Trajectory>> {
        latents
            .par_iter()
            .map(|xi| {
                let fields = self.model.realize(&LatentVector(xi.clone())).ok()?;
                self.simulate(&fields, times).ok()
            })
            .collect()
    }

    pub fn draw_prior_latents(&self, count: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seeds.prior);
        (0..count)
            .map(|_| LatentVector::sample(self.model.basis.modes(), &mut rng).0)
            .collect()
    }

    /// Posterior and prior summaries against the reference.
    pub fn summarize(&self, chains: &[Chain], reference: &Reference) -> Result<PosteriorSummary, ExperimentError> {
        let burn_in = self.config.burn_in();
        let retained: Vec<&Vec<f64>> = chains
            .iter()
            .flat_map(|c| c.samples.iter().skip(burn_in.min(c.len().saturating_sub(1))))
            .collect();
        if retained.is_empty() {
            return Err(ExperimentError::Config("empty chain".into()));
        }
        let n_elem = self.mesh.element_count();

        // Parameter fields of every retained sample.
        let sample_fields: Vec<ParameterFields> = retained
            .par_iter()
            .map(|xi| self.model.realize(&LatentVector((*xi).clone())))
            .collect::<Result<_, _>>()?;
        let mut posterior_mean = vec![[0.0; Parameter::COUNT]; n_elem];
        for f in &sample_fields {
            for (acc, v) in posterior_mean.iter_mut().zip(&f.values) {
                for (a, x) in acc.iter_mut().zip(v.to_array()) {
                    *a += x / sample_fields.len() as f64;
                }
            }
        }
        let posterior_mean: Vec<MaterialParams> = posterior_mean.into_iter().map(MaterialParams::from_array).collect();
        let band = self.config.summary.band;
        let probs = [band, 0.5, 1.0 - band];
        let posterior_quantiles: Vec<Vec<[f64; 3]>> = Parameter::ALL
            .iter()
            .map(|&p| {
                (0..n_elem)
                    .map(|e| {
                        let mut col: Vec<f64> = sample_fields.iter().map(|f| f.values[e].get(p)).collect();
                        quantiles(&mut col, &probs)
                    })
                    .collect()
            })
            .collect();
        let prior_mean = self.prior_mean_fields();

        // Thinned posterior and fresh prior samples through the forward model.
        let wanted = self.config.summary.response_sets.max(1);
        let stride = (retained.len() / wanted).max(1);
        let thinned: Vec<Vec<f64>> = retained.iter().step_by(stride).take(wanted).map(|x| (*x).clone()).collect();
        let prior_latents = self.draw_prior_latents(self.config.summary.prior_samples);
        let times = self.record_times();
        let post_runs = self.replay(&thinned, &times);
        let prior_runs = self.replay(&prior_latents, &times);
        let post_ok: Vec<&Trajectory> = post_runs.iter().flatten().collect();
        let prior_ok: Vec<&Trajectory> = prior_runs.iter().flatten().collect();

        let envelope_times = self.config.envelope_times();
        let time_index = |t: f64| {
            times
                .iter()
                .position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
                .expect("record times contain envelope times")
        };
        let mut envelopes = Vec::new();
        for &node in &self.probe_nodes {
            for &t in &envelope_times {
                let k = time_index(t);
                for quantity in 0..2 {
                    let pick = |s: &SimState| if quantity == 0 { s.theta[node] } else { s.phi[node] };
                    let mut post: Vec<f64> = post_ok.iter().map(|tr| pick(&tr[k])).collect();
                    let mut prior: Vec<f64> = prior_ok.iter().map(|tr| pick(&tr[k])).collect();
                    envelopes.push(EnvelopeRow {
                        node,
                        x: self.mesh.nodes[node],
                        time_hours: t / 3600.0,
                        quantity,
                        reference: pick(&reference.trajectory[k]),
                        posterior: quantiles(&mut post, &probs),
                        prior: quantiles(&mut prior, &probs),
                    });
                }
            }
        }

        // Posterior-mean response minus reference at the horizon.
        let last = times.len() - 1;
        let n_nodes = self.mesh.node_count();
        let response_difference: Vec<[f64; 2]> = (0..n_nodes)
            .map(|n| {
                let m = post_ok.len().max(1) as f64;
                let th = post_ok.iter().map(|tr| tr[last].theta[n]).sum::<f64>() / m;
                let ph = post_ok.iter().map(|tr| tr[last].phi[n]).sum::<f64>() / m;
                [th - reference.trajectory[last].theta[n], ph - reference.trajectory[last].phi[n]]
            })
            .collect();

        let per_parameter = Parameter::ALL
            .iter()
            .map(|&p| {
                let reference_field = reference.fields.field(p);
                let post: Vec<f64> = posterior_mean.iter().map(|v| v.get(p)).collect();
                let prior: Vec<f64> = prior_mean.iter().map(|v| v.get(p)).collect();
                ParameterError {
                    parameter: p.name().to_string(),
                    posterior: field_error(&post, &reference_field),
                    prior: field_error(&prior, &reference_field),
                }
            })
            .collect::<Vec<_>>();

        let covered = envelopes
            .iter()
            .filter(|r| r.posterior[0] <= r.reference && r.reference <= r.posterior[2])
            .count();
        let prior_covered = envelopes
            .iter()
            .filter(|r| r.prior[0] <= r.reference && r.reference <= r.prior[2])
            .count();
        let width = |q: usize, post: bool| {
            let rows: Vec<&EnvelopeRow> = envelopes.iter().filter(|r| r.quantity == q).collect();
            rows.iter()
                .map(|r| if post { r.posterior[2] - r.posterior[0] } else { r.prior[2] - r.prior[0] })
                .sum::<f64>()
                / rows.len().max(1) as f64
        };
        let lambda = &per_parameter[Parameter::Lambda0.index()];
        let metrics = SummaryMetrics {
            retained_samples: retained.len(),
            acceptance_rate: chains.iter().map(|c| c.acceptance_rate()).sum::<f64>() / chains.len() as f64,
            potential_scale_reduction: potential_scale_reduction(chains, burn_in),
            posterior_response_sets: post_ok.len(),
            prior_response_sets: prior_ok.len(),
            posterior_replay_failures: post_runs.len() - post_ok.len(),
            prior_replay_failures: prior_runs.len() - prior_ok.len(),
            lambda0_rmse_posterior: lambda.posterior.rmse,
            lambda0_rmse_prior: lambda.prior.rmse,
            lambda0_rmse_ratio: lambda.posterior.rmse / lambda.prior.rmse,
            checkpoints: envelopes.len(),
            posterior_band_coverage: covered as f64 / envelopes.len().max(1) as f64,
            prior_band_coverage: prior_covered as f64 / envelopes.len().max(1) as f64,
            posterior_band_width_theta: width(0, true),
            prior_band_width_theta: width(0, false),
            posterior_band_width_phi: width(1, true),
            prior_band_width_phi: width(1, false),
            reference_rejected_draws: reference.rejected_draws,
            per_parameter,
        };

        let lambda_samples = |runs: &[Vec<f64>]| -> Result<Vec<Vec<f64>>, ExperimentError> {
            runs.iter()
                .map(|xi| Ok(self.model.realize(&LatentVector(xi.clone()))?.field(Parameter::Lambda0)))
                .collect()
        };
        Ok(PosteriorSummary {
            centroids: self.mesh.centroids(),
            reference_fields: reference.fields.values.clone(),
            posterior_mean,
            prior_mean,
            posterior_quantiles,
            probe_nodes: self.probe_nodes.clone(),
            envelopes,
            response_difference,
            posterior_lambda0_samples: lambda_samples(&thinned)?,
            prior_lambda0_samples: lambda_samples(&prior_latents)?,
            metrics,
        })
    }
}

/// One (probe node, time, quantity) checkpoint of the response envelopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub node: usize,
    pub x: [f64; 2],
    pub time_hours: f64,
    /// 0 = temperature, 1 = moisture
    pub quantity: usize,
    pub reference: f64,
    /// Lower band, median, upper band.
    pub posterior: [f64; 3],
    pub prior: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub rmse: f64,
    pub mean_abs_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterError {
    pub parameter: String,
    pub posterior: FieldError,
    pub prior: FieldError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryMetrics {
    pub retained_samples: usize,
    pub acceptance_rate: f64,
    pub potential_scale_reduction: Vec<f64>,
    pub posterior_response_sets: usize,
    pub prior_response_sets: usize,
    pub posterior_replay_failures: usize,
    pub prior_replay_failures: usize,
    pub lambda0_rmse_posterior: f64,
    pub lambda0_rmse_prior: f64,
    pub lambda0_rmse_ratio: f64,
    pub checkpoints: usize,
    pub posterior_band_coverage: f64,
    pub prior_band_coverage: f64,
    pub posterior_band_width_theta: f64,
    pub prior_band_width_theta: f64,
    pub posterior_band_width_phi: f64,
    pub prior_band_width_phi: f64,
    pub reference_rejected_draws: usize,
    pub per_parameter: Vec<ParameterError>,
}

#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub centroids: Vec<[f64; 2]>,
    pub reference_fields: Vec<MaterialParams>,
    pub posterior_mean: Vec<MaterialParams>,
    pub prior_mean: Vec<MaterialParams>,
    /// `[parameter][element]` → (lower, median, upper).
    pub posterior_quantiles: Vec<Vec<[f64; 3]>>,
    pub probe_nodes: Vec<usize>,
    pub envelopes: Vec<EnvelopeRow>,
    /// Posterior-mean minus reference (θ, φ) per node at the horizon.
    pub response_difference: Vec<[f64; 2]>,
    pub posterior_lambda0_samples: Vec<Vec<f64>>,
    pub prior_lambda0_samples: Vec<Vec<f64>>,
    pub metrics: SummaryMetrics,
}

/// Linear-interpolation quantiles (sorts `values`).
pub fn quantiles(values: &mut [f64], probs: &[f64; 3]) -> [f64; 3] {
    if values.is_empty() {
        return [f64::NAN; 3];
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let q = |p: f64| {
        let h = p * (n - 1) as f64;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        values[lo] + (h - lo as f64) * (values[hi] - values[lo])
    };
    [q(probs[0]), q(probs[1]), q(probs[2])]
}

/// RMSE and mean absolute relative error of `estimate` against `reference`.
pub fn field_error(estimate: &[f64], reference: &[f64]) -> FieldError {
    assert_eq!(estimate.len(), reference.len(), "grid mismatch");
    let n = reference.len().max(1) as f64;
    let (sq, rel) = estimate.iter().zip(reference).fold((0.0, 0.0), |(sq, rel), (e, r)| {
        (sq + (e - r) * (e - r), rel + ((e - r) / r).abs())
    });
    FieldError {
        rmse: (sq / n).sqrt(),
        mean_abs_rel: rel / n,
    }
}

/// Point-wise mean of sample fields.
pub fn mean_field(samples: &[Vec<f64>]) -> Vec<f64> {
    let n = samples.first().map_or(0, |s| s.len());
    let mut m = vec![0.0; n];
    for s in samples {
        for (a, v) in m.iter_mut().zip(s) {
            *a += v / samples.len() as f64;
        }
    }
    m
}

/// Errors of the posterior-mean and prior-mean fields against a reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldErrorSummary {
    pub posterior: FieldError,
    pub prior: FieldError,
}

pub fn field_error_summary(
    posterior_samples: &[Vec<f64>],
    prior_samples: &[Vec<f64>],
    reference: &[f64],
) -> FieldErrorSummary {
    FieldErrorSummary {
        posterior: field_error(&mean_field(posterior_samples), reference),
        prior: field_error(&mean_field(prior_samples), reference),
    }
}

/// Input-field truncation error of one property for each `M` in `modes`,
/// over `realizations` full-rank latent draws.
pub fn input_truncation_curve(
    full: &RandomFieldModel,
    parameter: Parameter,
    modes: &[usize],
    realizations: usize,
    seed: u64,
) -> Result<Vec<f64>, RandFieldError> {
    let n = full.basis.modes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<LatentVector> = (0..realizations).map(|_| LatentVector::sample(n, &mut rng)).collect();
    let reference = draws
        .iter()
        .map(|xi| Ok(full.realize(xi)?.field(parameter)))
        .collect::<Result<Vec<_>, RandFieldError>>()?;
    modes
        .iter()
        .map(|&m| {
            let model = full.truncated(m)?;
            let approx = draws
                .iter()
                .map(|xi| Ok(model.realize(&xi.truncated(m))?.field(parameter)))
                .collect::<Result<Vec<_>, RandFieldError>>()?;
            Ok(truncation_error(&reference, &approx))
        })
        .collect()
}

/// Truncation errors in input and response at one `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseTruncation {
    pub modes: usize,
    pub input_lambda0: f64,
    pub theta: f64,
    pub phi: f64,
    pub realizations_used: usize,
    pub realizations_skipped: usize,
}

/// Compares full-rank and `modes`-term fields and their responses at time
/// `t` over `realizations` prior draws. Draws the forward model cannot solve
/// at either resolution are replaced by fresh ones, up to ten times the
/// requested count in total.
pub fn response_truncation_error(
    exp: &Experiment,
    modes: usize,
    realizations: usize,
    t: f64,
    seed: u64,
) -> Result<ResponseTruncation, ExperimentError> {
    let full = &exp.full_model;
    let coarse = full.truncated(modes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut input_ref = Vec::with_capacity(realizations);
    let mut input_approx = Vec::with_capacity(realizations);
    let mut states: Vec<(SimState, SimState)> = Vec::with_capacity(realizations);
    let mut drawn = 0;
    while states.len() < realizations && drawn < 10 * realizations {
        let batch = (realizations - states.len()).min(10 * realizations - drawn);
        let draws: Vec<LatentVector> = (0..batch).map(|_| LatentVector::sample(full.basis.modes(), &mut rng)).collect();
        drawn += batch;
        let rows = draws
            .par_iter()
            .map(|xi| {
                let f_full = full.realize(xi)?;
                let f_coarse = coarse.realize(&xi.truncated(modes))?;
                let runs = exp
                    .simulate(&f_full, &[t])
                    .ok()
                    .zip(exp.simulate(&f_coarse, &[t]).ok())
                    .map(|(a, b)| (a[0].clone(), b[0].clone()));
                Ok(runs.map(|r| (f_full.field(Parameter::Lambda0), f_coarse.field(Parameter::Lambda0), r)))
            })
            .collect::<Result<Vec<_>, RandFieldError>>()?;
        for (a, b, r) in rows.into_iter().flatten() {
            input_ref.push(a);
            input_approx.push(b);
            states.push(r);
        }
    }
    let theta_ref: Vec<Vec<f64>> = states.iter().map(|p| p.0.theta.clone()).collect();
    let theta_approx: Vec<Vec<f64>> = states.iter().map(|p| p.1.theta.clone()).collect();
    let phi_ref: Vec<Vec<f64>> = states.iter().map(|p| p.0.phi.clone()).collect();
    let phi_approx: Vec<Vec<f64>> = states.iter().map(|p| p.1.phi.clone()).collect();
    Ok(ResponseTruncation {
        modes,
        input_lambda0: truncation_error(&input_ref, &input_approx),
        theta: truncation_error(&theta_ref, &theta_approx),
        phi: truncation_error(&phi_ref, &phi_approx),
        realizations_used: states.len(),
        realizations_skipped: drawn - states.len(),
    })
}

/// Least-squares slope of `y` against `x`.
pub fn regression_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Everything one end-to-end run produces.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub reference: Reference,
    pub synthesis: Synthesis,
    pub chains: Vec<Chain>,
    pub summary: PosteriorSummary,
}

/// Reference draw, synthetic data, sampling and summary in one call.
pub fn run_experiment(
    config: ExperimentConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<ExperimentRun, ExperimentError> {
    let exp = Experiment::new(config)?;
    let reference = exp.draw_reference()?;
    let synthesis = exp.synthesize_observations(&reference)?;
    let chains = exp.infer(&synthesis.observations, progress)?;
    let summary = exp.summarize(&chains, &reference)?;
    Ok(ExperimentRun {
        reference,
        synthesis,
        chains,
        summary,
    })
}
