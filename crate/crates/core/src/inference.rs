//! Posterior evaluation over the latent vector and random-walk
//! Metropolis–Hastings sampling.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("observation covariance is {rows}x{cols}, expected {n}x{n}")]
    CovarianceShape { rows: usize, cols: usize, n: usize },
    #[error("observation covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("observation covariance contains non-finite entries")]
    NonFinite,
    #[error("invalid sampler settings: {0}")]
    Sampler(String),
}

/// Sensor readings at fixed points and times.
///
/// `values` are ordered time-major, then by sensor, with temperature and
/// moisture interleaved: index `(t * sensors.len() + s) * 2 + q` where
/// `q = 0` is θ [°C] and `q = 1` is φ [-].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub sensors: Vec<[f64; 2]>,
    /// Sampling times [s].
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Empirical covariance, row-major, `values.len()` squared entries.
    pub covariance: Vec<f64>,
}

impl ObservationSet {
    pub fn index(&self, time: usize, sensor: usize, quantity: usize) -> usize {
        (time * self.sensors.len() + sensor) * 2 + quantity
    }

    pub fn expected_len(&self) -> usize {
        self.sensors.len() * self.times.len() * 2
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let n = self.values.len();
        DMatrix::from_row_slice(n, n, &self.covariance)
    }
}

/// Adds `factor * trace / n` to the diagonal.
pub fn regularize_covariance(c: &DMatrix<f64>, factor: f64) -> DMatrix<f64> {
    let n = c.nrows();
    let shift = factor * c.trace() / n as f64;
    let mut out = c.clone();
    for i in 0..n {
        out[(i, i)] += shift;
    }
    out
}

/// Sample covariance (divisor `n - 1`) of row vectors.
pub fn empirical_covariance(samples: &[Vec<f64>]) -> DMatrix<f64> {
    let n = samples.len();
    let dim = samples.first().map_or(0, |s| s.len());
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v / n as f64;
        }
    }
    let mut c = DMatrix::zeros(dim, dim);
    if n < 2 {
        return c;
    }
    for s in samples {
        for i in 0..dim {
            let di = s[i] - mean[i];
            for j in 0..=i {
                c[(i, j)] += di * (s[j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in 0..=i {
            let v = c[(i, j)] / (n - 1) as f64;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Log density of the standard normal prior, without the normalizing constant.
pub fn log_prior(xi: &[f64]) -> f64 {
    -0.5 * xi.iter().map(|x| x * x).sum::<f64>()
}

/// Gaussian misfit `-1/2 (y - z)ᵀ C⁻¹ (y - z)` with `C` factorized once.
#[derive(Debug, Clone)]
pub struct GaussianLikelihood {
    data: DVector<f64>,
    factor: Cholesky<f64, Dyn>,
}

impl GaussianLikelihood {
    pub fn new(data: &[f64], covariance: DMatrix<f64>) -> Result<Self, InferenceError> {
        let n = data.len();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(InferenceError::CovarianceShape {
                rows: covariance.nrows(),
                cols: covariance.ncols(),
                n,
            });
        }
        if covariance.iter().any(|v| !v.is_finite()) || data.iter().any(|v| !v.is_finite()) {
            return Err(InferenceError::NonFinite);
        }
        let factor = Cholesky::new(covariance).ok_or(InferenceError::NotPositiveDefinite)?;
        Ok(GaussianLikelihood {
            data: DVector::from_column_slice(data),
            factor,
        })
    }

    pub fn from_observations(obs: &ObservationSet) -> Result<Self, InferenceError> {
        Self::new(&obs.values, obs.covariance_matrix())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        self.data.as_slice()
    }

    /// Log likelihood of a predicted observation vector; `-inf` on a length
    /// mismatch or non-finite prediction.
    pub fn log_likelihood(&self, predicted: &[f64]) -> f64 {
        if predicted.len() != self.data.len() || predicted.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let mut r = DVector::from_column_slice(predicted) - &self.data;
        self.factor
            .l_dirty()
            .solve_lower_triangular_mut(&mut r);
        -0.5 * r.norm_squared()
    }
}

/// Log likelihood of a latent vector through a forward map. A failing
/// forward solve yields `-inf`.
pub fn log_likelihood<F, E>(xi: &[f64], likelihood: &GaussianLikelihood, forward: F) -> f64
where
    F: FnOnce(&[f64]) -> Result<Vec<f64>, E>,
{
    match forward(xi) {
        Ok(y) => likelihood.log_likelihood(&y),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Unnormalized log target density.
pub trait LogDensity {
    fn log_density(&mut self, x: &[f64]) -> f64;
}

impl<F: FnMut(&[f64]) -> f64> LogDensity for F {
    fn log_density(&mut self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Standard normal prior times a Gaussian likelihood of a forward map.
///
/// With `likelihood = None` the posterior reduces to the prior.
pub struct Posterior<F> {
    pub likelihood: Option<GaussianLikelihood>,
    pub forward: F,
    pub failures: usize,
}

impl<F, E> Posterior<F>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, E>,
{
    pub fn new(likelihood: Option<GaussianLikelihood>, forward: F) -> Self {
        Posterior {
            likelihood,
            forward,
            failures: 0,
        }
    }

    pub fn log_posterior(&mut self, xi: &[f64]) -> f64 {
        let prior = log_prior(xi);
        match &self.likelihood {
            None => prior,
            Some(l) => match (self.forward)(xi) {
                Ok(y) => prior + l.log_likelihood(&y),
                Err(_) => {
                    self.failures += 1;
                    f64::NEG_INFINITY
                }
            },
        }
    }
}

impl<F, E> LogDensity for Posterior<F>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>, E>,
{
    fn log_density(&mut self, x: &[f64]) -> f64 {
        self.log_posterior(x)
    }
}

/// Output of one Markov chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub samples: Vec<Vec<f64>>,
    pub logpost: Vec<f64>,
    pub accepted: Vec<bool>,
    pub proposal_scale: f64,
    pub seed: u64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            return 0.0;
        }
        self.accepted.iter().filter(|a| **a).count() as f64 / self.accepted.len() as f64
    }
}

fn finite_or_neg_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

struct Walker {
    state: Vec<f64>,
    logpost: f64,
    proposal: Vec<f64>,
    noise: Vec<f64>,
}

impl Walker {
    fn new<T: LogDensity + ?Sized>(target: &mut T, init: &[f64]) -> Self {
        Walker {
            state: init.to_vec(),
            logpost: finite_or_neg_inf(target.log_density(init)),
            proposal: vec![0.0; init.len()],
            noise: vec![0.0; init.len()],
        }
    }

    /// One Gaussian random-walk proposal `ξ + scale·Lη` (`L = I` when no
    /// shape is given) and Metropolis accept/reject.
    fn advance<T: LogDensity + ?Sized, R: Rng>(
        &mut self,
        target: &mut T,
        scale: f64,
        shape: Option<&DMatrix<f64>>,
        rng: &mut R,
    ) -> bool {
        for e in self.noise.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        match shape {
            None => {
                for ((p, x), e) in self.proposal.iter_mut().zip(&self.state).zip(&self.noise) {
                    *p = x + scale * e;
                }
            }
            Some(l) => {
                for (i, (p, x)) in self.proposal.iter_mut().zip(&self.state).enumerate() {
                    let step: f64 = (0..=i).map(|j| l[(i, j)] * self.noise[j]).sum();
                    *p = x + scale * step;
                }
            }
        }
        let u: f64 = rng.random();
        let candidate = finite_or_neg_inf(target.log_density(&self.proposal));
        let accept = candidate > f64::NEG_INFINITY
            && (self.logpost == f64::NEG_INFINITY || u.ln() < candidate - self.logpost);
        if accept {
            std::mem::swap(&mut self.state, &mut self.proposal);
            self.logpost = candidate;
        }
        accept
    }
}

/// Cholesky factor of the warm-up covariance, normalized to unit mean
/// variance so the tuned scale keeps its meaning when the shape changes.
fn proposal_shape(history: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let mut c = empirical_covariance(history);
    let d = c.nrows();
    let mean_var = c.trace() / d as f64;
    if !(mean_var > 0.0 && mean_var.is_finite()) {
        return None;
    }
    c /= mean_var;
    for i in 0..d {
        c[(i, i)] += 1e-6;
    }
    Cholesky::new(c).map(|f| f.l())
}

/// Isotropic random-walk Metropolis without warm-up: `ξ' = ξ + scale·η`,
/// `η ~ N(0, I)`, accepted with probability `min(1, exp(Δ log target))`. The
/// chain stores the state after each of the `n_samples` steps.
pub fn metropolis_hastings<T: LogDensity + ?Sized>(
    target: &mut T,
    init: &[f64],
    n_samples: usize,
    proposal_scale: f64,
    seed: u64,
) -> Result<Chain, InferenceError> {
    let cfg = SamplerConfig {
        n_samples,
        warmup: 0,
        proposal_scale,
        seed,
        progress_every: 0,
    };
    run_sampler(target, init, &cfg, &mut |_, _| {})
}

/// Settings of one sampler run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_samples: usize,
    /// Discarded steps during which the proposal scale and shape are tuned.
    pub warmup: usize,
    /// Initial proposal scale.
    pub proposal_scale: f64,
    pub seed: u64,
    /// Progress callback interval in steps (0 disables).
    pub progress_every: usize,
}

/// Acceptance band the warm-up steers the proposal scale into.
pub const TARGET_ACCEPTANCE: (f64, f64) = (0.2, 0.5);
const TUNING_BATCH: usize = 50;
/// Shortest warm-up that also adapts the proposal covariance.
pub const MIN_SHAPED_WARMUP: usize = 200;

/// Warm-up with proposal tuning followed by a chain with a fixed proposal.
///
/// The first half of the warm-up tunes the scale of an isotropic walk. From
/// then on the proposal covariance follows the empirical covariance of the
/// warm-up states after the first quarter, refreshed every tuning batch, and
/// the scale keeps being steered into [`TARGET_ACCEPTANCE`]. Warm-ups shorter
/// than [`MIN_SHAPED_WARMUP`] stay isotropic.
///
/// `progress(step, acceptance_rate)` is called every `progress_every` steps
/// of the main chain.
pub fn run_sampler<T: LogDensity + ?Sized>(
    target: &mut T,
    init: &[f64],
    cfg: &SamplerConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<Chain, InferenceError> {
    if cfg.n_samples == 0 {
        return Err(InferenceError::Sampler("n_samples must be at least 1".into()));
    }
    if !(cfg.proposal_scale > 0.0 && cfg.proposal_scale.is_finite()) {
        return Err(InferenceError::Sampler(format!(
            "proposal scale must be positive, got {}",
            cfg.proposal_scale
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut walker = Walker::new(target, init);
    let mut scale = cfg.proposal_scale;
    let mut shape: Option<DMatrix<f64>> = None;
    let shaped = cfg.warmup >= MIN_SHAPED_WARMUP && init.len() > 1;
    let mut history = Vec::new();

    let mut batch_accepted = 0usize;
    for step in 1..=cfg.warmup {
        if walker.advance(target, scale, shape.as_ref(), &mut rng) {
            batch_accepted += 1;
        }
        if shaped && step > cfg.warmup / 4 {
            history.push(walker.state.clone());
        }
        if step % TUNING_BATCH == 0 {
            let rate = batch_accepted as f64 / TUNING_BATCH as f64;
            if rate < TARGET_ACCEPTANCE.0 {
                scale *= 0.7;
            } else if rate > TARGET_ACCEPTANCE.1 {
                scale *= 1.4;
            }
            batch_accepted = 0;
            if shaped && step >= cfg.warmup / 2 {
                if let Some(l) = proposal_shape(&history) {
                    shape = Some(l);
                }
            }
        }
    }

    let mut chain = Chain {
        samples: Vec::with_capacity(cfg.n_samples),
        logpost: Vec::with_capacity(cfg.n_samples),
        accepted: Vec::with_capacity(cfg.n_samples),
        proposal_scale: scale,
        seed: cfg.seed,
    };
    let mut n_accepted = 0usize;
    for step in 1..=cfg.n_samples {
        let ok = walker.advance(target, scale, shape.as_ref(), &mut rng);
        n_accepted += ok as usize;
        chain.samples.push(walker.state.clone());
        chain.logpost.push(walker.logpost);
        chain.accepted.push(ok);
        if cfg.progress_every > 0 && step % cfg.progress_every == 0 {
            progress(step, n_accepted as f64 / step as f64);
        }
    }
    Ok(chain)
}

/// Independent chains differing only by seed (`seed + k`), run in parallel.
/// `make_target(k)` builds the target owned by chain `k`.
pub fn run_chains<T, B>(
    make_target: B,
    init: &[f64],
    cfg: &SamplerConfig,
    chains: usize,
) -> Result<Vec<Chain>, InferenceError>
where
    T: LogDensity,
    B: Fn(usize) -> T + Sync,
{
    (0..chains)
        .into_par_iter()
        .map(|k| {
            let mut target = make_target(k);
            let c = SamplerConfig {
                seed: cfg.seed.wrapping_add(k as u64),
                progress_every: 0,
                ..*cfg
            };
            run_sampler(&mut target, init, &c, &mut |_, _| {})
        })
        .collect()
}

/// Summary statistics of a chain after burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub length: usize,
    pub burn_in: usize,
    pub retained: usize,
    pub acceptance_rate: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Integrated autocorrelation time per coordinate; `None` for a
    /// coordinate that never moves.
    pub autocorrelation_time: Vec<Option<f64>>,
    pub effective_sample_size: Vec<Option<f64>>,
}

/// Integrated autocorrelation time with Sokal's self-consistent window
/// (`W >= 5 τ(W)`). Returns `None` for a constant series.
pub fn autocorrelation_time(x: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if !(var > 0.0) {
        return None;
    }
    let mut tau = 1.0;
    for lag in 1..n {
        let c = x[..n - lag]
            .iter()
            .zip(&x[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / (n as f64 * var);
        tau += 2.0 * c;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    Some(tau.max(1.0 / n as f64))
}

pub fn chain_diagnostics(chain: &Chain, burn_in: usize) -> ChainSummary {
    let n = chain.len();
    let burn_in = burn_in.min(n.saturating_sub(1));
    let kept = &chain.samples[burn_in..];
    let dim = chain.dim();
    let m = kept.len() as f64;
    let mut mean = vec![0.0; dim];
    let mut std = vec![0.0; dim];
    let mut tau = Vec::with_capacity(dim);
    let mut ess = Vec::with_capacity(dim);
    for d in 0..dim {
        let series: Vec<f64> = kept.iter().map(|s| s[d]).collect();
        let mu = series.iter().sum::<f64>() / m;
        let var = if series.len() > 1 {
            series.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        mean[d] = mu;
        std[d] = var.sqrt();
        let t = autocorrelation_time(&series);
        tau.push(t);
        ess.push(t.map(|t| m / t));
    }
    let accepted = &chain.accepted[burn_in..];
    let acceptance_rate = if accepted.is_empty() {
        0.0
    } else {
        accepted.iter().filter(|a| **a).count() as f64 / accepted.len() as f64
    };
    ChainSummary {
        length: n,
        burn_in,
        retained: kept.len(),
        acceptance_rate,
        mean,
        std,
        autocorrelation_time: tau,
        effective_sample_size: ess,
    }
}

/// Gelman–Rubin potential scale reduction per coordinate across chains of
/// equal length, after dropping `burn_in` samples from each.
pub fn potential_scale_reduction(chains: &[Chain], burn_in: usize) -> Vec<f64> {
    let m = chains.len();
    if m < 2 {
        return Vec::new();
    }
    let n = chains.iter().map(|c| c.len().saturating_sub(burn_in)).min().unwrap_or(0);
    if n < 2 {
        return Vec::new();
    }
    let dim = chains[0].dim();
    (0..dim)
        .map(|d| {
            let stats: Vec<(f64, f64)> = chains
                .iter()
                .map(|c| {
                    let xs: Vec<f64> = c.samples[burn_in..burn_in + n].iter().map(|s| s[d]).collect();
                    let mu = xs.iter().sum::<f64>() / n as f64;
                    let var = xs.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
                    (mu, var)
                })
                .collect();
            let grand = stats.iter().map(|s| s.0).sum::<f64>() / m as f64;
            let b = n as f64 / (m - 1) as f64 * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>();
            let w = stats.iter().map(|s| s.1).sum::<f64>() / m as f64;
            let var_plus = (n - 1) as f64 / n as f64 * w + b / n as f64;
            (var_plus / w).sqrt()
        })
        .collect()
}
