//! Staged execution against an output directory. Each stage writes its
//! artifacts and records itself in `manifest.json`; later stages refuse to
//! run until their prerequisite is recorded.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ExperimentConfig, Seeds};
use crate::experiment::{Experiment, ExperimentError};
use crate::inference::{chain_diagnostics, potential_scale_reduction, ChainSummary, GaussianLikelihood, ObservationSet};
use crate::io::{self, fmt_f64, IoError};
use crate::material::Parameter;
use crate::randfield::LatentVector;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("data error: {0}")]
    Data(String),
}

impl PipelineError {
    /// Process exit status: 2 configuration, 3 numerical, 4 data.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Numerical(_) => 3,
            PipelineError::Data(_) => 4,
        }
    }
}

impl From<ExperimentError> for PipelineError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(m) => PipelineError::Config(m),
            other => PipelineError::Numerical(other.to_string()),
        }
    }
}

impl From<IoError> for PipelineError {
    fn from(e: IoError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Basis,
    Forward,
    Observe,
    Infer,
    Summarize,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Basis => "basis",
            Stage::Forward => "forward",
            Stage::Observe => "observe",
            Stage::Infer => "infer",
            Stage::Summarize => "summarize",
        }
    }

    pub fn prerequisite(self) -> Option<Stage> {
        match self {
            Stage::Basis => None,
            Stage::Forward | Stage::Observe => Some(Stage::Basis),
            Stage::Infer => Some(Stage::Observe),
            Stage::Summarize => Some(Stage::Infer),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub outputs: Vec<String>,
    pub seconds: f64,
    pub seeds: Seeds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_path: Option<String>,
    pub preset: String,
    pub seeds: Seeds,
    pub config: ExperimentConfig,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn new(config: ExperimentConfig, config_path: Option<String>) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_path,
            preset: config.preset.name().to_string(),
            seeds: config.seeds,
            config,
            stages: BTreeMap::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Option<RunManifest>, PipelineError> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(io::read_json(&path)?))
    }

    pub fn has(&self, stage: Stage) -> bool {
        self.stages.contains_key(stage.name())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReferenceRecord {
    latent: LatentVector,
    rejected_draws: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChainRecord {
    seed: u64,
    proposal_scale: f64,
    summary: ChainSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Diagnostics {
    burn_in: usize,
    chains: Vec<ChainRecord>,
    potential_scale_reduction: Vec<f64>,
}

pub struct Pipeline {
    pub dir: PathBuf,
    pub experiment: Experiment,
    pub manifest: RunManifest,
}

impl Pipeline {
    /// Opens `dir`, creating it if needed. Without `config` the configuration
    /// recorded by an earlier stage is reused.
    pub fn open(dir: &Path, config: Option<ExperimentConfig>, config_path: Option<String>) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::Data(format!("{}: {e}", dir.display())))?;
        let existing = RunManifest::load(dir)?;
        let manifest = match (config, existing) {
            (Some(cfg), Some(mut m)) => {
                m.preset = cfg.preset.name().to_string();
                m.seeds = cfg.seeds;
                m.config = cfg;
                if config_path.is_some() {
                    m.config_path = config_path;
                }
                m
            }
            (Some(cfg), None) => RunManifest::new(cfg, config_path),
            (None, Some(m)) => m,
            (None, None) => {
                return Err(PipelineError::Config(format!(
                    "{} has no manifest; pass a configuration or preset",
                    dir.display()
                )))
            }
        };
        let experiment = Experiment::new(manifest.config.clone())?;
        Ok(Pipeline {
            dir: dir.to_path_buf(),
            experiment,
            manifest,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn require(&self, stage: Stage) -> Result<(), PipelineError> {
        match stage.prerequisite() {
            Some(p) if !self.manifest.has(p) => Err(PipelineError::Config(format!(
                "stage `{}` needs the outputs of `{}`; run it first",
                stage.name(),
                p.name()
            ))),
            _ => Ok(()),
        }
    }

    fn record(&mut self, stage: Stage, outputs: Vec<String>, started: Instant) -> Result<Vec<String>, PipelineError> {
        self.manifest.stages.insert(
            stage.name().to_string(),
            StageRecord {
                outputs: outputs.clone(),
                seconds: started.elapsed().as_secs_f64(),
                seeds: self.manifest.config.seeds,
            },
        );
        io::write_json(&self.path(MANIFEST), &self.manifest)?;
        Ok(outputs)
    }

    /// `eigenvalues.csv` with the full spectrum, `eigenvectors.csv` with the
    /// retained modes.
    pub fn basis(&mut self) -> Result<Vec<String>, PipelineError> {
        let started = Instant::now();
        let exp = &self.experiment;
        let full = &exp.full_model.basis;
        io::write_eigenvalues(&self.path("eigenvalues.csv"), &full.eigenvalues, full.total_variance)?;
        io::write_eigenvectors(&self.path("eigenvectors.csv"), &full.grid, &exp.model.basis.eigenvectors)?;
        self.record(Stage::Basis, vec!["eigenvalues.csv".into(), "eigenvectors.csv".into()], started)
    }

    /// Solves for one latent vector (truncated or full length; zeros if
    /// absent) and writes nodal snapshots at the measurement times and the
    /// horizon plus the noiseless sensor predictions.
    pub fn forward(&mut self, xi: Option<Vec<f64>>) -> Result<Vec<String>, PipelineError> {
        self.require(Stage::Forward)?;
        let started = Instant::now();
        let exp = &self.experiment;
        let xi = xi.unwrap_or_else(|| vec![0.0; exp.latent_len()]);
        let model = if xi.len() == exp.model.latent_len() {
            &exp.model
        } else if xi.len() == exp.full_model.latent_len() {
            &exp.full_model
        } else {
            return Err(PipelineError::Config(format!(
                "latent vector has {} entries; expected {} or {}",
                xi.len(),
                exp.model.latent_len(),
                exp.full_model.latent_len()
            )));
        };
        let fields = model.realize(&LatentVector(xi)).map_err(ExperimentError::from)?;
        let mut times = exp.observation.times.clone();
        let t_end = exp.config.solver().t_end;
        if times.last().is_none_or(|&t| t < t_end) {
            times.push(t_end);
        }
        let traj = exp.simulate(&fields, &times).map_err(ExperimentError::from)?;
        let mut outputs = Vec::new();
        for s in &traj {
            let name = format!("trajectory_{}h.csv", fmt_f64(s.t / 3600.0));
            io::write_state(&self.path(&name), &exp.mesh, s)?;
            outputs.push(name);
        }
        let predicted = exp.observation.apply(&traj)?;
        let set = ObservationSet {
            sensors: exp.observation.sensors.clone(),
            times: exp.observation.times.clone(),
            values: predicted,
            covariance: Vec::new(),
        };
        io::write_observations(&self.path("predictions.csv"), &set, None)?;
        outputs.push("predictions.csv".into());
        self.record(Stage::Forward, outputs, started)
    }

    /// Reference draw and synthetic measurements.
    pub fn observe(&mut self) -> Result<Vec<String>, PipelineError> {
        self.require(Stage::Observe)?;
        let started = Instant::now();
        let exp = &self.experiment;
        let reference = exp.draw_reference()?;
        let synthesis = exp.synthesize_observations(&reference)?;
        io::write_json(
            &self.path("reference.json"),
            &ReferenceRecord {
                latent: reference.latent.clone(),
                rejected_draws: reference.rejected_draws,
            },
        )?;
        io::write_fields(&self.path("fields_reference.csv"), &exp.mesh.centroids(), &reference.fields.values)?;
        let last = reference.trajectory.last().expect("record times are never empty");
        let final_name = format!("trajectory_reference_{}h.csv", fmt_f64(last.t / 3600.0));
        io::write_state(&self.path(&final_name), &exp.mesh, last)?;
        io::write_observations(&self.path("observations.csv"), &synthesis.observations, Some(&synthesis.noiseless))?;
        io::write_replicates(&self.path("replicates.csv"), &synthesis.replicates)?;
        io::write_matrix(&self.path("c_obs.csv"), &synthesis.observations.covariance_matrix())?;
        let outputs = ["reference.json", "fields_reference.csv", &final_name, "observations.csv", "replicates.csv", "c_obs.csv"]
            .map(String::from)
            .to_vec();
        self.record(Stage::Observe, outputs, started)
    }

    /// Samples the posterior given `observations.csv` and `c_obs.csv`.
    pub fn infer(&mut self, progress: &mut dyn FnMut(usize, f64)) -> Result<Vec<String>, PipelineError> {
        self.require(Stage::Infer)?;
        let started = Instant::now();
        let exp = &self.experiment;
        let obs = io::read_observations(&self.path("observations.csv"), &self.path("c_obs.csv"))?;
        if obs.sensors.len() != exp.observation.sensors.len() || obs.times.len() != exp.observation.times.len() {
            return Err(PipelineError::Data(format!(
                "observations cover {} sensors × {} times; the configuration has {} × {}",
                obs.sensors.len(),
                obs.times.len(),
                exp.observation.sensors.len(),
                exp.observation.times.len()
            )));
        }
        GaussianLikelihood::from_observations(&obs).map_err(|e| PipelineError::Data(format!("c_obs.csv: {e}")))?;
        let chains = exp.infer(&obs, progress)?;
        let burn_in = exp.config.burn_in().min(chains[0].len().saturating_sub(1));
        io::write_chains(&self.path("chain.csv"), &chains)?;
        let diagnostics = Diagnostics {
            burn_in,
            chains: chains
                .iter()
                .map(|c| ChainRecord {
                    seed: c.seed,
                    proposal_scale: c.proposal_scale,
                    summary: chain_diagnostics(c, burn_in),
                })
                .collect(),
            potential_scale_reduction: potential_scale_reduction(&chains, burn_in),
        };
        io::write_json(&self.path("diagnostics.json"), &diagnostics)?;
        self.record(Stage::Infer, vec!["chain.csv".into(), "diagnostics.json".into()], started)
    }

    /// Posterior and prior summaries of the recorded chain.
    pub fn summarize(&mut self) -> Result<Vec<String>, PipelineError> {
        self.require(Stage::Summarize)?;
        let started = Instant::now();
        let exp = &self.experiment;
        let chains = io::read_chains(&self.path("chain.csv"))?;
        if chains[0].dim() != exp.latent_len() {
            return Err(PipelineError::Data(format!(
                "chain.csv has {} latent columns; the configuration needs {}",
                chains[0].dim(),
                exp.latent_len()
            )));
        }
        let record: ReferenceRecord = io::read_json(&self.path("reference.json"))?;
        let reference = exp.reference_from_latent(record.latent, record.rejected_draws)?;
        let summary = exp.summarize(&chains, &reference)?;
        let grid = &summary.centroids;
        io::write_json(&self.path("summary.json"), &summary.metrics)?;
        io::write_fields(&self.path("fields_posterior_mean.csv"), grid, &summary.posterior_mean)?;
        io::write_fields(&self.path("fields_prior_mean.csv"), grid, &summary.prior_mean)?;
        io::write_field_quantiles(&self.path("fields_quantiles.csv"), grid, &summary.posterior_quantiles)?;
        io::write_field_samples(
            &self.path(&format!("fields_{}_samples.csv", Parameter::Lambda0.name())),
            &[
                ("posterior", &summary.posterior_lambda0_samples),
                ("prior", &summary.prior_lambda0_samples),
            ],
        )?;
        let theta: Vec<_> = summary.envelopes.iter().filter(|r| r.quantity == 0).cloned().collect();
        let phi: Vec<_> = summary.envelopes.iter().filter(|r| r.quantity == 1).cloned().collect();
        io::write_envelopes(&self.path("envelopes_theta.csv"), &theta)?;
        io::write_envelopes(&self.path("envelopes_phi.csv"), &phi)?;
        io::write_response_difference(&self.path("response_difference.csv"), &exp.mesh, &summary.response_difference)?;
        let outputs = [
            "summary.json".to_string(),
            "fields_posterior_mean.csv".into(),
            "fields_prior_mean.csv".into(),
            "fields_quantiles.csv".into(),
            format!("fields_{}_samples.csv", Parameter::Lambda0.name()),
            "envelopes_theta.csv".into(),
            "envelopes_phi.csv".into(),
            "response_difference.csv".into(),
        ]
        .to_vec();
        self.record(Stage::Summarize, outputs, started)
    }

    /// `basis`, `observe`, `infer` and `summarize` in order.
    pub fn run_all(&mut self, progress: &mut dyn FnMut(usize, f64)) -> Result<Vec<String>, PipelineError> {
        let mut out = self.basis()?;
        out.extend(self.observe()?);
        out.extend(self.infer(progress)?);
        out.extend(self.summarize()?);
        Ok(out)
    }
}
