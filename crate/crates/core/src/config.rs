//! Experiment configuration and the shipped presets.
//!
//! Configs are JSON. A file may specify any subset of keys; the rest are
//! taken from the selected preset (see [`ExperimentConfig::merged`]).

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::fem::{BoundaryConditions, MeshSpec, SolverConfig};
use crate::material::MaterialParams;
use crate::randfield::CovarianceSpec;

const HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    PaperFull,
    PaperDesk,
}

impl Preset {
    pub fn parse(name: &str) -> Option<Preset> {
        match name {
            "paper-full" => Some(Preset::PaperFull),
            "paper-desk" => Some(Preset::PaperDesk),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::PaperFull => "paper-full",
            Preset::PaperDesk => "paper-desk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorTable {
    pub mean: MaterialParams,
    pub std: MaterialParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub theta: f64,
    pub phi: f64,
}

/// Time stepping in hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStepping {
    pub dt_hours: f64,
    pub t_end_hours: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
}

impl TimeStepping {
    pub fn to_solver(self) -> SolverConfig {
        SolverConfig {
            dt: self.dt_hours * HOUR,
            t_end: self.t_end_hours * HOUR,
            picard_tol: self.picard_tol,
            picard_max: self.picard_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensors {
    /// x₁ positions of the probe columns as fractions of the width.
    pub columns: Vec<f64>,
    /// Equispaced probes per column, strictly inside the height.
    pub per_column: usize,
    /// Explicit probe coordinates [m]; when non-empty they replace the columns.
    #[serde(default)]
    pub explicit: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub sigma_theta: f64,
    pub sigma_phi: f64,
    pub replicates: usize,
    /// Diagonal shift of the empirical covariance, relative to its mean variance.
    pub regularization: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mcmc {
    pub n_samples: usize,
    pub warmup: usize,
    pub proposal_scale: f64,
    pub burn_in_fraction: f64,
    pub chains: usize,
    pub progress_every: usize,
    /// When false the likelihood is dropped and the chain samples the prior.
    pub use_likelihood: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarySettings {
    /// Posterior samples replayed through the forward model.
    pub response_sets: usize,
    /// Prior samples drawn for comparison sets.
    pub prior_samples: usize,
    /// Probe nodes for response envelopes, given as fractional (x₁, x₂)
    /// positions; each maps to its nearest mesh node.
    pub probe_points: Vec<[f64; 2]>,
    pub envelope_times_hours: Vec<f64>,
    /// Lower quantile of the reported bands; the upper one is `1 - band`.
    pub band: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub reference: u64,
    pub noise: u64,
    pub chain: u64,
    pub prior: u64,
}

impl Seeds {
    pub fn from_master(seed: u64) -> Seeds {
        Seeds {
            reference: seed,
            noise: seed.wrapping_add(1),
            chain: seed.wrapping_add(2),
            prior: seed.wrapping_add(3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub mesh: MeshSpec,
    pub prior: PriorTable,
    pub correlation: CovarianceSpec,
    /// Number of retained KLE modes M.
    pub kle_modes: usize,
    pub initial: InitialState,
    pub boundary: BoundaryConditions,
    pub time: TimeStepping,
    pub sensors: Sensors,
    pub measurement_times_hours: Vec<f64>,
    pub noise: Noise,
    pub mcmc: Mcmc,
    pub summary: SummarySettings,
    pub seeds: Seeds,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> ExperimentConfig {
        let full = ExperimentConfig {
            preset,
            mesh: MeshSpec::WALL,
            prior: PriorTable {
                mean: MaterialParams::MASONRY_MEAN,
                std: MaterialParams::MASONRY_STD,
            },
            correlation: CovarianceSpec {
                l_x1: 0.1,
                l_x2: 0.04,
            },
            kle_modes: 7,
            initial: InitialState {
                theta: 14.0,
                phi: 0.5,
            },
            boundary: BoundaryConditions {
                exterior_theta: 5.0,
                exterior_phi: 0.5,
                interior_theta: 24.0,
                interior_phi: 0.8,
            },
            time: TimeStepping {
                dt_hours: 1.0,
                t_end_hours: 200.0,
                picard_tol: 1e-8,
                picard_max: 50,
            },
            sensors: Sensors {
                columns: vec![1.0 / 3.0, 2.0 / 3.0],
                per_column: 7,
                explicit: Vec::new(),
            },
            measurement_times_hours: vec![50.0, 100.0, 200.0],
            noise: Noise {
                sigma_theta: 0.2,
                sigma_phi: 0.02,
                replicates: 100,
                regularization: 1e-10,
            },
            mcmc: Mcmc {
                n_samples: 80_000,
                warmup: 2_000,
                proposal_scale: 0.1,
                burn_in_fraction: 0.2,
                chains: 1,
                progress_every: 1_000,
                use_likelihood: true,
            },
            summary: SummarySettings {
                response_sets: 200,
                prior_samples: 200,
                probe_points: vec![[0.25, 0.5], [0.5, 0.5], [0.75, 0.5]],
                envelope_times_hours: (1..=20).map(|k| 10.0 * k as f64).collect(),
                band: 0.05,
            },
            seeds: Seeds::from_master(2012),
        };
        match preset {
            Preset::PaperFull => full,
            Preset::PaperDesk => ExperimentConfig {
                kle_modes: 3,
                time: TimeStepping {
                    dt_hours: 2.0,
                    picard_tol: 1e-6,
                    ..full.time
                },
                mcmc: Mcmc {
                    n_samples: 5_000,
                    warmup: 1_000,
                    progress_every: 500,
                    ..full.mcmc
                },
                ..full
            },
        }
    }

    /// Overlays the keys present in `overrides` onto `preset`.
    pub fn merged(preset: Preset, overrides: &Value) -> Result<ExperimentConfig, String> {
        let mut base = serde_json::to_value(Self::preset(preset)).map_err(|e| e.to_string())?;
        merge(&mut base, overrides);
        serde_json::from_value(base).map_err(|e| e.to_string())
    }

    /// Parses a JSON config; its `preset` key (default `paper-desk`) selects
    /// the base that missing keys come from.
    pub fn from_json(text: &str, fallback: Preset) -> Result<ExperimentConfig, String> {
        let v: Value = serde_json::from_str(text).map_err(|e| format!("config is not valid JSON: {e}"))?;
        let preset = match v.get("preset") {
            Some(Value::String(s)) => Preset::parse(s).ok_or_else(|| format!("unknown preset {s:?}"))?,
            Some(_) => return Err("preset must be a string".into()),
            None => fallback,
        };
        Self::merged(preset, &v)
    }

    pub fn solver(&self) -> SolverConfig {
        self.time.to_solver()
    }

    pub fn measurement_times(&self) -> Vec<f64> {
        self.measurement_times_hours.iter().map(|h| h * HOUR).collect()
    }

    pub fn envelope_times(&self) -> Vec<f64> {
        self.summary.envelope_times_hours.iter().map(|h| h * HOUR).collect()
    }

    pub fn sensor_points(&self) -> Vec<[f64; 2]> {
        if !self.sensors.explicit.is_empty() {
            return self.sensors.explicit.clone();
        }
        let (w, h) = (self.mesh.width, self.mesh.height);
        let k = self.sensors.per_column;
        self.sensors
            .columns
            .iter()
            .flat_map(|&c| (1..=k).map(move |j| [c * w, h * j as f64 / (k + 1) as f64]))
            .collect()
    }

    pub fn burn_in(&self) -> usize {
        (self.mcmc.burn_in_fraction * self.mcmc.n_samples as f64).floor() as usize
    }

    /// Checks everything that can be checked without building the mesh.
    pub fn validate(&self) -> Result<(), String> {
        let n_elements = 2 * (self.mesh.nx.saturating_sub(1)) * (self.mesh.ny.saturating_sub(1));
        if self.kle_modes == 0 || self.kle_modes > n_elements {
            return Err(format!(
                "kle_modes = {} must lie in 1..={} (element count)",
                self.kle_modes, n_elements
            ));
        }
        self.correlation.validate().map_err(|e| e.to_string())?;
        self.prior.mean.validate().map_err(|e| format!("prior mean: {e}"))?;
        for v in self.prior.std.to_array() {
            if !(v >= 0.0 && v.is_finite()) {
                return Err("prior standard deviations must be non-negative".into());
            }
        }
        self.solver().validate().map_err(|e| e.to_string())?;
        let t_end = self.time.t_end_hours;
        let in_horizon = |t: &f64| *t >= 0.0 && *t <= t_end;
        let ascending = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if self.measurement_times_hours.is_empty()
            || !self.measurement_times_hours.iter().all(in_horizon)
            || !ascending(&self.measurement_times_hours)
        {
            return Err(format!(
                "measurement times must be ascending and within [0, {t_end}] h"
            ));
        }
        if !self.summary.envelope_times_hours.iter().all(in_horizon)
            || !ascending(&self.summary.envelope_times_hours)
        {
            return Err(format!("envelope times must be ascending and within [0, {t_end}] h"));
        }
        if !(self.noise.sigma_theta > 0.0 && self.noise.sigma_phi > 0.0) {
            return Err("noise levels must be positive".into());
        }
        if self.noise.replicates < 2 {
            return Err("at least two replicates are needed for an empirical covariance".into());
        }
        if self.sensor_points().is_empty() {
            return Err("no sensors configured".into());
        }
        if self.mcmc.n_samples == 0 || !(self.mcmc.proposal_scale > 0.0) || self.mcmc.chains == 0 {
            return Err("MCMC needs n_samples >= 1, chains >= 1 and a positive proposal scale".into());
        }
        if !(0.0..1.0).contains(&self.mcmc.burn_in_fraction) {
            return Err("burn_in_fraction must lie in [0, 1)".into());
        }
        if !(self.summary.band > 0.0 && self.summary.band < 0.5) {
            return Err("summary band must lie in (0, 0.5)".into());
        }
        let phi_ok = |p: f64| p > 0.0 && p < 1.0;
        let b = self.boundary;
        if !(phi_ok(self.initial.phi) && phi_ok(b.exterior_phi) && phi_ok(b.interior_phi)) {
            return Err("relative humidities must lie in (0, 1)".into());
        }
        Ok(())
    }
}

fn merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}
