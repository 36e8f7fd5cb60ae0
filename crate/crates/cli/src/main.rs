use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hygro::config::{ExperimentConfig, Preset, Seeds};
use hygro::pipeline::{Pipeline, PipelineError, RunManifest};

/// Bayesian updating of material fields in coupled heat and moisture transport.
#[derive(Debug, Parser)]
#[command(name = "hygro", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration; keys not given fall back to the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory shared by all stages.
    #[arg(long, global = true, default_value = "hygro-out")]
    out: PathBuf,

    /// Master seed; reference, noise, chain and prior seeds derive from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// `paper-full` or `paper-desk` (default).
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Worker threads for parallel chains and summary replays.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Karhunen–Loève eigenpairs of the prior covariance.
    Basis,
    /// Deterministic forward solve for one latent vector.
    Forward {
        /// JSON array with the latent vector; zeros when omitted.
        #[arg(long)]
        xi: Option<PathBuf>,
    },
    /// Reference material and synthetic noisy measurements.
    Observe,
    /// Metropolis–Hastings sampling of the latent posterior.
    Infer,
    /// Posterior and prior summaries against the reference.
    Summarize,
    /// basis, observe, infer and summarize in one go.
    Pipeline,
}

fn resolve_config(cli: &Cli) -> Result<Option<(ExperimentConfig, Option<String>)>, PipelineError> {
    let preset = match &cli.preset {
        Some(name) => Some(
            Preset::parse(name).ok_or_else(|| PipelineError::Config(format!("unknown preset {name:?}")))?,
        ),
        None => None,
    };
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
            let cfg = ExperimentConfig::from_json(&text, preset.unwrap_or(Preset::PaperDesk))
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
            Some((cfg, Some(path.display().to_string())))
        }
        None => match preset {
            Some(p) => Some((ExperimentConfig::preset(p), None)),
            None if cli.seed.is_some() => Some(match RunManifest::load(&cli.out)? {
                Some(m) => (m.config, m.config_path),
                None => (ExperimentConfig::preset(Preset::PaperDesk), None),
            }),
            None if RunManifest::load(&cli.out)?.is_some() => None,
            None => Some((ExperimentConfig::preset(Preset::PaperDesk), None)),
        },
    };
    if let (Some(seed), Some((cfg, _))) = (cli.seed, config.as_mut()) {
        cfg.seeds = Seeds::from_master(seed);
    }
    Ok(config)
}

fn read_latent(path: &Path) -> Result<Vec<f64>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    let xi: Vec<f64> = serde_json::from_str(&text)
        .map_err(|e| PipelineError::Data(format!("{}: expected a JSON array of numbers: {e}", path.display())))?;
    if xi.iter().any(|v| !v.is_finite()) {
        return Err(PipelineError::Data(format!("{}: non-finite entry", path.display())));
    }
    Ok(xi)
}

fn run(cli: &Cli) -> Result<Vec<String>, PipelineError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Config(format!("--threads: {e}")))?;
    }
    let (config, path) = match resolve_config(cli)? {
        Some((c, p)) => (Some(c), p),
        None => (None, None),
    };
    let mut pipeline = Pipeline::open(&cli.out, config, path)?;
    let mut progress = |step: usize, rate: f64| eprintln!("step {step} acceptance {rate:.3}");
    match &cli.command {
        Command::Basis => pipeline.basis(),
        Command::Forward { xi } => {
            let xi = xi.as_deref().map(read_latent).transpose()?;
            let outputs = pipeline.forward(xi)?;
            if let Some(r) = pipeline.manifest.stages.get("forward") {
                eprintln!("forward solve: {:.3} s", r.seconds);
            }
            Ok(outputs)
        }
        Command::Observe => pipeline.observe(),
        Command::Infer => pipeline.infer(&mut progress),
        Command::Summarize => pipeline.summarize(),
        Command::Pipeline => pipeline.run_all(&mut progress),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outputs) => {
            for name in outputs {
                println!("{}", cli.out.join(name).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("hygro: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
