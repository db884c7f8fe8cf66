//! Command-line front end: manifests in, manifests and metric tables out.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use cuelab_core::{AblationKind, Protocol, SpectralSetting};

use crate::commands::{AblateArgs, IngestArgs, ProbeArgs, SpectralArgs, SpectrumArgs, SynthArgs};
use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "cuelab", version, about = "Cue ablation and spectral randomization toolkit")]
pub struct Cli {
    /// Global seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Config override, `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Index a `<class>/<image>.png` tree into a split manifest.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Mask tree mirroring the input tree.
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Materialize one ablated variant of a manifest.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        /// Kind code (TSC, TS, ...) or name (color_only, ...).
        #[arg(long)]
        kind: AblationKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Materialize one spectral randomization setting of a manifest.
    Spectral {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        setting: SpectralSetting,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic cue dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: SynthOpts,
    },
    /// Run an evaluation protocol and write a metrics table.
    Probe {
        #[arg(long)]
        protocol: Protocol,
        #[arg(long)]
        manifest: PathBuf,
        /// Pre-built variant, `KEY=MANIFEST`; repeatable.
        #[arg(long = "variant", value_name = "KEY=MANIFEST")]
        variants: Vec<String>,
        /// Dataset name in the metrics table.
        #[arg(long)]
        name: Option<String>,
        /// Feature map, e.g. `random_relu:16:512` or `raw_downsample:16`.
        #[arg(long)]
        feature: Option<String>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Comma-separated ablation kinds.
        #[arg(long)]
        kinds: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export centered log-magnitude spectra.
    Spectrum {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SynthOpts {
    #[arg(long)]
    pub classes: Option<usize>,
    /// Comma-separated informative cues.
    #[arg(long)]
    pub informative: Option<String>,
    #[arg(long)]
    pub image_size: Option<usize>,
    /// Training images per class.
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub val: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
}

/// Outcome summary for the caller.
#[derive(Debug)]
pub enum Outcome {
    Manifest { records: usize },
    Metrics { rows: usize },
    Spectra { files: usize },
}

fn set_opt(cfg: &mut RunConfig, key: &str, value: Option<impl ToString>) -> Result<()> {
    match value {
        Some(v) => cfg.set(key, &v.to_string()),
        None => Ok(()),
    }
}

/// Defaults, then the config file, then `--set` overrides, then flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("override '{o}' is not KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    set_opt(&mut cfg, "seed", cli.seed)?;
    set_opt(&mut cfg, "workers", cli.workers)?;
    match &cli.command {
        Command::Synth { opts, .. } => {
            set_opt(&mut cfg, "synth.classes", opts.classes)?;
            set_opt(&mut cfg, "synth.informative", opts.informative.as_ref())?;
            set_opt(&mut cfg, "synth.image_size", opts.image_size)?;
            set_opt(&mut cfg, "synth.train", opts.train)?;
            set_opt(&mut cfg, "synth.val", opts.val)?;
            set_opt(&mut cfg, "synth.test", opts.test)?;
        }
        Command::Probe { feature, repeats, kinds, .. } => {
            set_opt(&mut cfg, "probe.feature", feature.as_ref())?;
            set_opt(&mut cfg, "repeats", *repeats)?;
            set_opt(&mut cfg, "kinds", kinds.as_ref())?;
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_variants(raw: &[String]) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for v in raw {
        let (k, p) = v
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("variant '{v}' is not KEY=MANIFEST")))?;
        if out.insert(k.to_string(), PathBuf::from(p)).is_some() {
            return Err(CliError::Usage(format!("variant '{k}' given twice")));
        }
    }
    Ok(out)
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<Outcome> {
    let manifest = |m: manifest::Manifest| Outcome::Manifest { records: m.records.len() };
    Ok(match command {
        Command::Ingest { input, masks, out } => manifest(commands::ingest(
            &IngestArgs { input: input.clone(), masks: masks.clone(), out: out.clone() },
            cfg,
        )?),
        Command::Ablate { manifest: m, kind, out } => manifest(commands::ablate(
            &AblateArgs { manifest: m.clone(), kind: *kind, out: out.clone() },
            cfg,
        )?),
        Command::Spectral { manifest: m, setting, out } => manifest(commands::spectral(
            &SpectralArgs { manifest: m.clone(), setting: *setting, out: out.clone() },
            cfg,
        )?),
        Command::Synth { out, .. } => manifest(commands::synth(&SynthArgs { out: out.clone() }, cfg)?),
        Command::Probe { protocol, manifest: m, variants, name, out, .. } => {
            let args = ProbeArgs {
                protocol: *protocol,
                manifest: m.clone(),
                variants: parse_variants(variants)?,
                name: name.clone(),
                out: out.clone(),
            };
            Outcome::Metrics { rows: commands::probe(&args, cfg)?.rows.len() }
        }
        Command::Spectrum { manifest: m, out } => Outcome::Spectra {
            files: commands::spectrum(&SpectrumArgs { manifest: m.clone(), out: out.clone() }, cfg)?,
        },
    })
}

/// Resolves the config and runs the command on a dedicated thread pool.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let cfg = resolve_config(cli)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", cfg.workers.unwrap_or(0))))?;
    pool.install(|| dispatch(&cli.command, &cfg))
}
