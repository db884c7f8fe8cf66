//! Subcommand implementations.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use cuelab_core::ablation::AblationConfig;
use cuelab_core::imgcore::{channel_histogram, load_image, load_mask, region_histogram, save_image, MeanAccumulator};
use cuelab_core::protocol::Variant;
use cuelab_core::spectral::export_spectrum;
use cuelab_core::synthgen::{audit, generate};
use cuelab_core::{
    run_protocol, AblationKind, CueSpec, Dataset, Image, MetricsTable, Protocol, ProtocolConfig, RngStream, Sample,
    SpectralSetting, Split, SplitCounts,
};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{
    check_sample_id, create_parent, version, write_dataset, write_json, write_jsonl, Manifest, Metadata,
    SampleRecord, MANIFEST_FILE,
};

pub const SNAPSHOT_FILE: &str = "run_config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PAIRS_FILE: &str = "pairs.jsonl";

#[derive(Serialize)]
struct Snapshot<'a, A: Serialize> {
    command: &'a str,
    version: String,
    args: A,
    config: &'a RunConfig,
}

fn write_snapshot<A: Serialize>(out_dir: &Path, command: &str, args: A, cfg: &RunConfig) -> Result<()> {
    write_json(
        &out_dir.join(SNAPSHOT_FILE),
        &Snapshot {
            command,
            version: version(),
            args,
            config: cfg,
        },
    )
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::data(dir, e))
}

fn ablation_config(cfg: &RunConfig, ds: &Dataset) -> AblationConfig {
    AblationConfig {
        sketch: cfg.sketch,
        mean_rgb: ds.mean_rgb,
        patch_size: cfg.patch_size,
        shape_contrast: cfg.shape_contrast,
    }
}

/// Default dataset name: the manifest's directory name.
pub fn dataset_name(manifest: &Manifest) -> String {
    manifest
        .base_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

#[derive(Clone, Debug, Serialize)]
pub struct IngestArgs {
    pub input: PathBuf,
    pub masks: Option<PathBuf>,
    pub out: PathBuf,
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::data(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| CliError::data(dir, err)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

/// Indexes a `class/*.png` tree, splits each class, and writes a manifest
/// that references the original files.
pub fn ingest(args: &IngestArgs, cfg: &RunConfig) -> Result<Manifest> {
    let input = fs::canonicalize(&args.input).map_err(|e| CliError::data(&args.input, e))?;
    let stray = png_files(&input)?;
    if let Some(f) = stray.first() {
        return Err(CliError::data(f, "image has no class directory; expected <input>/<class>/<image>.png"));
    }
    let mut class_dirs: Vec<PathBuf> = fs::read_dir(&input)
        .map_err(|e| CliError::data(&input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();

    let mut classes = Vec::new();
    let mut records = Vec::new();
    for dir in &class_dirs {
        let class = dir.file_name().expect("directory entry").to_string_lossy().into_owned();
        let mut files = png_files(dir)?;
        if files.is_empty() {
            continue;
        }
        files.shuffle(&mut RngStream::new(cfg.seed, &class, "ingest_split").rng());
        let n = files.len() as f64;
        let n_train = (n * cfg.split.train).round() as usize;
        let n_val = ((n * cfg.split.val).round() as usize).min(files.len() - n_train.min(files.len()));
        for (i, file) in files.iter().enumerate() {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            let stem = file.file_stem().expect("png file").to_string_lossy().into_owned();
            let mask_path = match &args.masks {
                Some(m) => {
                    let p = m.join(&class).join(file.file_name().expect("png file"));
                    let p = fs::canonicalize(&p).map_err(|_| CliError::data(&p, "mask not found"))?;
                    Some(p.to_string_lossy().into_owned())
                }
                None => None,
            };
            let sample_id = format!("{class}/{stem}");
            check_sample_id(&sample_id)?;
            records.push(SampleRecord {
                sample_id,
                image_path: file.to_string_lossy().into_owned(),
                mask_path,
                label: class.clone(),
                split,
            });
        }
        classes.push(class);
    }
    if records.is_empty() {
        return Err(CliError::data(&input, "no images found"));
    }
    records.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    // Validate every file and accumulate the training mean in record order.
    let per_record = records
        .par_iter()
        .map(|r| {
            let img = load_image(&r.image_path)?;
            img.check_transform_size().map_err(|e| CliError::data(&r.image_path, e))?;
            if let Some(m) = &r.mask_path {
                load_mask(m)?.ensure_matches(&img).map_err(|e| CliError::data(m, e))?;
            }
            let mut acc = MeanAccumulator::default();
            if r.split == Split::Train {
                acc.add(&img);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = per_record
        .iter()
        .fold(MeanAccumulator::default(), |acc, p| acc.merge(p))
        .finish()?;

    ensure_dir(&args.out)?;
    let manifest = Manifest {
        records,
        metadata: Metadata {
            classes,
            mean_rgb: mean.rgb(),
            seed: cfg.seed,
            version: version(),
        },
        base_dir: args.out.clone(),
    };
    manifest.write(&args.out.join(MANIFEST_FILE))?;
    write_snapshot(&args.out, "ingest", args, cfg)?;
    Ok(manifest)
}

#[derive(Clone, Debug, Serialize)]
pub struct AblateArgs {
    pub manifest: PathBuf,
    pub kind: AblationKind,
    pub out: PathBuf,
}

fn channel_constant(img: &Image, shade: [f64; 3]) -> bool {
    (0..img.pixel_count()).all(|i| {
        let p = img.pixel_at(i);
        let e = p[0] / shade[0];
        (1..3).all(|c| (p[c] / shade[c] - e).abs() < 1e-9)
    })
}

/// Checks the invariant each ablation promises for one sample.
fn verify_ablation(kind: AblationKind, input: &Sample, output: &Image, shade: [f64; 3]) -> Result<()> {
    let ok = match kind {
        AblationKind::ColorOnly => channel_histogram(output) == channel_histogram(&input.image),
        AblationKind::ShapeColor => {
            let mask = input.mask.as_ref().expect("shape_color ran with a mask");
            let lesion: Vec<usize> = (0..mask.data().len()).filter(|&i| mask.data()[i]).collect();
            channel_histogram(output) == channel_histogram(&input.image)
                && region_histogram(output, lesion.iter().copied())
                    == region_histogram(&input.image, lesion.iter().copied())
        }
        AblationKind::TextureShape | AblationKind::TextureOnly => shade.iter().all(|&s| s <= 0.0) || channel_constant(output, shade),
        _ => true,
    };
    if ok {
        Ok(())
    } else {
        Err(CliError::Invariant(format!("{} output for '{}' breaks its conservation law", kind.name(), input.id)))
    }
}

pub fn ablate(args: &AblateArgs, cfg: &RunConfig) -> Result<Manifest> {
    let manifest = Manifest::read(&args.manifest)?;
    let ds = manifest.load_dataset(&dataset_name(&manifest))?;
    let out = ds.ablated(args.kind, &ablation_config(cfg, &ds), cfg.seed)?;
    let shade = ds.mean_rgb.rgb();
    ds.samples
        .par_iter()
        .zip(out.samples.par_iter())
        .try_for_each(|(a, b)| verify_ablation(args.kind, a, &b.image, shade))?;
    ensure_dir(&args.out)?;
    let written = write_dataset(&out, &args.out, cfg.seed)?;
    write_snapshot(&args.out, "ablate", args, cfg)?;
    Ok(written)
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralArgs {
    pub manifest: PathBuf,
    pub setting: SpectralSetting,
    pub out: PathBuf,
}

pub fn spectral(args: &SpectralArgs, cfg: &RunConfig) -> Result<Manifest> {
    let manifest = Manifest::read(&args.manifest)?;
    let ds = manifest.load_dataset(&dataset_name(&manifest))?;
    let (out, pairs) = ds.spectral(args.setting, cfg.seed)?;
    ensure_dir(&args.out)?;
    let written = write_dataset(&out, &args.out, cfg.seed)?;
    if !pairs.is_empty() {
        write_jsonl(&args.out.join(PAIRS_FILE), &pairs)?;
    }
    write_snapshot(&args.out, "spectral", args, cfg)?;
    Ok(written)
}

#[derive(Clone, Debug, Serialize)]
pub struct SynthArgs {
    pub out: PathBuf,
}

#[derive(Serialize)]
struct CueRow<'a> {
    sample_id: &'a str,
    color: usize,
    shape: usize,
    texture: usize,
}

pub fn synth(args: &SynthArgs, cfg: &RunConfig) -> Result<Manifest> {
    let s = &cfg.synth;
    let spec = CueSpec::new(
        s.classes,
        &s.informative,
        s.image_size,
        SplitCounts {
            train: s.train,
            val: s.val,
            test: s.test,
        },
        cfg.seed,
    );
    let generated = generate(&spec)?;
    let ds = generated.to_dataset("synth")?;
    ensure_dir(&args.out)?;
    let written = write_dataset(&ds, &args.out, cfg.seed)?;
    let cues: Vec<CueRow> = generated
        .samples
        .iter()
        .map(|s| CueRow {
            sample_id: &s.id,
            color: s.cues.color,
            shape: s.cues.shape,
            texture: s.cues.texture,
        })
        .collect();
    write_jsonl(&args.out.join("cues.jsonl"), &cues)?;
    write_json(&args.out.join("audit.json"), &audit(&generated.labels(), &generated.cue_records())?)?;
    write_snapshot(&args.out, "synth", args, cfg)?;
    Ok(written)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeArgs {
    pub protocol: Protocol,
    pub manifest: PathBuf,
    /// Pre-built variant manifests keyed by ablation code/name or spectral setting.
    pub variants: BTreeMap<String, PathBuf>,
    pub name: Option<String>,
    pub out: PathBuf,
}

fn parse_variant(key: &str) -> Result<Variant> {
    if let Ok(kind) = key.parse::<AblationKind>() {
        return Ok(Variant::Ablation(kind));
    }
    match key.parse::<SpectralSetting>() {
        Ok(s @ (SpectralSetting::AmplitudeOnly | SpectralSetting::PhaseOnly)) => Ok(Variant::Spectral(s)),
        _ => Err(CliError::Usage(format!("'{key}' is not an ablation kind or randomization setting"))),
    }
}

fn required_variants(protocol: Protocol, cfg: &RunConfig) -> Vec<Variant> {
    match protocol {
        Protocol::SpectralRandomization => vec![
            Variant::Spectral(SpectralSetting::AmplitudeOnly),
            Variant::Spectral(SpectralSetting::PhaseOnly),
        ],
        _ => cfg
            .kinds
            .iter()
            .filter(|k| **k != AblationKind::Original)
            .map(|&k| Variant::Ablation(k))
            .collect(),
    }
}

pub fn protocol_config(cfg: &RunConfig) -> ProtocolConfig {
    ProtocolConfig {
        probe: cfg.probe.clone(),
        sketch: cfg.sketch,
        patch_size: cfg.patch_size,
        shape_contrast: cfg.shape_contrast,
        kinds: cfg.kinds.clone(),
        repeats: cfg.repeats,
        seed: cfg.seed,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|d| format!("{d:.2}")).unwrap_or_default()
}

pub fn write_metrics_csv(path: &Path, table: &MetricsTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::data(path, e))?;
    let io = |e: csv::Error| CliError::data(path, e);
    w.write_record(["protocol", "dataset", "setting", "seed", "accuracy", "macro_f1", "relative_delta"])
        .map_err(io)?;
    for r in &table.rows {
        w.write_record([
            r.protocol.name().to_string(),
            r.dataset.clone(),
            r.setting.clone(),
            r.seed.to_string(),
            format!("{:.6}", r.metrics.accuracy),
            format!("{:.6}", r.metrics.macro_f1),
            fmt_opt(r.metrics.relative_delta),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::data(path, e))
}

pub fn probe(args: &ProbeArgs, cfg: &RunConfig) -> Result<MetricsTable> {
    let manifest = Manifest::read(&args.manifest)?;
    let name = args.name.clone().unwrap_or_else(|| dataset_name(&manifest));
    let base = manifest.load_dataset(&name)?;
    let mut materialized = HashMap::new();
    for (key, path) in &args.variants {
        let variant = parse_variant(key)?;
        let m = Manifest::read(path)?;
        materialized.insert(variant, m.load_dataset(&name)?);
    }
    if !cfg.on_the_fly {
        if let Some(missing) = required_variants(args.protocol, cfg)
            .into_iter()
            .find(|v| !materialized.contains_key(v))
        {
            return Err(CliError::Usage(format!(
                "protocol {} needs a '{}' manifest and on-the-fly generation is disabled",
                args.protocol,
                missing.name()
            )));
        }
    }
    let table = run_protocol(args.protocol, &base, &materialized, &protocol_config(cfg))?;
    ensure_dir(&args.out)?;
    write_metrics_csv(&args.out.join(METRICS_FILE), &table)?;
    write_json(&args.out.join(SUMMARY_FILE), &table.summary())?;
    write_snapshot(&args.out, "probe", args, cfg)?;
    Ok(table)
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumArgs {
    pub manifest: PathBuf,
    pub out: PathBuf,
}

/// Writes `out/<id>.png` with the centered log-magnitude spectrum of every
/// record; returns the number of files written.
pub fn spectrum(args: &SpectrumArgs, cfg: &RunConfig) -> Result<usize> {
    let manifest = Manifest::read(&args.manifest)?;
    ensure_dir(&args.out)?;
    manifest.records.par_iter().try_for_each(|r| {
        check_sample_id(&r.sample_id)?;
        let img = load_image(manifest.resolve(&r.image_path))?;
        let path = args.out.join(format!("{}.png", r.sample_id));
        create_parent(&path)?;
        save_image(&export_spectrum(&img), &path).map_err(CliError::from)
    })?;
    write_snapshot(&args.out, "spectrum", args, cfg)?;
    Ok(manifest.records.len())
}
