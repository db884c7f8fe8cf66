//! Probe protocols: per-ablation training, cross-ablation transfer, head
//! retraining on ablated data, and spectral randomization.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ablation::{AblationConfig, AblationKind, SketchParams};
use crate::dataset::{Dataset, SpectralSetting, Split};
use crate::error::{Error, Result};
use crate::probe::{evaluate, relative_delta, train_head, LabeledFeatures, Metrics, ProbeConfig, ProbeModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    TrainOnAblation,
    CrossTransfer,
    Dfr,
    SpectralRandomization,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::TrainOnAblation,
        Protocol::CrossTransfer,
        Protocol::Dfr,
        Protocol::SpectralRandomization,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::TrainOnAblation => "train_on_ablation",
            Protocol::CrossTransfer => "cross_transfer",
            Protocol::Dfr => "dfr",
            Protocol::SpectralRandomization => "spectral_randomization",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == norm)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown protocol '{s}'")))
    }
}

/// A transformed view of the base dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Ablation(AblationKind),
    Spectral(SpectralSetting),
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Ablation(k) => k.name(),
            Variant::Spectral(s) => s.name(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub probe: ProbeConfig,
    pub sketch: SketchParams,
    pub patch_size: Option<usize>,
    pub shape_contrast: f64,
    /// Ablations exercised by the ablation protocols.
    pub kinds: Vec<AblationKind>,
    pub repeats: usize,
    /// Repetition `r` runs with seed `seed + r`.
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            probe: ProbeConfig::default(),
            sketch: SketchParams::default(),
            patch_size: None,
            shape_contrast: 0.25,
            kinds: AblationKind::ALL.to_vec(),
            repeats: 10,
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    pub fn ablation_config(&self, base: &Dataset) -> AblationConfig {
        AblationConfig {
            sketch: self.sketch,
            mean_rgb: base.mean_rgb,
            patch_size: self.patch_size,
            shape_contrast: self.shape_contrast,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub protocol: Protocol,
    pub dataset: String,
    pub setting: String,
    pub seed: u64,
    pub metrics: Metrics,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sd })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub protocol: Protocol,
    pub dataset: String,
    pub setting: String,
    pub runs: usize,
    pub accuracy: MeanSd,
    pub macro_f1: MeanSd,
    pub relative_delta: Option<MeanSd>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricRow>,
}

impl MetricsTable {
    pub fn setting(&self, setting: &str) -> impl Iterator<Item = &MetricRow> {
        let setting = setting.to_string();
        self.rows.iter().filter(move |r| r.setting == setting)
    }

    /// Mean of a metric over all rows of a setting.
    pub fn mean(&self, setting: &str, metric: impl Fn(&Metrics) -> f64) -> Option<f64> {
        let vals: Vec<f64> = self.setting(setting).map(|r| metric(&r.metrics)).collect();
        MeanSd::of(&vals).map(|m| m.mean)
    }

    /// Mean and SD per setting, in first-appearance order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut order: Vec<(Protocol, String, String)> = Vec::new();
        let mut groups: BTreeMap<(String, String), Vec<&MetricRow>> = BTreeMap::new();
        for r in &self.rows {
            let key = (r.dataset.clone(), r.setting.clone());
            if !groups.contains_key(&key) {
                order.push((r.protocol, r.dataset.clone(), r.setting.clone()));
            }
            groups.entry(key).or_default().push(r);
        }
        order
            .into_iter()
            .map(|(protocol, dataset, setting)| {
                let rows = &groups[&(dataset.clone(), setting.clone())];
                let pick = |f: &dyn Fn(&Metrics) -> Option<f64>| -> Vec<f64> {
                    rows.iter().filter_map(|r| f(&r.metrics)).collect()
                };
                SummaryRow {
                    protocol,
                    dataset,
                    setting,
                    runs: rows.len(),
                    accuracy: MeanSd::of(&pick(&|m| Some(m.accuracy))).expect("non-empty group"),
                    macro_f1: MeanSd::of(&pick(&|m| Some(m.macro_f1))).expect("non-empty group"),
                    relative_delta: MeanSd::of(&pick(&|m| m.relative_delta)),
                }
            })
            .collect()
    }
}

/// Supplies variant datasets: materialized ones when given, otherwise built
/// from the base dataset with the repetition seed.
pub struct VariantSource<'a> {
    base: &'a Dataset,
    materialized: &'a HashMap<Variant, Dataset>,
    cfg: &'a ProtocolConfig,
}

impl<'a> VariantSource<'a> {
    pub fn new(base: &'a Dataset, materialized: &'a HashMap<Variant, Dataset>, cfg: &'a ProtocolConfig) -> Result<Self> {
        for (variant, ds) in materialized {
            check_alignment(base, ds).map_err(|m| Error::VariantMismatch(format!("{}: {m}", variant.name())))?;
        }
        Ok(Self { base, materialized, cfg })
    }

    pub fn get(&self, variant: Variant, seed: u64) -> Result<Cow<'a, Dataset>> {
        if let Some(ds) = self.materialized.get(&variant) {
            return Ok(Cow::Borrowed(ds));
        }
        match variant {
            Variant::Ablation(AblationKind::Original) => Ok(Cow::Borrowed(self.base)),
            Variant::Ablation(kind) => self
                .base
                .ablated(kind, &self.cfg.ablation_config(self.base), seed)
                .map(Cow::Owned),
            Variant::Spectral(setting) => self.base.spectral(setting, seed).map(|(d, _)| Cow::Owned(d)),
        }
    }
}

fn check_alignment(base: &Dataset, other: &Dataset) -> std::result::Result<(), String> {
    if base.classes != other.classes {
        return Err(format!("classes {:?} vs {:?}", base.classes, other.classes));
    }
    let index: HashMap<&str, (usize, Split)> = base
        .samples
        .iter()
        .map(|s| (s.id.as_str(), (s.label, s.split)))
        .collect();
    if other.samples.len() != base.samples.len() {
        return Err(format!("{} samples vs {}", other.samples.len(), base.samples.len()));
    }
    for s in &other.samples {
        match index.get(s.id.as_str()) {
            None => return Err(format!("unknown sample '{}'", s.id)),
            Some(&(_, split)) if split != s.split => {
                return Err(format!("sample '{}' moved from {split} to {}", s.id, s.split))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Feature-map output for one split, before standardization.
pub fn split_features(model: &ProbeModel, ds: &Dataset, split: Split) -> LabeledFeatures {
    let samples: Vec<_> = ds.split(split).collect();
    let features = samples.par_iter().map(|s| model.extract(&s.image)).collect();
    LabeledFeatures {
        features,
        labels: samples.iter().map(|s| s.label).collect(),
    }
}

/// Trains a fresh probe end to end (standardizer plus head) on `ds`.
pub fn fit_probe(ds: &Dataset, cfg: &ProbeConfig, seed: u64) -> Result<ProbeModel> {
    let mut model = ProbeModel::new(cfg.clone(), ds.num_classes(), seed)?;
    let train = split_features(&model, ds, Split::Train);
    let val = split_features(&model, ds, Split::Val);
    model.fit_standardizer(&train);
    train_head(model, &train, Some(&val))
}

/// Retrains only the head of `base_model` on `ds`, keeping its feature map
/// and standardizer frozen and starting from its current weights.
pub fn retrain_head(base_model: &ProbeModel, ds: &Dataset) -> Result<ProbeModel> {
    let train = split_features(base_model, ds, Split::Train);
    let val = split_features(base_model, ds, Split::Val);
    train_head(base_model.clone(), &train, Some(&val))
}

pub fn test_metrics(model: &ProbeModel, ds: &Dataset) -> Result<Metrics> {
    evaluate(model, &split_features(model, ds, Split::Test))
}

fn with_delta(mut m: Metrics, baseline: Option<f64>) -> Metrics {
    m.relative_delta = baseline.and_then(|b| relative_delta(100.0 * b, 100.0 * m.accuracy).ok());
    m
}

/// One repetition; returns `(setting, metrics)` pairs.
fn run_once(protocol: Protocol, source: &VariantSource<'_>, cfg: &ProtocolConfig, seed: u64) -> Result<Vec<(String, Metrics)>> {
    let probe = &cfg.probe;
    let ablation = |k: AblationKind| source.get(Variant::Ablation(k), seed);
    let mut out = Vec::new();
    match protocol {
        Protocol::TrainOnAblation => {
            let mut baseline = None;
            for &kind in &cfg.kinds {
                let ds = ablation(kind)?;
                let m = test_metrics(&fit_probe(&ds, probe, seed)?, &ds)?;
                if kind == AblationKind::Original {
                    baseline = Some(m.accuracy);
                }
                out.push((kind.code().to_string(), m));
            }
            for (setting, m) in &mut out {
                if setting != AblationKind::Original.code() {
                    *m = with_delta(m.clone(), baseline);
                }
            }
        }
        Protocol::CrossTransfer => {
            let original = ablation(AblationKind::Original)?;
            let base_model = fit_probe(&original, probe, seed)?;
            let base_self = test_metrics(&base_model, &original)?;
            let b = Some(base_self.accuracy);
            let tsc = AblationKind::Original.code();
            out.push((format!("train:{tsc}/test:{tsc}"), base_self));
            for &kind in cfg.kinds.iter().filter(|k| **k != AblationKind::Original) {
                let ds = ablation(kind)?;
                let code = kind.code();
                out.push((format!("train:{tsc}/test:{code}"), with_delta(test_metrics(&base_model, &ds)?, b)));
                let own = fit_probe(&ds, probe, seed)?;
                out.push((format!("train:{code}/test:{code}"), with_delta(test_metrics(&own, &ds)?, b)));
                out.push((format!("train:{code}/test:{tsc}"), with_delta(test_metrics(&own, &original)?, b)));
            }
        }
        Protocol::Dfr => {
            let original = ablation(AblationKind::Original)?;
            let base_model = fit_probe(&original, probe, seed)?;
            let b = test_metrics(&base_model, &original)?.accuracy;
            for &kind in &cfg.kinds {
                let ds = ablation(kind)?;
                let retrained = retrain_head(&base_model, &ds)?;
                let m = test_metrics(&retrained, &ds)?;
                out.push((format!("dfr:{}", kind.code()), with_delta(m, Some(b))));
            }
        }
        Protocol::SpectralRandomization => {
            let original = ablation(AblationKind::Original)?;
            let base = test_metrics(&fit_probe(&original, probe, seed)?, &original)?;
            let b = Some(base.accuracy);
            out.push(("baseline".to_string(), base));
            for setting in [SpectralSetting::AmplitudeOnly, SpectralSetting::PhaseOnly] {
                let ds = source.get(Variant::Spectral(setting), seed)?;
                let m = test_metrics(&fit_probe(&ds, probe, seed)?, &ds)?;
                out.push((setting.name().to_string(), with_delta(m, b)));
            }
        }
    }
    Ok(out)
}

/// Runs `cfg.repeats` independent repetitions in parallel. Rows come back in
/// repetition order regardless of scheduling.
pub fn run_protocol(
    protocol: Protocol,
    base: &Dataset,
    materialized: &HashMap<Variant, Dataset>,
    cfg: &ProtocolConfig,
) -> Result<MetricsTable> {
    if cfg.repeats == 0 {
        return Err(Error::InvalidParameter("repeats must be at least 1".into()));
    }
    let source = VariantSource::new(base, materialized, cfg)?;
    let per_rep = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.wrapping_add(r as u64);
            run_once(protocol, &source, cfg, seed).map(|rows| (seed, rows))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = per_rep
        .into_iter()
        .flat_map(|(seed, rows)| {
            rows.into_iter().map(move |(setting, metrics)| MetricRow {
                protocol,
                dataset: base.name.clone(),
                setting,
                seed,
                metrics,
            })
        })
        .collect();
    Ok(MetricsTable { rows })
}
