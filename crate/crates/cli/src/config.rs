//! Run configuration: defaults, overridden by a `key = value` file, overridden
//! by command-line flags.

use std::path::Path;
use std::str::FromStr;

use cuelab_core::{AblationKind, Cue, FeatureKind, ProbeConfig, SketchParams};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSettings {
    pub classes: usize,
    pub informative: Vec<Cue>,
    pub image_size: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Everything that determines a command's outputs. The worker count is kept
/// out of snapshots because it never changes results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip)]
    pub workers: Option<usize>,
    /// `None` selects `floor(min(H, W) / 14)` per image.
    pub patch_size: Option<usize>,
    pub shape_contrast: f64,
    pub sketch: SketchParams,
    /// APR partner policy; only `derangement` exists.
    pub pairing: String,
    pub probe: ProbeConfig,
    pub repeats: usize,
    pub kinds: Vec<AblationKind>,
    /// Build missing variant datasets in memory during `probe`.
    pub on_the_fly: bool,
    pub split: SplitFractions,
    pub synth: SynthSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: None,
            patch_size: None,
            shape_contrast: 0.25,
            sketch: SketchParams::default(),
            pairing: "derangement".into(),
            probe: ProbeConfig::default(),
            repeats: 10,
            kinds: AblationKind::ALL.to_vec(),
            on_the_fly: true,
            split: SplitFractions { train: 0.7, val: 0.1 },
            synth: SynthSettings {
                classes: 2,
                informative: vec![Cue::Color],
                image_size: 32,
                train: 100,
                val: 25,
                test: 50,
            },
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value '{value}' for '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl RunConfig {
    /// Sets one dotted key, e.g. `probe.l2` or `sketch.sigma`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, value)?,
            "workers" => self.workers = Some(parse(key, value)?),
            "patch_size" => {
                self.patch_size = match value {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "shape_contrast" => self.shape_contrast = parse(key, value)?,
            "sketch.sigma" => self.sketch.sigma = parse(key, value)?,
            "sketch.k" => self.sketch.k = parse(key, value)?,
            "sketch.epsilon" => self.sketch.epsilon = parse(key, value)?,
            "sketch.phi" => self.sketch.phi = parse(key, value)?,
            "pairing" => {
                if value != "derangement" {
                    return Err(CliError::Usage(format!("unknown pairing policy '{value}'")));
                }
                self.pairing = value.into();
            }
            "probe.feature" => self.probe.feature = parse::<FeatureKind>(key, value)?,
            "probe.learning_rate" => self.probe.learning_rate = parse(key, value)?,
            "probe.max_epochs" => self.probe.max_epochs = parse(key, value)?,
            "probe.l2" => self.probe.l2 = parse(key, value)?,
            "probe.patience" => self.probe.patience = parse(key, value)?,
            "probe.eval_every" => self.probe.eval_every = parse(key, value)?,
            "probe.standardize" => self.probe.standardize = parse(key, value)?,
            "probe.init_scale" => self.probe.init_scale = parse(key, value)?,
            "repeats" => self.repeats = parse(key, value)?,
            "kinds" => self.kinds = parse_list(key, value)?,
            "on_the_fly" => self.on_the_fly = parse(key, value)?,
            "split.train" => self.split.train = parse(key, value)?,
            "split.val" => self.split.val = parse(key, value)?,
            "synth.classes" => self.synth.classes = parse(key, value)?,
            "synth.informative" => self.synth.informative = parse_list(key, value)?,
            "synth.image_size" => self.synth.image_size = parse(key, value)?,
            "synth.train" => self.synth.train = parse(key, value)?,
            "synth.val" => self.synth.val = parse(key, value)?,
            "synth.test" => self.synth.test = parse(key, value)?,
            other => return Err(CliError::Usage(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", n + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::data(path, e))?;
        self.apply_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.sketch.validate()?;
        let SplitFractions { train, val } = self.split;
        if !(train > 0.0 && val >= 0.0 && train + val < 1.0) {
            return Err(CliError::Usage(format!(
                "split fractions need train > 0, val >= 0 and train + val < 1, got {train} and {val}"
            )));
        }
        if self.repeats == 0 {
            return Err(CliError::Usage("repeats must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Usage("workers must be at least 1".into()));
        }
        Ok(())
    }
}
