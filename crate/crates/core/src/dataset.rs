//! In-memory labeled datasets and the batch transforms applied to them.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ablation::{apply_ablation, AblationConfig, AblationKind};
use crate::error::{Error, Result};
use crate::imgcore::{Image, Mask, MeanAccumulator, MeanRgb, RngStream};
use crate::spectral::{amplitude_randomize, apr_augment, phase_randomize, AprVariant, LabelSource};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidParameter(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub mask: Option<Mask>,
    /// Index into [`Dataset::classes`].
    pub label: usize,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub classes: Vec<String>,
    pub samples: Vec<Sample>,
    /// Training-split mean color; shade for sketch and mask renderings.
    pub mean_rgb: MeanRgb,
}

/// Pixel-weighted mean color of the training split. Per-image sums run in
/// parallel; the final reduction is sequential so the result does not depend
/// on the thread count.
pub fn train_mean_rgb(samples: &[Sample]) -> Result<MeanRgb> {
    let parts: Vec<MeanAccumulator> = samples
        .par_iter()
        .filter(|s| s.split == Split::Train)
        .map(|s| {
            let mut acc = MeanAccumulator::default();
            acc.add(&s.image);
            acc
        })
        .collect();
    parts
        .iter()
        .fold(MeanAccumulator::default(), |acc, p| acc.merge(p))
        .finish()
}

impl Dataset {
    /// Builds a dataset and computes its training-split mean color.
    pub fn new(name: impl Into<String>, classes: Vec<String>, samples: Vec<Sample>) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| s.label >= classes.len()) {
            return Err(Error::InvalidParameter(format!(
                "sample {} has label {} but only {} classes exist",
                s.id,
                s.label,
                classes.len()
            )));
        }
        let mean_rgb = train_mean_rgb(&samples)?;
        Ok(Self {
            name: name.into(),
            classes,
            samples,
            mean_rgb,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Applies one ablation to every sample; sample `i` draws from the stream
    /// `(seed, id, kind)`.
    pub fn ablated(&self, kind: AblationKind, cfg: &AblationConfig, seed: u64) -> Result<Dataset> {
        let samples = self
            .samples
            .par_iter()
            .map(|s| {
                let rng = RngStream::new(seed, &s.id, kind.name());
                let image = apply_ablation(kind, &s.image, s.mask.as_ref(), cfg, &rng)?;
                let mask = if kind.preserves_outline() { s.mask.clone() } else { None };
                Ok(Sample {
                    id: s.id.clone(),
                    image,
                    mask,
                    label: s.label,
                    split: s.split,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            name: self.name.clone(),
            classes: self.classes.clone(),
            samples,
            mean_rgb: self.mean_rgb,
        })
    }

    /// Applies a spectral setting. APR settings pair every sample with a
    /// derangement partner from its own split.
    pub fn spectral(&self, setting: SpectralSetting, seed: u64) -> Result<(Dataset, Vec<PairRecord>)> {
        let op = setting.name();
        let (samples, pairs): (Vec<Sample>, Vec<PairRecord>) = match setting {
            SpectralSetting::AmplitudeOnly | SpectralSetting::PhaseOnly => {
                let samples = self
                    .samples
                    .par_iter()
                    .map(|s| {
                        let rng = RngStream::new(seed, &s.id, op);
                        let image = match setting {
                            SpectralSetting::AmplitudeOnly => phase_randomize(&s.image, &rng),
                            _ => amplitude_randomize(&s.image, &rng),
                        };
                        Sample {
                            id: s.id.clone(),
                            image,
                            mask: None,
                            label: s.label,
                            split: s.split,
                        }
                    })
                    .collect();
                (samples, Vec::new())
            }
            SpectralSetting::Apr(variant) => {
                let partners = self.pairing(seed)?;
                self.samples
                    .par_iter()
                    .zip(partners.par_iter())
                    .map(|(s, &k)| {
                        let partner = &self.samples[k];
                        let rng = RngStream::new(seed, &s.id, op);
                        let rec = apr_augment(variant, &s.image, &partner.image, &rng)?;
                        let sample = Sample {
                            id: s.id.clone(),
                            image: rec.image,
                            mask: None,
                            label: s.label,
                            split: s.split,
                        };
                        let pair = PairRecord {
                            sample_id: s.id.clone(),
                            partner_id: partner.id.clone(),
                            label_source: rec.label_source,
                        };
                        Ok((sample, pair))
                    })
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .unzip()
            }
        };
        Ok((
            Dataset {
                name: self.name.clone(),
                classes: self.classes.clone(),
                samples,
                mean_rgb: self.mean_rgb,
            },
            pairs,
        ))
    }

    /// Partner index for every sample: a uniform random derangement within
    /// each split.
    pub fn pairing(&self, seed: u64) -> Result<Vec<usize>> {
        let mut partner = vec![usize::MAX; self.samples.len()];
        for split in Split::ALL {
            let members: Vec<usize> = (0..self.samples.len())
                .filter(|&i| self.samples[i].split == split)
                .collect();
            match members.len() {
                0 => continue,
                1 => {
                    return Err(Error::SplitTooSmall {
                        split: split.name(),
                        count: 1,
                    })
                }
                _ => {}
            }
            let perm = derangement(members.len(), &RngStream::new(seed, split.name(), "apr_pairing"));
            for (slot, &p) in perm.iter().enumerate() {
                partner[members[slot]] = members[p];
            }
        }
        Ok(partner)
    }
}

/// Uniform random permutation of `0..n` without fixed points (`n >= 2`),
/// by rejection.
pub fn derangement(n: usize, rng: &RngStream) -> Vec<usize> {
    assert!(n >= 2, "a derangement needs at least two elements");
    let mut r = rng.rng();
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(&mut r);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return perm;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpectralSetting {
    /// Phase replaced by noise phase.
    AmplitudeOnly,
    /// Amplitude replaced by noise amplitude.
    PhaseOnly,
    Apr(AprVariant),
}

impl SpectralSetting {
    pub const ALL: [SpectralSetting; 5] = [
        SpectralSetting::AmplitudeOnly,
        SpectralSetting::PhaseOnly,
        SpectralSetting::Apr(AprVariant::AprP),
        SpectralSetting::Apr(AprVariant::AfAprP),
        SpectralSetting::Apr(AprVariant::MixAprP),
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpectralSetting::AmplitudeOnly => "amplitude_only",
            SpectralSetting::PhaseOnly => "phase_only",
            SpectralSetting::Apr(v) => v.name(),
        }
    }
}

impl fmt::Display for SpectralSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpectralSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        SpectralSetting::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown spectral setting '{s}'")))
    }
}

/// APR pairing log entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub sample_id: String,
    pub partner_id: String,
    pub label_source: LabelSource,
}
