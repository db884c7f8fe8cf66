//! Cue-planted synthetic lesions.
//!
//! Each image is a lesion on a lightly noisy background. Three cues are drawn
//! per sample, each from six levels:
//!
//! * color: lesion hue, six hues 60 degrees apart
//! * shape: one of six outline families
//! * texture: sinusoidal stripes, orientation `30 * level` degrees
//!
//! Informative cues are fixed by the label (`level = label * 6 / K`); nuisance
//! cues are drawn uniformly, independently of the label. Position, rotation,
//! lesion area (20-28% of the image) and brightness are jittered per sample.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dataset::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::imgcore::{Image, Mask, RngStream};

/// Levels available per cue; caps the class count.
pub const LEVELS: usize = 6;

/// Darker than every lesion hue in every channel, so lesion contrast has the
/// same sign in all channels regardless of hue.
const BACKGROUND: [f64; 3] = [0.10, 0.09, 0.08];
const BACKGROUND_NOISE: f64 = 0.03;
const AREA_RANGE: (f64, f64) = (0.20, 0.28);
const STRIPE_DEPTH: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cue {
    Color,
    Shape,
    Texture,
}

impl Cue {
    pub const ALL: [Cue; 3] = [Cue::Color, Cue::Shape, Cue::Texture];

    pub fn name(self) -> &'static str {
        match self {
            Cue::Color => "color",
            Cue::Shape => "shape",
            Cue::Texture => "texture",
        }
    }
}

impl fmt::Display for Cue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Cue {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Cue::ALL
            .into_iter()
            .find(|c| c.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown cue '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShapeFamily {
    Disk,
    Ellipse,
    Square,
    Triangle,
    Star5,
    Blob6,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; LEVELS] = [
        ShapeFamily::Disk,
        ShapeFamily::Ellipse,
        ShapeFamily::Square,
        ShapeFamily::Triangle,
        ShapeFamily::Star5,
        ShapeFamily::Blob6,
    ];

    pub fn from_level(level: usize) -> Self {
        Self::ALL[level]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CueSpec {
    pub classes: usize,
    pub informative: Vec<Cue>,
    pub image_size: usize,
    pub samples_per_class: SplitCounts,
    pub seed: u64,
}

impl CueSpec {
    pub fn new(classes: usize, informative: &[Cue], image_size: usize, per_class: SplitCounts, seed: u64) -> Self {
        Self {
            classes,
            informative: informative.to_vec(),
            image_size,
            samples_per_class: per_class,
            seed,
        }
    }

    pub fn is_informative(&self, cue: Cue) -> bool {
        self.informative.contains(&cue)
    }

    pub fn nuisance(&self) -> Vec<Cue> {
        Cue::ALL.into_iter().filter(|c| !self.is_informative(*c)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InfeasibleSpec(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.classes > LEVELS {
            return Err(Error::InfeasibleSpec(format!(
                "{} classes exceed the {LEVELS} levels available per cue",
                self.classes
            )));
        }
        let mut seen = self.informative.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.informative.len() {
            return Err(Error::InfeasibleSpec("informative cues listed twice".into()));
        }
        if self.image_size < 16 {
            return Err(Error::InfeasibleSpec(format!(
                "image size {} is below the 16 px minimum",
                self.image_size
            )));
        }
        if self.samples_per_class.train == 0 {
            return Err(Error::InfeasibleSpec("training split is empty".into()));
        }
        Ok(())
    }

    /// Level an informative cue takes for `label`: spread evenly over the six.
    pub fn informative_level(&self, label: usize) -> usize {
        label * LEVELS / self.classes
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.classes).map(|k| format!("class_{k}")).collect()
    }
}

/// Drawn level of every cue, kept for auditing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CueRecord {
    pub color: usize,
    pub shape: usize,
    pub texture: usize,
}

impl CueRecord {
    pub fn level(&self, cue: Cue) -> usize {
        match cue {
            Cue::Color => self.color,
            Cue::Shape => self.shape,
            Cue::Texture => self.texture,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSample {
    pub id: String,
    pub split: Split,
    pub image: Image,
    pub mask: Mask,
    pub label: usize,
    pub cues: CueRecord,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub spec: CueSpec,
    pub samples: Vec<SynthSample>,
}

impl SynthDataset {
    pub fn to_dataset(&self, name: &str) -> Result<Dataset> {
        let samples = self
            .samples
            .iter()
            .map(|s| Sample {
                id: s.id.clone(),
                image: s.image.clone(),
                mask: Some(s.mask.clone()),
                label: s.label,
                split: s.split,
            })
            .collect();
        Dataset::new(name, self.spec.class_names(), samples)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn cue_records(&self) -> Vec<CueRecord> {
        self.samples.iter().map(|s| s.cues).collect()
    }
}

/// HSV with hue in degrees to RGB.
fn hsv_to_rgb(hue: f64, sat: f64, val: f64) -> [f64; 3] {
    let h = hue.rem_euclid(360.0) / 60.0;
    let c = val * sat;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = val - c;
    [r + m, g + m, b + m]
}

/// Lesion base color of a hue level.
pub fn hue_color(level: usize) -> [f64; 3] {
    hsv_to_rgb(level as f64 * 360.0 / LEVELS as f64, 0.65, 0.75)
}

/// Stripe orientation (radians) and period (pixels) of a texture level.
pub fn texture_params(level: usize) -> (f64, f64) {
    let angle = level as f64 * PI / LEVELS as f64;
    let period = if level % 2 == 0 { 4.0 } else { 6.0 };
    (angle, period)
}

/// Outline in lesion-local coordinates (origin at the lesion center, unrotated).
struct Outline {
    family: ShapeFamily,
    /// Characteristic radius in pixels.
    radius: f64,
    polygon: Vec<(f64, f64)>,
}

impl Outline {
    /// Builds an outline with the requested area in square pixels.
    fn with_area(family: ShapeFamily, area: f64) -> Self {
        let radius = match family {
            ShapeFamily::Disk => (area / PI).sqrt(),
            // semi-axes (r, r/2)
            ShapeFamily::Ellipse => (2.0 * area / PI).sqrt(),
            // half side
            ShapeFamily::Square => area.sqrt() / 2.0,
            ShapeFamily::Triangle => (area / (0.75 * 3f64.sqrt())).sqrt(),
            // outer radius r, inner r/2: area = 10 * (1/2) * r * (r/2) * sin(pi/5)
            ShapeFamily::Star5 => (area / (2.5 * (PI / 5.0).sin())).sqrt(),
            // r(t) = r (1 + 0.25 cos 6t): area = pi r^2 (1 + 0.25^2 / 2)
            ShapeFamily::Blob6 => (area / (PI * 1.03125)).sqrt(),
        };
        let polygon = match family {
            ShapeFamily::Triangle => regular_polygon(3, radius, radius),
            ShapeFamily::Star5 => regular_polygon(5, radius, radius / 2.0),
            ShapeFamily::Square => vec![(radius, radius), (-radius, radius), (-radius, -radius), (radius, -radius)],
            _ => Vec::new(),
        };
        Self { family, radius, polygon }
    }

    /// Largest distance of the outline from its center.
    fn extent(&self) -> f64 {
        match self.family {
            ShapeFamily::Square => self.radius * 2f64.sqrt(),
            ShapeFamily::Blob6 => self.radius * 1.25,
            _ => self.radius,
        }
    }

    fn contains(&self, u: f64, v: f64) -> bool {
        let r = self.radius;
        match self.family {
            ShapeFamily::Disk => u * u + v * v <= r * r,
            ShapeFamily::Ellipse => (u / r).powi(2) + (v / (0.5 * r)).powi(2) <= 1.0,
            ShapeFamily::Blob6 => {
                let t = v.atan2(u);
                (u * u + v * v).sqrt() <= r * (1.0 + 0.25 * (6.0 * t).cos())
            }
            _ => point_in_polygon(&self.polygon, u, v),
        }
    }
}

/// Star-or-regular polygon alternating between two radii (`2 * points` vertices
/// when they differ).
fn regular_polygon(points: usize, outer: f64, inner: f64) -> Vec<(f64, f64)> {
    if (outer - inner).abs() < f64::EPSILON {
        return (0..points)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / points as f64;
                (outer * t.cos(), outer * t.sin())
            })
            .collect();
    }
    (0..2 * points)
        .map(|i| {
            let t = PI * i as f64 / points as f64;
            let rad = if i % 2 == 0 { outer } else { inner };
            (rad * t.cos(), rad * t.sin())
        })
        .collect()
}

fn point_in_polygon(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn draw_cues(spec: &CueSpec, label: usize, rng: &mut impl Rng) -> CueRecord {
    let mut level = |cue: Cue| {
        if spec.is_informative(cue) {
            spec.informative_level(label)
        } else {
            rng.random_range(0..LEVELS)
        }
    };
    CueRecord {
        color: level(Cue::Color),
        shape: level(Cue::Shape),
        texture: level(Cue::Texture),
    }
}

fn render(size: usize, cues: CueRecord, rng: &mut impl Rng) -> Result<(Image, Mask)> {
    let s = size as f64;
    let area = rng.random_range(AREA_RANGE.0..AREA_RANGE.1) * s * s;
    let outline = Outline::with_area(ShapeFamily::from_level(cues.shape), area);
    let rotation = rng.random_range(0.0..2.0 * PI);
    let slack = (0.5 * s - outline.extent() - 1.0).clamp(0.0, 0.08 * s);
    let cy = 0.5 * s + rng.random_range(-1.0..=1.0) * slack;
    let cx = 0.5 * s + rng.random_range(-1.0..=1.0) * slack;
    let (sin_r, cos_r) = rotation.sin_cos();

    let tone = 1.0 + rng.random_range(-0.04..0.04);
    let lesion = hue_color(cues.color).map(|v| v * tone);
    let (angle, period) = texture_params(cues.texture);
    let (sin_a, cos_a) = angle.sin_cos();
    let stripe_phase = rng.random_range(0.0..2.0 * PI);

    let mask = Mask::from_fn(size, size, |y, x| {
        let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
        let u = cos_r * dx + sin_r * dy;
        let v = -sin_r * dx + cos_r * dy;
        outline.contains(u, v)
    })?;

    let noise: Vec<f64> = (0..3 * size * size)
        .map(|_| rng.random_range(-BACKGROUND_NOISE..BACKGROUND_NOISE))
        .collect();
    let image = Image::from_fn(size, size, |y, x| {
        if mask.is_lesion(y, x) {
            let t = x as f64 * cos_a + y as f64 * sin_a;
            let m = 1.0 + STRIPE_DEPTH * (2.0 * PI * t / period + stripe_phase).sin();
            lesion.map(|v| (v * m).clamp(0.0, 1.0))
        } else {
            let i = 3 * (y * size + x);
            let px = [
                BACKGROUND[0] + noise[i],
                BACKGROUND[1] + noise[i + 1],
                BACKGROUND[2] + noise[i + 2],
            ];
            px.map(|v| v.clamp(0.0, 1.0))
        }
    })?;
    Ok((image, mask))
}

/// Generates a stratified dataset; sample `split_label_index` draws from the
/// stream `(seed, id, "synth")`.
pub fn generate(spec: &CueSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let mut plan = Vec::new();
    for split in Split::ALL {
        for label in 0..spec.classes {
            for i in 0..spec.samples_per_class.get(split) {
                plan.push((format!("{split}_{label}_{i:05}"), split, label));
            }
        }
    }
    let samples = plan
        .into_par_iter()
        .map(|(id, split, label)| {
            let mut rng = RngStream::new(spec.seed, &id, "synth").rng();
            let cues = draw_cues(spec, label, &mut rng);
            let (image, mask) = render(spec.image_size, cues, &mut rng)?;
            Ok(SynthSample {
                id,
                split,
                image,
                mask,
                label,
                cues,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthDataset {
        spec: spec.clone(),
        samples,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CueAudit {
    pub cue: Cue,
    /// Plug-in mutual information with the label, in nats.
    pub mutual_information: f64,
    pub chi_square: f64,
    pub dof: usize,
    /// Independence-test p-value.
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub samples: usize,
    pub classes: usize,
    pub cues: Vec<CueAudit>,
}

impl AuditReport {
    pub fn cue(&self, cue: Cue) -> &CueAudit {
        self.cues.iter().find(|c| c.cue == cue).expect("every cue is audited")
    }
}

fn contingency(labels: &[usize], levels: &[usize]) -> Vec<Vec<f64>> {
    let rows = labels.iter().max().map_or(0, |m| m + 1);
    let cols = levels.iter().max().map_or(0, |m| m + 1);
    let mut t = vec![vec![0.0; cols]; rows];
    for (&l, &v) in labels.iter().zip(levels) {
        t[l][v] += 1.0;
    }
    t
}

/// Plug-in mutual information of two discrete sequences, nats.
pub fn mutual_information(a: &[usize], b: &[usize]) -> f64 {
    let t = contingency(a, b);
    let n = a.len() as f64;
    let row: Vec<f64> = t.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<f64> = (0..t.first().map_or(0, Vec::len))
        .map(|j| t.iter().map(|r| r[j]).sum())
        .collect();
    let mut mi = 0.0;
    for (i, r) in t.iter().enumerate() {
        for (j, &c) in r.iter().enumerate() {
            if c > 0.0 {
                mi += c / n * (c * n / (row[i] * col[j])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Pearson chi-square test of independence over the observed levels.
/// Returns `(statistic, degrees of freedom, p-value)`.
pub fn chi_square_independence(a: &[usize], b: &[usize]) -> (f64, usize, f64) {
    let t = contingency(a, b);
    let n = a.len() as f64;
    let row: Vec<f64> = t.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<f64> = (0..t.first().map_or(0, Vec::len))
        .map(|j| t.iter().map(|r| r[j]).sum())
        .collect();
    let mut stat = 0.0;
    for (i, r) in t.iter().enumerate() {
        for (j, &obs) in r.iter().enumerate() {
            let exp = row[i] * col[j] / n;
            if exp > 0.0 {
                stat += (obs - exp).powi(2) / exp;
            }
        }
    }
    let nonzero_rows = row.iter().filter(|&&v| v > 0.0).count();
    let nonzero_cols = col.iter().filter(|&&v| v > 0.0).count();
    let dof = nonzero_rows.saturating_sub(1) * nonzero_cols.saturating_sub(1);
    if dof == 0 {
        return (stat, 0, 1.0);
    }
    let p = 1.0 - ChiSquared::new(dof as f64).expect("dof > 0").cdf(stat);
    (stat, dof, p)
}

/// Recomputes cue-label dependence from the recorded cue levels.
pub fn audit(labels: &[usize], records: &[CueRecord]) -> Result<AuditReport> {
    if records.is_empty() || records.len() != labels.len() {
        return Err(Error::MissingCueRecords);
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let cues = Cue::ALL
        .into_iter()
        .map(|cue| {
            let levels: Vec<usize> = records.iter().map(|r| r.level(cue)).collect();
            let (chi_square, dof, p_value) = chi_square_independence(labels, &levels);
            CueAudit {
                cue,
                mutual_information: mutual_information(labels, &levels),
                chi_square,
                dof,
                p_value,
            }
        })
        .collect();
    Ok(AuditReport {
        samples: labels.len(),
        classes,
        cues,
    })
}
