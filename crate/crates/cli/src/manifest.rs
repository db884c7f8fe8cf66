//! JSONL sample manifests with a JSON metadata file alongside.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use cuelab_core::imgcore::{load_image, load_mask, save_image, save_mask};
use cuelab_core::{Dataset, MeanRgb, Sample, Split};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    /// Absolute, or relative to the manifest's directory.
    pub image_path: String,
    pub mask_path: Option<String>,
    pub label: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub classes: Vec<String>,
    /// Training-split mean color.
    pub mean_rgb: [f64; 3],
    pub seed: u64,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub records: Vec<SampleRecord>,
    pub metadata: Metadata,
    /// Directory relative paths resolve against.
    pub base_dir: PathBuf,
}

/// `dir/manifest.jsonl` -> `dir/manifest.meta.json`.
pub fn metadata_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("meta.json")
}

/// Accepts a manifest file or a directory containing [`MANIFEST_FILE`].
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Sample ids double as relative output paths, so they must stay inside the
/// output directory.
pub fn check_sample_id(id: &str) -> Result<()> {
    let bad = id.is_empty()
        || id.starts_with('/')
        || id.contains('\\')
        || id.split('/').any(|part| part.is_empty() || part == "." || part == "..");
    if bad {
        return Err(CliError::Usage(format!("sample id '{id}' is not a safe relative path")));
    }
    Ok(())
}

pub fn version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let path = manifest_path(path);
        let file = fs::File::open(&path).map_err(|e| CliError::data(&path, e))?;
        let mut records = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| CliError::data(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SampleRecord = serde_json::from_str(&line)
                .map_err(|e| CliError::data(&path, format!("line {}: {e}", n + 1)))?;
            records.push(rec);
        }
        let meta_path = metadata_path(&path);
        let meta_text = fs::read_to_string(&meta_path).map_err(|e| CliError::data(&meta_path, e))?;
        let metadata: Metadata = serde_json::from_str(&meta_text).map_err(|e| CliError::data(&meta_path, e))?;
        let manifest = Manifest {
            records,
            metadata,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        manifest.validate().map_err(|m| CliError::data(&path, m))?;
        Ok(manifest)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.records.is_empty() {
            return Err("manifest has no records".into());
        }
        MeanRgb::new(self.metadata.mean_rgb).map_err(|e| e.to_string())?;
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(&r.sample_id) {
                return Err(format!("duplicate sample id '{}'", r.sample_id));
            }
            if !self.metadata.classes.contains(&r.label) {
                return Err(format!("sample '{}' has unknown label '{}'", r.sample_id, r.label));
            }
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::data(dir, e))?;
        }
        let mut out = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut out, r).expect("records serialize");
            out.push(b'\n');
        }
        fs::write(path, out).map_err(|e| CliError::data(path, e))?;
        write_json(&metadata_path(path), &self.metadata)
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads every image and mask. The metadata mean color replaces the one
    /// recomputed from pixels, so ablated manifests keep their source shade.
    pub fn load_dataset(&self, name: &str) -> Result<Dataset> {
        let samples = self
            .records
            .par_iter()
            .map(|r| {
                let img_path = self.resolve(&r.image_path);
                let image = load_image(&img_path)?;
                image.check_transform_size().map_err(|e| CliError::data(&img_path, e))?;
                let mask = match &r.mask_path {
                    Some(m) => {
                        let mask_path = self.resolve(m);
                        let mask = load_mask(&mask_path)?;
                        mask.ensure_matches(&image).map_err(|e| CliError::data(&mask_path, e))?;
                        Some(mask)
                    }
                    None => None,
                };
                let label = self
                    .metadata
                    .classes
                    .iter()
                    .position(|c| c == &r.label)
                    .expect("labels validated on read");
                Ok(Sample {
                    id: r.sample_id.clone(),
                    image,
                    mask,
                    label,
                    split: r.split,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut ds = Dataset::new(name, self.metadata.classes.clone(), samples)?;
        ds.mean_rgb = MeanRgb::new(self.metadata.mean_rgb)?;
        Ok(ds)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value).expect("value serializes");
    text.push(b'\n');
    fs::write(path, text).map_err(|e| CliError::data(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, row).expect("row serializes");
        out.write_all(b"\n").expect("writing to a Vec");
    }
    fs::write(path, out).map_err(|e| CliError::data(path, e))
}

/// Writes `images/<id>.png`, `masks/<id>.png` and the manifest pair into
/// `out_dir`; paths in the manifest are relative to it.
pub fn write_dataset(ds: &Dataset, out_dir: &Path, seed: u64) -> Result<Manifest> {
    let records = ds
        .samples
        .par_iter()
        .map(|s| {
            check_sample_id(&s.id)?;
            let image_rel = format!("images/{}.png", s.id);
            let image_path = out_dir.join(&image_rel);
            create_parent(&image_path)?;
            save_image(&s.image, &image_path)?;
            let mask_path = match &s.mask {
                Some(mask) => {
                    let rel = format!("masks/{}.png", s.id);
                    let p = out_dir.join(&rel);
                    create_parent(&p)?;
                    save_mask(mask, &p)?;
                    Some(rel)
                }
                None => None,
            };
            Ok(SampleRecord {
                sample_id: s.id.clone(),
                image_path: image_rel,
                mask_path,
                label: ds.classes[s.label].clone(),
                split: s.split,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        records,
        metadata: Metadata {
            classes: ds.classes.clone(),
            mean_rgb: ds.mean_rgb.rgb(),
            seed,
            version: version(),
        },
        base_dir: out_dir.to_path_buf(),
    };
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

pub fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) => fs::create_dir_all(dir).map_err(|e| CliError::data(dir, e)),
        None => Ok(()),
    }
}
