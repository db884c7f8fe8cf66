use std::f64::consts::PI;

use cuelab_core::ablation::color_only;
use cuelab_core::spectral::dft2;
use cuelab_core::synthgen::{audit, generate, mutual_information, SynthDataset, SynthSample};
use cuelab_core::{Cue, CueSpec, Image, Mask, RngStream, Split, SplitCounts};
use rand::seq::SliceRandom;

fn dataset(classes: usize, cue: Cue, size: usize, counts: SplitCounts, seed: u64) -> SynthDataset {
    generate(&CueSpec::new(classes, &[cue], size, counts, seed)).unwrap()
}

fn counts(train: usize, test: usize) -> SplitCounts {
    SplitCounts { train, val: 2, test }
}

/// Nearest-centroid accuracy on the test split for a per-sample feature.
fn nearest_centroid_accuracy(ds: &SynthDataset, feature: impl Fn(&SynthSample) -> Vec<f64>) -> f64 {
    let k = ds.spec.classes;
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut n = vec![0.0; k];
    for s in ds.samples.iter().filter(|s| s.split == Split::Train) {
        let f = feature(s);
        if sums.is_empty() {
            sums = vec![vec![0.0; f.len()]; k];
        }
        sums[s.label].iter_mut().zip(&f).for_each(|(a, b)| *a += b);
        n[s.label] += 1.0;
    }
    let centroids: Vec<Vec<f64>> = sums
        .iter()
        .zip(&n)
        .map(|(s, c)| s.iter().map(|v| v / c).collect())
        .collect();
    let test: Vec<&SynthSample> = ds.samples.iter().filter(|s| s.split == Split::Test).collect();
    let correct = test
        .iter()
        .filter(|s| {
            let f = feature(s);
            let dist = |c: &Vec<f64>| c.iter().zip(&f).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = (0..k)
                .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
                .unwrap();
            best == s.label
        })
        .count();
    correct as f64 / test.len() as f64
}

fn lesion_mean_rgb(s: &SynthSample) -> Vec<f64> {
    let (h, w) = s.image.dims();
    let mut sum = vec![0.0; 3];
    let mut n = 0.0;
    for y in 0..h {
        for x in 0..w {
            if s.mask.is_lesion(y, x) {
                sum.iter_mut().zip(s.image.pixel(y, x)).for_each(|(a, b)| *a += b);
                n += 1.0;
            }
        }
    }
    sum.into_iter().map(|v| v / n).collect()
}

/// Rotation-invariant outline descriptor: magnitudes of angular harmonics
/// 2..=6 of the outline radius, normalized by the mean radius.
fn outline_harmonics(region: &Mask) -> Vec<f64> {
    let (h, w) = region.dims();
    let pts: Vec<(f64, f64)> = (0..h * w)
        .filter(|&i| region.data()[i])
        .map(|i| ((i / w) as f64 + 0.5, (i % w) as f64 + 0.5))
        .collect();
    if pts.is_empty() {
        return vec![0.0; 5];
    }
    let cy = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let cx = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    const BINS: usize = 90;
    let mut radius = [0.0f64; BINS];
    for &(y, x) in &pts {
        let theta = (y - cy).atan2(x - cx).rem_euclid(2.0 * PI);
        let bin = ((theta / (2.0 * PI) * BINS as f64) as usize).min(BINS - 1);
        radius[bin] = radius[bin].max((y - cy).hypot(x - cx));
    }
    let mean = radius.iter().sum::<f64>() / BINS as f64;
    (2..=6)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (b, r) in radius.iter().enumerate() {
                let a = k as f64 * 2.0 * PI * (b as f64 + 0.5) / BINS as f64;
                re += r * a.cos();
                im += r * a.sin();
            }
            re.hypot(im) / (BINS as f64 * mean)
        })
        .collect()
}

/// Lesion segmentation from pixels alone; every lesion hue is brighter than
/// the background in its strongest channel.
fn segment(img: &Image) -> Mask {
    Mask::from_fn(img.height(), img.width(), |y, x| {
        img.pixel(y, x).into_iter().fold(0.0, f64::max) > 0.3
    })
    .unwrap()
}

/// Dominant stripe orientation (doubled-angle unit vector) and frequency of
/// the lesion luma.
fn stripe_orientation(s: &SynthSample) -> Vec<f64> {
    let (h, w) = s.image.dims();
    let lesion: Vec<usize> = (0..h * w).filter(|&i| s.mask.data()[i]).collect();
    let luma = |i: usize| s.image.pixel_at(i).iter().sum::<f64>() / 3.0;
    let mean = lesion.iter().map(|&i| luma(i)).sum::<f64>() / lesion.len() as f64;
    let windowed = Image::from_fn(h, w, |y, x| {
        let i = y * w + x;
        let v = if s.mask.data()[i] { 0.5 + 0.5 * (luma(i) - mean) } else { 0.5 };
        [v; 3]
    })
    .unwrap();
    let planes = dft2(&windowed);
    let mut best = (0.0, 0.0, 0.0);
    for u in 0..h {
        for v in 0..w {
            let fu = if u <= h / 2 { u as f64 } else { u as f64 - h as f64 } / h as f64;
            let fv = if v <= w / 2 { v as f64 } else { v as f64 - w as f64 } / w as f64;
            let f = fu.hypot(fv);
            if f < 0.1 {
                continue;
            }
            let a = planes.amplitude(0)[u * w + v];
            if a > best.0 {
                best = (a, fu.atan2(fv), f);
            }
        }
    }
    vec![(2.0 * best.1).cos(), (2.0 * best.1).sin(), 4.0 * best.2]
}

#[test]
fn color_cue_is_separable_by_lesion_mean() {
    for k in [2, 4, 6] {
        let ds = dataset(k, Cue::Color, 32, counts(20, 30), 1);
        assert_eq!(nearest_centroid_accuracy(&ds, lesion_mean_rgb), 1.0, "K = {k}");
    }
}

#[test]
fn shape_cue_is_separable_by_outline() {
    for k in [2, 3, 6] {
        let ds = dataset(k, Cue::Shape, 64, counts(20, 30), 2);
        let acc = nearest_centroid_accuracy(&ds, |s| outline_harmonics(&s.mask));
        assert_eq!(acc, 1.0, "K = {k}");
    }
}

#[test]
fn texture_cue_is_separable_by_orientation() {
    for k in [2, 3, 6] {
        let ds = dataset(k, Cue::Texture, 48, counts(20, 30), 3);
        assert_eq!(nearest_centroid_accuracy(&ds, stripe_orientation), 1.0, "K = {k}");
    }
}

#[test]
fn pixel_scrambling_destroys_shape_cue() {
    let ds = dataset(2, Cue::Shape, 48, counts(100, 1000), 4);
    let clean = nearest_centroid_accuracy(&ds, |s| outline_harmonics(&segment(&s.image)));
    assert!(clean > 0.95, "segmented outline accuracy {clean}");
    let scrambled = nearest_centroid_accuracy(&ds, |s| {
        let img = color_only(&s.image, &RngStream::new(4, &s.id, "color_only"));
        outline_harmonics(&segment(&img))
    });
    assert!((scrambled - 0.5).abs() <= 0.05, "scrambled accuracy {scrambled}");
}

#[test]
fn nuisance_cues_are_independent_of_label() {
    for (k, cue) in [(2, Cue::Color), (3, Cue::Shape), (4, Cue::Texture)] {
        let ds = dataset(k, cue, 16, SplitCounts { train: 100, val: 20, test: 40 }, 5);
        let report = audit(&ds.labels(), &ds.cue_records()).unwrap();
        let informative = report.cue(cue);
        assert!((informative.mutual_information - (k as f64).ln()).abs() < 1e-9);
        for other in Cue::ALL.into_iter().filter(|c| *c != cue) {
            let a = report.cue(other);
            assert!(a.p_value > 0.01, "{other:?}: p = {}", a.p_value);
            assert!(a.mutual_information < 0.05, "{other:?}: MI = {}", a.mutual_information);
        }
    }
}

#[test]
fn shuffled_labels_carry_no_information() {
    let ds = dataset(3, Cue::Color, 16, SplitCounts { train: 100, val: 20, test: 40 }, 6);
    let mut labels = ds.labels();
    labels.shuffle(&mut RngStream::new(6, "labels", "shuffle").rng());
    for cue in Cue::ALL {
        let levels: Vec<usize> = ds.cue_records().iter().map(|r| r.level(cue)).collect();
        assert!(mutual_information(&labels, &levels) < 0.05, "{cue:?}");
    }
}

#[test]
fn equal_specs_give_identical_bytes() {
    let a = dataset(3, Cue::Texture, 24, counts(5, 5), 7);
    let b = dataset(3, Cue::Texture, 24, counts(5, 5), 7);
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert_eq!(x.image.to_rgb8(), y.image.to_rgb8());
        assert_eq!(x.mask, y.mask);
        assert_eq!(x.cues, y.cues);
    }
}

#[test]
fn lesion_area_stays_in_range() {
    let ds = dataset(6, Cue::Shape, 48, counts(10, 0), 8);
    for s in &ds.samples {
        let frac = s.mask.lesion_count() as f64 / (48.0 * 48.0);
        assert!((0.18..=0.45).contains(&frac), "{} covers {frac}", s.id);
    }
}
