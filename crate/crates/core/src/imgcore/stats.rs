use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::image::{quantize_value, Image, CHANNELS};

/// Per-channel mean color in `[0, 1]`, used to shade sketch and mask renderings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanRgb([f64; 3]);

impl MeanRgb {
    pub fn new(rgb: [f64; 3]) -> Result<Self> {
        if rgb.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter(format!(
                "mean_rgb {rgb:?} must lie in [0, 1]"
            )));
        }
        Ok(Self(rgb))
    }

    pub fn rgb(&self) -> [f64; 3] {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> [f64; 3] {
        self.0.map(|v| (v * factor).clamp(0.0, 1.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColorStats {
    pub mean_rgb: MeanRgb,
    /// 256 bins per channel over half-up quantized bytes.
    pub histogram: [[u64; 256]; 3],
}

impl ColorStats {
    pub fn bin_total(&self, channel: usize) -> u64 {
        self.histogram[channel].iter().sum()
    }
}

pub fn channel_histogram(img: &Image) -> ColorStats {
    let mut histogram = [[0u64; 256]; 3];
    let mut mean = [0.0; 3];
    for (c, (hist, m)) in histogram.iter_mut().zip(mean.iter_mut()).enumerate() {
        let plane = img.channel(c);
        for &v in plane {
            hist[quantize_value(v) as usize] += 1;
        }
        // Summing in sorted order makes the mean independent of pixel layout.
        let mut sorted = plane.to_vec();
        sorted.sort_by(f64::total_cmp);
        *m = sorted.iter().sum::<f64>() / plane.len() as f64;
    }
    ColorStats {
        mean_rgb: MeanRgb(mean.map(|v| v.clamp(0.0, 1.0))),
        histogram,
    }
}

/// Histogram restricted to a subset of pixel positions.
pub fn region_histogram(img: &Image, positions: impl IntoIterator<Item = usize>) -> [[u64; 256]; 3] {
    let mut hist = [[0u64; 256]; 3];
    for i in positions {
        for (c, v) in img.pixel_at(i).into_iter().enumerate() {
            hist[c][quantize_value(v) as usize] += 1;
        }
    }
    hist
}

/// Pixel-weighted running mean over many images.
#[derive(Clone, Debug, Default)]
pub struct MeanAccumulator {
    sums: [f64; CHANNELS],
    pixels: u64,
}

impl MeanAccumulator {
    pub fn add(&mut self, img: &Image) {
        for c in 0..CHANNELS {
            self.sums[c] += img.channel(c).iter().sum::<f64>();
        }
        self.pixels += img.pixel_count() as u64;
    }

    pub fn merge(mut self, other: &MeanAccumulator) -> Self {
        for c in 0..CHANNELS {
            self.sums[c] += other.sums[c];
        }
        self.pixels += other.pixels;
        self
    }

    pub fn finish(&self) -> Result<MeanRgb> {
        if self.pixels == 0 {
            return Err(Error::EmptyDataset);
        }
        MeanRgb::new(self.sums.map(|s| (s / self.pixels as f64).clamp(0.0, 1.0)))
    }
}
