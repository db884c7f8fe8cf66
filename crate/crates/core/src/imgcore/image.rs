use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// Smallest side length accepted by the batch transforms.
pub const MIN_TRANSFORM_SIDE: usize = 8;

/// Quantize a unit-interval value to a byte with half-up rounding.
#[inline]
pub fn quantize_value(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// RGB raster with values in `[0, 1]`, stored as three row-major planes.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image from planar data (`R` plane, then `G`, then `B`).
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != CHANNELS * height * width {
            return Err(Error::InvalidDimensions {
                height,
                width,
                reason: "data length does not match 3 x height x width",
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::ValueOutOfRange { index, value });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds an image by clamping every value into `[0, 1]`. NaN maps to 0.
    pub fn from_clamped(height: usize, width: usize, mut data: Vec<f64>) -> Result<Self> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(height, width, data)
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::from_fn(height, width, |_, _| rgb)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        check_dims(height, width)?;
        let n = height * width;
        let mut data = vec![0.0; CHANNELS * n];
        for y in 0..height {
            for x in 0..width {
                let px = f(y, x);
                for (c, v) in px.into_iter().enumerate() {
                    data[c * n + y * width + x] = v;
                }
            }
        }
        Self::new(height, width, data)
    }

    /// Builds an image from interleaved 8-bit RGB bytes.
    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        check_dims(height, width)?;
        if bytes.len() != CHANNELS * height * width {
            return Err(Error::InvalidDimensions {
                height,
                width,
                reason: "byte length does not match 3 x height x width",
            });
        }
        let n = height * width;
        let mut data = vec![0.0; CHANNELS * n];
        for (i, px) in bytes.chunks_exact(CHANNELS).enumerate() {
            for c in 0..CHANNELS {
                data[c * n + i] = f64::from(px[c]) / 255.0;
            }
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Interleaved 8-bit RGB bytes, half-up rounded.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let n = self.pixel_count();
        let mut out = Vec::with_capacity(CHANNELS * n);
        for i in 0..n {
            for c in 0..CHANNELS {
                out.push(quantize_value(self.data[c * n + i]));
            }
        }
        out
    }

    /// Snaps every value to the nearest `k / 255`.
    pub fn quantized(&self) -> Image {
        let data = self
            .data
            .iter()
            .map(|&v| f64::from(quantize_value(v)) / 255.0)
            .collect();
        Image { data, ..*self }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    /// Planar data: `R` plane, `G` plane, `B` plane.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        self.pixel_at(y * self.width + x)
    }

    /// Pixel by flat row-major index.
    pub fn pixel_at(&self, i: usize) -> [f64; 3] {
        let n = self.pixel_count();
        [self.data[i], self.data[n + i], self.data[2 * n + i]]
    }

    pub(crate) fn set_pixel_at(&mut self, i: usize, rgb: [f64; 3]) {
        let n = self.pixel_count();
        for (c, v) in rgb.into_iter().enumerate() {
            self.data[c * n + i] = v;
        }
    }

    /// Top-left crop.
    pub fn crop(&self, height: usize, width: usize) -> Result<Image> {
        if height > self.height || width > self.width {
            return Err(Error::InvalidDimensions {
                height,
                width,
                reason: "crop larger than source",
            });
        }
        Image::from_fn(height, width, |y, x| self.pixel(y, x))
    }

    /// Rejects images below the minimum side accepted by batch transforms.
    pub fn check_transform_size(&self) -> Result<()> {
        if self.height < MIN_TRANSFORM_SIDE || self.width < MIN_TRANSFORM_SIDE {
            return Err(Error::InvalidDimensions {
                height: self.height,
                width: self.width,
                reason: "transforms require at least 8x8 pixels",
            });
        }
        Ok(())
    }

    pub fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidDimensions {
            height,
            width,
            reason: "image must be non-empty",
        });
    }
    Ok(())
}
