//! Per-channel 2-D DFT, amplitude/phase decomposition and recombination.
//!
//! Conventions: the forward transform is unnormalized and the inverse carries
//! the `1/N` factor. Bins whose modulus is negligible get phase 0. Every
//! operation exposes its real-valued result before clamping as a
//! [`RealField`] so spectral identities can be checked exactly.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{Image, RngStream, CHANNELS};

/// Moduli at or below this fraction of the channel's peak are treated as zero
/// when assigning phase.
pub const ZERO_AMPLITUDE_REL: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralPlanes {
    height: usize,
    width: usize,
    amplitude: [Vec<f64>; CHANNELS],
    phase: [Vec<f64>; CHANNELS],
}

impl SpectralPlanes {
    /// Builds planes from explicit amplitude and phase arrays (row-major per channel).
    pub fn from_parts(
        height: usize,
        width: usize,
        amplitude: [Vec<f64>; CHANNELS],
        phase: [Vec<f64>; CHANNELS],
    ) -> Result<Self> {
        let n = height * width;
        if n == 0
            || amplitude.iter().chain(phase.iter()).any(|p| p.len() != n)
        {
            return Err(Error::InvalidDimensions {
                height,
                width,
                reason: "spectral planes must have height x width bins",
            });
        }
        if amplitude.iter().flatten().any(|a| !(*a >= 0.0)) {
            return Err(Error::InvalidParameter("amplitude must be non-negative".into()));
        }
        Ok(Self {
            height,
            width,
            amplitude,
            phase,
        })
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

    pub fn amplitude(&self, channel: usize) -> &[f64] {
        &self.amplitude[channel]
    }

    pub fn phase(&self, channel: usize) -> &[f64] {
        &self.phase[channel]
    }

    /// Amplitude at frequency `(u, v)`; indices wrap modulo the dimensions.
    pub fn amplitude_at(&self, channel: usize, u: i64, v: i64) -> f64 {
        self.amplitude[channel][self.wrap(u, v)]
    }

    pub fn phase_at(&self, channel: usize, u: i64, v: i64) -> f64 {
        self.phase[channel][self.wrap(u, v)]
    }

    fn wrap(&self, u: i64, v: i64) -> usize {
        let u = u.rem_euclid(self.height as i64) as usize;
        let v = v.rem_euclid(self.width as i64) as usize;
        u * self.width + v
    }

    fn ensure_same_dims(&self, other: &SpectralPlanes) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }
}

/// Real part of an inverse transform, before any clamping.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    pub height: usize,
    pub width: usize,
    /// Planar, like [`Image::data`].
    pub data: Vec<f64>,
    /// Largest discarded imaginary magnitude.
    pub max_imag: f64,
}

impl RealField {
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn to_image_clamped(&self) -> Image {
        Image::from_clamped(self.height, self.width, self.data.clone())
            .expect("field dimensions are valid")
    }

    /// Joint min-max rescale of all channels into `[0, 1]`. A flat field is
    /// clamped instead.
    pub fn to_image_normalized(&self) -> Image {
        let (lo, hi) = self
            .data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if !(hi - lo > 1e-12) {
            return self.to_image_clamped();
        }
        let data = self.data.iter().map(|v| (v - lo) / (hi - lo)).collect();
        Image::from_clamped(self.height, self.width, data).expect("field dimensions are valid")
    }

    /// `||self - other||_2 / ||other||_2` over all channels.
    pub fn relative_l2(&self, other: &[f64]) -> f64 {
        let num: f64 = self.data.iter().zip(other).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = other.iter().map(|b| b * b).sum();
        (num / den).sqrt()
    }
}

/// In-place 2-D transform of one row-major plane.
fn fft2_inplace(buf: &mut [Complex<f64>], height: usize, width: usize, dir: FftDirection) {
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft(width, dir);
    for row in buf.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft(height, dir);
    let mut col = vec![Complex::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            col[y] = buf[y * width + x];
        }
        col_fft.process(&mut col);
        for y in 0..height {
            buf[y * width + x] = col[y];
        }
    }
}

fn forward_planes(data: &[f64], height: usize, width: usize) -> [Vec<Complex<f64>>; CHANNELS] {
    let n = height * width;
    std::array::from_fn(|c| {
        let mut buf: Vec<Complex<f64>> =
            data[c * n..(c + 1) * n].iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft2_inplace(&mut buf, height, width, FftDirection::Forward);
        buf
    })
}

fn polar_planes(height: usize, width: usize, spectra: [Vec<Complex<f64>>; CHANNELS]) -> SpectralPlanes {
    let mut amplitude: [Vec<f64>; CHANNELS] = Default::default();
    let mut phase: [Vec<f64>; CHANNELS] = Default::default();
    for (c, spec) in spectra.iter().enumerate() {
        let amp: Vec<f64> = spec.iter().map(|z| z.norm()).collect();
        let peak = amp.iter().cloned().fold(0.0, f64::max);
        let floor = ZERO_AMPLITUDE_REL * peak;
        phase[c] = spec
            .iter()
            .zip(&amp)
            .map(|(z, &a)| {
                if a <= floor {
                    0.0
                } else {
                    let p = z.arg();
                    if p <= -PI {
                        p + 2.0 * PI
                    } else {
                        p
                    }
                }
            })
            .collect();
        amplitude[c] = amp;
    }
    SpectralPlanes {
        height,
        width,
        amplitude,
        phase,
    }
}

fn dft2_raw(data: &[f64], height: usize, width: usize) -> SpectralPlanes {
    polar_planes(height, width, forward_planes(data, height, width))
}

/// Unnormalized forward DFT of each channel, in polar form.
pub fn dft2(img: &Image) -> SpectralPlanes {
    dft2_raw(img.data(), img.height(), img.width())
}

/// Forward DFT of an unclamped field.
pub fn dft2_field(field: &RealField) -> SpectralPlanes {
    dft2_raw(&field.data, field.height, field.width)
}

fn inverse(
    height: usize,
    width: usize,
    mut bin: impl FnMut(usize, usize) -> Complex<f64>,
) -> RealField {
    let n = height * width;
    let mut data = vec![0.0; CHANNELS * n];
    let mut max_imag: f64 = 0.0;
    let scale = 1.0 / n as f64;
    for c in 0..CHANNELS {
        let mut buf: Vec<Complex<f64>> = (0..n).map(|i| bin(c, i)).collect();
        fft2_inplace(&mut buf, height, width, FftDirection::Inverse);
        for (i, z) in buf.iter().enumerate() {
            data[c * n + i] = z.re * scale;
            max_imag = max_imag.max((z.im * scale).abs());
        }
    }
    RealField {
        height,
        width,
        data,
        max_imag,
    }
}

/// Inverse DFT with `1/N` normalization; returns the real part and the
/// largest imaginary residual.
pub fn idft2(planes: &SpectralPlanes) -> RealField {
    inverse(planes.height, planes.width, |c, i| {
        Complex::from_polar(planes.amplitude[c][i], planes.phase[c][i])
    })
}

/// `A_src * exp(i P_src)` per channel, inverted, before clamping.
pub fn recombine_raw(amplitude_src: &SpectralPlanes, phase_src: &SpectralPlanes) -> Result<RealField> {
    amplitude_src.ensure_same_dims(phase_src)?;
    Ok(inverse(amplitude_src.height, amplitude_src.width, |c, i| {
        Complex::from_polar(amplitude_src.amplitude[c][i], phase_src.phase[c][i])
    }))
}

/// Recombines one spectrum's amplitude with another's phase, clamped to `[0, 1]`.
pub fn recombine(amplitude_src: &SpectralPlanes, phase_src: &SpectralPlanes) -> Result<Image> {
    recombine_raw(amplitude_src, phase_src).map(|f| f.to_image_clamped())
}

/// I.i.d. standard-normal noise, planar, same layout as [`Image::data`].
pub fn gaussian_noise(height: usize, width: usize, rng: &RngStream) -> Vec<f64> {
    let mut r = rng.child("noise").rng();
    (0..CHANNELS * height * width)
        .map(|_| r.sample::<f64, _>(StandardNormal))
        .collect()
}

fn noise_planes(img: &Image, rng: &RngStream) -> SpectralPlanes {
    let noise = gaussian_noise(img.height(), img.width(), rng);
    dft2_raw(&noise, img.height(), img.width())
}

/// Keeps the image's amplitude, takes phase from Gaussian noise. Unclamped.
pub fn phase_randomize_raw(img: &Image, rng: &RngStream) -> RealField {
    recombine_raw(&dft2(img), &noise_planes(img, rng)).expect("noise matches image dimensions")
}

/// "Amplitude-Only": image amplitude, noise phase, clamped to `[0, 1]`.
pub fn phase_randomize(img: &Image, rng: &RngStream) -> Image {
    phase_randomize_raw(img, rng).to_image_clamped()
}

/// Keeps the image's phase, takes amplitude from Gaussian noise. Unnormalized.
pub fn amplitude_randomize_raw(img: &Image, rng: &RngStream) -> RealField {
    recombine_raw(&noise_planes(img, rng), &dft2(img)).expect("noise matches image dimensions")
}

/// "Phase-Only": image phase, noise amplitude, min-max normalized to `[0, 1]`.
pub fn amplitude_randomize(img: &Image, rng: &RngStream) -> Image {
    amplitude_randomize_raw(img, rng).to_image_normalized()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AprVariant {
    /// Partner amplitude, own phase; label follows the phase.
    AprP,
    /// Own amplitude, partner phase; label follows the amplitude.
    AfAprP,
    /// Coin flip between the two.
    MixAprP,
}

impl AprVariant {
    pub const ALL: [AprVariant; 3] = [AprVariant::AprP, AprVariant::AfAprP, AprVariant::MixAprP];

    pub fn name(self) -> &'static str {
        match self {
            AprVariant::AprP => "apr_p",
            AprVariant::AfAprP => "af_apr_p",
            AprVariant::MixAprP => "mix_apr_p",
        }
    }
}

impl fmt::Display for AprVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AprVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        AprVariant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown APR variant '{s}'")))
    }
}

/// Which spectral component carried the label into the augmented sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    PhaseDonor,
    AmplitudeDonor,
}

impl LabelSource {
    pub fn name(self) -> &'static str {
        match self {
            LabelSource::PhaseDonor => "phase_donor",
            LabelSource::AmplitudeDonor => "amplitude_donor",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecombinedSample {
    pub image: Image,
    pub label_source: LabelSource,
    /// Pre-clamp recombination.
    pub raw: RealField,
}

/// Amplitude-phase recombination of `x_j` with partner `x_k`.
///
/// `x_j` always contributes the component its label travels with: its phase
/// for [`AprVariant::AprP`], its amplitude for [`AprVariant::AfAprP`], and a
/// fair coin decides for [`AprVariant::MixAprP`].
pub fn apr_augment(variant: AprVariant, x_j: &Image, x_k: &Image, rng: &RngStream) -> Result<RecombinedSample> {
    x_j.ensure_same_dims(x_k)?;
    let label_source = match variant {
        AprVariant::AprP => LabelSource::PhaseDonor,
        AprVariant::AfAprP => LabelSource::AmplitudeDonor,
        AprVariant::MixAprP => {
            if rng.child("coin").rng().random_bool(0.5) {
                LabelSource::PhaseDonor
            } else {
                LabelSource::AmplitudeDonor
            }
        }
    };
    let (fj, fk) = (dft2(x_j), dft2(x_k));
    let raw = match label_source {
        LabelSource::PhaseDonor => recombine_raw(&fk, &fj)?,
        LabelSource::AmplitudeDonor => recombine_raw(&fj, &fk)?,
    };
    Ok(RecombinedSample {
        image: raw.to_image_clamped(),
        label_source,
        raw,
    })
}

/// Index of frequency bin `(u, v)` after centering (`fftshift`).
pub fn shifted_index(u: usize, v: usize, height: usize, width: usize) -> (usize, usize) {
    ((u + height / 2) % height, (v + width / 2) % width)
}

/// Centered `log(1 + A)` map averaged over channels, min-max normalized,
/// gray replicated to RGB.
pub fn export_spectrum(img: &Image) -> Image {
    let planes = dft2(img);
    let (h, w) = planes.dims();
    let mut shifted = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            let i = u * w + v;
            let mag = (0..CHANNELS)
                .map(|c| planes.amplitude[c][i].ln_1p())
                .sum::<f64>()
                / CHANNELS as f64;
            let (su, sv) = shifted_index(u, v, h, w);
            shifted[su * w + sv] = mag;
        }
    }
    let (lo, hi) = shifted
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let gray: Vec<f64> = shifted
        .iter()
        .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect();
    let mut data = Vec::with_capacity(CHANNELS * h * w);
    for _ in 0..CHANNELS {
        data.extend_from_slice(&gray);
    }
    Image::from_clamped(h, w, data).expect("spectrum dimensions are valid")
}
