use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};

use super::{Image, Mask};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Replicate a grayscale plane into R, G and B instead of rejecting it.
    pub expand_gray: bool,
}

struct Raw {
    height: usize,
    width: usize,
    color: ColorType,
    bytes: Vec<u8>,
}

fn decode(path: &Path) -> Result<Raw> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::IDENTITY);
    let decode_err = |e: png::DecodingError| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut reader = decoder.read_info().map_err(decode_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::Decode {
        path: path.to_path_buf(),
        message: "image too large".into(),
    })?;
    let mut bytes = vec![0; size];
    let info = reader.next_frame(&mut bytes).map_err(decode_err)?;
    if info.bit_depth != BitDepth::Eight {
        return Err(Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            depth: info.bit_depth as u8,
        });
    }
    bytes.truncate(info.buffer_size());
    Ok(Raw {
        height: info.height as usize,
        width: info.width as usize,
        color: info.color_type,
        bytes,
    })
}

/// Loads an 8-bit RGB PNG, mapping each byte `v` to `v / 255`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    load_image_with(path, LoadOptions::default())
}

pub fn load_image_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Image> {
    let path = path.as_ref();
    let raw = decode(path)?;
    let rgb = match raw.color {
        ColorType::Rgb => raw.bytes,
        ColorType::Grayscale if opts.expand_gray => {
            raw.bytes.iter().flat_map(|&g| [g, g, g]).collect()
        }
        ColorType::Grayscale | ColorType::GrayscaleAlpha => {
            return Err(Error::GrayscaleImage {
                path: path.to_path_buf(),
            })
        }
        other => {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                message: format!("unsupported color type {other:?}"),
            })
        }
    };
    Image::from_rgb8(raw.height, raw.width, &rgb)
}

/// Writes an 8-bit RGB PNG with half-up rounding of `v * 255`.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    write_png(
        path.as_ref(),
        img.width(),
        img.height(),
        ColorType::Rgb,
        &img.to_rgb8(),
    )
}

/// Loads an 8-bit grayscale mask; bytes `>= 128` are lesion. RGB masks use
/// their red channel.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let raw = decode(path)?;
    let gray: Vec<u8> = match raw.color {
        ColorType::Grayscale => raw.bytes,
        ColorType::GrayscaleAlpha => raw.bytes.chunks_exact(2).map(|p| p[0]).collect(),
        ColorType::Rgb => raw.bytes.chunks_exact(3).map(|p| p[0]).collect(),
        other => {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                message: format!("unsupported mask color type {other:?}"),
            })
        }
    };
    Mask::from_gray8(raw.height, raw.width, &gray)
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    write_png(
        path.as_ref(),
        mask.width(),
        mask.height(),
        ColorType::Grayscale,
        &mask.to_gray8(),
    )
}

fn write_png(path: &Path, width: usize, height: usize, color: ColorType, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(BitDepth::Eight);
    let encode_err = |e: png::EncodingError| Error::Encode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut writer = encoder.write_header().map_err(encode_err)?;
    writer.write_image_data(data).map_err(encode_err)?;
    writer.finish().map_err(encode_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, w: u32, h: u32, color: ColorType, depth: BitDepth, data: &[u8]) {
        let file = File::create(path).unwrap();
        let mut enc = png::Encoder::new(BufWriter::new(file), w, h);
        enc.set_color(color);
        enc.set_depth(depth);
        enc.write_header().unwrap().write_image_data(data).unwrap();
    }

    #[test]
    fn white_and_black_pngs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.png");
        write_raw(&p, 2, 2, ColorType::Rgb, BitDepth::Eight, &[255; 12]);
        assert!(load_image(&p).unwrap().data().iter().all(|&v| v == 1.0));
        write_raw(&p, 2, 2, ColorType::Rgb, BitDepth::Eight, &[0; 12]);
        assert!(load_image(&p).unwrap().data().iter().all(|&v| v == 0.0));
        write_raw(&p, 2, 2, ColorType::Rgb, BitDepth::Eight, &[128; 12]);
        let v = load_image(&p).unwrap().data()[0];
        assert!((v - 0.501_960_784_313_725_5).abs() < 1e-15);
    }

    #[test]
    fn save_quantizes_half_up() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.png");
        let img = Image::new(1, 1, vec![1.0, 0.5, 0.0]).unwrap();
        save_image(&img, &p).unwrap();
        let back = load_image(&p).unwrap();
        assert_eq!(back.to_rgb8(), vec![255, 128, 0]);
    }

    #[test]
    fn rejects_sixteen_bit_and_plain_gray() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        write_raw(&p, 2, 2, ColorType::Rgb, BitDepth::Sixteen, &[7; 24]);
        assert!(matches!(load_image(&p), Err(Error::UnsupportedBitDepth { depth: 16, .. })));

        write_raw(&p, 2, 2, ColorType::Grayscale, BitDepth::Eight, &[10, 20, 30, 40]);
        assert!(matches!(load_image(&p), Err(Error::GrayscaleImage { .. })));
        let img = load_image_with(&p, LoadOptions { expand_gray: true }).unwrap();
        assert_eq!(img.pixel(1, 1), [40.0 / 255.0; 3]);
    }

    #[test]
    fn unreadable_file() {
        assert!(matches!(load_image("/nonexistent/x.png"), Err(Error::Io { .. })));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.png");
        std::fs::write(&p, b"not a png").unwrap();
        assert!(matches!(load_image(&p), Err(Error::Decode { .. })));
    }

    #[test]
    fn unwritable_path() {
        let img = Image::filled(2, 2, [0.3; 3]).unwrap();
        assert!(save_image(&img, "/nonexistent/dir/out.png").is_err());
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let m = Mask::from_fn(8, 8, |y, x| (y + x) % 3 == 0).unwrap();
        save_mask(&m, &p).unwrap();
        assert_eq!(load_mask(&p).unwrap(), m);
    }
}
