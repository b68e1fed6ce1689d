//! Grayscale PNG and binary PGM (P5) input/output.
//!
//! 8-bit samples are divided by 255 on read, 16-bit samples by 65535.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, GrayImage, ImageBuffer, ImageFormat, Luma};

use crate::error::{Error, Result};
use crate::plane::{to_display, Plane};
use crate::stokes::{PolarizationStack, StokesProducts};

pub type Gray16Image = ImageBuffer<Luma<u16>, Vec<u16>>;

fn image_err(path: &Path, source: image::ImageError) -> Error {
    match source {
        image::ImageError::IoError(e) => Error::io(path, e),
        other => Error::Image {
            path: path.to_path_buf(),
            source: other,
        },
    }
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => Ok(ImageFormat::Png),
        Some("pgm") | Some("pnm") => Ok(ImageFormat::Pnm),
        _ => Err(Error::invalid(format!("{}: expected a .png or .pgm file", path.display()))),
    }
}

/// Reads a grayscale image into `[0, 1]`. Color images are converted to luma.
pub fn read_plane(path: &Path) -> Result<Plane> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
        other => {
            log::warn!("{}: {:?} converted to grayscale", path.display(), other.color());
            other.to_luma16().into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()
        }
    };
    Plane::new(h, w, data)
}

pub fn write_gray8(path: &Path, img: &GrayImage) -> Result<()> {
    match format_for(path)? {
        ImageFormat::Pnm => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut out = BufWriter::new(file);
            PnmEncoder::new(&mut out)
                .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
                .encode(img.as_raw().as_slice(), img.width(), img.height(), image::ExtendedColorType::L8)
                .map_err(|e| image_err(path, e))?;
            out.flush().map_err(|e| Error::io(path, e))
        }
        fmt => img.save_with_format(path, fmt).map_err(|e| image_err(path, e)),
    }
}

pub fn write_gray16(path: &Path, img: &Gray16Image) -> Result<()> {
    match format_for(path)? {
        ImageFormat::Pnm => {
            // the pnm encoder only emits 8-bit graymaps
            let mut bytes = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
            for v in img.as_raw() {
                bytes.extend_from_slice(&v.to_be_bytes());
            }
            std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
        }
        fmt => img.save_with_format(path, fmt).map_err(|e| image_err(path, e)),
    }
}

/// 16-bit quantization of a `[0, 1]` plane.
pub fn quantize16(plane: &Plane) -> Gray16Image {
    let raw = plane
        .data()
        .iter()
        .map(|&v| (v as f64 * 65535.0).clamp(0.0, 65535.0).round_ties_even() as u16)
        .collect();
    Gray16Image::from_raw(plane.width() as u32, plane.height() as u32, raw).expect("buffer matches extents")
}

/// Writes a `[0, 1]` plane as 8-bit.
pub fn write_plane8(path: &Path, plane: &Plane) -> Result<()> {
    write_gray8(path, &plane.quantize())
}

/// Writes a `[0, 1]` plane as 16-bit.
pub fn write_plane16(path: &Path, plane: &Plane) -> Result<()> {
    write_gray16(path, &quantize16(plane))
}

/// Value ranges mapped onto `0..=255` in the S0, DOLP and AOP display images.
pub const S0_RANGE: (f64, f64) = (0.0, 2.0);
pub const DOLP_RANGE: (f64, f64) = (0.0, 1.0);
pub const AOP_RANGE: (f64, f64) = (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);

/// File names of the four angle planes, in 0°/45°/90°/135° order.
pub const ANGLE_FILES: [&str; 4] = ["I000", "I045", "I090", "I135"];

/// Writes `S0.png`, `DOLP.png` and `AOP.png` into `dir`.
pub fn write_products(dir: &Path, p: &StokesProducts) -> Result<()> {
    for (name, plane, (lo, hi)) in [("S0", &p.s0, S0_RANGE), ("DOLP", &p.dolp, DOLP_RANGE), ("AOP", &p.aop, AOP_RANGE)] {
        write_gray8(&dir.join(format!("{name}.png")), &to_display(plane, lo, hi)?)?;
    }
    Ok(())
}

pub fn read_stack(paths: [&Path; 4]) -> Result<PolarizationStack> {
    let [a, b, c, d] = paths.map(read_plane);
    PolarizationStack::new(a?, b?, c?, d?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Plane {
        Plane::from_fn(5, 7, |y, x| (y * 7 + x) as f32 / 34.0)
    }

    #[test]
    fn png_and_pgm_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = ramp();
        for name in ["a.png", "a.pgm"] {
            let path = dir.path().join(name);
            write_plane8(&path, &p).unwrap();
            let back = read_plane(&path).unwrap();
            assert_eq!(back.quantize(), p.quantize(), "{name}");
        }
        for name in ["b.png", "b.pgm"] {
            let path = dir.path().join(name);
            write_plane16(&path, &p).unwrap();
            let back = read_plane(&path).unwrap();
            assert_eq!(quantize16(&back), quantize16(&p), "{name}");
            assert!(back.data().iter().zip(p.data()).all(|(a, b)| (a - b).abs() < 1e-5));
        }
    }

    #[test]
    fn pgm16_is_big_endian() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        write_gray16(&path, &Gray16Image::from_raw(1, 1, vec![0x0102]).unwrap()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[bytes.len() - 2..], &[1, 2]);
    }

    #[test]
    fn error_kinds() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_plane(&dir.path().join("missing.png")).unwrap_err().is_io());
        let junk = dir.path().join("junk.png");
        std::fs::write(&junk, b"not an image").unwrap();
        assert!(read_plane(&junk).unwrap_err().is_io());
        assert!(!write_plane8(&dir.path().join("x.bmp"), &ramp()).unwrap_err().is_io());
    }
}
