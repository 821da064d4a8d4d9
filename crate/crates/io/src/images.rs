//! Image files. PNG and PPM/PGM are read through the `image` crate; written
//! images use 16-bit binary PPM so training targets survive a round trip
//! with negligible quantization.

use std::path::Path;

use image::{ImageBuffer, Rgb};
use splatkit::{Image, Real};

use crate::error::{IoError, Result};

fn image_err(path: &Path, e: impl std::fmt::Display) -> IoError {
    IoError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Decodes PNG or PPM bytes into linear `[0, 1]` RGB.
pub fn decode_image<T: Real>(bytes: &[u8], path: &Path) -> Result<Image<T>> {
    let img = image::load_from_memory(bytes)
        .map_err(|e| image_err(path, e))?
        .into_rgb16();
    let (w, h) = img.dimensions();
    let scale = 1.0 / 65535.0;
    Ok(Image {
        width: w as usize,
        height: h as usize,
        data: img
            .into_raw()
            .into_iter()
            .map(|v| T::lit(f64::from(v) * scale))
            .collect(),
    })
}

pub fn read_image<T: Real>(path: &Path) -> Result<Image<T>> {
    decode_image(&crate::read_file(path)?, path)
}

fn quantize<T: Real>(v: T) -> u16 {
    (v.to_f64_lossy().clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Binary 16-bit PPM (`P6`, maxval 65535, big-endian samples).
pub fn encode_ppm16<T: Real>(img: &Image<T>) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n65535\n", img.width, img.height).into_bytes();
    out.reserve(img.data.len() * 2);
    for &v in &img.data {
        out.extend_from_slice(&quantize(v).to_be_bytes());
    }
    out
}

pub fn write_ppm16<T: Real>(path: &Path, img: &Image<T>) -> Result<()> {
    crate::write_file(path, &encode_ppm16(img))
}

/// Writes `img`, choosing the format from the extension: `.png` gives a
/// 16-bit PNG, anything else a 16-bit PPM.
pub fn write_image<T: Real>(path: &Path, img: &Image<T>) -> Result<()> {
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if !is_png {
        return write_ppm16(path, img);
    }
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_raw(
        img.width as u32,
        img.height as u32,
        img.data.iter().map(|&v| quantize(v)).collect(),
    )
    .ok_or_else(|| image_err(path, "pixel buffer does not match dimensions"))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(crate::error::file_err(dir))?;
    }
    buf.save(path).map_err(|e| image_err(path, e))
}
