//! PFM float maps (grayscale `Pf`).
//!
//! Written little-endian (scale −1.0) as float32, rows stored bottom-to-top
//! per the PFM convention. The reader honors the endianness encoded in the
//! scale's sign.

use crate::image::{Image, ScalarImage};
use crate::{Error, Result};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Writes a scalar image as grayscale PFM (float32, little-endian).
pub fn write_pfm(path: &Path, image: &ScalarImage) -> Result<()> {
    let display = path.display().to_string();
    let file = File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut w = BufWriter::new(file);
    let header = format!("Pf\n{} {}\n-1.0\n", image.width(), image.height());
    w.write_all(header.as_bytes())
        .map_err(|e| Error::io(&display, e))?;
    let mut bytes = Vec::with_capacity(image.len() * 4);
    for y in (0..image.height()).rev() {
        for x in 0..image.width() {
            bytes.extend_from_slice(&(*image.get(x, y) as f32).to_le_bytes());
        }
    }
    w.write_all(&bytes).map_err(|e| Error::io(&display, e))?;
    w.flush().map_err(|e| Error::io(&display, e))
}

/// Reads a grayscale PFM.
pub fn read_pfm(path: &Path) -> Result<ScalarImage> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| Error::io(&display, e))?;
    if line.trim() != "Pf" {
        return Err(Error::format(
            &display,
            format!("expected grayscale PFM 'Pf', got '{}'", line.trim()),
        ));
    }
    line.clear();
    r.read_line(&mut line).map_err(|e| Error::io(&display, e))?;
    let dims: Vec<&str> = line.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::format(&display, "bad dimensions line"));
    }
    let width: usize = dims[0]
        .parse()
        .map_err(|_| Error::format(&display, "bad width"))?;
    let height: usize = dims[1]
        .parse()
        .map_err(|_| Error::format(&display, "bad height"))?;
    line.clear();
    r.read_line(&mut line).map_err(|e| Error::io(&display, e))?;
    let scale: f32 = line
        .trim()
        .parse()
        .map_err(|_| Error::format(&display, "bad scale"))?;
    let little_endian = scale < 0.0;

    let mut raw = vec![0u8; width * height * 4];
    r.read_exact(&mut raw).map_err(|e| Error::io(&display, e))?;
    let mut img = Image::new(width, height, 0.0);
    let mut i = 0;
    for y in (0..height).rev() {
        for x in 0..width {
            let b = [raw[i], raw[i + 1], raw[i + 2], raw[i + 3]];
            let v = if little_endian {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
            img.set(x, y, v as f64);
            i += 4;
        }
    }
    Ok(img)
}
