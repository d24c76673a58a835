//! Binary PGM (P5).
//!
//! Intensities are written with maxval 65535 as big-endian 16-bit words,
//! `value = round(Z · 65535)`; masks with maxval 255 as 0/255 bytes.

use crate::image::{BoolImage, Image, ScalarImage};
use crate::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAXVAL_16: u32 = 65535;

/// Writes a [0, 1] intensity image as 16-bit binary PGM.
pub fn write_pgm(path: &Path, image: &ScalarImage) -> Result<()> {
    let display = path.display().to_string();
    let file = File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut w = BufWriter::new(file);
    let header = format!("P5\n{} {}\n{}\n", image.width(), image.height(), MAXVAL_16);
    w.write_all(header.as_bytes())
        .map_err(|e| Error::io(&display, e))?;
    let mut bytes = Vec::with_capacity(image.len() * 2);
    for &v in image.data() {
        let q = (v.clamp(0.0, 1.0) * MAXVAL_16 as f64).round() as u16;
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    w.write_all(&bytes).map_err(|e| Error::io(&display, e))?;
    w.flush().map_err(|e| Error::io(&display, e))
}

/// Writes a mask as 8-bit binary PGM with values 0/255.
pub fn write_pgm_mask(path: &Path, mask: &BoolImage) -> Result<()> {
    let display = path.display().to_string();
    let file = File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut w = BufWriter::new(file);
    let header = format!("P5\n{} {}\n255\n", mask.width(), mask.height());
    w.write_all(header.as_bytes())
        .map_err(|e| Error::io(&display, e))?;
    let bytes: Vec<u8> = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    w.write_all(&bytes).map_err(|e| Error::io(&display, e))?;
    w.flush().map_err(|e| Error::io(&display, e))
}

struct HeaderReader<R: Read> {
    inner: R,
}

impl<R: Read> HeaderReader<R> {
    /// Next whitespace-separated token, skipping `#` comments.
    fn token(&mut self, path: &str) -> Result<String> {
        let mut tok = String::new();
        let mut in_comment = false;
        loop {
            let mut byte = [0u8; 1];
            let n = self
                .inner
                .read(&mut byte)
                .map_err(|e| Error::io(path, e))?;
            if n == 0 {
                if tok.is_empty() {
                    return Err(Error::format(path, "unexpected end of header"));
                }
                return Ok(tok);
            }
            let c = byte[0] as char;
            if in_comment {
                if c == '\n' {
                    in_comment = false;
                }
                continue;
            }
            if c == '#' {
                in_comment = true;
                continue;
            }
            if c.is_ascii_whitespace() {
                if tok.is_empty() {
                    continue;
                }
                return Ok(tok);
            }
            tok.push(c);
        }
    }
}

/// Reads a binary PGM into [0, 1] intensities (any maxval up to 65535).
pub fn read_pgm(path: &Path) -> Result<ScalarImage> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut r = HeaderReader {
        inner: BufReader::new(file),
    };
    let magic = r.token(&display)?;
    if magic != "P5" {
        return Err(Error::format(&display, format!("expected P5, got {magic}")));
    }
    let parse = |tok: String| -> Result<usize> {
        tok.parse()
            .map_err(|_| Error::format(&display, format!("bad header number '{tok}'")))
    };
    let width = parse(r.token(&display)?)?;
    let height = parse(r.token(&display)?)?;
    let maxval = parse(r.token(&display)?)?;
    if width == 0 || height == 0 {
        return Err(Error::format(&display, "zero dimensions"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(&display, format!("unsupported maxval {maxval}")));
    }
    let two_byte = maxval > 255;
    let count = width * height;
    let mut raw = vec![0u8; count * if two_byte { 2 } else { 1 }];
    r.inner
        .read_exact(&mut raw)
        .map_err(|e| Error::io(&display, e))?;
    let scale = maxval as f64;
    let data: Vec<f64> = if two_byte {
        raw.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    } else {
        raw.iter().map(|&b| b as f64 / scale).collect()
    };
    for &v in &data {
        if v > 1.0 {
            return Err(Error::format(&display, "sample exceeds maxval"));
        }
    }
    Image::from_vec(width, height, data)
}

/// Reads a PGM as a mask: nonzero means true.
pub fn read_pgm_mask(path: &Path) -> Result<BoolImage> {
    Ok(read_pgm(path)?.map(|&v| v > 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn pgm_round_trip_hits_quantization_grid() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        let img = Image::from_fn(9, 5, |x, y| ((x * 13 + y * 7) % 100) as f64 / 99.0);
        write_pgm(&path, &img).unwrap();
        let back = read_pgm(&path).unwrap();
        assert_eq!(back.width(), 9);
        assert_eq!(back.height(), 5);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 65535.0, "{a} vs {b}");
        }
    }

    #[test]
    fn pgm_write_is_byte_stable() {
        let dir = tempdir().unwrap();
        let img = Image::from_fn(4, 3, |x, y| (x + y) as f64 / 6.0);
        let p1 = dir.path().join("a.pgm");
        let p2 = dir.path().join("b.pgm");
        write_pgm(&p1, &img).unwrap();
        write_pgm(&p2, &img).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        let mask = Image::from_fn(6, 4, |x, y| (x + y) % 3 == 0);
        write_pgm_mask(&path, &mask).unwrap();
        assert_eq!(read_pgm_mask(&path).unwrap(), mask);
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, b"P2\n2 2\n255\n0 0 0 0\n").unwrap();
        assert!(read_pgm(&path).is_err());
    }

    #[test]
    fn header_comments_are_skipped() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.pgm");
        std::fs::write(&path, b"P5\n# a comment\n2 1\n255\n\x10\x20").unwrap();
        let img = read_pgm(&path).unwrap();
        assert_eq!(img.width(), 2);
        assert!((img.data()[0] - 16.0 / 255.0).abs() < 1e-12);
    }
}
