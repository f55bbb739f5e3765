//! Depth-image file formats.
//!
//! Two formats are supported:
//!
//! * PFM (portable float map), grayscale `Pf` variant. Rows are stored
//!   bottom-up per the format convention; a negative scale marks
//!   little-endian payloads.
//! * A raw binary format: a 16-byte header of four little-endian `u32`s
//!   (width, height, two reserved words) followed by `width × height`
//!   little-endian `f32` depths in meters, row-major, top row first.
//!
//! Non-positive and NaN depths mean no return in both formats.

use crate::grid::DepthImage;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad image file: {0}")]
    Format(String),
}

fn format_err<T>(msg: impl Into<String>) -> Result<T, ImageIoError> {
    Err(ImageIoError::Format(msg.into()))
}

/// Read a depth image, picking the format from the file extension
/// (`.pfm` for portable float map, `.raw` for the binary format).
pub fn read_depth_image(path: &Path) -> Result<DepthImage, ImageIoError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let file = BufReader::new(File::open(path)?);
    match ext.as_deref() {
        Some("pfm") => read_pfm(file),
        Some("raw") => read_raw(file),
        other => format_err(format!(
            "unsupported depth-image extension {:?} (expected .pfm or .raw)",
            other.unwrap_or("<none>")
        )),
    }
}

pub fn write_depth_image(path: &Path, img: &DepthImage) -> Result<(), ImageIoError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let mut file = BufWriter::new(File::create(path)?);
    match ext.as_deref() {
        Some("pfm") => write_pfm(&mut file, img),
        Some("raw") => write_raw(&mut file, img),
        other => format_err(format!(
            "unsupported depth-image extension {:?} (expected .pfm or .raw)",
            other.unwrap_or("<none>")
        )),
    }
}

/// Read one whitespace-delimited ASCII token from the header.
fn read_token(r: &mut impl Read) -> Result<String, ImageIoError> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            if tok.is_empty() {
                return format_err("truncated PFM header");
            }
            break;
        }
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(byte[0]);
        if tok.len() > 32 {
            return format_err("oversized PFM header token");
        }
    }
    String::from_utf8(tok).or_else(|_| format_err("non-ASCII PFM header"))
}

pub fn read_pfm(mut r: impl Read) -> Result<DepthImage, ImageIoError> {
    let magic = read_token(&mut r)?;
    if magic != "Pf" {
        return format_err(format!(
            "bad PFM magic {magic:?} (only grayscale 'Pf' is supported)"
        ));
    }
    let width: usize = read_token(&mut r)?
        .parse()
        .or_else(|_| format_err("bad PFM width"))?;
    let height: usize = read_token(&mut r)?
        .parse()
        .or_else(|_| format_err("bad PFM height"))?;
    let scale: f64 = read_token(&mut r)?
        .parse()
        .or_else(|_| format_err("bad PFM scale"))?;
    if width == 0 || height == 0 || width.saturating_mul(height) > 64 << 20 {
        return format_err(format!("unreasonable PFM dimensions {width}x{height}"));
    }
    let little_endian = scale < 0.0;
    let mut payload = vec![0u8; width * height * 4];
    r.read_exact(&mut payload)?;
    let mut depths = vec![0f32; width * height];
    // PFM stores the bottom row first.
    for row in 0..height {
        let src = (height - 1 - row) * width * 4;
        for col in 0..width {
            let b: [u8; 4] = payload[src + col * 4..src + col * 4 + 4]
                .try_into()
                .unwrap();
            depths[row * width + col] = if little_endian {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
        }
    }
    DepthImage::new(width, height, depths).or_else(|e| format_err(e.to_string()))
}

pub fn write_pfm(w: &mut impl Write, img: &DepthImage) -> Result<(), ImageIoError> {
    write!(w, "Pf\n{} {}\n-1.0\n", img.width(), img.height())?;
    for row in (0..img.height()).rev() {
        for col in 0..img.width() {
            w.write_all(&img.at(col, row).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_raw(mut r: impl Read) -> Result<DepthImage, ImageIoError> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    let width = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    if width == 0 || height == 0 || width.saturating_mul(height) > 64 << 20 {
        return format_err(format!("unreasonable raw dimensions {width}x{height}"));
    }
    let mut payload = vec![0u8; width * height * 4];
    r.read_exact(&mut payload)?;
    let depths = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    DepthImage::new(width, height, depths).or_else(|e| format_err(e.to_string()))
}

pub fn write_raw(w: &mut impl Write, img: &DepthImage) -> Result<(), ImageIoError> {
    w.write_all(&(img.width() as u32).to_le_bytes())?;
    w.write_all(&(img.height() as u32).to_le_bytes())?;
    w.write_all(&[0u8; 8])?;
    for d in img.depths() {
        w.write_all(&d.to_le_bytes())?;
    }
    Ok(())
}
