//! Binary PGM (P5) and PPM (P6) with 8-bit samples.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{BinaryMask, Image};

#[derive(Debug, Error)]
pub enum NetpbmError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad netpbm data: {0}")]
    BadFormat(String),
}

fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Encodes as P5 for one channel, P6 for three.
pub fn encode(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    out
}

pub fn encode_mask(m: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", m.width(), m.height()).into_bytes();
    out.extend(m.data().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, NetpbmError> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| NetpbmError::BadFormat(format!("missing or invalid {what}")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Image, NetpbmError> {
    if bytes.len() < 2 {
        return Err(NetpbmError::BadFormat("truncated header".into()));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(NetpbmError::BadFormat(format!(
                "unsupported magic {:?}",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(NetpbmError::BadFormat(format!("maxval {maxval} is not 255")));
    }
    if width == 0 || height == 0 {
        return Err(NetpbmError::BadFormat("zero dimension".into()));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(NetpbmError::BadFormat("missing raster separator".into()));
    }
    let raster = &bytes[cur.pos + 1..];
    let expected = width * height * channels;
    if raster.len() < expected {
        return Err(NetpbmError::BadFormat(format!(
            "raster has {} bytes, expected {expected}",
            raster.len()
        )));
    }
    let data = raster[..expected].iter().map(|&b| b as f64 / 255.0).collect();
    Image::new(height, width, channels, data).map_err(|e| NetpbmError::BadFormat(e.to_string()))
}

pub fn decode_mask(bytes: &[u8]) -> Result<BinaryMask, NetpbmError> {
    let img = decode(bytes)?;
    if img.channels() != 1 {
        return Err(NetpbmError::BadFormat("mask must be single channel".into()));
    }
    let data = img.data().iter().map(|&v| v >= 0.5).collect();
    BinaryMask::new(img.height(), img.width(), data)
        .map_err(|e| NetpbmError::BadFormat(e.to_string()))
}

pub fn save(img: &Image, path: impl AsRef<Path>) -> Result<(), NetpbmError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(img))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Image, NetpbmError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn save_mask(m: &BinaryMask, path: impl AsRef<Path>) -> Result<(), NetpbmError> {
    std::fs::write(path, encode_mask(m))?;
    Ok(())
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask, NetpbmError> {
    decode_mask(&std::fs::read(path)?)
}
