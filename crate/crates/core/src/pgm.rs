//! Binary PGM (P5, maxval 255) reading and writing for heatmaps and masks.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::seg::LabelMask;
use crate::tensor::{Map2, Tensor3};

/// Grey image as raw bytes, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Pgm {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format("truncated PGM header".into()));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("").to_string());
        }
        if fields[0] != "P5" {
            return Err(Error::Format(format!("not a binary PGM (magic {:?})", fields[0])));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM field {s:?}")));
        let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let n = width * height;
        if width == 0 || height == 0 || bytes.len() < pos + n {
            return Err(Error::Corruption(format!("PGM raster needs {n} bytes")));
        }
        Ok(Self { width, height, pixels: bytes[pos..pos + n].to_vec() })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }

    /// `round(255 * v)` per pixel for a map in `[0, 1]`.
    pub fn from_unit_map(m: &Map2) -> Self {
        let pixels = m.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        Self { width: m.width(), height: m.height(), pixels }
    }

    /// Pixel values divided by 255 as a one-channel tensor.
    pub fn to_unit_tensor(&self) -> Tensor3 {
        let data = self.pixels.iter().map(|&p| p as f32 / 255.0).collect();
        Tensor3::new(1, self.height, self.width, data).expect("finite pixels")
    }

    pub fn from_mask(mask: &LabelMask) -> Self {
        Self { width: mask.width(), height: mask.height(), pixels: mask.labels().to_vec() }
    }

    pub fn to_mask(&self) -> Result<LabelMask> {
        LabelMask::new(self.height, self.width, self.pixels.clone())
    }
}
