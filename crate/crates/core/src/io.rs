//! Binary PGM (8 and 16 bit) and the raw `BVGF` float format.
//!
//! PGM samples are mapped to `[0, 1]` on reading. Grid metadata and the
//! affine map used when writing are kept in header comments of the form
//!
//! ```text
//! # bvg spacing=0.0078125 origin=-0.99609375,-0.99609375
//! # bvg offset=-0.25 scale=1.5
//! ```
//!
//! so that a stretched signed component can be mapped back by the reader.
//!
//! `BVGF` stores the magic bytes, `u32` width and height, `f64` spacing and
//! origin, then the samples as little-endian `f64` in row-major order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Image};

pub const BVGF_MAGIC: &[u8; 4] = b"BVGF";
const BVGF_HEADER_LEN: usize = 4 + 4 + 4 + 8 * 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PgmDepth {
    #[default]
    Eight,
    Sixteen,
}

impl PgmDepth {
    pub fn maxval(self) -> u16 {
        match self {
            PgmDepth::Eight => 255,
            PgmDepth::Sixteen => 65535,
        }
    }
}

/// How image values become PGM samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intensity {
    /// `[0, 1]` maps to the full sample range; values outside are clamped.
    #[default]
    Unit,
    /// `[min, max]` of the image maps to the full sample range.
    Stretch,
}

/// `value = offset + scale · t` with `t ∈ [0, 1]` the normalized sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PgmMapping {
    pub offset: f64,
    pub scale: f64,
}

impl PgmMapping {
    pub const IDENTITY: PgmMapping = PgmMapping { offset: 0.0, scale: 1.0 };

    /// Maps a normalized image back to the original values.
    pub fn apply(&self, normalized: &Image) -> Image {
        normalized.map(|t| self.offset + self.scale * t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PgmRead {
    /// Samples divided by the maximum value.
    pub image: Image,
    pub maxval: u16,
    /// The map recorded by the writer, if any.
    pub mapping: Option<PgmMapping>,
}

impl PgmRead {
    /// The image with the recorded map applied (unchanged without one).
    pub fn restored(&self) -> Image {
        self.mapping.map_or_else(|| self.image.clone(), |m| m.apply(&self.image))
    }
}

pub fn encode_pgm(img: &Image, depth: PgmDepth, intensity: Intensity) -> (Vec<u8>, PgmMapping) {
    let mapping = match intensity {
        Intensity::Unit => PgmMapping::IDENTITY,
        Intensity::Stretch => {
            let (lo, hi) = (img.min(), img.max());
            PgmMapping { offset: lo, scale: if hi > lo { hi - lo } else { 1.0 } }
        }
    };
    let g = img.grid();
    let maxval = depth.maxval();
    let mut out = format!(
        "P5\n# bvg spacing={} origin={},{}\n# bvg offset={} scale={}\n{} {}\n{}\n",
        g.spacing, g.origin[0], g.origin[1], mapping.offset, mapping.scale, g.width, g.height, maxval
    )
    .into_bytes();
    let m = maxval as f64;
    for &v in img.data() {
        let t = ((v - mapping.offset) / mapping.scale).clamp(0.0, 1.0);
        let code = (t * m).round() as u16;
        match depth {
            PgmDepth::Eight => out.push(code as u8),
            PgmDepth::Sixteen => out.extend_from_slice(&code.to_be_bytes()),
        }
    }
    (out, mapping)
}

/// Header scanner: whitespace-separated tokens with `#` comments.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    spacing: Option<f64>,
    origin: Option<[f64; 2]>,
    offset: Option<f64>,
    scale: Option<f64>,
}

impl<'a> Header<'a> {
    fn token(&mut self) -> Result<&'a str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.bytes.get(self.pos) == Some(&b'#') {
                let end = self.bytes[self.pos..].iter().position(|&b| b == b'\n').map_or(self.bytes.len(), |i| self.pos + i);
                let line = String::from_utf8_lossy(&self.bytes[self.pos + 1..end]).into_owned();
                self.comment(&line);
                self.pos = end;
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| Error::Format("non-ASCII PGM header".into()))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let t = self.token()?;
        t.parse().map_err(|_| Error::Format(format!("bad PGM {what}: {t:?}")))
    }

    fn comment(&mut self, line: &str) {
        let mut words = line.split_whitespace();
        if words.next() != Some("bvg") {
            return;
        }
        for word in words {
            let Some((key, value)) = word.split_once('=') else { continue };
            match key {
                "spacing" => self.spacing = value.parse().ok(),
                "offset" => self.offset = value.parse().ok(),
                "scale" => self.scale = value.parse().ok(),
                "origin" => {
                    self.origin = value.split_once(',').and_then(|(x, y)| Some([x.parse().ok()?, y.parse().ok()?]));
                }
                _ => {}
            }
        }
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<PgmRead> {
    let mut h = Header { bytes, pos: 0, spacing: None, origin: None, offset: None, scale: None };
    let magic = h.token()?;
    let binary = match magic {
        "P5" => true,
        "P2" => false,
        other => return Err(Error::Format(format!("not a PGM file (magic {other:?})"))),
    };
    let width: usize = h.number("width")?;
    let height: usize = h.number("height")?;
    let maxval: u32 = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("empty PGM image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("PGM maxval {maxval} outside 1..=65535")));
    }
    let n = width.checked_mul(height).ok_or_else(|| Error::Format("PGM dimensions overflow".into()))?;
    let m = maxval as f64;
    let mut data = Vec::with_capacity(n);
    if binary {
        // Exactly one whitespace byte separates the header from the samples.
        let start = h.pos + 1;
        let wide = maxval > 255;
        let need = n * if wide { 2 } else { 1 };
        let body = bytes.get(start..start + need).ok_or_else(|| {
            Error::Format(format!("PGM data truncated: expected {need} bytes, found {}", bytes.len().saturating_sub(start)))
        })?;
        if wide {
            data.extend(body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / m));
        } else {
            data.extend(body.iter().map(|&b| b as f64 / m));
        }
    } else {
        for _ in 0..n {
            let v: u32 = h.number("sample")?;
            data.push(v as f64 / m);
        }
    }
    if data.iter().any(|&t| t > 1.0) {
        return Err(Error::Format(format!("PGM sample exceeds maxval {maxval}")));
    }
    let grid = Grid::new(width, height, h.spacing.unwrap_or(1.0), h.origin.unwrap_or([0.0, 0.0]))
        .map_err(|e| Error::Format(format!("bad grid metadata: {e}")))?;
    let mapping = match (h.offset, h.scale) {
        (Some(offset), Some(scale)) if offset.is_finite() && scale.is_finite() => Some(PgmMapping { offset, scale }),
        _ => None,
    };
    Ok(PgmRead { image: Image::new(grid, data)?, maxval: maxval as u16, mapping })
}

pub fn encode_bvgf(img: &Image) -> Vec<u8> {
    let g = img.grid();
    let mut out = Vec::with_capacity(BVGF_HEADER_LEN + 8 * g.len());
    out.extend_from_slice(BVGF_MAGIC);
    out.extend_from_slice(&(g.width as u32).to_le_bytes());
    out.extend_from_slice(&(g.height as u32).to_le_bytes());
    for v in [g.spacing, g.origin[0], g.origin[1]] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_bvgf(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < BVGF_HEADER_LEN || &bytes[..4] != BVGF_MAGIC {
        return Err(Error::Format("not a BVGF file".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let (width, height) = (u32_at(4), u32_at(8));
    let grid = Grid::new(width, height, f64_at(12), [f64_at(20), f64_at(28)])
        .map_err(|e| Error::Format(format!("bad BVGF grid: {e}")))?;
    let body = &bytes[BVGF_HEADER_LEN..];
    if body.len() != 8 * grid.len() {
        return Err(Error::Format(format!("BVGF body has {} bytes, expected {}", body.len(), 8 * grid.len())));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Image::new(grid, data).map_err(|e| Error::Format(format!("BVGF samples: {e}")))
}

/// Reads `.bvgf` files exactly and anything else as PGM with the
/// recorded map applied.
pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(BVGF_MAGIC) {
        decode_bvgf(&bytes)
    } else {
        Ok(decode_pgm(&bytes)?.restored())
    }
}
