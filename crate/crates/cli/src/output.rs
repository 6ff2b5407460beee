//! Atomic file output and image encoding by extension.

use std::io::Write;
use std::path::Path;

use bvg_core::io::{encode_bvgf, encode_pgm, Intensity, PgmDepth, PgmMapping};
use bvg_core::Image;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::io(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn is_bvgf(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("bvgf"))
}

/// How an image was stored.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Stored {
    pub format: &'static str,
    /// `value = offset + scale · sample / maxval`; absent for exact formats.
    pub mapping: Option<PgmMapping>,
}

/// Writes `.bvgf` exactly and anything else as PGM. Images inside `[0, 1]`
/// are stored as is; others are stretched and the map is recorded in the
/// header.
pub fn write_image(path: &Path, img: &Image, depth: PgmDepth) -> CliResult<Stored> {
    if is_bvgf(path) {
        write_atomic(path, &encode_bvgf(img))?;
        return Ok(Stored { format: "bvgf", mapping: None });
    }
    let intensity = if img.min() >= 0.0 && img.max() <= 1.0 { Intensity::Unit } else { Intensity::Stretch };
    write_signed_pgm(path, img, depth, intensity)
}

/// PGM with an explicit intensity map.
pub fn write_signed_pgm(path: &Path, img: &Image, depth: PgmDepth, intensity: Intensity) -> CliResult<Stored> {
    let (bytes, mapping) = encode_pgm(img, depth, intensity);
    write_atomic(path, &bytes)?;
    Ok(Stored { format: "pgm", mapping: Some(mapping) })
}
