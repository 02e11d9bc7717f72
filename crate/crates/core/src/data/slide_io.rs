//! Slide files.
//!
//! ```text
//! "PTWS"  u16 version = 1  u32 N  u32 D  u8 label
//! N rows of (3 + D) f32: px, py, 1, features
//! ```
//!
//! All little-endian. The slide id is not stored; it comes from the
//! manifest line that points at the file.

use std::path::Path;

use super::Slide;
use crate::binfmt::{FormatError, Reader};
use crate::geometry::Label;

pub const MAGIC: &[u8; 4] = b"PTWS";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 1;

pub fn encode(slide: &Slide) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * slide.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(slide.len() as u32).to_le_bytes());
    out.extend_from_slice(&(slide.dim() as u32).to_le_bytes());
    out.push(slide.label().index() as u8);
    for v in slide.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], id: &str) -> Result<Slide, FormatError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(FormatError { offset: 0, reason: "bad magic, expected PTWS".into() });
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(FormatError { offset: 4, reason: format!("unsupported version {version}") });
    }
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    let at = r.offset();
    let label = Label::from_u8(r.u8()?).ok_or_else(|| FormatError { offset: at, reason: "label must be 0 or 1".into() })?;
    if n == 0 || d == 0 {
        return Err(FormatError { offset: 6, reason: format!("empty slide: N = {n}, D = {d}") });
    }
    let count = n
        .checked_mul(3 + d)
        .ok_or_else(|| FormatError { offset: 6, reason: "N * (3 + D) overflows".into() })?;
    let raw = r.take(count.checked_mul(4).ok_or_else(|| r.error("size overflows"))?)?;
    let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    r.expect_end()?;
    Slide::new(id, label, d, values).map_err(|e| FormatError { offset: HEADER_LEN, reason: e.to_string() })
}

pub fn save(slide: &Slide, path: &Path) -> Result<(), crate::Error> {
    std::fs::write(path, encode(slide)).map_err(|e| crate::Error::io(path, e))
}

pub fn load(path: &Path, id: &str) -> Result<Slide, crate::Error> {
    let bytes = std::fs::read(path).map_err(|e| crate::Error::io(path, e))?;
    decode(&bytes, id).map_err(|source| crate::Error::Format { path: Some(path.to_path_buf()), source })
}

/// Human-readable dump: a header line, then one line per point with every
/// value printed as its shortest round-trip decimal.
pub fn dump_text(slide: &Slide) -> String {
    let mut out = format!("{}\t{}\t{}\t{}\n", slide.id(), slide.label().index(), slide.len(), slide.dim());
    for i in 0..slide.len() {
        let row: Vec<String> = slide.row(i).iter().map(f32::to_string).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
