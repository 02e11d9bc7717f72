//! Parameter checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "PTCK"  u16 version = 1  u32 entry count
//! per entry, in path order:
//!   u16 path length, path bytes (UTF-8)
//!   u8 group (0 = backbone, 1 = aux)
//!   u8 rank, rank × u32 extents
//!   numel × f64 values
//! ```
//!
//! The group byte is the manifest that tells a federation which paths are
//! synchronized; [`manifest`] renders it as text.

use super::{ParamGroup, ParamStore};
use crate::binfmt::{FormatError, Reader};
use crate::engine::Tensor;

pub const MAGIC: &[u8; 4] = b"PTCK";
pub const VERSION: u16 = 1;

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, p) in store.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(match p.group {
            ParamGroup::Backbone => 0,
            ParamGroup::Aux => 1,
        });
        out.push(p.value.shape().len() as u8);
        for &e in p.value.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore, FormatError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(FormatError { offset: 0, reason: "bad magic, expected PTCK".into() });
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(FormatError { offset: 4, reason: format!("unsupported version {version}") });
    }
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u16()? as usize;
        let at = r.offset();
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| FormatError { offset: at, reason: "path is not UTF-8".into() })?
            .to_string();
        let group = match r.u8()? {
            0 => ParamGroup::Backbone,
            1 => ParamGroup::Aux,
            g => return Err(r.error(format!("unknown group {g}"))),
        };
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|e| e as usize)).collect::<Result<Vec<_>, _>>()?;
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let value = Tensor::new(shape, data).map_err(|e| r.error(e.to_string()))?;
        store.insert(name, group, value);
    }
    r.expect_end()?;
    Ok(store)
}

/// `path<TAB>backbone|aux` per line.
pub fn manifest(store: &ParamStore) -> String {
    store.iter().map(|(name, p)| format!("{name}\t{}\n", p.group.as_str())).collect()
}

pub fn save(store: &ParamStore, path: &std::path::Path) -> std::io::Result<()> {
    std::fs::write(path, encode(store))
}

pub fn load(path: &std::path::Path) -> Result<ParamStore, crate::Error> {
    let bytes = std::fs::read(path).map_err(|e| crate::Error::io(path, e))?;
    decode(&bytes).map_err(|source| crate::Error::Format { path: Some(path.to_path_buf()), source })
}
