//! Shared codec for the `EMB1` store and `LAT1` index files:
//! 4-byte magic, little-endian `u32` dim, `u64` count, then `count`
//! records of (`u64` id, `dim` × `f32`).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) const HEADER_LEN: usize = 4 + 4 + 8;

pub(crate) fn write_records<W: Write>(mut w: W, magic: &[u8; 4], dim: usize, ids: &[u64], data: &[f32]) -> Result<()> {
    debug_assert_eq!(ids.len() * dim, data.len());
    let dim32 = u32::try_from(dim).map_err(|_| Error::Argument(format!("dimension {dim} exceeds u32")))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + ids.len() * (8 + 4 * dim));
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&dim32.to_le_bytes());
    buf.extend_from_slice(&(ids.len() as u64).to_le_bytes());
    for (i, id) in ids.iter().enumerate() {
        buf.extend_from_slice(&id.to_le_bytes());
        for v in &data[i * dim..(i + 1) * dim] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub(crate) struct Records {
    pub dim: usize,
    pub ids: Vec<u64>,
    pub data: Vec<f32>,
}

pub(crate) fn read_records(bytes: &[u8], magic: &[u8; 4]) -> Result<Records> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(bytes.len() as u64, "file shorter than header"));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(0, format!("bad magic, expected {:?}", String::from_utf8_lossy(magic))));
    }
    let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    if dim == 0 {
        return Err(Error::format(4, "dimension must be positive"));
    }
    let record = 8 + 4 * dim as u64;
    let expected = count
        .checked_mul(record)
        .and_then(|n| n.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| Error::format(8, "record count overflows"))?;
    if bytes.len() as u64 != expected {
        let offset = (bytes.len() as u64).min(expected);
        return Err(Error::format(
            offset,
            format!("expected {expected} bytes for {count} records of dim {dim}, found {}", bytes.len()),
        ));
    }
    let count = count as usize;
    let mut ids = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    let mut off = HEADER_LEN;
    for _ in 0..count {
        ids.push(u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
        off += 8;
        for chunk in bytes[off..off + 4 * dim].chunks_exact(4) {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::format((off + data.len() % dim * 4) as u64, "non-finite value"));
            }
            data.push(v);
        }
        off += 4 * dim;
    }
    Ok(Records { dim, ids, data })
}

/// Writes to a sibling temporary file and renames it into place, so a
/// reader never observes a half-written file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(path, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_records(&mut buf, b"EMB1", 2, &[7], &[1.0, -2.0]).unwrap();
        assert_eq!(&buf[..4], b"EMB1");
        assert_eq!(&buf[4..8], &2u32.to_le_bytes());
        assert_eq!(&buf[8..16], &1u64.to_le_bytes());
        assert_eq!(&buf[16..24], &7u64.to_le_bytes());
        assert_eq!(&buf[24..28], &1.0f32.to_le_bytes());
        assert_eq!(buf.len(), 32);
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let mut buf = Vec::new();
        write_records(&mut buf, b"EMB1", 3, &[1, 2], &[0.0; 6]).unwrap();
        assert!(matches!(read_records(&buf, b"LAT1"), Err(Error::Format { offset: 0, .. })));
        let cut = &buf[..buf.len() - 1];
        assert!(matches!(read_records(cut, b"EMB1"), Err(Error::Format { .. })));
        assert!(read_records(&buf[..10], b"EMB1").is_err());
    }
}
