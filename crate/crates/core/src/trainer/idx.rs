//! IDX files: a big-endian header (`0x0000 | type | rank`, then one u32
//! per dimension) followed by the raw data. Only unsigned-byte payloads
//! are read: rank 3 for images, rank 1 for labels.

use std::path::Path;

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` bytes, row-major per image.
    pub pixels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    let chunk = bytes
        .get(at..at + 4)
        .ok_or_else(|| Error::parse(at as u64, format!("truncated {what}: file ends at byte {}", bytes.len())))?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = be_u32(bytes, 0, "magic number")?;
    if magic != expected {
        return Err(Error::parse(0, format!("bad magic 0x{magic:08x}, expected 0x{expected:08x}")));
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], start: usize, len: usize, what: &str) -> Result<&'a [u8]> {
    let end = start
        .checked_add(len)
        .ok_or_else(|| Error::parse(start as u64, format!("{what} size overflows")))?;
    if bytes.len() < end {
        return Err(Error::parse(
            bytes.len() as u64,
            format!("truncated {what}: header promises {len} bytes, {} present", bytes.len() - start),
        ));
    }
    if bytes.len() > end {
        return Err(Error::parse(end as u64, format!("{} trailing bytes after {what}", bytes.len() - end)));
    }
    Ok(&bytes[start..end])
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4, "image count")? as usize;
    let rows = be_u32(bytes, 8, "row count")? as usize;
    let cols = be_u32(bytes, 12, "column count")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::parse(8, format!("image extents must be >= 1, got {rows} x {cols}")));
    }
    let len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::parse(4, "image payload size overflows"))?;
    let pixels = payload(bytes, 16, len, "image data")?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = be_u32(bytes, 4, "label count")? as usize;
    Ok(payload(bytes, 8, count, "label data")?.to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IDX_IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parse errors from a named file carry its path in the message.
fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages> {
    in_file(path, parse_idx_images(&read(path)?))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    in_file(path, parse_idx_labels(&read(path)?))
}
