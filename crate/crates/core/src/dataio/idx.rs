//! The IDX container used by the MNIST distribution.
//!
//! Layout: a big-endian `u32` magic whose low byte is the rank and whose
//! third byte is the element type (`0x08` = unsigned byte), one big-endian
//! `u32` per dimension, then the payload in row-major order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageGrid;

use super::dataset::Dataset;
use super::read_file;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn format_err(context: &str, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        context: context.to_string(),
        offset: offset as u64,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, context: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(context, offset, "file ends inside the header"))
}

/// Dimensions and payload of a rank-`magic & 0xff` unsigned-byte array.
fn parse<'a>(bytes: &'a [u8], magic: u32, context: &str) -> Result<(Vec<usize>, &'a [u8])> {
    let found = read_u32(bytes, 0, context)?;
    if found != magic {
        return Err(format_err(
            context,
            0,
            format!("bad magic {found:#010x}, expected {magic:#010x}"),
        ));
    }
    let rank = (magic & 0xff) as usize;
    let dims = (0..rank)
        .map(|i| read_u32(bytes, 4 + 4 * i, context).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * rank;
    let len: usize = dims.iter().product();
    let payload = bytes.get(start..start + len).ok_or_else(|| {
        format_err(
            context,
            bytes.len(),
            format!(
                "truncated payload: need {len} bytes after the header, have {}",
                bytes.len() - start
            ),
        )
    })?;
    Ok((dims, payload))
}

/// Decodes an image file; bytes are scaled to `[0, 1]` by `/255`.
pub fn parse_idx_images(bytes: &[u8], context: &str) -> Result<Dataset> {
    let (dims, payload) = parse(bytes, IDX_IMAGES_MAGIC, context)?;
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    if n > 0 && (h == 0 || w == 0) {
        return Err(format_err(context, 8, "zero image size"));
    }
    let images = payload
        .chunks_exact(h * w)
        .take(n)
        .map(|px| ImageGrid::from_planar(h, w, 1, px.iter().map(|&b| b as f64 / 255.0).collect()))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(images, context)
}

pub fn parse_idx_labels(bytes: &[u8], context: &str) -> Result<Vec<u8>> {
    let (_, payload) = parse(bytes, IDX_LABELS_MAGIC, context)?;
    Ok(payload.to_vec())
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    parse_idx_images(&read_file(path)?, &path.display().to_string())
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    parse_idx_labels(&read_file(path)?, &path.display().to_string())
}

/// Encodes single-channel images; values are clamped and rounded to bytes.
pub fn encode_idx_images(images: &[ImageGrid]) -> Result<Vec<u8>> {
    let (h, w) = match images.first() {
        Some(img) => (img.height(), img.width()),
        None => (0, 0),
    };
    let mut out = Vec::with_capacity(16 + images.len() * h * w);
    out.extend(IDX_IMAGES_MAGIC.to_be_bytes());
    for d in [images.len(), h, w] {
        out.extend((d as u32).to_be_bytes());
    }
    for img in images {
        if img.shape() != (h, w, 1) {
            return Err(Error::InvalidInput(
                "IDX images must be single-channel and equally sized".into(),
            ));
        }
        out.extend(img.values().iter().map(|&v| to_byte(v)));
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend(IDX_LABELS_MAGIC.to_be_bytes());
    out.extend((labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn write_idx_images(path: impl AsRef<Path>, images: &[ImageGrid]) -> Result<()> {
    super::write_file(path.as_ref(), &encode_idx_images(images)?)
}

/// `[0, 1]` → `0..=255`, clamping first.
pub(crate) fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
