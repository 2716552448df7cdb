//! 8-bit PNG emission and ingestion.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::ImageGrid;

use super::dataset::Dataset;
use super::idx::to_byte;
use super::{read_file, write_file};

/// Interleaved `(y, x, c)` bytes after clamping to `[0, 1]`.
pub fn to_bytes(img: &ImageGrid) -> Vec<u8> {
    let (h, w, c) = img.shape();
    let mut out = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.push(to_byte(img.get(y, x, ch)));
            }
        }
    }
    out
}

pub fn encode_png(img: &ImageGrid) -> Result<Vec<u8>> {
    let color = match img.channels() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(Error::InvalidInput(format!("cannot encode {c} channels as PNG"))),
    };
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, img.width() as u32, img.height() as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&to_bytes(img))?;
    }
    Ok(buf)
}

pub fn decode_png(bytes: &[u8]) -> Result<ImageGrid> {
    let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
    dec.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = dec.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::InvalidInput("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf)?;
    let (h, w) = (info.height as usize, info.width as usize);
    let (stride, channels) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        other => return Err(Error::InvalidInput(format!("unsupported PNG color type {other:?}"))),
    };
    let row = info.line_size;
    Ok(ImageGrid::from_fn(h, w, channels, |y, x, c| {
        buf[y * row + x * stride + c] as f64 / 255.0
    }))
}

pub fn save_png(path: impl AsRef<Path>, img: &ImageGrid) -> Result<()> {
    write_file(path.as_ref(), &encode_png(img)?)
}

pub fn load_png(path: impl AsRef<Path>) -> Result<ImageGrid> {
    decode_png(&read_file(path.as_ref())?)
}

/// Tiles `images` row-major, `columns` per row, without gaps. Unused tiles
/// of the last row stay black.
pub fn montage(images: &[ImageGrid], columns: usize) -> Result<ImageGrid> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("montage of zero images".into()))?;
    if columns == 0 {
        return Err(Error::InvalidArgument("montage needs at least one column".into()));
    }
    let (h, w, c) = first.shape();
    if images.iter().any(|i| i.shape() != (h, w, c)) {
        return Err(Error::InvalidInput("montage tiles differ in shape".into()));
    }
    let cols = columns.min(images.len());
    let rows = images.len().div_ceil(cols);
    let mut out = ImageGrid::zeros(rows * h, cols * w, c);
    for (i, img) in images.iter().enumerate() {
        let (oy, ox) = ((i / cols) * h, (i % cols) * w);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out.set(oy + y, ox + x, ch, img.get(y, x, ch));
                }
            }
        }
    }
    Ok(out)
}

pub fn save_montage(path: impl AsRef<Path>, images: &[ImageGrid], columns: usize) -> Result<()> {
    save_png(path, &montage(images, columns)?)
}

/// Loads every `*.png` in `dir` in lexicographic file-name order.
pub fn load_image_dir(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    let mut images = Vec::with_capacity(paths.len());
    for p in &paths {
        images.push(load_png(p)?);
    }
    if let Some(first) = images.first() {
        let shape = first.shape();
        let offenders: Vec<String> = paths
            .iter()
            .zip(&images)
            .filter(|(_, img)| img.shape() != shape)
            .map(|(p, img)| format!("{} is {:?}", p.display(), img.shape()))
            .collect();
        if !offenders.is_empty() {
            return Err(Error::MixedSizes(format!(
                "expected {:?} (from {}); {}",
                shape,
                paths[0].display(),
                offenders.join(", ")
            )));
        }
    }
    Dataset::new(images, dir.display().to_string())
}
