//! IDX image/label files (big-endian headers, unsigned-byte payload).

use std::fs;
use std::path::Path;

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::models::Targets;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const IDX_CLASSES: usize = 10;

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(bytes.len(), "truncated header"))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected {
        return Err(format_err(
            0,
            format!("unexpected magic 0x{magic:08x}, expected 0x{expected:08x}"),
        ));
    }
    Ok(())
}

fn payload(bytes: &[u8], start: usize, len: usize) -> Result<&[u8]> {
    bytes.get(start..start + len).ok_or_else(|| {
        format_err(
            bytes.len(),
            format!("truncated payload: need {len} bytes from offset {start}"),
        )
    })
}

/// Loads an image file (`0x00000803`, `n × rows × cols` bytes) and a label
/// file (`0x00000801`, `n` bytes). Pixels are scaled to `[0, 1]`; `limit`
/// keeps the first records in file order.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    limit: Option<usize>,
) -> Result<Dataset> {
    let images = fs::read(images_path)?;
    let label_bytes = fs::read(labels_path)?;

    check_magic(&images, IDX_IMAGES_MAGIC)?;
    let n_images = read_u32(&images, 4)? as usize;
    let rows = read_u32(&images, 8)? as usize;
    let cols = read_u32(&images, 12)? as usize;
    check_magic(&label_bytes, IDX_LABELS_MAGIC)?;
    let n_labels = read_u32(&label_bytes, 4)? as usize;
    if n_images != n_labels {
        return Err(format_err(
            4,
            format!("{n_images} images but {n_labels} labels"),
        ));
    }
    let pixels_per = rows * cols;
    if pixels_per == 0 {
        return Err(format_err(8, "zero-sized images"));
    }

    let n = limit.map_or(n_images, |l| l.min(n_images));
    let pixels = payload(&images, 16, n_images * pixels_per)?;
    let raw_labels = payload(&label_bytes, 8, n_labels)?;

    let inputs: Vec<f64> = pixels[..n * pixels_per]
        .iter()
        .map(|&p| f64::from(p) / 255.0)
        .collect();
    let mut ys = Vec::with_capacity(n);
    for (i, &l) in raw_labels[..n].iter().enumerate() {
        if usize::from(l) >= IDX_CLASSES {
            return Err(format_err(8 + i, format!("label {l} outside 0..10")));
        }
        ys.push(usize::from(l));
    }
    Dataset::from_parts(
        inputs,
        pixels_per,
        Targets::Classes(ys),
        IDX_CLASSES,
        Provenance {
            generator: "idx".into(),
            seed: None,
            label_noise_rate: 0.0,
        },
    )
}

/// Writes an image/label IDX pair; `images` holds `labels.len()` images of
/// `rows × cols` bytes each.
pub fn write_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    images: &[u8],
    rows: usize,
    cols: usize,
    labels: &[u8],
) -> Result<()> {
    let n = labels.len();
    if images.len() != n * rows * cols {
        return Err(Error::Shape(format!(
            "{} pixel bytes for {n} images of {rows}x{cols}",
            images.len()
        )));
    }
    let mut img = Vec::with_capacity(16 + images.len());
    for word in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&word.to_be_bytes());
    }
    img.extend_from_slice(images);
    let mut lab = Vec::with_capacity(8 + n);
    for word in [IDX_LABELS_MAGIC, n as u32] {
        lab.extend_from_slice(&word.to_be_bytes());
    }
    lab.extend_from_slice(labels);
    fs::write(images_path, img)?;
    fs::write(labels_path, lab)?;
    Ok(())
}
