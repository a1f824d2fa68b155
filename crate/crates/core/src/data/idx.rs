use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::data::{Dataset, CLASSES};
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Reads a file, transparently inflating it when it starts with the gzip magic.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::ingest(path.display().to_string(), None, format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, source: &str, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| {
            Error::ingest(source, Some(offset as u64), format!("truncated header: missing {what} ({} bytes total)", bytes.len()))
        })
}

fn check_magic(bytes: &[u8], expected: u32, source: &str) -> Result<()> {
    let found = be_u32(bytes, 0, source, "magic")?;
    if found != expected {
        return Err(Error::ingest(source, Some(0), format!("bad magic: expected 0x{expected:08x}, found 0x{found:08x}")));
    }
    Ok(())
}

fn check_payload(bytes: &[u8], header: usize, payload: usize, source: &str) -> Result<()> {
    let expected = header + payload;
    match bytes.len().cmp(&expected) {
        std::cmp::Ordering::Equal => Ok(()),
        std::cmp::Ordering::Less => Err(Error::ingest(
            source,
            Some(bytes.len() as u64),
            format!("truncated payload: header promises {expected} bytes, file has {}", bytes.len()),
        )),
        std::cmp::Ordering::Greater => Err(Error::ingest(
            source,
            Some(expected as u64),
            format!("{} trailing bytes after the declared payload", bytes.len() - expected),
        )),
    }
}

/// Parses an image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], source: &str) -> Result<(usize, usize, usize, Vec<u8>)> {
    check_magic(bytes, IDX_IMAGE_MAGIC, source)?;
    let count = be_u32(bytes, 4, source, "image count")? as usize;
    let rows = be_u32(bytes, 8, source, "row count")? as usize;
    let cols = be_u32(bytes, 12, source, "column count")? as usize;
    if count == 0 || rows == 0 || cols == 0 {
        return Err(Error::ingest(source, Some(4), format!("degenerate dimensions {count}x{rows}x{cols}")));
    }
    let payload = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::ingest(source, Some(4), "dimensions overflow"))?;
    check_payload(bytes, 16, payload, source)?;
    Ok((count, rows, cols, bytes[16..].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], source: &str) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABEL_MAGIC, source)?;
    let count = be_u32(bytes, 4, source, "label count")? as usize;
    check_payload(bytes, 8, count, source)?;
    let labels = &bytes[8..];
    if let Some(i) = labels.iter().position(|&l| l as usize >= CLASSES) {
        return Err(Error::ingest(source, Some(8 + i as u64), format!("label {} outside 0..{CLASSES}", labels[i])));
    }
    Ok(labels.to_vec())
}

/// Loads an image/label IDX pair (plain or gzipped) as a `count × 1 × H × W` dataset.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_name = images_path.display().to_string();
    let lbl_name = labels_path.display().to_string();
    let (count, rows, cols, pixels) = parse_idx_images(&read_maybe_gz(images_path)?, &img_name)?;
    let labels = parse_idx_labels(&read_maybe_gz(labels_path)?, &lbl_name)?;
    if labels.len() != count {
        return Err(Error::ingest(
            lbl_name,
            Some(4),
            format!("count mismatch: {count} images in {img_name} but {} labels", labels.len()),
        ));
    }
    let data = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    let name = images_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or(img_name);
    Dataset::new(Tensor::new(vec![count, 1, rows, cols], data)?, labels.into_iter().map(usize::from).collect(), name)
}

pub fn idx_image_bytes(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), count * rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGE_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn idx_label_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub(crate) fn to_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(fs::File::create(path)?, Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?;
    } else {
        fs::write(path, bytes)?;
    }
    Ok(())
}

/// Writes a single-channel dataset as an IDX pair; `.gz` paths are compressed.
pub fn write_idx(dataset: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let [c, h, w] = dataset.image_shape();
    if c != 1 {
        return Err(Error::Shape(format!("IDX images are single-channel, dataset has {c} channels")));
    }
    write_bytes(images_path, &idx_image_bytes(dataset.len(), h, w, &to_bytes(dataset.images().data())))?;
    let labels: Vec<u8> = dataset.labels().iter().map(|&l| l as u8).collect();
    write_bytes(labels_path, &idx_label_bytes(&labels))
}
