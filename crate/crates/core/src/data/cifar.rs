use std::fs;
use std::path::Path;

use crate::data::idx::{read_maybe_gz, to_bytes};
use crate::data::{Dataset, CLASSES};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// One label byte followed by a 3×32×32 channel-major image.
pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * 32 * 32;

/// Parses one batch file into `(labels, pixels)`.
pub fn parse_cifar10(bytes: &[u8], source: &str) -> Result<(Vec<u8>, Vec<u8>)> {
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD_BYTES != 0 {
        let whole = bytes.len() / CIFAR_RECORD_BYTES * CIFAR_RECORD_BYTES;
        return Err(Error::ingest(
            source,
            Some(whole as u64),
            format!("length {} is not a positive multiple of the {CIFAR_RECORD_BYTES}-byte record", bytes.len()),
        ));
    }
    let n = bytes.len() / CIFAR_RECORD_BYTES;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * (CIFAR_RECORD_BYTES - 1));
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        if rec[0] as usize >= CLASSES {
            return Err(Error::ingest(
                source,
                Some((i * CIFAR_RECORD_BYTES) as u64),
                format!("record {i}: label {} outside 0..{CLASSES}", rec[0]),
            ));
        }
        labels.push(rec[0]);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok((labels, pixels))
}

/// Concatenates the given batch files into one `count × 3 × 32 × 32` dataset.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    if batch_paths.is_empty() {
        return Err(Error::ingest("cifar10", None, "no batch files given"));
    }
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for p in batch_paths {
        let p = p.as_ref();
        let (l, px) = parse_cifar10(&read_maybe_gz(p)?, &p.display().to_string())?;
        labels.extend(l.into_iter().map(usize::from));
        data.extend(px.iter().map(|&v| v as f32 / 255.0));
    }
    Dataset::new(Tensor::new(vec![labels.len(), 3, 32, 32], data)?, labels, "cifar10")
}

pub fn cifar10_bytes(dataset: &Dataset) -> Result<Vec<u8>> {
    if dataset.image_shape() != [3, 32, 32] {
        return Err(Error::Shape(format!("CIFAR-10 records are 3x32x32, dataset has {:?}", dataset.image_shape())));
    }
    let mut out = Vec::with_capacity(dataset.len() * CIFAR_RECORD_BYTES);
    for i in 0..dataset.len() {
        out.push(dataset.labels()[i] as u8);
        out.extend(to_bytes(dataset.image(i)));
    }
    Ok(out)
}

pub fn write_cifar10(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, cifar10_bytes(dataset)?)?;
    Ok(())
}
