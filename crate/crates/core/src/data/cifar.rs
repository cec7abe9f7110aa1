//! CIFAR-10 binary version: each record is one label byte followed by 3072
//! pixel bytes (1024 red, 1024 green, 1024 blue, row-major).

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::LabeledImage;

pub const RECORD_LEN: usize = 1 + 3072;
pub const RECORDS_PER_FILE: usize = 10_000;
pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";
pub const CLASSES: usize = 10;

/// Parses one `.bin` file; `expected` pins the record count when given.
pub fn parse_file(path: &Path, bytes: &[u8], expected: Option<usize>) -> Result<Vec<LabeledImage>> {
    if !bytes.len().is_multiple_of(RECORD_LEN) {
        let complete = bytes.len() / RECORD_LEN;
        return Err(Error::Cifar {
            file: path.to_path_buf(),
            offset: (complete * RECORD_LEN) as u64,
            reason: format!("truncated record {complete}"),
        });
    }
    let count = bytes.len() / RECORD_LEN;
    if let Some(expected) = expected {
        if count != expected {
            return Err(Error::Cifar {
                file: path.to_path_buf(),
                offset: bytes.len() as u64,
                reason: format!("found {count} records, expected {expected}"),
            });
        }
    }
    bytes
        .chunks_exact(RECORD_LEN)
        .enumerate()
        .map(|(i, rec)| {
            let label = rec[0] as usize;
            if label >= CLASSES {
                return Err(Error::Cifar {
                    file: path.to_path_buf(),
                    offset: (i * RECORD_LEN) as u64,
                    reason: format!("label byte {label} > 9"),
                });
            }
            Ok(LabeledImage::from_bytes(&rec[1..], label as u8))
        })
        .collect()
}

fn read(dir: &Path, name: &str) -> Result<(PathBuf, Vec<u8>)> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::Missing(path));
    }
    let bytes = std::fs::read(&path)?;
    Ok((path, bytes))
}

/// Loads the 50,000 training and 10,000 test images.
pub fn load_cifar10(dir: impl AsRef<Path>) -> Result<(Vec<LabeledImage>, Vec<LabeledImage>)> {
    let dir = dir.as_ref();
    let mut train = Vec::with_capacity(TRAIN_FILES.len() * RECORDS_PER_FILE);
    for name in TRAIN_FILES {
        let (path, bytes) = read(dir, name)?;
        train.extend(parse_file(&path, &bytes, Some(RECORDS_PER_FILE))?);
    }
    let (path, bytes) = read(dir, TEST_FILE)?;
    let test = parse_file(&path, &bytes, Some(RECORDS_PER_FILE))?;
    Ok((train, test))
}

/// Reads at most `limit` records from the front of each split, touching
/// only the files needed.
pub fn load_cifar10_subset(
    dir: impl AsRef<Path>,
    train_limit: usize,
    test_limit: usize,
) -> Result<(Vec<LabeledImage>, Vec<LabeledImage>)> {
    let dir = dir.as_ref();
    let mut train = Vec::new();
    for name in TRAIN_FILES {
        if train.len() >= train_limit {
            break;
        }
        let (path, bytes) = read(dir, name)?;
        train.extend(parse_file(&path, &bytes, Some(RECORDS_PER_FILE))?);
    }
    train.truncate(train_limit);
    let (path, bytes) = read(dir, TEST_FILE)?;
    let mut test = parse_file(&path, &bytes, Some(RECORDS_PER_FILE))?;
    test.truncate(test_limit);
    Ok((train, test))
}

/// Encodes images back into the binary record layout.
pub fn encode_records(images: &[LabeledImage]) -> Vec<u8> {
    let mut out = Vec::with_capacity(images.len() * RECORD_LEN);
    for img in images {
        out.push(img.class_label);
        out.extend(img.pixels.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    out
}
