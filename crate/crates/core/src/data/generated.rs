//! Externally rendered texturized / stylized image sets.
//!
//! A set is a directory of 32×32 RGB PNGs named `<split>_<index>_<class>.png`
//! plus a `manifest.json`:
//!
//! ```json
//! { "version": 1, "mode": "texturize", "seed": 0,
//!   "asset_checksums": { "encoder": "…" },
//!   "files": [ { "name": "train_0_6.png", "sha256": "…" } ] }
//! ```
//!
//! Every listed file is hashed and checked on load.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{LabeledImage, Split, SIDE};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Absent in older manifests; treated as 1.
    #[serde(default = "default_version")]
    pub version: u32,
    pub mode: String,
    pub seed: u64,
    #[serde(default)]
    pub asset_checksums: BTreeMap<String, String>,
    #[serde(default)]
    pub pipeline: BTreeMap<String, String>,
    pub files: Vec<ManifestEntry>,
}

fn default_version() -> u32 {
    1
}

/// `(split, index, class)` from a file name.
pub fn parse_name(name: &str) -> Option<(Split, usize, u8)> {
    let stem = name.strip_suffix(".png")?;
    let mut parts = stem.split('_');
    let split = match parts.next()? {
        "train" => Split::Train,
        "test" => Split::Test,
        _ => return None,
    };
    let index = parts.next()?.parse().ok()?;
    let class: u8 = parts.next()?.parse().ok()?;
    if parts.next().is_some() || class > 9 {
        return None;
    }
    Some((split, index, class))
}

pub fn file_name(split: Split, index: usize, class: u8) -> String {
    format!("{}_{index}_{class}.png", split.as_str())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct GeneratedSet {
    dir: PathBuf,
    manifest: Manifest,
}

impl GeneratedSet {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join(MANIFEST);
        if !path.is_file() {
            return Err(Error::Missing(path));
        }
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(&path)?)?;
        if manifest.version != 1 {
            return Err(Error::Decode {
                what: "manifest",
                reason: format!("unsupported version {}", manifest.version),
            });
        }
        Ok(Self { dir, manifest })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Loads and verifies every image of `split`, ordered by index.
    pub fn load_split(&self, split: Split) -> Result<Vec<LabeledImage>> {
        let mut entries: Vec<(usize, u8, &ManifestEntry)> = self
            .manifest
            .files
            .iter()
            .map(|e| {
                parse_name(&e.name)
                    .map(|(s, i, c)| (s, i, c, e))
                    .ok_or_else(|| Error::Integrity {
                        file: e.name.clone(),
                        reason: "name is not <split>_<index>_<class>.png".into(),
                    })
            })
            .filter_map(|r| match r {
                Ok((s, i, c, e)) if s == split => Some(Ok((i, c, e))),
                Ok(_) => None,
                Err(e) => Some(Err(e)),
            })
            .collect::<Result<_>>()?;
        entries.sort_by_key(|(i, _, _)| *i);
        entries
            .into_iter()
            .map(|(_, class, entry)| self.load_entry(entry, class))
            .collect()
    }

    fn load_entry(&self, entry: &ManifestEntry, class: u8) -> Result<LabeledImage> {
        let path = self.dir.join(&entry.name);
        if !path.is_file() {
            return Err(Error::Missing(path));
        }
        let bytes = std::fs::read(&path)?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::Integrity {
                file: entry.name.clone(),
                reason: "hash does not match manifest".into(),
            });
        }
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)?.to_rgb8();
        if img.dimensions() != (SIDE as u32, SIDE as u32) {
            return Err(Error::Integrity {
                file: entry.name.clone(),
                reason: format!("image is {:?}, expected 32×32", img.dimensions()),
            });
        }
        Ok(LabeledImage::from_bytes(&rgb_to_planar(&img), class))
    }
}

/// Interleaved RGB → channel-major planes.
pub fn rgb_to_planar(img: &image::RgbImage) -> Vec<u8> {
    let plane = (img.width() * img.height()) as usize;
    let mut out = vec![0u8; 3 * plane];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            out[c * plane + i] = px[c];
        }
    }
    out
}

/// Writes a set in the format consumed above; used by tests and examples.
pub fn write_set(dir: &Path, mode: &str, seed: u64, images: &[(Split, LabeledImage)]) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut counters = [0usize; 2];
    for (split, img) in images {
        let counter = &mut counters[*split as usize];
        let name = file_name(*split, *counter, img.class_label);
        *counter += 1;
        let mut rgb = image::RgbImage::new(SIDE as u32, SIDE as u32);
        for (i, px) in rgb.pixels_mut().enumerate() {
            for c in 0..3 {
                px[c] = (img.pixels[c * SIDE * SIDE + i] * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
        let mut bytes = Vec::new();
        rgb.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)?;
        std::fs::write(dir.join(&name), &bytes)?;
        files.push(ManifestEntry {
            name,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        version: 1,
        mode: mode.into(),
        seed,
        asset_checksums: BTreeMap::new(),
        pipeline: BTreeMap::new(),
        files,
    };
    std::fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(class: u8) -> LabeledImage {
        let bytes: Vec<u8> = (0..3072u32).map(|i| ((i * 31 + class as u32 * 7) % 256) as u8).collect();
        LabeledImage::from_bytes(&bytes, class)
    }

    #[test]
    fn names_parse() {
        assert_eq!(parse_name("train_12_3.png"), Some((Split::Train, 12, 3)));
        assert_eq!(parse_name("test_0_9.png"), Some((Split::Test, 0, 9)));
        assert_eq!(parse_name("test_0_10.png"), None);
        assert_eq!(parse_name("val_0_1.png"), None);
    }

    #[test]
    fn written_set_loads_with_labels_and_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let images = vec![(Split::Train, img(4)), (Split::Train, img(1)), (Split::Test, img(7))];
        write_set(dir.path(), "texturize", 5, &images).unwrap();
        let set = GeneratedSet::open(dir.path()).unwrap();
        let train = set.load_split(Split::Train).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(train[0], images[0].1);
        assert_eq!(train[1].class_label, 1);
        assert_eq!(set.load_split(Split::Test).unwrap()[0].class_label, 7);
    }

    #[test]
    fn tampered_file_fails_verification() {
        let dir = tempfile::tempdir().unwrap();
        write_set(dir.path(), "stylize", 1, &[(Split::Test, img(2))]).unwrap();
        let path = dir.path().join("test_0_2.png");
        let other = dir.path().join("x");
        write_set(&other, "stylize", 1, &[(Split::Test, img(3))]).unwrap();
        std::fs::copy(other.join("test_0_3.png"), &path).unwrap();
        let set = GeneratedSet::open(dir.path()).unwrap();
        assert!(matches!(set.load_split(Split::Test), Err(Error::Integrity { .. })));
    }
}
