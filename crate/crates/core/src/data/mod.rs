//! Images, task labels, augmentation, and the synthetic compositional target.

mod augment;
pub mod cifar;
mod compositional;
pub mod generated;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scramble::{build_permutation, PermutationMap, ScrambleSpec};

pub use augment::{augment, batch_rng, denormalize, normalize, AugmentConfig};
pub use cifar::{load_cifar10, load_cifar10_subset};
pub use compositional::{compositional_dataset, Constituent, HierarchicalFunction};

pub const CHANNELS: usize = 3;
pub const SIDE: usize = 32;
pub const PLANE: usize = SIDE * SIDE;
pub const PIXELS: usize = CHANNELS * PLANE;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    /// Channel-major `3×32×32` values in `[0, 1]`.
    pub pixels: Vec<f32>,
    pub class_label: u8,
    /// Mean of each channel, taken before any scrambling.
    pub color_label: [f64; 3],
}

/// Per-channel means, summed in `f64` in index order.
pub fn channel_means(pixels: &[f32]) -> [f64; 3] {
    let plane = pixels.len() / CHANNELS;
    let mut out = [0.0; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let sum: f64 = pixels[c * plane..(c + 1) * plane].iter().map(|&v| f64::from(v)).sum();
        *slot = sum / plane as f64;
    }
    out
}

impl LabeledImage {
    pub fn new(pixels: Vec<f32>, class_label: u8) -> Self {
        assert_eq!(pixels.len(), PIXELS, "images are 3×32×32");
        let color_label = channel_means(&pixels);
        Self {
            pixels,
            class_label,
            color_label,
        }
    }

    pub fn from_bytes(bytes: &[u8], class_label: u8) -> Self {
        Self::new(bytes.iter().map(|&b| f32::from(b) / 255.0).collect(), class_label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[serde(rename = "object", alias = "object_recognition")]
    ObjectRecognition,
    #[serde(rename = "stylized", alias = "stylized_object_recognition")]
    StylizedObjectRecognition,
    #[serde(rename = "texture", alias = "texture_perception")]
    TexturePerception,
    #[serde(rename = "color", alias = "color_estimation")]
    ColorEstimation,
}

impl Task {
    pub const ALL: [Task; 4] = [
        Task::ObjectRecognition,
        Task::StylizedObjectRecognition,
        Task::TexturePerception,
        Task::ColorEstimation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::ObjectRecognition => "object",
            Task::StylizedObjectRecognition => "stylized",
            Task::TexturePerception => "texture",
            Task::ColorEstimation => "color",
        }
    }

    pub fn is_classification(self) -> bool {
        self != Task::ColorEstimation
    }

    pub fn output_dim(self) -> usize {
        if self.is_classification() {
            cifar::CLASSES
        } else {
            3
        }
    }

    /// Full-length training schedule.
    pub fn full_epochs(self) -> usize {
        match self {
            Task::ColorEstimation => 40,
            _ => 100,
        }
    }

    /// Per-task factor in the base learning rate.
    pub fn dataset_learning_factor(self) -> f64 {
        match self {
            Task::ObjectRecognition => 0.1,
            Task::StylizedObjectRecognition | Task::TexturePerception => 0.25,
            Task::ColorEstimation => 0.001,
        }
    }

    /// Whether the images come from an externally generated directory.
    pub fn needs_generated_images(self) -> bool {
        matches!(self, Task::StylizedObjectRecognition | Task::TexturePerception)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "object" | "object_recognition" => Task::ObjectRecognition,
            "stylized" | "stylized_object_recognition" => Task::StylizedObjectRecognition,
            "texture" | "texture_perception" => Task::TexturePerception,
            "color" | "colour" | "color_estimation" => Task::ColorEstimation,
            _ => return Err(Error::Config(format!("unknown task `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Images of one task and split, stored already scrambled.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub task: Task,
    pub split: Split,
    pub scramble: ScrambleSpec,
    pub items: Vec<LabeledImage>,
}

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn class_histogram(&self) -> [usize; cifar::CLASSES] {
        let mut h = [0; cifar::CLASSES];
        for item in &self.items {
            h[item.class_label as usize] += 1;
        }
        h
    }
}

/// Scrambles `raw` once with the map of `scramble`; color labels keep the
/// values computed from the unscrambled pixels.
pub fn make_task_dataset(task: Task, split: Split, raw: &[LabeledImage], scramble: ScrambleSpec) -> Result<TaskDataset> {
    let map = build_permutation(&scramble)?;
    make_task_dataset_with(task, split, raw, scramble, &map)
}

pub fn make_task_dataset_with(
    task: Task,
    split: Split,
    raw: &[LabeledImage],
    scramble: ScrambleSpec,
    map: &PermutationMap,
) -> Result<TaskDataset> {
    let items = if map.is_identity() {
        raw.to_vec()
    } else {
        raw.iter()
            .map(|img| {
                Ok(LabeledImage {
                    pixels: map.apply(&img.pixels)?,
                    class_label: img.class_label,
                    color_label: img.color_label,
                })
            })
            .collect::<Result<_>>()?
    };
    Ok(TaskDataset {
        task,
        split,
        scramble,
        items,
    })
}

/// Loads the unscrambled source images of a task: CIFAR-10 for object
/// recognition and color estimation, a generated PNG directory otherwise.
pub fn load_task_images(
    task: Task,
    cifar_dir: Option<&Path>,
    generated_dir: Option<&Path>,
    train_limit: usize,
    test_limit: usize,
) -> Result<(Vec<LabeledImage>, Vec<LabeledImage>)> {
    if task.needs_generated_images() {
        let dir = generated_dir.ok_or_else(|| Error::Config(format!("task {task} needs a generated image directory")))?;
        if !dir.is_dir() {
            return Err(Error::Missing(dir.to_path_buf()));
        }
        let set = generated::GeneratedSet::open(dir)?;
        let mut train = set.load_split(Split::Train)?;
        let mut test = set.load_split(Split::Test)?;
        train.truncate(train_limit);
        test.truncate(test_limit);
        Ok((train, test))
    } else {
        let dir = cifar_dir.ok_or_else(|| Error::Config(format!("task {task} needs the CIFAR-10 directory")))?;
        load_cifar10_subset(dir, train_limit, test_limit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scramble::{Scheme, DEFAULT_SEED};

    fn image(seed: u32) -> LabeledImage {
        let bytes: Vec<u8> = (0..PIXELS as u32).map(|i| (i.wrapping_mul(2654435761).wrapping_add(seed) >> 13) as u8).collect();
        LabeledImage::from_bytes(&bytes, (seed % 10) as u8)
    }

    #[test]
    fn color_labels_survive_every_scramble() {
        let raw: Vec<_> = (0..4).map(image).collect();
        let base = make_task_dataset(Task::ColorEstimation, Split::Train, &raw, ScrambleSpec::identity()).unwrap();
        for spec in ScrambleSpec::all_conditions(32, DEFAULT_SEED) {
            let ds = make_task_dataset(Task::ColorEstimation, Split::Train, &raw, spec).unwrap();
            for (a, b) in ds.items.iter().zip(&base.items) {
                assert_eq!(a.color_label, b.color_label);
                assert_eq!(channel_means(&a.pixels), a.color_label);
            }
        }
    }

    #[test]
    fn unscrambled_dataset_keeps_pixels_and_labels() {
        let raw: Vec<_> = (0..3).map(image).collect();
        let ds = make_task_dataset(Task::ObjectRecognition, Split::Test, &raw, ScrambleSpec::identity()).unwrap();
        assert_eq!(ds.items, raw);
    }

    #[test]
    fn full_scramble_inverts_back_to_source() {
        let raw: Vec<_> = (0..3).map(image).collect();
        let spec = ScrambleSpec::new(Scheme::Full, 5, 32, DEFAULT_SEED).unwrap();
        let ds = make_task_dataset(Task::ObjectRecognition, Split::Train, &raw, spec).unwrap();
        let inverse = build_permutation(&spec).unwrap().invert();
        for (item, src) in ds.items.iter().zip(&raw) {
            assert_ne!(item.pixels, src.pixels);
            assert_eq!(inverse.apply(&item.pixels).unwrap(), src.pixels);
        }
    }

    #[test]
    fn texture_task_without_directory_fails() {
        let err = load_task_images(Task::TexturePerception, None, Some(Path::new("/no/such/dir")), 10, 10).unwrap_err();
        assert!(matches!(err, Error::Missing(_)));
        assert!(load_task_images(Task::StylizedObjectRecognition, None, None, 10, 10).is_err());
    }

    #[test]
    fn task_tables() {
        assert_eq!(Task::ColorEstimation.output_dim(), 3);
        assert_eq!(Task::ColorEstimation.full_epochs(), 40);
        assert_eq!(Task::TexturePerception.dataset_learning_factor(), 0.25);
        for t in Task::ALL {
            assert_eq!(t.as_str().parse::<Task>().unwrap(), t);
        }
    }
}
