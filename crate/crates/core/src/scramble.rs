//! Deterministic hierarchical scrambling of pixel positions.
//!
//! An image of side `2^L` is addressed as a quadtree: every pixel has `L`
//! quadrant digits, the first one naming its quadrant in the whole image, the
//! last one its position inside a 2×2 block. A scrambling operator permutes
//! the four sub-blocks inside blocks at some of those depths:
//!
//! * top-down level `k` permutes depths `1..=k` (coarse to fine),
//! * bottom-up level `k` permutes the `k` finest depths,
//! * the full scramble permutes every depth.
//!
//! Each block at each depth gets its own permutation of its four quadrants,
//! drawn from a counter-based hash of `(seed, depth, block)`. The maps are
//! therefore reproducible without RNG state, and the top-down and bottom-up
//! chains share their last element by construction.

use std::fmt;
use std::str::FromStr;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seed used for every scrambling map of an experiment grid.
pub const DEFAULT_SEED: u64 = 0x5c4a_3b1e_d00d_2021;

/// Side of CIFAR images.
pub const DEFAULT_SIDE: usize = 32;

/// Level of the full scramble.
pub const FULL_LEVEL: u8 = 5;

const MAGIC: &[u8; 4] = b"PMAP";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Identity,
    TopDown,
    BottomUp,
    Full,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Identity => "identity",
            Scheme::TopDown => "top_down",
            Scheme::BottomUp => "bottom_up",
            Scheme::Full => "full",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScrambleSpec {
    pub scheme: Scheme,
    pub level: u8,
    pub image_side: usize,
    pub seed: u64,
}

impl ScrambleSpec {
    pub fn new(scheme: Scheme, level: u8, image_side: usize, seed: u64) -> Result<Self> {
        let spec = Self {
            scheme,
            level,
            image_side,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn identity() -> Self {
        Self {
            scheme: Scheme::Identity,
            level: 0,
            image_side: DEFAULT_SIDE,
            seed: DEFAULT_SEED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScramble(msg));
        match (self.scheme, self.level) {
            (Scheme::Identity, 0) | (Scheme::Full, FULL_LEVEL) => {}
            (Scheme::TopDown | Scheme::BottomUp, 1..=4) => {}
            (scheme, level) => return bad(format!("level {level} is not valid for {scheme}")),
        }
        if !self.image_side.is_power_of_two() || self.image_side < 2 {
            return bad(format!("image side {} is not a power of two", self.image_side));
        }
        if self.image_side < 1 << self.level {
            return bad(format!(
                "image side {} is smaller than 2^{}",
                self.image_side, self.level
            ));
        }
        if self.image_side > 1 << 15 {
            return bad(format!("image side {} is too large", self.image_side));
        }
        Ok(())
    }

    /// Short condition label: `s0`, `td1`..`td4`, `bu1`..`bu4`, `s5`.
    pub fn label(&self) -> String {
        match self.scheme {
            Scheme::Identity => "s0".into(),
            Scheme::Full => "s5".into(),
            Scheme::TopDown => format!("td{}", self.level),
            Scheme::BottomUp => format!("bu{}", self.level),
        }
    }

    /// Parses a condition label at the default side and seed.
    pub fn from_label(label: &str) -> Result<Self> {
        let label = label.trim().to_ascii_lowercase();
        let (scheme, level) = match label.as_str() {
            "s0" => (Scheme::Identity, 0),
            "s5" => (Scheme::Full, FULL_LEVEL),
            other => {
                let (scheme, rest) = if let Some(rest) = other.strip_prefix("td") {
                    (Scheme::TopDown, rest)
                } else if let Some(rest) = other.strip_prefix("bu") {
                    (Scheme::BottomUp, rest)
                } else {
                    return Err(Error::InvalidScramble(format!("unknown condition `{label}`")));
                };
                let level = rest
                    .parse::<u8>()
                    .map_err(|_| Error::InvalidScramble(format!("unknown condition `{label}`")))?;
                (scheme, level)
            }
        };
        Self::new(scheme, level, DEFAULT_SIDE, DEFAULT_SEED)
    }

    /// The ten conditions of an experiment, in plotting order
    /// `S0, TD1..TD4, S5, BU4..BU1`.
    pub fn all_conditions(image_side: usize, seed: u64) -> Vec<Self> {
        let mut out = vec![Self {
            scheme: Scheme::Identity,
            level: 0,
            image_side,
            seed,
        }];
        out.extend((1..=4).map(|level| Self {
            scheme: Scheme::TopDown,
            level,
            image_side,
            seed,
        }));
        out.push(Self {
            scheme: Scheme::Full,
            level: FULL_LEVEL,
            image_side,
            seed,
        });
        out.extend((1..=4).rev().map(|level| Self {
            scheme: Scheme::BottomUp,
            level,
            image_side,
            seed,
        }));
        out
    }

    /// Position of this condition on the plotting axis.
    pub fn axis_position(&self) -> usize {
        match self.scheme {
            Scheme::Identity => 0,
            Scheme::TopDown => self.level as usize,
            Scheme::Full => 5,
            Scheme::BottomUp => 10 - self.level as usize,
        }
    }

    fn depths(&self) -> std::ops::RangeInclusive<u32> {
        let total = self.image_side.trailing_zeros();
        let level = u32::from(self.level);
        match self.scheme {
            Scheme::Identity => std::ops::RangeInclusive::new(1, 0),
            Scheme::TopDown => 1..=level,
            Scheme::BottomUp => total - level + 1..=total,
            Scheme::Full => 1..=total,
        }
    }
}

impl FromStr for ScrambleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_label(s)
    }
}

impl fmt::Display for ScrambleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// A bijection on flattened pixel positions (`y * side + x`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PermutationMap {
    forward: Vec<u32>,
}

impl PermutationMap {
    pub fn identity(size: usize) -> Self {
        Self {
            forward: (0..size as u32).collect(),
        }
    }

    pub fn from_forward(forward: Vec<u32>) -> Result<Self> {
        if !is_bijection(&forward) {
            return Err(Error::Decode {
                what: "permutation map",
                reason: "forward array is not a bijection".into(),
            });
        }
        Ok(Self { forward })
    }

    pub fn size(&self) -> usize {
        self.forward.len()
    }

    /// Destination of every source position.
    pub fn forward(&self) -> &[u32] {
        &self.forward
    }

    /// Scrambles a channel-major image (`C×H×W`); every channel gets the same
    /// spatial permutation.
    pub fn apply<T: Copy + Default>(&self, image: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::default(); image.len()];
        self.apply_into(image, &mut out)?;
        Ok(out)
    }

    pub fn apply_into<T: Copy>(&self, image: &[T], out: &mut [T]) -> Result<()> {
        let size = self.size();
        if size == 0 || !image.len().is_multiple_of(size) || image.is_empty() {
            return Err(Error::SizeMismatch {
                expected: size,
                actual: image.len(),
            });
        }
        if out.len() != image.len() {
            return Err(Error::SizeMismatch {
                expected: image.len(),
                actual: out.len(),
            });
        }
        for (src, dst) in image.chunks_exact(size).zip(out.chunks_exact_mut(size)) {
            for (p, &q) in self.forward.iter().enumerate() {
                dst[q as usize] = src[p];
            }
        }
        Ok(())
    }

    pub fn invert(&self) -> Self {
        let mut inverse = vec![0u32; self.size()];
        for (p, &q) in self.forward.iter().enumerate() {
            inverse[q as usize] = p as u32;
        }
        Self { forward: inverse }
    }

    pub fn is_identity(&self) -> bool {
        self.forward.iter().enumerate().all(|(p, &q)| p as u32 == q)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.size());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.size() as u32).to_le_bytes());
        for &q in &self.forward {
            out.extend_from_slice(&q.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |reason: String| Error::Decode {
            what: "permutation map",
            reason,
        };
        if bytes.len() < HEADER_LEN {
            return Err(fail(format!("truncated header ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(fail("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(fail(format!("unsupported version {version}")));
        }
        let size = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != 4 * size {
            return Err(fail(format!(
                "payload is {} bytes, expected {}",
                payload.len(),
                4 * size
            )));
        }
        let forward = payload
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_forward(forward)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Visualizes where every pixel goes: source pixels are colored by their
    /// original position (red = column, green = row, blue = coarse quadrant)
    /// and drawn at their destination, each pixel magnified `scale` times.
    pub fn legend_image(&self, scale: u32) -> Result<RgbImage> {
        let side = (self.size() as f64).sqrt() as usize;
        if side * side != self.size() {
            return Err(Error::InvalidScramble(format!(
                "map of size {} is not square",
                self.size()
            )));
        }
        let scale = scale.max(1);
        let mut img = RgbImage::new(side as u32 * scale, side as u32 * scale);
        let half = side / 2;
        for (p, &q) in self.forward.iter().enumerate() {
            let (y, x) = (p / side, p % side);
            let (qy, qx) = (q as usize / side, q as usize % side);
            let channel = |v: usize| (255 * v / side.max(2).saturating_sub(1).max(1)).min(255) as u8;
            let quadrant = (usize::from(y >= half) * 2 + usize::from(x >= half)) as u8;
            let color = Rgb([channel(x), channel(y), 60 * quadrant + 40]);
            for dy in 0..scale {
                for dx in 0..scale {
                    img.put_pixel(qx as u32 * scale + dx, qy as u32 * scale + dy, color);
                }
            }
        }
        Ok(img)
    }
}

/// True when `forward` contains every index in `0..len` exactly once.
pub fn is_bijection(forward: &[u32]) -> bool {
    let mut seen = vec![false; forward.len()];
    for &q in forward {
        match seen.get_mut(q as usize) {
            Some(s) if !*s => *s = true,
            _ => return false,
        }
    }
    true
}

/// Builds the permutation realizing a scrambling condition.
pub fn build_permutation(spec: &ScrambleSpec) -> Result<PermutationMap> {
    spec.validate()?;
    Ok(hierarchical_map(spec.image_side, spec.depths(), spec.seed))
}

/// Permutes the quadrants of every block at each quadtree depth in `depths`
/// (depth 1 splits the whole image, depth `log2(side)` splits 2×2 blocks).
pub fn hierarchical_map(
    side: usize,
    depths: std::ops::RangeInclusive<u32>,
    seed: u64,
) -> PermutationMap {
    assert!(side.is_power_of_two(), "side must be a power of two");
    let total = side.trailing_zeros();
    let depths: Vec<u32> = depths.filter(|&d| d >= 1 && d <= total).collect();
    let mut forward = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let (mut ny, mut nx) = (y, x);
            for &depth in &depths {
                let shift = total - depth;
                let parent_shift = shift + 1;
                let blocks_per_row = side >> parent_shift;
                let block = (y >> parent_shift) * blocks_per_row + (x >> parent_shift);
                let digit = (((y >> shift) & 1) << 1) | ((x >> shift) & 1);
                let perm = quadrant_permutation(seed, depth, block as u64);
                let moved = perm[digit] as usize;
                ny = (ny & !(1 << shift)) | ((moved >> 1) << shift);
                nx = (nx & !(1 << shift)) | ((moved & 1) << shift);
            }
            forward.push((ny * side + nx) as u32);
        }
    }
    PermutationMap { forward }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform permutation of the four quadrants of one block, keyed by
/// `(seed, depth, block)`.
pub fn quadrant_permutation(seed: u64, depth: u32, block: u64) -> [u8; 4] {
    let key = splitmix64(splitmix64(splitmix64(seed) ^ u64::from(depth)) ^ block);
    let mut code = ((u128::from(key) * 24) >> 64) as usize;
    let mut pool = vec![0u8, 1, 2, 3];
    let mut out = [0u8; 4];
    for (i, slot) in out.iter_mut().enumerate() {
        let radix = FACTORIALS[3 - i];
        *slot = pool.remove(code / radix);
        code %= radix;
    }
    out
}

const FACTORIALS: [usize; 4] = [1, 1, 2, 6];

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(scheme: Scheme, level: u8, side: usize) -> ScrambleSpec {
        ScrambleSpec::new(scheme, level, side, 7).unwrap()
    }

    #[test]
    fn identity_spec_gives_identity_map() {
        let map = build_permutation(&ScrambleSpec::identity()).unwrap();
        assert_eq!(map.size(), 1024);
        assert!(map.is_identity());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(ScrambleSpec::new(Scheme::Identity, 1, 32, 0).is_err());
        assert!(ScrambleSpec::new(Scheme::TopDown, 0, 32, 0).is_err());
        assert!(ScrambleSpec::new(Scheme::BottomUp, 5, 32, 0).is_err());
        assert!(ScrambleSpec::new(Scheme::Full, 4, 32, 0).is_err());
        assert!(ScrambleSpec::new(Scheme::TopDown, 1, 24, 0).is_err());
        assert!(ScrambleSpec::new(Scheme::TopDown, 3, 4, 0).is_err());
        assert!(ScrambleSpec::new(Scheme::Full, 5, 16, 0).is_err());
    }

    #[test]
    fn quadrant_permutations_cover_all_24() {
        let mut seen = std::collections::HashSet::new();
        for block in 0..2000 {
            let p = quadrant_permutation(3, 2, block);
            let mut sorted = p;
            sorted.sort();
            assert_eq!(sorted, [0, 1, 2, 3]);
            seen.insert(p);
        }
        assert_eq!(seen.len(), 24);
    }

    // Hand-built oracle for a 4×4 image: with TD1 each 2×2 quadrant moves as a
    // whole to the slot chosen by the depth-1 permutation.
    #[test]
    fn top_down_level_one_moves_intact_quadrants() {
        for seed in 0..50 {
            let spec = ScrambleSpec::new(Scheme::TopDown, 1, 4, seed).unwrap();
            let map = build_permutation(&spec).unwrap();
            let perm = quadrant_permutation(seed, 1, 0);
            for y in 0..4usize {
                for x in 0..4usize {
                    let quadrant = (y / 2) * 2 + x / 2;
                    let target = perm[quadrant] as usize;
                    let (ty, tx) = ((target / 2) * 2 + y % 2, (target % 2) * 2 + x % 2);
                    assert_eq!(map.forward()[y * 4 + x] as usize, ty * 4 + tx);
                }
            }
        }
    }

    #[test]
    fn endpoints_of_both_chains_coincide() {
        for seed in [0u64, 1, 99, u64::MAX] {
            let full = build_permutation(&ScrambleSpec::new(Scheme::Full, 5, 32, seed).unwrap())
                .unwrap();
            let top_down = hierarchical_map(32, 1..=5, seed);
            let bottom_up = hierarchical_map(32, 32u32.trailing_zeros() - 4..=5, seed);
            assert_eq!(full, top_down);
            assert_eq!(full, bottom_up);
        }
    }

    #[test]
    fn scrambling_preserves_channel_means_exactly() {
        let image: Vec<f64> = (0..3 * 1024).map(|i| ((i * 7919) % 251) as f64 / 251.0).collect();
        let map = build_permutation(&spec(Scheme::BottomUp, 3, 32)).unwrap();
        let out = map.apply(&image).unwrap();
        for c in 0..3 {
            let mut a = image[c * 1024..(c + 1) * 1024].to_vec();
            let mut b = out[c * 1024..(c + 1) * 1024].to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn apply_rejects_wrong_size() {
        let map = PermutationMap::identity(16);
        assert!(map.apply(&[0.0f32; 15]).is_err());
    }

    #[test]
    fn inverse_round_trips() {
        let map = build_permutation(&spec(Scheme::TopDown, 4, 32)).unwrap();
        let image: Vec<u32> = (0..3 * 1024).collect();
        let back = map.invert().apply(&map.apply(&image).unwrap()).unwrap();
        assert_eq!(back, image);
        assert_eq!(map.invert().invert(), map);
        assert!(PermutationMap::identity(64).invert().is_identity());
    }

    #[test]
    fn serialization_round_trips_and_rejects_bad_input() {
        let map = build_permutation(&spec(Scheme::TopDown, 3, 32)).unwrap();
        let bytes = map.to_bytes();
        assert_eq!(PermutationMap::from_bytes(&bytes).unwrap(), map);
        let id = PermutationMap::identity(1024);
        assert_eq!(PermutationMap::from_bytes(&id.to_bytes()).unwrap(), id);

        assert!(PermutationMap::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(PermutationMap::from_bytes(&bytes[..6]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(PermutationMap::from_bytes(&bad).is_err());
        let mut dup = bytes;
        dup.copy_within(HEADER_LEN + 4..HEADER_LEN + 8, HEADER_LEN);
        assert!(PermutationMap::from_bytes(&dup).is_err());
    }

    #[test]
    fn labels_round_trip() {
        for cond in ScrambleSpec::all_conditions(32, DEFAULT_SEED) {
            assert_eq!(ScrambleSpec::from_label(&cond.label()).unwrap(), cond);
        }
        assert!(ScrambleSpec::from_label("td7").is_err());
        assert!(ScrambleSpec::from_label("xx").is_err());
    }

    #[test]
    fn axis_order_matches_condition_order() {
        let positions: Vec<_> = ScrambleSpec::all_conditions(32, 0)
            .iter()
            .map(ScrambleSpec::axis_position)
            .collect();
        assert_eq!(positions, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn legend_has_expected_dimensions() {
        let map = build_permutation(&spec(Scheme::Full, 5, 32)).unwrap();
        let img = map.legend_image(4).unwrap();
        assert_eq!(img.dimensions(), (128, 128));
    }
}
