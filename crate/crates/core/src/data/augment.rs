use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{CHANNELS, SIDE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Range of the crop's area as a fraction of the image.
    pub crop_area_ratio: (f64, f64),
    pub flip_probability: f64,
    pub normalize_mean: [f32; 3],
    pub normalize_std: [f32; 3],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            crop_area_ratio: (0.7, 1.0),
            flip_probability: 0.5,
            normalize_mean: [0.485, 0.456, 0.406],
            normalize_std: [0.229, 0.224, 0.225],
        }
    }
}

impl AugmentConfig {
    /// Normalization only.
    pub fn identity() -> Self {
        Self {
            crop_area_ratio: (1.0, 1.0),
            flip_probability: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.crop_area_ratio;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!("crop area ratio {lo}..{hi} not within (0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Probability(self.flip_probability));
        }
        if self.normalize_std.iter().any(|&s| s <= 0.0) {
            return Err(Error::Config("normalization std must be positive".into()));
        }
        Ok(())
    }
}

/// Independent stream for one batch of one epoch.
pub fn batch_rng(seed: u64, epoch: usize, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | batch as u64);
    rng
}

pub fn normalize(image: &mut [f32], cfg: &AugmentConfig) {
    let plane = image.len() / CHANNELS;
    for (c, chunk) in image.chunks_exact_mut(plane).enumerate() {
        let (m, s) = (cfg.normalize_mean[c], cfg.normalize_std[c]);
        for v in chunk {
            *v = (*v - m) / s;
        }
    }
}

pub fn denormalize(image: &mut [f32], cfg: &AugmentConfig) {
    let plane = image.len() / CHANNELS;
    for (c, chunk) in image.chunks_exact_mut(plane).enumerate() {
        let (m, s) = (cfg.normalize_mean[c], cfg.normalize_std[c]);
        for v in chunk {
            *v = *v * s + m;
        }
    }
}

/// Random square crop, bilinear resize back to 32×32, random horizontal
/// flip, then channel normalization.
pub fn augment(image: &[f32], cfg: &AugmentConfig, rng: &mut impl Rng) -> Vec<f32> {
    let (lo, hi) = cfg.crop_area_ratio;
    let area = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let crop = ((SIDE as f64 * area.sqrt()).round() as usize).clamp(1, SIDE);
    let top = rng.random_range(0..=SIDE - crop);
    let left = rng.random_range(0..=SIDE - crop);
    let flip = cfg.flip_probability > 0.0 && rng.random_bool(cfg.flip_probability);

    let mut out = vec![0.0f32; image.len()];
    let scale = crop as f32 / SIDE as f32;
    let coord = |o: usize| {
        let s = ((o as f32 + 0.5) * scale - 0.5).clamp(0.0, (crop - 1) as f32);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(crop - 1);
        (i0, i1, s - i0 as f32)
    };
    let cols: Vec<_> = (0..SIDE).map(coord).collect();
    for c in 0..CHANNELS {
        let plane = &image[c * SIDE * SIDE..(c + 1) * SIDE * SIDE];
        let at = |y: usize, x: usize| plane[(top + y) * SIDE + left + x];
        for oy in 0..SIDE {
            let (y0, y1, ty) = coord(oy);
            for (ox, &(x0, x1, tx)) in cols.iter().enumerate() {
                let a = at(y0, x0) + tx * (at(y0, x1) - at(y0, x0));
                let b = at(y1, x0) + tx * (at(y1, x1) - at(y1, x0));
                let dst_x = if flip { SIDE - 1 - ox } else { ox };
                out[c * SIDE * SIDE + oy * SIDE + dst_x] = a + ty * (b - a);
            }
        }
    }
    normalize(&mut out, cfg);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Vec<f32> {
        (0..3 * 1024).map(|i| (i % 97) as f32 / 97.0).collect()
    }

    #[test]
    fn degenerate_config_only_normalizes() {
        let cfg = AugmentConfig::identity();
        let img = ramp();
        let mut expected = img.clone();
        normalize(&mut expected, &cfg);
        let mut rng = batch_rng(1, 0, 0);
        assert_eq!(augment(&img, &cfg, &mut rng), expected);
    }

    #[test]
    fn constant_image_stays_constant() {
        let cfg = AugmentConfig::default();
        for seed in 0..20 {
            let img = vec![0.3f32; 3 * 1024];
            let out = augment(&img, &cfg, &mut batch_rng(seed, 1, 2));
            for c in 0..3 {
                let want = (0.3 - cfg.normalize_mean[c]) / cfg.normalize_std[c];
                assert!(out[c * 1024..(c + 1) * 1024].iter().all(|&v| v == want));
            }
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let cfg = AugmentConfig::default();
        let img = ramp();
        let a = augment(&img, &cfg, &mut batch_rng(9, 3, 4));
        let b = augment(&img, &cfg, &mut batch_rng(9, 3, 4));
        assert_eq!(a, b);
        let c = augment(&img, &cfg, &mut batch_rng(9, 3, 5));
        assert_ne!(a, c);
    }

    #[test]
    fn normalization_round_trips() {
        let cfg = AugmentConfig::default();
        let img = ramp();
        let mut x = img.clone();
        normalize(&mut x, &cfg);
        denormalize(&mut x, &cfg);
        assert!(x.iter().zip(&img).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn flip_mirrors_rows() {
        let cfg = AugmentConfig {
            flip_probability: 1.0,
            ..AugmentConfig::identity()
        };
        let img = ramp();
        let out = augment(&img, &cfg, &mut batch_rng(0, 0, 0));
        let mut norm = img.clone();
        normalize(&mut norm, &cfg);
        assert_eq!(out[0], norm[31]);
        assert_eq!(out[5 * 32 + 2], norm[5 * 32 + 29]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = AugmentConfig {
            crop_area_ratio: (0.0, 1.0),
            ..AugmentConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg = AugmentConfig::default();
        cfg.flip_probability = 1.5;
        assert!(cfg.validate().is_err());
        assert!(AugmentConfig::default().validate().is_ok());
    }
}
