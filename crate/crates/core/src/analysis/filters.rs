use std::path::Path;

use image::{Rgb, RgbImage};

use crate::autodiff::Tensor;
use crate::data::{CHANNELS, SIDE};
use crate::error::{Error, Result};

/// Tiles per side for `n` filters.
pub fn grid_side(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

/// Filters as `(channels, k)` if the weight can be drawn as images:
/// convolution weights `[out, 1|3, k, k]` or a dense layer reading a
/// flattened `3×32×32` image.
fn geometry(shape: &[usize]) -> Option<(usize, usize, usize)> {
    match *shape {
        [out, c, k, k2] if k == k2 && (c == 1 || c == CHANNELS) => Some((out, c, k)),
        [out, inp] if inp == CHANNELS * SIDE * SIDE => Some((out, CHANNELS, SIDE)),
        _ => None,
    }
}

/// Each filter min-max normalized on its own (a constant filter becomes
/// mid-gray) and tiled row by row into a `⌈√n⌉ × ⌈√n⌉` grid; every tile
/// pixel is a `scale × scale` block.
pub fn filter_grid(weight: &Tensor<f32>, scale: u32) -> Result<RgbImage> {
    let (n, channels, k) = geometry(weight.shape())
        .ok_or_else(|| Error::NotVisualizable(format!("weight of shape {:?}", weight.shape())))?;
    let g = grid_side(n);
    let tile = k as u32 * scale;
    let mut img = RgbImage::new(g as u32 * tile, g as u32 * tile);
    let per = channels * k * k;
    for (f, values) in weight.data().chunks_exact(per).enumerate() {
        let (lo, hi) = values.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let to_u8 = |v: f32| -> u8 {
            if hi > lo {
                ((v - lo) / (hi - lo) * 255.0).round() as u8
            } else {
                128
            }
        };
        let (ty, tx) = ((f / g) as u32 * tile, (f % g) as u32 * tile);
        for y in 0..k {
            for x in 0..k {
                let at = |c: usize| to_u8(values[(c * k + y) * k + x]);
                let px = if channels == 1 {
                    Rgb([at(0); 3])
                } else {
                    Rgb([at(0), at(1), at(2)])
                };
                for dy in 0..scale {
                    for dx in 0..scale {
                        img.put_pixel(tx + x as u32 * scale + dx, ty + y as u32 * scale + dy, px);
                    }
                }
            }
        }
    }
    Ok(img)
}

/// Writes the filter grid of parameter `name` as a PNG.
pub fn export_filters(params: &[(String, Tensor<f32>)], name: &str, scale: u32, out: &Path) -> Result<()> {
    let (_, weight) = params
        .iter()
        .find(|(n, _)| n == name)
        .ok_or_else(|| Error::NotVisualizable(format!("no parameter named {name}")))?;
    filter_grid(weight, scale)?.save(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_filter_is_mid_gray() {
        let w = Tensor::zeros(vec![1, 3, 5, 5]);
        let img = filter_grid(&w, 1).unwrap();
        assert_eq!(img.dimensions(), (5, 5));
        assert!(img.pixels().all(|p| *p == Rgb([128, 128, 128])));
    }

    #[test]
    fn spike_is_one_bright_pixel() {
        let mut w = Tensor::<f32>::zeros(vec![1, 1, 3, 3]);
        w.data_mut()[4] = 2.0;
        let img = filter_grid(&w, 1).unwrap();
        let bright: Vec<_> = img.enumerate_pixels().filter(|(_, _, p)| p.0 == [255; 3]).collect();
        assert_eq!(bright.len(), 1);
        assert_eq!((bright[0].0, bright[0].1), (1, 1));
        assert_eq!(img.pixels().filter(|p| p.0 == [0; 3]).count(), 8);
    }

    #[test]
    fn grid_dimensions() {
        for n in [1, 2, 4, 5, 8, 9, 10, 64] {
            let w = Tensor::<f32>::zeros(vec![n, 3, 3, 3]);
            let img = filter_grid(&w, 2).unwrap();
            let g = grid_side(n) as u32;
            assert!(g * g >= n as u32 && (g - 1) * (g - 1) < n as u32);
            assert_eq!(img.dimensions(), (g * 6, g * 6));
        }
        let dense = Tensor::<f32>::zeros(vec![4, 3072]);
        assert_eq!(filter_grid(&dense, 1).unwrap().dimensions(), (64, 64));
        let bad = Tensor::<f32>::zeros(vec![4, 8, 3, 3]);
        assert!(matches!(filter_grid(&bad, 1), Err(Error::NotVisualizable(_))));
    }
}
