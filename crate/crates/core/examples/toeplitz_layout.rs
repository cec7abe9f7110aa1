//! A 3→3 channel 3×3 convolution on 32×32 images as a masked dense matrix,
//! with nonlocal entries sprinkled over its structural zeros.

use locality::autodiff::ConvGeom;
use locality::nonlocal::{ToeplitzLayout, DEFAULT_PROBABILITY};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct LayoutCounts {
    pub conv: usize,
    pub nonlocal: usize,
    pub dense: usize,
}

pub fn run_example(seed: u64) -> locality::Result<LayoutCounts> {
    let geom = ConvGeom {
        batch: 1,
        in_c: 3,
        h: 32,
        w: 32,
        out_c: 3,
        kernel: 3,
        stride: 1,
        pad: 0,
    };
    let mut layout = ToeplitzLayout::from_conv(geom)?;
    let nonlocal = layout.add_nonlocal(DEFAULT_PROBABILITY, &mut ChaCha8Rng::seed_from_u64(seed))?;
    println!("dense matrix      {} x {} = {}", layout.rows, layout.cols, layout.dense_size());
    println!("conv entries      {}", layout.conv_index.len());
    println!("nonlocal entries  {nonlocal}");
    println!("nonzeros          {}", layout.nnz());
    Ok(LayoutCounts {
        conv: layout.conv_index.len(),
        nonlocal,
        dense: layout.dense_size(),
    })
}

#[allow(dead_code)]
fn main() -> locality::Result<()> {
    run_example(2021)?;
    Ok(())
}
