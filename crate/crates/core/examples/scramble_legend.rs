//! Writes the ten scrambling maps (`.pmap`) and their legend images, and
//! checks that scrambling leaves the channel means of an image untouched.

use std::path::{Path, PathBuf};

use locality::data::{channel_means, LabeledImage, PIXELS};
use locality::scramble::{build_permutation, ScrambleSpec, DEFAULT_SEED, DEFAULT_SIDE};

pub fn run_example(out: &Path) -> locality::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let bytes: Vec<u8> = (0..PIXELS).map(|i| (i * 37 % 256) as u8).collect();
    let image = LabeledImage::from_bytes(&bytes, 0);
    let mut written = Vec::new();
    for spec in ScrambleSpec::all_conditions(DEFAULT_SIDE, DEFAULT_SEED) {
        let map = build_permutation(&spec)?;
        let stem = out.join(spec.label());
        map.save(stem.with_extension("pmap"))?;
        map.legend_image(4)?.save(stem.with_extension("png"))?;
        let scrambled = map.apply(&image.pixels)?;
        assert_eq!(channel_means(&scrambled), image.color_label);
        println!("{:>3}: {} pixels moved", spec.label(), map.forward().iter().enumerate().filter(|(i, &q)| *i as u32 != q).count());
        written.push(stem.with_extension("png"));
    }
    Ok(written)
}

#[allow(dead_code)]
fn main() -> locality::Result<()> {
    run_example(Path::new("scramble_legend"))?;
    Ok(())
}
