//! Texture statistics under scrambling: the Gram matrix of an image's
//! colour channels is unchanged by any pixel permutation, while the Gram
//! matrix of local (first-layer) convolution responses is not.

use locality::analysis::{channel_gram, gram_matrix};
use locality::autodiff::{Tape, Tensor};
use locality::data::{LabeledImage, PIXELS};
use locality::models::{Network, NetworkSpec};
use locality::scramble::{build_permutation, ScrambleSpec};

fn feature_gram(net: &Network<f64>, pixels: &[f32]) -> locality::Result<Vec<Vec<f64>>> {
    let x = Tensor::new(vec![1, 3, 32, 32], pixels.iter().map(|&v| f64::from(v)).collect())?;
    let mut tape = Tape::new();
    let xi = tape.input(x);
    let w = tape.param(0, &net.params[0].1);
    let b = tape.param(1, &net.params[1].1);
    let y = tape.conv2d(xi, w, Some(b), 1, 2)?;
    let maps: Vec<&[f64]> = tape.value(y).chunks(32 * 32).collect();
    gram_matrix(&maps)
}

/// Largest absolute change of the channel Gram and of the feature Gram
/// between the image and its `label` scramble.
pub fn run_example(label: &str) -> locality::Result<(f64, f64)> {
    let bytes: Vec<u8> = (0..PIXELS).map(|i| (((i % 32) * 8) ^ ((i / 32 % 32) * 5)) as u8).collect();
    let image = LabeledImage::from_bytes(&bytes, 0);
    let map = build_permutation(&ScrambleSpec::from_label(label)?)?;
    let scrambled = map.apply(&image.pixels)?;
    let diff = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };
    let channel = diff(&channel_gram(&image.pixels)?, &channel_gram(&scrambled)?);
    let net = Network::<f64>::init(NetworkSpec::three_conv_net(10), 3);
    let feature = diff(&feature_gram(&net, &image.pixels)?, &feature_gram(&net, &scrambled)?);
    println!("{label}: channel Gram change {channel:.3e}, first-layer feature Gram change {feature:.3e}");
    Ok((channel, feature))
}

#[allow(dead_code)]
fn main() -> locality::Result<()> {
    for label in ["td1", "td4", "s5", "bu1"] {
        run_example(label)?;
    }
    Ok(())
}
