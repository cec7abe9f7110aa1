//! Trains the Toeplitz network and prints the first layer's nonlocal norm
//! per epoch. Uses CIFAR-10 from `CIFAR10_DIR` if set; otherwise a short
//! run on generated colour-coded images, which only exercises the
//! machinery.

use std::path::Path;

use locality::data::{load_cifar10_subset, LabeledImage, PIXELS};
use locality::nonlocal::{run_nonlocal_experiment, NonlocalConfig, NonlocalRun};

fn stand_in(n: usize) -> Vec<LabeledImage> {
    (0..n)
        .map(|i| {
            let class = (i % 10) as u8;
            let bytes: Vec<u8> = (0..PIXELS)
                .map(|p| if p < PIXELS / 3 { class * 25 } else { ((p * 31 + i * 7) % 256) as u8 })
                .collect();
            LabeledImage::from_bytes(&bytes, class)
        })
        .collect()
}

pub fn run_example(cifar: Option<&Path>, images: usize, epochs: usize, out: &Path) -> locality::Result<NonlocalRun> {
    let train = match cifar {
        Some(dir) => load_cifar10_subset(dir, images, 0)?.0,
        None => stand_in(images),
    };
    let config = NonlocalConfig {
        epochs,
        ..NonlocalConfig::default()
    };
    let run = run_nonlocal_experiment(config, &train)?;
    for p in &run.points {
        println!("epoch {:>2}  norm {:.6}  loss {:.4}", p.epoch, p.nonlocal_norm, p.train_loss);
    }
    run.save_csv(out)?;
    Ok(run)
}

#[allow(dead_code)]
fn main() -> locality::Result<()> {
    let cifar = std::env::var_os("CIFAR10_DIR").map(std::path::PathBuf::from);
    let (n, epochs) = if cifar.is_some() { (10_000, 10) } else { (256, 2) };
    run_example(cifar.as_deref(), n, epochs, Path::new("nonlocal.csv"))?;
    Ok(())
}
