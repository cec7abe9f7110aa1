//! Trains ThreeConvNet on one scrambling condition and evaluates it.
//! With `CIFAR10_DIR` set this is a desk-preset cell; without it, a tiny
//! run on generated images that only shows the flow.

use std::path::Path;

use locality::data::{load_cifar10_subset, LabeledImage, Task, PIXELS};
use locality::models::NetworkName;
use locality::runner::{run_cell, CellData, ExperimentConfig, Preset, RunRecord};
use locality::scramble::ScrambleSpec;

fn stand_in(n: usize, offset: usize) -> Vec<LabeledImage> {
    (0..n)
        .map(|i| {
            let class = ((i + offset) % 10) as u8;
            let bytes: Vec<u8> = (0..PIXELS)
                .map(|p| if p < PIXELS / 3 { class * 25 } else { ((p * 13 + i * 5) % 256) as u8 })
                .collect();
            LabeledImage::from_bytes(&bytes, class)
        })
        .collect()
}

pub fn run_example(cifar: Option<&Path>, scramble: &str, epochs: Option<usize>) -> locality::Result<RunRecord> {
    let mut cfg = ExperimentConfig::new(
        Task::ObjectRecognition,
        NetworkName::ThreeConvNet,
        ScrambleSpec::from_label(scramble)?,
        1,
        Preset::Desk,
    );
    let data = match cifar {
        Some(dir) => {
            let (train, test) = load_cifar10_subset(dir, cfg.train_limit, cfg.test_limit)?;
            CellData { train, test }
        }
        None => CellData {
            train: stand_in(128, 0),
            test: stand_in(40, 3),
        },
    };
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    let record = run_cell(&cfg, &data, None)?;
    println!("{}: loss {:?}", record.cell_id, record.loss_curve);
    println!("test accuracy {:.3}", record.metric_iid.unwrap_or(f64::NAN));
    for (label, acc) in &record.metric_ood {
        println!("  tested on {label}: {acc:.3}");
    }
    Ok(record)
}

#[allow(dead_code)]
fn main() -> locality::Result<()> {
    let cifar = std::env::var_os("CIFAR10_DIR").map(std::path::PathBuf::from);
    let epochs = if cifar.is_some() { None } else { Some(2) };
    run_example(cifar.as_deref(), "s0", epochs)?;
    Ok(())
}
