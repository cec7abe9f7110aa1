//! Runs a small grid into a record store, then aggregates the records into
//! the per-condition summary CSV and one SVG plot per task.
//!
//! Generated colour-coded images stand in for CIFAR-10 here, so the numbers
//! only show the shape of the output.

use std::path::{Path, PathBuf};

use locality::analysis::{aggregate, emit_plots};
use locality::data::{LabeledImage, Task, PIXELS};
use locality::models::NetworkName;
use locality::runner::{run_grid, write_aggregate_csv, CellData, ExperimentConfig, Preset, RecordStore};
use locality::scramble::ScrambleSpec;

fn stand_in(n: usize, offset: usize) -> Vec<LabeledImage> {
    (0..n)
        .map(|i| {
            let class = ((i * 7 + offset) % 10) as u8;
            let bytes: Vec<u8> = (0..PIXELS)
                .map(|p| if p < PIXELS / 3 { class * 25 } else { ((p * 17 + i * 3) % 256) as u8 })
                .collect();
            LabeledImage::from_bytes(&bytes, class)
        })
        .collect()
}

pub fn run_example(out: &Path) -> locality::Result<Vec<PathBuf>> {
    let store = RecordStore::open(out.join("runs"))?;
    let mut cells = Vec::new();
    for task in [Task::ObjectRecognition, Task::ColorEstimation] {
        for run_id in [1, 2] {
            for label in ["s0", "td1", "s5", "bu1"] {
                let mut c = ExperimentConfig::new(task, NetworkName::ThreeConvNet, ScrambleSpec::from_label(label)?, run_id, Preset::Desk);
                c.epochs = 1;
                cells.push(c);
            }
        }
    }
    let data = CellData {
        train: stand_in(64, 0),
        test: stand_in(30, 1),
    };
    let report = run_grid(&cells, &store, |_| Ok(data.clone()))?;
    println!("trained {}, skipped {}, failed {}", report.trained, report.skipped, report.failed.len());
    write_aggregate_csv(&report.records, std::fs::File::create(out.join("aggregate.csv"))?)?;
    let summaries = aggregate(&report.records)?;
    for s in &summaries {
        println!(
            "{:<6} {:<4} {} runs  {} {:.4} ± {:.4}",
            s.task.as_str(),
            s.scramble.label(),
            s.runs,
            s.metric,
            s.iid_mean,
            s.iid_std
        );
    }
    emit_plots(&summaries, &out.join("plots"))
}

#[allow(dead_code)]
fn main() -> locality::Result<()> {
    for path in run_example(Path::new("aggregate_demo"))? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
