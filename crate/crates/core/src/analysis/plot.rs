use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::data::Task;
use crate::error::{Error, Result};
use crate::scramble::{ScrambleSpec, DEFAULT_SEED, DEFAULT_SIDE};

use super::{write_summary_csv, ConditionSummary};

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Writes `<task>.svg` per task (solid: i.i.d., dashed: S₀-trained model on
/// scrambled test sets, bars: ±1 population std) and `summary.csv`.
/// Returns the written paths, CSV last.
pub fn emit_plots(summaries: &[ConditionSummary], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut by_task: BTreeMap<Task, Vec<&ConditionSummary>> = BTreeMap::new();
    for s in summaries {
        by_task.entry(s.task).or_default().push(s);
    }
    let ticks: Vec<String> = ScrambleSpec::all_conditions(DEFAULT_SIDE, DEFAULT_SEED)
        .iter()
        .map(|s| s.label().to_uppercase())
        .collect();
    for (task, items) in by_task {
        let path = out_dir.join(format!("{task}.svg"));
        draw_task(task, &items, &ticks, &path).map_err(plot_err)?;
        written.push(path);
    }
    let csv_path = out_dir.join("summary.csv");
    write_summary_csv(summaries, fs::File::create(&csv_path)?)?;
    written.push(csv_path);
    Ok(written)
}

fn draw_task(
    task: Task,
    items: &[&ConditionSummary],
    ticks: &[String],
    path: &Path,
) -> std::result::Result<(), Box<dyn std::error::Error>> {
    let classification = task.is_classification();
    let top = if classification {
        1.0
    } else {
        items
            .iter()
            .flat_map(|s| [s.iid_mean + s.iid_std, s.ood_mean.unwrap_or(0.0) + s.ood_std.unwrap_or(0.0)])
            .fold(0.0f64, f64::max)
            .max(1e-6)
            * 1.1
    };
    let caption = if classification {
        format!("{task}: accuracy")
    } else {
        format!("{task}: MSE (lower is better)")
    };
    let root = SVGBackend::new(path, (900, 520)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(-0.5f64..9.5f64, 0.0f64..top)?;
    let labels = ticks.to_vec();
    chart
        .configure_mesh()
        .x_labels(10)
        .x_label_formatter(&move |x| {
            let i = x.round();
            if (x - i).abs() < 1e-6 && (0.0..10.0).contains(&i) {
                labels[i as usize].clone()
            } else {
                String::new()
            }
        })
        .y_desc(if classification { "accuracy" } else { "MSE, lower is better" })
        .draw()?;

    let mut by_net: BTreeMap<_, Vec<&ConditionSummary>> = BTreeMap::new();
    for s in items {
        by_net.entry(s.network).or_default().push(*s);
    }
    for (i, (network, mut rows)) in by_net.into_iter().enumerate() {
        rows.sort_by_key(|s| s.scramble.axis_position());
        let color = Palette99::pick(i).to_rgba();
        let iid: Vec<(f64, f64)> = rows.iter().map(|s| (s.scramble.axis_position() as f64, s.iid_mean)).collect();
        chart
            .draw_series(LineSeries::new(iid.clone(), color.stroke_width(2)))?
            .label(network.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        chart.draw_series(iid.iter().map(|&p| Circle::new(p, 3, color.filled())))?;
        chart.draw_series(rows.iter().map(|s| {
            let x = s.scramble.axis_position() as f64;
            ErrorBar::new_vertical(x, s.iid_mean - s.iid_std, s.iid_mean, s.iid_mean + s.iid_std, color, 6)
        }))?;
        let ood: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|s| Some((s.scramble.axis_position() as f64, s.ood_mean?)))
            .collect();
        if !ood.is_empty() {
            chart.draw_series(DashedLineSeries::new(ood, 6, 4, color.stroke_width(2)))?;
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}
