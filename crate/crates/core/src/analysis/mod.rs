//! Aggregation of run records, result plots, filter grids, and Gram
//! matrices.

mod filters;
mod plot;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::{Task, CHANNELS};
use crate::error::{Error, Result};
use crate::models::NetworkName;
use crate::runner::{aggregate_rows, Metric, RunRecord};
use crate::scramble::ScrambleSpec;

pub use filters::{export_filters, filter_grid, grid_side};
pub use plot::emit_plots;

/// Mean and population standard deviation of one condition over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub task: Task,
    pub network: NetworkName,
    pub scramble: ScrambleSpec,
    pub metric: Metric,
    pub runs: usize,
    pub iid_mean: f64,
    pub iid_std: f64,
    pub ood_runs: usize,
    pub ood_mean: Option<f64>,
    pub ood_std: Option<f64>,
    pub seconds_mean: f64,
}

/// Population mean and standard deviation, accumulated in `f64`.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.max(0.0).sqrt()))
}

/// Groups records by (task, network, scramble). Runs that diverged carry
/// no metric; a condition without any metric is dropped with a warning.
/// Output is sorted by task, network and plot-axis position.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<ConditionSummary>> {
    if let Some(first) = records.first() {
        if let Some(other) = records.iter().find(|r| r.schema_version != first.schema_version) {
            return Err(Error::SchemaMismatch(first.schema_version, other.schema_version));
        }
    }
    type Key = (Task, NetworkName, usize);
    let rows = aggregate_rows(records);
    // scramble, metric, then iid, ood and seconds per run
    type Group = (ScrambleSpec, Metric, Vec<f64>, Vec<f64>, Vec<f64>);
    let mut groups: BTreeMap<Key, Group> = BTreeMap::new();
    for (record, row) in records.iter().zip(rows) {
        let c = &record.config;
        let entry = groups
            .entry((c.task, c.network, c.scramble.axis_position()))
            .or_insert_with(|| (c.scramble, record.metric, Vec::new(), Vec::new(), Vec::new()));
        if let Some(v) = row.metric_iid {
            entry.2.push(v);
            entry.4.push(row.seconds);
        }
        if let Some(v) = row.metric_ood {
            entry.3.push(v);
        }
    }
    let mut out = Vec::new();
    for ((task, network, _), (scramble, metric, iid, ood, secs)) in groups {
        let Some((iid_mean, iid_std)) = mean_std(&iid) else {
            log::warn!("no completed runs for {task}/{network}/{}; condition omitted", scramble.label());
            continue;
        };
        let ood_stats = mean_std(&ood);
        out.push(ConditionSummary {
            task,
            network,
            scramble,
            metric,
            runs: iid.len(),
            iid_mean,
            iid_std,
            ood_runs: ood.len(),
            ood_mean: ood_stats.map(|s| s.0),
            ood_std: ood_stats.map(|s| s.1),
            seconds_mean: mean_std(&secs).map_or(0.0, |s| s.0),
        });
    }
    Ok(out)
}

/// CSV line of a summary: the aggregate columns with mean and population
/// std in place of the per-run values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: String,
    pub network: String,
    pub scheme: String,
    pub level: u8,
    pub runs: usize,
    pub metric_iid_mean: f64,
    pub metric_iid_std: f64,
    pub ood_runs: usize,
    pub metric_ood_mean: Option<f64>,
    pub metric_ood_std: Option<f64>,
    pub seconds: f64,
}

impl From<&ConditionSummary> for SummaryRow {
    fn from(s: &ConditionSummary) -> Self {
        Self {
            task: s.task.to_string(),
            network: s.network.to_string(),
            scheme: s.scramble.scheme.as_str().to_string(),
            level: s.scramble.level,
            runs: s.runs,
            metric_iid_mean: s.iid_mean,
            metric_iid_std: s.iid_std,
            ood_runs: s.ood_runs,
            metric_ood_mean: s.ood_mean,
            metric_ood_std: s.ood_std,
            seconds: s.seconds_mean,
        }
    }
}

pub fn write_summary_csv(summaries: &[ConditionSummary], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in summaries {
        w.serialize(SummaryRow::from(s))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(input: impl Read) -> Result<Vec<SummaryRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// `G[i][j] = ⟨φᵢ, φⱼ⟩` over flattened feature maps.
pub fn gram_matrix(maps: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    if let Some(first) = maps.first() {
        if let Some(bad) = maps.iter().find(|m| m.len() != first.len()) {
            return Err(Error::SizeMismatch {
                expected: first.len(),
                actual: bad.len(),
            });
        }
    }
    let n = maps.len();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let dot: f64 = maps[i].iter().zip(maps[j]).map(|(a, b)| a * b).sum();
            g[i][j] = dot;
            g[j][i] = dot;
        }
    }
    Ok(g)
}

/// Gram matrix of an image's color channels (each channel one map).
pub fn channel_gram(pixels: &[f32]) -> Result<Vec<Vec<f64>>> {
    let plane = pixels.len() / CHANNELS;
    let maps: Vec<Vec<f64>> = pixels.chunks_exact(plane).map(|c| c.iter().map(|&v| f64::from(v)).collect()).collect();
    let refs: Vec<&[f64]> = maps.iter().map(Vec::as_slice).collect();
    gram_matrix(&refs)
}
