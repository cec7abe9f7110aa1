use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::data::Task;
use crate::error::{Error, Result};
use crate::models::NetworkName;
use crate::scramble::{ScrambleSpec, DEFAULT_SEED, DEFAULT_SIDE};

use super::{run_cell, CellData, DataPaths, ExperimentConfig, Preset, RecordStore, RunRecord};

/// Grid file, e.g.
///
/// ```toml
/// out_dir = "runs/object"
/// preset = "desk"
/// tasks = ["object"]
/// networks = ["three_conv_net", "shallow_fc"]
/// scrambles = ["s0", "td2", "s5"]   # omit for all ten conditions
/// run_ids = [1, 2, 3]
///
/// [data]
/// cifar_dir = "/data/cifar-10-batches-bin"
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub out_dir: PathBuf,
    pub preset: Preset,
    pub tasks: Vec<Task>,
    pub networks: Vec<NetworkName>,
    #[serde(default)]
    pub scrambles: Option<Vec<String>>,
    pub run_ids: Vec<u32>,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
    #[serde(default)]
    pub scramble_seed: Option<u64>,
    #[serde(default)]
    pub data: DataPaths,
}

impl GridSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Relative paths resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        let mut spec = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut spec.out_dir);
        for p in [&mut spec.data.cifar_dir, &mut spec.data.stylized_dir, &mut spec.data.texture_dir]
            .into_iter()
            .flatten()
        {
            resolve(p);
        }
        Ok(spec)
    }

    /// Cells in task, network, run, plot-axis order.
    pub fn cells(&self) -> Result<Vec<ExperimentConfig>> {
        let seed = self.scramble_seed.unwrap_or(DEFAULT_SEED);
        let scrambles = match &self.scrambles {
            None => ScrambleSpec::all_conditions(DEFAULT_SIDE, seed),
            Some(labels) => labels
                .iter()
                .map(|l| {
                    let mut s = ScrambleSpec::from_label(l)?;
                    s.seed = seed;
                    Ok(s)
                })
                .collect::<Result<_>>()?,
        };
        let mut cells = Vec::new();
        for &task in &self.tasks {
            for &network in &self.networks {
                for &run_id in &self.run_ids {
                    for &scramble in &scrambles {
                        let mut cfg = ExperimentConfig::new(task, network, scramble, run_id, self.preset);
                        if let Some(e) = self.epochs {
                            cfg.epochs = e;
                        }
                        if let Some(n) = self.train_limit {
                            cfg.train_limit = n;
                        }
                        if let Some(n) = self.test_limit {
                            cfg.test_limit = n;
                        }
                        cfg.validate()?;
                        cells.push(cfg);
                    }
                }
            }
        }
        Ok(cells)
    }
}

#[derive(Debug, Default)]
pub struct GridReport {
    /// Records of every cell, freshly trained or loaded, in cell order.
    pub records: Vec<RunRecord>,
    pub trained: usize,
    pub skipped: usize,
    /// Cell ids that diverged or errored, with the reason.
    pub failed: Vec<(String, String)>,
}

/// Runs every cell without a record in `store`. `load` is called at most
/// once per task, and only if some cell of that task still needs training.
pub fn run_grid(
    cells: &[ExperimentConfig],
    store: &RecordStore,
    mut load: impl FnMut(Task) -> Result<CellData>,
) -> Result<GridReport> {
    let mut report = GridReport::default();
    let mut cache: HashMap<Task, CellData> = HashMap::new();
    for cfg in cells {
        let id = cfg.cell_id();
        if store.contains(&id) {
            let record = store.read(&id)?;
            if let super::CellStatus::Diverged { epoch, .. } = record.status {
                report.failed.push((id, format!("diverged in epoch {epoch}")));
            }
            report.skipped += 1;
            report.records.push(record);
            continue;
        }
        if let std::collections::hash_map::Entry::Vacant(slot) = cache.entry(cfg.task) {
            slot.insert(load(cfg.task)?);
        }
        log::info!("training {id}");
        match run_cell(cfg, &cache[&cfg.task], Some(store)) {
            Ok(record) => {
                if let super::CellStatus::Diverged { epoch, .. } = record.status {
                    report.failed.push((id, format!("diverged in epoch {epoch}")));
                }
                report.trained += 1;
                report.records.push(record);
            }
            Err(e) => {
                log::error!("{id} failed: {e}");
                report.failed.push((id, e.to_string()));
            }
        }
    }
    Ok(report)
}
