use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::{checkpoint, Tensor};
use crate::error::{Error, Result};
use crate::models::NetworkName;

use super::{ExperimentConfig, Metric};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum CellStatus {
    Completed,
    /// `loss` is the offending value as text (`NaN`, `inf`).
    Diverged { epoch: usize, loss: String },
}

/// Persisted outcome of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub cell_id: String,
    pub config: ExperimentConfig,
    pub metric: Metric,
    /// Loss before training, then the mean loss of every epoch.
    pub loss_curve: Vec<f64>,
    pub steps: usize,
    /// Final-epoch metric on the test set with the training scramble.
    pub metric_iid: Option<f64>,
    /// S₀ cells only: final metric on the test set at every scramble label.
    pub metric_ood: BTreeMap<String, f64>,
    pub init_hash: String,
    pub final_hash: String,
    pub checkpoint: Option<String>,
    pub seconds: f64,
    pub status: CellStatus,
}

impl RunRecord {
    pub fn is_completed(&self) -> bool {
        self.status == CellStatus::Completed
    }
}

/// Directory of records (`records/<cell>.json`), final checkpoints
/// (`checkpoints/<cell>.lckp`) and shared initial weights (`init/`).
#[derive(Debug, Clone)]
pub struct RecordStore {
    root: PathBuf,
}

impl RecordStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["records", "checkpoints", "init"] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn record_path(&self, cell_id: &str) -> PathBuf {
        self.root.join("records").join(format!("{cell_id}.json"))
    }

    pub fn checkpoint_path(&self, cell_id: &str) -> PathBuf {
        self.root.join("checkpoints").join(format!("{cell_id}.lckp"))
    }

    pub fn init_path(&self, network: NetworkName, output_dim: usize, run_id: u32) -> PathBuf {
        self.root.join("init").join(format!("{network}_{output_dim}_r{run_id}.lckp"))
    }

    pub fn contains(&self, cell_id: &str) -> bool {
        self.record_path(cell_id).exists()
    }

    /// Writes a record once; an existing record is never replaced.
    pub fn write(&self, record: &RunRecord) -> Result<()> {
        let path = self.record_path(&record.cell_id);
        if path.exists() {
            return Err(Error::Config(format!("record {} already exists", path.display())));
        }
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(record)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn write_checkpoint(&self, path: &Path, params: &[(String, Tensor<f32>)]) -> Result<()> {
        let tmp = path.with_extension("lckp.tmp");
        checkpoint::save(&tmp, params)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn read(&self, cell_id: &str) -> Result<RunRecord> {
        let path = self.record_path(cell_id);
        if !path.exists() {
            return Err(Error::Missing(path));
        }
        let record: RunRecord = serde_json::from_slice(&fs::read(&path)?)?;
        if record.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaMismatch(SCHEMA_VERSION, record.schema_version));
        }
        Ok(record)
    }

    /// Every record in the store, sorted by cell id.
    pub fn read_all(&self) -> Result<Vec<RunRecord>> {
        let mut ids: Vec<String> = fs::read_dir(self.root.join("records"))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".json").map(str::to_owned)
            })
            .collect();
        ids.sort();
        ids.iter().map(|id| self.read(id)).collect()
    }
}

/// One line of the aggregate CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub task: String,
    pub network: String,
    pub scheme: String,
    pub level: u8,
    pub run_id: u32,
    pub metric_iid: Option<f64>,
    /// Metric of the S₀-trained model of the same run on this cell's test
    /// scramble.
    pub metric_ood: Option<f64>,
    pub seconds: f64,
}

pub fn aggregate_rows(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut ood: BTreeMap<(String, String, u32), &BTreeMap<String, f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.config.scramble.level == 0) {
        ood.insert(
            (r.config.task.to_string(), r.config.network.to_string(), r.config.run_id),
            &r.metric_ood,
        );
    }
    records
        .iter()
        .map(|r| {
            let c = &r.config;
            let key = (c.task.to_string(), c.network.to_string(), c.run_id);
            AggregateRow {
                task: key.0.clone(),
                network: key.1.clone(),
                scheme: c.scramble.scheme.as_str().to_string(),
                level: c.scramble.level,
                run_id: c.run_id,
                metric_iid: r.metric_iid,
                metric_ood: ood.get(&key).and_then(|m| m.get(&c.scramble.label()).copied()),
                seconds: r.seconds,
            }
        })
        .collect()
}

pub fn write_aggregate_csv(records: &[RunRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in aggregate_rows(records) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
