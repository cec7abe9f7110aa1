//! Training and evaluation of single grid cells, and the resumable grid.

mod grid;
mod record;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{checkpoint, LrSchedule, Sgd, SgdConfig, Tape, Tensor};
use crate::data::{
    augment, batch_rng, make_task_dataset_with, normalize, AugmentConfig, LabeledImage, Split, Task, TaskDataset,
    PIXELS,
};
use crate::error::{Error, Result};
use crate::models::{init_seed, Network, NetworkName, NetworkSpec};
use crate::scramble::{build_permutation, ScrambleSpec, DEFAULT_SEED, DEFAULT_SIDE};

pub use grid::{run_grid, GridReport, GridSpec};
pub use record::{aggregate_rows, write_aggregate_csv, AggregateRow, CellStatus, RecordStore, RunRecord, SCHEMA_VERSION};

pub const BATCH_SIZE: usize = 64;
pub const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Full data and schedule.
    Paper,
    /// 10k train / 2k test images, 20 epochs (10 for color).
    Desk,
}

impl Preset {
    pub fn limits(self) -> (usize, usize) {
        match self {
            Preset::Paper => (50_000, 10_000),
            Preset::Desk => (10_000, 2_000),
        }
    }

    pub fn epochs(self, task: Task) -> usize {
        match (self, task) {
            (Preset::Paper, t) => t.full_epochs(),
            (Preset::Desk, Task::ColorEstimation) => 10,
            (Preset::Desk, _) => 20,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            _ => Err(Error::Config(format!("unknown preset `{s}`"))),
        }
    }
}

/// One {task × network × scramble × run-id} cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub task: Task,
    pub network: NetworkName,
    pub scramble: ScrambleSpec,
    pub run_id: u32,
    pub preset: Preset,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_network_adjustment: f64,
    pub dataset_learning_factor: f64,
    pub train_limit: usize,
    pub test_limit: usize,
    pub augment: AugmentConfig,
    pub sgd: SgdConfig,
}

impl ExperimentConfig {
    pub fn new(task: Task, network: NetworkName, scramble: ScrambleSpec, run_id: u32, preset: Preset) -> Self {
        let (train_limit, test_limit) = preset.limits();
        Self {
            task,
            network,
            scramble,
            run_id,
            preset,
            epochs: preset.epochs(task),
            batch_size: BATCH_SIZE,
            lr_network_adjustment: network.lr_adjustment(),
            dataset_learning_factor: task.dataset_learning_factor(),
            train_limit,
            test_limit,
            augment: AugmentConfig::default(),
            sgd: SgdConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scramble.validate()?;
        self.augment.validate()?;
        self.sgd.validate()?;
        if self.scramble.image_side != DEFAULT_SIDE {
            return Err(Error::Config(format!("images are {DEFAULT_SIDE}×{DEFAULT_SIDE}")));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.run_id == 0 {
            return Err(Error::Config("run ids start at 1".into()));
        }
        Ok(())
    }

    pub fn base_lr(&self) -> f64 {
        0.1 * self.lr_network_adjustment * self.dataset_learning_factor
    }

    pub fn schedule(&self) -> Result<LrSchedule> {
        LrSchedule::new(self.base_lr(), self.epochs)
    }

    /// `object_vgg11_td2_r1`.
    pub fn cell_id(&self) -> String {
        format!("{}_{}_{}_r{}", self.task, self.network, self.scramble.label(), self.run_id)
    }

    pub fn metric(&self) -> Metric {
        if self.task.is_classification() {
            Metric::Accuracy
        } else {
            Metric::Mse
        }
    }

    /// Shuffling and augmentation seed. Depends on the run only, so all
    /// scrambling conditions of a run see the same batches.
    pub fn data_seed(&self) -> u64 {
        init_seed(self.network, self.task.output_dim(), self.run_id) ^ DEFAULT_SEED
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Mse,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Accuracy => "accuracy",
            Metric::Mse => "mse",
        })
    }
}

/// Anything that maps a normalized `[batch, 3, 32, 32]` tensor to outputs.
pub trait Predictor {
    fn output_dim(&self) -> usize;
    fn predict_batch(&self, images: Tensor<f32>) -> Result<Vec<f32>>;
}

impl Predictor for Network<f32> {
    fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    fn predict_batch(&self, images: Tensor<f32>) -> Result<Vec<f32>> {
        self.predict(images)
    }
}

/// Raw (unscrambled) images of one task.
#[derive(Debug, Clone, Default)]
pub struct CellData {
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
}

fn stack(images: &[&LabeledImage], mut transform: impl FnMut(&LabeledImage, usize) -> Vec<f32>) -> Tensor<f32> {
    let mut data = Vec::with_capacity(images.len() * PIXELS);
    for (i, img) in images.iter().enumerate() {
        data.extend(transform(img, i));
    }
    Tensor::new(vec![images.len(), 3, DEFAULT_SIDE, DEFAULT_SIDE], data).expect("image batch shape")
}

fn normalized(img: &LabeledImage, cfg: &AugmentConfig) -> Vec<f32> {
    let mut px = img.pixels.clone();
    normalize(&mut px, cfg);
    px
}

/// Accuracy (fraction of argmax hits) or mean squared error over every
/// output element, on normalized but otherwise untouched test images.
pub fn evaluate(model: &dyn Predictor, dataset: &TaskDataset, metric: Metric, norm: &AugmentConfig) -> Result<f64> {
    let expected = if dataset.task.is_classification() {
        Metric::Accuracy
    } else {
        Metric::Mse
    };
    if metric != expected {
        return Err(Error::MetricMismatch {
            metric: metric.to_string(),
            task: dataset.task.to_string(),
        });
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = model.output_dim();
    let mut total = 0.0f64;
    for chunk in dataset.items.chunks(EVAL_BATCH) {
        let refs: Vec<_> = chunk.iter().collect();
        let out = model.predict_batch(stack(&refs, |img, _| normalized(img, norm)))?;
        if out.len() != chunk.len() * dim {
            return Err(Error::SizeMismatch {
                expected: chunk.len() * dim,
                actual: out.len(),
            });
        }
        for (row, img) in out.chunks_exact(dim).zip(chunk) {
            total += match metric {
                Metric::Accuracy => {
                    let best = row
                        .iter()
                        .enumerate()
                        .fold((0, f32::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
                        .0;
                    f64::from(u8::from(best == img.class_label as usize))
                }
                Metric::Mse => {
                    row.iter()
                        .zip(&img.color_label)
                        .map(|(&p, &t)| (f64::from(p) - t).powi(2))
                        .sum::<f64>()
                        / dim as f64
                }
            };
        }
    }
    Ok(total / dataset.len() as f64)
}

type SlotGrads = Vec<(usize, Vec<f32>)>;

fn batch_loss(net: &Network<f32>, x: Tensor<f32>, batch: &[&LabeledImage], task: Task, grads: bool) -> Result<(f64, Option<SlotGrads>)> {
    let mut tape = Tape::new();
    let x = tape.input(x);
    let y = net.forward(&mut tape, x)?;
    let loss = if task.is_classification() {
        let targets: Vec<usize> = batch.iter().map(|i| i.class_label as usize).collect();
        tape.cross_entropy(y, &targets)?
    } else {
        let targets: Vec<f32> = batch.iter().flat_map(|i| i.color_label.map(|v| v as f32)).collect();
        tape.mse(y, &targets)?
    };
    let value = f64::from(tape.scalar(loss));
    let grads = if grads { Some(tape.backward(loss)?.into_params()) } else { None };
    Ok((value, grads))
}

/// Mean loss over a dataset with test-time preprocessing.
pub fn dataset_loss(net: &Network<f32>, dataset: &TaskDataset, norm: &AugmentConfig) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for chunk in dataset.items.chunks(EVAL_BATCH) {
        let refs: Vec<_> = chunk.iter().collect();
        let (loss, _) = batch_loss(net, stack(&refs, |img, _| normalized(img, norm)), &refs, dataset.task, false)?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / dataset.len() as f64)
}

/// Outcome of [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Entry 0 is the loss before training; entry `e` the mean batch loss
    /// of epoch `e`.
    pub loss_curve: Vec<f64>,
    pub steps: usize,
    pub diverged: Option<(usize, f64)>,
}

/// Trains `net` in place with the cell's recipe on an already scrambled
/// training set.
pub fn train(net: &mut Network<f32>, train_set: &TaskDataset, config: &ExperimentConfig) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut opt = Sgd::new(config.sgd);
    let seed = config.data_seed();
    let mut outcome = TrainOutcome {
        loss_curve: vec![dataset_loss(net, train_set, &config.augment)?],
        steps: 0,
        diverged: None,
    };
    if config.epochs == 0 {
        return Ok(outcome);
    }
    let schedule = config.schedule()?;
    for epoch in 0..config.epochs {
        let lr = schedule.lr_at(epoch)?;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut batch_rng(seed, epoch, u32::MAX as usize));
        let mut total = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&LabeledImage> = idx.iter().map(|&i| &train_set.items[i]).collect();
            let mut rng = batch_rng(seed, epoch, b);
            let x = stack(&batch, |img, _| {
                let mut px = augment(&img.pixels, &config.augment, &mut rng);
                normalize(&mut px, &config.augment);
                px
            });
            let (loss, grads) = batch_loss(net, x, &batch, config.task, true)?;
            if !loss.is_finite() {
                outcome.diverged = Some((epoch + 1, loss));
                return Ok(outcome);
            }
            net.set_grads(grads.expect("requested"));
            opt.step(&mut net.params, lr)?;
            outcome.steps += 1;
            total += loss * batch.len() as f64;
        }
        let mean = total / train_set.len() as f64;
        log::info!("{} epoch {}/{}: loss {mean:.5} lr {lr}", config.cell_id(), epoch + 1, config.epochs);
        outcome.loss_curve.push(mean);
    }
    Ok(outcome)
}

/// Initial weights of `(network, output_dim, run_id)`: loaded from the
/// store when present, otherwise built and saved there.
pub fn initial_network(config: &ExperimentConfig, store: Option<&RecordStore>) -> Result<Network<f32>> {
    let spec = NetworkSpec::build(config.network, config.task.output_dim())?;
    let Some(store) = store else {
        return Ok(Network::init_matched(spec, config.run_id));
    };
    let path = store.init_path(config.network, config.task.output_dim(), config.run_id);
    if path.exists() {
        return Network::from_params(spec, checkpoint::load(&path)?);
    }
    let net = Network::init_matched(spec, config.run_id);
    store.write_checkpoint(&path, &net.params)?;
    Ok(net)
}

/// Trains and evaluates one cell. An S₀ cell is also tested at every
/// scrambling level. With a store, the final weights and the record are
/// persisted.
pub fn run_cell(config: &ExperimentConfig, data: &CellData, store: Option<&RecordStore>) -> Result<RunRecord> {
    config.validate()?;
    let started = Instant::now();
    let mut net = initial_network(config, store)?;
    let init_hash = net.checkpoint_hash();
    let map = build_permutation(&config.scramble)?;
    let n_train = data.train.len().min(config.train_limit);
    let n_test = data.test.len().min(config.test_limit);
    let train_set = make_task_dataset_with(config.task, Split::Train, &data.train[..n_train], config.scramble, &map)?;
    let outcome = train(&mut net, &train_set, config)?;

    let mut record = RunRecord {
        schema_version: SCHEMA_VERSION,
        cell_id: config.cell_id(),
        config: config.clone(),
        metric: config.metric(),
        loss_curve: outcome.loss_curve,
        steps: outcome.steps,
        metric_iid: None,
        metric_ood: BTreeMap::new(),
        init_hash,
        final_hash: net.checkpoint_hash(),
        checkpoint: None,
        seconds: 0.0,
        status: CellStatus::Completed,
    };
    if let Some((epoch, loss)) = outcome.diverged {
        log::warn!("{} diverged in epoch {epoch}", config.cell_id());
        record.status = CellStatus::Diverged {
            epoch,
            loss: loss.to_string(),
        };
    } else {
        let test_set = make_task_dataset_with(config.task, Split::Test, &data.test[..n_test], config.scramble, &map)?;
        record.metric_iid = Some(evaluate(&net, &test_set, config.metric(), &config.augment)?);
        if config.scramble.level == 0 {
            for spec in ScrambleSpec::all_conditions(config.scramble.image_side, config.scramble.seed) {
                let ood_map = build_permutation(&spec)?;
                let set = make_task_dataset_with(config.task, Split::Test, &data.test[..n_test], spec, &ood_map)?;
                record.metric_ood.insert(spec.label(), evaluate(&net, &set, config.metric(), &config.augment)?);
            }
        }
    }
    record.seconds = started.elapsed().as_secs_f64();
    if let Some(store) = store {
        let path = store.checkpoint_path(&record.cell_id);
        store.write_checkpoint(&path, &net.params)?;
        record.checkpoint = Some(path_string(&path));
        store.write(&record)?;
    }
    Ok(record)
}

fn path_string(p: &std::path::Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Where a cell's data come from.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DataPaths {
    pub cifar_dir: Option<PathBuf>,
    pub stylized_dir: Option<PathBuf>,
    pub texture_dir: Option<PathBuf>,
}

impl DataPaths {
    pub fn load(&self, task: Task, train_limit: usize, test_limit: usize) -> Result<CellData> {
        let generated = match task {
            Task::StylizedObjectRecognition => self.stylized_dir.as_deref(),
            Task::TexturePerception => self.texture_dir.as_deref(),
            _ => None,
        };
        let (train, test) =
            crate::data::load_task_images(task, self.cifar_dir.as_deref(), generated, train_limit, test_limit)?;
        Ok(CellData { train, test })
    }
}
