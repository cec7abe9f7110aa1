mod common;

use std::cell::Cell;

use common::separable_images;
use locality::analysis::{aggregate, emit_plots, read_summary_csv, SummaryRow};
use locality::autodiff::checkpoint;
use locality::data::{make_task_dataset, Split, Task};
use locality::models::{Network, NetworkName, NetworkSpec};
use locality::runner::{
    aggregate_rows, evaluate, run_cell, run_grid, write_aggregate_csv, CellData, CellStatus, ExperimentConfig,
    GridSpec, Metric, Preset, RecordStore,
};
use locality::scramble::{ScrambleSpec, DEFAULT_SEED};
use locality::Error;
use rand::seq::SliceRandom;

fn data(train: usize, test: usize) -> CellData {
    CellData {
        train: separable_images(train, 1, 10),
        test: separable_images(test, 2, 10),
    }
}

fn small(task: Task, network: NetworkName, scramble: &str, epochs: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(task, network, ScrambleSpec::from_label(scramble).unwrap(), 1, Preset::Desk);
    cfg.epochs = epochs;
    cfg.train_limit = 64;
    cfg.test_limit = 40;
    cfg
}

#[test]
fn zero_epochs_reports_the_untrained_metric() {
    let d = data(64, 40);
    let cfg = small(Task::ObjectRecognition, NetworkName::ThreeConvNet, "td2", 0);
    let record = run_cell(&cfg, &d, None).unwrap();
    assert_eq!(record.steps, 0);
    assert_eq!(record.loss_curve.len(), 1);
    assert_eq!(record.init_hash, record.final_hash);
    let net = Network::<f32>::init_matched(NetworkSpec::three_conv_net(10), 1);
    let test = make_task_dataset(Task::ObjectRecognition, Split::Test, &d.test, cfg.scramble).unwrap();
    let direct = evaluate(&net, &test, Metric::Accuracy, &cfg.augment).unwrap();
    assert_eq!(record.metric_iid, Some(direct));
    assert!((0.0..=1.0).contains(&direct));
    assert!(record.metric_ood.is_empty());
}

#[test]
fn identical_configs_give_identical_runs() {
    let d = data(96, 20);
    let cfg = small(Task::ObjectRecognition, NetworkName::ThreeConvNet, "bu3", 2);
    let a = run_cell(&cfg, &d, None).unwrap();
    let b = run_cell(&cfg, &d, None).unwrap();
    assert_eq!(a.loss_curve, b.loss_curve);
    assert_eq!(a.final_hash, b.final_hash);
    assert_eq!(a.metric_iid, b.metric_iid);
}

#[test]
fn training_lowers_the_loss() {
    let d = data(256, 20);
    let mut cfg = small(Task::ObjectRecognition, NetworkName::ThreeConvNet, "s0", 4);
    cfg.train_limit = 256;
    let record = run_cell(&cfg, &d, None).unwrap();
    assert!(record.is_completed());
    assert!(record.loss_curve.last().unwrap() < &record.loss_curve[0], "{:?}", record.loss_curve);
}

#[test]
fn color_cell_on_the_wide_network() {
    let d = data(16, 12);
    let mut cfg = small(Task::ColorEstimation, NetworkName::ShallowFc, "s0", 0);
    cfg.test_limit = 12;
    let record = run_cell(&cfg, &d, None).unwrap();
    assert_eq!(record.metric, Metric::Mse);
    assert_eq!(cfg.task.output_dim(), 3);
    let mse = record.metric_iid.unwrap();
    assert!(mse >= 0.0);
    assert_eq!(record.metric_ood.len(), 10);
    // The S₀ test set is the i.i.d. test set.
    assert_eq!(record.metric_ood["s0"], mse);
}

#[test]
fn divergence_is_recorded() {
    let d = data(64, 10);
    let mut cfg = small(Task::ColorEstimation, NetworkName::ThreeConvNet, "s0", 3);
    cfg.dataset_learning_factor = 1e8;
    let dir = tempfile::tempdir().unwrap();
    let store = RecordStore::open(dir.path()).unwrap();
    let report = run_grid(std::slice::from_ref(&cfg), &store, |_| Ok(d.clone())).unwrap();
    assert_eq!(report.failed.len(), 1);
    let record = store.read(&cfg.cell_id()).unwrap();
    assert!(matches!(record.status, CellStatus::Diverged { .. }));
    assert_eq!(record.metric_iid, None);
    // Records are immutable.
    assert!(store.write(&record).is_err());
}

#[test]
fn grid_resumes_and_shares_initial_weights() {
    let d = data(64, 20);
    let dir = tempfile::tempdir().unwrap();
    let store = RecordStore::open(dir.path()).unwrap();
    let cells = [
        small(Task::ObjectRecognition, NetworkName::ThreeConvNet, "s0", 1),
        small(Task::ObjectRecognition, NetworkName::ThreeConvNet, "td1", 1),
    ];
    run_cell(&cells[0], &d, Some(&store)).unwrap();
    let loads = Cell::new(0);
    let report = run_grid(&cells, &store, |_| {
        loads.set(loads.get() + 1);
        Ok(d.clone())
    })
    .unwrap();
    assert_eq!((report.trained, report.skipped), (1, 1));
    assert_eq!(loads.get(), 1);
    assert_eq!(report.records[0].init_hash, report.records[1].init_hash);
    let init = store.init_path(NetworkName::ThreeConvNet, 10, 1);
    assert_eq!(checkpoint::hash(&checkpoint::load::<f32>(&init).unwrap()), report.records[0].init_hash);

    let again = run_grid(&cells, &store, |_| panic!("finished grid must not load data")).unwrap();
    assert_eq!((again.trained, again.skipped), (0, 2));
    assert_eq!(again.records, report.records);

    let empty = run_grid(&[], &store, |_| panic!("no cells")).unwrap();
    assert!(empty.records.is_empty() && empty.failed.is_empty());
}

#[test]
fn aggregation_and_plots() {
    let d = data(64, 20);
    let dir = tempfile::tempdir().unwrap();
    let store = RecordStore::open(dir.path().join("runs")).unwrap();
    let mut cells = Vec::new();
    for run in [1, 2] {
        for label in ["s0", "td2", "s5", "bu1"] {
            let mut c = small(Task::ObjectRecognition, NetworkName::ThreeConvNet, label, 1);
            c.run_id = run;
            cells.push(c);
        }
    }
    let report = run_grid(&cells, &store, |_| Ok(d.clone())).unwrap();
    assert!(report.failed.is_empty());
    let records = store.read_all().unwrap();
    assert_eq!(records.len(), 8);

    let rows = aggregate_rows(&records);
    for (row, rec) in rows.iter().zip(&records) {
        let s0 = records
            .iter()
            .find(|r| r.config.scramble.level == 0 && r.config.run_id == rec.config.run_id)
            .unwrap();
        assert_eq!(row.metric_ood, Some(s0.metric_ood[&rec.config.scramble.label()]));
    }
    let mut csv = Vec::new();
    write_aggregate_csv(&records, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "task,network,scheme,level,run_id,metric_iid,metric_ood,seconds"
    );
    assert_eq!(text.lines().count(), 9);

    let summaries = aggregate(&records).unwrap();
    assert_eq!(summaries.len(), 4);
    let axis: Vec<usize> = summaries.iter().map(|s| s.scramble.axis_position()).collect();
    assert_eq!(axis, vec![0, 2, 5, 9]);
    for s in &summaries {
        assert_eq!(s.runs, 2);
        let vals: Vec<f64> = records
            .iter()
            .filter(|r| r.config.scramble == s.scramble)
            .map(|r| r.metric_iid.unwrap())
            .collect();
        let mean = (vals[0] + vals[1]) / 2.0;
        assert!((s.iid_mean - mean).abs() < 1e-15);
        assert!((s.iid_std - (vals[0] - vals[1]).abs() / 2.0).abs() < 1e-15);
    }
    let mut shuffled = records.clone();
    shuffled.shuffle(&mut common::rng(4));
    assert_eq!(aggregate(&shuffled).unwrap(), summaries);

    let out = dir.path().join("plots");
    let files = emit_plots(&summaries, &out).unwrap();
    assert_eq!(files.len(), 2);
    let svg = std::fs::read_to_string(out.join("object.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.contains("TD2") && svg.contains("three_conv_net"));
    let back = read_summary_csv(std::fs::File::open(out.join("summary.csv")).unwrap()).unwrap();
    assert_eq!(back, summaries.iter().map(SummaryRow::from).collect::<Vec<_>>());

    let mut mixed = records.clone();
    mixed[3].schema_version = 99;
    assert!(matches!(aggregate(&mixed), Err(Error::SchemaMismatch(..))));
}

#[test]
fn color_plot_says_lower_is_better() {
    let d = data(16, 8);
    let mut cfg = small(Task::ColorEstimation, NetworkName::ThreeConvNet, "s0", 0);
    cfg.test_limit = 8;
    let record = run_cell(&cfg, &d, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_plots(&aggregate(&[record]).unwrap(), dir.path()).unwrap();
    let svg = std::fs::read_to_string(dir.path().join("color.svg")).unwrap();
    assert!(svg.contains("lower is better"));
}

#[test]
fn diverged_only_condition_is_omitted() {
    let d = data(64, 10);
    let mut cfg = small(Task::ColorEstimation, NetworkName::ThreeConvNet, "td1", 2);
    cfg.dataset_learning_factor = 1e8;
    let record = run_cell(&cfg, &d, None).unwrap();
    assert!(!record.is_completed());
    assert!(aggregate(&[record]).unwrap().is_empty());
}

#[test]
fn grid_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.toml");
    std::fs::write(
        &path,
        r#"
out_dir = "out"
preset = "desk"
tasks = ["object", "color"]
networks = ["three_conv_net"]
run_ids = [1, 2]
epochs = 3

[data]
cifar_dir = "cifar"
"#,
    )
    .unwrap();
    let spec = GridSpec::load(&path).unwrap();
    assert_eq!(spec.out_dir, dir.path().join("out"));
    assert_eq!(spec.data.cifar_dir.as_deref(), Some(dir.path().join("cifar").as_path()));
    let cells = spec.cells().unwrap();
    assert_eq!(cells.len(), 2 * 2 * 10);
    assert!(cells.iter().all(|c| c.epochs == 3 && c.scramble.seed == DEFAULT_SEED));
    assert!(GridSpec::from_toml("out_dir = 'x'\nbogus = 1").is_err());
    let one = GridSpec::from_toml(
        "out_dir = 'x'\npreset = 'paper'\ntasks = ['object']\nnetworks = ['vgg11']\nrun_ids = [1]\nscrambles = ['s0', 'bu4']",
    )
    .unwrap();
    let cells = one.cells().unwrap();
    assert_eq!(cells.len(), 2);
    assert_eq!(cells[1].epochs, 100);
}
