//! Matched initialization across scrambling conditions, the matched
//! parameter budgets, and why a fully connected network cannot tell
//! scrambled from unscrambled inputs.

mod common;

use common::{rng, separable_images};
use locality::analysis::{channel_gram, gram_matrix};
use locality::autodiff::{Tape, Tensor};
use locality::data::{LabeledImage, Task, PIXELS};
use locality::models::{NetworkName, NetworkSpec, MATCH_TOLERANCE};
use locality::runner::{initial_network, run_cell, CellData, ExperimentConfig, Preset, RecordStore};
use locality::scramble::{build_permutation, ScrambleSpec, DEFAULT_SEED, DEFAULT_SIDE};
use nalgebra::DMatrix;
use rand::Rng;

fn configs(task: Task, network: NetworkName, run_id: u32) -> Vec<ExperimentConfig> {
    ScrambleSpec::all_conditions(DEFAULT_SIDE, DEFAULT_SEED)
        .into_iter()
        .map(|s| ExperimentConfig::new(task, network, s, run_id, Preset::Desk))
        .collect()
}

#[test]
fn initial_weights_do_not_depend_on_the_condition() {
    for network in [NetworkName::ThreeConvNet, NetworkName::ShallowFc] {
        for task in [Task::ObjectRecognition, Task::ColorEstimation] {
            let bytes: Vec<Vec<u8>> = configs(task, network, 2)
                .iter()
                .map(|c| initial_network(c, None).unwrap().checkpoint_bytes())
                .collect();
            assert!(bytes.iter().all(|b| *b == bytes[0]), "{network} {task}");
        }
    }
    let a = initial_network(&configs(Task::ObjectRecognition, NetworkName::ThreeConvNet, 1)[0], None).unwrap();
    let b = initial_network(&configs(Task::ObjectRecognition, NetworkName::ThreeConvNet, 2)[0], None).unwrap();
    assert_ne!(a.checkpoint_bytes(), b.checkpoint_bytes());
}

#[test]
fn cells_in_separate_stores_start_from_the_same_weights() {
    let data = CellData {
        train: separable_images(8, 1, 10),
        test: separable_images(8, 2, 10),
    };
    let mut hashes = Vec::new();
    for mut cfg in configs(Task::ObjectRecognition, NetworkName::ThreeConvNet, 3) {
        cfg.epochs = 0;
        let dir = tempfile::tempdir().unwrap();
        let store = RecordStore::open(dir.path()).unwrap();
        hashes.push(run_cell(&cfg, &data, Some(&store)).unwrap().init_hash);
    }
    assert!(hashes.iter().all(|h| *h == hashes[0]));
}

#[test]
fn matched_networks_stay_within_budget() {
    for out in [10, 3] {
        let target = NetworkSpec::vgg11(out).param_count() as f64;
        for spec in [NetworkSpec::wide_net(out).unwrap(), NetworkSpec::deep_net(out).unwrap()] {
            let rel = (spec.param_count() as f64 - target).abs() / target;
            assert!(rel <= MATCH_TOLERANCE, "{:?}: {rel}", spec.name);
        }
    }
}

/// Values on a 1/16 grid in [-2, 2]: products and their sums are exact in
/// `f64`, so summation order cannot matter.
fn dyadic(n: usize, r: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| f64::from(r.random_range(-32i32..=32)) / 16.0).collect()
}

#[test]
fn dense_layer_is_blind_to_pixel_order() {
    let mut r = rng(8);
    let (batch, out) = (3, 16);
    let x = dyadic(batch * PIXELS, &mut r);
    let w = dyadic(out * PIXELS, &mut r);
    let b = dyadic(out, &mut r);
    let run = |x: Vec<f64>, w: Vec<f64>| {
        let mut tape = Tape::new();
        let xi = tape.input(Tensor::new(vec![batch, PIXELS], x).unwrap());
        let wi = tape.input(Tensor::new(vec![out, PIXELS], w).unwrap());
        let bi = tape.input(Tensor::new(vec![out], b.clone()).unwrap());
        let y = tape.linear(xi, wi, Some(bi)).unwrap();
        tape.value(y).to_vec()
    };
    let plain = run(x.clone(), w.clone());
    for spec in ScrambleSpec::all_conditions(DEFAULT_SIDE, DEFAULT_SEED) {
        let map = build_permutation(&spec).unwrap();
        let xs: Vec<f64> = x.chunks(PIXELS).flat_map(|img| map.apply(img).unwrap()).collect();
        let ws: Vec<f64> = w.chunks(PIXELS).flat_map(|row| map.apply(row).unwrap()).collect();
        let scrambled = run(xs, ws);
        assert!(
            plain.iter().zip(&scrambled).all(|(a, b)| a.to_bits() == b.to_bits()),
            "{}",
            spec.label()
        );
    }
}

#[test]
fn gram_matrices_are_positive_semidefinite() {
    let mut r = rng(10);
    for trial in 0..50 {
        let maps_n = r.random_range(1..8);
        let len = r.random_range(1..64);
        let maps: Vec<Vec<f64>> = (0..maps_n)
            .map(|_| (0..len).map(|_| r.random_range(-3.0..3.0)).collect())
            .collect();
        let refs: Vec<&[f64]> = maps.iter().map(Vec::as_slice).collect();
        let g = gram_matrix(&refs).unwrap();
        let m = DMatrix::from_fn(maps_n, maps_n, |i, j| g[i][j]);
        assert_eq!(m, m.transpose());
        let min = m.clone().symmetric_eigen().eigenvalues.min();
        assert!(min >= -1e-8 * m.norm().max(1.0), "trial {trial}: {min}");
    }
}

#[test]
fn channel_gram_ignores_scrambling() {
    let mut r = rng(11);
    // Pixels on a 1/256 grid keep every product and sum exact.
    let px: Vec<f32> = (0..PIXELS).map(|_| f32::from(r.random::<u8>()) / 256.0).collect();
    let image = LabeledImage::new(px, 0);
    let base = channel_gram(&image.pixels).unwrap();
    for spec in ScrambleSpec::all_conditions(DEFAULT_SIDE, DEFAULT_SEED) {
        let map = build_permutation(&spec).unwrap();
        assert_eq!(channel_gram(&map.apply(&image.pixels).unwrap()).unwrap(), base, "{}", spec.label());
    }
}
