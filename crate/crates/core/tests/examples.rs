//! Every example runs end to end on small inputs.

#[path = "../examples/scramble_legend.rs"]
mod scramble_legend;
#[path = "../examples/toeplitz_layout.rs"]
mod toeplitz_layout;
#[path = "../examples/nonlocal_norm.rs"]
mod nonlocal_norm;
#[path = "../examples/train_cell.rs"]
mod train_cell;
#[path = "../examples/gram_texture.rs"]
mod gram_texture;
#[path = "../examples/filter_grid.rs"]
mod filter_grid;
#[path = "../examples/compositional_regression.rs"]
mod compositional_regression;
#[path = "../examples/aggregate_plots.rs"]
mod aggregate_plots;

#[test]
fn scramble_legend_writes_ten_maps() {
    let dir = tempfile::tempdir().unwrap();
    let files = scramble_legend::run_example(dir.path()).unwrap();
    assert_eq!(files.len(), 10);
    for f in files {
        assert_eq!(image::open(&f).unwrap().width(), 128);
        assert!(f.with_extension("pmap").exists());
    }
}

#[test]
fn toeplitz_layout_counts() {
    let c = toeplitz_layout::run_example(7).unwrap();
    assert_eq!((c.conv, c.dense), (72_900, 8_294_400));
    assert!(c.nonlocal > 3_000 && c.nonlocal < 5_300, "{}", c.nonlocal);
}

#[test]
fn nonlocal_norm_runs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("n.csv");
    let run = nonlocal_norm::run_example(None, 64, 1, &csv).unwrap();
    assert_eq!(run.points.len(), 2);
    assert!(run.points[0].nonlocal_norm > 0.0);
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 3);
}

#[test]
fn train_cell_runs() {
    let record = train_cell::run_example(None, "td3", Some(1)).unwrap();
    assert!(record.is_completed());
    assert_eq!(record.loss_curve.len(), 2);
}

#[test]
fn gram_texture_separates_channel_and_feature_statistics() {
    for label in ["td2", "s5", "bu1"] {
        let (channel, feature) = gram_texture::run_example(label).unwrap();
        assert!(channel < 1e-9, "{label}: {channel}");
        assert!(feature > 1e-3, "{label}: {feature}");
    }
}

#[test]
fn filter_grid_from_init_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.png");
    filter_grid::run_example(None, &out).unwrap();
    let a = std::fs::read(&out).unwrap();
    let net = locality::models::Network::<f32>::init_matched(locality::models::NetworkSpec::three_conv_net(10), 1);
    let ckpt = dir.path().join("n.lckp");
    locality::autodiff::checkpoint::save(&ckpt, &net.params).unwrap();
    filter_grid::run_example(Some(&ckpt), &out).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), a);
}

#[test]
fn compositional_regression_beats_the_mean() {
    let (net, baseline) = compositional_regression::run_example(20, 5).unwrap();
    assert!(net < 0.5 * baseline, "{net} vs {baseline}");
}

#[test]
fn aggregate_plots_emit_one_svg_per_task() {
    let dir = tempfile::tempdir().unwrap();
    let files = aggregate_plots::run_example(dir.path()).unwrap();
    let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
    assert_eq!(names, ["object.svg", "color.svg", "summary.csv"]);
    assert_eq!(std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap().lines().count(), 17);
}
