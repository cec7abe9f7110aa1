use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use locality::analysis::{aggregate, emit_plots, export_filters};
use locality::autodiff::checkpoint;
use locality::data::{load_cifar10_subset, Task};
use locality::models::NetworkName;
use locality::nonlocal::{run_nonlocal_experiment, NonlocalConfig};
use locality::runner::{run_cell, run_grid, write_aggregate_csv, DataPaths, ExperimentConfig, GridSpec, Preset, RecordStore};
use locality::scramble::{build_permutation, ScrambleSpec};

#[derive(Parser)]
#[command(name = "locality", about = "Scrambled-image locality experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one cell.
    Run {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        network: NetworkName,
        #[arg(long, default_value = "s0")]
        scramble: ScrambleSpec,
        #[arg(long, default_value_t = 1)]
        run_id: u32,
        #[arg(long, default_value = "desk")]
        preset: Preset,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, env = "CIFAR10_DIR")]
        cifar: Option<PathBuf>,
        #[arg(long)]
        stylized: Option<PathBuf>,
        #[arg(long)]
        texture: Option<PathBuf>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Run every missing cell of a grid file.
    Grid {
        #[arg(long)]
        config: PathBuf,
    },
    /// Toeplitz network with nonlocal entries; writes the norm series CSV.
    Nonlocal {
        #[arg(long, default_value_t = 0.0005)]
        prob: f64,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value = "desk")]
        preset: Preset,
        #[arg(long, env = "CIFAR10_DIR")]
        cifar: PathBuf,
        #[arg(long, default_value_t = 2021)]
        seed: u64,
        #[arg(long, default_value = "nonlocal.csv")]
        out: PathBuf,
    },
    /// Dump a scrambling map (`.pmap`) and its legend PNG.
    Scramble {
        #[arg(long)]
        condition: ScrambleSpec,
        #[arg(long, default_value_t = 8)]
        scale: u32,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Aggregate CSV, summary CSV and plots from a record directory.
    Aggregate {
        #[arg(long, default_value = "runs")]
        runs: PathBuf,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
    /// First-layer filter grid of a checkpoint.
    Filters {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "0.weight")]
        param: String,
        #[arg(long, default_value_t = 8)]
        scale: u32,
        #[arg(long, default_value = "filters.png")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> locality::Result<ExitCode> {
    match command {
        Command::Run {
            task,
            network,
            scramble,
            run_id,
            preset,
            epochs,
            cifar,
            stylized,
            texture,
            out,
        } => {
            let mut cfg = ExperimentConfig::new(task, network, scramble, run_id, preset);
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let paths = DataPaths {
                cifar_dir: cifar,
                stylized_dir: stylized,
                texture_dir: texture,
            };
            let data = paths.load(task, cfg.train_limit, cfg.test_limit)?;
            let store = RecordStore::open(out)?;
            let record = run_cell(&cfg, &data, Some(&store))?;
            println!("{}", serde_json::to_string_pretty(&record)?);
        }
        Command::Grid { config } => {
            let spec = GridSpec::load(&config)?;
            let cells = spec.cells()?;
            let store = RecordStore::open(&spec.out_dir)?;
            let (train_limit, test_limit) = cells
                .iter()
                .fold((0, 0), |(a, b), c| (a.max(c.train_limit), b.max(c.test_limit)));
            let report = run_grid(&cells, &store, |task| spec.data.load(task, train_limit, test_limit))?;
            write_aggregate_csv(&report.records, fs::File::create(spec.out_dir.join("aggregate.csv"))?)?;
            println!(
                "{} cells: {} trained, {} already done, {} failed",
                cells.len(),
                report.trained,
                report.skipped,
                report.failed.len()
            );
            for (id, why) in &report.failed {
                println!("  failed {id}: {why}");
            }
            if !report.failed.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Nonlocal {
            prob,
            epochs,
            preset,
            cifar,
            seed,
            out,
        } => {
            let (limit, _) = preset.limits();
            let (train, _) = load_cifar10_subset(&cifar, limit, 0)?;
            let config = NonlocalConfig {
                probability: prob,
                epochs,
                seed,
                ..NonlocalConfig::default()
            };
            let run = run_nonlocal_experiment(config, &train)?;
            run.save_csv(&out)?;
            println!(
                "first layer: {} conv + {} nonlocal entries; norm {:.5} -> {:.5}, slope {:.3e}",
                run.first_layer_conv,
                run.first_layer_nonlocal,
                run.points.first().map_or(0.0, |p| p.nonlocal_norm),
                run.points.last().map_or(0.0, |p| p.nonlocal_norm),
                run.norm_slope()
            );
        }
        Command::Scramble { condition, scale, out } => {
            fs::create_dir_all(&out)?;
            let map = build_permutation(&condition)?;
            let stem = out.join(condition.label());
            map.save(stem.with_extension("pmap"))?;
            map.legend_image(scale)?.save(stem.with_extension("png"))?;
            println!("wrote {}.{{pmap,png}}", stem.display());
        }
        Command::Aggregate { runs, out } => {
            let records = RecordStore::open(&runs)?.read_all()?;
            fs::create_dir_all(&out)?;
            write_aggregate_csv(&records, fs::File::create(out.join("aggregate.csv"))?)?;
            let summaries = aggregate(&records)?;
            for path in emit_plots(&summaries, &out)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Filters {
            checkpoint: path,
            param,
            scale,
            out,
        } => {
            let params = checkpoint::load::<f32>(&path)?;
            export_filters(&params, &param, scale, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
