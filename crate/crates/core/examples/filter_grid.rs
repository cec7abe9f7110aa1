//! Renders the first-layer filters of a network as a PNG grid, either from
//! a checkpoint given on the command line or from fresh initial weights.

use std::path::Path;

use locality::analysis::export_filters;
use locality::autodiff::checkpoint;
use locality::models::{Network, NetworkSpec};

pub fn run_example(checkpoint_path: Option<&Path>, out: &Path) -> locality::Result<()> {
    let params = match checkpoint_path {
        Some(p) => checkpoint::load::<f32>(p)?,
        None => Network::<f32>::init_matched(NetworkSpec::three_conv_net(10), 1).params,
    };
    export_filters(&params, &params[0].0, 12, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> locality::Result<()> {
    let arg = std::env::args().nth(1).map(std::path::PathBuf::from);
    run_example(arg.as_deref(), Path::new("filters.png"))
}
