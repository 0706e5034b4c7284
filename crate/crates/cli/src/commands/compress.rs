//! `slimconv compress`: run the compression pipeline over a `.wstore`.

use std::fs;
use std::path::PathBuf;

use clap::Args as ClapArgs;

use slimconv::pipeline::{run_pipeline, CompressionConfig};
use slimconv::weightstore::{load_store, save_store};

use super::{classify_pipeline, data_err, CliError};

#[derive(ClapArgs)]
pub struct Args {
    /// Input weight store (.wstore)
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Compression config JSON (prune/svd stages, selector, rank policy)
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Output weight store path
    #[arg(long = "out", value_name = "FILE")]
    pub output: PathBuf,
    /// Write the full compression report JSON here
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<(), CliError> {
    // Read and validate everything before writing anything.
    let store = load_store(&args.input)
        .map_err(|e| data_err("cannot read input store", &args.input, e))?;
    let config_text = fs::read_to_string(&args.config)
        .map_err(|e| data_err("cannot read config", &args.config, e))?;
    let config: CompressionConfig = serde_json::from_str(&config_text)
        .map_err(|e| data_err("malformed config", &args.config, e))?;

    let (out_store, report) = run_pipeline(&store, &config).map_err(classify_pipeline)?;

    save_store(&out_store, &args.output)
        .map_err(|e| data_err("cannot write output store", &args.output, e))?;
    if let Some(path) = &args.report {
        fs::write(path, report.to_json())
            .map_err(|e| data_err("cannot write report", path, e))?;
    }
    print!("{}", report.render_table());
    Ok(())
}
