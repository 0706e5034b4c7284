//! `slimconv bench`: time a network spec against a weight store.

use std::fs;
use std::path::PathBuf;

use clap::Args as ClapArgs;
use serde::Serialize;

use slimconv::microinfer::{benchmark, plan_layers, BenchResult, LayerPlan, LayerSpec};
use slimconv::weightstore::load_store;

use super::{classify_infer, data_err, CliError};

#[derive(ClapArgs)]
pub struct Args {
    /// Network spec JSON: ordered layer list referencing weight names
    #[arg(long, value_name = "FILE")]
    pub net: PathBuf,
    /// Weight store (.wstore)
    #[arg(long, value_name = "FILE")]
    pub weights: PathBuf,
    /// Input feature-map shape as CxHxW (e.g. 3x64x64)
    #[arg(long, value_name = "CxHxW")]
    pub input: String,
    /// Timed runs (median is the FPS basis; minimum 3)
    #[arg(long, default_value_t = 11)]
    pub runs: usize,
    /// Untimed warmup runs (minimum 1)
    #[arg(long, default_value_t = 2)]
    pub warmup: usize,
    /// Also write the JSON result here
    #[arg(long = "out", value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Serialize)]
struct BenchOutput {
    input_shape: [usize; 3],
    result: BenchResult,
    layers: Vec<LayerPlan>,
}

fn parse_shape(text: &str) -> Result<(usize, usize, usize), CliError> {
    let parts: Vec<&str> = text.split('x').collect();
    let bad = || CliError::Usage(format!("--input must be CxHxW with positive integers, got {text:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut dims = [0usize; 3];
    for (i, p) in parts.iter().enumerate() {
        dims[i] = p.parse().map_err(|_| bad())?;
        if dims[i] == 0 {
            return Err(bad());
        }
    }
    Ok((dims[0], dims[1], dims[2]))
}

pub fn run(args: Args) -> Result<(), CliError> {
    if args.runs < 3 || args.warmup < 1 {
        return Err(CliError::Usage(format!(
            "need --runs >= 3 and --warmup >= 1 (got runs {}, warmup {})",
            args.runs, args.warmup
        )));
    }
    let shape = parse_shape(&args.input)?;
    let net_text = fs::read_to_string(&args.net)
        .map_err(|e| data_err("cannot read network spec", &args.net, e))?;
    let layers: Vec<LayerSpec> = serde_json::from_str(&net_text)
        .map_err(|e| data_err("malformed network spec", &args.net, e))?;
    let store = load_store(&args.weights)
        .map_err(|e| data_err("cannot read weight store", &args.weights, e))?;

    let plans = plan_layers(&layers, &store, shape).map_err(classify_infer)?;
    let result = benchmark(&layers, &store, shape, args.runs, args.warmup)
        .map_err(classify_infer)?;

    let output = BenchOutput {
        input_shape: [shape.0, shape.1, shape.2],
        result,
        layers: plans,
    };
    let json = serde_json::to_string_pretty(&output).expect("bench output serializes");
    if let Some(path) = &args.output {
        fs::write(path, &json).map_err(|e| data_err("cannot write result", path, e))?;
    }
    println!("{json}");
    Ok(())
}
