//! `slimconv inspect`: manifest, per-tensor stats, parameter totals, and
//! factored-group accounting for a weight store.

use std::fs;
use std::path::PathBuf;

use clap::Args as ClapArgs;
use serde::Serialize;

use slimconv::pipeline::{factored_groups, param_counts, read_factorized};
use slimconv::weightstore::{decode_store, tensor_stats, Role};

use super::{data_err, CliError};

#[derive(ClapArgs)]
pub struct Args {
    /// Weight store to inspect (.wstore)
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Emit machine-readable JSON instead of the table
    #[arg(long)]
    pub json: bool,
}

#[derive(Serialize)]
struct EntryRow {
    name: String,
    shape: Vec<usize>,
    role: Role,
    elements: usize,
    nonzero: usize,
    nonzero_pct: f64,
    bytes: u64,
}

#[derive(Serialize)]
struct GroupRow {
    base: String,
    orig_shape: [usize; 4],
    rank: usize,
    orig_params: usize,
    factored_params: usize,
}

#[derive(Serialize)]
struct Totals {
    entries: usize,
    elements: usize,
    blob_bytes: u64,
    file_bytes: u64,
}

#[derive(Serialize)]
struct InspectReport {
    path: String,
    entries: Vec<EntryRow>,
    factored_groups: Vec<GroupRow>,
    totals: Totals,
}

pub fn run(args: Args) -> Result<(), CliError> {
    let bytes = fs::read(&args.input)
        .map_err(|e| data_err("cannot read store", &args.input, e))?;
    let store = decode_store(&bytes)
        .map_err(|e| data_err("cannot parse store", &args.input, e))?;

    let entries: Vec<EntryRow> = store
        .entries()
        .iter()
        .map(|e| {
            let stats = tensor_stats(&e.tensor);
            EntryRow {
                name: e.name.clone(),
                shape: e.tensor.shape().to_vec(),
                role: e.role,
                elements: stats.elements,
                nonzero: stats.nonzero,
                nonzero_pct: 100.0 * stats.nonzero as f64 / stats.elements as f64,
                bytes: 4 * stats.elements as u64,
            }
        })
        .collect();

    let mut groups = Vec::new();
    for base in factored_groups(&store) {
        let f = read_factorized(&store, &base)
            .map_err(|e| CliError::Data(format!("factored group {base:?}: {e}")))?;
        let (orig_params, factored_params) = param_counts(&f);
        groups.push(GroupRow {
            base,
            orig_shape: f.orig_shape(),
            rank: f.rank(),
            orig_params,
            factored_params,
        });
    }

    let report = InspectReport {
        path: args.input.display().to_string(),
        totals: Totals {
            entries: entries.len(),
            elements: entries.iter().map(|e| e.elements).sum(),
            blob_bytes: entries.iter().map(|e| e.bytes).sum(),
            file_bytes: bytes.len() as u64,
        },
        entries,
        factored_groups: groups,
    };

    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("inspect report serializes")
        );
        return Ok(());
    }

    println!("store: {} ({} bytes)", report.path, report.totals.file_bytes);
    println!(
        "{:<24} {:<16} {:<12} {:>10} {:>10} {:>10}",
        "name", "shape", "role", "elements", "nonzero %", "bytes"
    );
    for e in &report.entries {
        let shape = format!(
            "[{}]",
            e.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
        );
        println!(
            "{:<24} {:<16} {:<12} {:>10} {:>10.1} {:>10}",
            e.name,
            shape,
            e.role.as_str(),
            e.elements,
            e.nonzero_pct,
            e.bytes
        );
    }
    println!(
        "{:<24} {:<16} {:<12} {:>10} {:>10} {:>10}",
        "totals",
        "",
        "",
        report.totals.elements,
        "",
        report.totals.blob_bytes
    );

    if !report.factored_groups.is_empty() {
        println!();
        println!(
            "{:<24} {:<16} {:>6} {:>12} {:>16}",
            "factored group", "orig shape", "rank", "orig params", "factored params"
        );
        for g in &report.factored_groups {
            let shape = format!(
                "[{},{},{},{}]",
                g.orig_shape[0], g.orig_shape[1], g.orig_shape[2], g.orig_shape[3]
            );
            println!(
                "{:<24} {:<16} {:>6} {:>12} {:>16}",
                g.base, shape, g.rank, g.orig_params, g.factored_params
            );
        }
    }
    Ok(())
}
