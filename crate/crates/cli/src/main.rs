//! `slimconv`: compress convolution weight stores, benchmark dense vs
//! factored execution, and score detections.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (missing or
//! malformed inputs), 3 numeric failure (e.g. SVD non-convergence).
//! Errors always go to stderr.

mod commands;
mod svg;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "slimconv",
    version,
    about = "Convolution-weight compression: magnitude pruning, truncated-SVD factorization, desk-scale benchmarking, and detection evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prune and/or factorize the tensors of a weight store
    Compress(commands::compress::Args),
    /// Score predictions against ground truth: PR curves, per-class AP, mAP@50
    Eval(commands::eval::Args),
    /// Time a network spec and report wall-clock and FLOP estimates
    Bench(commands::bench::Args),
    /// Print manifest, per-tensor stats, and parameter totals of a store
    Inspect(commands::inspect::Args),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Compress(args) => commands::compress::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Bench(args) => commands::bench::run(args),
        Command::Inspect(args) => commands::inspect::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        super::Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_are_distinguished() {
        use clap::Parser;
        assert!(super::Cli::try_parse_from(["slimconv", "nonsense"]).is_err());
        assert!(super::Cli::try_parse_from(["slimconv"]).is_err());
    }

    #[test]
    fn error_codes_follow_the_contract() {
        use super::commands::CliError;
        assert_eq!(CliError::Usage("x".into()).code(), 1);
        assert_eq!(CliError::Data("x".into()).code(), 2);
        assert_eq!(CliError::Numeric("x".into()).code(), 3);
    }
}
