use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tracebench::{default_configs, read_configs, run_matrix, WorkloadResult, MATRIX_CSV, MATRIX_JSON};

#[derive(Parser)]
#[command(name = "bench", about = "Synthetic trace benchmark matrix")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the workloads listed in a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in three-workload matrix.
    Matrix {
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_table(results: &[WorkloadResult]) {
    println!(
        "{:<14} {:>8} {:>8} {:>8} {:>9} {:>10} {:>9} {:>9} {:>7} {:>8}",
        "workload", "vertices", "active", "all", "build_ms", "orig_tok", "comp_tok", "ratio", "log_n", "log_b"
    );
    for r in results {
        println!(
            "{:<14} {:>8} {:>8} {:>8} {:>9.3} {:>10} {:>9} {:>9.6} {:>7} {:>8}",
            r.workload,
            r.vertices,
            r.active_desc,
            r.all_desc,
            r.build_ms,
            r.original_tokens,
            r.compact_tokens,
            r.ratio,
            r.softlog_entries,
            r.softlog_bytes
        );
    }
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let (configs, out) = match cli.command {
        Command::Run { config, out } => (
            read_configs(&config).with_context(|| format!("loading {}", config.display()))?,
            out,
        ),
        Command::Matrix { out } => (default_configs(), out),
    };
    let results = run_matrix(&configs, &out)?;
    print_table(&results);
    println!("wrote {} and {} to {}", MATRIX_JSON, MATRIX_CSV, out.display());
    Ok(())
}
