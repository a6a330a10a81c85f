use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use spinsim::harness::{
    self, fit_decay, level_diagram_csv, read_decay_csv, ExperimentConfig, SweepResult,
};
use spinsim::model::{build_dimer, build_trimer, level_diagram, DimerParams, TrimerParams};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "spinsim", about = "Molecular spin-qudit Bell-test simulator", version)]
struct Cli {
    /// Number of worker threads (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config
    Run {
        /// Path to the experiment config
        config: PathBuf,
        /// Output directory for CSV data and JSON metadata
        #[arg(short, long, default_value = "results")]
        out: PathBuf,
        /// Override the RNG seed from the config
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare stored results against the embedded reference tables
    Report {
        /// One or more result JSON files
        results: Vec<PathBuf>,
    },
    /// Write an eigenvalue-vs-field CSV for one of the built-in systems
    LevelDiagram {
        /// "dimer" or "trimer"
        #[arg(long, default_value = "dimer")]
        system: String,
        #[arg(long, default_value_t = 0.0)]
        b_min: f64,
        #[arg(long, default_value_t = 1.5)]
        b_max: f64,
        #[arg(long, default_value_t = 151)]
        points: usize,
        /// Output CSV path (stdout if omitted)
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Fit a Hahn-echo decay M(tau) = M0 exp(-2 tau / T2) to CSV data
    FitDecay {
        /// CSV with header and (tau_us, amplitude) columns
        csv: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Run { config, out, seed } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = ExperimentConfig::from_toml_str(&text)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            std::fs::create_dir_all(&out)?;
            let result = harness::run(&cfg, Some(&out))?;
            println!(
                "{}: {} cells written to {} (config {})",
                result.kind,
                result.cells.len(),
                out.display(),
                &result.config_hash[..12]
            );
            for cell in &result.cells {
                let t2 = cell.t2_us.map(|t| format!("{t}")).unwrap_or_else(|| "inf".into());
                println!(
                    "  {:>8} B1={:>6.2} G  T2={:>8} us  value={:.6}",
                    cell.label, cell.b1_gauss, t2, cell.value
                );
            }
        }
        Command::Report { results } => {
            if results.is_empty() {
                bail!("no result files given");
            }
            let mut loaded = Vec::new();
            for path in &results {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                loaded.push(SweepResult::from_json(&text)?);
            }
            print!("{}", harness::report(&loaded)?);
        }
        Command::LevelDiagram { system, b_min, b_max, points, out } => {
            let rows = match system.as_str() {
                "dimer" => level_diagram(
                    |b| build_dimer(&DimerParams { bz_tesla: b, ..Default::default() }),
                    b_min,
                    b_max,
                    points,
                )?,
                "trimer" => level_diagram(
                    |b| build_trimer(&TrimerParams { bz_tesla: b, ..Default::default() }),
                    b_min,
                    b_max,
                    points,
                )?,
                other => bail!("unknown system {other:?} (expected dimer or trimer)"),
            };
            let csv = level_diagram_csv(&rows);
            match out {
                Some(path) => {
                    std::fs::write(&path, csv)?;
                    println!("wrote {} rows to {}", rows.len(), path.display());
                }
                None => print!("{csv}"),
            }
        }
        Command::FitDecay { csv } => {
            let data = read_decay_csv(&csv)?;
            let fit = fit_decay(&data)?;
            println!(
                "T2 = {:.4} us   M0 = {:.6}   rms residual = {:.3e}   ({} points)",
                fit.t2_us,
                fit.m0,
                fit.residual,
                data.len()
            );
        }
    }
    Ok(())
}
