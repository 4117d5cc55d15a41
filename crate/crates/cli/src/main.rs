use std::io::{ErrorKind, Write};
use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ofdm_scss::dataset::{read_dataset, write_dataset, Dtype};
use ofdm_scss::kurtosis::{export_sweep, kurtosis_sweep, parse_w_list, OffsetPolicy, SweepConfig};
use ofdm_scss::mixture::case_spec;
use ofdm_scss::oracle::{evaluate_dataset, mismatch_probe, Separator};

#[derive(Parser)]
#[command(
    name = "ofdm-scss",
    version,
    about = "Single-channel separation of OFDM mixtures"
)]
struct Cli {
    /// Worker threads (defaults to available parallelism).
    #[arg(long, global = true, env = "OFDM_SCSS_THREADS")]
    threads: Option<NonZeroUsize>,
    /// Run on a single thread. Output is identical either way.
    #[arg(long, global = true)]
    strict_sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a mixture dataset (<out>.bin + <out>.json).
    Gen {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        case: u8,
        #[arg(long)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "f64")]
        dtype: Dtype,
        /// Also store the interference component.
        #[arg(long)]
        include_b: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle separator, or probe a wrong transform order.
    Oracle {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k_wrong: Option<usize>,
    },
    /// Per-bin kurtosis sweep over window lengths.
    Kurtosis {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        case: u8,
        /// Window lengths, e.g. `16..200:4` or `40,48,56`.
        #[arg(long)]
        w_list: String,
        #[arg(long, default_value_t = 100_000)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "fixed(0)")]
        offset: OffsetPolicy,
        /// Replace mixture windows with i.i.d. Gaussian samples.
        #[arg(long)]
        gaussian_control: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an estimates file against the stored SOI.
    Score {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        estimates: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = if cli.strict_sequential {
        1
    } else {
        cli.threads
            .or_else(|| std::thread::available_parallelism().ok())
            .map_or(1, NonZeroUsize::get)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building thread pool")?;
    let strict = cli.strict_sequential;
    pool.install(|| dispatch(cli.command, strict))
}

fn dispatch(command: Command, strict_sequential: bool) -> Result<()> {
    match command {
        Command::Gen {
            case,
            count,
            seed,
            dtype,
            include_b,
            out,
        } => {
            let spec = case_spec(case, seed)?;
            eprintln!(
                "generating {count} case-{case} records into {}",
                out.display()
            );
            let manifest = write_dataset(&spec, count, dtype, include_b, &out)
                .with_context(|| format!("writing {}", out.display()))?;
            emit(&manifest.to_json())?;
        }
        Command::Oracle { data, k_wrong } => match k_wrong {
            None => {
                let report = evaluate_dataset(&data, Separator::Oracle)
                    .with_context(|| format!("evaluating {}", data.display()))?;
                emit(&serde_json::to_string_pretty(&report)?)?;
            }
            Some(k_wrong) => {
                let (manifest, mut reader) =
                    read_dataset(&data).with_context(|| format!("opening {}", data.display()))?;
                let spec = manifest.case_spec()?;
                let ys = reader
                    .records()
                    .map(|r| r.map(|r| r.y))
                    .collect::<Result<Vec<_>, _>>()?;
                let report = mismatch_probe(&spec, k_wrong, ys.iter().map(Vec::as_slice))?;
                emit(&serde_json::to_string_pretty(&report)?)?;
            }
        },
        Command::Kurtosis {
            case,
            w_list,
            n,
            seed,
            offset,
            gaussian_control,
            out,
        } => {
            let spec = case_spec(case, seed)?;
            let cfg = SweepConfig {
                windows: parse_w_list(&w_list)?,
                realizations: n,
                master_seed: seed,
                offset,
                gaussian_control,
                strict_sequential,
            };
            eprintln!(
                "kurtosis sweep: case {case}, {} windows, n = {n}",
                cfg.windows.len()
            );
            let sweep = kurtosis_sweep(&spec, &cfg)?;
            export_sweep(&sweep, &out).with_context(|| format!("writing {}", out.display()))?;
            let manifest = serde_json::to_string_pretty(&sweep.manifest())?;
            let manifest_path = out.with_extension("json");
            std::fs::write(&manifest_path, format!("{manifest}\n"))
                .with_context(|| format!("writing {}", manifest_path.display()))?;
            emit(&manifest)?;
        }
        Command::Score { data, estimates } => {
            let report = evaluate_dataset(&data, Separator::Estimates(&estimates))
                .with_context(|| format!("scoring {}", estimates.display()))?;
            emit(&serde_json::to_string_pretty(&report)?)?;
        }
    }
    Ok(())
}

/// Writes `text` to stdout. A closed pipe is not an error.
fn emit(text: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}
