//! `lance` command-line front end.
//!
//! Exit codes: 0 success, 1 failed verification, 2 usage, I/O or format error.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::bench::{parse_config, run_bench, write_report, MIN_TIMED_RUNS};
use crate::engines::{ConvSpec, Engine, LanceConfig, LanceMode};
use crate::error::{Error, Result};
use crate::quant::Granularity;
use crate::tensor::{load_tensor, save_tensor, FilterBank};
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const THREADS_ENV: &str = "LANCE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "lance", version, about = "Quantized Winograd convolution engines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the self-check suite.
    Verify,
    /// Convolve an input tensor file with a filter file.
    Run(RunArgs),
    /// Benchmark layers from a JSON config; writes CSV and JSON reports.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Report path; `.csv` and `.json` siblings are written.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = MIN_TIMED_RUNS)]
        runs: usize,
    },
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long)]
    input: PathBuf,
    /// Filters stored as a K x R x S x C tensor file.
    #[arg(long)]
    filters: PathBuf,
    #[arg(long, value_parser = ["direct", "quantized-direct", "winograd", "lance-faithful", "lance-gemm"])]
    engine: String,
    #[arg(long, default_value_t = 8)]
    bits_w: u8,
    #[arg(long, default_value_t = 8)]
    bits_i: u8,
    /// Defaults to `tile` for lance-faithful and `position` for lance-gemm.
    #[arg(long, value_parser = ["tile", "position", "tensor"])]
    granularity: Option<String>,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
    pad: u8,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let threads = match thread_count() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_USAGE;
        }
    };
    pool.install(|| match cli.command {
        Command::Verify => cmd_verify(),
        Command::Run(args) => report(cmd_run(&args)),
        Command::Bench { config, out, runs } => report(cmd_bench(&config, &out, runs, threads)),
    })
}

fn report(r: Result<()>) -> i32 {
    match r {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

/// `LANCE_THREADS` if set, otherwise the available parallelism.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::InvalidArgument(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn cmd_verify() -> i32 {
    let results = verify::run_all();
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("scope: {}", verify::SCOPE_NOTE);
    println!("{} checks, {} failed", results.len(), failed);
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let engine = Engine::parse(&args.engine)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown engine {}", args.engine)))?;
    let granularity = match &args.granularity {
        Some(g) => Granularity::parse(g)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown granularity {g}")))?,
        None if engine == Engine::LanceGemm => Granularity::PerPosition,
        None => Granularity::PerTile,
    };
    let cfg = LanceConfig {
        bits_w: args.bits_w,
        bits_i: args.bits_i,
        granularity,
        mode: if engine == Engine::LanceGemm {
            LanceMode::Gemm
        } else {
            LanceMode::Faithful
        },
    };
    cfg.validate()?;

    let x = load_tensor(&args.input)?;
    let w = FilterBank::from_tensor(load_tensor(&args.filters)?);
    let spec = ConvSpec::infer(&x, &w, args.pad as usize)?;
    let y = engine.run(&x, &w, &spec, &cfg)?;
    save_tensor(&y, &args.out)?;

    let digest = Sha256::digest(fs::read(&args.out)?);
    let (n, h, wd, c) = y.dims();
    println!(
        "{}: {n}x{h}x{wd}x{c} -> {} sha256={}",
        engine.name(),
        args.out.display(),
        hex::encode(digest)
    );
    Ok(())
}

fn cmd_bench(config: &PathBuf, out: &PathBuf, runs: usize, threads: usize) -> Result<()> {
    let layers = parse_config(&fs::read_to_string(config)?)?;
    let report = run_bench(&layers, threads, runs)?;
    let (csv, json) = write_report(&report, out)?;
    println!(
        "{} rows, {threads} threads -> {}, {}",
        report.rows.len(),
        csv.display(),
        json.display()
    );
    Ok(())
}
