//! `vibeswipe` command line: data generation, preprocessing, training,
//! quantization, inference, accelerator simulation, search and reports.
//!
//! Exit codes: 0 success, 1 internal error, 2 configuration error, 3 data
//! error, 4 infeasible (constraints or calibration).

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vibeswipe::dataio::SplitMethod;
use vibeswipe::nn::Arch;

use commands::{AtStage, CliResult, Ctx};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "vibeswipe", version, about = "Tiny 1D-CNN gesture classifiers for FPGA deployment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Root seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Recording root (<subject>/session_<k>/*.wav); omit for synthetic data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Split method: ps, loso or aos.
    #[arg(long)]
    split: Option<SplitMethod>,
    /// Target subject (ps, loso) or table (aos).
    #[arg(long)]
    target: Option<String>,
    /// Model architecture: cnn or sepcnn.
    #[arg(long)]
    arch: Option<Arch>,
    /// Number of convolutional blocks, 1 to 5.
    #[arg(long)]
    blocks: Option<usize>,
    /// Maximum training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Early-stopping patience in epochs.
    #[arg(long)]
    patience: Option<usize>,
    /// Batch size (16, 24, ..., 64).
    #[arg(long)]
    bs: Option<usize>,
    /// Adam learning rate, 1e-5 to 1e-3.
    #[arg(long)]
    lr: Option<f64>,
    /// Quantization bitwidth (4, 6 or 8); 0 trains in float.
    #[arg(long)]
    bitwidth: Option<u32>,
    /// Target device profile: xc7s15, xc7s25 or xc7s50.
    #[arg(long)]
    device: Option<String>,
    /// Stream separable blocks through a C x 1 buffer (default).
    #[arg(long, overrides_with = "no_ping_pong")]
    ping_pong: bool,
    /// Buffer the full depthwise output instead.
    #[arg(long)]
    no_ping_pong: bool,
    /// CSV of (luts,bram_blocks,dsps,bits,power_mw) rows to fit the power model.
    #[arg(long)]
    calibrate_power: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic recording tree.
    SynthData(Common),
    /// Window, decimate and split; writes the split plan and sizes.
    Preprocess(Common),
    /// Train (quantization-aware unless --bitwidth 0).
    Train(Common),
    /// Quantize a trained model into the integer-only format.
    Quantize {
        #[command(flatten)]
        common: Common,
        /// Float model; defaults to <out>/model.json.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run the integer-only model over the test set.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        quantized: Option<PathBuf>,
    },
    /// Compile to the streaming accelerator, simulate and estimate hardware cost.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        quantized: Option<PathBuf>,
    },
    /// Constraint-pruned bi-objective configuration search.
    Search {
        #[command(flatten)]
        common: Common,
        /// Number of trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Trials per generation.
        #[arg(long)]
        population: Option<usize>,
        /// Trials evaluated in parallel; results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Tables and figures from one or more run directories.
    Report {
        #[command(flatten)]
        common: Common,
        /// Directories holding summary.json (from pipeline or search).
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
    },
    /// preprocess -> train -> quantize -> infer -> simulate -> report.
    Pipeline(Common),
}

fn resolve(c: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p).at("config")?,
        None => RunConfig::default(),
    };
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = &c.data {
        cfg.data.dir = Some(v.clone());
    }
    if let Some(v) = c.split {
        cfg.data.method = v;
    }
    if let Some(v) = &c.target {
        cfg.data.target = v.clone();
    }
    if let Some(v) = c.arch {
        cfg.model.arch = v;
    }
    if let Some(v) = c.blocks {
        cfg.model.num_blocks = v;
    }
    if let Some(v) = c.epochs {
        cfg.train.epochs_max = v;
        cfg.search.epochs_max = v;
    }
    if let Some(v) = c.patience {
        cfg.train.patience = v;
        cfg.search.patience = v;
    }
    if let Some(v) = c.bs {
        cfg.train.bs = v;
    }
    if let Some(v) = c.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = c.bitwidth {
        cfg.train.bits = v;
    }
    if let Some(v) = &c.device {
        cfg.accel.device = v.clone();
    }
    if c.ping_pong {
        cfg.accel.ping_pong = true;
    }
    if c.no_ping_pong {
        cfg.accel.ping_pong = false;
    }
    if let Some(v) = &c.calibrate_power {
        cfg.accel.power_csv = Some(v.clone());
    }
    Ok(cfg)
}

fn context(c: &Common) -> CliResult<Ctx> {
    Ctx::new(resolve(c)?, c.out.clone())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::SynthData(c) => {
            let mut ctx = context(&c)?;
            commands::synth_data(&mut ctx)?;
            ctx.finish("synth-data")
        }
        Command::Preprocess(c) => {
            let mut ctx = context(&c)?;
            let (_, summary) = commands::preprocess_cmd(&mut ctx)?;
            println!(
                "{} records -> {} train / {} val / {} test samples of {}x{}",
                summary.records, summary.train, summary.val, summary.test, summary.sample_len, summary.channels
            );
            ctx.finish("preprocess")
        }
        Command::Train(c) => {
            let mut ctx = context(&c)?;
            let (_, data, _) = commands::prepare(&ctx.cfg).at("preprocess")?;
            let s = commands::train_cmd(&mut ctx, &data)?;
            println!("best validation accuracy {:.4} at epoch {}", s.best_val_accuracy, s.best_epoch);
            ctx.finish("train")
        }
        Command::Quantize { common, model } => {
            let mut ctx = context(&common)?;
            let (_, data, _) = commands::prepare(&ctx.cfg).at("preprocess")?;
            let model = model.unwrap_or_else(|| common.out.join("model.json"));
            let (_, s) = commands::quantize_cmd(&mut ctx, &data, &model)?;
            println!("{}-bit integer-only test accuracy {:.4}", s.bits, s.test_accuracy);
            ctx.finish("quantize")
        }
        Command::Infer { common, quantized } => {
            let mut ctx = context(&common)?;
            let qm = commands::load_quantized(&quantized.unwrap_or_else(|| common.out.join("quantized.json")))?;
            let (_, data, _) = commands::prepare(&ctx.cfg).at("preprocess")?;
            let s = commands::infer_cmd(&mut ctx, &data, &qm)?;
            println!("test accuracy {:.4} over {} samples", s.accuracy, s.samples);
            ctx.finish("infer")
        }
        Command::Simulate { common, quantized } => {
            let mut ctx = context(&common)?;
            let qm = commands::load_quantized(&quantized.unwrap_or_else(|| common.out.join("quantized.json")))?;
            let (_, data, _) = commands::prepare(&ctx.cfg).at("preprocess")?;
            let s = commands::simulate_cmd(&mut ctx, &data, &qm)?;
            println!(
                "{} cycles, {:.3} ms, {:.1} mW, {:.4} mJ, BRAM {:.2}%",
                s.cycles, s.latency_ms, s.power_mw, s.energy_mj, s.resources.bram_pct
            );
            ctx.finish("simulate")
        }
        Command::Search { common, trials, population, jobs } => {
            let mut cfg = resolve(&common)?;
            if let Some(v) = trials {
                cfg.search.n_trials = v;
            }
            if let Some(v) = population {
                cfg.search.population = v;
            }
            if let Some(v) = jobs {
                cfg.search.jobs = v;
            }
            let mut ctx = Ctx::new(cfg, common.out.clone())?;
            let (_, data, _) = commands::prepare(&ctx.cfg).at("preprocess")?;
            let s = commands::search_cmd(&mut ctx, &data)?;
            match s.row {
                Some(r) => println!("best front member: {}-bit, {} blocks, accuracy {:.4}, {:.4} mJ", r.bits, r.num_blocks, r.quant_accuracy, r.energy_mj),
                None => println!("no configuration satisfied every constraint"),
            }
            ctx.finish("search")
        }
        Command::Report { common, runs } => {
            let mut ctx = context(&common)?;
            commands::report_cmd(&mut ctx, &runs)?;
            ctx.finish("report")
        }
        Command::Pipeline(c) => {
            let mut ctx = context(&c)?;
            let s = commands::pipeline_cmd(&mut ctx)?;
            if let Some(r) = s.row {
                println!("quantized test accuracy {:.4}, {:.3} ms, {:.1} mW, {:.4} mJ", r.quant_accuracy, r.latency_ms, r.power_mw, r.energy_mj);
            }
            ctx.finish("pipeline")
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = match &cli.command {
        Command::SynthData(c) | Command::Preprocess(c) | Command::Train(c) | Command::Pipeline(c) => c.verbose,
        Command::Quantize { common, .. }
        | Command::Infer { common, .. }
        | Command::Simulate { common, .. }
        | Command::Search { common, .. }
        | Command::Report { common, .. } => common.verbose,
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if verbose { "info" } else { "warn" })).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
