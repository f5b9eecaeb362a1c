use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use aidg_perf::cli::{
    cmd_estimate, cmd_export_aidg, cmd_map, cmd_sweep, cmd_validate, load_model, sweep_csv, write_output,
    CliError, SweepSpec, Workload, EXPORT_CAP,
};
use aidg_perf::estimator::{EstimatorConfig, Mode};
use aidg_perf::mapper::Mapping;

#[derive(Parser)]
#[command(name = "aidg-perf", version, about = "Cycle latency estimation for DNN layers on modeled accelerators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    WholeGraph,
    FixedPoint,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum MappingArg {
    Auto,
    Scalar,
    ConvExt,
    Gemm,
}

#[derive(clap::Args)]
struct MapArgs {
    /// Lowering of network layers; ignored for loop kernel files.
    #[arg(long, value_enum, default_value = "auto")]
    mapping: MappingArg,
    /// Tile edge for `--mapping gemm`.
    #[arg(long, default_value_t = 16)]
    tile: u32,
}

impl MapArgs {
    fn mapping(&self) -> Mapping {
        match self.mapping {
            MappingArg::Auto => Mapping::Auto,
            MappingArg::Scalar => Mapping::Scalar,
            MappingArg::ConvExt => Mapping::ConvExt,
            MappingArg::Gemm => Mapping::Gemm { tile: self.tile },
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file; exits 1 if it has diagnostics.
    Validate { model: PathBuf },
    /// Print the loop kernels a workload maps to.
    Map {
        model: PathBuf,
        workload: PathBuf,
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the cycles of a network or loop kernel.
    Estimate {
        model: PathBuf,
        workload: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0.01)]
        fallback_fraction: f64,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        jobs: Option<usize>,
        /// Reserved.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate one workload across a grid of generated arrays.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Reserved.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the dependency graph of the first iterations as DOT.
    ExportAidg {
        model: PathBuf,
        workload: PathBuf,
        #[arg(long, default_value_t = 1)]
        iterations: u64,
        /// Label nodes with their enter and leave cycles.
        #[arg(long)]
        annotate: bool,
        #[arg(long, default_value_t = EXPORT_CAP)]
        max_instructions: u64,
        #[command(flatten)]
        map: MapArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Validate { model } => {
            let diags = cmd_validate(&model)?;
            for d in &diags {
                eprintln!("{d}");
            }
            Ok(if diags.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Map { model, workload, map, out } => {
            let m = load_model(&model)?;
            let text = cmd_map(&m, &Workload::load(&workload)?, map.mapping())?;
            write_output(out.as_deref(), &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate { model, workload, mode, fallback_fraction, format, out, map, jobs, seed: _ } => {
            let m = load_model(&model)?;
            let w = Workload::load(&workload)?;
            let mode = match mode {
                ModeArg::Auto => Mode::Auto,
                ModeArg::WholeGraph => Mode::WholeGraph,
                ModeArg::FixedPoint => Mode::FixedPoint,
            };
            let cfg = EstimatorConfig { mode, fallback_fraction, ..EstimatorConfig::default() };
            cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let estimate = || cmd_estimate(&m, &w, map.mapping(), &cfg);
            let (report, times, net) = match jobs {
                Some(j) => rayon::ThreadPoolBuilder::new()
                    .num_threads(j.max(1))
                    .build()
                    .map_err(|e| CliError::Usage(e.to_string()))?
                    .install(estimate)?,
                None => estimate()?,
            };
            let text = match format {
                Format::Csv => report.to_csv(),
                Format::Json => report.to_json(),
            };
            write_output(out.as_deref(), &text)?;
            for (i, t) in times.iter().enumerate() {
                eprintln!("layer {i}: {:.3} ms", t.as_secs_f64() * 1e3);
            }
            eprintln!("total: {:.3} ms", net.runtime.as_secs_f64() * 1e3);
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { spec, out, jobs, seed: _ } => {
            let text = std::fs::read_to_string(&spec)
                .map_err(|e| CliError::Io { path: spec.display().to_string(), message: e.to_string() })?;
            let spec = SweepSpec::parse(&text)?;
            let rows = cmd_sweep(&spec, jobs)?;
            write_output(out.as_deref(), &sweep_csv(&rows))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportAidg { model, workload, iterations, annotate, max_instructions, map, out } => {
            let m = load_model(&model)?;
            let w = Workload::load(&workload)?;
            let dot = cmd_export_aidg(&m, &w, map.mapping(), iterations, annotate, max_instructions)?;
            write_output(out.as_deref(), &dot)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
