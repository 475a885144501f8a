use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use trajsim_cli::bench::{run_bench, to_csv, BenchSpec};
use trajsim_cli::commands::{
    cmd_run, cmd_trajectories, memory_budget_bytes, CliError, PrecisionOpt, RunOptions,
    TrajOptions,
};
use trajsim_core::SamplingMode;

/// State-vector quantum circuit simulator with quantum-trajectory noise.
#[derive(Parser)]
#[command(name = "trajsim", version, about)]
struct Cli {
    /// Worker threads for gate application (defaults to the core count).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Noiseless fused simulation of a circuit file.
    Run {
        circuit: PathBuf,
        /// Samples to draw when the state is too large to print.
        #[arg(long, default_value_t = 1000)]
        shots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = PrecisionOpt::Single)]
        precision: PrecisionOpt,
        #[arg(long, default_value_t = 4)]
        max_fuse_size: usize,
        /// Lane count of the blocked state layout.
        #[arg(long, default_value_t = 8)]
        lanes: usize,
        /// Print amplitudes when the qubit count is at most this.
        #[arg(long, default_value_t = 10)]
        amps_threshold: usize,
        /// Write the final state in QSV1 binary format.
        #[arg(long)]
        dump_state: Option<PathBuf>,
        /// Write the fusion plan (gate indices per fused gate) as JSON.
        #[arg(long)]
        dump_fusion_plan: Option<PathBuf>,
    },
    /// Noisy simulation via quantum trajectories on a worker farm.
    Trajectories {
        circuit: PathBuf,
        /// Calibration JSON; its noise model is applied to the circuit.
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        trajectories: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long, value_enum, default_value_t = ModeOpt::Delayed)]
        mode: ModeOpt,
        /// Comma-separated Pauli strings (default: Z on every qubit).
        #[arg(long)]
        observables: Option<String>,
        /// Also sample this many bitstrings per trajectory.
        #[arg(long)]
        histogram_shots: Option<usize>,
        #[arg(long, default_value_t = 4)]
        max_fuse_size: usize,
        #[arg(long, default_value_t = 8)]
        lanes: usize,
        #[arg(long, value_enum, default_value_t = PrecisionOpt::Single)]
        precision: PrecisionOpt,
        /// Trajectories per farm job.
        #[arg(long, default_value_t = 256)]
        chunk: usize,
        /// Output directory for per-job partials and summary.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Redraw pair Z-phase errors for every trajectory.
        #[arg(long)]
        resample_zphases: bool,
        /// Farm configuration JSON ({limit, chunk, tick_ms, retries}).
        #[arg(long)]
        farm_config: Option<PathBuf>,
    },
    /// Run a benchmark sweep from a spec file; prints CSV.
    Bench {
        spec: PathBuf,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum ModeOpt {
    Delayed,
    Conventional,
}

impl From<ModeOpt> for SamplingMode {
    fn from(m: ModeOpt) -> SamplingMode {
        match m {
            ModeOpt::Delayed => SamplingMode::Delayed,
            ModeOpt::Conventional => SamplingMode::Conventional,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Run {
            circuit,
            shots,
            seed,
            precision,
            max_fuse_size,
            lanes,
            amps_threshold,
            dump_state,
            dump_fusion_plan,
        } => {
            let output = cmd_run(&RunOptions {
                circuit,
                shots,
                seed,
                precision,
                max_fuse_size,
                lanes,
                amps_threshold,
                dump_state,
                dump_fusion_plan,
            })?;
            println!("{}", serde_json::to_string_pretty(&output).unwrap());
        }
        Command::Trajectories {
            circuit,
            calibration,
            trajectories,
            seed,
            workers,
            mode,
            observables,
            histogram_shots,
            max_fuse_size,
            lanes,
            precision,
            chunk,
            out,
            resample_zphases,
            farm_config,
        } => {
            let summary = cmd_trajectories(&TrajOptions {
                circuit,
                calibration,
                trajectories,
                seed,
                workers,
                mode: mode.into(),
                observables,
                histogram_shots,
                max_fuse_size,
                lanes,
                precision,
                chunk,
                out_dir: out,
                resample_zphases,
                farm_config,
            })?;
            print!("{}", summary.to_json());
        }
        Command::Bench { spec, output } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| {
                CliError::Validation(format!("cannot read {}: {e}", spec.display()))
            })?;
            let spec = BenchSpec::from_json(&text)?;
            let records = run_bench(&spec, memory_budget_bytes())?;
            let csv = to_csv(&records);
            match output {
                Some(path) => std::fs::write(path, csv)
                    .map_err(|e| CliError::Validation(e.to_string()))?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
