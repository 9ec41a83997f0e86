use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ehwsn_cli::commands::{self, SolutionRecord};
use ehwsn_cli::config::Config;
use ehwsn_cli::error::{exit, HarnessError};
use ehwsn_cli::validate::{validate, Fault};
use ehwsn_core::optimizer::Method;
use ehwsn_core::simulator::write_trace_csv;

#[derive(Parser)]
#[command(name = "ehwsn", version, about = "Power policies for energy-harvesting detection networks")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "EHWSN_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the power-allocation problem for every sensor.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Option<Method>,
        /// Write Ψ/Φ of each sensor's chain into this directory.
        #[arg(long, value_name = "DIR")]
        dump_chain: Option<PathBuf>,
        /// Record wall time in the output.
        #[arg(long)]
        timing: bool,
    },
    /// Monte-Carlo error probability for a solved (or freshly solved) policy.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        slots: Option<u64>,
        /// Reuse policies from an `optimize` output.
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Per-slot CSV trace.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        trace_slots: usize,
    },
    /// Run the [sweep] grid and write one CSV row per cell.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        slots: Option<u64>,
        #[arg(long)]
        timing: bool,
    },
    /// Check the implementation against independent oracles.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        slots: Option<u64>,
        #[arg(long, value_name = "FAULT")]
        inject_fault: Option<Fault>,
    },
}

fn load(common: &Common, method: Option<Method>) -> Result<(Config, u64), HarnessError> {
    let mut cfg = Config::load(&common.config)?;
    if let Some(m) = method {
        cfg.method = m;
    }
    let seed = common.seed.unwrap_or(cfg.seed);
    Ok((cfg, seed))
}

fn read_solution(path: &Path) -> Result<SolutionRecord, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::config(path.display().to_string(), e.to_string()))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(HarnessError::config("workers", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::config("workers", e.to_string()))?;
    }
    match cli.command {
        Command::Optimize { common, method, dump_chain, timing } => {
            let (cfg, seed) = load(&common, method)?;
            let record = commands::optimize(&cfg, cfg.method, seed, timing)?;
            if let Some(dir) = dump_chain {
                commands::dump_chains(&cfg, &record.policies(), &dir)?;
            }
            commands::write_json(&record, common.out.as_deref())
        }
        Command::Simulate { common, method, slots, solution, trace, trace_slots } => {
            let (cfg, seed) = load(&common, method)?;
            let policies = match solution {
                Some(p) => read_solution(&p)?.policies(),
                None => commands::optimize(&cfg, cfg.method, seed, false)?.policies(),
            };
            let slots = slots.unwrap_or(cfg.simulation.slots);
            let keep = if trace.is_some() { trace_slots } else { 0 };
            let (report, result) = commands::simulate(&cfg, &policies, slots, seed, keep)?;
            if let Some(path) = trace {
                let file = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
                write_trace_csv(&result.trace, std::io::BufWriter::new(file)).map_err(|e| HarnessError::io(&path, e))?;
            }
            commands::write_json(&report, common.out.as_deref())
        }
        Command::Sweep { common, slots, timing } => {
            let (cfg, seed) = load(&common, None)?;
            let slots = slots.unwrap_or(cfg.simulation.slots);
            let rows = commands::sweep(&cfg, seed, slots, timing)?;
            match common.out {
                Some(p) => {
                    let file = std::fs::File::create(&p).map_err(|e| HarnessError::io(&p, e))?;
                    commands::write_sweep_csv(&rows, file)
                }
                None => commands::write_sweep_csv(&rows, std::io::stdout().lock()),
            }
        }
        Command::Validate { common, method, slots, inject_fault } => {
            let (cfg, seed) = load(&common, method)?;
            let slots = slots.unwrap_or(cfg.simulation.slots);
            let report = validate(&cfg, seed, slots, inject_fault)?;
            for c in report.checks.iter().filter(|c| !c.passed) {
                eprintln!(
                    "FAIL {}::{} {}: observed {:e}, expected {:e} ± {:e}",
                    c.module, c.operation, c.name, c.observed, c.expected, c.tolerance
                );
            }
            commands::write_json(&report, common.out.as_deref())?;
            if report.passed {
                Ok(())
            } else {
                Err(HarnessError::ChecksFailed { failed: report.failed(), total: report.checks.len() })
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
