use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use aoisched::run::{self, SolverCache};
use aoisched::{CliError, CliResult, Config};
use clap::{Args, Parser, Subcommand};

const AFTER_HELP: &str = "\
Configuration is a TOML file; every key is optional. Run `aoisched check --dump-config`
to print the defaults: m = 3, MAF scheduler, tick_length = 1, service two_point
{low = 0, high = 3, p = 0.5}, linear penalty, zero_wait sampler, 10^6 deliveries with
seed 1, warm-up 10·m, 50 batches, waiting menu 0..=2·max service in 1-tick steps,
eps1 = 1e-3·u, eps2 = 1e-6·(zero-wait cost span), tuning over 2·10^5 deliveries to 1%.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.";

#[derive(Parser)]
#[command(name = "aoisched", version, about = "Joint scheduling and sampling for multi-source age-of-information systems", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (TOML).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set service.p=0.9` (repeatable).
    #[arg(short = 's', long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the optimal sampler and write the solution file.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Solution file (JSON); printed to stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Simulate one configuration and print a CSV row.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the sweep axes and policy pairs of the configuration, writing CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Exhaustively search stationary policies on a tiny instance.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Report whether zero-wait is guaranteed optimal and its Ta-AP under a linear penalty.
    Check {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Self::Solve { common, .. }
            | Self::Simulate { common, .. }
            | Self::Sweep { common, .. }
            | Self::Oracle { common }
            | Self::Check { common } => common,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: &Command) -> CliResult<u8> {
    let common = command.common();
    let cfg = Config::load(common.config.as_deref(), &common.overrides)?;
    if common.dump_config {
        print!("{}", cfg.to_toml()?);
        return Ok(0);
    }
    match command {
        Command::Solve { output, .. } => {
            let sol = run::solve(&cfg)?;
            let waiting = sol.policy.iter().filter(|w| **w > 0).count();
            eprintln!(
                "beta_star {}  states {}  waiting states {}  bisection steps {}",
                sol.beta_star,
                sol.space.len(),
                waiting,
                sol.bisection_steps
            );
            match output {
                Some(path) => run::write_solution(&sol, path)?,
                None => println!("{}", serde_json::to_string_pretty(&sol.to_record())?),
            }
            Ok(0)
        }
        Command::Simulate { output, .. } => {
            let out = run::run_simulation(&cfg, &SolverCache::new())?;
            write_rows(&[out.row], output.as_ref())?;
            Ok(0)
        }
        Command::Sweep { output, .. } => {
            let rows = run::run_sweep(&cfg)?;
            write_rows(&rows, output.as_ref())?;
            let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
            if failed > 0 {
                eprintln!("{failed} of {} sweep rows failed", rows.len());
                return Ok(2);
            }
            Ok(0)
        }
        Command::Oracle { .. } => {
            let (space, best) = run::oracle(&cfg)?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "state\twait")?;
            for (s, w) in space.states().iter().zip(best.policy.waits()) {
                writeln!(out, "{s}\t{w}")?;
            }
            writeln!(out, "value\t{}", best.value)?;
            writeln!(out, "evaluated\t{}", best.evaluated)?;
            writeln!(out, "skipped\t{}", best.skipped)?;
            Ok(0)
        }
        Command::Check { .. } => {
            print!("{}", run::check(&cfg)?);
            Ok(0)
        }
    }
}

fn write_rows<T: serde::Serialize>(rows: &[T], output: Option<&PathBuf>) -> CliResult<()> {
    match output {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
            run::write_csv(rows, std::io::BufWriter::new(file))
        }
        None => run::write_csv(rows, std::io::stdout().lock()),
    }
}
