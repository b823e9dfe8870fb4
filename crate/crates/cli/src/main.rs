use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracbeam_cli::{
    cmd_run, cmd_sweep, cmd_table1, default_workers, parse_p_list, parse_sweep_axis,
    verdict_exit_code, CliError, EXIT_FAILED, EXIT_OK, EXIT_USAGE,
};

#[derive(Parser)]
#[command(name = "fracbeam", version, about = "Clamped beam with fractional damping, delay and a power source")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long = "T")]
        t_final: Option<f64>,
    },
    /// Critical amplitudes and well depths.
    Table1 {
        /// `3..9` or a comma-separated list.
        #[arg(long, default_value = "3..9")]
        p: String,
        /// Print the largest relative deviation from the reference values.
        #[arg(long)]
        compare: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a grid over one or two parameters.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `name=start:step:stop` or `name=v1,v2,...`; repeat for a second axis.
        #[arg(long, required = true)]
        vary: Vec<String>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Run {
            config,
            out,
            dt,
            t_final,
        } => {
            let summary = cmd_run(&config, &out, dt, t_final)?;
            println!("{}", summary.line());
            Ok(verdict_exit_code(&summary.verdict))
        }
        Command::Table1 { p, compare, out } => {
            let p_list = parse_p_list(&p).map_err(|e| CliError::Sweep(format!("--p {e}")))?;
            let (rows, dev) = cmd_table1(&out, &p_list, compare)?;
            for r in &rows {
                println!("p={} lambda_c={:.6} d={:.6} lambda_d={:.6}", r.p, r.lambda_c, r.d, r.lambda_d);
            }
            if compare {
                match dev {
                    Some(d) => println!("max_relative_deviation={d:.6e}"),
                    None => println!("max_relative_deviation=none"),
                }
            }
            Ok(EXIT_OK)
        }
        Command::Sweep {
            config,
            vary,
            workers,
            out,
        } => {
            let axes = vary
                .iter()
                .map(|s| parse_sweep_axis(s))
                .collect::<Result<Vec<_>, _>>()?;
            let rows = cmd_sweep(&config, &axes, &out, workers.unwrap_or_else(default_workers))?;
            println!("points={}", rows.len());
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    let code = match dispatch(cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(u8::try_from(code).unwrap_or(EXIT_FAILED as u8))
}
