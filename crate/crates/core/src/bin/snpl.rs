use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use snpl::harness::{self, config};
use snpl::stability::{gamma_grid, linspace};
use snpl::Error;

#[derive(Parser)]
#[command(name = "snpl", version, about = "Safe offline policy learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the replicated synthetic benchmark.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply one learner to a dataset. Exit 0: new policy, 3: baseline, 2: bad input.
    Run {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate alpha'(delta*) / alpha over a grid of gamma and alpha.
    GammaGrid {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        alpha_steps: usize,
        #[arg(long, default_value_t = 80)]
        gamma_steps: usize,
        #[arg(long, default_value_t = 0.01)]
        alpha_min: f64,
        #[arg(long, default_value_t = 0.5)]
        alpha_max: f64,
        #[arg(long, default_value_t = 0.01)]
        gamma_min: f64,
        #[arg(long, default_value_t = 0.8)]
        gamma_max: f64,
    },
    /// Per-policy bound coordinates and pruning flags from one run.
    BoundsScatter {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Schema(_)
            | Error::EmptyDataset
            | Error::DimensionMismatch { .. }
            | Error::OutcomeOutOfRange { .. }
            | Error::ActionOutOfRange { .. }
            | Error::PositivityViolated { .. }
            | Error::InvalidPropensity(_)
            | Error::CovariateDimension { .. }
            | Error::InvalidSpec(_)
            | Error::InvalidHyperparameter(_)
            | Error::SensitivityBelowFloor { .. }
            | Error::EmptyPolicyClass
            | Error::UnknownMethod(_)
    )
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    if is_input_error(&e) {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn write(path: &PathBuf, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, out } => {
            let result = config::load_benchmark_config(&config)
                .and_then(|c| harness::benchmark::write_outputs(&c, &out));
            match result {
                Ok(report) => {
                    print!("{}", report.to_csv());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Run { data, config, out } => {
            let result = config::load_run_config(&config).and_then(|c| harness::run_single(&data, &c));
            match result {
                Ok(trace) => {
                    if let Err(e) = write(&out, &trace.to_json()) {
                        return fail(e);
                    }
                    let d = trace.decision();
                    println!("{}", d.policy_id);
                    if d.is_baseline() {
                        ExitCode::from(3)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::GammaGrid {
            out,
            alpha_steps,
            gamma_steps,
            alpha_min,
            alpha_max,
            gamma_min,
            gamma_max,
        } => {
            if alpha_steps < 1 || gamma_steps < 1 {
                return fail(Error::InvalidArgument("grid steps must be >= 1".into()));
            }
            let alphas = linspace(alpha_min, alpha_max, alpha_steps);
            let gammas = linspace(gamma_min, gamma_max, gamma_steps);
            match gamma_grid(&alphas, &gammas).and_then(|g| write(&out, &g.to_csv())) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
        Command::BoundsScatter { data, config, out } => {
            let result = config::load_run_config(&config).and_then(|c| {
                let ds = harness::read_dataset_file(&data, &c.dataset_schema())?;
                harness::emit_bounds_scatter(&ds, &c)
            });
            match result.and_then(|s| write(&out, &s.to_csv())) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            }
        }
    }
}
