use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hjbv::config::ProblemSection;
use hjbv::{
    cmd_benchmark, cmd_simulate, cmd_solve, cmd_verify, finish, Benchmark, Error, Parallel, Result,
    RunConfig,
};

#[derive(Parser)]
#[command(
    name = "hjbv",
    version,
    about = "Verify candidate optimal controls through the HJB duality gap"
)]
struct Cli {
    /// Run configuration (sectioned key = value)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the Monte Carlo seed of the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on it)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the HJB equation on the configured grid
    Solve,
    /// Estimate the expected cost of the configured policy
    Simulate,
    /// Check the fundamental identity and issue a certificate
    Verify,
    /// Run a built-in benchmark with self-checks
    Benchmark {
        name: BenchName,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        /// Profile times, comma separated
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.5, 1.0])]
        times: Vec<f64>,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        x_min: f64,
        #[arg(long, default_value_t = 5.0)]
        x_max: f64,
        #[arg(long, default_value_t = 141)]
        points: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchName {
    Advertising,
    ExitDemo,
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", p.display()),
            ))
        })?,
        None => String::new(),
    };
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(s) = seed {
        cfg.mc.seed = s;
    }
    Ok(cfg)
}

fn benchmark_config(
    cli: &Cli,
    name: BenchName,
    eta: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    horizon: Option<f64>,
) -> Result<RunConfig> {
    let mut cfg = load_config(cli.config.as_deref(), cli.seed)?;
    match name {
        BenchName::Advertising => {
            let base = match cfg.problem {
                ProblemSection::Advertising { .. } => cfg.problem,
                _ => RunConfig::parse("")?.problem,
            };
            let ProblemSection::Advertising {
                eta: e,
                alpha: a,
                beta: b,
                horizon: h,
            } = base
            else {
                unreachable!()
            };
            let problem = ProblemSection::Advertising {
                eta: eta.unwrap_or(e),
                alpha: alpha.unwrap_or(a),
                beta: beta.unwrap_or(b),
                horizon: horizon.unwrap_or(h),
            };
            if !matches!(cfg.problem, ProblemSection::Advertising { .. }) {
                cfg = RunConfig::defaults(problem);
            }
            cfg.problem = problem;
        }
        BenchName::ExitDemo => {
            if !matches!(cfg.problem, ProblemSection::ExitDemo(_)) {
                cfg = RunConfig::parse("[problem]\nkind = exit_demo\n")?;
            }
        }
    }
    if let Some(s) = cli.seed {
        cfg.mc.seed = s;
    }
    // parameters are validated before anything is written
    cfg.problem.build()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (name, result) = run(&cli);
    let code = finish(&cli.out, name, &result);
    match &result {
        Ok(o) => {
            for f in &o.written {
                println!("wrote {}", f.display());
            }
            for f in &o.failures {
                eprintln!("FAILED {}: {}", f.check, f.detail);
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(code as u8)
}

fn run(cli: &Cli) -> (&'static str, Result<hjbv::Outcome>) {
    let exec = match Parallel::new(cli.threads) {
        Ok(e) => e,
        Err(e) => return ("setup", Err(Error::Io(e))),
    };
    match &cli.command {
        Command::Solve => (
            "solve",
            load_config(cli.config.as_deref(), cli.seed)
                .and_then(|c| cmd_solve(&c, &cli.out, &exec)),
        ),
        Command::Simulate => (
            "simulate",
            load_config(cli.config.as_deref(), cli.seed)
                .and_then(|c| cmd_simulate(&c, &cli.out, &exec)),
        ),
        Command::Verify => (
            "verify",
            load_config(cli.config.as_deref(), cli.seed)
                .and_then(|c| cmd_verify(&c, &cli.out, &exec)),
        ),
        Command::Benchmark {
            name,
            eta,
            alpha,
            beta,
            horizon,
            times,
            x_min,
            x_max,
            points,
        } => {
            let bench = match name {
                BenchName::Advertising => Benchmark::Advertising {
                    times: times.clone(),
                    x_min: *x_min,
                    x_max: *x_max,
                    points: *points,
                },
                BenchName::ExitDemo => Benchmark::ExitDemo,
            };
            (
                "benchmark",
                benchmark_config(cli, *name, *eta, *alpha, *beta, *horizon)
                    .and_then(|c| cmd_benchmark(&c, &bench, &cli.out, &exec)),
            )
        }
    }
}
