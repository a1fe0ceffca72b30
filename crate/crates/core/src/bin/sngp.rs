use std::f64::consts::PI;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparse_nngp::experiments::{
    build_table, inspect_table, run_sweep, run_theory, run_verify, sweep_csv, theory_csv, verify_csv, write_text,
    DatasetSource, SweepSpec, VerifySpec,
};
use sparse_nngp::lookup::{TableCache, DEFAULT_GRID_SIZE};
use sparse_nngp::Error;

#[derive(Parser)]
#[command(name = "sngp", version, about = "Sparse-activity NNGP kernels: sweeps, theory and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// KRR accuracy, MSE and ED over an f x L grid.
    Sweep(GridArgs),
    /// Learning-curve theory against measured error on the full sample set.
    Theory(GridArgs),
    /// Analytic kernel against wide random networks; exit 3 if any |z| > 4.
    Verify(VerifyArgs),
    /// Build or inspect lookup-table files.
    #[command(subcommand)]
    Table(TableCommand),
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.3,0.5")]
    f_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,8,11")]
    depth_grid: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    p_train: usize,
    /// Cap on test samples per split.
    #[arg(long)]
    p_test: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// circulant:M[:blocks] | idx:IMG:LBL[:TEST_IMG:TEST_LBL] | csv:PATH | csv-header:PATH
    #[arg(long, default_value = "circulant:1500:2")]
    dataset: String,
    /// Rescale every input to unit norm.
    #[arg(long)]
    unit_norm: bool,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args)]
struct IoArgs {
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for cached lookup tables.
    #[arg(long, env = "SNGP_TABLE_DIR")]
    table_dir: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5")]
    f_grid: Vec<f64>,
    /// Angles between the two unit inputs, in multiples of pi.
    #[arg(long, value_delimiter = ',', default_value = "0,0.3333333333333333,0.5")]
    theta_grid: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    width: usize,
    #[arg(long, default_value_t = 32)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scale the analytic kernel by this factor before comparing.
    #[arg(long, default_value_t = 1.0)]
    corrupt: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum TableCommand {
    Build {
        #[arg(long)]
        f: f64,
        #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
        grid_size: usize,
        #[arg(long)]
        path: PathBuf,
    },
    Inspect {
        #[arg(long)]
        path: PathBuf,
    },
}

enum Failure {
    Lib(Error),
    Verification(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io { path: "<stdout>".into(), source: e })
        }
    }
}

fn sweep_spec(a: &GridArgs) -> Result<SweepSpec, Error> {
    let mut spec =
        SweepSpec::new(a.dataset.parse::<DatasetSource>()?, a.f_grid.clone(), a.depth_grid.clone(), a.p_train);
    spec.ridge = a.ridge;
    spec.p_test = a.p_test;
    spec.trials = a.trials;
    spec.seed = a.seed;
    spec.unit_normalize = a.unit_norm;
    Ok(spec)
}

fn cache(io: &IoArgs) -> TableCache {
    match &io.table_dir {
        Some(d) => TableCache::with_dir(d, DEFAULT_GRID_SIZE),
        None => TableCache::new(DEFAULT_GRID_SIZE),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Sweep(a) => {
            let (rows, cells) = run_sweep(&sweep_spec(&a)?, &cache(&a.io))?;
            emit(a.io.out.as_ref(), &sweep_csv(&rows, &cells))?;
        }
        Command::Theory(a) => {
            let rows = run_theory(&sweep_spec(&a)?, &cache(&a.io))?;
            emit(a.io.out.as_ref(), &theory_csv(&rows))?;
        }
        Command::Verify(a) => {
            let spec = VerifySpec {
                f_values: a.f_grid,
                thetas: a.theta_grid.iter().map(|t| t * PI).collect(),
                n_units: a.width,
                trials: a.trials,
                seed: a.seed,
                corruption: a.corrupt,
            };
            let rows = run_verify(&spec)?;
            emit(a.out.as_ref(), &verify_csv(&rows))?;
            let failed = rows.iter().filter(|r| !r.passed()).count();
            if failed > 0 {
                return Err(Failure::Verification(failed));
            }
        }
        Command::Table(TableCommand::Build { f, grid_size, path }) => {
            build_table(f, grid_size, &path)?;
            println!("{}", inspect_table(&path)?);
        }
        Command::Table(TableCommand::Inspect { path }) => {
            println!("{}", inspect_table(&path)?);
        }
    }
    Ok(())
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(n)) => {
            eprintln!("verification failed: {n} check(s) beyond |z| = 4");
            ExitCode::from(3)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Dimension(_) => 1,
                _ => 2,
            })
        }
    }
}
