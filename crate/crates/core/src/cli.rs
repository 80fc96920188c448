//! Command-line front end.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::evaluation::Method;
use crate::pipeline::{Run, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "gridmon", version, about = "ANN grid monitoring with sparse measurements, compared against WLS state estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate training and test scenarios and cache their power flows.
    Generate(Common),
    /// Train voltage and loading networks for every selected case.
    Train(Common),
    /// Run test cases and write per-scenario results and a summary.
    Evaluate(Common),
    /// Sweep hidden-layer count and layer-size multiplier on one case.
    Tune {
        #[command(flatten)]
        common: Common,
        /// Hidden-layer counts to try.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        layers: Vec<usize>,
        /// Layer-size multipliers to try.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        multipliers: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Grid file (TOML); defaults to the bundled CIGRE MV grid.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Master seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Comma-separated case ids; all cases when omitted.
    #[arg(long, value_delimiter = ',')]
    pub cases: Vec<String>,
    /// Test-case catalog (TOML); defaults to the bundled catalog.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Comma-separated estimators.
    #[arg(long, value_delimiter = ',', default_value = "ann,wls")]
    pub methods: Vec<String>,
    /// Voltage outlier correction before estimation.
    #[arg(long, value_enum, default_value = "off")]
    pub v_correction: Toggle,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// TOML file whose keys override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replay scenarios from this CSV as the test set.
    #[arg(long)]
    pub test_scenarios: Option<PathBuf>,
}

impl Common {
    pub fn to_config(&self) -> Result<RunConfig> {
        let methods = self.methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>>>()?;
        let cfg = RunConfig {
            grid: self.grid.clone(),
            cases_file: self.catalog.clone(),
            seed: self.seed,
            cases: self.cases.clone(),
            methods,
            v_correction: self.v_correction == Toggle::On,
            jobs: self.jobs,
            out: self.out.clone(),
            test_scenarios: self.test_scenarios.clone(),
            ..RunConfig::default()
        };
        match &self.config {
            Some(path) => cfg.with_config_file(path),
            None => Ok(cfg),
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_NUMERICAL
    }
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(f)
}

pub fn execute(cli: Cli) -> Result<()> {
    let (common, tune) = match &cli.command {
        Command::Generate(c) | Command::Train(c) | Command::Evaluate(c) => (c, None),
        Command::Tune {
            common,
            layers,
            multipliers,
        } => (common, Some((layers.clone(), multipliers.clone()))),
    };
    let cfg = common.to_config()?;
    let jobs = cfg.jobs;
    let run = Run::new(cfg)?;
    with_pool(jobs, || match &cli.command {
        Command::Generate(_) => run.generate(),
        Command::Train(_) => run.train().map(|_| ()),
        Command::Evaluate(_) => {
            for r in run.evaluate()? {
                println!("{:<6} {:<4} SR(C1) {:>7.2} %  SR(C2) {:>7.2} %", r.case, r.method, 100.0 * r.sr_c1, 100.0 * r.sr_c2);
            }
            Ok(())
        }
        Command::Tune { .. } => {
            let (layers, multipliers) = tune.clone().expect("tune arguments");
            for r in run.tune(&layers, &multipliers)? {
                println!(
                    "{} x {}: {} neurons, SR(C1) {:.2} %, SR(C2) {:.2} %",
                    r.hidden_layers,
                    r.multiplier,
                    r.hidden_neurons,
                    100.0 * r.sr_c1,
                    100.0 * r.sr_c2
                );
            }
            Ok(())
        }
    })
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
