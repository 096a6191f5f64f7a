//! Command-line parsing and dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use jkext::exact::{verify_variance_drop, FiniteDist};
use jkext::families::{aseff, Family};
use jkext::hoeffding::{clt_diagnostic, variance_drop_report, Method, MonteCarlo};
use jkext::kernels::Kernel;
use jkext::lstat::{chain_weights, median_weights};
use jkext::scalar::{fraction, parse_fraction, rational_to_f64};
use jkext::ustat::{extend_chain_with, incomplete_u_statistic_with, u_statistic_with, ChainMode};
use jkext::{Estimator, Parallelism, Sample};

use crate::config::{ExperimentConfig, OutputFormat};
use crate::experiments::run_experiment;
use crate::table;

#[derive(Debug, Parser)]
#[command(name = "jkext", version, about = "Jackknife extensions, U-statistics and their efficiency")]
struct Cli {
    /// Base seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Never changes results.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Identity,
    Literal,
    Memoized,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Numeric,
    MonteCarlo,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// U-statistic of a kernel over a sample.
    Ustat {
        #[arg(long)]
        kernel: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        data: String,
        /// Estimate from this many random subsets instead of all of them.
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Jackknife extension of an estimator to one more observation, or the
    /// full extension chain of a kernel with --chain.
    Extend {
        /// `mean`, `median` or a kernel label.
        #[arg(long)]
        estimator: String,
        #[arg(long, allow_hyphen_values = true)]
        data: String,
        #[arg(long)]
        chain: bool,
        #[arg(long, value_enum, default_value = "memoized")]
        mode: ModeArg,
    },
    /// Exact order-statistic weights of the sample median and its extensions.
    MedianWeights {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        extend: usize,
    },
    /// Compares (n+1) var(extension) with n var(estimator).
    CheckVarianceDrop {
        /// `mean`, `median` or a kernel label.
        #[arg(long)]
        estimator: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        family: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<f64>,
        /// Finite distribution as `value:prob,...` with exact fractions,
        /// e.g. `0:1/2,1:1/2`.
        #[arg(long)]
        atoms: Option<String>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long, default_value_t = 20_000)]
        replications: usize,
    },
    /// Asymptotic efficiency of a kernel's U-statistic.
    Efficiency {
        #[arg(long)]
        family: String,
        #[arg(long)]
        kernel: String,
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long, value_enum, default_value = "numeric")]
        method: MethodArg,
        #[arg(long, default_value_t = 60_000)]
        outer: usize,
        #[arg(long, default_value_t = 200)]
        inner: usize,
    },
    /// Simulated distribution of sqrt(n)(U - gamma) against its normal limit.
    Clt {
        #[arg(long)]
        family: String,
        #[arg(long)]
        kernel: String,
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 5000)]
        replications: usize,
    },
    /// Runs a config-driven experiment and writes its table.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<OutputFormat>,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        classify(e)
    }
}

impl From<jkext::Error> for Failure {
    fn from(e: jkext::Error) -> Self {
        classify(e.into())
    }
}

/// Bad input named on the command line is a usage error; anything that
/// fails while computing is a runtime error.
fn classify(e: anyhow::Error) -> Failure {
    use jkext::Error as E;
    match e.downcast_ref::<E>() {
        Some(
            E::SampleTooShort { .. }
            | E::LengthMismatch { .. }
            | E::EvenMedianArity(_)
            | E::UnknownKernel(_)
            | E::UnknownFamily(_)
            | E::ParameterOutOfDomain { .. }
            | E::InvalidArgument(_),
        ) => Failure::Usage(e),
        _ => Failure::Runtime(e),
    }
}

type Outcome = Result<(), Failure>;

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code: 0 success, 2 usage error, 1 runtime error.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => 0,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            eprintln!("run with --help for usage");
            2
        }
        Err(Failure::Runtime(e)) => {
            // a closed downstream pipe (e.g. `| head`) is not a failure
            if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) {
                return 0;
            }
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn parse_data(text: &str) -> Result<Sample, Failure> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| anyhow!("invalid number '{}' in --data", s.trim())))
        .collect::<anyhow::Result<Vec<f64>>>()
        .map_err(Failure::Usage)?;
    Sample::new(values).map_err(|e| Failure::Usage(e.into()))
}

fn parse_atoms(text: &str) -> Result<FiniteDist, Failure> {
    let atoms = text
        .split(',')
        .map(|pair| {
            let (v, p) = pair.split_once(':').with_context(|| format!("atom '{pair}' is not value:prob"))?;
            let v = parse_fraction(v).with_context(|| format!("invalid atom value '{v}'"))?;
            let p = parse_fraction(p).with_context(|| format!("invalid probability '{p}'"))?;
            Ok((v, p))
        })
        .collect::<anyhow::Result<Vec<_>>>()
        .map_err(Failure::Usage)?;
    FiniteDist::new(atoms).map_err(|e| Failure::Usage(e.into()))
}

fn estimator(label: &str, n: usize) -> Result<Estimator, Failure> {
    match label {
        "mean" => Ok(Estimator::mean(n)),
        "median" => Ok(Estimator::median(n)),
        _ => {
            let k = Kernel::from_label(label)?;
            if k.arity() == n {
                Ok(Estimator::from_kernel(k))
            } else {
                Ok(Estimator::u_statistic(k, n)?)
            }
        }
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure::Runtime(e.into())
}

fn run(cli: Cli, out: &mut impl Write) -> Outcome {
    let par = cli.workers.map(Parallelism::from_workers).unwrap_or_default();
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Ustat { kernel, data, draws } => {
            let k = Kernel::from_label(&kernel)?;
            let sample = parse_data(&data)?;
            let value = match draws {
                Some(d) => incomplete_u_statistic_with(&k, &sample, d, seed, par)?,
                None => u_statistic_with(&k, &sample, par)?,
            };
            writeln!(out, "{value:?}").map_err(io)?;
        }
        Command::Extend {
            estimator: label,
            data,
            chain,
            mode,
        } => {
            let sample = parse_data(&data)?;
            let value = if chain {
                let k = Kernel::from_label(&label)?;
                let mode = match mode {
                    ModeArg::Identity => ChainMode::Identity,
                    ModeArg::Literal => ChainMode::Literal,
                    ModeArg::Memoized => ChainMode::Memoized,
                };
                extend_chain_with(&k, &sample, mode)?
            } else {
                let n = sample.len() - 1;
                if n == 0 {
                    return Err(Failure::Usage(anyhow!("extension needs at least two observations")));
                }
                let base = match label.as_str() {
                    "mean" | "median" => estimator(&label, n)?,
                    _ => {
                        let k = Kernel::from_label(&label)?;
                        if k.arity() != n {
                            return Err(Failure::Usage(anyhow!(
                                "kernel {} has arity {}; --data must hold {} values",
                                k.label(),
                                k.arity(),
                                k.arity() + 1
                            )));
                        }
                        Estimator::from_kernel(k)
                    }
                };
                jkext::ustat::jackknife_extend(&base, &sample)?
            };
            writeln!(out, "{value:?}").map_err(io)?;
        }
        Command::MedianWeights { n, extend } => {
            if n == 0 {
                return Err(Failure::Usage(anyhow!("--n must be positive")));
            }
            let w = chain_weights(&median_weights(n)?, n + extend)?;
            writeln!(out, "{}", w.to_fractions().join(", ")).map_err(io)?;
            for (i, r) in w.weights().iter().enumerate() {
                writeln!(out, "{}\t{}\t{:?}", i + 1, fraction(r), rational_to_f64(r)).map_err(io)?;
            }
        }
        Command::CheckVarianceDrop {
            estimator: label,
            n,
            family,
            theta,
            atoms,
            method,
            replications,
        } => {
            let est = estimator(&label, n)?;
            match (atoms, family) {
                (Some(atoms), None) => {
                    let dist = parse_atoms(&atoms)?;
                    let r = verify_variance_drop(&est, &dist)?;
                    writeln!(out, "lhs = {} ({:?})", fraction(&r.lhs), rational_to_f64(&r.lhs)).map_err(io)?;
                    writeln!(out, "rhs = {} ({:?})", fraction(&r.rhs), rational_to_f64(&r.rhs)).map_err(io)?;
                    let margin = r.margin();
                    writeln!(out, "margin = {} ({:?})", fraction(&margin), rational_to_f64(&margin)).map_err(io)?;
                    writeln!(out, "holds = {}", r.holds).map_err(io)?;
                }
                (None, Some(family)) => {
                    let fam = Family::by_name(&family)?;
                    let theta = theta.ok_or_else(|| Failure::Usage(anyhow!("--theta is required with --family")))?;
                    let method = match method {
                        Some(MethodArg::Exact) => Method::Exact,
                        Some(MethodArg::Numeric) => Method::Numeric,
                        Some(MethodArg::MonteCarlo) => {
                            Method::MonteCarlo(MonteCarlo::new(replications, 1, seed).with_parallelism(par))
                        }
                        None if fam.finite_dist(theta).is_some() => Method::Exact,
                        None => Method::MonteCarlo(MonteCarlo::new(replications, 1, seed).with_parallelism(par)),
                    };
                    let r = variance_drop_report(&fam, &est, theta, &method)?;
                    match &r.exact {
                        Some(ex) => {
                            writeln!(out, "lhs = {} ({:?})", fraction(&ex.lhs), r.lhs).map_err(io)?;
                            writeln!(out, "rhs = {} ({:?})", fraction(&ex.rhs), r.rhs).map_err(io)?;
                        }
                        None => {
                            writeln!(out, "lhs = {:?}", r.lhs).map_err(io)?;
                            writeln!(out, "rhs = {:?}", r.rhs).map_err(io)?;
                            writeln!(out, "tolerance = {:?}", r.tolerance).map_err(io)?;
                        }
                    }
                    writeln!(out, "margin = {:?}", r.margin).map_err(io)?;
                    writeln!(out, "holds = {}", r.holds).map_err(io)?;
                }
                _ => {
                    return Err(Failure::Usage(anyhow!("give exactly one of --atoms or --family")));
                }
            }
        }
        Command::Efficiency {
            family,
            kernel,
            theta,
            method,
            outer,
            inner,
        } => {
            let fam = Family::by_name(&family)?;
            let k = Kernel::from_label(&kernel)?;
            let method = match method {
                MethodArg::Exact => Method::Exact,
                MethodArg::Numeric => Method::Numeric,
                MethodArg::MonteCarlo => Method::MonteCarlo(MonteCarlo::new(outer, inner, seed).with_parallelism(par)),
            };
            let e = aseff(&fam, &k, theta, &method)?;
            writeln!(out, "aseff = {:?}", e.aseff).map_err(io)?;
            writeln!(out, "reference = {:?}", e.reference).map_err(io)?;
            writeln!(out, "gamma = {:?}", e.gamma).map_err(io)?;
            writeln!(out, "gamma_prime = {:?}", e.gamma_prime).map_err(io)?;
            writeln!(out, "fisher = {:?}", e.fisher).map_err(io)?;
            writeln!(out, "v1 = {:?}", e.v1).map_err(io)?;
            if let Some(se) = e.v1_std_err {
                writeln!(out, "v1_std_err = {se:?}").map_err(io)?;
            }
        }
        Command::Clt {
            family,
            kernel,
            theta,
            n,
            replications,
        } => {
            let fam = Family::by_name(&family)?;
            let k = Kernel::from_label(&kernel)?;
            let d = clt_diagnostic(&fam, &k, theta, n, replications, seed, par)?;
            writeln!(out, "empirical_variance = {:?}", d.empirical_variance).map_err(io)?;
            writeln!(out, "predicted_variance = {:?}", d.predicted_variance).map_err(io)?;
            writeln!(out, "ratio = {:?}", d.ratio).map_err(io)?;
            writeln!(out, "ks_statistic = {:?}", d.ks_statistic).map_err(io)?;
        }
        Command::Experiment {
            config,
            out: out_path,
            format,
        } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(Failure::Usage)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let rows = run_experiment(&cfg, par)?;
            let format = format.or(cfg.format).unwrap_or_default();
            let bytes = match format {
                OutputFormat::Csv => table::to_csv(&rows)?,
                OutputFormat::Json => table::to_json(&rows)?,
            };
            match out_path.or(cfg.output.clone()) {
                Some(path) => std::fs::write(&path, bytes)
                    .with_context(|| format!("cannot write {}", path.display()))
                    .map_err(Failure::Runtime)?,
                None => out.write_all(&bytes).map_err(io)?,
            }
        }
    }
    Ok(())
}
