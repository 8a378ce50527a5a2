//! `isoext`: generate instances, extend metrics, verify, compare and inspect.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use metric_extensor::extensor::{self, Mode, Precomputation, Truncation, MAX_TRUNCATION_LEVEL};
use metric_extensor::instance::Instance;
use metric_extensor::verify::{self, SuiteConfig, Tolerances};
use metric_extensor::wd::{self, WdCollection, WdReport};
use metric_extensor::{gen, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "isoext", version)]
#[command(about = "Isometric extension of metrics from a subset of a finite metric space")]
struct Cli {
    /// Suppress progress logs on standard error.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeFlag {
    Exact,
    Truncated,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a random instance (or the baseline demo) as JSON.
    Gen {
        /// Number of points.
        #[arg(long, required_unless_present = "demo")]
        n: Option<usize>,
        /// Size of the subset A.
        #[arg(long, required_unless_present = "demo")]
        a: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Emit the hand-built instance separating the extensor from the baseline.
        #[arg(long, conflicts_with_all = ["n", "a"])]
        demo: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extend one metric of an instance to the whole space.
    Extend {
        instance: PathBuf,
        #[arg(long)]
        metric: String,
        #[arg(long, value_enum, default_value_t = ModeFlag::Exact)]
        mode: ModeFlag,
        /// Truncation level (truncated mode).
        #[arg(long = "S", value_parser = clap::value_parser!(u32).range(0..=MAX_TRUNCATION_LEVEL as i64), conflicts_with = "tol")]
        level: Option<u32>,
        /// Target error bound; the smallest sufficient level is used (truncated mode).
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite and write a report; exits 1 if any check fails.
    Verify {
        instance: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random measures per transport check.
        #[arg(long, default_value_t = 50)]
        samples: usize,
        /// Override the tolerance of series and assembly identities.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the isometry defects of the extensor and the baseline on two metrics.
    Compare {
        instance: PathBuf,
        #[arg(num_args = 2, value_names = ["D", "E"], required = true)]
        metrics: Vec<String>,
        /// Also write the comparison as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the level-k cover with its condition check.
    Wd {
        instance: PathBuf,
        #[arg(long, default_value_t = 0)]
        k: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct WdDump<'a> {
    points: &'a [String],
    #[serde(flatten)]
    collection: &'a WdCollection,
    check: &'a WdReport,
}

struct Log {
    quiet: bool,
}

impl Log {
    fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("isoext: {}", msg.as_ref());
        }
    }
}

fn emit(out: Option<&Path>, json: &str, log: &Log) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, format!("{json}\n"))?;
            log.info(format!("wrote {}", path.display()));
        }
        None => print_stdout(json)?,
    }
    Ok(())
}

/// Writes to standard output; a closed pipe is not an error.
fn print_stdout(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn mode_from_flags(mode: ModeFlag, level: Option<u32>, tol: Option<f64>) -> Result<Mode> {
    match (mode, level, tol) {
        (ModeFlag::Exact, None, None) => Ok(Mode::Exact),
        (ModeFlag::Exact, _, _) => Err(Error::Domain(
            "--S and --tol require --mode truncated".into(),
        )),
        (ModeFlag::Truncated, Some(s), None) => Ok(Mode::Truncated(Truncation::Level(s))),
        (ModeFlag::Truncated, None, Some(t)) if t > 0.0 && t.is_finite() => {
            Ok(Mode::Truncated(Truncation::Bound(t)))
        }
        (ModeFlag::Truncated, None, Some(t)) => {
            Err(Error::Domain(format!("--tol must be positive, got {t}")))
        }
        (ModeFlag::Truncated, _, _) => {
            Err(Error::Domain("truncated mode needs --S or --tol".into()))
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let log = Log { quiet: cli.quiet };
    match cli.command {
        Command::Gen {
            n,
            a,
            seed,
            demo,
            out,
        } => {
            let file = if demo {
                gen::demo_instance()
            } else {
                let (n, a) = (n.expect("required by clap"), a.expect("required by clap"));
                gen::random_instance(n, a, seed)?
            };
            emit(out.as_deref(), &file.to_json(), &log)?;
        }
        Command::Extend {
            instance,
            metric,
            mode,
            level,
            tol,
            out,
        } => {
            let mode = mode_from_flags(mode, level, tol)?;
            let start = Instant::now();
            let inst = Instance::load(&instance)?;
            let d = inst.metric(&metric)?;
            let pre = Precomputation::new(inst.pair.clone())?;
            let mut result = extensor::extend_auto(&pre, d, mode)?;
            result.metric_name = Some(metric);
            log.info(format!(
                "S* = {}, summed through level {}, error bound {:e}, {:?} wall",
                result.s_star,
                result.level,
                result.error_bound,
                start.elapsed()
            ));
            emit(out.as_deref(), &result.to_json(), &log)?;
        }
        Command::Verify {
            instance,
            seed,
            samples,
            tol,
            out,
        } => {
            let start = Instant::now();
            let inst = Instance::load(&instance)?;
            let mut tolerances = Tolerances::default();
            if let Some(t) = tol {
                tolerances.series = t;
            }
            let config = SuiteConfig {
                seed,
                samples,
                tolerances,
                ..SuiteConfig::default()
            };
            let report = verify::run_suite(&inst, &config)?;
            for check in report.failures() {
                log.info(format!("FAIL {} (slack {:e})", check.id, check.slack));
            }
            log.info(format!(
                "S* = {}, {} checks, {} failed, {:?} wall",
                report.s_star,
                report.checks.len(),
                report.failures().count(),
                start.elapsed()
            ));
            emit(out.as_deref(), &report.to_json(), &log)?;
            return Ok(ExitCode::from(report.exit_code() as u8));
        }
        Command::Compare {
            instance,
            metrics,
            out,
        } => {
            let inst = Instance::load(&instance)?;
            let (d, e) = (inst.metric(&metrics[0])?, inst.metric(&metrics[1])?);
            let pre = Precomputation::new(inst.pair.clone())?;
            let cmp = verify::compare(&pre, [&metrics[0], &metrics[1]], d, e)?;
            print_stdout(&cmp.to_string())?;
            if let Some(path) = out {
                std::fs::write(&path, format!("{}\n", cmp.to_json()))?;
                log.info(format!("wrote {}", path.display()));
            }
        }
        Command::Wd { instance, k, out } => {
            let inst = Instance::load(&instance)?;
            let collection = wd::build_wd(&inst.pair, k);
            let check = wd::check_wd(&collection, &inst.pair);
            log.info(format!(
                "level {k}: {} cells, {} violations",
                collection.cells.len(),
                check.violations.len()
            ));
            let dump = WdDump {
                points: inst.pair.ambient().points(),
                collection: &collection,
                check: &check,
            };
            let json = serde_json::to_string_pretty(&dump)?;
            emit(out.as_deref(), &json, &log)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("isoext: error: {err}");
            ExitCode::from(2)
        }
    }
}
