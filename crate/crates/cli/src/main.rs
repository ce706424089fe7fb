use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use flexact::complexity::{standard_tables, tables_csv};
use flexact::experiment::{grid_search, read_final_csv, run_experiment, write_grid_csv, write_outputs, GridAxis};
use flexact::gradcheck::run_suite;
use flexact::stats::welch_ttest_onetail;
use flexact::ExperimentConfig;

#[derive(Parser)]
#[command(name = "flexact", version, about = "Train and compare models with flexible activation functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-trial experiment from a JSON config and write CSV curves.
    Run(RunArgs),
    /// Geometric grid search over one hyper-parameter.
    Grid(GridArgs),
    /// Print the parameter-count tables.
    Count(CountArgs),
    /// One-tailed Welch t-test on the test MSE of two `final.csv` files.
    Ttest(TtestArgs),
    /// Run the finite-difference gradient suites.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct Overrides {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
}

impl Overrides {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(n) = self.trials {
            cfg.n_trials = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        let out = self
            .out
            .clone()
            .or_else(|| cfg.output.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        cfg.validate()?;
        Ok((cfg, out))
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Overrides,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    common: Overrides,
    /// `lr`, `reg_delta1` or `reg_delta2`.
    #[arg(long)]
    axis: GridAxis,
    #[arg(long)]
    lo: f64,
    #[arg(long)]
    hi: f64,
    #[arg(long, default_value_t = 20)]
    points: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Args)]
struct CountArgs {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write the CSV report to this file as well.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TtestArgs {
    /// `final.csv` of the sample whose mean is hypothesized to be lower.
    a: PathBuf,
    b: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    probes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
}

fn count_csv(path: Option<&Path>) -> Result<String> {
    let text = tables_csv(&standard_tables()?)?;
    if let Some(p) = path {
        std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(text)
}

fn run(cli: Cli) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Run(args) => {
            let (cfg, out) = args.common.load()?;
            let res = run_experiment(&cfg)?;
            write_outputs(&res, &out)?;
            for t in &res.trials {
                writeln!(
                    stdout,
                    "seed {:>4}  final train {:.6e}  min val {:.6e}  test {:.6e}  ({:.1}s)",
                    t.seed,
                    t.train_mse.last().copied().unwrap_or(t.initial_train_mse),
                    t.min_val_mse(),
                    t.test_mse,
                    t.wall_time_secs
                )?;
            }
            writeln!(stdout, "wrote {}", out.display())?;
        }
        Command::Grid(args) => {
            let (cfg, out) = args.common.load()?;
            let res = grid_search(&cfg, args.axis, args.lo, args.hi, args.points)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let path = out.join("grid.csv");
            write_grid_csv(&res, &path)?;
            for (i, p) in res.points.iter().enumerate() {
                let mark = if i == res.best { "*" } else { " " };
                writeln!(
                    stdout,
                    "{mark} {:<12.6e} {:.6e} ± {:.2e}",
                    p.value, p.mean_min_val_mse, p.stderr_min_val_mse
                )?;
            }
            writeln!(stdout, "best {:?} = {:e}; wrote {}", res.axis, res.points[res.best].value, path.display())?;
        }
        Command::Count(args) => {
            let csv = count_csv(args.out.as_deref())?;
            match args.format {
                Format::Csv => write!(stdout, "{csv}")?,
                Format::Text => {
                    for t in standard_tables()? {
                        writeln!(stdout, "{}", t.to_text())?;
                    }
                }
            }
        }
        Command::Ttest(args) => {
            let a = read_final_csv(&args.a)?;
            let b = read_final_csv(&args.b)?;
            let r = welch_ttest_onetail(&a, &b)?;
            writeln!(stdout, "H0: mean(a) >= mean(b)  t = {:.6}  df = {:.4}  p = {:.6e}", r.t, r.df, r.p)?;
            if r.degenerate {
                writeln!(stdout, "warning: both samples have zero variance; p follows the boundary convention")?;
            }
        }
        Command::Gradcheck(args) => {
            let reports = run_suite(args.probes, args.seed, args.tolerance)?;
            let mut failed = 0;
            for r in &reports {
                writeln!(
                    stdout,
                    "{} {:<14} probes {:>4}  max rel err {:.3e}  (tol {:e})",
                    if r.passed() { "PASS" } else { "FAIL" },
                    r.name,
                    r.probes,
                    r.max_rel_error,
                    r.tolerance
                )?;
                failed += usize::from(!r.passed());
            }
            if failed > 0 {
                bail!("{failed} gradient check(s) failed");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.chain().map(ToString::to_string).collect::<Vec<_>>().join(": ");
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
