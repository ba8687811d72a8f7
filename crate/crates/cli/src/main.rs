use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rdloc::experiments::{
    localize, run_counterexample, run_robustness_sweep, run_tree_study, write_outputs, Baseline, Check, Experiment,
    ExperimentConfig, Measurement, BASELINE_ENV,
};
use rdloc::BcMode;

#[derive(Parser)]
#[command(name = "rdloc", version, about = "Localization of best errors in the reaction-diffusion norm")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Element vs pair localization of the kinked counterexample target
    Counterexample(Args),
    /// Localization ratios over an epsilon sweep, checked against the baseline
    Sweep(Args),
    /// Adaptive tree approximation vs uniform refinement vs exhaustive search
    Tree(Args),
    /// One localization report per (target, epsilon)
    Localize(Args),
}

#[derive(Clone, Copy, ValueEnum)]
enum Bc {
    None,
    Dirichlet,
}

#[derive(clap::Args)]
struct Args {
    /// Comma-separated epsilon values
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Polynomial degree (1, 2 or 3)
    #[arg(long, default_value_t = 1)]
    degree: usize,
    /// Mesh file in the rdmesh format (replaces the default mesh)
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Comma-separated built-in target names
    #[arg(long, value_delimiter = ',')]
    target: Option<Vec<String>>,
    /// Output directory for CSV and JSON
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Element budget of the tree study
    #[arg(long)]
    budget: Option<usize>,
    /// Uniform refinement rounds applied to the mesh
    #[arg(long, default_value_t = 0)]
    rounds: usize,
    #[arg(long, value_enum, default_value_t = Bc::None)]
    bc: Bc,
    /// Baseline file with frozen intervals
    #[arg(long, env = BASELINE_ENV)]
    baseline: Option<PathBuf>,
    /// Freeze the observed ranges (widened by --margin) into this baseline file
    #[arg(long)]
    write_baseline: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    margin: f64,
}

impl Args {
    fn config(&self, experiment: Experiment) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(experiment);
        if let Some(e) = &self.eps {
            c.epsilons = e.clone();
        }
        if let Some(t) = &self.target {
            c.targets = t.clone();
        }
        if let Some(b) = self.budget {
            c.budget = b;
        }
        c.degree = self.degree;
        c.rounds = self.rounds;
        c.mesh = self.mesh.clone();
        c.out = Some(self.out.clone());
        c.seed = self.seed;
        c.bc = match self.bc {
            Bc::None => BcMode::None,
            Bc::Dirichlet => BcMode::HomogeneousDirichlet,
        };
        c.baseline = self.baseline.clone();
        c
    }

    fn freeze(&self, measurements: &[Measurement]) -> Result<()> {
        let Some(path) = &self.write_baseline else { return Ok(()) };
        let mut b = if path.exists() {
            Baseline::parse(&fs::read_to_string(path)?)?
        } else {
            Baseline { schema: 1, intervals: Vec::new() }
        };
        b.merge(Baseline::freeze(measurements, self.margin));
        fs::write(path, b.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
        eprintln!("froze {} intervals into {}", measurements.len(), path.display());
        Ok(())
    }
}

fn report_checks(checks: &[Check]) {
    for c in checks {
        let status = match c.passed {
            Some(true) => "ok",
            Some(false) => "VIOLATION",
            None => "unchecked",
        };
        match (c.lo, c.hi) {
            (Some(lo), Some(hi)) => eprintln!(
                "{status:>9}  {} {}: [{:.4e}, {:.4e}] within [{lo:.4e}, {hi:.4e}]",
                c.target, c.quantity, c.min, c.max
            ),
            _ => eprintln!("{status:>9}  {} {}: [{:.4e}, {:.4e}]", c.target, c.quantity, c.min, c.max),
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Counterexample(a) => {
            let r = run_counterexample(&a.config(Experiment::Counterexample))?;
            let (csv, _) = write_outputs(&a.out, "counterexample", |w| r.write_csv(w), &r.summary_json())?;
            for row in &r.rows {
                eprintln!(
                    "eps {:.1e}: element^2 {:.4e} (bound {:.4e}), element/global {:.4}, pair/global {:.4}",
                    row.epsilon, row.element_sum_sq, row.bound, row.element_ratio, row.pair_ratio
                );
            }
            if let Some(s) = r.slope {
                eprintln!("slope of log(global/element) vs log eps: {s:.4}");
            }
            if let Some(s) = r.pair_spread {
                eprintln!("pair/global spread over eps: {s:.4}");
            }
            eprintln!("wrote {}", csv.display());
            Ok(r.passed())
        }
        Command::Sweep(a) => {
            let r = run_robustness_sweep(&a.config(Experiment::Sweep))?;
            let (csv, _) = write_outputs(&a.out, "sweep", |w| r.write_csv(w), &r.summary_json())?;
            report_checks(&r.checks);
            if !r.covering_ok() {
                eprintln!("covering inequality violated");
            }
            a.freeze(&r.measurements)?;
            eprintln!("wrote {}", csv.display());
            Ok(r.passed())
        }
        Command::Tree(a) => {
            let r = run_tree_study(&a.config(Experiment::Tree))?;
            let (csv, _) = write_outputs(&a.out, "tree", |w| r.write_csv(w), &r.summary_json())?;
            report_checks(&r.checks);
            a.freeze(&r.measurements)?;
            eprintln!("wrote {}", csv.display());
            Ok(r.passed())
        }
        Command::Localize(a) => {
            let r = localize(&a.config(Experiment::Localize))?;
            let (csv, _) = write_outputs(&a.out, "localize", |w| r.write_csv(w), &r.summary_json())?;
            for rep in &r.reports {
                eprintln!(
                    "{} eps {:.1e}: global {:.4e}, pair {:.4e}, minimal pair {:.4e}, element {:.4e}",
                    rep.target, rep.epsilon, rep.global_error, rep.pair_sum, rep.minimal_pair_sum, rep.element_sum
                );
            }
            eprintln!("wrote {}", csv.display());
            Ok(r.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap uses 2 for usage errors; 2 is reserved for baseline violations here
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
