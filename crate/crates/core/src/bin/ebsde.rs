use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ebsde::fixed_point::{VectorField, ZeroField};
use ebsde::harness::{
    kappa_rows, oracle_rows, run_solve, run_sweep, selftest, write_oracle, ExperimentConfig,
    SweepParam,
};
use ebsde::Error;

#[derive(Parser)]
#[command(name = "ebsde", version, about = "Monte-Carlo Picard solver for ergodic BSDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scheme and write CSV artifacts to the output directory.
    Solve {
        config: PathBuf,
        /// Override a config value, e.g. `--set scheme.seed=3`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// One solve per value of a parameter, plus a consolidated sweep.csv.
    Sweep {
        config: PathBuf,
        /// gamma, theta, delta, M, n_tilde or d
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Quadrature evaluation of the fixed-point map at probe points (d = 1).
    Oracle {
        config: PathBuf,
        /// Comma-separated probe points.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        probe: Vec<f64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Contraction-constant bounds for the configured model and driver.
    Kappa {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Built-in consistency checks.
    Selftest,
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_config_error() { 2 } else { 3 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => fail(e),
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Solve { config, set } => {
            let cfg = ExperimentConfig::load(&config, &set)?;
            let s = run_solve(&cfg)?;
            if let Some(r) = s.records.last() {
                match r.sup_err[1] {
                    Some(e) => println!("n = {}: sup error (r=1) {e:.6e}", r.n),
                    None => println!("n = {}: successive difference {:.6e}", r.n, r.successive_diff),
                }
            }
            if let Some(l) = s.lambda {
                println!("lambda = {:.8} (std err {:.2e})", l.value, l.std_err);
            }
            if s.theta_beyond_proven_range {
                println!("warning: theta >= a, outside the proven range");
            }
            println!("outputs in {}", s.directory.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            config,
            param,
            values,
            set,
        } => {
            let cfg = ExperimentConfig::load(&config, &set)?;
            let param: SweepParam = param.parse()?;
            let points = run_sweep(&cfg, param, &values)?;
            let mut failed = false;
            for p in &points {
                match &p.outcome {
                    Ok(s) => {
                        let e = s.records.last().and_then(|r| r.sup_err[1]);
                        println!("{} = {}: ok{}", param.name(), p.value, e.map(|e| format!(", sup error (r=1) {e:.6e}")).unwrap_or_default());
                    }
                    Err(e) => {
                        failed = true;
                        println!("{} = {}: {e}", param.name(), p.value);
                    }
                }
            }
            println!("consolidated results in {}", cfg.outputs.directory.join("sweep.csv").display());
            Ok(if failed { ExitCode::from(3) } else { ExitCode::SUCCESS })
        }
        Command::Oracle { config, probe, set } => {
            let cfg = ExperimentConfig::load(&config, &set)?;
            let r = cfg.resolve()?;
            let probes = if probe.is_empty() { cfg.outputs.oracle_probes.clone() } else { probe };
            let exact = r.exact_v();
            let zero = ZeroField(r.model.dim());
            let w: &dyn VectorField = match &exact {
                Some(v) => v,
                None => &zero,
            };
            let rows = oracle_rows(&r, w, &probes)?;
            write_oracle(std::io::stdout().lock(), &rows)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Kappa { config, set } => {
            let cfg = ExperimentConfig::load(&config, &set)?;
            let r = cfg.resolve()?;
            for (source, k) in kappa_rows(&r, cfg.outputs.kappa_weight)? {
                println!(
                    "{source}: kappa_upper = {:.6e} ({}), C_A = {} [{}]{}",
                    k.kappa_upper,
                    if k.contractive { "contractive" } else { "not contractive" },
                    k.c_a,
                    ebsde::harness::c_a_label(&r.model),
                    if k.possibly_underestimated { ", may be underestimated" } else { "" }
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Selftest => {
            let checks = selftest();
            let mut ok = true;
            for c in &checks {
                ok &= c.passed;
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
    }
}
