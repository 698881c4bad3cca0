use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lpq_sampling::config::{parse_config, ExperimentConfig};
use lpq_sampling::experiment::{cmd_run, cmd_sweep, SweepAxes};
use lpq_sampling::verify::{cmd_verify, VerifyOptions};
use lpq_sampling::Result;

/// Reconstruction from nonuniform average samples in shift-invariant spaces of L^{p,q}.
///
/// Exit codes: 0 success, 1 usage or input error, 2 reconstruction did not converge,
/// 3 an invariant check failed.
#[derive(Parser)]
#[command(name = "lpq-sampling", version)]
struct Cli {
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed, overriding `seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment configuration (TOML).
    #[arg(short = 'c', long = "config", value_name = "FILE")]
    path: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct one seeded truth and write report.json, iterations.csv and config.toml.
    Run {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Run the Cartesian product of parameter axes; writes sweep.csv and frontier.csv.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// Density values (comma separated or repeated).
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        gamma: Vec<f64>,
        /// Kernel scales.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        a: Vec<f64>,
        /// Outer exponents; defaults to the configured one.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        p: Vec<f64>,
        /// Inner exponents; defaults to the configured one.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        q: Vec<f64>,
    },
    /// Run every invariant suite at the configuration's scale.
    Verify {
        #[command(flatten)]
        config: ConfigArg,
        /// Break the partition of unity before checking.
        #[arg(long, hide = true)]
        corrupt_bupu: bool,
    },
}

fn load(arg: &ConfigArg, cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = parse_config(&arg.path)?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(config, cli)?;
            let s = cmd_run(&cfg)?;
            let r = &s.reconstruction;
            println!(
                "status {:?}, {} iterations, alpha_hat {:.4}, final relative error {}",
                r.status,
                r.iterations_run,
                s.contraction.alpha,
                r.final_relative_error().map(|e| format!("{e:.3e}")).unwrap_or_else(|| "n/a".into())
            );
            println!("wrote {}", cfg.output_dir.display());
            Ok(s.exit_code() as u8)
        }
        Command::Sweep { config, gamma, a, p, q } => {
            let cfg = load(config, cli)?;
            let axes = SweepAxes { gamma: gamma.clone(), a: a.clone(), p: p.clone(), q: q.clone() };
            let outcome = cmd_sweep(&cfg, &axes)?;
            for r in &outcome.rows {
                println!(
                    "gamma {} a {} p {} q {}: alpha_hat {:.4}, {:?} after {} iterations",
                    r.gamma, r.a, r.p, r.q, r.alpha_hat, r.status, r.iterations
                );
            }
            println!("frontier {:?}", outcome.frontier);
            println!("wrote {}", cfg.output_dir.join("sweep.csv").display());
            Ok(0)
        }
        Command::Verify { config, corrupt_bupu } => {
            let cfg = load(config, cli)?;
            let report = cmd_verify(&cfg, VerifyOptions { corrupt_bupu: *corrupt_bupu })?;
            print!("{}", report.table());
            for f in report.failures() {
                eprintln!("failed: {}/{}", f.suite, f.name);
            }
            Ok(report.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
