//! Runs a configuration file end to end, as `lpq-sampling run` does.
//!
//! `cargo run --example config_run -- configs/scattered.toml`

use std::path::PathBuf;

use lpq_sampling::config::parse_config;
use lpq_sampling::experiment::cmd_run;
use lpq_sampling::Result;

fn main() -> Result<()> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "configs/default.toml".into());
    let mut cfg = parse_config(&path)?;
    cfg.output_dir = std::env::temp_dir().join("lpq-sampling-example");
    let s = cmd_run(&cfg)?;
    let r = &s.reconstruction;
    println!(
        "{} samples, alpha_hat {:.4}: {:?} after {} iterations, final relative error {:.2e}",
        s.density.samples,
        s.contraction.alpha,
        r.status,
        r.iterations_run,
        r.final_relative_error().unwrap_or(f64::NAN)
    );
    println!("artifacts in {}", cfg.output_dir.display());
    Ok(())
}
