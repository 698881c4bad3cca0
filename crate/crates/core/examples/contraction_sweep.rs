//! How the contraction estimate responds to sampling density and kernel width.

use lpq_sampling::config::parse_config_str;
use lpq_sampling::experiment::{sweep_config, Pipeline};
use lpq_sampling::Result;

const CONFIG: &str = r#"
seed = 5
grid = { d = 1, periods = [8, 8], m = 16 }
exponents = { p = 2, q = 2 }
sampling = { mode = "jittered", gamma = 0.5, s = 0.5, eta = 0.2 }
kernels = { a = 0.25 }
"#;

fn main() -> Result<()> {
    let base = parse_config_str(CONFIG, ".".as_ref())?;
    println!("{:>6} {:>6} {:>9} {:>10}", "gamma", "a", "alpha_hat", "status");
    for gamma in [2.0, 1.0, 0.5, 0.25] {
        for a in [0.5, 0.25, 0.125] {
            let cfg = sweep_config(&base, gamma, a, base.p, base.q)?;
            let p = Pipeline::build(&cfg)?;
            let alpha = p.contraction()?.alpha;
            let status = p.run_truth(0)?.status;
            println!("{gamma:>6} {a:>6} {alpha:>9.4} {status:>10?}");
        }
    }
    Ok(())
}
