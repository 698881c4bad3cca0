//! A space spanned by translates of two generators: norm equivalence constants and reconstruction.

use lpq_sampling::config::parse_config_str;
use lpq_sampling::experiment::Pipeline;
use lpq_sampling::space::estimate_norm_equivalence;
use lpq_sampling::Result;

const CONFIG: &str = r#"
seed = 8
bank = { generators = ["bspline:4", "bspline:3*0.5"] }
grid = { d = 1, periods = [8, 8], m = 16 }
exponents = { p = 2, q = 1.5 }
sampling = { mode = "jittered", gamma = 0.5, s = 0.5, eta = 0.2 }
kernels = { a = 0.25 }
"#;

fn main() -> Result<()> {
    let cfg = parse_config_str(CONFIG, ".".as_ref())?;
    let p = Pipeline::build(&cfg)?;
    let eq = estimate_norm_equivalence(&p.bank, p.exponents, 100, 1)?;
    println!("{} generators, {} unknowns, norm equivalence {eq:?}", p.bank.r(), p.bank.unknowns());
    println!("alpha_hat {:.4}", p.contraction()?.alpha);
    for t in 0..3 {
        let r = p.run_truth(t)?;
        println!(
            "truth {t}: {:?} after {} iterations, fitted rate {:.4}, relative error {:.2e}",
            r.status,
            r.iterations_run,
            r.alpha_fit.unwrap_or(f64::NAN),
            r.final_relative_error().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
