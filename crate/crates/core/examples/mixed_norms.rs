//! Mixed Lebesgue and amalgam norms of a field, and how its oscillation shrinks with delta.

use lpq_sampling::norms::lp_norm;
use lpq_sampling::{
    mixed_lebesgue_norm, oscillation, wiener_amalgam_norm, DiscreteField, GridSpec, MixedExponents, Result,
};

fn main() -> Result<()> {
    let spec = GridSpec::new(1, 8, 8, 32)?;
    let tau = std::f64::consts::TAU;
    // anisotropic: smooth in x, a narrow bump in y
    let f = DiscreteField::from_fn(spec, |x| (tau * x[0] / 8.0).sin() * (-(x[1] - 4.0).powi(2) * 4.0).exp());

    for (p, q) in [(1.0, 1.0), (2.0, 2.0), (1.0, 4.0), (4.0, 1.0)] {
        let e = MixedExponents::new(p, q)?;
        println!(
            "p = {p}, q = {q}: L^(p,q) {:.5}, W(L^(p,q)) {:.5}",
            mixed_lebesgue_norm(&f, e),
            wiener_amalgam_norm(&f, e)
        );
    }
    println!("L^2 directly: {:.5}", lp_norm(&f, 2.0));

    let e = MixedExponents::new(2.0, 2.0)?;
    for delta in [1.0, 0.5, 0.25, 0.125] {
        let osc = oscillation(&f, delta)?;
        println!("delta {delta:>5}: ||osc_delta f||_W = {:.5}", wiener_amalgam_norm(&osc, e));
    }
    Ok(())
}
