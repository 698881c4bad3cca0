//! Reconstruction from local box averages, assembled from the individual operators.

use lpq_sampling::reconstruct::{estimate_contraction, reconstruct, Operators, ReconstructionOptions};
use lpq_sampling::sampling::{
    acquire_samples, build_bupu, generate_sampling_set, make_kernels, KernelMode, PsiShape, SamplingMode,
};
use lpq_sampling::{
    build_gram, synthesize, CoefficientArray, GeneratorBank, GridSpec, KernelSpec, MixedExponents, Result, Shape,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let spec = GridSpec::new(1, 8, 8, 16)?;
    let bank = GeneratorBank::new(vec![KernelSpec::new(Shape::BSpline(4), 2)], spec)?;
    let gram = build_gram(&bank)?;
    let x = generate_sampling_set(SamplingMode::JitteredGrid { spacing: 0.5, jitter: 0.2, product: false }, &spec, 1)?;
    let bupu = build_bupu(&x, &spec);
    let kernels = make_kernels(KernelMode::Single, PsiShape::Box, 0.25, &x, &spec, 1.0, 2)?;
    let ops = Operators { bank: &bank, gram: &gram, bupu: &bupu, kernels: &kernels, x: &x };

    let e = MixedExponents::new(1.5, 3.0)?;
    let est = estimate_contraction(&ops, e, 12, 3)?;
    println!("{} samples, alpha_hat = {:.4}", x.len(), est.alpha);

    let c = CoefficientArray::random(1, &spec, &mut ChaCha8Rng::seed_from_u64(4));
    let f = synthesize(&c, &bank)?;
    let samples = acquire_samples(&f, &kernels, &x)?;
    let (c_hat, report) = reconstruct(&samples, &ops, &ReconstructionOptions::new(e).with_truth(f))?;

    for (n, err) in report.true_errors.as_deref().unwrap_or_default().iter().enumerate().step_by(4) {
        println!("n = {:>2}: ||f - f_n|| = {err:.3e}", n + 1);
    }
    let coef_err = c.entries().iter().zip(c_hat.entries()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!(
        "{:?} after {} iterations, fitted rate {:.4}, max coefficient error {coef_err:.2e}",
        report.status,
        report.iterations_run,
        report.alpha_fit.unwrap_or(f64::NAN)
    );
    Ok(())
}
