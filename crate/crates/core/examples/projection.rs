//! Projects an arbitrary field onto a two-generator shift-invariant space.

use lpq_sampling::{
    build_gram, lin_comb, mixed_lebesgue_norm, project, synthesize, DiscreteField, GeneratorBank, GridSpec,
    KernelSpec, MixedExponents, Result, Shape,
};

fn main() -> Result<()> {
    let spec = GridSpec::new(1, 8, 8, 16)?;
    let bank = GeneratorBank::new(
        vec![KernelSpec::new(Shape::BSpline(4), 2), KernelSpec::new(Shape::BSpline(3), 2).scaled(0.5)],
        spec,
    )?;
    let gram = build_gram(&bank)?;
    println!(
        "{} unknowns, Gram spectrum [{:.3e}, {:.3e}]",
        bank.unknowns(),
        gram.min_eigenvalue(),
        gram.max_eigenvalue()
    );

    let g = DiscreteField::from_fn(spec, |x| (x[0] - 4.0).abs().min(2.0) * (x[1] * 0.7).cos());
    let pg = synthesize(&project(&g, &gram)?, &bank)?;
    let ppg = synthesize(&project(&pg, &gram)?, &bank)?;

    let e = MixedExponents::TWO;
    let residual = mixed_lebesgue_norm(&lin_comb(&[(1.0, &g), (-1.0, &pg)])?, e);
    let drift = mixed_lebesgue_norm(&lin_comb(&[(1.0, &pg), (-1.0, &ppg)])?, e);
    println!("||g|| = {:.5}, ||Pg|| = {:.5}", mixed_lebesgue_norm(&g, e), mixed_lebesgue_norm(&pg, e));
    println!("||g - Pg|| = {residual:.5}, ||Pg - PPg|| = {drift:.2e}");
    Ok(())
}
