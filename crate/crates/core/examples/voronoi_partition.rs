//! Scattered samples, their density certificate and the Voronoi partition of unity.

use lpq_sampling::reconstruct::spread;
use lpq_sampling::sampling::{build_bupu, generate_sampling_set, verify_density, SamplingMode};
use lpq_sampling::{GridSpec, Result};

fn main() -> Result<()> {
    let spec = GridSpec::new(1, 8, 8, 16)?;
    for (name, mode) in [
        ("jittered", SamplingMode::JitteredGrid { spacing: 0.5, jitter: 0.2, product: false }),
        ("uniform", SamplingMode::UniformRandom { count: 400 }),
    ] {
        let x = generate_sampling_set(mode, &spec, 7)?;
        let density = verify_density(&x, 0.6, &spec)?;
        let bupu = build_bupu(&x, &spec);
        let sums = bupu.weight_sums();
        let worst = sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
        let cells: Vec<usize> = (0..x.len()).map(|j| bupu.assignment().iter().filter(|&&a| a as usize == j).count()).collect();
        let values: Vec<f64> = (0..x.len()).map(|j| j as f64).collect();
        let spread_max = spread(&values, &bupu)?.values().iter().cloned().fold(0.0, f64::max);
        println!(
            "{name:>8}: {} samples, worst gap {:.3} (certified for gamma 0.6: {}), |sum - 1| <= {worst}, \
             cells per sample {}..{}, spread max {spread_max}",
            x.len(),
            density.worst_gap,
            density.certified,
            cells.iter().min().unwrap(),
            cells.iter().max().unwrap(),
        );
    }
    Ok(())
}
