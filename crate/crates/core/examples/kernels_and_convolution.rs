//! Rasterizes a few catalog kernels and checks that convolution preserves mass.

use lpq_sampling::{convolve, integrate, rasterize, GridSpec, KernelSpec, Result, Shape};

fn main() -> Result<()> {
    let spec = GridSpec::new(1, 8, 8, 16)?;
    println!("grid {} x {} cells, h = {}", spec.nx(), spec.ny_total(), spec.cell_width());

    let shapes = [
        ("box", Shape::Box),
        ("tent", Shape::Tent),
        ("bspline:4", Shape::BSpline(4)),
        ("gaussian", Shape::TruncatedGaussian { sigma: 0.5, cutoff: 3.0 }),
    ];
    let tent = rasterize(&KernelSpec::new(Shape::Tent, 2), &spec)?;
    for (name, shape) in shapes {
        let f = rasterize(&KernelSpec::new(shape, 2), &spec)?;
        let g = convolve(&f, &tent)?;
        println!(
            "{name:>10}: mass {:.6}, mass of f * tent {:.6} (product {:.6})",
            integrate(&f),
            integrate(&g),
            integrate(&f) * integrate(&tent)
        );
    }
    Ok(())
}
