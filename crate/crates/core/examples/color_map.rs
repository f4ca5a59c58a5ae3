// The color-map operator: low-frequency DCT block, its lift back to image
// space, the thumbnail view and the quantized YUV 4:2:0 wire form.

use colorguide::colormap::{rate_bits, ColorMapOperator, ImageDims};
use colorguide::oracle::DemoMixtureSpec;
use colorguide::tensor::seeded_rng;

pub fn run() -> colorguide::Result<()> {
    let spec = DemoMixtureSpec::default();
    let image = spec.build()?.sample(&mut seeded_rng(3));
    let dims: ImageDims = spec.dims();
    for m in [2, 4, 8, 16] {
        let op = ColorMapOperator::new(dims, m)?;
        let c = op.apply(&image)?;
        let energy: f64 = c.coeffs.iter().map(|v| v * v).sum::<f64>() / image.iter().map(|v| v * v).sum::<f64>();
        let wire = op.to_wire(&c, 5)?;
        let decoded = op.from_wire(&wire)?;
        println!(
            "m = {m:>2}: {:>4} coefficients, {:.1}% of the energy, {:>4} bits at b_c = 5, wire MSE {:.2e} (chroma travels at half resolution)",
            c.coeffs.len(),
            100.0 * energy,
            wire.rate_bits(),
            c.mse(&decoded)?
        );
    }
    assert_eq!(rate_bits(16, 5), 1920);

    // apply(lift(c)) = c: the lift is the adjoint of an orthonormal selection.
    let op = ColorMapOperator::new(dims, 4)?;
    let c = op.apply(&image)?;
    let again = op.apply(&op.lift(&c)?)?;
    println!("A lift(c) = c up to {:.1e}", c.mse(&again)?.sqrt());
    let thumb = op.thumbnail(&c)?;
    println!("4x4 thumbnail, red plane: {:.2?}", &thumb[..16]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> colorguide::Result<()> {
    run()
}
