// The analytic diffusion model: a Gaussian mixture whose noise predictor,
// its Jacobian, likelihood and color-conditional posterior are exact.

use colorguide::colormap::ColorMapOperator;
use colorguide::oracle::{default_observation_noise, exact_color_posterior, DemoMixtureSpec, Denoiser, ExactDenoiser};
use colorguide::schedule::NoiseSchedule;
use colorguide::tensor::{norm, seeded_rng, standard_normal_vec};

pub fn run() -> colorguide::Result<()> {
    let spec = DemoMixtureSpec { height: 8, width: 8, ..DemoMixtureSpec::default() };
    let model = spec.build()?;
    let schedule = NoiseSchedule::default();
    let den = ExactDenoiser::new(model.clone(), schedule.clone());
    let mut rng = seeded_rng(1);

    let x = model.sample(&mut rng);
    println!("log p(x) of a sample: {:.1}", model.log_likelihood(&x)?);
    for t in [5, 25, 45] {
        let eps = standard_normal_vec(&mut rng, x.len());
        let z = schedule.forward_noise(&x, t, &eps)?;
        let hat = den.predict(&z, t, 0);
        let err = norm(&colorguide::tensor::sub(&hat, &eps)) / (x.len() as f64).sqrt();
        // The Jacobian of the noise prediction is symmetric.
        let (u, v) = (standard_normal_vec(&mut rng, x.len()), standard_normal_vec(&mut rng, x.len()));
        let asym = colorguide::tensor::dot(&u, &den.vjp(&z, t, &v)) - colorguide::tensor::dot(&v, &den.vjp(&z, t, &u));
        println!("t = {t:>2}: rms noise error {err:.3}, u.Jv - v.Ju = {asym:.1e}");
    }

    let op = ColorMapOperator::new(spec.dims(), 2)?;
    let c = op.apply(&x)?;
    let post = exact_color_posterior(&model, &op, &c, default_observation_noise(&op, 5))?;
    let mean_color = op.apply(&post.mean())?;
    println!("posterior given the color map of x: color error {:.2e}", mean_color.mse(&c)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> colorguide::Result<()> {
    run()
}
