use colorguide::calibration::{guidance_scale_curve, CalibrationProfile};
use colorguide::colormap::{ColorMapOperator, ImageDims};
use colorguide::guidance::{GuidanceMode, GuidanceTerms};
use colorguide::latentspace::IdentityCodec;
use colorguide::oracle::{random_mixture, ExactDenoiser};
use colorguide::schedule::NoiseSchedule;
use colorguide::tensor::{seeded_rng, standard_normal_vec};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn terms_are_descent_directions(seed in any::<u64>(), t in 1usize..=50, s in 0.1f64..10.0) {
        let dims = ImageDims::new(4, 4, 1);
        let op = ColorMapOperator::new(dims, 2).unwrap();
        let sched = NoiseSchedule::default();
        let mut rng = seeded_rng(seed);
        let den = ExactDenoiser::new(random_mixture(&mut rng, 16, 3, true), sched.clone());
        let codec = IdentityCodec::new(dims);
        let terms = GuidanceTerms::new(&den, &sched, &op, &codec).unwrap();
        let z = standard_normal_vec(&mut rng, 16);
        let c = op.apply(&standard_normal_vec(&mut rng, 16)).unwrap();
        let g = terms.universal(&z, t, &c, s).unwrap();
        // stepping against G lowers the loss for a small enough step
        let step = 1e-6 / (1.0 + colorguide::tensor::norm(&g));
        let moved: Vec<f64> = z.iter().zip(&g).map(|(z, g)| z - step * g).collect();
        let before = terms.color_loss(&z, t, &c, None).unwrap();
        let after = terms.color_loss(&moved, t, &c, None).unwrap();
        prop_assert!(after <= before);
    }

    #[test]
    fn scale_curves_follow_the_profile(lams in proptest::collection::vec(0.01f64..2.0, 50), a in -1.0f64..1.0, b in 0.1f64..3.0) {
        let sched = NoiseSchedule::default();
        let p = CalibrationProfile::new(lams.clone(), a, b).unwrap();
        let fine = guidance_scale_curve(Some(&p), &sched, GuidanceMode::FinePixel).unwrap();
        let latent = guidance_scale_curve(Some(&p), &sched, GuidanceMode::FineLatent).unwrap();
        for t in 1..=50 {
            let want = sched.alpha(t).sqrt() / (2.0 * lams[t - 1]);
            prop_assert!((fine[t - 1] - want).abs() <= 1e-12 * want);
            prop_assert!((latent[t - 1] * b - want).abs() <= 1e-12 * want);
        }
    }
}
