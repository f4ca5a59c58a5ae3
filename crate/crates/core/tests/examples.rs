//! Every example must keep running.

macro_rules! example {
    ($name:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }

        #[test]
        fn $name() {
            $name::run().expect("example runs");
        }
    };
}

example!(noise_schedule, "noise_schedule.rs");
example!(color_map, "color_map.rs");
example!(mixture_oracle, "mixture_oracle.rs");
example!(calibration, "calibration.rs");
example!(latent_guidance, "latent_guidance.rs");
example!(guided_sampling, "guided_sampling.rs");
example!(compare_methods, "compare_methods.rs");
example!(compression, "compression.rs");
