use avis_core::codec::PassBucket;
use avis_core::data_io::{synth_gauss_ar1, SynthSpec};
use avis_core::{
    efficiency_report, psnr, run, Codec, Degradation, GaussArPrior, LinearOperator, RunConfig,
    RunMode, Video, VideoShape,
};
use proptest::prelude::*;

fn setup(
    frames: usize,
    seed: u64,
) -> (
    Degradation<f64>,
    avis_core::Measurement<f64>,
    Video<f64>,
    GaussArPrior,
) {
    let shape = VideoShape::new(frames, 8, 8, 1);
    let spec = SynthSpec::gauss_ar1(shape, seed, 0.9, 0.2, 0.5);
    let x = synth_gauss_ar1::<f64>(&spec, 3).unwrap().into_video();
    let op = Degradation::inpaint(shape, 0.5, seed, false).unwrap();
    let y = op.degrade(&x, 0.0, seed).unwrap();
    let prior = GaussArPrior::new(0.9, 0.2, 0.5, VideoShape::new(3, 8, 8, 1)).unwrap();
    (op, y, x, prior)
}

#[test]
fn counters_follow_closed_forms() {
    let (op, y, _, prior) = setup(42, 1);
    let codec = Codec::identity();
    let (n, k) = (14usize, 2usize);
    for (mode, calls) in [
        (RunMode::Avis, k * n),
        (RunMode::Flash, k),
        (RunMode::FlashPeriodic { period: 7 }, k * n.div_ceil(7)),
        (RunMode::FlashPeriodic { period: 3 }, k * n.div_ceil(3)),
        (RunMode::Joint, k * n),
    ] {
        let out = run(&RunConfig::new(mode, 2), &prior, &codec, &op, &y).unwrap();
        let eff = efficiency_report(std::slice::from_ref(&out.trace))
            .unwrap()
            .remove(0);
        assert_eq!(eff.guidance_calls, calls, "{mode}");
        assert_eq!(eff.guidance_passes as usize, 2 * calls);
        assert_eq!(
            eff.latency_steps,
            if mode == RunMode::Joint { n * k } else { k }
        );
        assert_eq!(out.trace.counters().encodes_in(PassBucket::PreRestore), 1);
    }
}

#[test]
fn later_measurements_do_not_reach_earlier_chunks() {
    let (op, y, _, prior) = setup(9, 2);
    let mut y2 = y.clone();
    for v in y2.payload.data_mut()[6 * 64..].iter_mut() {
        *v += 0.3;
    }
    let cfg = RunConfig::new(RunMode::Avis, 5);
    let a = run(&cfg, &prior, &Codec::identity(), &op, &y).unwrap();
    let b = run(&cfg, &prior, &Codec::identity(), &op, &y2).unwrap();
    assert_eq!(a.latent.chunk_data(1), b.latent.chunk_data(1));
    assert_eq!(a.latent.chunk_data(2), b.latent.chunk_data(2));
    assert_ne!(a.latent.chunk_data(3), b.latent.chunk_data(3));
}

#[test]
fn restoration_improves_on_initialization() {
    let mut better = 0;
    for seed in 0..5 {
        let (op, y, x, prior) = setup(9, 10 + seed);
        let out = run(
            &RunConfig::new(RunMode::Avis, seed),
            &prior,
            &Codec::identity(),
            &op,
            &y,
        )
        .unwrap();
        if psnr(&out.video, &x).unwrap() > psnr(&out.x_init, &x).unwrap() {
            better += 1;
        }
        let r = op.apply(&out.video).unwrap();
        assert_eq!(r.shape(), y.payload.shape());
    }
    assert!(better >= 4, "{better}/5");
}

#[test]
fn f32_pipeline_runs() {
    let shape = VideoShape::new(9, 8, 8, 1);
    let x = Video::<f32>::filled(shape, 0.5);
    let op = Degradation::<f32>::super_resolution(shape, 2).unwrap();
    let y = op.degrade(&x, 0.0, 0).unwrap();
    let prior = GaussArPrior::new(0.9, 0.2, 0.5, VideoShape::new(3, 8, 8, 1)).unwrap();
    let out = run(
        &RunConfig::<f32>::new(RunMode::Flash, 0),
        &prior,
        &Codec::identity(),
        &op,
        &y,
    )
    .unwrap();
    assert_eq!(out.video.shape(), shape);
    assert!(out.video.data().iter().all(|v| v.is_finite()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn runs_are_pure_functions_of_their_inputs(seed in 0u64..1000, mode_ix in 0usize..4) {
        let mode = [RunMode::Avis, RunMode::Flash, RunMode::FlashPeriodic { period: 2 }, RunMode::Joint][mode_ix];
        let (op, y, _, prior) = setup(9, seed);
        let cfg = RunConfig::new(mode, seed);
        let a = run(&cfg, &prior, &Codec::identity(), &op, &y).unwrap();
        let b = run(&cfg, &prior, &Codec::identity(), &op, &y).unwrap();
        prop_assert_eq!(a.video, b.video);
        prop_assert_eq!(a.trace.guidance_log(), b.trace.guidance_log());
    }

    #[test]
    fn psnr_is_permutation_invariant(seed in 0u64..1000, shift in 1usize..63) {
        let (_, _, x, _) = setup(3, seed);
        let noisy = x.map(|v| v + 0.05);
        let rot = |v: &Video<f64>| {
            let mut d = v.data().to_vec();
            d.rotate_left(shift);
            Video::new(v.shape(), d).unwrap()
        };
        prop_assert!((psnr(&noisy, &x).unwrap() - psnr(&rot(&noisy), &rot(&x)).unwrap()).abs() < 1e-9);
    }
}
