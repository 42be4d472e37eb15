use beamlab_core::beamforming::{matched_filter, reconstruct, sum_rate, total_power, zf, PowerPair};
use beamlab_core::channels::{
    build_dataset, gen_uplink_rayleigh, generate_sample, steering_vector, MappingState, PilotConfig, ScenarioConfig,
};
use beamlab_core::pilots::{ls_preprocess, make_dft_pilots};
use beamlab_core::solvers::{default_labels, extract_pq, wmmse, WmmseConfig};
use beamlab_core::{CMat, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn channel(seed: u64, n_t: usize, k: usize) -> CMat {
    gen_uplink_rayleigh(n_t, k, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn half_wavelength_array_at_thirty_degrees_steps_a_quarter_turn() {
    let a = steering_vector(4, std::f64::consts::FRAC_PI_6, 0.5);
    for pair in a.windows(2) {
        let step = (pair[1] / pair[0]).arg();
        assert!((step + std::f64::consts::FRAC_PI_2).abs() < 1e-12, "{step}");
    }
}

#[test]
fn samples_do_not_depend_on_dataset_size() {
    for cfg in [
        ScenarioConfig::small_tdd(4, 2).with_seed(3),
        ScenarioConfig::massive_fdd(8, 2).with_seed(3),
        ScenarioConfig::multicell(2, 1, 3).with_seed(3),
    ] {
        let small = build_dataset(&cfg, 3, None).unwrap();
        let large = build_dataset(&cfg, 7, None).unwrap();
        assert_eq!(small.samples[..], large.samples[..3]);
        let lone = generate_sample(&cfg, &MappingState::draw(&cfg), 2).unwrap();
        assert_eq!(lone, large.samples[2]);
    }
}

#[test]
fn seeds_change_the_data() {
    let a = build_dataset(&ScenarioConfig::small_tdd(3, 2).with_seed(1), 2, None).unwrap();
    let b = build_dataset(&ScenarioConfig::small_tdd(3, 2).with_seed(2), 2, None).unwrap();
    assert_ne!(a.samples, b.samples);
}

#[test]
fn labels_are_valid_power_pairs() {
    let cfg = ScenarioConfig::small_tdd(3, 3).with_seed(4);
    let ds = build_dataset(&cfg, 5, Some(&default_labels)).unwrap();
    for s in &ds.samples {
        let l = s.labels.as_ref().unwrap();
        PowerPair::new(l.p.clone(), l.q.clone().unwrap(), cfg.power).unwrap();
    }
}

#[test]
fn orthogonal_pilots_recover_the_noiseless_channel() {
    let cfg = ScenarioConfig::small_tdd(4, 3).with_seed(5).with_pilots(PilotConfig {
        len: 3,
        power: None,
        noise: Some(0.0),
    });
    let ds = build_dataset(&cfg, 3, None).unwrap();
    for s in &ds.samples {
        let x = make_dft_pilots(3, 3, cfg.power);
        let y = s.uplink[0].matmul(&x).unwrap();
        let back = ls_preprocess(&y, &x, cfg.power).unwrap();
        assert!(back.sub(&s.uplink[0]).frob_norm() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zf_and_matched_filter_spend_the_budget(seed in any::<u64>(), n_t in 2usize..6, power in 0.1f64..1e3) {
        let k = n_t - 1;
        let h = channel(seed, n_t, k);
        prop_assert!((total_power(&zf(&h, power).unwrap()) - power).abs() <= 1e-9 * power);
        prop_assert!((total_power(&matched_filter(&h, power)) - power).abs() <= 1e-9 * power);
    }

    #[test]
    fn rate_ignores_per_beam_phase(seed in any::<u64>(), phases in prop::collection::vec(-3.2f64..3.2, 3)) {
        let h = channel(seed, 4, 3);
        let w = matched_filter(&h, 10.0);
        let rotated = CMat::from_fn(4, 3, |i, j| w[(i, j)] * C64::from_polar(1.0, phases[j]));
        prop_assert!((sum_rate(&h, &w, 1.0) - sum_rate(&h, &rotated, 1.0)).abs() < 1e-10);
    }

    #[test]
    fn uniform_pairs_rebuild_beams_on_budget(seed in any::<u64>(), k in 1usize..5, power in 0.5f64..500.0) {
        let h = channel(seed, 4, k);
        let w = reconstruct(&h, &PowerPair::uniform(k, power), 1.0).unwrap();
        for j in 0..k {
            let norm: f64 = w.col(j).iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((norm - power / k as f64).abs() <= 1e-9 * power);
        }
    }

    #[test]
    fn extracted_pairs_sit_on_the_budget(seed in any::<u64>(), power in 1.0f64..200.0) {
        let h = channel(seed, 3, 3);
        let out = wmmse(&h, power, 1.0, &WmmseConfig::default()).unwrap();
        let pair = extract_pq(&h, &out.w, 1.0, power).unwrap();
        prop_assert!(pair.validate().is_ok());
        prop_assert!(pair.p.iter().chain(&pair.q).all(|v| *v >= 0.0));
    }
}
