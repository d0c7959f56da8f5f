use proptest::prelude::*;

use impactlab::estimators::{diffusivity, response, sign_autocorr};
use impactlab::experiment::{simulate, ExperimentConfig, GeneratorSpec, ModelSpec, SeedSpec};
use impactlab::impact::{
    kernel_from_predictor, propagator_path, returns, surprise_path, ArPredictor, ImpactConfig,
    Kernel,
};
use impactlab::io;
use impactlab::manipulation::{strategy_cost, OwnImpact, Strategy as Plan, Trade};
use impactlab::{GeneratorTag, SignSeries, TradeTape, VolumeSeries, VolumeSpec};

fn signs() -> impl Strategy<Value = Vec<i8>> {
    prop::collection::vec(
        prop::bool::ANY.prop_map(|b| if b { 1i8 } else { -1 }),
        64..256,
    )
}

fn priced_tape(s: Vec<i8>, beta: f64, seed: u64) -> TradeTape {
    let n = s.len();
    let tape = TradeTape::new(
        SignSeries::new(s, seed, GeneratorTag::Iid).unwrap(),
        VolumeSeries::constant(n, 1.0).unwrap(),
    )
    .unwrap();
    let cfg = ImpactConfig::kyle(0.3)
        .with_kernel(Kernel::power_law(beta, 1.0, 0.0).unwrap())
        .with_noise(0.1);
    let p = propagator_path(&tape, &cfg, seed).unwrap();
    tape.with_prices(p).unwrap()
}

/// Round trips on increasing slots built from signed sizes, closed by a
/// final trade that flattens the position.
fn round_trip() -> impl Strategy<Value = Plan> {
    prop::collection::vec((1usize..4, -4i32..=4), 1..6).prop_filter_map("flat", |steps| {
        let mut slot = 0;
        let mut trades = Vec::new();
        for (gap, q) in steps {
            slot += gap;
            if q != 0 {
                trades.push(Trade { slot, q: q as f64 });
            }
        }
        let net: f64 = trades.iter().map(|t| t.q).sum();
        if trades.is_empty() {
            return None;
        }
        if net != 0.0 {
            slot += 1;
            trades.push(Trade { slot, q: -net });
        }
        Plan::new(trades, slot).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulation_is_a_pure_function_of_config_and_seed(seed in 0u64..1000, beta in 0.0f64..0.8) {
        let mut cfg = ExperimentConfig::paper_suite();
        cfg.n = 512;
        cfg.burn_in = Some(64);
        cfg.seeds = SeedSpec::Single(seed);
        cfg.volumes = VolumeSpec::Lognormal { mu: 0.0, sigma: 0.5 };
        cfg.impact = cfg.impact.with_noise(0.2).with_kernel(Kernel::power_law(beta, 1.0, 0.0).unwrap());
        let a = simulate(&cfg, seed).unwrap();
        let b = simulate(&cfg, seed).unwrap();
        prop_assert_eq!(io::tape_to_csv(&a.tape), io::tape_to_csv(&b.tape));
        prop_assert_eq!(a.tape, b.tape);
    }

    #[test]
    fn mirrored_strategy_costs_the_same(s in round_trip(), beta in 0.0f64..1.0, psi in 0.1f64..=1.0) {
        let k = Kernel::power_law(beta, 1.0, 0.0).unwrap();
        for own in [OwnImpact::Full, OwnImpact::Half] {
            let a = strategy_cost(&s, &k, 1.0, psi, own).unwrap().expected_cost;
            let b = strategy_cost(&s.mirrored(), &k, 1.0, psi, own).unwrap().expected_cost;
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn cost_scales_linearly_in_lambda(s in round_trip(), beta in 0.0f64..1.0, psi in 0.1f64..=1.0, c in 0.01f64..100.0) {
        let k = Kernel::power_law(beta, 1.0, 0.0).unwrap();
        let a = strategy_cost(&s, &k, 1.0, psi, OwnImpact::Full).unwrap().expected_cost;
        let b = strategy_cost(&s, &k, c, psi, OwnImpact::Full).unwrap().expected_cost;
        prop_assert!((b - c * a).abs() <= 1e-12 * (1.0 + (c * a).abs()));
    }

    #[test]
    fn linear_permanent_impact_admits_no_manipulation(s in round_trip(), lambda in 0.0f64..10.0) {
        let cost = strategy_cost(&s, &Kernel::permanent(1.0), lambda, 1.0, OwnImpact::Full).unwrap().expected_cost;
        prop_assert!(cost >= -1e-12);
    }

    #[test]
    fn estimators_ignore_a_price_shift(s in signs(), shift in -1e3f64..1e3, beta in 0.0f64..0.6) {
        let t = priced_tape(s, beta, 7);
        let shifted: Vec<f64> = t.prices().unwrap().iter().map(|p| p + shift).collect();
        let u = t.clone().with_prices(shifted).unwrap();
        let (r0, r1) = (response(&t, 16).unwrap(), response(&u, 16).unwrap());
        let (d0, d1) = (diffusivity(t.prices().unwrap(), 16).unwrap(), diffusivity(u.prices().unwrap(), 16).unwrap());
        for i in 0..16 {
            prop_assert!((r0.values[i] - r1.values[i]).abs() < 1e-9);
            prop_assert!((d0.values[i] - d1.values[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn flipping_signs_and_prices_leaves_r_and_c(s in signs(), beta in 0.0f64..0.6) {
        let t = priced_tape(s.clone(), beta, 3);
        let flipped = TradeTape::new(
            SignSeries::new(s.iter().map(|e| -e).collect(), 3, GeneratorTag::Iid).unwrap(),
            t.volumes.clone(),
        )
        .unwrap()
        .with_prices(t.prices().unwrap().iter().map(|p| -p).collect())
        .unwrap();
        let (r0, r1) = (response(&t, 16).unwrap(), response(&flipped, 16).unwrap());
        let (c0, c1) = (sign_autocorr(&t.signs, 16).unwrap(), sign_autocorr(&flipped.signs, 16).unwrap());
        for i in 0..16 {
            prop_assert!((r0.values[i] - r1.values[i]).abs() < 1e-12);
            prop_assert!((c0.values[i] - c1.values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn tape_csv_round_trips(s in signs(), seed in 0u64..100, scale in 1e-6f64..1e6) {
        let n = s.len();
        let vols: Vec<f64> = (0..n).map(|i| scale * (1.0 + (i as f64).sin().abs())).collect();
        let t = TradeTape::new(
            SignSeries::new(s, seed, GeneratorTag::Iid).unwrap(),
            VolumeSeries::new(vols, None).unwrap(),
        )
        .unwrap();
        let priced = t.clone().with_prices((0..=n).map(|i| (i as f64 * 0.37).cos() * scale).collect()).unwrap();
        for tape in [t, priced] {
            let back = io::tape_from_csv(&io::tape_to_csv(&tape)).unwrap();
            prop_assert_eq!(back.signs.as_slice(), tape.signs.as_slice());
            prop_assert_eq!(back.volumes.as_slice(), tape.volumes.as_slice());
            prop_assert_eq!(back.prices(), tape.prices());
        }
    }

    #[test]
    fn curve_csv_round_trips(s in signs()) {
        let t = priced_tape(s, 0.3, 1);
        let r = response(&t, 24).unwrap();
        let back = io::curve_from_csv(&io::curve_to_csv(&r), r.role).unwrap();
        prop_assert_eq!(back.lags, r.lags);
        prop_assert_eq!(back.values, r.values);
        prop_assert_eq!(back.counts, r.counts);
        prop_assert_eq!(back.se, r.se);
    }

    #[test]
    fn config_json_round_trips(n in 1usize..1_000_000, gamma in 0.05f64..0.95, lambda in 0.0f64..5.0, rho in -0.9f64..0.9, seed in 0u64..u64::MAX) {
        let mut cfg = ExperimentConfig::paper_suite();
        cfg.n = n;
        cfg.impact.lambda = lambda;
        cfg.seeds = SeedSpec::Range { start: seed / 2, count: 3 };
        cfg.generator = if gamma < 0.5 {
            GeneratorSpec::ClippedFractional { gamma, shape: Default::default() }
        } else {
            GeneratorSpec::Markov { rho }
        };
        cfg.model = ModelSpec::Kyle;
        let text = io::to_json(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        prop_assert_eq!(io::config_hash(&back).unwrap(), io::config_hash(&cfg).unwrap());
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn surprise_equals_propagator_with_the_identified_kernel(
        s in signs(),
        coeffs in prop::collection::vec(-0.2f64..0.2, 1..5),
        lambda in 0.1f64..3.0,
    ) {
        let n = s.len();
        let tape = TradeTape::new(
            SignSeries::new(s, 0, GeneratorTag::Iid).unwrap(),
            VolumeSeries::constant(n, 2.0).unwrap(),
        )
        .unwrap();
        let pred = ArPredictor::new(coeffs.clone()).unwrap();
        let cfg = ImpactConfig::kyle(lambda).with_psi(0.5);
        let a = returns(&surprise_path(&tape, &pred, &cfg, 0).unwrap());
        let k = kernel_from_predictor(&pred, coeffs.len() + 1).unwrap();
        let b = returns(&propagator_path(&tape, &cfg.clone().with_kernel(k), 0).unwrap());
        let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9 * scale);
        }
    }
}
