use csl_core::constraints::{check_all, check_interference_bound, CouplingSet};
use csl_core::engine::{apply_step, branch_probabilities, closed_form, evolve, squared_norm, NoiseIncrement};
use csl_core::logspace::log_sum_exp;
use csl_core::{scenario_from_probabilities, two_branch_delta_scenario, ModelParams, RunConfig, Scheme};
use proptest::prelude::*;

fn normalized(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_sum_exp_matches_direct_sum(xs in prop::collection::vec(-30.0f64..30.0, 1..8)) {
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        prop_assert!((log_sum_exp(&xs) - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn log_sum_exp_is_shift_equivariant(xs in prop::collection::vec(-5.0f64..5.0, 1..6), c in -700.0f64..700.0) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        prop_assert!((log_sum_exp(&shifted) - log_sum_exp(&xs) - c).abs() <= 1e-9);
    }

    #[test]
    fn steps_agree_with_closed_form(
        raw in prop::collection::vec(0.05f64..1.0, 2..5),
        occ in prop::collection::vec(0u64..6, 4),
        db in prop::collection::vec(prop::collection::vec(-0.3f64..0.3, 1), 1..20),
    ) {
        let k = raw.len();
        let probs = normalized(&raw);
        let occupations: Vec<Vec<u64>> = (0..k).map(|i| vec![occ[i % occ.len()] + i as u64]).collect();
        let scenario = scenario_from_probabilities("p", ModelParams::unit(), &probs, occupations).unwrap();
        let dt = 0.01;
        let mut state = scenario.initial.clone();
        let mut total = 0.0;
        for d in &db {
            state = apply_step(&state, &NoiseIncrement { db: d.clone() }, dt, 1.0).unwrap();
            total += d[0];
        }
        let exact = closed_form(&scenario, &[total], dt * db.len() as f64).unwrap();
        for (b, e) in state.branches.iter().zip(&exact) {
            prop_assert!((b.log_magnitude - e).abs() <= 1e-10);
        }
        let p = branch_probabilities(&state);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(squared_norm(&state).is_finite());
    }

    #[test]
    fn amplitude_blind_noise_ignores_amplitudes(a in 0.05f64..0.95, b in 0.05f64..0.95, trial in 0u64..1000) {
        let cfg = RunConfig::new(0.01, 3.0, 1, Scheme::CoefficientIndependent, 77);
        let s1 = two_branch_delta_scenario(ModelParams::unit(), 3, a).unwrap();
        let s2 = two_branch_delta_scenario(ModelParams::unit(), 3, b).unwrap();
        let t1 = evolve(&s1, &cfg, trial);
        let t2 = evolve(&s2, &cfg, trial);
        // same noise path, so log-magnitude differences shift only by the initial offset
        let offset = |t: &csl_core::engine::Trajectory, i: usize| t.log_magnitudes[i][0] - t.log_magnitudes[i][1];
        let shift = offset(&t1, 0) - offset(&t2, 0);
        let last = t1.times.len() - 1;
        prop_assert!((offset(&t1, last) - offset(&t2, last) - shift).abs() <= 1e-9);
    }

    #[test]
    fn interference_bound_is_a_threshold(exp in -20.0f64..0.0) {
        let lambda = 10f64.powf(exp);
        let c = CouplingSet { lambda, ..CouplingSet::mass_proportional() };
        prop_assert_eq!(check_interference_bound(&c).pass, lambda < 1e-6);
    }

    #[test]
    fn electron_coupling_passes_only_below_limit(ratio in 0.0f64..0.02) {
        let c = CouplingSet { alpha_elec_over_nuc: ratio, ..CouplingSet::mass_proportional() };
        let v = check_all(&c);
        prop_assert_eq!(v.items[0].pass, ratio <= 13.0 / 2000.0);
    }
}

#[test]
fn evolution_is_reproducible_per_trial() {
    let s = two_branch_delta_scenario(ModelParams::unit(), 2, 0.4).unwrap();
    for scheme in [Scheme::RawWeighted, Scheme::PhysicalDrift, Scheme::CoefficientIndependent] {
        let cfg = RunConfig::new(0.01, 2.0, 1, scheme, 5);
        assert_eq!(evolve(&s, &cfg, 3), evolve(&s, &cfg, 3));
        assert_ne!(evolve(&s, &cfg, 3).log_magnitudes, evolve(&s, &cfg, 4).log_magnitudes);
    }
}

#[test]
fn serde_round_trips() {
    let s = scenario_from_probabilities("k3", ModelParams::standard(), &[0.5, 0.3, 0.2], vec![vec![0], vec![4], vec![8]])
        .unwrap();
    let back: csl_core::Scenario = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
    assert_eq!(back, s);

    let mut cfg = RunConfig::new(1e-3, 5.0, 100, Scheme::PhysicalDrift, 9).with_uniform_samples(4);
    cfg.collapse_level = 4.0;
    let text = serde_json::to_string(&cfg).unwrap();
    assert!(text.contains("\"physical-drift\""));
    assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);

    let c = CouplingSet::equal_coupling();
    assert_eq!(serde_json::from_str::<CouplingSet>(&serde_json::to_string(&c).unwrap()).unwrap(), c);
}

#[test]
fn unknown_config_fields_are_rejected() {
    let e = serde_json::from_str::<RunConfig>(
        r#"{"dt":0.01,"t_max":1,"trials":10,"scheme":"raw-weighted","master_seed":1,"seeed":2}"#,
    )
    .unwrap_err();
    assert!(e.to_string().contains("seeed"));
}
