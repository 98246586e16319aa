//! End-to-end runs through the public API: scene generation, the joint
//! optimizer under both phase models, and cross-module consistency of the
//! reported figures against independently recomputed physics.

use std::f64::consts::{FRAC_PI_2, LN_2, TAU};

use starcr::bcd::{run_bcd, BcdOptions, Termination};
use starcr::metrics::{
    aggregate_channels_all, interference_temperatures_all, sum_rate, total_power,
};
use starcr::scene::{generate_channels, Geometry, SystemConfig};
use starcr::star::PhaseModel;

fn config() -> SystemConfig {
    SystemConfig {
        n: 6,
        k: 2,
        gamma: vec![1e-11; 2],
        ..SystemConfig::default()
    }
}

#[test]
fn reported_figures_match_recomputed_physics_under_both_models() {
    let config = config();
    let geometry = Geometry::generate(&config, 70);
    let channels = generate_channels(&config, &geometry, 71).unwrap();
    let options = BcdOptions {
        init_seed: 72,
        ..BcdOptions::default()
    };
    for model in [PhaseModel::Independent, PhaseModel::Coupled] {
        let (state, report) = run_bcd(&channels, &geometry, &config, model, &options).unwrap();
        assert_eq!(report.termination, Termination::Converged, "{model:?}");

        // The reported rate is the physical sum rate at the final state.
        let vectors = state.star.to_vectors();
        let h = aggregate_channels_all(&channels, &geometry.su_sides, &vectors);
        let recomputed = sum_rate(&h, &state.w, &channels.sigma_sq) / LN_2;
        let rel = (recomputed - report.sum_rate_bits).abs()
            / report.sum_rate_bits.abs().max(f64::MIN_POSITIVE);
        assert!(rel < 1e-12, "{model:?}: report {} vs physics {recomputed}", report.sum_rate_bits);

        // Trace bookkeeping: monotone objective, final entries consistent.
        assert_eq!(report.objective_trace.len(), report.iterations + 1);
        for pair in report.objective_trace.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-8 * (1.0 + pair[0].abs()));
        }
        let final_power = total_power(&state.w);
        assert!((report.power_trace.last().unwrap() - final_power).abs() <= 1e-12);
        assert!(final_power <= config.p_s * (1.0 + 1e-9));

        // Interference limits hold physically, not only in solver variables.
        let it = interference_temperatures_all(&channels, &geometry.pu_sides, &vectors, &state.w);
        for (k, &temp) in it.iter().enumerate() {
            assert!(temp <= config.gamma[k] * (1.0 + 1e-6), "IT_{k} = {temp}");
        }

        // The surface state is admissible for its model.
        assert!(state.star.validate().is_empty());
        if model == PhaseModel::Coupled {
            for (t, r) in state.star.theta_t.iter().zip(&state.star.theta_r) {
                let diff = (t - r).rem_euclid(TAU);
                let off = (diff - FRAC_PI_2).abs().min((diff - 3.0 * FRAC_PI_2).abs());
                assert!(off < 1e-9, "phase offset {diff}");
            }
        }
    }
}

#[test]
fn runs_without_primary_users_report_unbounded_slack() {
    let config = SystemConfig {
        n: 4,
        k: 0,
        gamma: vec![],
        ..SystemConfig::default()
    };
    let geometry = Geometry::generate(&config, 80);
    let channels = generate_channels(&config, &geometry, 81).unwrap();
    let (state, report) = run_bcd(
        &channels,
        &geometry,
        &config,
        PhaseModel::Independent,
        &BcdOptions {
            init_seed: 82,
            ..BcdOptions::default()
        },
    )
    .unwrap();
    assert_eq!(report.termination, Termination::Converged);
    assert!(report.it_slack_trace.iter().all(|s| s.is_infinite()));
    // Without interference limits the power budget is the only cap, so the
    // optimum exhausts it.
    let power = total_power(&state.w);
    assert!(
        (power - config.p_s).abs() <= 1e-3 * config.p_s,
        "power {power} vs budget {}",
        config.p_s
    );
}
