//! Block coordinate descent over (gamma, alpha, w, beta, Phi).
//!
//! Each sweep maximizes the reformulated sum-rate surrogate
//!
//! ```text
//! f_ldt = sum_l [ ln(1 + gamma_l) - gamma_l + (1 + gamma_l) t_l(w, Phi) ]
//! ```
//!
//! one block at a time: the ratio auxiliaries gamma and the quadratic
//! auxiliaries alpha/beta have closed forms, the beamformer block is a
//! convex QCQP under the power and interference budgets, and the surface
//! block dispatches to the independent-model majorization loop or the
//! coupled-model penalty dual decomposition. Every sweep ends with an
//! accept-or-keep comparison on the beamformer and surface candidates, so
//! the recorded objective trace is non-decreasing up to rounding. Three
//! reference schemes reuse the same loop: no surface at all, two one-sided
//! half-surfaces, and a frozen even energy split.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conic::{solve_qcqp, QcqpOptions, SolverError};
use crate::linalg::{adjoint, realify, unrealify_vec, CVec};
use crate::metrics::{
    aggregate_channels_all, f_ldt, interference_temperatures_all, sum_rate, total_power,
    AuxState, Beamformers,
};
use crate::pdd_coupled::{run_pdd, PddOptions};
use crate::sca_independent::{solve_phi_independent, AmplitudeProfile, ScaOptions};
use crate::scene::{ChannelSet, Geometry, SystemConfig};
use crate::star::{PhaseModel, StarCoefficients, StarVectors};
use crate::transforms::{
    build_v_subproblem, build_w_subproblem, update_alpha, update_beta, update_gamma,
};

/// Relative shrink of the power and interference budgets handed to the
/// beamformer QCQP, absorbing the interior-point terminal residual.
const BUDGET_MARGIN: f64 = 1e-8;

/// Relative contraction placing the initial beamformers strictly inside
/// the feasible set.
const INIT_MARGIN: f64 = 1e-3;

/// Relative shrink of the warm start handed to the beamformer QCQP; the
/// budgets are homogeneous quadratics, so shrinking restores strictness.
const START_SHRINK: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum BcdError {
    #[error("bad input: {0}")]
    BadInput(String),
}

/// Why a solve stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Termination {
    /// Fractional objective increase fell below the threshold.
    Converged,
    /// Sweep budget exhausted before convergence.
    MaxIterations,
    /// A subproblem reported an infeasible constraint set.
    Infeasible,
    /// A subproblem solver failed; the trace up to the failure is kept.
    SolverFailure,
}

/// Per-solve diagnostics. Index 0 of each trace is the initial state;
/// entry i >= 1 follows the i-th completed sweep.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Surrogate objective f_ldt (nats) per recorded iterate.
    pub objective_trace: Vec<f64>,
    /// Total transmit power per recorded iterate.
    pub power_trace: Vec<f64>,
    /// Tightest interference slack min_k (Gamma_k - IT_k) per recorded
    /// iterate; +inf when there are no primary users.
    pub it_slack_trace: Vec<f64>,
    /// Coupled model only: consensus gap of the last accepted surface
    /// solve, per recorded sweep.
    pub violation_trace: Option<Vec<f64>>,
    /// Coupled model only: per sweep, the per-element phase difference
    /// theta_t - theta_r wrapped into [0, 2 pi).
    pub phase_trace: Option<Vec<Vec<f64>>>,
    pub termination: Termination,
    /// Failure detail when the termination is infeasible / solver-failure.
    pub failure: Option<String>,
    /// Completed sweeps.
    pub iterations: usize,
    pub wall_time: Duration,
    /// Achieved sum rate at the final iterate, bits.
    pub sum_rate_bits: f64,
}

/// Final optimizer state.
#[derive(Debug, Clone)]
pub struct BcdState {
    pub w: Beamformers,
    pub star: StarCoefficients,
    pub aux: AuxState,
    /// Copy of the report's objective trace.
    pub objective_trace: Vec<f64>,
    /// Completed sweeps.
    pub iterations: usize,
}

/// Tuning knobs for [`run_bcd`] and the baselines.
#[derive(Debug, Clone)]
pub struct BcdOptions {
    /// Fractional f_ldt increase below which the loop stops.
    pub eps_bcd: f64,
    /// Sweep budget.
    pub max_iterations: usize,
    /// Seed for the random initial surface phases.
    pub init_seed: u64,
    /// Interior-point settings for the beamformer step.
    pub qcqp: QcqpOptions,
    /// Surface-step settings, independent model.
    pub sca: ScaOptions,
    /// Surface-step settings, coupled model.
    pub pdd: PddOptions,
}

impl Default for BcdOptions {
    fn default() -> Self {
        BcdOptions {
            eps_bcd: 1e-3,
            max_iterations: 100,
            init_seed: 0,
            qcqp: QcqpOptions {
                tol: 1e-9,
                ..QcqpOptions::default()
            },
            sca: ScaOptions::default(),
            pdd: PddOptions::default(),
        }
    }
}

/// How the surface block is optimized.
enum PhiMode {
    Independent(AmplitudeProfile),
    Coupled { freeze_amplitudes: bool },
    /// Surface held fixed (no-surface reference scheme).
    Frozen,
}

/// Unit-norm matched beamformers: the principal eigenvector of H_l^H H_l
/// per user.
fn matched_beamformers(h: &[crate::linalg::CMat]) -> Beamformers {
    h.iter()
        .map(|h_l| {
            let gram = realify(&adjoint(h_l).dot(h_l));
            let eig = gram.symmetric_eigen();
            let mut best = 0;
            for i in 1..eig.eigenvalues.len() {
                if eig.eigenvalues[i] > eig.eigenvalues[best] {
                    best = i;
                }
            }
            let principal = unrealify_vec(&eig.eigenvectors.column(best).into_owned());
            let norm = principal.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            principal.mapv(|z| z / norm)
        })
        .collect()
}

/// Scale unit beamformers by a single common factor so the power budget
/// and every interference budget hold with a strict margin.
fn scale_into_budgets(
    unit: Beamformers,
    channels: &ChannelSet,
    geometry: &Geometry,
    vectors: &StarVectors,
    p_s: f64,
    gamma_k: &[f64],
) -> Beamformers {
    let mut s_sq = p_s / total_power(&unit).max(f64::MIN_POSITIVE);
    let temperatures =
        interference_temperatures_all(channels, &geometry.pu_sides, vectors, &unit);
    for (it, &budget) in temperatures.iter().zip(gamma_k) {
        if *it > 0.0 {
            s_sq = s_sq.min(budget / it);
        }
    }
    let s = (s_sq * (1.0 - INIT_MARGIN)).max(0.0).sqrt();
    unit.into_iter().map(|w_l| w_l.mapv(|z| z * s)).collect()
}

/// Equal-split surface with random phases; coupled mode draws the
/// transmission phase and a random quarter-turn offset sign.
fn random_phase_star(n: usize, model: PhaseModel, seed: u64) -> StarCoefficients {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;
    let mut theta_t = Vec::with_capacity(n);
    let mut theta_r = Vec::with_capacity(n);
    for _ in 0..n {
        let t = rng.gen_range(0.0..tau);
        let r = match model {
            PhaseModel::Independent => rng.gen_range(0.0..tau),
            PhaseModel::Coupled => {
                if rng.gen::<bool>() {
                    t + std::f64::consts::FRAC_PI_2
                } else {
                    t - std::f64::consts::FRAC_PI_2
                }
            }
        };
        theta_t.push(t);
        theta_r.push(r);
    }
    StarCoefficients::new(vec![0.5; n], vec![0.5; n], theta_t, theta_r, model)
        .expect("equal-length coefficient arrays")
}

fn min_it_slack(
    channels: &ChannelSet,
    geometry: &Geometry,
    vectors: &StarVectors,
    w: &Beamformers,
    gamma_k: &[f64],
) -> f64 {
    let temperatures = interference_temperatures_all(channels, &geometry.pu_sides, vectors, w);
    temperatures
        .iter()
        .zip(gamma_k)
        .map(|(it, budget)| budget - it)
        .fold(f64::INFINITY, f64::min)
}

/// The shared sweep loop. `star` supplies the initial surface; `mode`
/// selects how (or whether) the surface block moves.
#[allow(clippy::too_many_lines)]
fn solve_with_mode(
    channels: &ChannelSet,
    geometry: &Geometry,
    config: &SystemConfig,
    star0: StarCoefficients,
    mode: PhiMode,
    options: &BcdOptions,
) -> Result<(BcdState, SolveReport), BcdError> {
    config
        .validate()
        .map_err(|e| BcdError::BadInput(e.to_string()))?;
    if geometry.su_count() != config.l || geometry.pu_count() != config.k {
        return Err(BcdError::BadInput(
            "geometry population does not match the configuration".into(),
        ));
    }
    let clock = Instant::now();
    let sigma_sq = &channels.sigma_sq;

    let mut star = star0;
    let mut vectors = star.to_vectors();
    let mut h = aggregate_channels_all(channels, &geometry.su_sides, &vectors);
    let mut w = scale_into_budgets(
        matched_beamformers(&h),
        channels,
        geometry,
        &vectors,
        config.p_s,
        &config.gamma,
    );
    let mut gamma = update_gamma(&h, &w, sigma_sq).gamma;
    let mut aux = AuxState {
        gamma: gamma.clone(),
        alpha: Vec::new(),
        beta: Vec::new(),
    };

    let mut objective_trace = vec![f_ldt(&gamma, &w, &h, sigma_sq)];
    let mut power_trace = vec![total_power(&w)];
    let mut it_slack_trace = vec![min_it_slack(channels, geometry, &vectors, &w, &config.gamma)];
    let mut violation_trace = match mode {
        PhiMode::Coupled { .. } => Some(Vec::new()),
        _ => None,
    };
    let mut phase_trace = match mode {
        PhiMode::Coupled { .. } => Some(Vec::new()),
        _ => None,
    };
    let mut last_violation = 0.0f64;
    let mut iterations = 0usize;
    let mut termination = Termination::MaxIterations;
    let mut failure = None;

    let shrunk_p_s = config.p_s * (1.0 - BUDGET_MARGIN);
    let shrunk_gamma_k: Vec<f64> = config
        .gamma
        .iter()
        .map(|g| g * (1.0 - BUDGET_MARGIN))
        .collect();

    'sweeps: for sweep in 1..=options.max_iterations {
        gamma = update_gamma(&h, &w, sigma_sq).gamma;
        let alpha = update_alpha(&h, &w, sigma_sq, &gamma);
        aux.gamma = gamma.clone();
        aux.alpha = alpha.clone();

        // Beamformer block: convex QCQP under margin-shrunk budgets, warm
        // started strictly inside (the budgets are homogeneous in w).
        let wsub = build_w_subproblem(
            channels,
            &geometry.pu_sides,
            &vectors,
            &h,
            &gamma,
            &alpha,
            shrunk_p_s,
            &shrunk_gamma_k,
        );
        let start: Vec<CVec> = w
            .iter()
            .map(|w_l| w_l.mapv(|z| z * (1.0 - START_SHRINK)))
            .collect();
        let w_options = QcqpOptions {
            initial_point: Some(start),
            ..options.qcqp.clone()
        };
        match solve_qcqp(&wsub.to_qcqp(), &w_options) {
            Ok(solution) => {
                let candidate: Beamformers = solution.x;
                let before = f_ldt(&gamma, &w, &h, sigma_sq);
                let after = f_ldt(&gamma, &candidate, &h, sigma_sq);
                if after >= before {
                    w = candidate;
                }
            }
            Err(error) => {
                termination = match error {
                    SolverError::Infeasible(_) => Termination::Infeasible,
                    _ => Termination::SolverFailure,
                };
                failure = Some(format!("beamformer step, sweep {sweep}: {error}"));
                break 'sweeps;
            }
        }

        let beta = update_beta(&h, &w, sigma_sq, &gamma);
        aux.beta = beta.clone();

        // Surface block.
        if star.len() > 0 {
            match &mode {
                PhiMode::Frozen => {}
                PhiMode::Independent(profile) => {
                    let vsub = build_v_subproblem(
                        channels,
                        &geometry.su_sides,
                        &geometry.pu_sides,
                        &w,
                        sigma_sq,
                        &gamma,
                        &beta,
                        &config.gamma,
                    );
                    match solve_phi_independent(&vsub, &vectors, profile, &options.sca) {
                        Ok(report) => {
                            let h_candidate = aggregate_channels_all(
                                channels,
                                &geometry.su_sides,
                                &report.vectors,
                            );
                            let before = f_ldt(&gamma, &w, &h, sigma_sq);
                            let after = f_ldt(&gamma, &w, &h_candidate, sigma_sq);
                            if after >= before {
                                star = StarCoefficients::from_vectors(
                                    &report.vectors.v_t,
                                    &report.vectors.v_r,
                                    PhaseModel::Independent,
                                )
                                .expect("matched surface lengths");
                                vectors = report.vectors;
                                h = h_candidate;
                            }
                        }
                        Err(error) => {
                            termination = Termination::SolverFailure;
                            failure = Some(format!("surface step, sweep {sweep}: {error}"));
                            break 'sweeps;
                        }
                    }
                }
                PhiMode::Coupled { freeze_amplitudes } => {
                    let vsub = build_v_subproblem(
                        channels,
                        &geometry.su_sides,
                        &geometry.pu_sides,
                        &w,
                        sigma_sq,
                        &gamma,
                        &beta,
                        &config.gamma,
                    );
                    let pdd_options = PddOptions {
                        freeze_amplitudes: *freeze_amplitudes,
                        ..options.pdd.clone()
                    };
                    match run_pdd(&vsub, &vectors, &pdd_options) {
                        Ok((coefficients, report)) => {
                            let candidate = coefficients.to_vectors();
                            let h_candidate = aggregate_channels_all(
                                channels,
                                &geometry.su_sides,
                                &candidate,
                            );
                            let before = f_ldt(&gamma, &w, &h, sigma_sq);
                            let after = f_ldt(&gamma, &w, &h_candidate, sigma_sq);
                            if after >= before {
                                star = coefficients;
                                vectors = candidate;
                                h = h_candidate;
                                last_violation = report.violation;
                            }
                        }
                        Err(error) => {
                            termination = Termination::SolverFailure;
                            failure = Some(format!("surface step, sweep {sweep}: {error}"));
                            break 'sweeps;
                        }
                    }
                }
            }
        }

        let objective = f_ldt(&gamma, &w, &h, sigma_sq);
        objective_trace.push(objective);
        power_trace.push(total_power(&w));
        it_slack_trace.push(min_it_slack(channels, geometry, &vectors, &w, &config.gamma));
        if let Some(trace) = &mut violation_trace {
            trace.push(last_violation);
        }
        if let Some(trace) = &mut phase_trace {
            let tau = std::f64::consts::TAU;
            trace.push(
                star.theta_t
                    .iter()
                    .zip(&star.theta_r)
                    .map(|(t, r)| (t - r).rem_euclid(tau))
                    .collect(),
            );
        }
        iterations = sweep;

        let previous = objective_trace[objective_trace.len() - 2];
        if objective - previous <= options.eps_bcd * previous.abs().max(f64::MIN_POSITIVE) {
            termination = Termination::Converged;
            break;
        }
    }

    let sum_rate_bits = sum_rate(&h, &w, sigma_sq) / std::f64::consts::LN_2;
    let report = SolveReport {
        objective_trace: objective_trace.clone(),
        power_trace,
        it_slack_trace,
        violation_trace,
        phase_trace,
        termination,
        failure,
        iterations,
        wall_time: clock.elapsed(),
        sum_rate_bits,
    };
    let state = BcdState {
        w,
        star,
        aux,
        objective_trace,
        iterations,
    };
    Ok((state, report))
}

/// Full joint design: surface amplitudes and phases free under the chosen
/// phase-shift model.
pub fn run_bcd(
    channels: &ChannelSet,
    geometry: &Geometry,
    config: &SystemConfig,
    model: PhaseModel,
    options: &BcdOptions,
) -> Result<(BcdState, SolveReport), BcdError> {
    let star0 = random_phase_star(config.n, model, options.init_seed);
    let mode = match model {
        PhaseModel::Independent => PhiMode::Independent(AmplitudeProfile::PairSum),
        PhaseModel::Coupled => PhiMode::Coupled {
            freeze_amplitudes: false,
        },
    };
    solve_with_mode(channels, geometry, config, star0, mode, options)
}

/// Reference scheme: no reconfigurable surface at all. Both coefficient
/// vectors are zero, so only the direct links carry signal and
/// interference; the result does not depend on the surface channels.
pub fn baseline_traditional_cr(
    channels: &ChannelSet,
    geometry: &Geometry,
    config: &SystemConfig,
    options: &BcdOptions,
) -> Result<(BcdState, SolveReport), BcdError> {
    let star0 = StarCoefficients::new(
        vec![0.0; config.n],
        vec![0.0; config.n],
        vec![0.0; config.n],
        vec![0.0; config.n],
        PhaseModel::Independent,
    )
    .expect("equal-length coefficient arrays");
    solve_with_mode(channels, geometry, config, star0, PhiMode::Frozen, options)
}

/// Reference scheme: two one-sided half-surfaces. The first floor(N/2)
/// elements transmit only (rho_t = 1), the rest reflect only (rho_r = 1);
/// phases are optimized with the independent-model machinery.
pub fn baseline_conventional_ris(
    channels: &ChannelSet,
    geometry: &Geometry,
    config: &SystemConfig,
    options: &BcdOptions,
) -> Result<(BcdState, SolveReport), BcdError> {
    let n = config.n;
    let half = n / 2;
    let rho_t: Vec<f64> = (0..n).map(|i| if i < half { 1.0 } else { 0.0 }).collect();
    let rho_r: Vec<f64> = (0..n).map(|i| if i < half { 0.0 } else { 1.0 }).collect();
    let phases = random_phase_star(n, PhaseModel::Independent, options.init_seed);
    let star0 = StarCoefficients::new(
        rho_t.clone(),
        rho_r.clone(),
        phases.theta_t,
        phases.theta_r,
        PhaseModel::Independent,
    )
    .expect("equal-length coefficient arrays");
    let mode = PhiMode::Independent(AmplitudeProfile::PerSide { rho_t, rho_r });
    solve_with_mode(channels, geometry, config, star0, mode, options)
}

/// Reference scheme: frozen even energy split, phases optimized under the
/// selected model.
pub fn baseline_equal_splitting(
    channels: &ChannelSet,
    geometry: &Geometry,
    config: &SystemConfig,
    model: PhaseModel,
    options: &BcdOptions,
) -> Result<(BcdState, SolveReport), BcdError> {
    let star0 = random_phase_star(config.n, model, options.init_seed);
    let mode = match model {
        PhaseModel::Independent => PhiMode::Independent(AmplitudeProfile::PerSide {
            rho_t: vec![0.5; config.n],
            rho_r: vec![0.5; config.n],
        }),
        PhaseModel::Coupled => PhiMode::Coupled {
            freeze_amplitudes: true,
        },
    };
    solve_with_mode(channels, geometry, config, star0, mode, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::generate_channels;

    fn desk_config(n: usize) -> SystemConfig {
        SystemConfig {
            n,
            k: 2,
            gamma: vec![1e-11; 2],
            ..SystemConfig::default()
        }
    }

    fn desk_scene(n: usize, seed: u64) -> (SystemConfig, Geometry, ChannelSet) {
        let config = desk_config(n);
        let geometry = Geometry::generate(&config, seed);
        let channels = generate_channels(&config, &geometry, seed + 1000).unwrap();
        (config, geometry, channels)
    }

    fn assert_monotone(trace: &[f64]) {
        for pair in trace.windows(2) {
            let tol = 1e-9 * (1.0 + pair[0].abs());
            assert!(
                pair[1] >= pair[0] - tol,
                "objective decreased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    fn assert_feasible(report: &SolveReport, config: &SystemConfig) {
        for &power in &report.power_trace {
            assert!(
                power <= config.p_s * (1.0 + 1e-9),
                "power {power} exceeds budget {}",
                config.p_s
            );
        }
        let floor: f64 = config.gamma.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        for &slack in &report.it_slack_trace {
            assert!(
                slack >= -1e-6 * floor.max(0.0),
                "interference slack {slack} below tolerance"
            );
        }
    }

    #[test]
    fn single_user_without_budgets_uses_full_power() {
        // One user, no primary receivers, no surface: the rate is monotone
        // in transmit power, so the converged beamformer sits on the power
        // sphere.
        let config = SystemConfig {
            n: 0,
            l: 1,
            k: 0,
            gamma: vec![],
            ..SystemConfig::default()
        };
        let geometry = Geometry::generate(&config, 7);
        let channels = generate_channels(&config, &geometry, 8).unwrap();
        let options = BcdOptions {
            eps_bcd: 1e-6,
            max_iterations: 50,
            ..BcdOptions::default()
        };
        let (state, report) =
            run_bcd(&channels, &geometry, &config, PhaseModel::Independent, &options).unwrap();
        assert_eq!(report.termination, Termination::Converged);
        assert_monotone(&report.objective_trace);
        let power = total_power(&state.w);
        assert!(
            (power - config.p_s).abs() <= 1e-3 * config.p_s,
            "converged power {power} should exhaust the budget {}",
            config.p_s
        );
        assert!(report.sum_rate_bits > 0.0);
    }

    #[test]
    fn desk_independent_run_is_monotone_feasible_and_converges() {
        let (config, geometry, channels) = desk_scene(8, 1);
        let options = BcdOptions::default();
        let (state, report) =
            run_bcd(&channels, &geometry, &config, PhaseModel::Independent, &options).unwrap();
        assert_eq!(report.termination, Termination::Converged);
        assert!(report.iterations <= 25, "took {} sweeps", report.iterations);
        assert_monotone(&report.objective_trace);
        assert_feasible(&report, &config);
        assert!(report.sum_rate_bits > 0.0);
        // Surface iterate stays on the energy-split sphere.
        assert!(state.star.validate().is_empty());
    }

    #[test]
    fn desk_coupled_run_is_monotone_feasible_and_converges() {
        let (config, geometry, channels) = desk_scene(8, 2);
        let options = BcdOptions::default();
        let (state, report) =
            run_bcd(&channels, &geometry, &config, PhaseModel::Coupled, &options).unwrap();
        assert_eq!(
            report.termination,
            Termination::Converged,
            "failure: {:?}",
            report.failure
        );
        assert!(report.iterations <= 20, "took {} sweeps", report.iterations);
        assert_monotone(&report.objective_trace);
        assert_feasible(&report, &config);
        // Quarter-turn coupling and energy split hold exactly at the end.
        assert!(state.star.validate().is_empty());
        let violations = report.violation_trace.as_ref().unwrap();
        for &violation in violations {
            assert!(violation <= options.pdd.eps_pdd);
        }
        let last_phases = report.phase_trace.as_ref().unwrap().last().unwrap();
        for &diff in last_phases {
            let quarter = std::f64::consts::FRAC_PI_2;
            let distance = (diff - quarter).abs().min((diff - 3.0 * quarter).abs());
            assert!(distance <= 1e-3, "phase difference {diff} not a quarter turn");
        }
    }

    #[test]
    fn traditional_cr_equals_the_full_model_on_dead_surface_channels() {
        // Zeroing every surface channel makes the full model's surface step
        // inert, so the no-surface scheme must match it exactly.
        let (config, geometry, channels) = desk_scene(4, 3);
        let mut dead = channels.clone();
        dead.g_s.fill(num_complex::Complex64::new(0.0, 0.0));
        for g in &mut dead.g_su {
            g.fill(num_complex::Complex64::new(0.0, 0.0));
        }
        for g in &mut dead.g_pu {
            g.fill(num_complex::Complex64::new(0.0, 0.0));
        }
        let options = BcdOptions::default();
        let (_, no_surface) =
            baseline_traditional_cr(&dead, &geometry, &config, &options).unwrap();
        let (_, full) =
            run_bcd(&dead, &geometry, &config, PhaseModel::Independent, &options).unwrap();
        assert!(
            (no_surface.sum_rate_bits - full.sum_rate_bits).abs()
                <= 1e-9 * full.sum_rate_bits.abs(),
            "{} != {}",
            no_surface.sum_rate_bits,
            full.sum_rate_bits
        );
        assert_eq!(
            no_surface.objective_trace.len(),
            full.objective_trace.len()
        );
        for (a, b) in no_surface.objective_trace.iter().zip(&full.objective_trace) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn conventional_ris_keeps_the_binary_amplitude_profile() {
        let (config, geometry, channels) = desk_scene(4, 4);
        let options = BcdOptions::default();
        let (state, report) =
            baseline_conventional_ris(&channels, &geometry, &config, &options).unwrap();
        assert_eq!(report.termination, Termination::Converged);
        assert_monotone(&report.objective_trace);
        assert_feasible(&report, &config);
        for i in 0..config.n {
            let want_t = if i < config.n / 2 { 1.0 } else { 0.0 };
            assert!((state.star.rho_t[i] - want_t).abs() < 1e-9);
            assert!((state.star.rho_r[i] - (1.0 - want_t)).abs() < 1e-9);
        }
    }

    #[test]
    fn equal_splitting_keeps_the_even_split_under_both_models() {
        let (config, geometry, channels) = desk_scene(4, 5);
        let options = BcdOptions::default();
        for model in [PhaseModel::Independent, PhaseModel::Coupled] {
            let (state, report) =
                baseline_equal_splitting(&channels, &geometry, &config, model, &options)
                    .unwrap();
            assert_eq!(
                report.termination,
                Termination::Converged,
                "model {model:?}, failure: {:?}",
                report.failure
            );
            assert_monotone(&report.objective_trace);
            assert_feasible(&report, &config);
            for i in 0..config.n {
                assert!((state.star.rho_t[i] - 0.5).abs() < 1e-9, "model {model:?}");
                assert!((state.star.rho_r[i] - 0.5).abs() < 1e-9, "model {model:?}");
            }
        }
    }

    #[test]
    fn reports_are_deterministic_across_reruns() {
        let (config, geometry, channels) = desk_scene(4, 6);
        let options = BcdOptions::default();
        let (first_state, first) =
            run_bcd(&channels, &geometry, &config, PhaseModel::Independent, &options).unwrap();
        let (second_state, second) =
            run_bcd(&channels, &geometry, &config, PhaseModel::Independent, &options).unwrap();
        assert_eq!(first.sum_rate_bits, second.sum_rate_bits);
        assert_eq!(first.objective_trace, second.objective_trace);
        assert_eq!(first_state.star.theta_t, second_state.star.theta_t);
        assert_eq!(first_state.star.rho_t, second_state.star.rho_t);
    }
}
