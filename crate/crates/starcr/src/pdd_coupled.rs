//! Penalty dual decomposition for the coupled phase-shift surface subproblem.
//!
//! The coupled model ties each element's transmission and reflection phases
//! to a quarter-turn offset, |theta_t - theta_r| in {pi/2, 3pi/2}, on top of
//! the energy split rho_t + rho_r = 1. The surface subproblem
//!
//! ```text
//! minimize    sum_i (v_i^H C_i v_i - 2 Re(c_i^H v_i)),   i in {t, r}
//! subject to  interference budgets on v, per-element coupled set on v
//! ```
//!
//! is handled by duplicating the variable: an auxiliary copy `vtilde` carries
//! the coupled set while `v` keeps the interference budgets, and the two are
//! tied by the augmented Lagrangian
//!
//! ```text
//! f(v) + sum_i (1 / (2 eta)) ||vtilde_i - v_i + eta tau_i||^2.
//! ```
//!
//! The inner loop block-descends the Lagrangian: a convex QCQP in `v`, then
//! exact per-element closed forms for the coupled copy (phases first, then
//! amplitudes, both maximizing Re(upsilon^H vtilde) with upsilon = v - eta
//! tau). The outer loop takes a dual step on tau when the consensus gap is
//! small and otherwise shrinks eta (strengthening the coupling), until the
//! copies agree within `eps_pdd` and the returned surface meets the
//! interference budgets.

use std::f64::consts::FRAC_PI_2;

use ndarray::Array1;

use crate::conic::{solve_qcqp, QcqpOptions, QcqpProblem, QuadConstraint, QuadForm, SolverError};
use crate::linalg::{CMat, CVec, C64};
use crate::scene::Side;
use crate::star::{PhaseModel, StarCoefficients, StarVectors};
use crate::transforms::VSubproblem;

/// Relative shrink applied to the strictly feasible interior-point start.
const START_SHRINK: f64 = 1e-3;

/// Relative per-outer-iteration improvement that resets the stall counter.
const STALL_IMPROVEMENT: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum PddError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("consensus violation stalled at {violation:.3e} for {window} outer iterations")]
    Stalled { window: usize, violation: f64 },
    #[error("no convergence within {0} outer iterations")]
    NoConvergence(usize),
}

/// Tuning knobs for [`run_pdd`].
#[derive(Debug, Clone)]
pub struct PddOptions {
    /// Initial penalty factor for unit-scale data. The loop divides it by
    /// the largest magnitude in (C_i, c_i) so the coupling term and the
    /// data term start commensurate at any absolute channel scale.
    pub eta_initial: f64,
    /// Penalty shrink factor in (0, 1); smaller eta couples harder.
    pub mu: f64,
    /// Initial consensus threshold for accepting a dual step.
    pub p_initial: f64,
    /// Fractional augmented-objective decrease that ends the inner sweeps.
    pub eps_inner: f64,
    /// Consensus threshold max_i ||vtilde_i - v_i||_inf for termination.
    pub eps_pdd: f64,
    /// Inner sweeps per outer iteration.
    pub max_inner: usize,
    /// Outer iteration budget.
    pub max_outer: usize,
    /// Consecutive non-improving outer iterations before a stall error.
    pub stall_window: usize,
    /// Relative shrink of the interference budgets inside the v-step, so
    /// the consensus point inherits strictly feasible budgets.
    pub it_margin: f64,
    /// Relative interference overshoot tolerated at the returned surface.
    pub it_gate: f64,
    /// Keep the amplitude split fixed at its initial value and optimize
    /// phases only (used by the equal-splitting baseline).
    pub freeze_amplitudes: bool,
    /// Interior-point settings for the v-step.
    pub qcqp: QcqpOptions,
}

impl Default for PddOptions {
    fn default() -> Self {
        PddOptions {
            eta_initial: 10.0,
            mu: 0.6,
            p_initial: 0.1,
            eps_inner: 1e-4,
            eps_pdd: 1e-5,
            max_inner: 50,
            max_outer: 300,
            stall_window: 20,
            it_margin: 2e-6,
            it_gate: 5e-7,
            freeze_amplitudes: false,
            qcqp: QcqpOptions {
                tol: 1e-9,
                ..QcqpOptions::default()
            },
        }
    }
}

/// Loop state: primal pair, coupled auxiliary copy, duals, and the penalty
/// schedule.
#[derive(Debug, Clone)]
pub struct PddState {
    /// Budget-side iterate (satisfies the interference constraints).
    pub v: StarVectors,
    /// Coupled-set iterate vtilde_i[n] = sqrt(rho_i[n]) e^(j theta_i[n]).
    pub vtilde: StarVectors,
    /// Lagrangian dual for the transmission-side copy constraint.
    pub tau_t: CVec,
    /// Lagrangian dual for the reflection-side copy constraint.
    pub tau_r: CVec,
    /// Penalty factor, > 0; the coupling weight is 1 / (2 eta).
    pub eta: f64,
    /// Consensus threshold that gates dual steps, >= 0.
    pub p: f64,
    /// Penalty shrink factor in (0, 1).
    pub mu: f64,
}

/// One outer iteration of the penalty dual decomposition loop.
#[derive(Debug, Clone)]
pub struct PddIteration {
    /// Penalty factor used by this iteration's inner sweeps.
    pub eta: f64,
    /// Consensus gap max_i ||vtilde_i - v_i||_inf after the sweeps.
    pub violation: f64,
    /// Whether the iteration ended with a dual step (vs a penalty shrink).
    pub dual_step: bool,
    /// Number of inner sweeps run.
    pub inner_iterations: usize,
    /// Augmented Lagrangian after each sweep, starting with the value at
    /// the iteration's entry point; non-increasing up to solver tolerance.
    pub inner_al_trace: Vec<f64>,
    /// Data objective sum_i (v_i^H C_i v_i - 2 Re(c_i^H v_i)) at the
    /// budget-side iterate after the sweeps.
    pub objective: f64,
}

/// Solve outcome: the returned surface plus per-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct PddReport {
    /// Budget-side iterate at termination.
    pub v: StarVectors,
    /// Coupled-set iterate at termination, before the terminal projection.
    pub vtilde: StarVectors,
    /// Data objective at the returned (projected) surface.
    pub objective: f64,
    /// Final consensus gap max_i ||vtilde_i - v_i||_inf.
    pub violation: f64,
    /// Outer-iteration trace.
    pub iterations: Vec<PddIteration>,
}

/// Optimal amplitude pair (sqrt(rho_t), sqrt(rho_r)) maximizing
/// sqrt(rho_t) psi_t + sqrt(rho_r) psi_r over the relaxed unit disk
/// sqrt(rho_t)^2 + sqrt(rho_r)^2 <= 1, where psi_i = Re(upsilon_i^*
/// e^(j theta_i)) scores the current phases against the pull upsilon.
/// All cases except (0, 0) land exactly on the energy-conservation sphere.
pub fn optimal_amplitudes(psi_t: f64, psi_r: f64) -> (f64, f64) {
    if psi_t <= 0.0 && psi_r <= 0.0 {
        (0.0, 0.0)
    } else if psi_r <= 0.0 {
        (1.0, 0.0)
    } else if psi_t <= 0.0 {
        (0.0, 1.0)
    } else {
        let norm = psi_t.hypot(psi_r);
        (psi_t / norm, psi_r / norm)
    }
}

/// Optimal coupled phase pair maximizing
/// sqrt(rho_t) Re(upsilon_t^* e^(j theta_t)) + sqrt(rho_r) Re(upsilon_r^*
/// e^(j theta_r)) over the two admissible offsets theta_r = theta_t -+ pi/2.
/// Each branch reduces to maximizing c_1 cos(theta_t) + c_2 sin(theta_t),
/// whose maximizer is the angle of c_1 + j c_2; the larger branch wins and
/// c_1 = c_2 = 0 falls back to theta_t = 0.
pub fn optimal_phases(
    upsilon_t: C64,
    upsilon_r: C64,
    sqrt_rho_t: f64,
    sqrt_rho_r: f64,
) -> (f64, f64) {
    let (a_t, b_t) = (upsilon_t.re, upsilon_t.im);
    let (a_r, b_r) = (upsilon_r.re, upsilon_r.im);
    // Offset theta_r = theta_t - pi/2.
    let c_1 = sqrt_rho_t * a_t - sqrt_rho_r * b_r;
    let c_2 = sqrt_rho_t * b_t + sqrt_rho_r * a_r;
    // Offset theta_r = theta_t + pi/2.
    let d_1 = sqrt_rho_t * a_t + sqrt_rho_r * b_r;
    let d_2 = sqrt_rho_t * b_t - sqrt_rho_r * a_r;
    if c_1.hypot(c_2) >= d_1.hypot(d_2) {
        let theta_t = c_2.atan2(c_1);
        (theta_t, theta_t - FRAC_PI_2)
    } else {
        let theta_t = d_2.atan2(d_1);
        (theta_t, theta_t + FRAC_PI_2)
    }
}

/// Alignment score sum_i sqrt(rho_i) Re(upsilon_i^* e^(j theta_i)) for one
/// element; the quantity both propositions maximize.
#[cfg(test)]
fn pair_alignment(
    upsilon_t: C64,
    upsilon_r: C64,
    sqrt_rho_t: f64,
    sqrt_rho_r: f64,
    theta_t: f64,
    theta_r: f64,
) -> f64 {
    sqrt_rho_t * (upsilon_t.conj() * C64::from_polar(1.0, theta_t)).re
        + sqrt_rho_r * (upsilon_r.conj() * C64::from_polar(1.0, theta_r)).re
}

/// Minimize the augmented Lagrangian over the budget-side copy: a convex
/// QCQP with blocks (v_t, v_r), objective P_i = C_i + (1 / (2 eta)) I and
/// pull q_i = c_i + (1 / (2 eta)) (vtilde_i + eta tau_i), subject to the
/// margin-shrunk interference budgets.
pub fn solve_v_step(
    sub: &VSubproblem,
    state: &PddState,
    options: &PddOptions,
) -> Result<StarVectors, PddError> {
    let n = sub.n;
    let weight = 0.5 / state.eta;
    let ridge = |c: &CMat| {
        let mut p = c.clone();
        for i in 0..n {
            p[(i, i)] += weight;
        }
        p
    };
    let pull = |c: &CVec, vtilde: &CVec, tau: &CVec| -> CVec {
        Array1::from_shape_fn(n, |i| c[i] + weight * (vtilde[i] + state.eta * tau[i]))
    };

    let mut constraints = Vec::with_capacity(sub.b_k.len());
    for k in 0..sub.b_k.len() {
        let budget = sub.shrunk_budget(k, &state.v.v_t, &state.v.v_r, options.it_margin);
        let block = match sub.pu_sides[k] {
            Side::Transmission => 0,
            Side::Reflection => 1,
        };
        let mut p = vec![None, None];
        p[block] = Some(sub.b_k[k].clone());
        let mut q = vec![CVec::zeros(n), CVec::zeros(n)];
        q[block] = sub.b_lin_k[k].clone();
        constraints.push(QuadConstraint { p, q, r: budget });
    }

    let problem = QcqpProblem {
        block_dims: vec![n, n],
        objective: QuadForm {
            p: vec![Some(ridge(&sub.c_quad_t)), Some(ridge(&sub.c_quad_r))],
            q: vec![
                pull(&sub.c_lin_t, &state.vtilde.v_t, &state.tau_t),
                pull(&sub.c_lin_r, &state.vtilde.v_r, &state.tau_r),
            ],
        },
        constraints,
    };
    let start = vec![
        state.v.v_t.mapv(|z| z * (1.0 - START_SHRINK)),
        state.v.v_r.mapv(|z| z * (1.0 - START_SHRINK)),
    ];
    let qcqp_options = QcqpOptions {
        initial_point: Some(start),
        ..options.qcqp.clone()
    };
    let solution = solve_qcqp(&problem, &qcqp_options)?;
    let mut blocks = solution.x.into_iter();
    Ok(StarVectors {
        v_t: blocks.next().expect("two blocks"),
        v_r: blocks.next().expect("two blocks"),
    })
}

/// Augmented Lagrangian f(v) + sum_i (1 / (2 eta)) ||vtilde_i - v_i +
/// eta tau_i||^2 at the current state.
fn augmented_lagrangian(sub: &VSubproblem, state: &PddState) -> f64 {
    let coupling = |vtilde: &CVec, v: &CVec, tau: &CVec| -> f64 {
        vtilde
            .iter()
            .zip(v)
            .zip(tau)
            .map(|((&a, &b), &t)| (a - b + state.eta * t).norm_sqr())
            .sum::<f64>()
    };
    sub.objective(&state.v.v_t, &state.v.v_r)
        + (0.5 / state.eta)
            * (coupling(&state.vtilde.v_t, &state.v.v_t, &state.tau_t)
                + coupling(&state.vtilde.v_r, &state.v.v_r, &state.tau_r))
}

/// Consensus gap max over both sides and all elements of |vtilde - v|.
fn consensus_gap(state: &PddState) -> f64 {
    let side = |a: &CVec, b: &CVec| -> f64 {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x - y).norm())
            .fold(0.0, f64::max)
    };
    side(&state.vtilde.v_t, &state.v.v_t).max(side(&state.vtilde.v_r, &state.v.v_r))
}

fn assemble(sqrt_rho: &[f64], theta: &[f64]) -> CVec {
    sqrt_rho
        .iter()
        .zip(theta)
        .map(|(&s, &t)| C64::from_polar(s, t))
        .collect()
}

/// Renormalize each amplitude pair onto the energy-conservation sphere;
/// pairs that collapsed to zero fall back to the even split.
fn project_coefficients(
    sqrt_rho_t: &[f64],
    sqrt_rho_r: &[f64],
    theta_t: &[f64],
    theta_r: &[f64],
) -> StarCoefficients {
    let n = sqrt_rho_t.len();
    let mut rho_t = Vec::with_capacity(n);
    let mut rho_r = Vec::with_capacity(n);
    for i in 0..n {
        let norm = sqrt_rho_t[i].hypot(sqrt_rho_r[i]);
        if norm > 0.0 {
            rho_t.push((sqrt_rho_t[i] / norm).powi(2));
            rho_r.push((sqrt_rho_r[i] / norm).powi(2));
        } else {
            rho_t.push(0.5);
            rho_r.push(0.5);
        }
    }
    StarCoefficients::new(rho_t, rho_r, theta_t.to_vec(), theta_r.to_vec(), PhaseModel::Coupled)
        .expect("equal-length coefficient arrays")
}

/// Run the penalty dual decomposition loop from a budget-feasible start.
/// Returns the coupled-set surface (terminal projection onto the exact
/// energy split) together with per-iteration diagnostics. The returned
/// surface satisfies the interference budgets within `it_gate` and the
/// consensus gap is at most `eps_pdd`.
pub fn run_pdd(
    sub: &VSubproblem,
    v_init: &StarVectors,
    options: &PddOptions,
) -> Result<(StarCoefficients, PddReport), PddError> {
    let n = sub.n;
    if v_init.v_t.len() != n || v_init.v_r.len() != n {
        return Err(PddError::BadInput(format!(
            "initial vectors have lengths ({}, {}), expected {n}",
            v_init.v_t.len(),
            v_init.v_r.len()
        )));
    }
    if !(options.eta_initial > 0.0 && options.mu > 0.0 && options.mu < 1.0) {
        return Err(PddError::BadInput(
            "eta_initial must be positive and mu must lie in (0, 1)".into(),
        ));
    }
    for k in 0..sub.b_k.len() {
        let slack = sub.it_slack(k, &v_init.v_t, &v_init.v_r);
        if slack < -1e-3 * sub.physical_budget(k) {
            return Err(PddError::BadInput(format!(
                "initial vectors violate interference budget {k} (slack {slack:.3e})"
            )));
        }
    }

    // The printed default eta is calibrated for unit-scale data; divide by
    // the data magnitude so the coupling weight starts commensurate with
    // the quadratic term at any absolute channel scale.
    let max_abs =
        |m: &CMat| -> f64 { m.iter().map(|z| z.norm()).fold(0.0, f64::max) };
    let max_abs_v =
        |v: &CVec| -> f64 { v.iter().map(|z| z.norm()).fold(0.0, f64::max) };
    let scale = max_abs(&sub.c_quad_t)
        .max(max_abs(&sub.c_quad_r))
        .max(max_abs_v(&sub.c_lin_t))
        .max(max_abs_v(&sub.c_lin_r));
    let eta_initial = if scale > 0.0 {
        options.eta_initial / scale
    } else {
        options.eta_initial
    };

    // Project the start onto the coupled set: unit-normalize the amplitude
    // pairs, then one phase/amplitude pass maximizing alignment with the
    // start itself.
    let mut sqrt_rho_t = vec![0.0; n];
    let mut sqrt_rho_r = vec![0.0; n];
    let mut theta_t = vec![0.0; n];
    let mut theta_r = vec![0.0; n];
    for i in 0..n {
        let (at, ar) = (v_init.v_t[i].norm(), v_init.v_r[i].norm());
        let norm = at.hypot(ar);
        let (st, sr) = if norm > 0.0 {
            (at / norm, ar / norm)
        } else {
            (0.5f64.sqrt(), 0.5f64.sqrt())
        };
        let (tt, tr) = optimal_phases(v_init.v_t[i], v_init.v_r[i], st, sr);
        let (st, sr) = if options.freeze_amplitudes {
            (st, sr)
        } else {
            let psi_t = (v_init.v_t[i].conj() * C64::from_polar(1.0, tt)).re;
            let psi_r = (v_init.v_r[i].conj() * C64::from_polar(1.0, tr)).re;
            optimal_amplitudes(psi_t, psi_r)
        };
        sqrt_rho_t[i] = st;
        sqrt_rho_r[i] = sr;
        theta_t[i] = tt;
        theta_r[i] = tr;
    }

    let mut state = PddState {
        v: v_init.clone(),
        vtilde: StarVectors {
            v_t: assemble(&sqrt_rho_t, &theta_t),
            v_r: assemble(&sqrt_rho_r, &theta_r),
        },
        tau_t: CVec::zeros(n),
        tau_r: CVec::zeros(n),
        eta: eta_initial,
        p: options.p_initial,
        mu: options.mu,
    };

    let mut iterations: Vec<PddIteration> = Vec::new();
    let mut best_violation = f64::INFINITY;
    let mut stall_count = 0usize;

    for _ in 0..options.max_outer {
        if state.eta < 1e-250 {
            return Err(PddError::Solver(SolverError::NumericalBreakdown(
                "penalty factor underflow".into(),
            )));
        }

        // Inner block sweeps on the augmented Lagrangian.
        let mut trace = vec![augmented_lagrangian(sub, &state)];
        let mut sweeps = 0usize;
        loop {
            state.v = solve_v_step(sub, &state, options)?;
            let upsilon_t: CVec =
                Array1::from_shape_fn(n, |i| state.v.v_t[i] - state.eta * state.tau_t[i]);
            let upsilon_r: CVec =
                Array1::from_shape_fn(n, |i| state.v.v_r[i] - state.eta * state.tau_r[i]);
            for i in 0..n {
                let (tt, tr) =
                    optimal_phases(upsilon_t[i], upsilon_r[i], sqrt_rho_t[i], sqrt_rho_r[i]);
                theta_t[i] = tt;
                theta_r[i] = tr;
                if !options.freeze_amplitudes {
                    let psi_t = (upsilon_t[i].conj() * C64::from_polar(1.0, tt)).re;
                    let psi_r = (upsilon_r[i].conj() * C64::from_polar(1.0, tr)).re;
                    let (st, sr) = optimal_amplitudes(psi_t, psi_r);
                    sqrt_rho_t[i] = st;
                    sqrt_rho_r[i] = sr;
                }
            }
            state.vtilde = StarVectors {
                v_t: assemble(&sqrt_rho_t, &theta_t),
                v_r: assemble(&sqrt_rho_r, &theta_r),
            };
            let value = augmented_lagrangian(sub, &state);
            let previous = *trace.last().expect("seeded trace");
            trace.push(value);
            sweeps += 1;
            let local_scale = trace[0].abs().max(previous.abs()).max(f64::MIN_POSITIVE);
            if previous - value <= options.eps_inner * local_scale || sweeps >= options.max_inner {
                break;
            }
        }

        let violation = consensus_gap(&state);
        let dual_step = violation <= state.p;
        iterations.push(PddIteration {
            eta: state.eta,
            violation,
            dual_step,
            inner_iterations: sweeps,
            inner_al_trace: trace,
            objective: sub.objective(&state.v.v_t, &state.v.v_r),
        });

        if violation <= options.eps_pdd {
            let coefficients =
                project_coefficients(&sqrt_rho_t, &sqrt_rho_r, &theta_t, &theta_r);
            let vectors = coefficients.to_vectors();
            let budgets_met = (0..sub.b_k.len()).all(|k| {
                sub.it_slack(k, &vectors.v_t, &vectors.v_r)
                    >= -options.it_gate * sub.physical_budget(k)
            });
            if budgets_met {
                let objective = sub.objective(&vectors.v_t, &vectors.v_r);
                return Ok((
                    coefficients,
                    PddReport {
                        v: state.v,
                        vtilde: state.vtilde,
                        objective,
                        violation,
                        iterations,
                    },
                ));
            }
        }

        if violation < best_violation * (1.0 - STALL_IMPROVEMENT) {
            best_violation = violation;
            stall_count = 0;
        } else {
            stall_count += 1;
            if stall_count >= options.stall_window {
                return Err(PddError::Stalled {
                    window: options.stall_window,
                    violation,
                });
            }
        }

        if dual_step {
            for i in 0..n {
                state.tau_t[i] += (state.vtilde.v_t[i] - state.v.v_t[i]) / state.eta;
                state.tau_r[i] += (state.vtilde.v_r[i] - state.v.v_r[i]) / state.eta;
            }
        } else {
            state.eta *= state.mu;
        }
        state.p = 0.9 * violation;
    }

    Err(PddError::NoConvergence(options.max_outer))
}
