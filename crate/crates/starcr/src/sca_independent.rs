//! Surface optimization for the independent phase-shift model.
//!
//! The surface step minimizes f_a(v) = sum_i (v_i^H C_i v_i - 2 Re(c_i^H v_i))
//! over per-element energy-conserving coefficients subject to interference
//! constraints. The per-element equality |v_t[n]|^2 + |v_r[n]|^2 = 1 is
//! nonconvex; it is relaxed to <= 1 and restored by a penalty on the slack
//! N - ||v_t||^2 - ||v_r||^2. The concave penalty is majorized by its
//! tangent at the current iterate ([`linearized_energy`]), which turns each
//! inner step into a convex QCQP whose linear term is shifted by
//! penalty * expansion point. Minimizing the majorizer cannot increase the
//! penalized objective, and growing the penalty drives the slack to zero;
//! the terminal iterate is then scaled elementwise onto the sphere.
//!
//! The same machinery serves the frozen-amplitude baselines through
//! [`AmplitudeProfile::PerSide`], which pins each side's element amplitude
//! and eliminates zero-amplitude coordinates from the subproblem.

use ndarray::Array1;

use crate::conic::{
    solve_qcqp, QcqpOptions, QcqpProblem, QuadConstraint, QuadForm, SdpConstraint, SdpProblem,
    SolverError,
};
use crate::linalg::{norm_sq, realify, CMat, CVec, C64};
use crate::scene::Side;
use crate::star::StarVectors;
use crate::transforms::VSubproblem;
use thiserror::Error;

/// Relative shrink applied to the expansion point to give the interior-point
/// solver a strictly feasible start.
const START_SHRINK: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ScaError {
    #[error("subproblem solver failed: {0}")]
    Solver(#[from] SolverError),
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("penalty stalled at {penalty:.3e} with element slack {slack:.3e}")]
    PenaltyStall { penalty: f64, slack: f64 },
    #[error("no convergence within {0} inner iterations")]
    NoConvergence(usize),
}

/// Which amplitude degrees of freedom the surface step may move.
#[derive(Debug, Clone)]
pub enum AmplitudeProfile {
    /// Full independent model: per-element energies split freely between
    /// transmission and reflection, summing to one.
    PairSum,
    /// Frozen per-side energies: |v_t[n]|^2 = rho_t[n] and
    /// |v_r[n]|^2 = rho_r[n]; only phases move. Elements with zero energy
    /// are eliminated from the subproblem.
    PerSide { rho_t: Vec<f64>, rho_r: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct ScaOptions {
    /// Total budget of convex subproblem solves.
    pub max_iterations: usize,
    /// Fractional surrogate decrease below which the current penalty phase
    /// is considered stalled.
    pub surrogate_tol: f64,
    /// Largest tolerated per-element energy slack at termination.
    pub slack_tol: f64,
    /// Starting penalty weight; `None` selects a data-scale heuristic.
    pub penalty_initial: Option<f64>,
    /// Multiplicative penalty growth on a stalled phase with open slack.
    pub penalty_growth: f64,
    /// Growth cap relative to the initial penalty.
    pub penalty_max_factor: f64,
    /// Relative shrink of interference budgets inside the subproblems, so
    /// the terminal sphere normalization cannot cross the true budgets.
    pub it_margin: f64,
    pub qcqp: QcqpOptions,
}

impl Default for ScaOptions {
    fn default() -> Self {
        // The interior-point solutions sit inside the energy caps by a
        // distance proportional to the solver tolerance, so `slack_tol`
        // must stay well above `qcqp.tol`, and `it_margin` must absorb the
        // relative interference shift of the terminal normalization
        // (of order `slack_tol`).
        Self {
            max_iterations: 200,
            surrogate_tol: 1e-8,
            slack_tol: 1e-7,
            penalty_initial: None,
            penalty_growth: 4.0,
            penalty_max_factor: 1e12,
            it_margin: 2e-6,
            qcqp: QcqpOptions {
                tol: 1e-9,
                ..Default::default()
            },
        }
    }
}

/// One inner solve: the penalized surrogate before and after cannot
/// increase while `penalty` is unchanged.
#[derive(Debug, Clone, Copy)]
pub struct ScaIteration {
    pub penalty: f64,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    /// f_a at the accepted iterate.
    pub objective: f64,
    /// Largest per-element energy slack magnitude.
    pub max_slack: f64,
}

#[derive(Debug, Clone)]
pub struct ScaReport {
    pub vectors: StarVectors,
    /// f_a at the returned point.
    pub objective: f64,
    pub iterations: Vec<ScaIteration>,
}

/// Tangent minorant of ||v||^2 at `expansion`:
/// 2 Re(e^H v) - ||e||^2 <= ||v||^2, with equality at v = e.
pub fn linearized_energy(expansion: &CVec, v: &CVec) -> f64 {
    2.0 * crate::linalg::cdot(expansion, v).re - norm_sq(expansion)
}

/// Reduced variable layout: one QCQP block per side that still has free
/// coordinates, each carrying the original element indices it covers.
struct Layout {
    blocks: Vec<(Side, Vec<usize>)>,
}

impl Layout {
    fn new(profile: &AmplitudeProfile, n: usize) -> Layout {
        let all: Vec<usize> = (0..n).collect();
        let blocks = match profile {
            AmplitudeProfile::PairSum => vec![
                (Side::Transmission, all.clone()),
                (Side::Reflection, all),
            ],
            AmplitudeProfile::PerSide { rho_t, rho_r } => {
                let mut blocks = Vec::new();
                for (side, rho) in [(Side::Transmission, rho_t), (Side::Reflection, rho_r)] {
                    let idx: Vec<usize> =
                        (0..n).filter(|&i| rho[i] > 0.0).collect();
                    if !idx.is_empty() {
                        blocks.push((side, idx));
                    }
                }
                blocks
            }
        };
        Layout { blocks }
    }

    fn block_of(&self, side: Side) -> Option<usize> {
        self.blocks.iter().position(|(s, _)| *s == side)
    }
}

fn submatrix(m: &CMat, idx: &[usize]) -> CMat {
    CMat::from_shape_fn((idx.len(), idx.len()), |(a, b)| m[(idx[a], idx[b])])
}

fn subvector(v: &CVec, idx: &[usize]) -> CVec {
    Array1::from_iter(idx.iter().map(|&i| v[i]))
}

fn side_data(sub: &VSubproblem, side: Side) -> (&CMat, &CVec) {
    match side {
        Side::Transmission => (&sub.c_quad_t, &sub.c_lin_t),
        Side::Reflection => (&sub.c_quad_r, &sub.c_lin_r),
    }
}

fn side_vector(vectors: &StarVectors, side: Side) -> &CVec {
    match side {
        Side::Transmission => &vectors.v_t,
        Side::Reflection => &vectors.v_r,
    }
}

/// Assemble the convex inner subproblem at an expansion point: the f_a
/// quadratic with the penalty tangent folded into the linear term, element
/// energy caps, and margin-shrunk interference constraints.
pub fn penalized_qcqp(
    sub: &VSubproblem,
    expansion: &StarVectors,
    penalty: f64,
    profile: &AmplitudeProfile,
    it_margin: f64,
) -> Result<QcqpProblem, ScaError> {
    let n = sub.n;
    let layout = Layout::new(profile, n);
    if layout.blocks.is_empty() {
        return Err(ScaError::BadInput(
            "no free surface coordinates under the given amplitude profile".into(),
        ));
    }
    let nb = layout.blocks.len();
    let block_dims: Vec<usize> = layout.blocks.iter().map(|(_, idx)| idx.len()).collect();

    let mut obj_p = Vec::with_capacity(nb);
    let mut obj_q = Vec::with_capacity(nb);
    for (side, idx) in &layout.blocks {
        let (c_quad, c_lin) = side_data(sub, *side);
        let e = subvector(side_vector(expansion, *side), idx);
        let mut q = subvector(c_lin, idx);
        q = q + e.mapv(|z| z * penalty);
        obj_p.push(Some(submatrix(c_quad, idx)));
        obj_q.push(q);
    }

    let mut constraints = Vec::new();
    match profile {
        AmplitudeProfile::PairSum => {
            for elem in 0..n {
                let mut p = Vec::with_capacity(nb);
                for (_, idx) in &layout.blocks {
                    let mut sel = CMat::zeros((idx.len(), idx.len()));
                    let pos = idx.iter().position(|&i| i == elem).unwrap();
                    sel[(pos, pos)] = C64::new(1.0, 0.0);
                    p.push(Some(sel));
                }
                constraints.push(QuadConstraint {
                    p,
                    q: block_dims.iter().map(|&d| CVec::zeros(d)).collect(),
                    r: 1.0,
                });
            }
        }
        AmplitudeProfile::PerSide { rho_t, rho_r } => {
            for (b, (side, idx)) in layout.blocks.iter().enumerate() {
                let rho = match side {
                    Side::Transmission => rho_t,
                    Side::Reflection => rho_r,
                };
                for (pos, &elem) in idx.iter().enumerate() {
                    let mut p: Vec<Option<CMat>> = vec![None; nb];
                    let mut sel = CMat::zeros((idx.len(), idx.len()));
                    sel[(pos, pos)] = C64::new(1.0, 0.0);
                    p[b] = Some(sel);
                    constraints.push(QuadConstraint {
                        p,
                        q: block_dims.iter().map(|&d| CVec::zeros(d)).collect(),
                        r: rho[elem],
                    });
                }
            }
        }
    }
    for k in 0..sub.pu_sides.len() {
        let budget = sub.shrunk_budget(k, &expansion.v_t, &expansion.v_r, it_margin);
        match layout.block_of(sub.pu_sides[k]) {
            Some(b) => {
                let idx = &layout.blocks[b].1;
                let mut p: Vec<Option<CMat>> = vec![None; nb];
                p[b] = Some(submatrix(&sub.b_k[k], idx));
                let mut q: Vec<CVec> = block_dims.iter().map(|&d| CVec::zeros(d)).collect();
                q[b] = subvector(&sub.b_lin_k[k], idx);
                constraints.push(QuadConstraint { p, q, r: budget });
            }
            None => {
                if budget < 0.0 {
                    return Err(ScaError::BadInput(format!(
                        "PU {k} budget {budget:.3e} cannot be met with its side frozen at zero"
                    )));
                }
            }
        }
    }

    Ok(QcqpProblem {
        block_dims,
        objective: QuadForm { p: obj_p, q: obj_q },
        constraints,
    })
}

/// Zero out coordinates the profile freezes at zero amplitude.
fn apply_mask(profile: &AmplitudeProfile, vectors: &StarVectors) -> StarVectors {
    match profile {
        AmplitudeProfile::PairSum => vectors.clone(),
        AmplitudeProfile::PerSide { rho_t, rho_r } => {
            let zero = C64::new(0.0, 0.0);
            let v_t = Array1::from_shape_fn(vectors.v_t.len(), |i| {
                if rho_t[i] > 0.0 { vectors.v_t[i] } else { zero }
            });
            let v_r = Array1::from_shape_fn(vectors.v_r.len(), |i| {
                if rho_r[i] > 0.0 { vectors.v_r[i] } else { zero }
            });
            StarVectors { v_t, v_r }
        }
    }
}

/// Signed total energy slack the penalty acts on.
fn total_slack(profile: &AmplitudeProfile, v: &StarVectors) -> f64 {
    match profile {
        AmplitudeProfile::PairSum => v.v_t.len() as f64 - norm_sq(&v.v_t) - norm_sq(&v.v_r),
        AmplitudeProfile::PerSide { rho_t, rho_r } => {
            let mut total = 0.0;
            for i in 0..v.v_t.len() {
                if rho_t[i] > 0.0 {
                    total += rho_t[i] - v.v_t[i].norm_sqr();
                }
                if rho_r[i] > 0.0 {
                    total += rho_r[i] - v.v_r[i].norm_sqr();
                }
            }
            total
        }
    }
}

/// Largest relative per-element energy slack magnitude.
fn max_slack(profile: &AmplitudeProfile, v: &StarVectors) -> f64 {
    match profile {
        AmplitudeProfile::PairSum => (0..v.v_t.len())
            .map(|i| (1.0 - v.v_t[i].norm_sqr() - v.v_r[i].norm_sqr()).abs())
            .fold(0.0, f64::max),
        AmplitudeProfile::PerSide { rho_t, rho_r } => {
            let mut worst = 0.0f64;
            for i in 0..v.v_t.len() {
                if rho_t[i] > 0.0 {
                    worst = worst.max((rho_t[i] - v.v_t[i].norm_sqr()).abs() / rho_t[i]);
                }
                if rho_r[i] > 0.0 {
                    worst = worst.max((rho_r[i] - v.v_r[i].norm_sqr()).abs() / rho_r[i]);
                }
            }
            worst
        }
    }
}

/// Scale each element onto its exact energy target.
fn normalize(profile: &AmplitudeProfile, v: &mut StarVectors) {
    match profile {
        AmplitudeProfile::PairSum => {
            for i in 0..v.v_t.len() {
                let t = v.v_t[i].norm_sqr() + v.v_r[i].norm_sqr();
                if t > 0.0 {
                    let f = 1.0 / t.sqrt();
                    v.v_t[i] *= f;
                    v.v_r[i] *= f;
                } else {
                    v.v_t[i] = C64::new(1.0, 0.0);
                }
            }
        }
        AmplitudeProfile::PerSide { rho_t, rho_r } => {
            for (vec, rho) in [(&mut v.v_t, rho_t), (&mut v.v_r, rho_r)] {
                for i in 0..vec.len() {
                    if rho[i] > 0.0 {
                        let a = vec[i].norm();
                        vec[i] = if a > 0.0 {
                            vec[i] * (rho[i].sqrt() / a)
                        } else {
                            C64::new(rho[i].sqrt(), 0.0)
                        };
                    } else {
                        vec[i] = C64::new(0.0, 0.0);
                    }
                }
            }
        }
    }
}

fn default_penalty(sub: &VSubproblem) -> f64 {
    let scale = crate::linalg::fro_norm(&sub.c_quad_t)
        + crate::linalg::fro_norm(&sub.c_quad_r)
        + norm_sq(&sub.c_lin_t).sqrt()
        + norm_sq(&sub.c_lin_r).sqrt();
    if scale > 0.0 {
        0.1 * scale
    } else {
        1.0
    }
}

fn validate_profile(profile: &AmplitudeProfile, n: usize) -> Result<(), ScaError> {
    if let AmplitudeProfile::PerSide { rho_t, rho_r } = profile {
        if rho_t.len() != n || rho_r.len() != n {
            return Err(ScaError::BadInput(format!(
                "amplitude profile covers {}/{} elements, surface has {n}",
                rho_t.len(),
                rho_r.len()
            )));
        }
        for i in 0..n {
            for rho in [rho_t[i], rho_r[i]] {
                if !(0.0..=1.0).contains(&rho) {
                    return Err(ScaError::BadInput(format!(
                        "element {i} energy {rho} outside [0, 1]"
                    )));
                }
            }
            if rho_t[i] + rho_r[i] > 1.0 + crate::star::RHO_SUM_TOL {
                return Err(ScaError::BadInput(format!(
                    "element {i} energies sum to {} > 1",
                    rho_t[i] + rho_r[i]
                )));
            }
        }
    }
    Ok(())
}

/// Run the penalized inner loop from `start` (element energies already
/// feasible for the profile) and return the terminal on-target point.
pub fn solve_phi_independent(
    sub: &VSubproblem,
    start: &StarVectors,
    profile: &AmplitudeProfile,
    options: &ScaOptions,
) -> Result<ScaReport, ScaError> {
    if start.v_t.len() != sub.n || start.v_r.len() != sub.n {
        return Err(ScaError::BadInput(format!(
            "start has {}/{} coordinates, surface has {}",
            start.v_t.len(),
            start.v_r.len(),
            sub.n
        )));
    }
    validate_profile(profile, sub.n)?;
    let layout = Layout::new(profile, sub.n);
    if layout.blocks.is_empty() {
        return Err(ScaError::BadInput(
            "no free surface coordinates under the given amplitude profile".into(),
        ));
    }

    let mut v = apply_mask(profile, start);
    let mut f_cur = sub.objective(&v.v_t, &v.v_r);
    let penalty_initial = options.penalty_initial.unwrap_or_else(|| default_penalty(sub));
    let penalty_cap = penalty_initial * options.penalty_max_factor;
    let mut penalty = penalty_initial;
    let mut iterations = Vec::new();

    for _ in 0..options.max_iterations {
        let surrogate_before = f_cur + penalty * total_slack(profile, &v);
        let problem = penalized_qcqp(sub, &v, penalty, profile, options.it_margin)?;
        let initial: Vec<CVec> = layout
            .blocks
            .iter()
            .map(|(side, idx)| {
                subvector(side_vector(&v, *side), idx).mapv(|z| z * (1.0 - START_SHRINK))
            })
            .collect();
        let qcqp_options = QcqpOptions {
            initial_point: Some(initial),
            ..options.qcqp.clone()
        };
        let solution = solve_qcqp(&problem, &qcqp_options)?;

        let mut candidate = StarVectors {
            v_t: CVec::zeros(sub.n),
            v_r: CVec::zeros(sub.n),
        };
        for (b, (side, idx)) in layout.blocks.iter().enumerate() {
            let target = match side {
                Side::Transmission => &mut candidate.v_t,
                Side::Reflection => &mut candidate.v_r,
            };
            for (pos, &elem) in idx.iter().enumerate() {
                target[elem] = solution.x[b][pos];
            }
        }
        let f_new = sub.objective(&candidate.v_t, &candidate.v_r);
        let surrogate_after = f_new + penalty * total_slack(profile, &candidate);
        let slack = max_slack(profile, &candidate);
        iterations.push(ScaIteration {
            penalty,
            surrogate_before,
            surrogate_after,
            objective: f_new,
            max_slack: slack,
        });
        v = candidate;
        f_cur = f_new;

        let stalled = surrogate_before - surrogate_after
            <= options.surrogate_tol * (1.0 + surrogate_before.abs());
        if stalled {
            if slack <= options.slack_tol {
                normalize(profile, &mut v);
                let objective = sub.objective(&v.v_t, &v.v_r);
                return Ok(ScaReport {
                    vectors: v,
                    objective,
                    iterations,
                });
            }
            penalty *= options.penalty_growth;
            if penalty > penalty_cap {
                return Err(ScaError::PenaltyStall { penalty, slack });
            }
        }
    }
    Err(ScaError::NoConvergence(options.max_iterations))
}

/// Lift the penalized inner subproblem (full independent model) to a
/// standard-form SDP over the realified blocks
/// Y_i = [[V_i, v_i], [v_i^H, 1]] with slack scalars for the inequalities.
/// Convexity makes the lift exact, so its optimal value must match the
/// QCQP route; the pair forms an independent audit of the surface step.
pub fn penalized_sdp_lift(
    sub: &VSubproblem,
    expansion: &StarVectors,
    penalty: f64,
    it_margin: f64,
) -> SdpProblem {
    let n = sub.n;
    let d = 2 * (n + 1);
    let k_count = sub.pu_sides.len();
    // Blocks: 0 = transmission lift, 1 = reflection lift, then one scalar
    // slack per element ball and per PU budget.
    let mut block_dims = vec![d, d];
    block_dims.extend(std::iter::repeat(1).take(n + k_count));

    let lift_objective = |side: Side| -> nalgebra::DMatrix<f64> {
        let (c_quad, c_lin) = side_data(sub, side);
        let e = side_vector(expansion, side);
        let mut m = CMat::zeros((n + 1, n + 1));
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = c_quad[(i, j)];
            }
            let q = c_lin[i] + penalty * e[i];
            m[(i, n)] = -q;
            m[(n, i)] = -q.conj();
        }
        realify(&m) * 0.5
    };
    let mut c = vec![
        lift_objective(Side::Transmission),
        lift_objective(Side::Reflection),
    ];
    c.extend((0..n + k_count).map(|_| nalgebra::DMatrix::<f64>::zeros(1, 1)));

    let mut constraints = Vec::new();
    // Corner pins: both realified diagonal copies of the unit corner.
    for b in 0..2 {
        for pos in [n, 2 * n + 1] {
            let mut a = nalgebra::DMatrix::<f64>::zeros(d, d);
            a[(pos, pos)] = 1.0;
            constraints.push(SdpConstraint {
                terms: vec![(b, a)],
                rhs: 1.0,
            });
        }
    }
    // Element energy: Re V_t[nn] + Re V_r[nn] + slack = 1.
    for elem in 0..n {
        let mut a = nalgebra::DMatrix::<f64>::zeros(d, d);
        a[(elem, elem)] = 0.5;
        a[(n + 1 + elem, n + 1 + elem)] = 0.5;
        constraints.push(SdpConstraint {
            terms: vec![
                (0, a.clone()),
                (1, a),
                (2 + elem, nalgebra::DMatrix::identity(1, 1)),
            ],
            rhs: 1.0,
        });
    }
    // Interference budgets with the same margin as the QCQP route.
    for k in 0..k_count {
        let mut m = CMat::zeros((n + 1, n + 1));
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = sub.b_k[k][(i, j)];
            }
            m[(i, n)] = sub.b_lin_k[k][i];
            m[(n, i)] = sub.b_lin_k[k][i].conj();
        }
        let block = match sub.pu_sides[k] {
            Side::Transmission => 0,
            Side::Reflection => 1,
        };
        constraints.push(SdpConstraint {
            terms: vec![
                (block, realify(&m) * 0.5),
                (2 + n + k, nalgebra::DMatrix::identity(1, 1)),
            ],
            rhs: sub.shrunk_budget(k, &expansion.v_t, &expansion.v_r, it_margin),
        });
    }

    SdpProblem {
        block_dims,
        c,
        constraints,
    }
}
