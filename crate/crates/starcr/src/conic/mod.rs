//! Dense conic solvers for the convex subproblems.
//!
//! Two cores live here. [`qcqp`] is a primal-dual path-following method
//! acting directly on convex quadratically constrained quadratic programs
//! over complex block variables; it backs the beamformer step, the
//! penalized surface step of the independent model, and the augmented
//! Lagrangian step of the coupled model. [`sdp`] is an NT-scaled
//! path-following method on real standard-form semidefinite programs; it
//! provides the independent audit route for the lifted surface subproblem.
//!
//! Complex data is realified on intake: a Hermitian form x^H P x equals
//! x_r^T realify(P) x_r in stacked [Re; Im] coordinates, so both cores run
//! on real symmetric data internally.

pub mod qcqp;
pub mod sdp;

pub use qcqp::{solve_qcqp, KktResiduals, QcqpOptions, QcqpSolution};
pub use sdp::{solve_sdp, SdpConstraint, SdpOptions, SdpProblem, SdpResiduals, SdpSolution};

use crate::linalg::{CMat, CVec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    /// No point satisfies the constraints to the requested accuracy.
    #[error("problem appears infeasible: {0}")]
    Infeasible(String),
    /// The iteration budget elapsed before the residuals converged.
    #[error("no convergence within {0} iterations")]
    MaxIterations(usize),
    /// A linear solve or step computation lost all significance.
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    /// The problem data is structurally invalid.
    #[error("malformed problem: {0}")]
    BadProblem(String),
}

/// Block quadratic objective: sum_b (x_b^H P_b x_b - 2 Re(q_b^H x_b)).
/// `None` entries stand for zero quadratic blocks.
#[derive(Debug, Clone)]
pub struct QuadForm {
    pub p: Vec<Option<CMat>>,
    pub q: Vec<CVec>,
}

/// Block quadratic constraint: sum_b (x_b^H P_b x_b + 2 Re(q_b^H x_b)) <= r.
/// Note the linear-term sign differs from [`QuadForm`]; both match the
/// natural orientation of their use sites.
#[derive(Debug, Clone)]
pub struct QuadConstraint {
    pub p: Vec<Option<CMat>>,
    pub q: Vec<CVec>,
    pub r: f64,
}

/// Convex QCQP over complex block variables: minimize the objective subject
/// to every constraint. All P matrices must be Hermitian positive
/// semidefinite; the solver symmetrizes small defects and rejects gross ones.
#[derive(Debug, Clone)]
pub struct QcqpProblem {
    pub block_dims: Vec<usize>,
    pub objective: QuadForm,
    pub constraints: Vec<QuadConstraint>,
}

impl QcqpProblem {
    /// Objective value at a block point (original, unscaled units).
    pub fn objective_value(&self, x: &[CVec]) -> f64 {
        let mut val = 0.0;
        for b in 0..self.block_dims.len() {
            if let Some(p) = &self.objective.p[b] {
                val += crate::linalg::quad_form(p, &x[b]);
            }
            val -= 2.0 * crate::linalg::cdot(&self.objective.q[b], &x[b]).re;
        }
        val
    }

    /// Constraint function value g_i(x) = lhs - r (feasible iff <= 0).
    pub fn constraint_value(&self, i: usize, x: &[CVec]) -> f64 {
        let con = &self.constraints[i];
        let mut val = -con.r;
        for b in 0..self.block_dims.len() {
            if let Some(p) = &con.p[b] {
                val += crate::linalg::quad_form(p, &x[b]);
            }
            val += 2.0 * crate::linalg::cdot(&con.q[b], &x[b]).re;
        }
        val
    }

    pub(crate) fn validate(&self) -> Result<(), SolverError> {
        let nb = self.block_dims.len();
        if nb == 0 || self.block_dims.iter().any(|&d| d == 0) {
            return Err(SolverError::BadProblem(
                "block dimensions must be nonempty and positive".into(),
            ));
        }
        let check_form = |p: &[Option<CMat>], q: &[CVec], what: &str| -> Result<(), SolverError> {
            if p.len() != nb || q.len() != nb {
                return Err(SolverError::BadProblem(format!(
                    "{what}: expected {nb} blocks, got {} quadratic / {} linear",
                    p.len(),
                    q.len()
                )));
            }
            for b in 0..nb {
                let d = self.block_dims[b];
                if let Some(m) = &p[b] {
                    if m.nrows() != d || m.ncols() != d {
                        return Err(SolverError::BadProblem(format!(
                            "{what}: block {b} quadratic is {}x{}, expected {d}x{d}",
                            m.nrows(),
                            m.ncols()
                        )));
                    }
                    let scale = crate::linalg::fro_norm(m).max(1.0);
                    if crate::linalg::hermitian_defect(m) > 1e-8 * scale {
                        return Err(SolverError::BadProblem(format!(
                            "{what}: block {b} quadratic is not Hermitian"
                        )));
                    }
                }
                if q[b].len() != d {
                    return Err(SolverError::BadProblem(format!(
                        "{what}: block {b} linear term has length {}, expected {d}",
                        q[b].len()
                    )));
                }
            }
            Ok(())
        };
        check_form(&self.objective.p, &self.objective.q, "objective")?;
        for (i, con) in self.constraints.iter().enumerate() {
            check_form(&con.p, &con.q, &format!("constraint {i}"))?;
        }
        Ok(())
    }
}
