//! Primal-dual path-following solver for convex QCQPs.
//!
//! The problem is realified on intake and solved as
//! minimize x^T P0 x - 2 q0^T x subject to g_i(x) = x^T P_i x + 2 q_i^T x - r_i <= 0
//! with slacks s = -g(x) and multipliers lambda. Each iteration solves the
//! condensed Newton system of the perturbed KKT conditions
//! (gradient stationarity, s_i = -g_i(x), lambda_i s_i = mu) and damps the
//! step with a fraction-to-boundary rule on (s, lambda). The centering
//! parameter follows the fixed schedule mu = sigma * (s^T lambda / m).
//!
//! Constraints and objective are individually rescaled on intake so the
//! reported residuals are relative to O(1) data; multipliers are mapped back
//! to the caller's units.

use nalgebra::{DMatrix, DVector};

use super::{QcqpProblem, SolverError};
use crate::linalg::{realify_vec, unrealify_vec, CMat, CVec};

/// Fraction-to-boundary damping for slack and multiplier steps.
const BOUNDARY_FRACTION: f64 = 0.99;
/// Fixed centering parameter.
const SIGMA: f64 = 0.1;
/// Initial Tikhonov regularization of the condensed system, relative to its
/// diagonal scale; escalated tenfold on factorization failure.
const REG_FLOOR: f64 = 1e-12;
/// Largest tolerated relative regularization before giving up.
const REG_CEIL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct QcqpOptions {
    /// Relative tolerance on duality gap and residual norms.
    pub tol: f64,
    /// Iteration budget.
    pub max_iterations: usize,
    /// Optional start point (blocks must match the problem). A strictly
    /// feasible start keeps the primal residual at zero throughout.
    pub initial_point: Option<Vec<CVec>>,
}

impl Default for QcqpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iterations: 200,
            initial_point: None,
        }
    }
}

/// KKT residuals of the rescaled problem at the returned point.
#[derive(Debug, Clone, Copy)]
pub struct KktResiduals {
    /// Infinity norm of the Lagrangian gradient.
    pub stationarity: f64,
    /// Largest constraint violation max_i g_i(x)_+.
    pub primal_feasibility: f64,
    /// Largest negative multiplier magnitude (zero by construction).
    pub dual_feasibility: f64,
    /// Largest complementarity product |lambda_i g_i(x)|.
    pub complementarity: f64,
}

#[derive(Debug, Clone)]
pub struct QcqpSolution {
    /// Solution blocks in the caller's layout.
    pub x: Vec<CVec>,
    /// Objective value in original units.
    pub objective: f64,
    /// Constraint multipliers in original units.
    pub multipliers: Vec<f64>,
    pub kkt: KktResiduals,
    pub iterations: usize,
}

/// One realified constraint: x^T p x + 2 q^T x <= r.
struct RealCon {
    p: DMatrix<f64>,
    q: DVector<f64>,
    r: f64,
    /// Intake scale factor (original data divided by this).
    scale: f64,
    /// Index in the caller's constraint list.
    index: usize,
}

impl RealCon {
    fn value(&self, x: &DVector<f64>) -> f64 {
        (x.transpose() * &self.p * x)[(0, 0)] + 2.0 * self.q.dot(x) - self.r
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        2.0 * (&self.p * x + &self.q)
    }
}

/// Place a complex block form into the stacked-real representation
/// ([Re of all blocks; Im of all blocks]).
fn realify_blocks(
    dims: &[usize],
    offsets: &[usize],
    d_total: usize,
    p: &[Option<CMat>],
    q: &[CVec],
    q_sign: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = 2 * d_total;
    let mut pr = DMatrix::<f64>::zeros(n, n);
    let mut qr = DVector::<f64>::zeros(n);
    for b in 0..dims.len() {
        let off = offsets[b];
        if let Some(m) = &p[b] {
            for i in 0..dims[b] {
                for j in 0..dims[b] {
                    // Symmetrize on intake; the solver requires exact symmetry.
                    let z = 0.5 * (m[(i, j)] + m[(j, i)].conj());
                    pr[(off + i, off + j)] = z.re;
                    pr[(off + i, d_total + off + j)] = -z.im;
                    pr[(d_total + off + i, off + j)] = z.im;
                    pr[(d_total + off + i, d_total + off + j)] = z.re;
                }
            }
        }
        for i in 0..dims[b] {
            qr[off + i] = q_sign * q[b][i].re;
            qr[d_total + off + i] = q_sign * q[b][i].im;
        }
    }
    (pr, qr)
}

fn max_abs_mat(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

/// Solve M x = rhs with escalating diagonal regularization.
fn solve_regularized(
    m: &DMatrix<f64>,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>, SolverError> {
    let diag_scale = 1.0 + (0..m.nrows()).fold(0.0f64, |acc, i| acc.max(m[(i, i)].abs()));
    let mut reg = 0.0;
    loop {
        let mut work = m.clone();
        if reg > 0.0 {
            for i in 0..work.nrows() {
                work[(i, i)] += reg * diag_scale;
            }
        }
        if let Some(chol) = work.cholesky() {
            return Ok(chol.solve(rhs));
        }
        reg = if reg == 0.0 { REG_FLOOR } else { reg * 10.0 };
        if reg > REG_CEIL {
            return Err(SolverError::NumericalBreakdown(
                "condensed Newton system is not positive definite".into(),
            ));
        }
    }
}

pub fn solve_qcqp(problem: &QcqpProblem, options: &QcqpOptions) -> Result<QcqpSolution, SolverError> {
    problem.validate()?;
    let dims = &problem.block_dims;
    let mut offsets = Vec::with_capacity(dims.len());
    let mut d_total = 0;
    for &d in dims {
        offsets.push(d_total);
        d_total += d;
    }
    let n = 2 * d_total;

    let (p0_raw, q0_raw) = realify_blocks(
        dims,
        &offsets,
        d_total,
        &problem.objective.p,
        &problem.objective.q,
        1.0,
    );
    let obj_scale = max_abs_mat(&p0_raw).max(max_abs_vec(&q0_raw)).max(1e-300);
    let obj_scale = if obj_scale <= 1e-300 { 1.0 } else { obj_scale };
    let p0 = p0_raw / obj_scale;
    let q0 = q0_raw / obj_scale;

    let mut cons = Vec::with_capacity(problem.constraints.len());
    for (i, c) in problem.constraints.iter().enumerate() {
        let (pr, qr) = realify_blocks(dims, &offsets, d_total, &c.p, &c.q, 1.0);
        let scale = max_abs_mat(&pr).max(max_abs_vec(&qr)).max(c.r.abs());
        if scale == 0.0 {
            if c.r < 0.0 {
                return Err(SolverError::Infeasible(format!(
                    "constraint {i} reads 0 <= {}",
                    c.r
                )));
            }
            continue;
        }
        cons.push(RealCon {
            p: pr / scale,
            q: qr / scale,
            r: c.r / scale,
            scale,
            index: i,
        });
    }

    let mut x = match &options.initial_point {
        Some(blocks) => {
            if blocks.len() != dims.len() || blocks.iter().zip(dims).any(|(v, &d)| v.len() != d) {
                return Err(SolverError::BadProblem(
                    "initial point does not match block dimensions".into(),
                ));
            }
            let mut full = CVec::zeros(d_total);
            for (b, v) in blocks.iter().enumerate() {
                for i in 0..v.len() {
                    full[offsets[b] + i] = v[i];
                }
            }
            realify_vec(&full)
        }
        None => DVector::zeros(n),
    };

    let finish = |x: &DVector<f64>,
                  lam: &[f64],
                  cons: &[RealCon],
                  p0: &DMatrix<f64>,
                  q0: &DVector<f64>,
                  iterations: usize|
     -> QcqpSolution {
        let mut grad = 2.0 * (p0 * x - q0);
        let mut primal: f64 = 0.0;
        let mut comp: f64 = 0.0;
        for (con, &l) in cons.iter().zip(lam) {
            let g = con.value(x);
            grad += l * con.gradient(x);
            primal = primal.max(g.max(0.0));
            comp = comp.max((l * g).abs());
        }
        let kkt = KktResiduals {
            stationarity: max_abs_vec(&grad),
            primal_feasibility: primal,
            dual_feasibility: lam.iter().fold(0.0f64, |a, &l| a.max((-l).max(0.0))),
            complementarity: comp,
        };
        let full = unrealify_vec(x);
        let blocks: Vec<CVec> = (0..dims.len())
            .map(|b| full.slice(ndarray::s![offsets[b]..offsets[b] + dims[b]]).to_owned())
            .collect();
        let mut multipliers = vec![0.0; problem.constraints.len()];
        for (con, &l) in cons.iter().zip(lam) {
            multipliers[con.index] = l * obj_scale / con.scale;
        }
        QcqpSolution {
            objective: problem.objective_value(&blocks),
            x: blocks,
            multipliers,
            kkt,
            iterations,
        }
    };

    if cons.is_empty() {
        // Unconstrained minimizer: P0 x = q0.
        let sol = solve_regularized(&(2.0 * &p0), &(2.0 * &q0))?;
        x = sol;
        return Ok(finish(&x, &[], &cons, &p0, &q0, 0));
    }

    let m = cons.len();
    let mut s: Vec<f64> = cons
        .iter()
        .map(|c| {
            let g = c.value(&x);
            if -g > 1e-12 {
                -g
            } else {
                1.0
            }
        })
        .collect();
    let mu0 = s.iter().sum::<f64>() / m as f64;
    let mu0 = mu0.max(1.0);
    let mut lam: Vec<f64> = s.iter().map(|&si| (mu0 / si).clamp(1e-4, 1e4)).collect();

    let mut tiny_steps = 0usize;
    for iter in 1..=options.max_iterations {
        let g: Vec<f64> = cons.iter().map(|c| c.value(&x)).collect();
        let grads: Vec<DVector<f64>> = cons.iter().map(|c| c.gradient(&x)).collect();
        let r_prim: Vec<f64> = (0..m).map(|i| g[i] + s[i]).collect();
        let mut r_dual = 2.0 * (&p0 * &x - &q0);
        for i in 0..m {
            r_dual += lam[i] * &grads[i];
        }
        let gap = (0..m).map(|i| s[i] * lam[i]).sum::<f64>() / m as f64;
        let f0 = (x.transpose() * &p0 * &x)[(0, 0)] - 2.0 * q0.dot(&x);
        let scale = 1.0 + f0.abs();
        let dual_norm = max_abs_vec(&r_dual);
        let prim_norm = r_prim.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if gap <= options.tol * scale
            && dual_norm <= options.tol * scale
            && prim_norm <= options.tol * scale
        {
            return Ok(finish(&x, &lam, &cons, &p0, &q0, iter - 1));
        }
        if iter > 20 && gap <= options.tol * scale && prim_norm > 1e3 * options.tol * scale {
            return Err(SolverError::Infeasible(format!(
                "complementarity converged with primal residual {prim_norm:.3e}"
            )));
        }

        let mu = SIGMA * gap;
        let mut newton = 2.0 * &p0;
        for i in 0..m {
            newton += 2.0 * lam[i] * &cons[i].p;
            let w = lam[i] / s[i];
            // Rank-one term (lam/s) grad grad^T.
            newton.ger(w, &grads[i], &grads[i], 1.0);
        }
        let mut rhs = -&r_dual;
        for i in 0..m {
            let r_comp = mu - lam[i] * s[i];
            rhs -= ((r_comp + lam[i] * r_prim[i]) / s[i]) * &grads[i];
        }
        let dx = solve_regularized(&newton, &rhs)?;

        let mut alpha: f64 = 1.0;
        let mut dlam = vec![0.0; m];
        let mut ds = vec![0.0; m];
        for i in 0..m {
            let gdx = grads[i].dot(&dx);
            let r_comp = mu - lam[i] * s[i];
            dlam[i] = (r_comp + lam[i] * r_prim[i] + lam[i] * gdx) / s[i];
            ds[i] = -r_prim[i] - gdx;
            if ds[i] < 0.0 {
                alpha = alpha.min(-BOUNDARY_FRACTION * s[i] / ds[i]);
            }
            if dlam[i] < 0.0 {
                alpha = alpha.min(-BOUNDARY_FRACTION * lam[i] / dlam[i]);
            }
        }
        if alpha < 1e-13 {
            tiny_steps += 1;
            if tiny_steps >= 3 {
                return Err(SolverError::NumericalBreakdown(
                    "step length collapsed".into(),
                ));
            }
        } else {
            tiny_steps = 0;
        }
        x += alpha * &dx;
        for i in 0..m {
            s[i] = (s[i] + alpha * ds[i]).max(1e-160);
            lam[i] = (lam[i] + alpha * dlam[i]).max(1e-160);
        }
    }
    Err(SolverError::MaxIterations(options.max_iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{QuadConstraint, QuadForm};
    use crate::linalg::{solve_hpd, C64};
    use approx::assert_relative_eq;
    use ndarray::{arr1, Array1, Array2};

    fn hpd(seed: u64, d: usize) -> CMat {
        // Deterministic HPD matrix: B B^H + I from a splitmix-style stream.
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut next = move || {
            state ^= state >> 30;
            state = state.wrapping_mul(0xbf58476d1ce4e5b9);
            state ^= state >> 27;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let b = Array2::from_shape_fn((d, d), |_| C64::new(next(), next()));
        let bh = crate::linalg::adjoint(&b);
        b.dot(&bh) + Array2::<C64>::eye(d)
    }

    fn cvec(seed: u64, d: usize) -> CVec {
        let mut state = seed.wrapping_mul(0x2545f4914f6cdd1d).wrapping_add(7);
        let mut next = move || {
            state ^= state >> 30;
            state = state.wrapping_mul(0xbf58476d1ce4e5b9);
            state ^= state >> 27;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        Array1::from_shape_fn(d, |_| C64::new(next(), next()))
    }

    #[test]
    fn unconstrained_recovers_linear_solve() {
        let p = hpd(3, 4);
        let q = cvec(5, 4);
        let problem = QcqpProblem {
            block_dims: vec![4],
            objective: QuadForm {
                p: vec![Some(p.clone())],
                q: vec![q.clone()],
            },
            constraints: vec![],
        };
        let sol = solve_qcqp(&problem, &QcqpOptions::default()).unwrap();
        let expect = solve_hpd(&p, &q).unwrap();
        for i in 0..4 {
            assert!((sol.x[0][i] - expect[i]).norm() < 1e-8);
        }
    }

    #[test]
    fn ball_projection_and_multiplier() {
        // min ||x - a||^2 with ||a|| = 2 over the unit ball: x = a/2, lambda = 1.
        let mut a = cvec(11, 3);
        let norm = crate::linalg::norm_sq(&a).sqrt();
        a.mapv_inplace(|z| z * (2.0 / norm));
        let problem = QcqpProblem {
            block_dims: vec![3],
            objective: QuadForm {
                p: vec![Some(Array2::eye(3))],
                q: vec![a.clone()],
            },
            constraints: vec![QuadConstraint {
                p: vec![Some(Array2::eye(3))],
                q: vec![CVec::zeros(3)],
                r: 1.0,
            }],
        };
        let sol = solve_qcqp(&problem, &QcqpOptions::default()).unwrap();
        for i in 0..3 {
            assert!((sol.x[0][i] - a[i] / 2.0).norm() < 1e-6);
        }
        assert_relative_eq!(sol.multipliers[0], 1.0, max_relative = 1e-5);
        assert!(sol.kkt.stationarity < 1e-6);
        assert!(sol.kkt.primal_feasibility < 1e-6);
        assert!(sol.kkt.complementarity < 1e-6);
    }

    #[test]
    fn linear_objective_maximizes_alignment() {
        // min -2 Re(a^H x) over the unit ball: x = a / ||a||.
        let a = cvec(21, 4);
        let norm = crate::linalg::norm_sq(&a).sqrt();
        let problem = QcqpProblem {
            block_dims: vec![4],
            objective: QuadForm {
                p: vec![None],
                q: vec![a.clone()],
            },
            constraints: vec![QuadConstraint {
                p: vec![Some(Array2::eye(4))],
                q: vec![CVec::zeros(4)],
                r: 1.0,
            }],
        };
        let sol = solve_qcqp(&problem, &QcqpOptions::default()).unwrap();
        for i in 0..4 {
            assert!((sol.x[0][i] - a[i] / norm).norm() < 1e-6);
        }
    }

    #[test]
    fn cross_block_element_balls() {
        // Two blocks coupled per element by |x_n|^2 + |y_n|^2 <= 1; the
        // optimum projects each C^2 pair onto the unit ball.
        let d = 3;
        let a = cvec(31, d).mapv(|z| z * 2.0);
        let b = cvec(32, d).mapv(|z| z * 2.0);
        let mut constraints = Vec::new();
        for i in 0..d {
            let mut sel = Array2::<C64>::zeros((d, d));
            sel[(i, i)] = C64::new(1.0, 0.0);
            constraints.push(QuadConstraint {
                p: vec![Some(sel.clone()), Some(sel)],
                q: vec![CVec::zeros(d), CVec::zeros(d)],
                r: 1.0,
            });
        }
        let problem = QcqpProblem {
            block_dims: vec![d, d],
            objective: QuadForm {
                p: vec![Some(Array2::eye(d)), Some(Array2::eye(d))],
                q: vec![a.clone(), b.clone()],
            },
            constraints,
        };
        let sol = solve_qcqp(&problem, &QcqpOptions::default()).unwrap();
        for i in 0..d {
            let pair_norm = (a[i].norm_sqr() + b[i].norm_sqr()).sqrt();
            let shrink = if pair_norm > 1.0 { 1.0 / pair_norm } else { 1.0 };
            assert!((sol.x[0][i] - a[i] * shrink).norm() < 1e-6);
            assert!((sol.x[1][i] - b[i] * shrink).norm() < 1e-6);
        }
    }

    #[test]
    fn intake_scaling_handles_disparate_magnitudes() {
        // The same ball projection posed in units mimicking interference
        // temperatures (1e-12) must produce the same solution.
        let mut a = cvec(41, 3);
        let norm = crate::linalg::norm_sq(&a).sqrt();
        a.mapv_inplace(|z| z * (2.0 / norm));
        let c_obj = 3e-13;
        let c_con = 1e-12;
        let problem = QcqpProblem {
            block_dims: vec![3],
            objective: QuadForm {
                p: vec![Some(Array2::eye(3).mapv(|z: C64| z * c_obj))],
                q: vec![a.mapv(|z| z * c_obj)],
            },
            constraints: vec![QuadConstraint {
                p: vec![Some(Array2::eye(3).mapv(|z: C64| z * c_con))],
                q: vec![CVec::zeros(3)],
                r: c_con,
            }],
        };
        let sol = solve_qcqp(&problem, &QcqpOptions::default()).unwrap();
        for i in 0..3 {
            assert!((sol.x[0][i] - a[i] / 2.0).norm() < 1e-6);
        }
        // Multiplier in original units: lambda = c_obj / c_con.
        assert_relative_eq!(sol.multipliers[0], c_obj / c_con, max_relative = 1e-4);
    }

    #[test]
    fn inactive_constraint_has_vanishing_multiplier() {
        let p = hpd(51, 3);
        let q = cvec(52, 3);
        let problem = QcqpProblem {
            block_dims: vec![3],
            objective: QuadForm {
                p: vec![Some(p.clone())],
                q: vec![q.clone()],
            },
            constraints: vec![QuadConstraint {
                p: vec![Some(Array2::eye(3))],
                q: vec![CVec::zeros(3)],
                r: 100.0,
            }],
        };
        let sol = solve_qcqp(&problem, &QcqpOptions::default()).unwrap();
        let expect = solve_hpd(&p, &q).unwrap();
        for i in 0..3 {
            assert!((sol.x[0][i] - expect[i]).norm() < 1e-5);
        }
        assert!(sol.multipliers[0] < 1e-6);
    }

    #[test]
    fn deterministic_bitwise() {
        let a = cvec(61, 5);
        let problem = QcqpProblem {
            block_dims: vec![5],
            objective: QuadForm {
                p: vec![Some(hpd(62, 5))],
                q: vec![a],
            },
            constraints: vec![QuadConstraint {
                p: vec![Some(Array2::eye(5))],
                q: vec![cvec(63, 5)],
                r: 2.0,
            }],
        };
        let s1 = solve_qcqp(&problem, &QcqpOptions::default()).unwrap();
        let s2 = solve_qcqp(&problem, &QcqpOptions::default()).unwrap();
        for i in 0..5 {
            assert_eq!(s1.x[0][i], s2.x[0][i]);
        }
    }

    #[test]
    fn infeasible_pair_is_rejected() {
        // ||x||^2 <= 1 cannot reach 2 Re(q^H x) >= 10 when ||q|| = 1.
        let mut q = cvec(71, 3);
        let norm = crate::linalg::norm_sq(&q).sqrt();
        q.mapv_inplace(|z| z / norm);
        let problem = QcqpProblem {
            block_dims: vec![3],
            objective: QuadForm {
                p: vec![Some(Array2::eye(3))],
                q: vec![CVec::zeros(3)],
            },
            constraints: vec![
                QuadConstraint {
                    p: vec![Some(Array2::eye(3))],
                    q: vec![CVec::zeros(3)],
                    r: 1.0,
                },
                QuadConstraint {
                    p: vec![None],
                    q: vec![q.mapv(|z| -z)],
                    r: -10.0,
                },
            ],
        };
        assert!(solve_qcqp(&problem, &QcqpOptions::default()).is_err());
    }

    #[test]
    fn strictly_feasible_start_is_accepted() {
        let mut a = cvec(81, 3);
        let pre_norm = crate::linalg::norm_sq(&a).sqrt();
        a.mapv_inplace(|z| z * (3.0 / pre_norm));
        let problem = QcqpProblem {
            block_dims: vec![3],
            objective: QuadForm {
                p: vec![Some(Array2::eye(3))],
                q: vec![a.clone()],
            },
            constraints: vec![QuadConstraint {
                p: vec![Some(Array2::eye(3))],
                q: vec![CVec::zeros(3)],
                r: 1.0,
            }],
        };
        let opts = QcqpOptions {
            initial_point: Some(vec![arr1(&[
                C64::new(0.1, 0.0),
                C64::new(0.0, 0.1),
                C64::new(0.1, 0.1),
            ])]),
            ..Default::default()
        };
        let sol = solve_qcqp(&problem, &opts).unwrap();
        let norm = crate::linalg::norm_sq(&a).sqrt();
        for i in 0..3 {
            assert!((sol.x[0][i] - a[i] / norm).norm() < 1e-6);
        }
    }
}
