//! Primal-dual path-following solver for standard-form semidefinite
//! programs with Nesterov-Todd scaling.
//!
//! The problem is
//! minimize sum_b C_b . X_b subject to sum_b A_{i,b} . X_b = b_i, X_b >= 0
//! over real symmetric blocks, where "." is the trace inner product. Each
//! iteration forms the Schur complement M_ij = A_i . (W A_j W) of the NT
//! direction, takes an affine probe to choose the centering parameter
//! sigma = clip((gap_aff/gap)^3), and recomputes the direction at
//! sigma * mu without a second-order corrector. Steps are damped to keep X
//! and Z positive definite.
//!
//! Complex Hermitian data maps onto this form through [`crate::linalg::realify`]:
//! Re tr(A S) of Hermitian A, S equals tr(realify(A)/2 . realify(S)), at the
//! cost of doubling the block dimension.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::SolverError;

/// Fraction of the maximal positive-definiteness-preserving step taken.
const BOUNDARY_FRACTION: f64 = 0.98;

/// One linear constraint sum_b A_{i,b} . X_b = rhs; `terms` lists only the
/// blocks with nonzero coefficient.
#[derive(Debug, Clone)]
pub struct SdpConstraint {
    pub terms: Vec<(usize, DMatrix<f64>)>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    /// Objective coefficient per block (symmetric).
    pub c: Vec<DMatrix<f64>>,
    pub constraints: Vec<SdpConstraint>,
}

#[derive(Debug, Clone)]
pub struct SdpOptions {
    /// Relative tolerance on duality gap and residual norms.
    pub tol: f64,
    /// Iteration budget.
    pub max_iterations: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SdpResiduals {
    /// ||b - A(X)||_inf / (1 + ||b||_inf).
    pub primal_infeasibility: f64,
    /// max_b ||C - Z - A^T(y)||_max / (1 + max ||C||_max).
    pub dual_infeasibility: f64,
    /// (X . Z) / (1 + |primal| + |dual|).
    pub duality_gap: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: Vec<DMatrix<f64>>,
    pub y: Vec<f64>,
    pub z: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub residuals: SdpResiduals,
    pub iterations: usize,
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
}

/// Spectral function of a symmetric PSD matrix; `f` maps eigenvalues.
fn spectral(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let fl = f(l);
        for i in 0..scaled.nrows() {
            scaled[(i, j)] = q[(i, j)] * fl;
        }
    }
    &scaled * q.transpose()
}

/// Largest alpha with M + alpha * dM positive definite, via the generalized
/// eigenvalue bound on L^{-1} dM L^{-T}.
fn max_step(m: &DMatrix<f64>, dm: &DMatrix<f64>) -> Result<f64, SolverError> {
    let chol = Cholesky::new(m.clone()).ok_or_else(|| {
        SolverError::NumericalBreakdown("iterate left the positive definite cone".into())
    })?;
    let l = chol.l();
    let t1 = l
        .solve_lower_triangular(dm)
        .ok_or_else(|| SolverError::NumericalBreakdown("singular Cholesky factor".into()))?;
    let t2 = l
        .solve_lower_triangular(&t1.transpose())
        .ok_or_else(|| SolverError::NumericalBreakdown("singular Cholesky factor".into()))?;
    let lmin = sym(&t2).symmetric_eigen().eigenvalues.min();
    if lmin >= 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(-1.0 / lmin)
    }
}

fn validate(problem: &SdpProblem) -> Result<(), SolverError> {
    let nb = problem.block_dims.len();
    if nb == 0 || problem.block_dims.iter().any(|&d| d == 0) {
        return Err(SolverError::BadProblem(
            "block dimensions must be nonempty and positive".into(),
        ));
    }
    if problem.c.len() != nb {
        return Err(SolverError::BadProblem(format!(
            "expected {nb} objective blocks, got {}",
            problem.c.len()
        )));
    }
    for (b, c) in problem.c.iter().enumerate() {
        let d = problem.block_dims[b];
        if c.nrows() != d || c.ncols() != d {
            return Err(SolverError::BadProblem(format!(
                "objective block {b} is {}x{}, expected {d}x{d}",
                c.nrows(),
                c.ncols()
            )));
        }
    }
    if problem.constraints.is_empty() {
        return Err(SolverError::BadProblem(
            "at least one equality constraint is required".into(),
        ));
    }
    for (i, con) in problem.constraints.iter().enumerate() {
        if !con.rhs.is_finite() {
            return Err(SolverError::BadProblem(format!(
                "constraint {i} has non-finite right-hand side"
            )));
        }
        for (b, a) in &con.terms {
            if *b >= nb {
                return Err(SolverError::BadProblem(format!(
                    "constraint {i} references block {b} out of {nb}"
                )));
            }
            let d = problem.block_dims[*b];
            if a.nrows() != d || a.ncols() != d {
                return Err(SolverError::BadProblem(format!(
                    "constraint {i} block {b} coefficient is {}x{}, expected {d}x{d}",
                    a.nrows(),
                    a.ncols()
                )));
            }
        }
    }
    Ok(())
}

pub fn solve_sdp(problem: &SdpProblem, options: &SdpOptions) -> Result<SdpSolution, SolverError> {
    validate(problem)?;
    let nb = problem.block_dims.len();
    let m = problem.constraints.len();
    let n_tot: usize = problem.block_dims.iter().sum();

    // Symmetrized copies of the data.
    let c: Vec<DMatrix<f64>> = problem.c.iter().map(sym).collect();
    let cons: Vec<(Vec<(usize, DMatrix<f64>)>, f64)> = problem
        .constraints
        .iter()
        .map(|con| {
            (
                con.terms.iter().map(|(b, a)| (*b, sym(a))).collect(),
                con.rhs,
            )
        })
        .collect();
    let b_vec = DVector::from_iterator(m, cons.iter().map(|(_, rhs)| *rhs));
    let b_norm = b_vec.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let c_norm = c.iter().map(max_abs).fold(0.0f64, f64::max);

    // A(V) for blockdiag V, restricted to each constraint's terms.
    let apply = |v: &[DMatrix<f64>]| -> DVector<f64> {
        DVector::from_iterator(
            m,
            cons.iter()
                .map(|(terms, _)| terms.iter().map(|(b, a)| a.dot(&v[*b])).sum::<f64>()),
        )
    };
    // A^T(y) as blockdiag.
    let apply_adjoint = |y: &DVector<f64>| -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = problem
            .block_dims
            .iter()
            .map(|&d| DMatrix::zeros(d, d))
            .collect();
        for (i, (terms, _)) in cons.iter().enumerate() {
            for (b, a) in terms {
                out[*b] += y[i] * a;
            }
        }
        out
    };

    let tau_p = b_norm.max(1.0);
    let tau_d = c_norm.max(1.0);
    let mut x: Vec<DMatrix<f64>> = problem
        .block_dims
        .iter()
        .map(|&d| DMatrix::identity(d, d) * tau_p)
        .collect();
    let mut z: Vec<DMatrix<f64>> = problem
        .block_dims
        .iter()
        .map(|&d| DMatrix::identity(d, d) * tau_d)
        .collect();
    let mut y = DVector::<f64>::zeros(m);

    let mut tiny_steps = 0usize;
    for iter in 0..=options.max_iterations {
        let pobj: f64 = (0..nb).map(|b| c[b].dot(&x[b])).sum();
        let dobj = b_vec.dot(&y);
        let gap: f64 = (0..nb).map(|b| x[b].dot(&z[b])).sum();
        let rp = &b_vec - apply(&x);
        let aty = apply_adjoint(&y);
        let rd: Vec<DMatrix<f64>> = (0..nb).map(|b| &c[b] - &z[b] - &aty[b]).collect();

        let rp_norm = rp.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let rd_norm = rd.iter().map(max_abs).fold(0.0f64, f64::max);
        let residuals = SdpResiduals {
            primal_infeasibility: rp_norm / (1.0 + b_norm),
            dual_infeasibility: rd_norm / (1.0 + c_norm),
            duality_gap: gap.abs() / (1.0 + pobj.abs() + dobj.abs()),
        };
        if residuals.primal_infeasibility <= options.tol
            && residuals.dual_infeasibility <= options.tol
            && residuals.duality_gap <= options.tol
        {
            return Ok(SdpSolution {
                x,
                y: y.iter().copied().collect(),
                z,
                primal_objective: pobj,
                dual_objective: dobj,
                residuals,
                iterations: iter,
            });
        }
        if iter == options.max_iterations {
            break;
        }
        let mu = gap / n_tot as f64;

        // NT scaling point per block.
        let mut w = Vec::with_capacity(nb);
        let mut z_inv = Vec::with_capacity(nb);
        for b in 0..nb {
            let eig = z[b].clone().symmetric_eigen();
            if eig.eigenvalues.min() <= 0.0 {
                return Err(SolverError::NumericalBreakdown(
                    "dual iterate lost positive definiteness".into(),
                ));
            }
            let z_sqrt = spectral(&z[b], f64::sqrt);
            let z_isqrt = spectral(&z[b], |l| 1.0 / l.sqrt());
            z_inv.push(spectral(&z[b], |l| 1.0 / l));
            let s = sym(&(&z_sqrt * &x[b] * &z_sqrt));
            let s_sqrt = spectral(&s, |l| l.max(0.0).sqrt());
            w.push(sym(&(&z_isqrt * s_sqrt * &z_isqrt)));
        }

        // Schur complement M_ij = A_i . (W A_j W).
        let waw: Vec<Vec<(usize, DMatrix<f64>)>> = cons
            .iter()
            .map(|(terms, _)| {
                terms
                    .iter()
                    .map(|(b, a)| (*b, &w[*b] * a * &w[*b]))
                    .collect()
            })
            .collect();
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                let mut val = 0.0;
                for (bj, t) in &waw[j] {
                    for (bi, a) in &cons[i].0 {
                        if bi == bj {
                            val += a.dot(t);
                        }
                    }
                }
                schur[(i, j)] = val;
            }
        }
        let schur = sym(&schur);
        let diag_scale = 1.0 + (0..m).fold(0.0f64, |a, i| a.max(schur[(i, i)].abs()));
        let mut reg = 0.0;
        let chol = loop {
            let mut work = schur.clone();
            for i in 0..m {
                work[(i, i)] += reg * diag_scale;
            }
            if let Some(ch) = Cholesky::new(work) {
                break ch;
            }
            reg = if reg == 0.0 { 1e-14 } else { reg * 10.0 };
            if reg > 1e-6 {
                return Err(SolverError::NumericalBreakdown(
                    "Schur complement is not positive definite".into(),
                ));
            }
        };

        let w_rd_w: Vec<DMatrix<f64>> = (0..nb).map(|b| sym(&(&w[b] * &rd[b] * &w[b]))).collect();
        let a_wrdw = apply(&w_rd_w);
        let a_zinv = apply(&z_inv);

        // Direction for a given centering target sigma * mu.
        let direction = |sigma_mu: f64| -> Result<_, SolverError> {
            let rhs = &b_vec - sigma_mu * &a_zinv + &a_wrdw;
            let dy = chol.solve(&rhs);
            let aty_dy = apply_adjoint(&dy);
            let dz: Vec<DMatrix<f64>> = (0..nb).map(|b| &rd[b] - &aty_dy[b]).collect();
            let dx: Vec<DMatrix<f64>> = (0..nb)
                .map(|b| {
                    sym(&(sigma_mu * &z_inv[b] - &x[b] - &(&w[b] * &dz[b] * &w[b])))
                })
                .collect();
            let mut ap: f64 = 1.0;
            let mut ad: f64 = 1.0;
            for b in 0..nb {
                ap = ap.min(BOUNDARY_FRACTION * max_step(&x[b], &dx[b])?);
                ad = ad.min(BOUNDARY_FRACTION * max_step(&z[b], &dz[b])?);
            }
            Ok((dx, dy, dz, ap.min(1.0), ad.min(1.0)))
        };

        // Affine probe fixes sigma, then the combined direction is taken.
        let (dx_a, _, dz_a, ap_a, ad_a) = direction(0.0)?;
        let gap_aff: f64 = (0..nb)
            .map(|b| (&x[b] + ap_a * &dx_a[b]).dot(&(&z[b] + ad_a * &dz_a[b])))
            .sum();
        let sigma = (gap_aff / gap).powi(3).clamp(1e-4, 0.9);
        let (dx, dy, dz, ap, ad) = direction(sigma * mu)?;

        if ap < 1e-12 || ad < 1e-12 {
            tiny_steps += 1;
            if tiny_steps >= 3 {
                return Err(SolverError::NumericalBreakdown(
                    "step length collapsed".into(),
                ));
            }
        } else {
            tiny_steps = 0;
        }
        for b in 0..nb {
            x[b] = sym(&(&x[b] + ap * &dx[b]));
            z[b] = sym(&(&z[b] + ad * &dz[b]));
        }
        y += ad * &dy;
    }
    Err(SolverError::MaxIterations(options.max_iterations))
}
