//! Closed-form auxiliary updates of the fractional-programming
//! reformulation and assembly of the two convex subproblem data sets.
//!
//! The sum-rate objective is handled in two stages: a Lagrangian dual
//! transform introduces gamma (one scalar per SU, maximized in closed form),
//! and a complex quadratic transform introduces alpha (beamformer step) or
//! beta (surface step), also maximized in closed form. With both fixed, the
//! remaining problems in w and in the surface vectors are convex quadratics
//! assembled here as [`WSubproblem`] and [`VSubproblem`].

use ndarray::Array1;

use crate::conic::{QcqpProblem, QuadConstraint, QuadForm};
use crate::linalg::{cdot, cholesky, cholesky_solve, norm_sq, outer, quad_form, CMat, CVec, C64};
use crate::metrics::{own_signal_ratio, Beamformers};
use crate::scene::{ChannelSet, Side};
use crate::star::StarVectors;

/// Clamp threshold for the quadratic-over-linear ratio t_l; analytically
/// t_l < 1, numerically it may graze 1.
pub const T_CLAMP: f64 = 1.0 - 1e-12;

/// Result of the gamma update: the new values plus the indices where the
/// ratio had to be clamped (a diagnostic, not an error).
#[derive(Debug, Clone)]
pub struct GammaUpdate {
    pub gamma: Vec<f64>,
    pub clamped: Vec<usize>,
}

/// Closed-form maximizer of f_ldt over gamma: gamma_l = t_l / (1 - t_l)
/// with t_l = w_l^H H_l^H J_l^{-1} H_l w_l (J_l includes the own signal).
pub fn update_gamma(h: &[CMat], w: &Beamformers, sigma_sq: &[f64]) -> GammaUpdate {
    let mut gamma = Vec::with_capacity(h.len());
    let mut clamped = Vec::new();
    for l in 0..h.len() {
        let mut t = own_signal_ratio(l, h, w, sigma_sq[l]);
        if t >= T_CLAMP {
            t = T_CLAMP;
            clamped.push(l);
        }
        gamma.push(t / (1.0 - t));
    }
    GammaUpdate { gamma, clamped }
}

/// Signal-plus-interference-plus-noise matrix including the own signal:
/// J_l = sum_j (H_l w_j)(H_l w_j)^H + sigma^2 I.
fn j_full(h_l: &CMat, w: &Beamformers, sigma_sq: f64) -> CMat {
    let u = h_l.nrows();
    let mut j_mat = CMat::eye(u).mapv(|z| z * sigma_sq);
    for w_j in w {
        let hw = h_l.dot(w_j);
        for a in 0..u {
            for b in 0..u {
                j_mat[(a, b)] += hw[a] * hw[b].conj();
            }
        }
    }
    j_mat
}

fn quadratic_transform_aux(h: &[CMat], w: &Beamformers, sigma_sq: &[f64], gamma: &[f64]) -> Vec<CVec> {
    (0..h.len())
        .map(|l| {
            let hw = h[l].dot(&w[l]);
            let j_mat = j_full(&h[l], w, sigma_sq[l]);
            let fac = cholesky(&j_mat).expect("J_l is positive definite");
            let x = cholesky_solve(&fac, &hw);
            x.mapv(|z| z * (1.0 + gamma[l]).sqrt())
        })
        .collect()
}

/// Closed-form maximizer of the beamformer-step quadratic transform:
/// alpha_l = sqrt(1 + gamma_l) J_l^{-1} H_l w_l.
pub fn update_alpha(h: &[CMat], w: &Beamformers, sigma_sq: &[f64], gamma: &[f64]) -> Vec<CVec> {
    quadratic_transform_aux(h, w, sigma_sq, gamma)
}

/// Closed-form maximizer of the surface-step quadratic transform; the same
/// expression as [`update_alpha`] evaluated at the current surface state.
pub fn update_beta(h: &[CMat], w: &Beamformers, sigma_sq: &[f64], gamma: &[f64]) -> Vec<CVec> {
    quadratic_transform_aux(h, w, sigma_sq, gamma)
}

/// Quadratic-transform objective
/// sum_l [ 2 sqrt(1+gamma_l) Re(aux_l^H H_l w_l) - aux_l^H J_l aux_l ],
/// used for both the alpha and beta stages.
pub fn f_cqt(h: &[CMat], w: &Beamformers, sigma_sq: &[f64], gamma: &[f64], aux: &[CVec]) -> f64 {
    (0..h.len())
        .map(|l| {
            let hw = h[l].dot(&w[l]);
            let j_mat = j_full(&h[l], w, sigma_sq[l]);
            let lin = 2.0 * (1.0 + gamma[l]).sqrt() * cdot(&aux[l], &hw).re;
            lin - quad_form(&j_mat, &aux[l])
        })
        .sum()
}

/// Data of the beamformer subproblem:
/// minimize sum_l (w_l^H A w_l - 2 Re(a_l^H w_l))
/// subject to sum_l ||w_l||^2 <= P_s and sum_l w_l^H A_k w_l <= Gamma_k.
#[derive(Debug, Clone)]
pub struct WSubproblem {
    /// Shared quadratic form, M_s x M_s, Hermitian PSD.
    pub a: CMat,
    /// Per-PU interference Gram matrix T_k^H T_k, Hermitian PSD.
    pub a_k: Vec<CMat>,
    /// Per-SU linear term.
    pub a_l: Vec<CVec>,
    /// Transmit power budget.
    pub p_s: f64,
    /// Per-PU interference thresholds.
    pub gamma_k: Vec<f64>,
}

impl WSubproblem {
    /// Objective value at a beamformer set.
    pub fn objective(&self, w: &Beamformers) -> f64 {
        w.iter()
            .zip(&self.a_l)
            .map(|(w_l, a_l)| quad_form(&self.a, w_l) - 2.0 * cdot(a_l, w_l).re)
            .sum()
    }

    /// Express the subproblem as a block QCQP (one block per SU).
    pub fn to_qcqp(&self) -> QcqpProblem {
        let l = self.a_l.len();
        let m_s = self.a.nrows();
        let objective = QuadForm {
            p: vec![Some(self.a.clone()); l],
            q: self.a_l.to_vec(),
        };
        let mut constraints = Vec::with_capacity(1 + self.a_k.len());
        constraints.push(QuadConstraint {
            p: vec![Some(CMat::eye(m_s)); l],
            q: vec![CVec::zeros(m_s); l],
            r: self.p_s,
        });
        for (a_k, &g) in self.a_k.iter().zip(&self.gamma_k) {
            constraints.push(QuadConstraint {
                p: vec![Some(a_k.clone()); l],
                q: vec![CVec::zeros(m_s); l],
                r: g,
            });
        }
        QcqpProblem {
            block_dims: vec![m_s; l],
            objective,
            constraints,
        }
    }
}

/// Assemble the beamformer subproblem from the current aggregate channels,
/// surface state, and auxiliary variables.
pub fn build_w_subproblem(
    channels: &ChannelSet,
    pu_sides: &[Side],
    vectors: &StarVectors,
    h: &[CMat],
    gamma: &[f64],
    alpha: &[CVec],
    p_s: f64,
    gamma_k: &[f64],
) -> WSubproblem {
    let m_s = channels.g_s.ncols();
    let mut a = CMat::zeros((m_s, m_s));
    let mut a_l = Vec::with_capacity(h.len());
    for l in 0..h.len() {
        // y_l = H_l^H alpha_l; A accumulates y_l y_l^H.
        let y: CVec = crate::linalg::adjoint(&h[l]).dot(&alpha[l]);
        a = a + outer(&y, &y);
        a_l.push(y.mapv(|z| z * (1.0 + gamma[l]).sqrt()));
    }
    let a_k = channels
        .dhat_pu
        .iter()
        .zip(&channels.g_pu)
        .zip(pu_sides)
        .map(|((dhat, g_k), side)| {
            let v = match side {
                Side::Transmission => &vectors.v_t,
                Side::Reflection => &vectors.v_r,
            };
            let t_k = crate::metrics::aggregate_channel_v(dhat, g_k, v, &channels.g_s);
            crate::linalg::adjoint(&t_k).dot(&t_k)
        })
        .collect();
    WSubproblem {
        a,
        a_k,
        a_l,
        p_s,
        gamma_k: gamma_k.to_vec(),
    }
}

/// Data of the surface subproblem. For side i in {t, r}:
/// minimize sum_i (v_i^H C_i v_i - 2 Re(c_i^H v_i))
/// subject to v_i^H B_k v_i + 2 Re(b_k^H v_i) <= Gamma_hat_k for each PU k
/// on side i, plus the model's amplitude constraints handled by the solvers.
#[derive(Debug, Clone)]
pub struct VSubproblem {
    /// STAR element count.
    pub n: usize,
    /// Quadratic forms per side, Hermitian PSD.
    pub c_quad_t: CMat,
    pub c_quad_r: CMat,
    /// Linear terms per side.
    pub c_lin_t: CVec,
    pub c_lin_r: CVec,
    /// Per-PU interference quadratic forms (on that PU's side).
    pub b_k: Vec<CMat>,
    /// Per-PU interference linear terms.
    pub b_lin_k: Vec<CVec>,
    /// Per-PU interference budgets net of the direct leakage,
    /// Gamma_hat_k = Gamma_k - sum_l ||Dhat_k w_l||^2 (may be negative).
    pub gamma_hat: Vec<f64>,
    /// Direct leakage per PU (completes the interference temperature).
    pub direct_leakage: Vec<f64>,
    /// PU side assignment (selects which v_i each constraint binds).
    pub pu_sides: Vec<Side>,
    /// v-independent part of the quadratic-transform objective, so that
    /// g_cqt(v) = constant - sum_i (v_i^H C_i v_i - 2 Re(c_i^H v_i)).
    pub constant: f64,
    /// Per-(l, j) scalars beta_l^H D_l w_j, retained for cross-checks.
    pub c_scalars: Vec<Vec<C64>>,
    /// Per-(l, j) vectors with c_vec^H v = beta_l^H G_l diag(G_s w_j) v.
    pub c_vectors: Vec<Vec<CVec>>,
}

impl VSubproblem {
    /// The minimized quadratic objective sum_i (v_i^H C_i v_i - 2 Re(c_i^H v_i)).
    pub fn objective(&self, v_t: &CVec, v_r: &CVec) -> f64 {
        quad_form(&self.c_quad_t, v_t) - 2.0 * cdot(&self.c_lin_t, v_t).re
            + quad_form(&self.c_quad_r, v_r)
            - 2.0 * cdot(&self.c_lin_r, v_r).re
    }

    /// Quadratic-transform objective at the surface state (fixed beta).
    pub fn g_cqt(&self, v_t: &CVec, v_r: &CVec) -> f64 {
        self.constant - self.objective(v_t, v_r)
    }

    /// Interference temperature at PU k implied by the quadratic model
    /// (equals the physical interference temperature for the same w).
    pub fn interference_temperature(&self, k: usize, v_t: &CVec, v_r: &CVec) -> f64 {
        let v = match self.pu_sides[k] {
            Side::Transmission => v_t,
            Side::Reflection => v_r,
        };
        quad_form(&self.b_k[k], v) + 2.0 * cdot(&self.b_lin_k[k], v).re + self.direct_leakage[k]
    }

    /// Slack of the interference constraint at PU k (nonnegative iff feasible).
    pub fn it_slack(&self, k: usize, v_t: &CVec, v_r: &CVec) -> f64 {
        let v = match self.pu_sides[k] {
            Side::Transmission => v_t,
            Side::Reflection => v_r,
        };
        self.gamma_hat[k] - quad_form(&self.b_k[k], v) - 2.0 * cdot(&self.b_lin_k[k], v).re
    }

    /// Physical interference budget Gamma_k (net budget plus direct leakage).
    pub fn physical_budget(&self, k: usize) -> f64 {
        self.gamma_hat[k] + self.direct_leakage[k]
    }

    /// Margin-shrunk budget handed to the surface-step solvers. The shrink
    /// absorbs solver residuals and the terminal renormalization; it is
    /// capped at half the slack available at the expansion point (v_t, v_r)
    /// so the current iterate always stays strictly inside the shrunk set.
    /// The result may be negative: the direct leakage alone can exceed
    /// Gamma_k while the surface term interferes destructively.
    pub fn shrunk_budget(&self, k: usize, v_t: &CVec, v_r: &CVec, it_margin: f64) -> f64 {
        let margin =
            (it_margin * self.physical_budget(k)).min(0.5 * self.it_slack(k, v_t, v_r).max(0.0));
        self.gamma_hat[k] - margin
    }
}

/// Assemble the surface subproblem from the current beamformers and the
/// beta auxiliaries. `h` must hold the aggregate channels used to compute
/// nothing here directly; the expansion is channel-exact in (D, G, G_s).
pub fn build_v_subproblem(
    channels: &ChannelSet,
    su_sides: &[Side],
    pu_sides: &[Side],
    w: &Beamformers,
    sigma_sq: &[f64],
    gamma: &[f64],
    beta: &[CVec],
    gamma_k: &[f64],
) -> VSubproblem {
    let n = channels.g_s.nrows();
    let l_count = w.len();
    // Precompute G_s w_j for every SU.
    let gsw: Vec<CVec> = w.iter().map(|w_j| channels.g_s.dot(w_j)).collect();

    let mut c_scalars = vec![vec![C64::new(0.0, 0.0); l_count]; l_count];
    let mut c_vectors = vec![vec![CVec::zeros(n); l_count]; l_count];
    for l in 0..l_count {
        // (G_l^H beta_l), length N.
        let gh_beta: CVec = crate::linalg::adjoint(&channels.g_su[l]).dot(&beta[l]);
        for j in 0..l_count {
            c_scalars[l][j] = cdot(&beta[l], &channels.d_su[l].dot(&w[j]));
            c_vectors[l][j] = Array1::from_shape_fn(n, |idx| gh_beta[idx] * gsw[j][idx].conj());
        }
    }

    let mut c_quad_t = CMat::zeros((n, n));
    let mut c_quad_r = CMat::zeros((n, n));
    let mut c_lin_t = CVec::zeros(n);
    let mut c_lin_r = CVec::zeros(n);
    let mut constant = 0.0;
    for l in 0..l_count {
        let (quad, lin) = match su_sides[l] {
            Side::Transmission => (&mut c_quad_t, &mut c_lin_t),
            Side::Reflection => (&mut c_quad_r, &mut c_lin_r),
        };
        let root = (1.0 + gamma[l]).sqrt();
        *lin = &*lin + &c_vectors[l][l].mapv(|z| z * root);
        constant += 2.0 * root * c_scalars[l][l].re - sigma_sq[l] * norm_sq(&beta[l]);
        for j in 0..l_count {
            *quad = &*quad + &outer(&c_vectors[l][j], &c_vectors[l][j]);
            *lin = &*lin - &c_vectors[l][j].mapv(|z| z * c_scalars[l][j]);
            constant -= c_scalars[l][j].norm_sqr();
        }
    }

    let mut b_k = Vec::with_capacity(pu_sides.len());
    let mut b_lin_k = Vec::with_capacity(pu_sides.len());
    let mut gamma_hat = Vec::with_capacity(pu_sides.len());
    let mut direct_leakage = Vec::with_capacity(pu_sides.len());
    for k in 0..pu_sides.len() {
        let g_k = &channels.g_pu[k];
        let dhat = &channels.dhat_pu[k];
        let mut quad = CMat::zeros((n, n));
        let mut lin = CVec::zeros(n);
        let mut leak = 0.0;
        for l in 0..l_count {
            // M_kl = G_k diag(G_s w_l): column n scaled by (G_s w_l)[n].
            let mut m_kl = g_k.clone();
            for (idx, mut col) in m_kl.columns_mut().into_iter().enumerate() {
                col.mapv_inplace(|z| z * gsw[l][idx]);
            }
            let u_kl = dhat.dot(&w[l]);
            quad = quad + crate::linalg::adjoint(&m_kl).dot(&m_kl);
            lin = lin + crate::linalg::adjoint(&m_kl).dot(&u_kl);
            leak += norm_sq(&u_kl);
        }
        b_k.push(quad);
        b_lin_k.push(lin);
        gamma_hat.push(gamma_k[k] - leak);
        direct_leakage.push(leak);
    }

    VSubproblem {
        n,
        c_quad_t,
        c_quad_r,
        c_lin_t,
        c_lin_r,
        b_k,
        b_lin_k,
        gamma_hat,
        direct_leakage,
        pu_sides: pu_sides.to_vec(),
        constant,
        c_scalars,
        c_vectors,
    }
}
