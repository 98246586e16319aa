//! Physical-layer quantities: aggregate channels, per-user SINR, sum rate,
//! interference temperature, and the Lagrangian-dual-transform surrogate.
//!
//! The surrogate objective f_ldt is the workhorse of the block-coordinate
//! solver: for fixed beamformers and surface coefficients it is maximized in
//! closed form over the auxiliary vector gamma, where its value collapses to
//! the true sum rate (in nats). All logs here are natural; conversion to
//! bits happens in the reporting layer.

use crate::linalg::{cdot, cholesky, cholesky_solve, norm_sq, CMat, CVec};
use crate::scene::{ChannelSet, Side};
use crate::star::StarVectors;

/// Per-SU transmit beamformers (each of length M_s). Feasible sets carry
/// sum of squared norms at most P_s.
pub type Beamformers = Vec<CVec>;

/// Total transmit power of a beamformer set.
pub fn total_power(w: &Beamformers) -> f64 {
    w.iter().map(norm_sq).sum()
}

/// Auxiliary state of the LDT/CQT reformulation.
#[derive(Debug, Clone)]
pub struct AuxState {
    /// Per-SU SINR surrogate, nonnegative.
    pub gamma: Vec<f64>,
    /// Per-SU beamformer-step auxiliary vector (length U_s).
    pub alpha: Vec<CVec>,
    /// Per-SU surface-step auxiliary vector (length U_s).
    pub beta: Vec<CVec>,
}

/// Aggregate channel H_l = D_l + G_l Phi G_s for an explicit diagonal Phi.
pub fn aggregate_channel(d: &CMat, g_u: &CMat, phi: &CMat, g_s: &CMat) -> CMat {
    d + &g_u.dot(phi).dot(g_s)
}

/// Aggregate channel using the surface coefficient vector directly:
/// D + G_u diag(v) G_s, evaluated by row-scaling G_s.
pub fn aggregate_channel_v(d: &CMat, g_u: &CMat, v: &CVec, g_s: &CMat) -> CMat {
    let mut scaled = g_s.clone();
    for (n, mut row) in scaled.outer_iter_mut().enumerate() {
        row.mapv_inplace(|z| v[n] * z);
    }
    d + &g_u.dot(&scaled)
}

/// Aggregate channels for every SU given both surface vectors and the side
/// assignment.
pub fn aggregate_channels_all(
    channels: &ChannelSet,
    su_sides: &[Side],
    vectors: &StarVectors,
) -> Vec<CMat> {
    channels
        .d_su
        .iter()
        .zip(&channels.g_su)
        .zip(su_sides)
        .map(|((d, g), side)| {
            let v = match side {
                Side::Transmission => &vectors.v_t,
                Side::Reflection => &vectors.v_r,
            };
            aggregate_channel_v(d, g, v, &channels.g_s)
        })
        .collect()
}

/// Interference-plus-noise matrix at SU `l`:
/// sum over j (excluding `exclude`) of (H_l w_j)(H_l w_j)^H + sigma^2 I.
fn noise_plus_interference(
    h_l: &CMat,
    w: &Beamformers,
    sigma_sq: f64,
    exclude: Option<usize>,
) -> CMat {
    let u = h_l.nrows();
    let mut j_mat = CMat::eye(u).mapv(|z| z * sigma_sq);
    for (j, w_j) in w.iter().enumerate() {
        if Some(j) == exclude {
            continue;
        }
        let hw = h_l.dot(w_j);
        for a in 0..u {
            for b in 0..u {
                j_mat[(a, b)] += hw[a] * hw[b].conj();
            }
        }
    }
    j_mat
}

/// Received SINR of SU `l`:
/// w_l^H H_l^H (sum_{j != l} H_l w_j w_j^H H_l^H + sigma^2 I)^{-1} H_l w_l.
///
/// The inner matrix is Hermitian positive definite for sigma^2 > 0; it is
/// factored, never inverted.
pub fn sinr(l: usize, h: &[CMat], w: &Beamformers, sigma_sq: f64) -> f64 {
    assert!(sigma_sq > 0.0, "noise power must be positive");
    let h_l = &h[l];
    let hw = h_l.dot(&w[l]);
    let j_mat = noise_plus_interference(h_l, w, sigma_sq, Some(l));
    let fac = cholesky(&j_mat).expect("interference-plus-noise matrix is positive definite");
    let x = cholesky_solve(&fac, &hw);
    cdot(&hw, &x).re.max(0.0)
}

/// Secondary-network sum rate in nats: sum over SUs of ln(1 + SINR_l).
pub fn sum_rate(h: &[CMat], w: &Beamformers, sigma_sq: &[f64]) -> f64 {
    (0..h.len())
        .map(|l| (1.0 + sinr(l, h, w, sigma_sq[l])).ln())
        .sum()
}

/// Interference temperature at a PU with direct channel `dhat_k` and
/// surface channel `g_k`: sum over SUs of the received secondary power
/// through T_k = Dhat_k + G_k diag(v) G_s.
pub fn interference_temperature_v(
    dhat_k: &CMat,
    g_k: &CMat,
    v: &CVec,
    g_s: &CMat,
    w: &Beamformers,
) -> f64 {
    let t_k = aggregate_channel_v(dhat_k, g_k, v, g_s);
    w.iter().map(|w_l| norm_sq(&t_k.dot(w_l))).sum()
}

/// Interference temperature with an explicit diagonal Phi matrix.
pub fn interference_temperature(
    dhat_k: &CMat,
    g_k: &CMat,
    phi: &CMat,
    g_s: &CMat,
    w: &Beamformers,
) -> f64 {
    let t_k = aggregate_channel(dhat_k, g_k, phi, g_s);
    w.iter().map(|w_l| norm_sq(&t_k.dot(w_l))).sum()
}

/// Interference temperatures at every PU for a full surface state.
pub fn interference_temperatures_all(
    channels: &ChannelSet,
    pu_sides: &[Side],
    vectors: &StarVectors,
    w: &Beamformers,
) -> Vec<f64> {
    channels
        .dhat_pu
        .iter()
        .zip(&channels.g_pu)
        .zip(pu_sides)
        .map(|((dhat, g), side)| {
            let v = match side {
                Side::Transmission => &vectors.v_t,
                Side::Reflection => &vectors.v_r,
            };
            interference_temperature_v(dhat, g, v, &channels.g_s, w)
        })
        .collect()
}

/// The quadratic-over-linear term t_l = w_l^H H_l^H J_l^{-1} H_l w_l with
/// J_l including the own-signal term. Analytically t_l < 1.
pub fn own_signal_ratio(l: usize, h: &[CMat], w: &Beamformers, sigma_sq: f64) -> f64 {
    let h_l = &h[l];
    let hw = h_l.dot(&w[l]);
    let j_mat = noise_plus_interference(h_l, w, sigma_sq, None);
    let fac = cholesky(&j_mat).expect("signal-plus-noise matrix is positive definite");
    let x = cholesky_solve(&fac, &hw);
    cdot(&hw, &x).re.max(0.0)
}

/// Surrogate objective of the reformulated sum-rate problem:
/// sum_l [ ln(1 + gamma_l) - gamma_l + (1 + gamma_l) t_l ]
/// with t_l = w_l^H H_l^H J_l^{-1} H_l w_l (J_l includes the own signal).
pub fn f_ldt(gamma: &[f64], w: &Beamformers, h: &[CMat], sigma_sq: &[f64]) -> f64 {
    (0..h.len())
        .map(|l| {
            let t = own_signal_ratio(l, h, w, sigma_sq[l]);
            (1.0 + gamma[l]).ln() - gamma[l] + (1.0 + gamma[l]) * t
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{inf_norm, C64};
    use crate::star::diag;
    use approx::assert_relative_eq;
    use ndarray::{arr1, arr2, Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rand_cmat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
        Array2::from_shape_fn((rows, cols), |_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    fn rand_cvec(rng: &mut ChaCha8Rng, n: usize) -> CVec {
        Array1::from_shape_fn(n, |_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    #[test]
    fn aggregate_channel_reduces_to_direct_link_for_zero_phi() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = rand_cmat(&mut rng, 2, 3);
        let g_u = rand_cmat(&mut rng, 2, 4);
        let g_s = rand_cmat(&mut rng, 4, 3);
        let phi = CMat::zeros((4, 4));
        assert_eq!(aggregate_channel(&d, &g_u, &phi, &g_s), d);
    }

    #[test]
    fn aggregate_channel_identity_phi_is_cascade() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g_u = rand_cmat(&mut rng, 2, 4);
        let g_s = rand_cmat(&mut rng, 4, 3);
        let d = CMat::zeros((2, 3));
        let h = aggregate_channel(&d, &g_u, &CMat::eye(4), &g_s);
        let expect = g_u.dot(&g_s);
        assert!(inf_norm(&(&h - &expect).iter().cloned().collect::<Array1<_>>()) < 1e-14);
    }

    #[test]
    fn vector_path_matches_matrix_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = rand_cmat(&mut rng, 3, 5);
        let g_u = rand_cmat(&mut rng, 3, 6);
        let g_s = rand_cmat(&mut rng, 6, 5);
        let v = rand_cvec(&mut rng, 6);
        let via_v = aggregate_channel_v(&d, &g_u, &v, &g_s);
        let via_m = aggregate_channel(&d, &g_u, &diag(&v), &g_s);
        let diff: Array1<C64> = (&via_v - &via_m).iter().cloned().collect();
        assert!(inf_norm(&diff) < 1e-13);
    }

    #[test]
    fn sinr_zero_beamformer_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = vec![rand_cmat(&mut rng, 2, 3), rand_cmat(&mut rng, 2, 3)];
        let w = vec![CVec::zeros(3), rand_cvec(&mut rng, 3)];
        assert_eq!(sinr(0, &h, &w, 1e-3), 0.0);
    }

    #[test]
    fn scalar_single_user_sinr_is_snr() {
        let h = vec![arr2(&[[c(0.3, -0.4)]])];
        let w = vec![arr1(&[c(2.0, 1.0)])];
        let sigma = 0.05;
        let expected = (c(0.3, -0.4) * c(2.0, 1.0)).norm_sqr() / sigma;
        assert_relative_eq!(sinr(0, &h, &w, sigma), expected, max_relative = 1e-12);
    }

    #[test]
    fn sum_rate_of_zero_beamformers_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = vec![rand_cmat(&mut rng, 2, 3); 2];
        let w = vec![CVec::zeros(3); 2];
        assert_eq!(sum_rate(&h, &w, &[1e-3, 1e-3]), 0.0);
    }

    #[test]
    fn single_user_sum_rate_matches_closed_form() {
        let h = vec![arr2(&[[c(1.0, 2.0)]])];
        let w = vec![arr1(&[c(0.5, 0.0)])];
        let sigma = 0.1;
        let snr = (c(1.0, 2.0) * c(0.5, 0.0)).norm_sqr() / sigma;
        assert_relative_eq!(
            sum_rate(&h, &w, &[sigma]),
            (1.0 + snr).ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn interference_temperature_zero_beamformers() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dhat = rand_cmat(&mut rng, 2, 3);
        let g_k = rand_cmat(&mut rng, 2, 4);
        let g_s = rand_cmat(&mut rng, 4, 3);
        let v = rand_cvec(&mut rng, 4);
        let w = vec![CVec::zeros(3); 2];
        assert_eq!(interference_temperature_v(&dhat, &g_k, &v, &g_s, &w), 0.0);
    }

    #[test]
    fn interference_temperature_zero_phi_is_direct_leakage() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dhat = rand_cmat(&mut rng, 2, 3);
        let g_k = rand_cmat(&mut rng, 2, 4);
        let g_s = rand_cmat(&mut rng, 4, 3);
        let w = vec![rand_cvec(&mut rng, 3), rand_cvec(&mut rng, 3)];
        let v = CVec::zeros(4);
        let direct: f64 = w.iter().map(|w_l| norm_sq(&dhat.dot(w_l))).sum();
        assert_relative_eq!(
            interference_temperature_v(&dhat, &g_k, &v, &g_s, &w),
            direct,
            max_relative = 1e-12
        );
    }

    #[test]
    fn f_ldt_vanishes_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = vec![rand_cmat(&mut rng, 2, 3); 2];
        let w = vec![CVec::zeros(3); 2];
        assert_eq!(f_ldt(&[0.0, 0.0], &w, &h, &[1e-3, 1e-3]), 0.0);
    }

    #[test]
    fn woodbury_identity_holds() {
        // (1 + w^H H^H (J - own)^{-1} H w)^{-1} = 1 - w^H H^H J^{-1} H w.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let h = vec![rand_cmat(&mut rng, 3, 4), rand_cmat(&mut rng, 3, 4)];
            let w = vec![rand_cvec(&mut rng, 4), rand_cvec(&mut rng, 4)];
            let sigma = 0.3;
            let s = sinr(0, &h, &w, sigma);
            let t = own_signal_ratio(0, &h, &w, sigma);
            assert_relative_eq!(1.0 / (1.0 + s), 1.0 - t, max_relative = 1e-10);
        }
    }

    #[test]
    fn sum_rate_invariant_under_common_beamformer_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let h = vec![rand_cmat(&mut rng, 2, 3), rand_cmat(&mut rng, 2, 3)];
        let w: Beamformers = vec![rand_cvec(&mut rng, 3), rand_cvec(&mut rng, 3)];
        let rot = C64::from_polar(1.0, 1.234);
        let w_rot: Beamformers = w.iter().map(|x| x.mapv(|z| z * rot)).collect();
        let sig = [0.2, 0.4];
        assert_relative_eq!(
            sum_rate(&h, &w, &sig),
            sum_rate(&h, &w_rot, &sig),
            max_relative = 1e-12
        );
    }
}
