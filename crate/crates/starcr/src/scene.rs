//! Simulation scene: system parameters, user geometry, Rician channel
//! generation, and equivalent noise powers.
//!
//! The layout is a two-network downlink. A primary base station (PBS) and a
//! secondary base station (SBS) sit on a line with a STAR-RIS between the
//! SBS and the users; secondary users (SUs) and primary users (PUs) lie on a
//! circle around the surface, split between its transmission side (beyond
//! the surface, as seen from the SBS) and its reflection side.
//! Primary-network transmissions are not materialized: their effect on the
//! SUs is folded into an equivalent per-user noise power.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use thiserror::Error;

use crate::linalg::{CMat, C64};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("distance must be positive, got {0}")]
    NonpositiveDistance(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Which side of the STAR-RIS a user occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Transmission side: the half-plane beyond the surface as seen from the SBS.
    Transmission,
    /// Reflection side: the half-plane containing the SBS.
    Reflection,
}

/// Convert a dBm power to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Convert a dB ratio to a linear ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Scenario scalars. All powers are linear watts, all gains linear ratios,
/// all distances meters; dBm/dB conversion happens at parse time.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    /// SBS antenna count.
    pub m_s: usize,
    /// PBS antenna count (only enters the noise model).
    pub m_p: usize,
    /// Antennas per SU.
    pub u_s: usize,
    /// Antennas per PU.
    pub u_p: usize,
    /// STAR-RIS element count.
    pub n: usize,
    /// Number of secondary users.
    pub l: usize,
    /// Number of primary users.
    pub k: usize,
    /// SBS transmit power budget, watts.
    pub p_s: f64,
    /// PBS transmit power, watts (interference source only).
    pub p_p: f64,
    /// Thermal noise power at each SU, watts.
    pub sigma_s_sq: f64,
    /// Interference-temperature threshold per PU, watts.
    pub gamma: Vec<f64>,
    /// Rician factor for all STAR-RIS-related links.
    pub kappa_r: f64,
    /// Rician factor for direct base-station-to-user links.
    pub kappa_d: f64,
    /// Reference path loss at distance 1 m, linear.
    pub c_0: f64,
    /// Path-loss exponent, SBS to STAR-RIS.
    pub alpha_sr: f64,
    /// Path-loss exponent, PBS to STAR-RIS.
    pub alpha_pr: f64,
    /// Path-loss exponent, STAR-RIS to users.
    pub alpha_ru: f64,
    /// Path-loss exponent, SBS to users.
    pub alpha_su: f64,
    /// Path-loss exponent, PBS to users.
    pub alpha_pu: f64,
    /// PBS position, meters.
    pub pbs_position: [f64; 2],
    /// SBS position, meters.
    pub sbs_position: [f64; 2],
    /// STAR-RIS position, meters.
    pub star_position: [f64; 2],
    /// Users are placed on this circle around the STAR-RIS, meters.
    pub user_radius: f64,
    /// If true, the equivalent-noise formula uses the PBS-to-RIS path loss
    /// instead of the printed SBS-to-RIS one (sensitivity switch).
    pub noise_uses_pbs_ris_loss: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            m_s: 4,
            m_p: 4,
            u_s: 2,
            u_p: 2,
            n: 8,
            l: 2,
            k: 4,
            p_s: dbm_to_watts(20.0),
            p_p: dbm_to_watts(30.0),
            sigma_s_sq: dbm_to_watts(-100.0),
            gamma: vec![dbm_to_watts(-90.0); 4],
            kappa_r: 5.0,
            kappa_d: 0.0,
            c_0: db_to_linear(-30.0),
            alpha_sr: 2.1,
            alpha_pr: 3.6,
            alpha_ru: 2.3,
            alpha_su: 3.9,
            alpha_pu: 3.9,
            pbs_position: [0.0, -50.0],
            sbs_position: [0.0, 0.0],
            star_position: [0.0, 30.0],
            user_radius: 10.0,
            noise_uses_pbs_ris_loss: false,
        }
    }
}

impl SystemConfig {
    /// Check the scenario-level invariants (positive counts, powers,
    /// exponents, radii; threshold list length). Generated layouts put the
    /// first floor(L/2) SUs and floor(K/2) PUs on the transmission side and
    /// the remainder on the reflection side.
    pub fn validate(&self) -> Result<(), SceneError> {
        let mut problems = Vec::new();
        if self.m_s == 0 || self.m_p == 0 || self.u_s == 0 || self.u_p == 0 {
            problems.push("antenna counts must be positive".to_string());
        }
        if self.l == 0 {
            problems.push("L must be positive".to_string());
        }
        if self.gamma.len() != self.k {
            problems.push(format!(
                "gamma must list one threshold per PU: expected {}, got {}",
                self.k,
                self.gamma.len()
            ));
        }
        if self.gamma.iter().any(|&g| g <= 0.0) {
            problems.push("every IT threshold must be positive".to_string());
        }
        if self.p_s < 0.0 || self.p_p < 0.0 {
            problems.push("powers must be nonnegative".to_string());
        }
        if self.sigma_s_sq <= 0.0 {
            problems.push("sigma_s_sq must be positive".to_string());
        }
        if self.c_0 <= 0.0 {
            problems.push("C_0 must be positive".to_string());
        }
        if self.kappa_r < 0.0 || self.kappa_d < 0.0 {
            problems.push("Rician factors must be nonnegative".to_string());
        }
        for (name, a) in [
            ("alpha_sr", self.alpha_sr),
            ("alpha_pr", self.alpha_pr),
            ("alpha_ru", self.alpha_ru),
            ("alpha_su", self.alpha_su),
            ("alpha_pu", self.alpha_pu),
        ] {
            if a <= 0.0 {
                problems.push(format!("{name} must be positive"));
            }
        }
        if self.user_radius <= 0.0 {
            problems.push("user_radius must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SceneError::InvalidConfig(problems.join("; ")))
        }
    }

    /// Replace every IT threshold with the same value.
    pub fn set_uniform_gamma(&mut self, value: f64) {
        self.gamma = vec![value; self.k];
    }
}

/// Free-space power-law path loss C_0 · d^(-alpha), linear.
pub fn path_loss(c_0: f64, d: f64, alpha: f64) -> Result<f64, SceneError> {
    if d <= 0.0 {
        return Err(SceneError::NonpositiveDistance(d));
    }
    Ok(c_0 * d.powf(-alpha))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// User placement and side assignment.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub su_positions: Vec<[f64; 2]>,
    pub pu_positions: Vec<[f64; 2]>,
    pub su_sides: Vec<Side>,
    pub pu_sides: Vec<Side>,
}

impl Geometry {
    /// Build a geometry from explicit positions and sides (no evenness
    /// requirement; used for hand-crafted instances).
    pub fn new(
        su_positions: Vec<[f64; 2]>,
        pu_positions: Vec<[f64; 2]>,
        su_sides: Vec<Side>,
        pu_sides: Vec<Side>,
    ) -> Result<Self, SceneError> {
        if su_positions.len() != su_sides.len() || pu_positions.len() != pu_sides.len() {
            return Err(SceneError::InvalidConfig(
                "positions and sides must have matching lengths".to_string(),
            ));
        }
        Ok(Geometry {
            su_positions,
            pu_positions,
            su_sides,
            pu_sides,
        })
    }

    /// Draw user positions on the circle of `user_radius` around the
    /// STAR-RIS with random angles, the first half of each user class on the
    /// transmission side (the half-plane away from the SBS), the second half
    /// on the reflection side. Deterministic in `seed`.
    pub fn generate(config: &SystemConfig, seed: u64) -> Geometry {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = config.star_position;
        let r = config.user_radius;
        // Transmission side is sampled with angles in (0, pi) relative to the
        // surface (positive local y), reflection side in (pi, 2 pi); the SBS
        // sits at negative local y by construction of the default layout.
        let place = |side: Side, rng: &mut ChaCha8Rng| -> [f64; 2] {
            let base: f64 = rng.gen::<f64>() * PI;
            let angle = match side {
                Side::Transmission => base,
                Side::Reflection => base + PI,
            };
            [center[0] + r * angle.cos(), center[1] + r * angle.sin()]
        };
        let mut su_positions = Vec::with_capacity(config.l);
        let mut su_sides = Vec::with_capacity(config.l);
        for i in 0..config.l {
            let side = if i < config.l / 2 {
                Side::Transmission
            } else {
                Side::Reflection
            };
            su_positions.push(place(side, &mut rng));
            su_sides.push(side);
        }
        let mut pu_positions = Vec::with_capacity(config.k);
        let mut pu_sides = Vec::with_capacity(config.k);
        for i in 0..config.k {
            let side = if i < config.k / 2 {
                Side::Transmission
            } else {
                Side::Reflection
            };
            pu_positions.push(place(side, &mut rng));
            pu_sides.push(side);
        }
        Geometry {
            su_positions,
            pu_positions,
            su_sides,
            pu_sides,
        }
    }

    pub fn su_count(&self) -> usize {
        self.su_positions.len()
    }

    pub fn pu_count(&self) -> usize {
        self.pu_positions.len()
    }
}

/// One Monte-Carlo draw of every channel in the scene.
///
/// PBS-side channels are not materialized; the PBS interference at the SUs
/// enters through `sigma_sq` (see [`equivalent_noise_power`]).
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// SBS -> SU l direct channel, U_s x M_s.
    pub d_su: Vec<CMat>,
    /// SBS -> PU k direct channel, U_p x M_s.
    pub dhat_pu: Vec<CMat>,
    /// SBS -> STAR-RIS channel, N x M_s.
    pub g_s: CMat,
    /// STAR-RIS -> SU l channel, U_s x N.
    pub g_su: Vec<CMat>,
    /// STAR-RIS -> PU k channel, U_p x N.
    pub g_pu: Vec<CMat>,
    /// Equivalent noise power per SU, watts.
    pub sigma_sq: Vec<f64>,
}

/// Uniform-linear-array steering vector with half-wavelength spacing for a
/// ray at angle `theta` from the array axis normal: entry k is
/// exp(j pi k sin(theta)).
fn steering(size: usize, theta: f64) -> Vec<C64> {
    (0..size)
        .map(|k| Complex64::from_polar(1.0, PI * k as f64 * theta.sin()))
        .collect()
}

/// Deterministic line-of-sight matrix for a link from `tx` to `rx`: the
/// outer product of the receive and transmit steering vectors evaluated at
/// the geometric departure/arrival angles. Every entry has unit modulus.
fn los_matrix(rx_size: usize, tx_size: usize, tx: [f64; 2], rx: [f64; 2]) -> CMat {
    let aod = (rx[1] - tx[1]).atan2(rx[0] - tx[0]);
    let aoa = (tx[1] - rx[1]).atan2(tx[0] - rx[0]);
    let a_rx = steering(rx_size, aoa);
    let a_tx = steering(tx_size, aod);
    Array2::from_shape_fn((rx_size, tx_size), |(i, j)| a_rx[i] * a_tx[j].conj())
}

/// One Rician draw: sqrt(PL * kappa/(1+kappa)) * H_los + sqrt(PL/(1+kappa)) * H_nlos,
/// with H_nlos entries i.i.d. circularly symmetric complex Gaussian, unit variance.
fn rician(pl: f64, kappa: f64, h_los: &CMat, rng: &mut ChaCha8Rng) -> CMat {
    let w_los = (pl * kappa / (1.0 + kappa)).sqrt();
    let w_nlos = (pl / (1.0 + kappa)).sqrt() / 2f64.sqrt();
    Array2::from_shape_fn(h_los.dim(), |idx| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        w_los * h_los[idx] + w_nlos * Complex64::new(re, im)
    })
}

/// Generate every channel for one trial. Identical (config, geometry, seed)
/// triples produce bit-identical output; the draw order is fixed as
/// G_s, then (D_l, G_l) per SU, then (Dhat_k, G_k) per PU.
pub fn generate_channels(
    config: &SystemConfig,
    geometry: &Geometry,
    seed: u64,
) -> Result<ChannelSet, SceneError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sbs = config.sbs_position;
    let star = config.star_position;

    let pl_sr = path_loss(config.c_0, dist(sbs, star), config.alpha_sr)?;
    let los_sr = los_matrix(config.n, config.m_s, sbs, star);
    let g_s = rician(pl_sr, config.kappa_r, &los_sr, &mut rng);

    let mut d_su = Vec::with_capacity(geometry.su_count());
    let mut g_su = Vec::with_capacity(geometry.su_count());
    for &pos in &geometry.su_positions {
        let pl_d = path_loss(config.c_0, dist(sbs, pos), config.alpha_su)?;
        let los_d = los_matrix(config.u_s, config.m_s, sbs, pos);
        d_su.push(rician(pl_d, config.kappa_d, &los_d, &mut rng));
        let pl_g = path_loss(config.c_0, dist(star, pos), config.alpha_ru)?;
        let los_g = los_matrix(config.u_s, config.n, star, pos);
        g_su.push(rician(pl_g, config.kappa_r, &los_g, &mut rng));
    }

    let mut dhat_pu = Vec::with_capacity(geometry.pu_count());
    let mut g_pu = Vec::with_capacity(geometry.pu_count());
    for &pos in &geometry.pu_positions {
        let pl_d = path_loss(config.c_0, dist(sbs, pos), config.alpha_su)?;
        let los_d = los_matrix(config.u_p, config.m_s, sbs, pos);
        dhat_pu.push(rician(pl_d, config.kappa_d, &los_d, &mut rng));
        let pl_g = path_loss(config.c_0, dist(star, pos), config.alpha_ru)?;
        let los_g = los_matrix(config.u_p, config.n, star, pos);
        g_pu.push(rician(pl_g, config.kappa_r, &los_g, &mut rng));
    }

    let sigma_sq = (0..geometry.su_count())
        .map(|l| equivalent_noise_power(config, geometry, l))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(ChannelSet {
        d_su,
        dhat_pu,
        g_s,
        g_su,
        g_pu,
        sigma_sq,
    })
}

/// Equivalent noise power at SU `su`: thermal noise plus the primary
/// network's interference, sigma_s^2 + P_p (PL_1 + PL_2) with PL_1 the
/// SBS-to-RIS path loss (or PBS-to-RIS when `noise_uses_pbs_ris_loss` is
/// set) and PL_2 the RIS-to-user path loss.
pub fn equivalent_noise_power(
    config: &SystemConfig,
    geometry: &Geometry,
    su: usize,
) -> Result<f64, SceneError> {
    let star = config.star_position;
    let first_hop = if config.noise_uses_pbs_ris_loss {
        path_loss(config.c_0, dist(config.pbs_position, star), config.alpha_pr)?
    } else {
        path_loss(config.c_0, dist(config.sbs_position, star), config.alpha_sr)?
    };
    let second_hop = path_loss(
        config.c_0,
        dist(star, geometry.su_positions[su]),
        config.alpha_ru,
    )?;
    Ok(config.sigma_s_sq + config.p_p * (first_hop + second_hop))
}
