//! Sum-rate maximization for a STAR-RIS-aided MIMO cognitive-radio downlink.
//!
//! The library is organized around one optimization problem: choose secondary
//! base-station beamformers `w` and the transmission/reflection coefficients
//! of a simultaneously-transmitting-and-reflecting surface (STAR-RIS) to
//! maximize the secondary-network sum rate, subject to a transmit-power
//! budget and per-primary-user interference-temperature limits.
//!
//! Module map:
//! - [`scene`]: geometry, Rician channel generation, equivalent noise powers.
//! - [`star`]: STAR coefficient sets (independent and coupled phase models).
//! - [`metrics`]: aggregate channels, SINR, sum rate, interference
//!   temperature, and the Lagrangian-dual-transform surrogate objective.
//! - [`transforms`]: closed-form auxiliary updates and assembly of the two
//!   convex subproblems (beamformer step and surface step).
//! - [`conic`]: dense interior-point solvers (complex QCQP and a small SDP).
//! - [`sca_independent`]: successive convex approximation for the surface
//!   step under the independent phase model.
//! - [`pdd_coupled`]: penalty dual decomposition for the coupled phase model.
//! - [`bcd`]: outer block-coordinate descent and the baseline schemes.
//!
//! All internal math is in linear units (watts, meters) and natural
//! logarithms; conversion to dB/bits happens at the reporting boundary.

pub mod bcd;
pub mod conic;
pub mod linalg;
pub mod metrics;
pub mod pdd_coupled;
pub mod sca_independent;
pub mod scene;
pub mod star;
pub mod transforms;
