//! Joint transmit/receive hybrid beamforming for massive MIMO over-the-air
//! computation (AirComp).
//!
//! The library minimizes the computation MSE of an AirComp system where `K`
//! multi-antenna devices simultaneously transmit to an access point with
//! `N_r` antennas but only `N_rf <= N_r` RF chains. Transmit beamformers,
//! the constant-modulus analog combiner, and the digital combiner are
//! optimized in an alternating manner:
//!
//! - [`tx`] — per-device transmit beamforming in semi-closed form via
//!   Lagrange duality with bisection on the power multiplier.
//! - [`sca`] — analog combiner update by successive convex approximation on
//!   the phase vector.
//! - [`bcd`] — analog combiner update by entry-wise block coordinate descent
//!   with closed-form per-entry solutions.
//! - [`digital`] — closed-form sum-MMSE digital combiner.
//! - [`driver`] — the alternating optimization loop plus fully-digital
//!   baselines.
//! - [`asymptotics`] — closed-form large-`N_r` MSE predictors and their
//!   validation harness.
//! - [`experiment`] — Monte-Carlo sweep harness with CSV output (used by the
//!   `aircomp` CLI).
//!
//! All core math is generic over the real scalar type through the [`Real`]
//! trait; concrete `f64` aliases live at the crate root.

pub mod acceptance;
pub mod asymptotics;
pub mod bcd;
pub mod digital;
pub mod driver;
pub mod error;
pub mod experiment;
pub mod model;
pub mod scalar;
pub mod sca;
pub mod tx;

pub use error::{AircompError, Result};
pub use model::{
    AnalogCombiner, BeamformingState, ChannelSet, DigitalCombiner, SystemConfig, TxBeamformerSet,
};
pub use scalar::Real;

use nalgebra::Complex;

/// Dense complex matrix over real scalar `T`.
pub type CMat<T> = nalgebra::DMatrix<Complex<T>>;
/// Dense complex column vector over real scalar `T`.
pub type CVec<T> = nalgebra::DVector<Complex<T>>;
/// Dense real column vector.
pub type RVec<T> = nalgebra::DVector<T>;

pub type CMat64 = CMat<f64>;
pub type CVec64 = CVec<f64>;
pub type RVec64 = RVec<f64>;
pub type SystemConfig64 = SystemConfig<f64>;
pub type ChannelSet64 = ChannelSet<f64>;
pub type BeamformingState64 = BeamformingState<f64>;
pub type SolveTrace64 = driver::SolveTrace<f64>;
