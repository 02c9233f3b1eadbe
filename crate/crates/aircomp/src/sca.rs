//! Analog combiner update by successive convex approximation on the phase
//! vector.
//!
//! The MSE, seen as a function of the phases `theta` of `U_rf`, is minimized
//! through a proximal first-order surrogate: each iteration takes the step
//! `theta - gamma / (2 tau)` and wraps the result back to `(-pi, pi]`.

use crate::driver::{SolveTrace, Termination};
use crate::error::Result;
use crate::model::{build_quadratics, phi_offset, phi_value, wrap_phase};
use crate::scalar::Real;
use crate::{
    AnalogCombiner, CMat, CVec, ChannelSet, DigitalCombiner, RVec, SystemConfig, TxBeamformerSet,
};
use nalgebra::Complex;

/// SCA controls: proximal weight, stopping threshold, iteration cap.
#[derive(Debug, Clone)]
pub struct ScaConfig<T: Real> {
    /// Proximal weight `tau` (step size is `1 / (2 tau)`).
    pub tau: T,
    /// Stop when the objective decrease falls below `eps`.
    pub eps: T,
    pub max_iters: usize,
}

impl<T: Real> Default for ScaConfig<T> {
    fn default() -> Self {
        Self {
            tau: T::of(0.2),
            eps: T::of(1e-3),
            max_iters: 500,
        }
    }
}

/// Gradient of the MSE with respect to the phase vector (column-major
/// layout matching [`AnalogCombiner::phases`]).
pub fn sca_gradient<T: Real>(
    cfg: &SystemConfig<T>,
    ch: &ChannelSet<T>,
    tx: &TxBeamformerSet<T>,
    rf: &AnalogCombiner<T>,
    bb: &DigitalCombiner<T>,
) -> Result<RVec<T>> {
    let (a, b, c) = build_quadratics(cfg, ch, tx, bb.matrix());
    Ok(gradient_with(&a, &b, &c, rf.matrix()))
}

fn gradient_with<T: Real>(a: &CMat<T>, b: &CMat<T>, c: &CMat<T>, u: &CMat<T>) -> RVec<T> {
    // F = A U C - B; d MSE / d theta_ij = 2 Im[conj(U_ij) F_ij]
    let f = a * u * c - b;
    let two = T::of(2.0);
    RVec::from_iterator(
        u.len(),
        u.iter().zip(f.iter()).map(|(x, y)| two * (x.conj() * y).im),
    )
}

/// Largest-eigenvalue estimate of a Hermitian PSD matrix by fixed-iteration
/// power iteration (deterministic all-ones start).
fn spectral_bound<T: Real>(m: &CMat<T>) -> T {
    let n = m.nrows();
    if n == 0 {
        return T::zero();
    }
    let mut v = CVec::<T>::from_element(n, Complex::new(T::one(), T::zero()));
    v /= Complex::new(v.norm(), T::zero());
    let mut lambda = T::zero();
    for _ in 0..30 {
        let w = m * &v;
        let norm = w.norm();
        if norm <= T::zero() || !norm.finite() {
            return lambda;
        }
        lambda = norm;
        v = w / Complex::new(norm, T::zero());
    }
    lambda
}

/// Proximal weight actually used by [`solve_analog_sca`]: the configured
/// `tau`, clamped below by half the curvature estimate
/// `lambda_max(A) lambda_max(C)` of the quadratic form. A fixed `tau` makes
/// the step `theta - gamma/(2 tau)` diverge whenever `2 tau` is small
/// against the curvature, so the weight has to be chosen relative to the
/// problem scale; `L/2` is the classical choice that turns the surrogate
/// into a local upper bound with step `1/L`.
pub fn effective_tau<T: Real>(tau: T, a: &CMat<T>, c: &CMat<T>) -> T {
    let scale = spectral_bound(a) * spectral_bound(c) / (T::one() + T::one());
    if scale > tau {
        scale
    } else {
        tau
    }
}

/// One proximal step on the phases, wrapped to `(-pi, pi]`.
pub fn sca_step<T: Real>(theta: &RVec<T>, gamma: &RVec<T>, tau: T) -> RVec<T> {
    let inv = T::one() / (tau + tau);
    RVec::from_iterator(
        theta.len(),
        theta
            .iter()
            .zip(gamma.iter())
            .map(|(&t, &g)| wrap_phase(t - g * inv)),
    )
}

/// Iterate gradient steps on the phase vector until the MSE decrease drops
/// below `eps` (or the iteration cap is hit). A step that would increase the
/// objective is rejected, so the returned trace is non-increasing.
pub fn solve_analog_sca<T: Real>(
    cfg: &SystemConfig<T>,
    ch: &ChannelSet<T>,
    tx: &TxBeamformerSet<T>,
    rf_init: &AnalogCombiner<T>,
    bb: &DigitalCombiner<T>,
    sca_cfg: &ScaConfig<T>,
) -> Result<(AnalogCombiner<T>, SolveTrace<T>)> {
    let start = std::time::Instant::now();
    let (a, b, c) = build_quadratics(cfg, ch, tx, bb.matrix());
    let offset = phi_offset(cfg);

    let tau = effective_tau(sca_cfg.tau, &a, &c);
    let mut rf = rf_init.clone();
    let mut obj = phi_value(&a, &b, &c, rf.matrix()) + offset;
    let mut history = vec![obj];
    let mut termination = Termination::MaxIters;
    let mut iters = 0usize;

    for _ in 0..sca_cfg.max_iters {
        iters += 1;
        let gamma = gradient_with(&a, &b, &c, rf.matrix());
        let theta_next = sca_step(rf.phases(), &gamma, tau);
        let rf_next = AnalogCombiner::from_phases(cfg.rx_antennas, cfg.rf_chains, theta_next)?;
        let obj_next = phi_value(&a, &b, &c, rf_next.matrix()) + offset;
        if !obj_next.finite() {
            termination = Termination::AbortedNonFinite;
            break;
        }
        let decrease = obj - obj_next;
        if decrease >= T::zero() {
            rf = rf_next;
            obj = obj_next;
            history.push(obj);
        }
        if decrease < sca_cfg.eps {
            termination = Termination::ConvergedEps;
            break;
        }
    }

    let trace = SolveTrace {
        mse_history: history,
        termination,
        outer_iters: iters,
        wall_time: start.elapsed().as_secs_f64(),
        tx_reports: Vec::new(),
    };
    Ok((rf, trace))
}
