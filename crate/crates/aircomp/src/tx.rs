//! Per-device transmit beamforming in semi-closed form.
//!
//! Each device's subproblem `min ||U^H H_k V_k - I||_F^2` subject to
//! `tr(V_k V_k^H) <= P` is convex; the optimum is
//! `V_k = (M_k + mu_k I)^{-1} H_k^H U` with `M_k = H_k^H U U^H H_k` and the
//! multiplier `mu_k` found by bisection on the power equation when the
//! budget is active.

use nalgebra::{Complex, SymmetricEigen};

use crate::error::{AircompError, Result};
use crate::model::{tx_set_unchecked, ChannelSet, SystemConfig, TxBeamformerSet, POWER_TOL};
use crate::scalar::Real;
use crate::{AnalogCombiner, CMat, DigitalCombiner};

/// Relative tolerance on the power equation solved by bisection.
pub const MU_TOL: f64 = 1e-8;

/// Eigenvalues below `RANK_TOL * lambda_max` are treated as zero.
const RANK_TOL: f64 = 1e-12;

/// Per-device solve diagnostics.
#[derive(Debug, Clone)]
pub struct TxDeviceReport<T: Real> {
    /// Lagrange multiplier of the power constraint.
    pub mu: T,
    /// `tr(V_k V_k^H)` of the returned beamformer.
    pub power_used: T,
    pub bisection_iters: u32,
    /// `H_k^H U_rf U_bb = 0`: the objective does not depend on `V_k`, which
    /// was left unchanged.
    pub degenerate: bool,
}

/// Diagnostics for one transmit-beamforming update (all devices).
#[derive(Debug, Clone)]
pub struct TxSolveReport<T: Real> {
    pub devices: Vec<TxDeviceReport<T>>,
}

impl<T: Real> TxSolveReport<T> {
    /// KKT certificate: either the constraint is inactive with `mu = 0`, or
    /// the budget is met with equality (complementary slackness).
    pub fn kkt_satisfied(&self, power_budget: T) -> bool {
        self.devices.iter().all(|d| {
            let inactive = d.mu <= T::of(1e-12)
                && d.power_used <= power_budget * (T::one() + T::of(POWER_TOL));
            let active = ((d.power_used - power_budget) / power_budget).abs() <= T::of(1e-6);
            inactive || active
        })
    }
}

/// Optimal transmit beamformers for fixed receive beamforming.
pub fn solve_tx<T: Real>(
    cfg: &SystemConfig<T>,
    ch: &ChannelSet<T>,
    tx: &TxBeamformerSet<T>,
    rf: &AnalogCombiner<T>,
    bb: &DigitalCombiner<T>,
) -> Result<(TxBeamformerSet<T>, TxSolveReport<T>)> {
    let u_eff = rf.matrix() * bb.matrix();
    solve_tx_effective(cfg, ch, tx, &u_eff)
}

/// As [`solve_tx`] but for an explicit effective receive matrix `U`
/// (`N_r x L`); also used by the fully-digital baselines.
pub fn solve_tx_effective<T: Real>(
    cfg: &SystemConfig<T>,
    ch: &ChannelSet<T>,
    tx: &TxBeamformerSet<T>,
    u_eff: &CMat<T>,
) -> Result<(TxBeamformerSet<T>, TxSolveReport<T>)> {
    if u_eff.nrows() != cfg.rx_antennas || u_eff.ncols() != cfg.functions {
        return Err(AircompError::DimensionMismatch {
            name: "effective combiner",
            expected: format!("{}x{}", cfg.rx_antennas, cfg.functions),
            actual: format!("{}x{}", u_eff.nrows(), u_eff.ncols()),
        });
    }
    let mut beamformers = Vec::with_capacity(cfg.devices);
    let mut reports = Vec::with_capacity(cfg.devices);
    for k in 0..cfg.devices {
        let (v, report) = solve_device(cfg, ch.channel(k), tx.beamformer(k), u_eff)?;
        beamformers.push(v);
        reports.push(report);
    }
    Ok((tx_set_unchecked(beamformers), TxSolveReport { devices: reports }))
}

/// Per-device objective `||U^H H V - I||_F^2` expressed through `G = H^H U`.
fn device_objective<T: Real>(g: &CMat<T>, v: &CMat<T>) -> T {
    let mut e = g.adjoint() * v;
    for d in 0..e.nrows() {
        e[(d, d)] -= Complex::new(T::one(), T::zero());
    }
    e.norm_squared()
}

fn solve_device<T: Real>(
    cfg: &SystemConfig<T>,
    h: &CMat<T>,
    v_old: &CMat<T>,
    u_eff: &CMat<T>,
) -> Result<(CMat<T>, TxDeviceReport<T>)> {
    let g = h.adjoint() * u_eff; // N_t x L
    if g.norm_squared() <= T::of(1e-28) {
        return Ok((
            v_old.clone(),
            TxDeviceReport {
                mu: T::zero(),
                power_used: v_old.norm_squared(),
                bisection_iters: 0,
                degenerate: true,
            },
        ));
    }

    let m = &g * g.adjoint();
    let eig = SymmetricEigen::new(m);
    let lambda_max = eig
        .eigenvalues
        .iter()
        .fold(T::zero(), |acc, &x| if x > acc { x } else { acc });
    let rank_tol = lambda_max * T::of(RANK_TOL);
    let lambdas: Vec<T> = eig
        .eigenvalues
        .iter()
        .map(|&x| if x > rank_tol { x } else { T::zero() })
        .collect();
    let w = eig.eigenvectors.adjoint() * &g; // eigen-basis image of G
    let weights: Vec<T> = (0..w.nrows()).map(|i| w.row(i).norm_squared()).collect();

    // minimum-norm unconstrained solution (pseudo-inverse on zero eigenvalues)
    let power_at = |mu: T| -> T {
        lambdas
            .iter()
            .zip(&weights)
            .map(|(&l, &wi)| {
                if l == T::zero() && mu == T::zero() {
                    T::zero()
                } else {
                    let d = l + mu;
                    wi / (d * d)
                }
            })
            .fold(T::zero(), |a, b| a + b)
    };

    let p0 = power_at(T::zero());
    let (mu, iters) = if p0 <= cfg.power {
        (T::zero(), 0)
    } else {
        bisect_mu(power_at, cfg.power, T::of(MU_TOL))?
    };

    // V = E diag(1/(lambda + mu)) E^H G, with zero weight on the null space
    // when mu = 0
    let mut scaled = w;
    for i in 0..scaled.nrows() {
        let l = lambdas[i];
        let f = if l == T::zero() && mu == T::zero() {
            T::zero()
        } else {
            T::one() / (l + mu)
        };
        let f = Complex::new(f, T::zero());
        for j in 0..scaled.ncols() {
            scaled[(i, j)] *= f;
        }
    }
    let mut v = &eig.eigenvectors * scaled;
    if mu > T::zero() {
        // bisection meets the power equation only to MU_TOL; project exactly
        // onto the budget so feasibility is never violated
        let power = v.norm_squared();
        if power > cfg.power {
            v *= Complex::new((cfg.power / power).sqrt(), T::zero());
        }
    }

    // Exact block minimization cannot increase the per-device objective;
    // keep the previous feasible beamformer if numerics ever disagree.
    let obj_new = device_objective(&g, &v);
    let obj_old = device_objective(&g, v_old);
    if obj_new > obj_old + T::of(1e-10) * (T::one() + obj_old) {
        return Ok((
            v_old.clone(),
            TxDeviceReport {
                mu: T::zero(),
                power_used: v_old.norm_squared(),
                bisection_iters: iters,
                degenerate: false,
            },
        ));
    }

    let power_used = v.norm_squared();
    Ok((
        v,
        TxDeviceReport {
            mu,
            power_used,
            bisection_iters: iters,
            degenerate: false,
        },
    ))
}

/// Bisection on a strictly decreasing power map `mu -> tr(V(mu) V(mu)^H)`.
///
/// Returns `mu` with `|power_fn(mu) - p| / p <= tol`. The bracket starts at
/// `[0, 1]` and the upper bound doubles until `power_fn(upper) < p`.
pub fn bisect_mu<T: Real>(power_fn: impl Fn(T) -> T, p: T, tol: T) -> Result<(T, u32)> {
    let f0 = power_fn(T::zero());
    if !f0.finite() {
        return Err(AircompError::Numerical(
            "power function non-finite at mu = 0".into(),
        ));
    }
    if f0 <= p {
        return Ok((T::zero(), 0));
    }
    let mut iters = 0u32;
    let mut hi = T::one();
    loop {
        let fhi = power_fn(hi);
        if !fhi.finite() {
            return Err(AircompError::Numerical(format!(
                "power function non-finite at mu = {}",
                hi.as_f64()
            )));
        }
        if fhi < p {
            break;
        }
        hi *= T::of(2.0);
        iters += 1;
        if hi.as_f64() > 1e300 {
            return Err(AircompError::Numerical(
                "bisection bracket growth exceeded 1e300".into(),
            ));
        }
    }
    let mut lo = T::zero();
    let mut mid = hi;
    for _ in 0..500 {
        mid = (lo + hi) * T::of(0.5);
        let fm = power_fn(mid);
        if !fm.finite() {
            return Err(AircompError::Numerical(format!(
                "power function non-finite in bracket [{}, {}]",
                lo.as_f64(),
                hi.as_f64()
            )));
        }
        iters += 1;
        if ((fm - p) / p).abs() <= tol {
            return Ok((mid, iters));
        }
        if fm > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= T::of(f64::EPSILON) * hi {
            break;
        }
    }
    Ok((mid, iters))
}
