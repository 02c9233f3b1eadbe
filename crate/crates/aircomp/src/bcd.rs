//! Entry-wise analog combiner update with closed-form per-entry solutions.
//!
//! Minimizes `phi(U_rf) = tr(U_rf^H A U_rf C) - 2 Re tr(U_rf^H B)` one
//! unit-modulus entry at a time; the per-entry optimum is `b / |b|` and the
//! product `Q = A U_rf C` is maintained by rank-one updates.

use nalgebra::{Complex, ComplexField};

use crate::driver::{SolveTrace, Termination};
use crate::error::Result;
use crate::model::{build_quadratics, phi_offset, phi_value};
use crate::scalar::Real;
use crate::{AnalogCombiner, CMat, ChannelSet, DigitalCombiner, SystemConfig, TxBeamformerSet};

/// Relative drift of `Q` from `A U_rf C` that triggers a full refresh.
const Q_REFRESH_TOL: f64 = 1e-8;

/// Entries with `|b|` below this are left unchanged (any unit-modulus value
/// is optimal).
const B_TIE_TOL: f64 = 1e-14;

/// Cached quadratic-form data for the entry-wise sweeps.
#[derive(Debug, Clone)]
pub struct BcdWorkspace<T: Real> {
    /// `sum_k H_k V_k V_k^H H_k^H + sigma^2 I` (Hermitian positive definite).
    pub a: CMat<T>,
    /// `sum_k H_k V_k U_bb^H`.
    pub b: CMat<T>,
    /// `U_bb U_bb^H` (Hermitian positive semidefinite).
    pub c: CMat<T>,
    /// Running product `A U_rf C`.
    pub q: CMat<T>,
}

/// Build the workspace for the current variables.
pub fn bcd_build_workspace<T: Real>(
    cfg: &SystemConfig<T>,
    ch: &ChannelSet<T>,
    tx: &TxBeamformerSet<T>,
    rf: &AnalogCombiner<T>,
    bb: &DigitalCombiner<T>,
) -> BcdWorkspace<T> {
    let (a, b, c) = build_quadratics(cfg, ch, tx, bb.matrix());
    let q = &a * rf.matrix() * &c;
    BcdWorkspace { a, b, c, q }
}

/// `phi(U_rf)`; differs from the MSE by the `U_rf`-independent constant
/// `K * L`.
pub fn bcd_phi<T: Real>(ws: &BcdWorkspace<T>, rf: &AnalogCombiner<T>) -> T {
    phi_value(&ws.a, &ws.b, &ws.c, rf.matrix())
}

/// The linear coefficient of entry `(i, j)`:
/// `b = A(i,i) U_rf(i,j) C(j,j) - Q(i,j) + B(i,j)`.
pub fn bcd_entry_b<T: Real>(
    ws: &BcdWorkspace<T>,
    rf: &AnalogCombiner<T>,
    i: usize,
    j: usize,
) -> Complex<T> {
    ws.a[(i, i)] * rf.matrix()[(i, j)] * ws.c[(j, j)] - ws.q[(i, j)] + ws.b[(i, j)]
}

/// Exact per-entry minimization: set `U_rf(i,j) = b/|b|` and apply the
/// rank-one update to `Q`. Leaves the entry unchanged on a degenerate tie.
pub fn bcd_entry_update<T: Real>(
    ws: &mut BcdWorkspace<T>,
    rf: &mut AnalogCombiner<T>,
    i: usize,
    j: usize,
) {
    let b = bcd_entry_b(ws, rf, i, j);
    let mag = b.modulus();
    if mag < T::of(B_TIE_TOL) {
        return;
    }
    let x = b.unscale(mag);
    let old = rf.matrix()[(i, j)];
    let delta = x - old;
    // Q += delta * A(:, i) C(j, :)
    let nr = ws.q.nrows();
    let nrf = ws.q.ncols();
    for jj in 0..nrf {
        let cjj = delta * ws.c[(j, jj)];
        for ii in 0..nr {
            ws.q[(ii, jj)] += ws.a[(ii, i)] * cjj;
        }
    }
    rf.set_entry(i, j, x);
}

/// Full sweeps over all entries until the per-sweep MSE decrease falls
/// below `eps` or `max_sweeps` is reached.
pub fn solve_analog_bcd<T: Real>(
    cfg: &SystemConfig<T>,
    ch: &ChannelSet<T>,
    tx: &TxBeamformerSet<T>,
    rf_init: &AnalogCombiner<T>,
    bb: &DigitalCombiner<T>,
    eps: T,
    max_sweeps: usize,
) -> Result<(AnalogCombiner<T>, SolveTrace<T>)> {
    let start = std::time::Instant::now();
    let mut ws = bcd_build_workspace(cfg, ch, tx, rf_init, bb);
    let mut rf = rf_init.clone();
    let offset = phi_offset(cfg);

    let mut obj = bcd_phi(&ws, &rf) + offset;
    let mut history = vec![obj];
    let mut termination = Termination::MaxIters;
    let mut sweeps = 0usize;

    for _ in 0..max_sweeps {
        sweeps += 1;
        for j in 0..cfg.rf_chains {
            for i in 0..cfg.rx_antennas {
                bcd_entry_update(&mut ws, &mut rf, i, j);
            }
        }
        // exact Q for the drift check doubles as the phi evaluation
        let q_exact = &ws.a * rf.matrix() * &ws.c;
        let drift = (&ws.q - &q_exact).norm();
        let scale = q_exact.norm();
        if drift > T::of(Q_REFRESH_TOL) * (T::one() + scale) {
            ws.q = q_exact.clone();
        }
        let mut quad = T::zero();
        let mut lin = T::zero();
        for (x, (y, z)) in rf.matrix().iter().zip(q_exact.iter().zip(ws.b.iter())) {
            let xc = x.conj();
            quad += (xc * y).re;
            lin += (xc * z).re;
        }
        let obj_next = quad - lin - lin + offset;
        if !obj_next.finite() {
            termination = Termination::AbortedNonFinite;
            break;
        }
        let decrease = obj - obj_next;
        obj = obj_next;
        history.push(obj);
        if decrease < eps {
            termination = Termination::ConvergedEps;
            break;
        }
    }

    let trace = SolveTrace {
        mse_history: history,
        termination,
        outer_iters: sweeps,
        wall_time: start.elapsed().as_secs_f64(),
        tx_reports: Vec::new(),
    };
    Ok((rf, trace))
}
