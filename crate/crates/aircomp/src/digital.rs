//! Closed-form sum-MMSE digital combiner and its fully-digital
//! specialization.
//!
//! With the transmit beamformers and the analog combiner fixed, the MSE is an
//! unconstrained convex quadratic in `U_bb` whose minimizer is
//! `U_bb = (U_rf^H A U_rf)^{-1} U_rf^H sum_k H_k V_k` with
//! `A = sum_k H_k V_k V_k^H H_k^H + sigma^2 I`.

use nalgebra::Complex;

use crate::error::{AircompError, Result};
use crate::scalar::Real;
use crate::{AnalogCombiner, CMat, ChannelSet, DigitalCombiner, SystemConfig, TxBeamformerSet};

/// `A = sum_k H_k V_k V_k^H H_k^H + sigma^2 I` and `S = sum_k H_k V_k`.
fn noise_whitened_sums<T: Real>(
    cfg: &SystemConfig<T>,
    ch: &ChannelSet<T>,
    tx: &TxBeamformerSet<T>,
) -> (CMat<T>, CMat<T>) {
    let nr = cfg.rx_antennas;
    let mut a = CMat::<T>::zeros(nr, nr);
    let mut s = CMat::<T>::zeros(nr, cfg.functions);
    for k in 0..cfg.devices {
        let hv = ch.channel(k) * tx.beamformer(k);
        a += &hv * hv.adjoint();
        s += &hv;
    }
    let s2 = Complex::new(cfg.noise_var, T::zero());
    for i in 0..nr {
        a[(i, i)] += s2;
    }
    (a, s)
}

/// Sum-MMSE combiner for an arbitrary right factor `W` (`N_r x m`):
/// returns the `m x L` minimizer of the MSE over matrices applied behind
/// `W^H`, i.e. `(W^H A W)^{-1} W^H S`.
pub fn solve_digital_effective<T: Real>(
    cfg: &SystemConfig<T>,
    ch: &ChannelSet<T>,
    tx: &TxBeamformerSet<T>,
    w: &CMat<T>,
) -> Result<CMat<T>> {
    if w.nrows() != cfg.rx_antennas {
        return Err(AircompError::DimensionMismatch {
            name: "digital combiner right factor",
            expected: format!("{} rows", cfg.rx_antennas),
            actual: format!("{}", w.nrows()),
        });
    }
    let (a, s) = noise_whitened_sums(cfg, ch, tx);
    let gram = w.adjoint() * &a * w;
    let rhs = w.adjoint() * s;
    let m = gram.nrows();
    let chol = gram.cholesky().ok_or_else(|| {
        AircompError::Numerical(format!(
            "sum-MMSE normal matrix ({m}x{m}) is rank deficient; \
             requires sigma^2 > 0 and a full-column-rank analog combiner"
        ))
    })?;
    Ok(chol.solve(&rhs))
}

/// Optimal digital combiner for fixed transmit beamformers and analog
/// combiner (exact block minimization of the MSE over `U_bb`).
pub fn solve_digital<T: Real>(
    cfg: &SystemConfig<T>,
    ch: &ChannelSet<T>,
    tx: &TxBeamformerSet<T>,
    rf: &AnalogCombiner<T>,
) -> Result<DigitalCombiner<T>> {
    let bb = solve_digital_effective(cfg, ch, tx, rf.matrix())?;
    DigitalCombiner::new(bb)
}

/// Optimal fully-digital sum-MMSE receiver (`N_r x L`); equals
/// [`solve_digital_effective`] with the identity right factor.
pub fn solve_fully_digital_mmse<T: Real>(
    cfg: &SystemConfig<T>,
    ch: &ChannelSet<T>,
    tx: &TxBeamformerSet<T>,
) -> Result<CMat<T>> {
    let eye = CMat::<T>::identity(cfg.rx_antennas, cfg.rx_antennas);
    solve_digital_effective(cfg, ch, tx, &eye)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        compute_mse, generate_orthogonal_channels, generate_rayleigh_channels, init_state,
        mse_effective, BeamformingState,
    };
    use crate::{CMat64, SystemConfig64};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mse_with_bb(
        cfg: &SystemConfig64,
        ch: &crate::ChannelSet64,
        state: &BeamformingState<f64>,
        bb: CMat64,
    ) -> f64 {
        let s = BeamformingState {
            tx: state.tx.clone(),
            rf: state.rf.clone(),
            bb: DigitalCombiner::new(bb).unwrap(),
        };
        compute_mse(cfg, ch, &s).unwrap()
    }

    #[test]
    fn scalar_case() {
        // U_rf = 1, H V = 1, sigma^2 = 1: U_bb = 0.5, MSE = 0.5
        let cfg = SystemConfig64::new(1, 1, 1, 1, 1, 4.0, 1.0, 1.0).unwrap();
        let ch = crate::ChannelSet64::new(
            &cfg,
            vec![CMat64::from_element(1, 1, Complex::new(1.0, 0.0))],
        )
        .unwrap();
        let tx = TxBeamformerSet::new(
            &cfg,
            vec![CMat64::from_element(1, 1, Complex::new(1.0, 0.0))],
        )
        .unwrap();
        let rf = AnalogCombiner::from_matrix(CMat64::from_element(
            1,
            1,
            Complex::new(1.0, 0.0),
        ))
        .unwrap();
        let bb = solve_digital(&cfg, &ch, &tx, &rf).unwrap();
        assert_relative_eq!(bb.matrix()[(0, 0)].re, 0.5, max_relative = 1e-12);
        let state = BeamformingState { tx, rf, bb };
        assert_relative_eq!(
            compute_mse(&cfg, &ch, &state).unwrap(),
            0.5,
            max_relative = 1e-12
        );
    }

    #[test]
    fn noise_dominated_limit() {
        let cfg = SystemConfig64::new(3, 2, 8, 4, 2, 1.0, 1e12, 1.0).unwrap();
        let ch = generate_rayleigh_channels(&cfg, 1);
        let mut state = init_state(&cfg, 2);
        state.bb = solve_digital(&cfg, &ch, &state.tx, &state.rf).unwrap();
        assert!(state.bb.matrix().norm() < 1e-9);
        let kl = (cfg.devices * cfg.functions) as f64;
        let mse = compute_mse(&cfg, &ch, &state).unwrap();
        assert_relative_eq!(mse, kl, max_relative = 1e-6);
    }

    #[test]
    fn returned_combiner_beats_perturbations() {
        let cfg = SystemConfig64::new(3, 2, 8, 4, 2, 1.0, 0.5, 1.0).unwrap();
        let ch = generate_rayleigh_channels(&cfg, 3);
        let state = init_state(&cfg, 4);
        let bb = solve_digital(&cfg, &ch, &state.tx, &state.rf).unwrap();
        let best = mse_with_bb(&cfg, &ch, &state, bb.matrix().clone());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let mut d = CMat64::from_fn(4, 2, |_, _| {
                Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let n = d.norm();
            d *= Complex::new(1e-3 / n, 0.0);
            let perturbed = mse_with_bb(&cfg, &ch, &state, bb.matrix() + d);
            assert!(best <= perturbed + 1e-15);
        }
    }

    #[test]
    fn first_order_optimality() {
        let cfg = SystemConfig64::new(3, 2, 8, 4, 2, 1.0, 0.5, 1.0).unwrap();
        let ch = generate_rayleigh_channels(&cfg, 13);
        let state = init_state(&cfg, 14);
        let bb = solve_digital(&cfg, &ch, &state.tx, &state.rf).unwrap();
        let b0 = bb.matrix().clone();
        let h = 1e-6;
        let mut grad_norm_sq = 0.0f64;
        for j in 0..2 {
            for i in 0..4 {
                for dir in [Complex::new(h, 0.0), Complex::new(0.0, h)] {
                    let mut bp = b0.clone();
                    bp[(i, j)] += dir;
                    let mut bm = b0.clone();
                    bm[(i, j)] -= dir;
                    let g = (mse_with_bb(&cfg, &ch, &state, bp)
                        - mse_with_bb(&cfg, &ch, &state, bm))
                        / (2.0 * h);
                    grad_norm_sq += g * g;
                }
            }
        }
        assert!(grad_norm_sq.sqrt() < 1e-8 * (1.0 + b0.norm()));
    }

    #[test]
    fn block_update_never_increases_mse() {
        for seed in 0..5u64 {
            let cfg = SystemConfig64::new(3, 2, 8, 4, 2, 1.0, 0.5, 1.0).unwrap();
            let ch = generate_rayleigh_channels(&cfg, seed);
            let mut state = init_state(&cfg, seed ^ 0xaa);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            state.bb = DigitalCombiner::new(CMat64::from_fn(4, 2, |_, _| {
                Complex::new(0.3 * rng.gen::<f64>(), 0.3 * rng.gen::<f64>())
            }))
            .unwrap();
            let before = compute_mse(&cfg, &ch, &state).unwrap();
            state.bb = solve_digital(&cfg, &ch, &state.tx, &state.rf).unwrap();
            let after = compute_mse(&cfg, &ch, &state).unwrap();
            assert!(after <= before + 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn fully_digital_equals_identity_right_factor() {
        let cfg = SystemConfig64::new(3, 2, 6, 6, 2, 1.0, 0.7, 1.0).unwrap();
        let ch = generate_rayleigh_channels(&cfg, 21);
        let state = init_state(&cfg, 22);
        let u = solve_fully_digital_mmse(&cfg, &ch, &state.tx).unwrap();
        let eye = CMat64::identity(6, 6);
        let via_effective = solve_digital_effective(&cfg, &ch, &state.tx, &eye).unwrap();
        assert!((&u - via_effective).norm() < 1e-12);
        // it is the MSE minimizer over all N_r x L matrices
        let best = mse_effective(&cfg, &ch, &state.tx, &u).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let mut d = CMat64::from_fn(6, 2, |_, _| {
                Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            d *= Complex::new(1e-3 / d.norm(), 0.0);
            let other = mse_effective(&cfg, &ch, &state.tx, &(&u + d)).unwrap();
            assert!(best <= other + 1e-15);
        }
    }

    #[test]
    fn orthogonal_channels_reduce_to_per_device_form() {
        // H^H H = beta N_r I and V^H V = (P/L) I: the fully-digital receiver
        // collapses to (L / (L sigma^2 + beta N_r P)) H V
        let cfg = SystemConfig64::new(1, 2, 16, 4, 2, 1.0, 0.8, 1.0).unwrap();
        let ch = generate_orthogonal_channels(&cfg, 31).unwrap();
        let state = init_state(&cfg, 32);
        let u = solve_fully_digital_mmse(&cfg, &ch, &state.tx).unwrap();
        let (beta, nr, p, l) = (1.0, 16.0, 1.0, 2.0);
        let coeff = l / (l * cfg.noise_var + beta * nr * p);
        let expect = (ch.channel(0) * state.tx.beamformer(0)) * Complex::new(coeff, 0.0);
        assert!((&u - expect).norm() < 1e-10);
    }

    #[test]
    fn zero_channels_give_zero_combiner() {
        let cfg = SystemConfig64::new(2, 2, 4, 4, 2, 1.0, 1.0, 1.0).unwrap();
        let ch = crate::ChannelSet64::new(&cfg, vec![CMat64::zeros(4, 2); 2]).unwrap();
        let state = init_state(&cfg, 1);
        let u = solve_fully_digital_mmse(&cfg, &ch, &state.tx).unwrap();
        assert_eq!(u.norm(), 0.0);
    }

    #[test]
    fn depends_on_channels_only_through_sums() {
        // two channel/beamformer sets with identical sum_k H_k V_k and
        // sum_k H_k V_k V_k^H H_k^H produce the identical combiner: swap the
        // roles of the two devices
        let cfg = SystemConfig64::new(2, 2, 6, 3, 2, 1.0, 0.9, 1.0).unwrap();
        let ch = generate_rayleigh_channels(&cfg, 41);
        let state = init_state(&cfg, 42);
        let rf = &state.rf;
        let bb1 = solve_digital(&cfg, &ch, &state.tx, rf).unwrap();
        let ch_sw = crate::ChannelSet64::new(
            &cfg,
            vec![ch.channel(1).clone(), ch.channel(0).clone()],
        )
        .unwrap();
        let tx_sw = TxBeamformerSet::new(
            &cfg,
            vec![
                state.tx.beamformer(1).clone(),
                state.tx.beamformer(0).clone(),
            ],
        )
        .unwrap();
        let bb2 = solve_digital(&cfg, &ch_sw, &tx_sw, rf).unwrap();
        assert!((bb1.matrix() - bb2.matrix()).norm() < 1e-12);
    }

    #[test]
    fn rank_defect_is_reported() {
        // sigma^2 must be > 0 by config validation, so force the defect with
        // a zero right factor
        let cfg = SystemConfig64::new(1, 1, 2, 1, 1, 1.0, 1.0, 1.0).unwrap();
        let ch = generate_rayleigh_channels(&cfg, 1);
        let state = init_state(&cfg, 2);
        let w = CMat64::zeros(2, 1);
        let err = solve_digital_effective(&cfg, &ch, &state.tx, &w).unwrap_err();
        assert!(matches!(err, AircompError::Numerical(_)));
        assert!(err.to_string().contains("rank deficient"));
    }
}
