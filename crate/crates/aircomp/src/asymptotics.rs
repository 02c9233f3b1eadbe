//! Closed-form large-array MSE predictions and their validation harness.
//!
//! Under favorable propagation (`H_k^H H_k' -> 0`, `H_k^H H_k -> beta N_r I`)
//! and the fixed transmit beamforming `V_k^H V_k = (P/L) I`, the
//! fully-digital sum-MMSE computation MSE collapses to
//! `K L^2 sigma^2 / (L sigma^2 + beta N_r P)`, which decays as
//! `K L^2 sigma^2 / (beta N_r P)` for large `N_r`.

use nalgebra::Complex;

use crate::digital::solve_fully_digital_mmse;
use crate::error::Result;
use crate::model::{
    derive_seed, generate_orthogonal_channels, generate_rayleigh_channels, init_state,
    mse_effective,
};
use crate::scalar::Real;
use crate::{CMat, ChannelSet, SystemConfig, TxBeamformerSet};

/// Large-`N_r` limit of the fully-digital computation MSE:
/// `K L^2 sigma^2 / (beta N_r P)`.
pub fn mse_asymptotic<T: Real>(cfg: &SystemConfig<T>) -> T {
    let k = T::of(cfg.devices as f64);
    let l = T::of(cfg.functions as f64);
    let nr = T::of(cfg.rx_antennas as f64);
    k * l * l * cfg.noise_var / (cfg.path_loss * nr * cfg.power)
}

/// Pre-limit closed form, exact under exactly-orthogonal channels:
/// `K L^2 sigma^2 / (L sigma^2 + beta N_r P)`.
pub fn mse_exact_orthogonal<T: Real>(cfg: &SystemConfig<T>) -> T {
    let k = T::of(cfg.devices as f64);
    let l = T::of(cfg.functions as f64);
    let nr = T::of(cfg.rx_antennas as f64);
    k * l * l * cfg.noise_var / (l * cfg.noise_var + cfg.path_loss * nr * cfg.power)
}

/// Simplified large-array sum-MMSE receiver
/// `sum_k H_k V_k (sigma^2 I + beta N_r V_k^H V_k)^{-1}` (`N_r x L`).
pub fn mmse_simplified<T: Real>(
    cfg: &SystemConfig<T>,
    ch: &ChannelSet<T>,
    tx: &TxBeamformerSet<T>,
) -> Result<CMat<T>> {
    let bnr = Complex::new(cfg.path_loss * T::of(cfg.rx_antennas as f64), T::zero());
    let s2 = Complex::new(cfg.noise_var, T::zero());
    let mut u = CMat::<T>::zeros(cfg.rx_antennas, cfg.functions);
    for k in 0..cfg.devices {
        let v = tx.beamformer(k);
        let mut inner = v.adjoint() * v * bnr;
        for d in 0..cfg.functions {
            inner[(d, d)] += s2;
        }
        let hv = ch.channel(k) * v;
        let sol = inner.cholesky().ok_or_else(|| {
            crate::AircompError::Numerical(
                "simplified receiver inner matrix not positive definite".into(),
            )
        })?;
        // H V M^{-1} computed as (M^{-1} (H V)^H)^H with Hermitian M
        u += sol.solve(&hv.adjoint()).adjoint();
    }
    Ok(u)
}

/// Channel model used by [`validate_theorem2`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelModel {
    Rayleigh,
    /// Exactly-orthogonal construction (requires `K * N_t <= N_r`).
    Orthogonal,
}

/// One row of the large-array validation table.
#[derive(Debug, Clone)]
pub struct Theorem2Row<T: Real> {
    pub rx_antennas: usize,
    /// Trial-averaged fully-digital sum-MMSE MSE.
    pub empirical: T,
    /// Standard error of the trial average.
    pub std_error: T,
    /// [`mse_asymptotic`] at this antenna count.
    pub limit: T,
    /// [`mse_exact_orthogonal`] at this antenna count.
    pub pre_limit: T,
    /// `|empirical - limit| / limit`.
    pub rel_gap: T,
}

/// Sweep the antenna count with the fixed full-power transmit beamforming,
/// apply the fully-digital sum-MMSE receiver, and tabulate the empirical MSE
/// against the closed forms.
pub fn validate_theorem2<T: Real>(
    cfg_base: &SystemConfig<T>,
    nr_list: &[usize],
    trials: usize,
    seed: u64,
    model: ChannelModel,
) -> Result<Vec<Theorem2Row<T>>> {
    let mut rows = Vec::with_capacity(nr_list.len());
    for (idx, &nr) in nr_list.iter().enumerate() {
        let cfg = SystemConfig::new(
            cfg_base.devices,
            cfg_base.tx_antennas,
            nr,
            cfg_base.rf_chains.min(nr),
            cfg_base.functions,
            cfg_base.power,
            cfg_base.noise_var,
            cfg_base.path_loss,
        )?;
        let tx = init_state(&cfg, 0).tx;
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        for t in 0..trials {
            let s = derive_seed(seed, &[idx as u64, t as u64, 0]);
            let ch = match model {
                ChannelModel::Rayleigh => generate_rayleigh_channels(&cfg, s),
                ChannelModel::Orthogonal => generate_orthogonal_channels(&cfg, s)?,
            };
            let u = solve_fully_digital_mmse(&cfg, &ch, &tx)?;
            let mse = mse_effective(&cfg, &ch, &tx, &u)?.as_f64();
            sum += mse;
            sum_sq += mse * mse;
        }
        let n = trials as f64;
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0);
        let se = if trials > 1 { (var / (n - 1.0)).sqrt() } else { 0.0 };
        let limit = mse_asymptotic(&cfg);
        let empirical = T::of(mean);
        rows.push(Theorem2Row {
            rx_antennas: nr,
            empirical,
            std_error: T::of(se),
            limit,
            pre_limit: mse_exact_orthogonal(&cfg),
            rel_gap: (empirical - limit).abs() / limit,
        });
    }
    Ok(rows)
}
