//! Domain types, the analytic computation MSE, channel generation, and
//! structural invariants.

use nalgebra::{Complex, ComplexField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{AircompError, Result};
use crate::scalar::Real;
use crate::{CMat, RVec};

/// All scenario scalars of one AirComp instance.
///
/// SNR is always derived as `beta * power / noise_var`, never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig<T: Real> {
    /// Number of devices `K`.
    pub devices: usize,
    /// Transmit antennas per device `N_t`.
    pub tx_antennas: usize,
    /// AP receive antennas `N_r`.
    pub rx_antennas: usize,
    /// AP RF chains `N_rf`.
    pub rf_chains: usize,
    /// Number of computed functions `L`.
    pub functions: usize,
    /// Per-device power budget `P` (linear scale).
    pub power: T,
    /// Noise variance `sigma^2`.
    pub noise_var: T,
    /// Common path loss `beta`.
    pub path_loss: T,
}

impl<T: Real> SystemConfig<T> {
    pub fn new(
        devices: usize,
        tx_antennas: usize,
        rx_antennas: usize,
        rf_chains: usize,
        functions: usize,
        power: T,
        noise_var: T,
        path_loss: T,
    ) -> Result<Self> {
        let cfg = Self {
            devices,
            tx_antennas,
            rx_antennas,
            rf_chains,
            functions,
            power,
            noise_var,
            path_loss,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices < 1
            || self.tx_antennas < 1
            || self.rx_antennas < 1
            || self.rf_chains < 1
            || self.functions < 1
        {
            return Err(AircompError::InvalidConfig(
                "all dimension counts must be >= 1".into(),
            ));
        }
        if self.rf_chains > self.rx_antennas {
            return Err(AircompError::InvalidConfig(format!(
                "rf_chains ({}) must not exceed rx_antennas ({})",
                self.rf_chains, self.rx_antennas
            )));
        }
        if self.functions > self.rf_chains.min(self.tx_antennas) {
            return Err(AircompError::InvalidConfig(format!(
                "functions ({}) must not exceed min(rf_chains, tx_antennas) = {}",
                self.functions,
                self.rf_chains.min(self.tx_antennas)
            )));
        }
        for (name, v) in [
            ("power", self.power),
            ("noise_var", self.noise_var),
            ("path_loss", self.path_loss),
        ] {
            if !(v > T::zero()) || !v.finite() {
                return Err(AircompError::InvalidConfig(format!(
                    "{name} must be strictly positive and finite"
                )));
            }
        }
        Ok(())
    }

    /// Derived SNR `beta * P / sigma^2` (linear scale).
    pub fn snr(&self) -> T {
        self.path_loss * self.power / self.noise_var
    }
}

/// The `K` complex channel matrices `H_k`, each `N_r x N_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet<T: Real> {
    channels: Vec<CMat<T>>,
}

impl<T: Real> ChannelSet<T> {
    pub fn new(cfg: &SystemConfig<T>, channels: Vec<CMat<T>>) -> Result<Self> {
        if channels.len() != cfg.devices {
            return Err(AircompError::DimensionMismatch {
                name: "ChannelSet",
                expected: format!("{} channel matrices", cfg.devices),
                actual: format!("{}", channels.len()),
            });
        }
        for (k, h) in channels.iter().enumerate() {
            if h.nrows() != cfg.rx_antennas || h.ncols() != cfg.tx_antennas {
                return Err(AircompError::DimensionMismatch {
                    name: "ChannelSet",
                    expected: format!("{}x{}", cfg.rx_antennas, cfg.tx_antennas),
                    actual: format!("{}x{} (device {k})", h.nrows(), h.ncols()),
                });
            }
            if h.iter().any(|z| !z.re.finite() || !z.im.finite()) {
                return Err(AircompError::Numerical(format!(
                    "channel matrix of device {k} has non-finite entries"
                )));
            }
        }
        Ok(Self { channels })
    }

    pub fn channels(&self) -> &[CMat<T>] {
        &self.channels
    }

    pub fn channel(&self, k: usize) -> &CMat<T> {
        &self.channels[k]
    }
}

/// The `K` transmit beamformers `V_k`, each `N_t x L`.
#[derive(Debug, Clone, PartialEq)]
pub struct TxBeamformerSet<T: Real> {
    beamformers: Vec<CMat<T>>,
}

/// Relative slack allowed on the power budget.
pub const POWER_TOL: f64 = 1e-9;

impl<T: Real> TxBeamformerSet<T> {
    pub fn new(cfg: &SystemConfig<T>, beamformers: Vec<CMat<T>>) -> Result<Self> {
        if beamformers.len() != cfg.devices {
            return Err(AircompError::DimensionMismatch {
                name: "TxBeamformerSet",
                expected: format!("{} beamformers", cfg.devices),
                actual: format!("{}", beamformers.len()),
            });
        }
        let budget = cfg.power * (T::one() + T::of(POWER_TOL));
        for (k, v) in beamformers.iter().enumerate() {
            if v.nrows() != cfg.tx_antennas || v.ncols() != cfg.functions {
                return Err(AircompError::DimensionMismatch {
                    name: "TxBeamformerSet",
                    expected: format!("{}x{}", cfg.tx_antennas, cfg.functions),
                    actual: format!("{}x{} (device {k})", v.nrows(), v.ncols()),
                });
            }
            let power = v.norm_squared();
            if !(power <= budget) {
                return Err(AircompError::Infeasible(format!(
                    "device {k} exceeds the power budget: tr(V V^H) = {} > {}",
                    power.as_f64(),
                    cfg.power.as_f64()
                )));
            }
        }
        Ok(Self { beamformers })
    }

    pub fn beamformers(&self) -> &[CMat<T>] {
        &self.beamformers
    }

    pub fn beamformer(&self, k: usize) -> &CMat<T> {
        &self.beamformers[k]
    }

    /// Transmit power `tr(V_k V_k^H)` of device `k`.
    pub fn power(&self, k: usize) -> T {
        self.beamformers[k].norm_squared()
    }
}

/// Canonicalize a phase to `(-pi, pi]`.
pub fn wrap_phase<T: Real>(theta: T) -> T {
    let two_pi = T::two_pi();
    let mut y = theta - two_pi * (theta / two_pi).floor();
    // y in [0, 2*pi)
    if y > T::pi() {
        y -= two_pi;
    }
    if y <= -T::pi() {
        y += two_pi;
    }
    y
}

/// Constant-modulus analog combiner `U_rf` with its phase representation.
///
/// The phase vector is column-major: `phases[j * N_r + i]` is the phase of
/// `U_rf(i, j)`, each in `(-pi, pi]`, and `U_rf(i, j) = exp(i * phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogCombiner<T: Real> {
    matrix: CMat<T>,
    phases: RVec<T>,
}

impl<T: Real> AnalogCombiner<T> {
    /// Build from a phase vector (wrapped to the canonical range).
    pub fn from_phases(rx_antennas: usize, rf_chains: usize, phases: RVec<T>) -> Result<Self> {
        if phases.len() != rx_antennas * rf_chains {
            return Err(AircompError::DimensionMismatch {
                name: "AnalogCombiner",
                expected: format!("{} phases", rx_antennas * rf_chains),
                actual: format!("{}", phases.len()),
            });
        }
        let phases = phases.map(wrap_phase);
        let matrix = CMat::from_fn(rx_antennas, rf_chains, |i, j| {
            let th = phases[j * rx_antennas + i];
            Complex::new(th.cos(), th.sin())
        });
        Ok(Self { matrix, phases })
    }

    /// Build from a unit-modulus matrix, deriving the phases.
    pub fn from_matrix(matrix: CMat<T>) -> Result<Self> {
        let tol = T::of(1e-12);
        for (idx, z) in matrix.iter().enumerate() {
            if (z.modulus() - T::one()).abs() > tol {
                return Err(AircompError::Infeasible(format!(
                    "AnalogCombiner entry {idx} has modulus {} (must be 1)",
                    z.modulus().as_f64()
                )));
            }
        }
        let (nr, nrf) = (matrix.nrows(), matrix.ncols());
        let phases =
            RVec::from_fn(nr * nrf, |p, _| wrap_phase(matrix[(p % nr, p / nr)].argument()));
        // re-synthesize so matrix and phases are exactly consistent
        Self::from_phases(nr, nrf, phases)
    }

    pub fn matrix(&self) -> &CMat<T> {
        &self.matrix
    }

    pub fn phases(&self) -> &RVec<T> {
        &self.phases
    }

    pub fn rx_antennas(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rf_chains(&self) -> usize {
        self.matrix.ncols()
    }

    /// Phase of entry `(i, j)`.
    pub fn phase(&self, i: usize, j: usize) -> T {
        self.phases[j * self.matrix.nrows() + i]
    }

    /// Set entry `(i, j)` to the unit-modulus value `x`, keeping the phase
    /// vector consistent.
    pub(crate) fn set_entry(&mut self, i: usize, j: usize, x: Complex<T>) {
        self.matrix[(i, j)] = x;
        self.phases[j * self.matrix.nrows() + i] = wrap_phase(x.argument());
    }
}

/// Low-dimension digital combiner `U_bb` (`N_rf x L`).
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalCombiner<T: Real> {
    matrix: CMat<T>,
}

impl<T: Real> DigitalCombiner<T> {
    pub fn new(matrix: CMat<T>) -> Result<Self> {
        if matrix.iter().any(|z| !z.re.finite() || !z.im.finite()) {
            return Err(AircompError::Numerical(
                "DigitalCombiner has non-finite entries".into(),
            ));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &CMat<T> {
        &self.matrix
    }
}

/// One snapshot of all optimization variables.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingState<T: Real> {
    pub tx: TxBeamformerSet<T>,
    pub rf: AnalogCombiner<T>,
    pub bb: DigitalCombiner<T>,
}

impl<T: Real> BeamformingState<T> {
    /// Check mutual dimensional consistency with `cfg`.
    pub fn validate(&self, cfg: &SystemConfig<T>) -> Result<()> {
        if self.rf.rx_antennas() != cfg.rx_antennas || self.rf.rf_chains() != cfg.rf_chains {
            return Err(AircompError::DimensionMismatch {
                name: "AnalogCombiner",
                expected: format!("{}x{}", cfg.rx_antennas, cfg.rf_chains),
                actual: format!("{}x{}", self.rf.rx_antennas(), self.rf.rf_chains()),
            });
        }
        let bb = self.bb.matrix();
        if bb.nrows() != cfg.rf_chains || bb.ncols() != cfg.functions {
            return Err(AircompError::DimensionMismatch {
                name: "DigitalCombiner",
                expected: format!("{}x{}", cfg.rf_chains, cfg.functions),
                actual: format!("{}x{}", bb.nrows(), bb.ncols()),
            });
        }
        if self.tx.beamformers().len() != cfg.devices {
            return Err(AircompError::DimensionMismatch {
                name: "TxBeamformerSet",
                expected: format!("{}", cfg.devices),
                actual: format!("{}", self.tx.beamformers().len()),
            });
        }
        Ok(())
    }

    /// Effective receive matrix `U_rf * U_bb` (`N_r x L`).
    pub fn effective_combiner(&self) -> CMat<T> {
        self.rf.matrix() * self.bb.matrix()
    }
}

/// Analytic computation MSE for an effective `N_r x L` receive matrix `U`:
/// `sum_k ||U^H H_k V_k - I||_F^2 + sigma^2 ||U||_F^2`.
pub fn mse_effective<T: Real>(
    cfg: &SystemConfig<T>,
    ch: &ChannelSet<T>,
    tx: &TxBeamformerSet<T>,
    u_eff: &CMat<T>,
) -> Result<T> {
    if u_eff.nrows() != cfg.rx_antennas || u_eff.ncols() != cfg.functions {
        return Err(AircompError::DimensionMismatch {
            name: "effective combiner",
            expected: format!("{}x{}", cfg.rx_antennas, cfg.functions),
            actual: format!("{}x{}", u_eff.nrows(), u_eff.ncols()),
        });
    }
    let uh = u_eff.adjoint();
    let mut mse = T::zero();
    for k in 0..cfg.devices {
        let mut e = &uh * ch.channel(k) * tx.beamformer(k);
        for d in 0..cfg.functions {
            e[(d, d)] -= Complex::new(T::one(), T::zero());
        }
        mse += e.norm_squared();
    }
    mse += cfg.noise_var * u_eff.norm_squared();
    if !mse.finite() {
        return Err(AircompError::Numerical("MSE is non-finite".into()));
    }
    Ok(mse)
}

/// Analytic computation MSE of a hybrid state.
pub fn compute_mse<T: Real>(
    cfg: &SystemConfig<T>,
    ch: &ChannelSet<T>,
    state: &BeamformingState<T>,
) -> Result<T> {
    state.validate(cfg)?;
    mse_effective(cfg, ch, &state.tx, &state.effective_combiner())
}

fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One draw from CN(0, var).
fn complex_normal<T: Real, R: Rng>(rng: &mut R, var: f64) -> Complex<T> {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex::new(T::of(re * s), T::of(im * s))
}

/// Monte-Carlo estimate of the computation MSE by sampling the signal chain.
///
/// Draws `s_k ~ CN(0, I)` and `n ~ CN(0, sigma^2 I)`, forms
/// `s_hat = U_bb^H U_rf^H (sum_k H_k V_k s_k + n)` and returns the sample
/// mean of `||s - s_hat||^2` together with its standard error. Deterministic
/// given `seed`.
pub fn estimate_mse_empirical<T: Real>(
    cfg: &SystemConfig<T>,
    ch: &ChannelSet<T>,
    state: &BeamformingState<T>,
    num_samples: usize,
    seed: u64,
) -> Result<(T, T)> {
    state.validate(cfg)?;
    if num_samples < 1 {
        return Err(AircompError::InvalidConfig(
            "num_samples must be >= 1".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let uh = state.effective_combiner().adjoint();
    // precompute effective per-device maps U^H H_k V_k (L x L)
    let maps: Vec<CMat<T>> = (0..cfg.devices)
        .map(|k| &uh * ch.channel(k) * tx_ref(state, k))
        .collect();
    let noise_map = &uh; // L x N_r
    let sigma2 = cfg.noise_var.as_f64();
    let l = cfg.functions;

    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut s = CVecLocal::<T>::zeros(l);
    for _ in 0..num_samples {
        let mut target = CVecLocal::<T>::zeros(l);
        let mut est = CVecLocal::<T>::zeros(l);
        for map in maps.iter() {
            for d in 0..l {
                s[d] = complex_normal(&mut rng, 1.0);
            }
            target += &s;
            est += map * &s;
        }
        let mut noise = CVecLocal::<T>::zeros(cfg.rx_antennas);
        for i in 0..cfg.rx_antennas {
            noise[i] = complex_normal(&mut rng, sigma2);
        }
        est += noise_map * noise;
        let err = (target - est).norm_squared().as_f64();
        sum += err;
        sum_sq += err * err;
    }
    let n = num_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let se = if num_samples > 1 {
        (var / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok((T::of(mean), T::of(se)))
}

type CVecLocal<T> = nalgebra::DVector<Complex<T>>;

fn tx_ref<'a, T: Real>(state: &'a BeamformingState<T>, k: usize) -> &'a CMat<T> {
    state.tx.beamformer(k)
}

/// i.i.d. CN(0, 1) Rayleigh channels (the normalized model used for the
/// Monte-Carlo sweeps). Deterministic given `seed`.
pub fn generate_rayleigh_channels<T: Real>(cfg: &SystemConfig<T>, seed: u64) -> ChannelSet<T> {
    generate_rayleigh_channels_with_amplitude(cfg, seed, T::one())
}

/// Rayleigh channels with entries `amplitude * CN(0, 1)`; pass
/// `sqrt(path_loss)` to apply the large-scale factor explicitly.
pub fn generate_rayleigh_channels_with_amplitude<T: Real>(
    cfg: &SystemConfig<T>,
    seed: u64,
    amplitude: T,
) -> ChannelSet<T> {
    let mut rng = rng_from_seed(seed);
    let a = Complex::new(amplitude, T::zero());
    let channels = (0..cfg.devices)
        .map(|_| {
            let mut h = CMat::<T>::zeros(cfg.rx_antennas, cfg.tx_antennas);
            for j in 0..cfg.tx_antennas {
                for i in 0..cfg.rx_antennas {
                    h[(i, j)] = a * complex_normal::<T, _>(&mut rng, 1.0);
                }
            }
            h
        })
        .collect();
    ChannelSet { channels }
}

/// Channels that satisfy the favorable-propagation identities exactly:
/// `H_k^H H_k' = 0` for `k != k'` and `H_k^H H_k = beta * N_r * I`.
///
/// Built from disjoint column blocks of a random `N_r x N_r` unitary matrix,
/// each scaled by `sqrt(beta * N_r)`. Requires `K * N_t <= N_r`.
pub fn generate_orthogonal_channels<T: Real>(
    cfg: &SystemConfig<T>,
    seed: u64,
) -> Result<ChannelSet<T>> {
    let need = cfg.devices * cfg.tx_antennas;
    if need > cfg.rx_antennas {
        return Err(AircompError::Infeasible(format!(
            "exact orthogonality needs K*N_t <= N_r ({} > {})",
            need, cfg.rx_antennas
        )));
    }
    let mut rng = rng_from_seed(seed);
    let n = cfg.rx_antennas;
    let mut g = CMat::<T>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            g[(i, j)] = complex_normal::<T, _>(&mut rng, 1.0);
        }
    }
    let q = g.qr().q();
    let scale = Complex::new((cfg.path_loss * T::of(n as f64)).sqrt(), T::zero());
    let channels = (0..cfg.devices)
        .map(|k| {
            let block = q.columns(k * cfg.tx_antennas, cfg.tx_antennas);
            block.map(|z| z * scale)
        })
        .collect();
    Ok(ChannelSet { channels })
}

/// Initial state: uniform random analog phases on `(-pi, pi]`, transmit
/// beamformers `sqrt(P/L) [I_L; 0]` (full power), and a zero digital
/// combiner (overwritten by the driver's bootstrap digital update).
pub fn init_state<T: Real>(cfg: &SystemConfig<T>, seed: u64) -> BeamformingState<T> {
    let mut rng = rng_from_seed(seed);
    let n = cfg.rx_antennas * cfg.rf_chains;
    let phases = RVec::from_fn(n, |_, _| {
        let u: f64 = rng.gen(); // [0, 1)
        T::of(std::f64::consts::PI * (1.0 - 2.0 * u)) // (-pi, pi]
    });
    let rf = AnalogCombiner::from_phases(cfg.rx_antennas, cfg.rf_chains, phases)
        .expect("phase vector has the right length");

    let amp = (cfg.power / T::of(cfg.functions as f64)).sqrt();
    let v = CMat::from_fn(cfg.tx_antennas, cfg.functions, |i, j| {
        if i == j {
            Complex::new(amp, T::zero())
        } else {
            Complex::new(T::zero(), T::zero())
        }
    });
    let tx = TxBeamformerSet {
        beamformers: vec![v; cfg.devices],
    };
    let bb = DigitalCombiner {
        matrix: CMat::zeros(cfg.rf_chains, cfg.functions),
    };
    BeamformingState { tx, rf, bb }
}

/// Construct a `TxBeamformerSet` without the power check (internal use by
/// solvers whose outputs satisfy the budget by construction).
pub(crate) fn tx_set_unchecked<T: Real>(beamformers: Vec<CMat<T>>) -> TxBeamformerSet<T> {
    TxBeamformerSet { beamformers }
}

/// Derive an independent stream seed from a base seed and index parts
/// (splitmix64 finalizer applied per part). Used so that every
/// (sweep point, trial) cell gets its own reproducible RNG stream.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z
            .wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(p.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

/// The quadratic-form data of the analog-combiner subproblem:
/// `A = sum_k H_k V_k V_k^H H_k^H + sigma^2 I`, `B = sum_k H_k V_k U_bb^H`,
/// `C = U_bb U_bb^H`. The MSE equals
/// `tr(U_rf^H A U_rf C) - 2 Re tr(U_rf^H B) + K L`.
pub(crate) fn build_quadratics<T: Real>(
    cfg: &SystemConfig<T>,
    ch: &ChannelSet<T>,
    tx: &TxBeamformerSet<T>,
    bb: &CMat<T>,
) -> (CMat<T>, CMat<T>, CMat<T>) {
    let nr = cfg.rx_antennas;
    let mut a = CMat::<T>::zeros(nr, nr);
    let mut b = CMat::<T>::zeros(nr, cfg.rf_chains);
    let bbh = bb.adjoint();
    for k in 0..cfg.devices {
        let hv = ch.channel(k) * tx.beamformer(k); // N_r x L
        a += &hv * hv.adjoint();
        b += &hv * &bbh;
    }
    let s2 = Complex::new(cfg.noise_var, T::zero());
    for i in 0..nr {
        a[(i, i)] += s2;
    }
    let c = bb * &bbh;
    (a, b, c)
}

/// `tr(U^H A U C) - 2 Re tr(U^H B)` for a candidate analog combiner `U`.
pub(crate) fn phi_value<T: Real>(a: &CMat<T>, b: &CMat<T>, c: &CMat<T>, u: &CMat<T>) -> T {
    let auc = a * u * c;
    let mut quad = T::zero();
    let mut lin = T::zero();
    for (x, (y, z)) in u.iter().zip(auc.iter().zip(b.iter())) {
        let xc = x.conj();
        quad += (xc * y).re;
        lin += (xc * z).re;
    }
    quad - lin - lin
}

/// Constant offset between `phi_value` and the MSE.
pub(crate) fn phi_offset<T: Real>(cfg: &SystemConfig<T>) -> T {
    T::of((cfg.devices * cfg.functions) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn scalar_cfg(sigma2: f64) -> SystemConfig<f64> {
        SystemConfig::new(1, 1, 1, 1, 1, 4.0, sigma2.max(1e-300), 1.0).unwrap()
    }

    fn scalar_state(h: f64, v: f64, urf: f64, ubb: f64) -> (ChannelSet<f64>, BeamformingState<f64>) {
        let cfg = scalar_cfg(1.0);
        let ch = ChannelSet {
            channels: vec![CMat64::from_element(1, 1, Complex::new(h, 0.0))],
        };
        let state = BeamformingState {
            tx: TxBeamformerSet {
                beamformers: vec![CMat64::from_element(1, 1, Complex::new(v, 0.0))],
            },
            rf: AnalogCombiner::from_matrix(CMat64::from_element(
                1,
                1,
                Complex::new(urf, 0.0),
            ))
            .unwrap(),
            bb: DigitalCombiner {
                matrix: CMat64::from_element(1, 1, Complex::new(ubb, 0.0)),
            },
        };
        let _ = cfg;
        (ch, state)
    }

    use crate::CMat64;

    #[test]
    fn scalar_mse_perfect_equalization() {
        // H = V = U_rf = U_bb = 1, sigma^2 -> 0 gives zero MSE
        let cfg = SystemConfig::new(1, 1, 1, 1, 1, 4.0, 1e-300, 1.0).unwrap();
        let (ch, state) = scalar_state(1.0, 1.0, 1.0, 1.0);
        let mse = compute_mse(&cfg, &ch, &state).unwrap();
        assert!(mse < 1e-290);
    }

    #[test]
    fn scalar_mse_direct_evaluation() {
        let cfg = scalar_cfg(1.0);
        let (ch, state) = scalar_state(1.0, 1.0, 1.0, 0.5);
        let mse = compute_mse(&cfg, &ch, &state).unwrap();
        assert_relative_eq!(mse, 0.5, max_relative = 1e-14);
    }

    #[test]
    fn empirical_exact_when_noiseless_and_equalized() {
        let cfg = SystemConfig::new(1, 1, 1, 1, 1, 4.0, 1e-300, 1.0).unwrap();
        let (ch, state) = scalar_state(1.0, 1.0, 1.0, 1.0);
        let (mean, _) = estimate_mse_empirical(&cfg, &ch, &state, 1000, 3).unwrap();
        assert!(mean < 1e-280);
    }

    #[test]
    fn empirical_matches_scalar_analytic() {
        let cfg = scalar_cfg(1.0);
        let (ch, state) = scalar_state(1.0, 1.0, 1.0, 0.5);
        let (mean, se) = estimate_mse_empirical(&cfg, &ch, &state, 1_000_000, 42).unwrap();
        assert!((mean - 0.5).abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn empirical_matches_analytic_random_instance() {
        let cfg = SystemConfig::new(3, 2, 8, 4, 2, 1.0, 0.7, 1.0).unwrap();
        let ch = generate_rayleigh_channels(&cfg, 11);
        let mut state = init_state(&cfg, 12);
        // random digital combiner so the estimate is non-trivial
        let mut rng = rng_from_seed(13);
        state.bb = DigitalCombiner {
            matrix: CMat64::from_fn(4, 2, |_, _| complex_normal(&mut rng, 0.05)),
        };
        let analytic = compute_mse(&cfg, &ch, &state).unwrap();
        let (mean, se) = estimate_mse_empirical(&cfg, &ch, &state, 200_000, 99).unwrap();
        assert!(
            (mean - analytic).abs() <= 3.0 * se,
            "mean {mean}, analytic {analytic}, se {se}"
        );
    }

    #[test]
    fn rayleigh_shape_variance_and_determinism() {
        let cfg = SystemConfig::new(50, 10, 64, 16, 10, 1.0, 1.0, 1.0).unwrap();
        let a = generate_rayleigh_channels(&cfg, 7);
        assert_eq!(a.channels().len(), 50);
        let mut total = 0.0;
        for h in a.channels() {
            assert_eq!((h.nrows(), h.ncols()), (64, 10));
            total += h.norm_squared();
        }
        let var = total / (50.0 * 64.0 * 10.0);
        assert!((0.95..=1.05).contains(&var), "sample variance {var}");
        let b = generate_rayleigh_channels(&cfg, 7);
        assert_eq!(a, b);
        let c = generate_rayleigh_channels(&cfg, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn orthogonal_channels_exact_grams() {
        let cfg = SystemConfig::new(4, 2, 16, 4, 2, 1.0, 1.0, 1.0).unwrap();
        let ch = generate_orthogonal_channels(&cfg, 5).unwrap();
        for k in 0..4 {
            for k2 in 0..4 {
                let g = ch.channel(k).adjoint() * ch.channel(k2);
                if k == k2 {
                    let mut expect = CMat64::identity(2, 2);
                    expect *= Complex::new(16.0, 0.0);
                    assert!((g - expect).norm() < 1e-10);
                } else {
                    assert!(g.norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn orthogonal_channels_infeasible() {
        let cfg = SystemConfig::new(9, 2, 16, 4, 2, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            generate_orthogonal_channels(&cfg, 5),
            Err(AircompError::Infeasible(_))
        ));
    }

    #[test]
    fn orthogonal_channels_path_loss_scaling() {
        let cfg = SystemConfig::new(2, 2, 16, 4, 2, 1.0, 1.0, 4.0).unwrap();
        let ch = generate_orthogonal_channels(&cfg, 5).unwrap();
        let g = ch.channel(0).adjoint() * ch.channel(0);
        let mut expect = CMat64::identity(2, 2);
        expect *= Complex::new(64.0, 0.0);
        assert!((g - expect).norm() < 1e-10);
    }

    #[test]
    fn init_state_invariants_and_determinism() {
        let cfg = SystemConfig::new(3, 4, 8, 4, 2, 2.5, 1.0, 1.0).unwrap();
        let s1 = init_state(&cfg, 21);
        let s2 = init_state(&cfg, 21);
        assert_eq!(s1, s2);
        s1.validate(&cfg).unwrap();
        for (i, z) in s1.rf.matrix().iter().enumerate() {
            assert!((z.norm() - 1.0).abs() < 1e-12, "entry {i}");
        }
        for p in s1.rf.phases().iter() {
            assert!(*p > -std::f64::consts::PI && *p <= std::f64::consts::PI);
        }
        for k in 0..3 {
            assert_relative_eq!(s1.tx.power(k), 2.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn init_state_square_case_full_power_identity() {
        // N_t = L: V = sqrt(P/L) I has tr(V V^H) = P exactly
        let cfg = SystemConfig::new(1, 2, 8, 4, 2, 3.0, 1.0, 1.0).unwrap();
        let s = init_state(&cfg, 0);
        assert_relative_eq!(s.tx.power(0), 3.0, max_relative = 1e-14);
        let v = s.tx.beamformer(0);
        assert_relative_eq!(v[(0, 0)].re, (1.5f64).sqrt(), max_relative = 1e-14);
        assert_eq!(v[(0, 1)], Complex::new(0.0, 0.0));
    }

    #[test]
    fn wrap_phase_range() {
        use std::f64::consts::PI;
        assert_relative_eq!(wrap_phase(PI + 0.2), -PI + 0.2, max_relative = 1e-12);
        assert_eq!(wrap_phase(0.0), 0.0);
        assert_relative_eq!(wrap_phase(PI), PI);
        assert_relative_eq!(wrap_phase(-PI), PI);
        assert_relative_eq!(wrap_phase(7.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn mse_nonnegative_and_permutation_invariant(seed in 0u64..5000) {
            let cfg = SystemConfig::new(3, 2, 6, 3, 2, 1.0, 0.5, 1.0).unwrap();
            let ch = generate_rayleigh_channels(&cfg, seed);
            let mut state = init_state(&cfg, seed ^ 0xabcd);
            let mut rng = rng_from_seed(seed ^ 0x1234);
            state.bb = DigitalCombiner {
                matrix: CMat64::from_fn(3, 2, |_, _| complex_normal(&mut rng, 0.1)),
            };
            let mse = compute_mse(&cfg, &ch, &state).unwrap();
            prop_assert!(mse >= 0.0);

            // permute devices in both channel and tx sets
            let perm = [2usize, 0, 1];
            let ch_p = ChannelSet {
                channels: perm.iter().map(|&k| ch.channel(k).clone()).collect(),
            };
            let tx_p = TxBeamformerSet {
                beamformers: perm.iter().map(|&k| state.tx.beamformer(k).clone()).collect(),
            };
            let state_p = BeamformingState { tx: tx_p, rf: state.rf.clone(), bb: state.bb.clone() };
            let mse_p = compute_mse(&cfg, &ch_p, &state_p).unwrap();
            prop_assert!((mse - mse_p).abs() <= 1e-10 * (1.0 + mse.abs()));
        }
    }
}
