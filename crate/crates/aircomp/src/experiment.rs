//! Monte-Carlo sweep harness with CSV output.
//!
//! An [`ExperimentSpec`] describes one figure-style sweep: which scenario
//! parameter varies, the fixed parameters, the schemes to compare, and the
//! trial budget. Trials are fully reproducible: every (sweep point, trial)
//! cell derives its own RNG streams from the base seed, channels are shared
//! across schemes within a cell, and aggregation is index-ordered so thread
//! scheduling never affects the output.

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driver::{
    solve_fd, solve_fd_zf, solve_hybrid, AnalogSolver, DriverConfig, Termination,
};
use crate::error::{AircompError, Result};
use crate::model::{derive_seed, generate_rayleigh_channels, init_state, mse_effective};
use crate::SystemConfig64;

/// Scenario parameter being swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    #[serde(rename = "N_r")]
    Nr,
    #[serde(rename = "N_rf")]
    Nrf,
    K,
    L,
    #[serde(rename = "SNR_dB")]
    SnrDb,
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SweepVar::Nr => "N_r",
            SweepVar::Nrf => "N_rf",
            SweepVar::K => "K",
            SweepVar::L => "L",
            SweepVar::SnrDb => "SNR_dB",
        };
        f.write_str(s)
    }
}

/// Beamforming scheme under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "Lagrange-SCA")]
    LagrangeSca,
    #[serde(rename = "Lagrange-BCD")]
    LagrangeBcd,
    #[serde(rename = "FD")]
    Fd,
    #[serde(rename = "FD-ZF")]
    FdZf,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scheme::LagrangeSca => "Lagrange-SCA",
            Scheme::LagrangeBcd => "Lagrange-BCD",
            Scheme::Fd => "FD",
            Scheme::FdZf => "FD-ZF",
        };
        f.write_str(s)
    }
}

fn default_noise_var() -> f64 {
    1.0
}
fn default_path_loss() -> f64 {
    1.0
}
fn default_trials() -> usize {
    500
}
fn default_base_seed() -> u64 {
    1
}

/// One figure-style Monte-Carlo sweep.
///
/// `tx_antennas = None` applies the `N_t = L` convention (including when `L`
/// itself is swept). SNR is given in dB and converted to the power budget as
/// `P = noise_var * 10^(SNR_dB/10) / path_loss`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub sweep_variable: SweepVar,
    pub sweep_values: Vec<f64>,
    pub devices: usize,
    #[serde(default)]
    pub tx_antennas: Option<usize>,
    pub rx_antennas: usize,
    pub rf_chains: usize,
    pub functions: usize,
    pub snr_db: f64,
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    #[serde(default = "default_path_loss")]
    pub path_loss: f64,
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
    /// Keep the full-power initial transmit beamformers fixed (no transmit
    /// optimization); only meaningful for the FD scheme.
    #[serde(default)]
    pub fixed_tx: bool,
    /// Outer-loop stopping threshold on the per-iteration MSE decrease.
    #[serde(default = "default_outer_eps")]
    pub outer_eps: f64,
    /// Outer-loop iteration cap.
    #[serde(default = "default_outer_max_iters")]
    pub outer_max_iters: usize,
    /// Override of `outer_eps` for the FD benchmark; the FD curve serves as
    /// the performance reference, so sweeps may run it to a tighter
    /// tolerance than the schemes under comparison.
    #[serde(default)]
    pub fd_outer_eps: Option<f64>,
    /// Override of `outer_max_iters` for the FD benchmark.
    #[serde(default)]
    pub fd_outer_max_iters: Option<usize>,
}

fn default_outer_eps() -> f64 {
    1e-3
}

fn default_outer_max_iters() -> usize {
    100
}

impl Default for ExperimentSpec {
    /// Placeholder single-point sweep; callers override the scenario fields.
    fn default() -> Self {
        Self {
            sweep_variable: SweepVar::Nr,
            sweep_values: vec![64.0],
            devices: 1,
            tx_antennas: None,
            rx_antennas: 64,
            rf_chains: 1,
            functions: 1,
            snr_db: 10.0,
            noise_var: default_noise_var(),
            path_loss: default_path_loss(),
            schemes: vec![Scheme::Fd],
            trials: default_trials(),
            base_seed: default_base_seed(),
            fixed_tx: false,
            outer_eps: default_outer_eps(),
            outer_max_iters: default_outer_max_iters(),
            fd_outer_eps: None,
            fd_outer_max_iters: None,
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: Self = toml::from_str(s).map_err(|e| AircompError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AircompError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep_values.is_empty() {
            return Err(AircompError::InvalidConfig(
                "sweep_values must be non-empty".into(),
            ));
        }
        if self.sweep_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AircompError::InvalidConfig(
                "sweep_values must be strictly increasing".into(),
            ));
        }
        if self.trials < 1 {
            return Err(AircompError::InvalidConfig("trials must be >= 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(AircompError::InvalidConfig(
                "at least one scheme is required".into(),
            ));
        }
        for &v in &self.sweep_values {
            self.config_at(v)?;
        }
        Ok(())
    }

    /// The concrete scenario at one sweep value.
    pub fn config_at(&self, value: f64) -> Result<SystemConfig64> {
        let as_count = |name: &str| -> Result<usize> {
            if value.fract() != 0.0 || value < 1.0 || value > 1e9 {
                return Err(AircompError::InvalidConfig(format!(
                    "sweep value {value} is not a valid {name} count"
                )));
            }
            Ok(value as usize)
        };
        let mut devices = self.devices;
        let mut rx = self.rx_antennas;
        let mut rf = self.rf_chains;
        let mut functions = self.functions;
        let mut snr_db = self.snr_db;
        match self.sweep_variable {
            SweepVar::Nr => rx = as_count("N_r")?,
            SweepVar::Nrf => rf = as_count("N_rf")?,
            SweepVar::K => devices = as_count("K")?,
            SweepVar::L => functions = as_count("L")?,
            SweepVar::SnrDb => snr_db = value,
        }
        let nt = self.tx_antennas.unwrap_or(functions);
        let power = self.noise_var * 10f64.powf(snr_db / 10.0) / self.path_loss;
        SystemConfig64::new(
            devices,
            nt,
            rx,
            rf,
            functions,
            power,
            self.noise_var,
            self.path_loss,
        )
    }
}

/// Aggregated outcome of one (scheme, sweep value) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub sweep_value: f64,
    pub mean_mse: f64,
    pub std_error: f64,
    pub mean_outer_iters: f64,
    pub mean_wall_time_s: f64,
    pub trials: usize,
    pub excluded: usize,
}

/// All rows of one sweep, ordered by (scheme, sweep value).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub sweep_variable: SweepVar,
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    /// The row for one (scheme, sweep value) cell.
    pub fn row(&self, scheme: Scheme, sweep_value: f64) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.sweep_value == sweep_value)
    }
}

/// Per-trial outcome of a single scheme.
#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    mse: f64,
    outer_iters: usize,
    wall_time: f64,
}

fn run_trial(
    spec: &ExperimentSpec,
    cfg: &SystemConfig64,
    sweep_idx: usize,
    trial: usize,
) -> Vec<Option<TrialOutcome>> {
    let cell = derive_seed(spec.base_seed, &[sweep_idx as u64, trial as u64]);
    // matched channels and initialization across all schemes of this trial
    let ch = generate_rayleigh_channels(cfg, derive_seed(cell, &[0]));
    let init = init_state(cfg, derive_seed(cell, &[1]));

    let dcfg_with = |solver: AnalogSolver| {
        let mut d = DriverConfig::with_solver(solver);
        d.outer_eps = spec.outer_eps;
        d.outer_max_iters = spec.outer_max_iters;
        d
    };
    let fd_dcfg = {
        let mut d = DriverConfig::<f64>::default();
        d.outer_eps = spec.fd_outer_eps.unwrap_or(spec.outer_eps);
        d.outer_max_iters = spec.fd_outer_max_iters.unwrap_or(spec.outer_max_iters);
        d
    };

    spec.schemes
        .iter()
        .map(|scheme| {
            let solved = match scheme {
                Scheme::LagrangeSca => {
                    solve_hybrid(cfg, &ch, &init, &dcfg_with(AnalogSolver::Sca)).map(|(_, t)| t)
                }
                Scheme::LagrangeBcd => {
                    solve_hybrid(cfg, &ch, &init, &dcfg_with(AnalogSolver::Bcd)).map(|(_, t)| t)
                }
                Scheme::Fd => {
                    if spec.fixed_tx {
                        let start = std::time::Instant::now();
                        crate::digital::solve_fully_digital_mmse(cfg, &ch, &init.tx).and_then(
                            |u| {
                                let mse = mse_effective(cfg, &ch, &init.tx, &u)?;
                                Ok(crate::driver::SolveTrace {
                                    mse_history: vec![mse],
                                    termination: Termination::ConvergedEps,
                                    outer_iters: 0,
                                    wall_time: start.elapsed().as_secs_f64(),
                                    tx_reports: Vec::new(),
                                })
                            },
                        )
                    } else {
                        solve_fd(cfg, &ch, &init.tx, &fd_dcfg).map(|(_, t)| t)
                    }
                }
                Scheme::FdZf => {
                    solve_fd_zf(cfg, &ch, &init, &dcfg_with(AnalogSolver::Sca)).map(|(_, t)| t)
                }
            };
            match solved {
                Ok(trace)
                    if trace.termination != Termination::AbortedNonFinite
                        && trace.final_mse().is_finite() =>
                {
                    Some(TrialOutcome {
                        mse: trace.final_mse(),
                        outer_iters: trace.outer_iters,
                        wall_time: trace.wall_time,
                    })
                }
                _ => None,
            }
        })
        .collect()
}

/// Run the full sweep. Trials execute in parallel; the reduction is ordered
/// by trial index, so the numeric output is independent of thread count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut per_cell: Vec<Vec<ResultRow>> = Vec::with_capacity(spec.sweep_values.len());
    for (vi, &value) in spec.sweep_values.iter().enumerate() {
        let cfg = spec.config_at(value)?;
        let outcomes: Vec<Vec<Option<TrialOutcome>>> = (0..spec.trials)
            .into_par_iter()
            .map(|trial| run_trial(spec, &cfg, vi, trial))
            .collect();
        let rows = spec
            .schemes
            .iter()
            .enumerate()
            .map(|(si, &scheme)| {
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                let mut iters = 0.0;
                let mut wall = 0.0;
                let mut included = 0usize;
                for trial_outcomes in &outcomes {
                    if let Some(o) = trial_outcomes[si] {
                        sum += o.mse;
                        sum_sq += o.mse * o.mse;
                        iters += o.outer_iters as f64;
                        wall += o.wall_time;
                        included += 1;
                    }
                }
                let n = included as f64;
                let mean = sum / n;
                let var = (sum_sq / n - mean * mean).max(0.0);
                let se = if included > 1 {
                    (var / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                ResultRow {
                    scheme,
                    sweep_value: value,
                    mean_mse: mean,
                    std_error: se,
                    mean_outer_iters: iters / n,
                    mean_wall_time_s: wall / n,
                    trials: included,
                    excluded: spec.trials - included,
                }
            })
            .collect();
        per_cell.push(rows);
    }
    // order rows by (scheme, sweep value)
    let mut rows = Vec::with_capacity(spec.schemes.len() * spec.sweep_values.len());
    for si in 0..spec.schemes.len() {
        for cell in &per_cell {
            rows.push(cell[si].clone());
        }
    }
    Ok(ExperimentResult {
        sweep_variable: spec.sweep_variable,
        rows,
    })
}

pub const CSV_HEADER: &str =
    "scheme,sweep_var,sweep_value,mean_mse,std_error,mean_outer_iters,mean_wall_time_s,trials,excluded";

/// Render the result as CSV (UTF-8, LF, 17-significant-digit floats).
pub fn csv_string(res: &ExperimentResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &res.rows {
        out.push_str(&format!(
            "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{}\n",
            r.scheme,
            res.sweep_variable,
            r.sweep_value,
            r.mean_mse,
            r.std_error,
            r.mean_outer_iters,
            r.mean_wall_time_s,
            r.trials,
            r.excluded
        ));
    }
    out
}

/// CSV body with the wall-time column blanked; wall time is the only
/// non-deterministic column, so this is the string compared in determinism
/// audits.
pub fn csv_without_wall_time(csv: &str) -> String {
    csv.lines()
        .map(|line| {
            let mut fields: Vec<&str> = line.split(',').collect();
            if fields.len() == 9 {
                fields[6] = "";
            }
            fields.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parse a CSV produced by [`csv_string`] back into rows.
pub fn parse_csv(text: &str) -> Result<ExperimentResult> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(AircompError::Parse(format!(
                "unexpected CSV header: {other:?}"
            )))
        }
    }
    let mut sweep_variable = None;
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(AircompError::Parse(format!(
                "row {i}: expected 9 fields, got {}",
                f.len()
            )));
        }
        let scheme = match f[0] {
            "Lagrange-SCA" => Scheme::LagrangeSca,
            "Lagrange-BCD" => Scheme::LagrangeBcd,
            "FD" => Scheme::Fd,
            "FD-ZF" => Scheme::FdZf,
            other => return Err(AircompError::Parse(format!("unknown scheme {other}"))),
        };
        let var = match f[1] {
            "N_r" => SweepVar::Nr,
            "N_rf" => SweepVar::Nrf,
            "K" => SweepVar::K,
            "L" => SweepVar::L,
            "SNR_dB" => SweepVar::SnrDb,
            other => return Err(AircompError::Parse(format!("unknown sweep var {other}"))),
        };
        sweep_variable.get_or_insert(var);
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| AircompError::Parse(format!("row {i}: bad number {s}")))
        };
        let int = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| AircompError::Parse(format!("row {i}: bad integer {s}")))
        };
        rows.push(ResultRow {
            scheme,
            sweep_value: num(f[2])?,
            mean_mse: num(f[3])?,
            std_error: num(f[4])?,
            mean_outer_iters: num(f[5])?,
            mean_wall_time_s: num(f[6])?,
            trials: int(f[7])?,
            excluded: int(f[8])?,
        });
    }
    Ok(ExperimentResult {
        sweep_variable: sweep_variable.unwrap_or(SweepVar::Nr),
        rows,
    })
}

/// Write the CSV and its companion `<basename>.manifest` (JSON with the full
/// spec and tool version).
pub fn write_results(res: &ExperimentResult, spec: &ExperimentSpec, path: &Path) -> Result<()> {
    let io_err = |p: &Path, e: std::io::Error| AircompError::Io {
        path: p.display().to_string(),
        source: e,
    };
    std::fs::write(path, csv_string(res)).map_err(|e| io_err(path, e))?;
    let manifest_path = path.with_extension("manifest");
    let manifest = serde_json::json!({
        "tool": "aircomp",
        "version": env!("CARGO_PKG_VERSION"),
        "spec": spec,
    });
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| AircompError::Parse(e.to_string()))?;
    text.push('\n');
    std::fs::write(&manifest_path, text).map_err(|e| io_err(&manifest_path, e))?;
    Ok(())
}

/// Built-in sweep setups mirroring the evaluation scenarios (desk-scale
/// trial counts; raise `trials` for full fidelity).
pub fn figure_preset(tag: &str) -> Option<ExperimentSpec> {
    let all = vec![
        Scheme::Fd,
        Scheme::LagrangeSca,
        Scheme::LagrangeBcd,
        Scheme::FdZf,
    ];
    let base = ExperimentSpec {
        sweep_variable: SweepVar::Nr,
        sweep_values: vec![64.0, 128.0, 256.0],
        devices: 50,
        tx_antennas: Some(10),
        rx_antennas: 64,
        rf_chains: 16,
        functions: 10,
        snr_db: 10.0,
        noise_var: 1.0,
        path_loss: 1.0,
        schemes: all.clone(),
        trials: 100,
        base_seed: 1,
        fixed_tx: false,
        ..ExperimentSpec::default()
    };
    let spec = match tag {
        "fig2" => ExperimentSpec {
            sweep_values: vec![64.0, 128.0, 256.0, 512.0],
            devices: 20,
            tx_antennas: Some(2),
            rf_chains: 2,
            functions: 2,
            schemes: vec![Scheme::Fd],
            fixed_tx: true,
            ..base
        },
        "fig3" => ExperimentSpec {
            schemes: vec![Scheme::LagrangeSca],
            ..base
        },
        "fig4" => ExperimentSpec {
            schemes: vec![Scheme::LagrangeBcd],
            ..base
        },
        "fig5" => ExperimentSpec {
            rf_chains: 10,
            ..base
        },
        "fig6" => ExperimentSpec {
            sweep_variable: SweepVar::K,
            sweep_values: vec![30.0, 40.0, 50.0, 60.0, 70.0, 80.0],
            ..base
        },
        "fig7" => ExperimentSpec {
            sweep_variable: SweepVar::L,
            sweep_values: vec![2.0, 4.0, 6.0, 8.0, 10.0],
            tx_antennas: None,
            rf_chains: 10,
            ..base
        },
        "fig8" => ExperimentSpec {
            sweep_variable: SweepVar::Nrf,
            sweep_values: vec![10.0, 12.0, 14.0, 16.0, 18.0, 20.0],
            ..base
        },
        "fig9" => ExperimentSpec {
            sweep_variable: SweepVar::SnrDb,
            sweep_values: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            rf_chains: 10,
            ..base
        },
        _ => return None,
    };
    Some(spec)
}
