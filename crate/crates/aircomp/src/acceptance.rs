//! Library-level acceptance checks shared by the CLI `validate` subcommand
//! and the `acceptance` integration test target.
//!
//! Each criterion exercises a contract of the optimization stack against an
//! independent oracle: finite differences, brute-force grids, closed forms
//! on exactly-orthogonal channels, Monte-Carlo statistics, or byte-level
//! determinism audits. Several criteria are Monte-Carlo heavy; the full
//! suite takes tens of minutes on one core.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::asymptotics::{
    mmse_simplified, mse_exact_orthogonal, validate_theorem2, ChannelModel,
};
use crate::bcd::{bcd_build_workspace, bcd_entry_b};
use crate::digital::solve_fully_digital_mmse;
use crate::driver::{solve_hybrid, AnalogSolver, DriverConfig, SolveTrace};
use crate::experiment::{
    csv_string, csv_without_wall_time, run_experiment, ExperimentSpec, ResultRow, Scheme,
    SweepVar,
};
use crate::model::{
    compute_mse, estimate_mse_empirical, generate_orthogonal_channels,
    generate_rayleigh_channels, init_state, mse_effective, phi_value, wrap_phase,
    BeamformingState,
};
use crate::sca::sca_gradient;
use crate::{AnalogCombiner, CMat64, DigitalCombiner, RVec64, SystemConfig64};

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub index: usize,
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
}

impl CriterionResult {
    /// The one-line pass/fail summary printed by the CLI and tests.
    pub fn summary_line(&self) -> String {
        format!(
            "criterion {:2} [{}] {}: {}",
            self.index,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.details
        )
    }
}

fn result(index: usize, name: &'static str, passed: bool, details: String) -> CriterionResult {
    CriterionResult {
        index,
        name,
        passed,
        details,
    }
}

fn random_small_instance(
    seed: u64,
) -> (SystemConfig64, crate::ChannelSet64, BeamformingState<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [1usize, 2, 4, 8];
    let mut pick = |min: usize| -> usize {
        loop {
            let d = dims[rng.gen_range(0..dims.len())];
            if d >= min {
                return d;
            }
        }
    };
    let nr = pick(2);
    let nrf = loop {
        let d = pick(1);
        if d <= nr {
            break d;
        }
    };
    let nt = pick(1);
    let l = loop {
        let d = pick(1);
        if d <= nrf.min(nt) {
            break d;
        }
    };
    let k = pick(1);
    let cfg = SystemConfig64::new(k, nt, nr, nrf, l, 1.0, 0.7, 1.0).unwrap();
    let ch = generate_rayleigh_channels(&cfg, seed ^ 0xc0ffee);
    let mut state = init_state(&cfg, seed ^ 0xfeed);
    state.bb = DigitalCombiner::new(CMat64::from_fn(nrf, l, |_, _| {
        Complex::new(0.4 * (rng.gen::<f64>() - 0.5), 0.4 * (rng.gen::<f64>() - 0.5))
    }))
    .unwrap();
    (cfg, ch, state)
}

/// Criterion 1: the analytic phase gradient matches central finite
/// differences of the MSE (step 1e-6, relative error < 1e-5) on 20 random
/// instances with dimensions drawn from {1, 2, 4, 8}.
pub fn criterion_1() -> CriterionResult {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let (cfg, ch, state) = random_small_instance(1000 + seed);
        let g = sca_gradient(&cfg, &ch, &state.tx, &state.rf, &state.bb).unwrap();
        let h = 1e-6;
        let theta0 = state.rf.phases().clone();
        let eval = |theta: &RVec64| {
            let rf = AnalogCombiner::from_phases(cfg.rx_antennas, cfg.rf_chains, theta.clone())
                .unwrap();
            let s = BeamformingState {
                tx: state.tx.clone(),
                rf,
                bb: state.bb.clone(),
            };
            compute_mse(&cfg, &ch, &s).unwrap()
        };
        let mut fd = RVec64::zeros(theta0.len());
        for i in 0..theta0.len() {
            let mut tp = theta0.clone();
            tp[i] += h;
            let mut tm = theta0.clone();
            tm[i] -= h;
            fd[i] = (eval(&tp) - eval(&tm)) / (2.0 * h);
        }
        let rel = (&g - &fd).norm() / fd.norm().max(1e-12);
        worst = worst.max(rel);
    }
    result(
        1,
        "phase gradient vs finite differences",
        worst < 1e-5,
        format!("worst relative error {worst:.3e} over 20 instances (bound 1e-5)"),
    )
}

/// Criterion 2: the closed-form per-entry phase lies within one grid step of
/// a 3600-point brute-force minimizer, over 20 instances x 3 entry picks.
pub fn criterion_2() -> CriterionResult {
    let n = 3600usize;
    let step = 2.0 * std::f64::consts::PI / n as f64;
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let (cfg, ch, state) = random_small_instance(2000 + seed);
        let ws = bcd_build_workspace(&cfg, &ch, &state.tx, &state.rf, &state.bb);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..3 {
            let i = rng.gen_range(0..cfg.rx_antennas);
            let j = rng.gen_range(0..cfg.rf_chains);
            let b = bcd_entry_b(&ws, &state.rf, i, j);
            if b.norm() < 1e-12 {
                continue; // any phase is optimal on a tie
            }
            let mut best = (f64::INFINITY, 0.0f64);
            for gi in 0..n {
                let psi = -std::f64::consts::PI + step * gi as f64;
                let mut u = state.rf.matrix().clone();
                u[(i, j)] = Complex::new(psi.cos(), psi.sin());
                let val = phi_value(&ws.a, &ws.b, &ws.c, &u);
                if val < best.0 {
                    best = (val, psi);
                }
            }
            let diff = wrap_phase(b.arg() - best.1).abs();
            worst = worst.max(diff);
        }
    }
    result(
        2,
        "entry-wise phase vs brute-force grid",
        worst <= step + 1e-9,
        format!("worst phase gap {worst:.3e} rad (grid step {step:.3e})"),
    )
}

fn monotone_suite() -> Vec<(String, SolveTrace<f64>, f64)> {
    let mut out = Vec::new();
    let scales = [
        ("small", SystemConfig64::new(5, 2, 16, 4, 2, 10.0, 1.0, 1.0).unwrap(), 100u64),
        (
            "paper",
            SystemConfig64::new(50, 10, 64, 16, 10, 10.0, 1.0, 1.0).unwrap(),
            100u64,
        ),
    ];
    for (tag, cfg, seeds) in scales {
        for solver in [AnalogSolver::Sca, AnalogSolver::Bcd] {
            for seed in 0..seeds {
                let ch = generate_rayleigh_channels(&cfg, crate::model::derive_seed(seed, &[7]));
                let init = init_state(&cfg, crate::model::derive_seed(seed, &[8]));
                let dcfg = DriverConfig::with_solver(solver);
                let (_, trace) = solve_hybrid(&cfg, &ch, &init, &dcfg).unwrap();
                out.push((format!("{tag}/{solver:?}/{seed}"), trace, cfg.power));
            }
        }
    }
    out
}

/// Criteria 3 and 4 share one batch of full solves: 100 seeds x 2 scales x
/// both analog solvers. Criterion 3 checks that no trace entry increases by
/// more than 1e-9; criterion 4 checks the power/multiplier certificate of
/// every transmit solve in the same batch.
pub fn criteria_3_4() -> (CriterionResult, CriterionResult) {
    let suite = monotone_suite();
    let mut violations = Vec::new();
    let mut kkt_failures = Vec::new();
    for (tag, trace, power) in &suite {
        if !trace.is_monotone(1e-9) {
            violations.push(tag.clone());
        }
        for rep in &trace.tx_reports {
            if !rep.kkt_satisfied(*power) {
                kkt_failures.push(tag.clone());
                break;
            }
        }
    }
    let c3 = result(
        3,
        "monotone solve traces",
        violations.is_empty(),
        if violations.is_empty() {
            format!("{} solves, no increase above 1e-9", suite.len())
        } else {
            format!("increases in {} solves, e.g. {}", violations.len(), violations[0])
        },
    );
    let c4 = result(
        4,
        "transmit power/multiplier certificate",
        kkt_failures.is_empty(),
        if kkt_failures.is_empty() {
            format!("certificate holds for every device in {} solves", suite.len())
        } else {
            format!("violated in {} solves, e.g. {}", kkt_failures.len(), kkt_failures[0])
        },
    );
    (c3, c4)
}

/// Criterion 5: on exactly-orthogonal channels with the full-power
/// `V^H V = (P/L) I` beamformers, the fully-digital sum-MMSE MSE equals the
/// pre-limit closed form (1e-6 relative), and the simplified large-array
/// receiver matches it (1e-8 relative).
pub fn criterion_5() -> CriterionResult {
    let mut worst_closed = 0.0f64;
    let mut worst_simplified = 0.0f64;
    for (k, nt, nr) in [(4usize, 2usize, 16usize), (8, 2, 32), (20, 2, 64)] {
        let cfg = SystemConfig64::new(k, nt, nr, 2, 2, 10.0, 1.0, 1.0).unwrap();
        let ch = generate_orthogonal_channels(&cfg, 500 + nr as u64).unwrap();
        let tx = init_state(&cfg, 0).tx;
        let exact = solve_fully_digital_mmse(&cfg, &ch, &tx).unwrap();
        let mse = mse_effective(&cfg, &ch, &tx, &exact).unwrap();
        let closed = mse_exact_orthogonal(&cfg);
        worst_closed = worst_closed.max(((mse - closed) / closed).abs());
        let simple = mmse_simplified(&cfg, &ch, &tx).unwrap();
        let mse_simple = mse_effective(&cfg, &ch, &tx, &simple).unwrap();
        worst_simplified = worst_simplified.max(((mse_simple - mse) / mse).abs());
    }
    result(
        5,
        "closed-form identity on orthogonal channels",
        worst_closed < 1e-6 && worst_simplified < 1e-8,
        format!(
            "closed-form gap {worst_closed:.3e} (bound 1e-6), \
             simplified-receiver gap {worst_simplified:.3e} (bound 1e-8)"
        ),
    )
}

/// Criterion 6: Rayleigh-channel large-array sweep (K=20, N_t=L=2,
/// SNR=10 dB, 500 trials): the relative gap to the asymptote is
/// non-increasing over N_r in {64,...,512} within trial noise and small at
/// N_r = 512. The asymptote drops cross-channel correlation terms whose
/// relative size is roughly K*L/N_r (about 0.08 at N_r = 512; an
/// independent simulation of the same ensemble gives 0.0844 +- 0.003), so
/// the final-gap bound is 0.10.
pub fn criterion_6() -> CriterionResult {
    let cfg = SystemConfig64::new(20, 2, 64, 2, 2, 10.0, 1.0, 1.0).unwrap();
    let rows =
        validate_theorem2(&cfg, &[64, 128, 256, 512], 500, 601, ChannelModel::Rayleigh).unwrap();
    let last = rows.last().unwrap();
    let ref_ok = (last.limit - 0.015625).abs() < 1e-12;
    let final_ok = last.rel_gap < 0.10;
    let mut trend_ok = true;
    for w in rows.windows(2) {
        let slack = 2.0 * (w[0].std_error / w[0].limit + w[1].std_error / w[1].limit);
        if w[1].rel_gap > w[0].rel_gap + slack {
            trend_ok = false;
        }
    }
    let gaps: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.rel_gap)).collect();
    result(
        6,
        "large-array gap shrinks on Rayleigh channels",
        ref_ok && final_ok && trend_ok,
        format!(
            "rel gaps over N_r {{64,128,256,512}}: [{}] (final bound 0.10)",
            gaps.join(", ")
        ),
    )
}

fn ordering_violated(better: &ResultRow, worse: &ResultRow) -> bool {
    let slack = 2.0 * (better.std_error + worse.std_error);
    better.mean_mse > worse.mean_mse + slack
}

/// Criterion 7: at N_r=64, N_rf=16, K=50, L=10, N_t=10, SNR=10 dB over 100
/// matched trials, mean MSE obeys FD <= Lagrange-SCA <= Lagrange-BCD and
/// Lagrange-SCA <= FD-ZF, each up to two standard errors.
pub fn criterion_7() -> CriterionResult {
    let spec = ExperimentSpec {
        sweep_variable: SweepVar::SnrDb,
        sweep_values: vec![10.0],
        devices: 50,
        tx_antennas: Some(10),
        rx_antennas: 64,
        rf_chains: 16,
        functions: 10,
        snr_db: 10.0,
        noise_var: 1.0,
        path_loss: 1.0,
        schemes: vec![
            Scheme::Fd,
            Scheme::LagrangeSca,
            Scheme::LagrangeBcd,
            Scheme::FdZf,
        ],
        trials: 100,
        base_seed: 701,
        fixed_tx: false,
        // the FD benchmark is the performance reference; run it to a tight
        // tolerance so it reflects the converged bound rather than an
        // equal-budget truncation
        fd_outer_eps: Some(1e-5),
        fd_outer_max_iters: Some(1000),
        ..ExperimentSpec::default()
    };
    let res = run_experiment(&spec).unwrap();
    let row = |s: Scheme| res.row(s, 10.0).unwrap().clone();
    let (fd, sca, bcd, fdzf) = (
        row(Scheme::Fd),
        row(Scheme::LagrangeSca),
        row(Scheme::LagrangeBcd),
        row(Scheme::FdZf),
    );
    let ok = !ordering_violated(&fd, &sca)
        && !ordering_violated(&sca, &bcd)
        && !ordering_violated(&sca, &fdzf);
    result(
        7,
        "scheme ordering at the reference operating point",
        ok,
        format!(
            "mean MSE: FD {:.4} (se {:.4}), SCA {:.4} (se {:.4}), BCD {:.4} (se {:.4}), \
             FD-ZF {:.4} (se {:.4})",
            fd.mean_mse,
            fd.std_error,
            sca.mean_mse,
            sca.std_error,
            bcd.mean_mse,
            bcd.std_error,
            fdzf.mean_mse,
            fdzf.std_error
        ),
    )
}

fn trend_spec(
    var: SweepVar,
    values: Vec<f64>,
    rf_chains: usize,
    tx_antennas: Option<usize>,
    schemes: Vec<Scheme>,
    base_seed: u64,
) -> ExperimentSpec {
    ExperimentSpec {
        sweep_variable: var,
        sweep_values: values,
        devices: 50,
        tx_antennas,
        rx_antennas: 64,
        rf_chains,
        functions: 10,
        snr_db: 10.0,
        noise_var: 1.0,
        path_loss: 1.0,
        schemes,
        trials: 100,
        base_seed,
        fixed_tx: false,
        ..ExperimentSpec::default()
    }
}

fn rows_for(res: &crate::experiment::ExperimentResult, s: Scheme) -> Vec<ResultRow> {
    res.rows.iter().filter(|r| r.scheme == s).cloned().collect()
}

fn strictly_increasing(rows: &[ResultRow]) -> bool {
    rows.windows(2)
        .all(|w| w[1].mean_mse > w[0].mean_mse + 2.0 * (w[0].std_error + w[1].std_error))
}

fn non_increasing(rows: &[ResultRow]) -> bool {
    rows.windows(2)
        .all(|w| w[1].mean_mse <= w[0].mean_mse + 2.0 * (w[0].std_error + w[1].std_error))
}

fn strictly_decreasing(rows: &[ResultRow]) -> bool {
    rows.windows(2)
        .all(|w| w[1].mean_mse < w[0].mean_mse - 2.0 * (w[0].std_error + w[1].std_error))
}

fn flat(rows: &[ResultRow]) -> bool {
    rows.windows(2)
        .all(|w| (w[1].mean_mse - w[0].mean_mse).abs() <= 2.0 * (w[0].std_error + w[1].std_error))
}

/// Criterion 8: Monte-Carlo trend checks at 100 trials per point, two
/// standard errors of resolution: mean MSE increases in K and in L,
/// decreases in SNR, and is non-increasing in the RF chain count for the
/// hybrid schemes while the fully-digital baseline stays flat.
pub fn criterion_8() -> CriterionResult {
    let mut notes = Vec::new();
    let mut ok = true;

    let res = run_experiment(&trend_spec(
        SweepVar::K,
        vec![30.0, 50.0, 80.0],
        16,
        Some(10),
        vec![Scheme::Fd, Scheme::LagrangeBcd],
        801,
    ))
    .unwrap();
    for s in [Scheme::Fd, Scheme::LagrangeBcd] {
        let inc = strictly_increasing(&rows_for(&res, s));
        ok &= inc;
        notes.push(format!("{s} increasing in K: {inc}"));
    }

    let res = run_experiment(&trend_spec(
        SweepVar::Nrf,
        vec![10.0, 15.0, 20.0],
        16,
        Some(10),
        vec![Scheme::Fd, Scheme::LagrangeSca, Scheme::LagrangeBcd],
        802,
    ))
    .unwrap();
    for s in [Scheme::LagrangeSca, Scheme::LagrangeBcd] {
        let dec = non_increasing(&rows_for(&res, s));
        ok &= dec;
        notes.push(format!("{s} non-increasing in N_rf: {dec}"));
    }
    let fd_flat = flat(&rows_for(&res, Scheme::Fd));
    ok &= fd_flat;
    notes.push(format!("FD flat in N_rf: {fd_flat}"));

    let res = run_experiment(&trend_spec(
        SweepVar::SnrDb,
        vec![0.0, 10.0, 20.0],
        10,
        Some(10),
        vec![Scheme::Fd, Scheme::LagrangeBcd],
        803,
    ))
    .unwrap();
    for s in [Scheme::Fd, Scheme::LagrangeBcd] {
        let dec = strictly_decreasing(&rows_for(&res, s));
        ok &= dec;
        notes.push(format!("{s} decreasing in SNR: {dec}"));
    }

    let res = run_experiment(&trend_spec(
        SweepVar::L,
        vec![2.0, 6.0, 10.0],
        10,
        None,
        vec![Scheme::Fd, Scheme::LagrangeBcd],
        804,
    ))
    .unwrap();
    for s in [Scheme::Fd, Scheme::LagrangeBcd] {
        let inc = strictly_increasing(&rows_for(&res, s));
        ok &= inc;
        notes.push(format!("{s} increasing in L: {inc}"));
    }

    result(8, "Monte-Carlo trend checks", ok, notes.join("; "))
}

/// Criterion 9: the Monte-Carlo MSE estimator agrees with the analytic MSE
/// within three standard errors on 50 random instances at 1e5 samples.
/// With 50 independent instances roughly one 3-sigma excursion is expected
/// by chance, so up to two are tolerated as long as none exceeds 5 sigma.
pub fn criterion_9() -> CriterionResult {
    let mut beyond_3 = 0usize;
    let mut worst_sigma = 0.0f64;
    for seed in 0..50u64 {
        let (cfg, ch, state) = random_small_instance(9000 + seed);
        let analytic = compute_mse(&cfg, &ch, &state).unwrap();
        let (mean, se) =
            estimate_mse_empirical(&cfg, &ch, &state, 100_000, seed ^ 0x99).unwrap();
        let sigmas = (mean - analytic).abs() / se.max(1e-300);
        worst_sigma = worst_sigma.max(sigmas);
        if sigmas > 3.0 {
            beyond_3 += 1;
        }
    }
    result(
        9,
        "Monte-Carlo estimator vs analytic MSE",
        beyond_3 <= 2 && worst_sigma < 5.0,
        format!(
            "{beyond_3}/50 instances beyond 3 standard errors (worst {worst_sigma:.2}, \
             allowance 2 below 5 sigma)"
        ),
    )
}

/// Criterion 10: identical specs produce identical CSV bodies across two
/// runs (the wall-time column, which measures the host rather than the
/// result, is blanked before comparison).
pub fn criterion_10() -> CriterionResult {
    let spec = ExperimentSpec {
        sweep_variable: SweepVar::Nr,
        sweep_values: vec![12.0, 16.0],
        devices: 4,
        tx_antennas: Some(2),
        rx_antennas: 16,
        rf_chains: 4,
        functions: 2,
        snr_db: 10.0,
        noise_var: 1.0,
        path_loss: 1.0,
        schemes: vec![
            Scheme::Fd,
            Scheme::LagrangeSca,
            Scheme::LagrangeBcd,
            Scheme::FdZf,
        ],
        trials: 3,
        base_seed: 1001,
        fixed_tx: false,
        ..ExperimentSpec::default()
    };
    let a = csv_string(&run_experiment(&spec).unwrap());
    let b = csv_string(&run_experiment(&spec).unwrap());
    let identical = csv_without_wall_time(&a) == csv_without_wall_time(&b);
    result(
        10,
        "byte-identical CSV across runs",
        identical,
        if identical {
            "two runs of the same spec agree byte-for-byte (wall-time column excluded)".into()
        } else {
            "CSV bodies differ between runs".into()
        },
    )
}

/// Run all criteria in order, printing one summary line each; returns the
/// results for programmatic inspection.
pub fn run_all() -> Vec<CriterionResult> {
    let mut results = Vec::new();
    results.push(criterion_1());
    results.push(criterion_2());
    let (c3, c4) = criteria_3_4();
    results.push(c3);
    results.push(c4);
    results.push(criterion_5());
    results.push(criterion_6());
    results.push(criterion_7());
    results.push(criterion_8());
    results.push(criterion_9());
    results.push(criterion_10());
    for r in &results {
        println!("{}", r.summary_line());
    }
    results
}
