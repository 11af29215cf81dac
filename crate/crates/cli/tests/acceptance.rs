//! Acceptance suite: one PASS/FAIL line per criterion with its runtime.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported like any other but do not
//! fail the run; any other failure, or an evaluation error, does.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use phaseq::Threaded;
use phaseq_core::dynamics::{evolve, evolve_final, DEFAULT_DT};
use phaseq_core::experiments::{
    avoided_crossing_oracle, default_ramsey_grid, default_sideband_grid, default_tsep_grid, run_gate_map,
    run_ramsey_filter, run_spectroscopy, run_tls_crossing, run_tsep_sweep, run_width_sweep, Executor, GateMapConfig,
    Lab, PowerMode, SpectroscopyConfig, TlsCrossingConfig, WIDTH_SWEEP_GRID,
};
use phaseq_core::fft::dtft;
use phaseq_core::pulses::{fwhm_to_sigma, gaussian_envelope, power_spectrum, PulseSpec};
use phaseq_core::readout::{compose_budget, optimal_iz_visibility, BudgetEntry, ReadoutModel};
use phaseq_core::sigchain::{apply_chain, calibrate_sidebands, precorrect, sideband_suppression_db, ChainModel};
use phaseq_core::system::{pure_state, DensityState, QutritParams, TlsParams};
use phaseq_core::waveform::{ConstantDrive, Waveform};
use phaseq_core::{Result, C64};

/// Criteria the model does not meet at the calibrated defaults.
const KNOWN_FAILURES: [usize; 2] = [3, 7];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

/// `[lo, hi]` membership that also rejects NaN.
fn within(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn c1() -> Result<Verdict> {
    let below = optimal_iz_visibility(&ReadoutModel::below_tls())?.visibility;
    let above = optimal_iz_visibility(&ReadoutModel::above_tls())?.visibility;
    let diff = below - above;
    let tls = ReadoutModel::default().tls_loss;
    let pass = (below - 0.895).abs() <= 0.003 && (above - 0.850).abs() <= 0.003 && (diff - tls).abs() <= 1e-6;
    Ok(Verdict::new(pass, format!("visibility {below:.5} / {above:.5}, difference {diff:.7} vs {tls}")))
}

fn c2() -> Result<Verdict> {
    let e0 = [BudgetEntry::new("stray_0", 0.034)];
    let mut e1 = vec![BudgetEntry::new("t1", 0.010), BudgetEntry::new("tls_other", 0.050), BudgetEntry::new("no_tunnel", 0.011)];
    let a = compose_budget(&e0, &e1)?.visibility;
    e1.push(BudgetEntry::new("tls_705", 0.045));
    let b = compose_budget(&e0, &e1)?.visibility;
    let pass = (a - 0.895).abs() <= 1e-12 && (b - 0.850).abs() <= 1e-12;
    Ok(Verdict::new(pass, format!("visibility {a} then {b}")))
}

fn c3(exec: &dyn Executor) -> Result<Verdict> {
    let r = run_tsep_sweep(&Lab::default(), &default_tsep_grid(), exec)?;
    let err = r.fit("gate_error_reference").unwrap_or(f64::NAN);
    let per = r.fit("error_per_pulse").unwrap_or(f64::NAN);
    let base = r.fit("baseline").unwrap_or(f64::NAN);
    let pass = within(err, 0.03, 0.05) && within(per, 0.015, 0.025) && (base - 0.034).abs() < 1e-12;
    Ok(Verdict::new(
        pass,
        format!("gate error {err:.4} at 12 ns (target 0.04 +/- 0.01), per pulse {per:.4}, baseline {base:.4}"),
    ))
}

/// `P2` after one calibrated pulse of the lab's own shape.
fn single_pulse_p2(lab: &Lab) -> Result<f64> {
    let cal = lab.calibrate_joint(&lab.pulse)?;
    let env = lab.pulse.build(cal.amplitude)?;
    let s = lab.propagator(cal.detuning_mhz)?.final_state(&lab.ground(), &env, lab.dt)?;
    Ok(s.populations().get(2).copied().unwrap_or(0.0))
}

fn theta_variation(lab: &Lab, cfg: &GateMapConfig, exec: &dyn Executor) -> Result<f64> {
    Ok(run_gate_map(lab, cfg, exec)?.fit("theta_variation_on_resonance").unwrap_or(f64::NAN))
}

fn c4(exec: &dyn Executor) -> Result<Verdict> {
    let row = GateMapConfig { detunings_mhz: vec![0.0], ..GateMapConfig::default() };
    let two = Lab::ideal().with_levels(2);
    let var2 = theta_variation(&two, &row, exec)?;

    let start = Instant::now();
    let lab = Lab::default();
    let full = GateMapConfig::default();
    let var3 = theta_variation(&lab, &full, exec)?;
    let map_s = start.elapsed().as_secs_f64();
    let bound = 4.0 * single_pulse_p2(&lab)?;

    let coherent = Lab { decoherence: false, ..Lab::default() };
    let var3c = theta_variation(&coherent, &row, exec)?;
    let bound_c = 4.0 * single_pulse_p2(&coherent)?;

    let pass = var2 < 1e-9 && var3 < bound && var3c < bound_c && map_s < 30.0;
    Ok(Verdict::new(
        pass,
        format!(
            "d=2 variation {var2:.2e}; d=3 {}x{} map {var3:.2e} < {bound:.2e} in {map_s:.1} s; coherent d=3 {var3c:.2e} < {bound_c:.2e}",
            full.detunings_mhz.len(),
            full.thetas.len()
        ),
    ))
}

fn c5(exec: &dyn Executor) -> Result<Verdict> {
    let fwhm = 5.0;
    let grid = default_ramsey_grid(&PulseSpec::gaussian(fwhm))?;
    let o = run_ramsey_filter(&Lab::default(), &grid, fwhm, exec)?;
    let f = o.fit.frequency * 1e3;
    let period = o.fit.period();
    let pass = (f - 200.0).abs() <= 2.0 && (period - 5.0).abs() <= 0.05;
    Ok(Verdict::new(pass, format!("beat {f:.3} MHz, period {period:.4} ns ({fwhm} ns pulses)")))
}

fn c6(exec: &dyn Executor) -> Result<(Verdict, f64)> {
    let lab = Lab { decoherence: false, ..Lab::default() };
    let widths = [4.0, 5.0, 8.0];
    let r = run_width_sweep(&lab, &widths, exec)?;
    let direct = r.values("p2_direct").unwrap();
    let extracted = r.values("p2_ramsey").unwrap();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for ((w, d), e) in widths.iter().zip(direct).zip(extracted) {
        let peak_to_peak = 4.0 * e;
        let dev = rel(peak_to_peak, 4.0 * d);
        worst = if dev.is_nan() { f64::NAN } else { worst.max(dev) };
        parts.push(format!("{w} ns {:.2}%", 100.0 * dev));
    }
    Ok((Verdict::new(worst <= 0.10, format!("peak-to-peak vs 4 P2: {}", parts.join(", "))), direct[2]))
}

fn c7(exec: &dyn Executor, coherent_p2_8: f64) -> Result<Verdict> {
    let r = run_width_sweep(&Lab::default(), &WIDTH_SWEEP_GRID, exec)?;
    let direct = r.values("p2_direct").unwrap();
    let extracted = r.values("p2_ramsey").unwrap();
    let p8 = *direct.last().unwrap();
    let monotone = direct.windows(2).all(|w| w[1] < w[0]);
    let mut agree = true;
    let mut worst: f64 = 0.0;
    for (d, e) in direct.iter().zip(extracted) {
        if *d >= 1e-3 {
            let dev = rel(*e, *d);
            agree &= dev <= 0.15;
            worst = if dev.is_nan() { f64::NAN } else { worst.max(dev) };
        }
    }
    let pass = within(p8, 3e-5, 3e-4) && monotone && agree;
    Ok(Verdict::new(
        pass,
        format!(
            "P2(8 ns) {p8:.3e} (coherent {coherent_p2_8:.3e}), monotone {monotone}, worst direct/filter gap {:.1}%",
            100.0 * worst
        ),
    ))
}

fn c8(exec: &dyn Executor) -> Result<Verdict> {
    let mut lab = Lab::default();
    lab.system.f10_ghz = 6.25;
    let step = 0.005;
    let freqs: Vec<f64> = (0..=80).map(|k| 5.95 + step * k as f64).collect();
    let r = run_spectroscopy(&lab, &SpectroscopyConfig::new(freqs, PowerMode::High), exec)?;
    let n = r.fit("peak_count").unwrap_or(0.0) as usize;
    let peaks: Vec<f64> = (1..=n).filter_map(|k| r.fit(&format!("peak{k}_ghz"))).collect();
    let hit = |target: f64| peaks.iter().any(|p| (p - target).abs() <= step);
    let spectro = hit(6.25) && hit(6.15) && hit(6.05);

    let tls_lab = Lab { tls: TlsParams::enabled(), ..Lab::default() };
    let m = run_tls_crossing(&tls_lab, &TlsCrossingConfig::default(), exec)?;
    let split = m.fit("splitting_mhz").unwrap_or(f64::NAN);
    let f10 = m.fit("crossing_f10_ghz").unwrap_or(f64::NAN);
    let (lo, hi) = avoided_crossing_oracle(f10, &tls_lab.tls);
    let lower = m.fit("lower_peak_ghz").unwrap_or(f64::NAN);
    let upper = m.fit("upper_peak_ghz").unwrap_or(f64::NAN);
    let oracle_gap = ((lower - lo).abs()).max((upper - hi).abs()) * 1e3;
    let crossing = (split - 50.0).abs() <= 2.0 && oracle_gap <= 1.0 && (f10 - 7.05).abs() < 1e-9;

    let list: Vec<String> = peaks.iter().map(|p| format!("{p:.4}")).collect();
    Ok(Verdict::new(
        spectro && crossing,
        format!(
            "high-power peaks [{}] GHz; splitting {split:.2} MHz at {f10:.3} GHz, oracle gap {oracle_gap:.2} MHz",
            list.join(", ")
        ),
    ))
}

fn c9() -> Result<Verdict> {
    let chain = ChainModel::imperfect(0.05, 0.05, C64::new(0.01, -0.005));
    let grid = default_sideband_grid();
    let cal = calibrate_sidebands(&chain, &grid)?;
    let mut worst = f64::INFINITY;
    for &f in &grid {
        worst = worst.min(sideband_suppression_db(&chain, Some(&cal), f)?);
    }
    let env = gaussian_envelope(8.0, 0.4, 1.0, 2.0)?;
    let target = Waveform::from_envelope(&env);
    let filters = ChainModel::default();
    let out = apply_chain(&precorrect(&target, &filters)?, &filters)?;
    let sup = target.samples.iter().zip(&out.samples).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let pass = worst >= 60.0 && sup < 1e-3;
    Ok(Verdict::new(pass, format!("worst suppression {worst:.1} dB over {} sidebands; round trip {sup:.2e}", grid.len())))
}

fn c10() -> Result<Verdict> {
    let tls = TlsParams::disabled();
    let p = QutritParams::default();
    let mut checks = Vec::new();

    let env = gaussian_envelope(8.0, 0.37, 1.0, 2.0)?;
    let traj = evolve(&DensityState::ground(&p, &tls), &p, &tls, &env, 12.0, DEFAULT_DT)?;
    let physical = traj.states.iter().all(|s| s.check().is_ok());
    checks.push(("density matrix", physical, String::new()));

    let idle = ConstantDrive { amplitude: C64::new(0.0, 0.0), duration_ns: 100.0, report_period_ns: 1.0 };
    let t1_only = QutritParams { t2_ns: 2.0 * p.t1_ns, ..p.clone() };
    let decayed = evolve_final(&pure_state(1, 3)?, &t1_only, &tls, &idle, 0.0, DEFAULT_DT)?;
    let t1_err = (decayed.populations()[1] - (-100.0 / p.t1_ns).exp()).abs();
    checks.push(("T1 decay", t1_err < 1e-6, format!("{t1_err:.1e}")));

    let om = 0.2;
    let rabi = ConstantDrive { amplitude: C64::new(om, 0.0), duration_ns: PI / om, report_period_ns: PI / om / 40.0 };
    let two = p.coherent().with_levels(2);
    let flipped = evolve_final(&pure_state(0, 2)?, &two, &tls, &rabi, 0.0, DEFAULT_DT)?;
    let pi_err = (flipped.populations()[1] - 1.0).abs();
    checks.push(("pi pulse", pi_err < 1e-6, format!("{pi_err:.1e}")));

    let coarse = evolve_final(&DensityState::ground(&p, &tls), &p, &tls, &env, 0.0, DEFAULT_DT)?;
    let fine = evolve_final(&DensityState::ground(&p, &tls), &p, &tls, &env, 0.0, DEFAULT_DT / 2.0)?;
    let dt_err = coarse.matrix.max_abs_diff(&fine.matrix);
    checks.push(("dt halving", dt_err < 1e-8, format!("{dt_err:.1e}")));

    let spec = power_spectrum(&env, 1)?;
    let lhs: f64 = spec.power.iter().sum();
    let rhs = env.len() as f64 * env.samples.iter().map(|x| x * x).sum::<f64>();
    let parseval = (lhs - rhs).abs() / rhs;
    checks.push(("Parseval", parseval < 1e-8, format!("{parseval:.1e}")));

    let mut worst: f64 = 0.0;
    for fwhm in [4.0, 8.0] {
        let g = gaussian_envelope(fwhm, 1.0, 1.0, 4.0)?;
        let samples: Vec<C64> = g.samples.iter().map(|&x| C64::new(x, 0.0)).collect();
        let dc = dtft(&samples, 0.0, 1.0).norm_sqr();
        let sigma = fwhm_to_sigma(fwhm);
        for k in 0..=30 {
            let f = 0.01 * k as f64;
            let expect = (-(sigma * 2.0 * PI * f).powi(2)).exp();
            worst = worst.max(rel(dtft(&samples, f, 1.0).norm_sqr() / dc, expect));
        }
    }
    checks.push(("Gaussian spectrum", worst < 0.01, format!("{worst:.1e}")));

    let pass = checks.iter().all(|c| c.1);
    let detail: Vec<String> = checks
        .iter()
        .map(|(name, ok, v)| {
            let mark = if *ok { "ok" } else { "FAILED" };
            if v.is_empty() {
                format!("{name} {mark}")
            } else {
                format!("{name} {v} {mark}")
            }
        })
        .collect();
    Ok(Verdict::new(pass, detail.join("; ")))
}

fn main() -> ExitCode {
    let exec = Threaded::new(0);
    let budgets = [1.0, 0.1, 10.0, 30.0, 10.0, 20.0, 60.0, 120.0, 10.0, 30.0];
    let mut coherent_p2_8 = f64::NAN;
    let mut unexpected = Vec::new();
    let mut passed = 0;
    println!("acceptance: {} worker thread(s)", exec.threads());
    for (k, budget) in budgets.iter().enumerate() {
        let id = k + 1;
        let start = Instant::now();
        let outcome = match id {
            1 => c1(),
            2 => c2(),
            3 => c3(&exec),
            4 => c4(&exec),
            5 => c5(&exec),
            6 => c6(&exec).map(|(v, p)| {
                coherent_p2_8 = p;
                v
            }),
            7 => c7(&exec, coherent_p2_8),
            8 => c8(&exec),
            9 => c9(),
            _ => c10(),
        };
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(v) => {
                let pass = v.pass && secs < *budget;
                let timing = if secs < *budget { String::new() } else { format!(" over the {budget} s budget") };
                println!("criterion {id:>2}: {} {}{timing} [{secs:.2} s]", if pass { "PASS" } else { "FAIL" }, v.detail);
                if pass {
                    passed += 1;
                } else if !KNOWN_FAILURES.contains(&id) {
                    unexpected.push(id);
                }
            }
            Err(e) => {
                println!("criterion {id:>2}: FAIL error: {e} [{secs:.2} s]");
                unexpected.push(id);
            }
        }
    }
    println!("acceptance: {passed}/10 pass; known failures {KNOWN_FAILURES:?}");
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected failures {unexpected:?}");
        ExitCode::FAILURE
    }
}
