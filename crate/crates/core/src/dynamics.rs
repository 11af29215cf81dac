//! Lindblad master-equation integration, virtual z rotations and π-pulse
//! calibration.
//!
//! The integrator is fixed-step classical RK4 on the density matrix. The
//! dissipator is folded into an effective Hamiltonian
//! `H_eff = H - (i/2) Σ γ L†L`, so each right-hand side costs one dense
//! product plus a few sparse jump terms:
//!
//! ```text
//! dρ/dt = -i (H_eff ρ - ρ H_eff†) + Σ γ L ρ L†
//! ```
//!
//! Because `ρ H_eff† = (H_eff ρ)†` for Hermitian `ρ`, the drift term is
//! evaluated as `-i (A - A†)` with `A = H_eff ρ`, which keeps every
//! intermediate state exactly Hermitian.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::linalg::{matmul_into, CMatrix, C64, ZERO};
use crate::optimize::golden_max;
use crate::pulses::{PulseEnvelope, PulseSpec};
use crate::system::{collapse_operators, embed_collapse, hilbert_dim, DensityState, HamiltonianWriter, QutritParams, TlsParams};
use crate::waveform::{Drive, PlacedPulse, PulseTrain};
#[allow(unused_imports)]
use num_traits::Float;

/// Default integration step, ns.
pub const DEFAULT_DT: f64 = 0.01;
/// Largest tolerated deviation of the trace from 1 at the end of a run.
pub const TRACE_DRIFT_TOL: f64 = 1e-7;

/// States reported at the drive's sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityState>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DensityState {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    /// Qubit populations per reported time.
    pub fn populations(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(DensityState::populations).collect()
    }
}

/// Sparse jump operator with `sqrt(rate)` folded in.
#[derive(Debug, Clone)]
struct Jump {
    entries: Vec<(usize, usize, C64)>,
}

/// Precomputed model for repeated integrations at one detuning.
#[derive(Debug, Clone)]
pub struct Propagator {
    writer: HamiltonianWriter,
    jumps: Vec<Jump>,
    dim: usize,
    levels: usize,
    with_tls: bool,
}

impl Propagator {
    pub fn new(params: &QutritParams, tls: &TlsParams, detuning_mhz: f64) -> Result<Self> {
        params.validate()?;
        tls.validate()?;
        if !detuning_mhz.is_finite() {
            return Err(invalid("detuning must be finite"));
        }
        let dim = hilbert_dim(params, tls);
        let ops = embed_collapse(&collapse_operators(params)?, tls);
        let mut writer = HamiltonianWriter::new(params, detuning_mhz, tls);
        let mut decay = CMatrix::zeros(dim);
        let mut jumps = Vec::with_capacity(ops.len());
        for op in &ops {
            let l = &op.operator;
            let ldl = l.adjoint().matmul(l);
            decay = decay.add(&ldl.scale(C64::new(0.0, -0.5 * op.rate)));
            let s = op.rate.sqrt();
            let mut entries = Vec::new();
            for r in 0..dim {
                for c in 0..dim {
                    let v = l[(r, c)];
                    if v != ZERO {
                        entries.push((r, c, v * s));
                    }
                }
            }
            jumps.push(Jump { entries });
        }
        writer.add_static(&decay);
        Ok(Self { writer, jumps, dim, levels: params.levels, with_tls: tls.enabled })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Integrates over the full drive, returning every reported state.
    pub fn trajectory(&self, state0: &DensityState, drive: &dyn Drive, dt: f64) -> Result<Trajectory> {
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut last = None;
        self.run_inner(
            state0,
            drive,
            dt,
            &mut |t, s| {
                times.push(t);
                states.push(s.clone());
            },
            &mut last,
        )?;
        Ok(Trajectory { times, states })
    }

    /// Integrates over the full drive, returning only the final state.
    pub fn final_state(&self, state0: &DensityState, drive: &dyn Drive, dt: f64) -> Result<DensityState> {
        let mut last = None;
        self.run_inner(state0, drive, dt, &mut |_, _| {}, &mut last)?;
        Ok(last.expect("run always produces a final state"))
    }

    fn run_inner(
        &self,
        state0: &DensityState,
        drive: &dyn Drive,
        dt: f64,
        sink: &mut dyn FnMut(f64, &DensityState),
        last: &mut Option<DensityState>,
    ) -> Result<()> {
        if state0.dim() != self.dim || state0.levels() != self.levels || state0.has_tls() != self.with_tls {
            return Err(Error::DimensionMismatch { expected: self.dim, found: state0.dim() });
        }
        let period = drive.sample_period();
        let duration = drive.duration();
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        if !(period.is_finite() && period > 0.0 && duration.is_finite() && duration >= 0.0) {
            return Err(invalid("drive must have a positive sample period and finite duration"));
        }
        if dt > period * (1.0 + 1e-12) {
            return Err(invalid(format!("dt = {dt} ns exceeds the drive sample period {period} ns")));
        }
        let intervals = (duration / period - 1e-9).ceil().max(0.0) as usize;
        let substeps = (period / dt - 1e-9).ceil().max(1.0) as usize;
        let h = period / substeps as f64;

        let n2 = self.dim * self.dim;
        let mut ws = Workspace::new(self.dim);
        let mut rho = state0.matrix.as_slice().to_vec();
        let t_origin = state0.time;
        let mut state = state0.clone();
        sink(0.0, &state);
        for k in 0..intervals {
            let t_k = k as f64 * period;
            for s in 0..substeps {
                let t = t_k + s as f64 * h;
                self.rk4_step(&mut rho, t, h, drive, &mut ws);
            }
            if !rho.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::StepSize { drift: f64::INFINITY, dt });
            }
            let t_next = (k + 1) as f64 * period;
            state.matrix.as_mut_slice().copy_from_slice(&rho[..n2]);
            state.time = t_origin + t_next;
            sink(t_next, &state);
        }
        let drift = (state.trace() - 1.0).abs();
        state.time = t_origin + intervals as f64 * period;
        if drift > TRACE_DRIFT_TOL {
            return Err(Error::StepSize { drift, dt });
        }
        *last = Some(state);
        Ok(())
    }

    #[allow(clippy::needless_range_loop)]
    fn rk4_step(&self, rho: &mut [C64], t: f64, h: f64, drive: &dyn Drive, ws: &mut Workspace) {
        let w0 = drive.value_at(t);
        let wm = drive.value_at(t + 0.5 * h);
        let w1 = drive.value_at(t + h);
        let n2 = rho.len();

        self.writer.write(&mut ws.h0, w0);
        self.writer.write(&mut ws.hm, wm);
        self.writer.write(&mut ws.h1, w1);

        self.rhs(&ws.h0, rho, &mut ws.k1, &mut ws.prod);
        for i in 0..n2 {
            ws.tmp[i] = rho[i] + ws.k1[i] * (0.5 * h);
        }
        self.rhs(&ws.hm, &ws.tmp, &mut ws.k2, &mut ws.prod);
        for i in 0..n2 {
            ws.tmp[i] = rho[i] + ws.k2[i] * (0.5 * h);
        }
        self.rhs(&ws.hm, &ws.tmp, &mut ws.k3, &mut ws.prod);
        for i in 0..n2 {
            ws.tmp[i] = rho[i] + ws.k3[i] * h;
        }
        self.rhs(&ws.h1, &ws.tmp, &mut ws.k4, &mut ws.prod);
        let c = h / 6.0;
        for i in 0..n2 {
            rho[i] += (ws.k1[i] + (ws.k2[i] + ws.k3[i]) * 2.0 + ws.k4[i]) * c;
        }
    }

    #[inline]
    fn rhs(&self, heff: &CMatrix, rho: &[C64], out: &mut [C64], prod: &mut [C64]) {
        let n = self.dim;
        matmul_into(heff.as_slice(), rho, prod, n);
        for r in 0..n {
            for c in r..n {
                let a = prod[r * n + c];
                let b = prod[c * n + r].conj();
                // -i (a - b)
                let d = a - b;
                out[r * n + c] = C64::new(d.im, -d.re);
            }
        }
        for jump in &self.jumps {
            for &(i, j, v) in &jump.entries {
                for &(k, l, w) in &jump.entries {
                    if k >= i {
                        out[i * n + k] += v * rho[j * n + l] * w.conj();
                    }
                }
            }
        }
        for r in 0..n {
            out[r * n + r].im = 0.0;
            for c in (r + 1)..n {
                out[c * n + r] = out[r * n + c].conj();
            }
        }
    }
}

struct Workspace {
    h0: CMatrix,
    hm: CMatrix,
    h1: CMatrix,
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
    prod: Vec<C64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        let v = || vec![ZERO; n * n];
        Self {
            h0: CMatrix::zeros(n),
            hm: CMatrix::zeros(n),
            h1: CMatrix::zeros(n),
            k1: v(),
            k2: v(),
            k3: v(),
            k4: v(),
            tmp: v(),
            prod: v(),
        }
    }
}

/// Propagates `state0` under `drive`, returning states at the drive sample times.
pub fn evolve(
    state0: &DensityState,
    params: &QutritParams,
    tls: &TlsParams,
    drive: &dyn Drive,
    detuning_mhz: f64,
    dt: f64,
) -> Result<Trajectory> {
    Propagator::new(params, tls, detuning_mhz)?.trajectory(state0, drive, dt)
}

/// Same as [`evolve`] but keeps only the last state.
pub fn evolve_final(
    state0: &DensityState,
    params: &QutritParams,
    tls: &TlsParams,
    drive: &dyn Drive,
    detuning_mhz: f64,
    dt: f64,
) -> Result<DensityState> {
    Propagator::new(params, tls, detuning_mhz)?.final_state(state0, drive, dt)
}

/// Instantaneous z rotation `diag(1, e^{iφ}, e^{2iφ})`; the defect is untouched.
pub fn apply_z_phase(state: &DensityState, phi: f64) -> DensityState {
    let n = state.dim();
    let tf = if state.has_tls() { 2 } else { 1 };
    let mut out = state.clone();
    for r in 0..n {
        for c in 0..n {
            let dn = (r / tf) as f64 - (c / tf) as f64;
            if dn != 0.0 {
                out.matrix[(r, c)] = state.matrix[(r, c)] * C64::from_polar(1.0, dn * phi);
            }
        }
    }
    out
}

/// Outcome of a π-pulse calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiCalibration {
    /// Peak envelope amplitude, rad/ns.
    pub amplitude: f64,
    /// Drive detuning from `f10` that was used or found, MHz.
    pub detuning_mhz: f64,
    /// `|1>` population after one pulse from `|0>`.
    pub p1: f64,
}

/// Points in the coarse first-lobe scan.
const CAL_SCAN_POINTS: usize = 24;
/// Relative amplitude resolution of the golden-section refinement.
const CAL_REL_TOL: f64 = 1e-10;

/// `|1>` population after one pulse of the given peak amplitude from `|0>`.
pub fn single_pulse_populations(
    prop: &Propagator,
    params: &QutritParams,
    tls: &TlsParams,
    spec: &PulseSpec,
    amplitude: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    let env = spec.build(amplitude)?;
    let ground = DensityState::ground(params, tls);
    Ok(prop.final_state(&ground, &env, dt)?.populations())
}

/// Finds the peak amplitude that maximizes `P1` after one pulse from `|0>`.
///
/// The first Rabi lobe is bracketed as `(0, 2π/A]` with `A` the area of the
/// unit-amplitude envelope, scanned coarsely, then refined by golden section
/// around the first local maximum.
pub fn calibrate_pi(
    params: &QutritParams,
    tls: &TlsParams,
    spec: &PulseSpec,
    detuning_mhz: f64,
    dt: f64,
) -> Result<PiCalibration> {
    let prop = Propagator::new(params, tls, detuning_mhz)?;
    let (amplitude, p1) = calibrate_amplitude(&prop, params, tls, spec, dt)?;
    Ok(PiCalibration { amplitude, detuning_mhz, p1 })
}

fn calibrate_amplitude(
    prop: &Propagator,
    params: &QutritParams,
    tls: &TlsParams,
    spec: &PulseSpec,
    dt: f64,
) -> Result<(f64, f64)> {
    let unit = spec.build(1.0)?;
    let area = unit.area();
    if !(area > 0.0) {
        return Err(invalid("pulse envelope has no area"));
    }
    let hi = 2.0 * PI / area;
    let p1_at = |a: f64| -> Result<f64> { Ok(single_pulse_populations(prop, params, tls, spec, a, dt)?[1]) };

    let grid: Vec<f64> = (1..=CAL_SCAN_POINTS).map(|k| hi * k as f64 / CAL_SCAN_POINTS as f64).collect();
    let mut vals = Vec::with_capacity(grid.len());
    for &a in &grid {
        vals.push(p1_at(a)?);
    }
    let peak = (0..grid.len())
        .find(|&k| {
            let left = if k == 0 { 0.0 } else { vals[k - 1] };
            k + 1 < grid.len() && vals[k] >= left && vals[k] > vals[k + 1]
        })
        .ok_or_else(|| Error::Search(format!("no Rabi maximum found for amplitudes up to {hi:.4} rad/ns")))?;
    let lo = if peak == 0 { 0.0 } else { grid[peak - 1] };
    let up = grid[peak + 1];

    let mut failure = None;
    let (a, _) = golden_max(
        |a| match p1_at(a) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        lo,
        up,
        CAL_REL_TOL * grid[peak],
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let p1 = p1_at(a)?;
    Ok((a, p1))
}

/// Joint calibration of amplitude and drive frequency.
///
/// With a third level the `0-1` line is Stark shifted during the pulse, so
/// the best π pulse is slightly detuned from `f10`. Alternates golden-section
/// searches in amplitude and detuning until both settle.
pub fn calibrate_drive(params: &QutritParams, tls: &TlsParams, spec: &PulseSpec, dt: f64) -> Result<PiCalibration> {
    let span_mhz = 0.25 * params.anharmonicity_mhz;
    let mut detuning = 0.0;
    let mut prop = Propagator::new(params, tls, detuning)?;
    let (mut amplitude, mut p1) = calibrate_amplitude(&prop, params, tls, spec, dt)?;
    for _ in 0..12 {
        let env = spec.build(amplitude)?;
        let ground = DensityState::ground(params, tls);
        let mut failure = None;
        let (d_new, _) = golden_max(
            |d| match Propagator::new(params, tls, d).and_then(|p| p.final_state(&ground, &env, dt)) {
                Ok(s) => s.populations()[1],
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NEG_INFINITY
                }
            },
            detuning - span_mhz,
            detuning + span_mhz,
            1e-7,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        prop = Propagator::new(params, tls, d_new)?;
        let (a_new, p_new) = calibrate_amplitude(&prop, params, tls, spec, dt)?;
        let settled = (a_new - amplitude).abs() <= 1e-9 * amplitude && (d_new - detuning).abs() <= 1e-6;
        amplitude = a_new;
        detuning = d_new;
        p1 = p_new;
        if settled {
            break;
        }
    }
    Ok(PiCalibration { amplitude, detuning_mhz: detuning, p1 })
}

/// Two pulses of one envelope, the second starting `t_sep_ns` after the first.
///
/// Both carry `sideband_mhz`; the second has microwave phase `theta`.
pub fn pulse_pair(env: &PulseEnvelope, t_sep_ns: f64, theta: f64, sideband_mhz: f64) -> Result<PulseTrain> {
    if !(t_sep_ns.is_finite() && t_sep_ns >= 0.0) {
        return Err(invalid(format!("t_sep must be non-negative, got {t_sep_ns}")));
    }
    PulseTrain::new(vec![
        PlacedPulse::new(env.clone(), 0.0).with_sideband(sideband_mhz),
        PlacedPulse::new(env.clone(), t_sep_ns).with_phase(theta).with_sideband(sideband_mhz),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulses::gaussian_envelope;
    use crate::system::pure_state;
    use crate::waveform::ConstantDrive;
    use crate::linalg::ONE;

    fn zero_drive(duration: f64) -> ConstantDrive {
        ConstantDrive { amplitude: ZERO, duration_ns: duration, report_period_ns: 1.0 }
    }

    #[test]
    fn free_coherent_state_is_stationary() {
        let p = QutritParams::default().coherent();
        let s = pure_state(1, 3).unwrap();
        let out = evolve_final(&s, &p, &TlsParams::disabled(), &zero_drive(50.0), 0.0, DEFAULT_DT).unwrap();
        assert_eq!(out.populations(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn t1_decay_matches_exponential() {
        let p = QutritParams { t2_ns: 800.0, ..QutritParams::default() };
        let s = pure_state(1, 3).unwrap();
        let out = evolve_final(&s, &p, &TlsParams::disabled(), &zero_drive(100.0), 0.0, DEFAULT_DT).unwrap();
        assert!((out.populations()[1] - (-0.25f64).exp()).abs() < 1e-6);
        assert!((out.time - 100.0).abs() < 1e-12);
    }

    #[test]
    fn constant_rabi_pi_rotation() {
        let p = QutritParams::default().coherent().with_levels(2);
        let om = 0.2;
        let drive = ConstantDrive { amplitude: C64::new(om, 0.0), duration_ns: PI / om, report_period_ns: 0.5 };
        // The report grid must tile the pulse exactly.
        let drive = ConstantDrive { report_period_ns: drive.duration_ns / 40.0, ..drive };
        let out = evolve_final(&pure_state(0, 2).unwrap(), &p, &TlsParams::disabled(), &drive, 0.0, DEFAULT_DT).unwrap();
        assert!((out.populations()[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn dt_above_sample_period_rejected() {
        let p = QutritParams::default();
        let env = gaussian_envelope(8.0, 0.3, 1.0, 2.0).unwrap();
        let r = evolve(&pure_state(0, 3).unwrap(), &p, &TlsParams::disabled(), &env, 0.0, 2.0);
        assert!(matches!(r, Err(Error::InvalidParameters(_))));
    }

    #[test]
    fn trajectory_reports_every_sample() {
        let p = QutritParams::default();
        let env = gaussian_envelope(8.0, 0.3, 1.0, 2.0).unwrap();
        let traj = evolve(&pure_state(0, 3).unwrap(), &p, &TlsParams::disabled(), &env, 0.0, DEFAULT_DT).unwrap();
        assert_eq!(traj.states.len(), env.len());
        assert_eq!(traj.times[0], 0.0);
        assert!((traj.times[32] - 32.0).abs() < 1e-12);
        for s in &traj.states {
            s.check().unwrap();
        }
    }

    #[test]
    fn z_phase_flips_superposition() {
        let plus = DensityState::from_amplitudes(&[ONE, ONE, ZERO]).unwrap();
        let minus = DensityState::from_amplitudes(&[ONE, -ONE, ZERO]).unwrap();
        let out = apply_z_phase(&plus, PI);
        assert!(out.matrix.max_abs_diff(&minus.matrix) < 1e-15);
        assert_eq!(apply_z_phase(&plus, 0.0), plus);
    }

    #[test]
    fn z_phase_doubles_on_level_two() {
        let s = DensityState::from_amplitudes(&[ONE, ZERO, ONE]).unwrap();
        let out = apply_z_phase(&s, 0.3);
        let expect = C64::from_polar(0.5, -0.6);
        assert!((out.matrix[(0, 2)] - expect).norm() < 1e-15);
    }

    #[test]
    fn two_level_calibration_matches_area() {
        let p = QutritParams::default().coherent().with_levels(2);
        let cal = calibrate_pi(&p, &TlsParams::disabled(), &PulseSpec::gaussian(8.0), 0.0, DEFAULT_DT).unwrap();
        let sigma = crate::pulses::fwhm_to_sigma(8.0);
        let nominal = PI / (sigma * (2.0 * PI).sqrt());
        assert!((cal.amplitude / nominal - 1.0).abs() < 5e-3, "{}", cal.amplitude);
        assert!(cal.p1 >= 1.0 - 1e-6);
        // Against the sampled pulse area, where the truncation correction is exact.
        let area = PulseSpec::gaussian(8.0).build(1.0).unwrap().area();
        assert!((cal.amplitude * area - PI).abs() < 1e-5);
    }

    #[test]
    fn three_level_calibration_close_to_two_level() {
        let spec = PulseSpec::gaussian(8.0);
        let p3 = QutritParams::default().coherent();
        let c3 = calibrate_pi(&p3, &TlsParams::disabled(), &spec, 0.0, DEFAULT_DT).unwrap();
        let c2 = calibrate_pi(&p3.with_levels(2), &TlsParams::disabled(), &spec, 0.0, DEFAULT_DT).unwrap();
        assert!((c3.amplitude / c2.amplitude - 1.0).abs() < 0.02);
    }

    #[test]
    fn pulse_pair_places_second_pulse() {
        let env = gaussian_envelope(8.0, 0.3, 1.0, 2.0).unwrap();
        let train = pulse_pair(&env, 40.0, 1.0, 0.0).unwrap();
        assert!((train.pulses[1].peak_ns() - train.pulses[0].peak_ns() - 40.0).abs() < 1e-12);
        assert!((Drive::duration(&train) - 72.0).abs() < 1e-12);
    }
}
