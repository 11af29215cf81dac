//! Measurement protocols: state preparation, pulse sequences, readout and the
//! fits that reduce each scan to its headline numbers.
//!
//! Every protocol evaluates independent grid points through an [`Executor`],
//! so a caller with threads can run them concurrently; results are assembled
//! by grid index and are therefore independent of evaluation order.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dynamics::{calibrate_drive, calibrate_pi, pulse_pair, PiCalibration, Propagator, DEFAULT_DT};
use crate::error::{invalid, Error, Result};
use crate::fit::{fit_damped_sinusoid, fit_line, fit_sinusoid, parabolic_vertex, SinusoidFit};
use crate::pulses::{gaussian_leakage_closed_form, leakage_ratio, smoothed_rectangle, PulseEnvelope, PulseSpec};
use crate::readout::{
    iz_for_level2_only, measure_tunnel, optimal_iz_visibility, scurve, scurve_table, ReadoutModel, DEFAULT_MAX_LEAK,
};
use crate::sigchain::{apply_chain, calibrate_sidebands, precorrect, sideband_suppression_db, ChainModel, IQCalibration};
use crate::system::{DensityState, QutritParams, TlsParams, TAU};
use crate::waveform::{Drive, PulseTrain, Waveform};
use crate::C64;
#[allow(unused_imports)]
use num_traits::Float;

/// Evaluates `n` independent grid points.
pub trait Executor: Sync {
    fn run(&self, n: usize, task: &(dyn Fn(usize) -> Result<Vec<f64>> + Sync)) -> Result<Vec<Vec<f64>>>;
}

/// Evaluates grid points one after another.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn run(&self, n: usize, task: &(dyn Fn(usize) -> Result<Vec<f64>> + Sync)) -> Result<Vec<Vec<f64>>> {
        (0..n).map(task).collect()
    }
}

/// Room-temperature electronics between the synthesized and the emitted waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainStage {
    pub model: ChainModel,
    /// Sideband corrections applied before the mixer.
    pub correction: Option<IQCalibration>,
    /// Deconvolve the port filters before emission.
    pub precorrect: bool,
}

impl ChainStage {
    pub fn new(model: ChainModel) -> Self {
        Self { model, correction: None, precorrect: true }
    }

    pub fn with_correction(mut self, calibration: IQCalibration) -> Self {
        self.correction = Some(calibration);
        self
    }
}

/// Drive seen by the qubit: either the ideal pulse train or what the chain emits.
#[derive(Debug, Clone)]
pub enum Signal {
    Ideal(PulseTrain),
    Emitted(Waveform),
}

impl Drive for Signal {
    fn value_at(&self, t: f64) -> C64 {
        match self {
            Self::Ideal(p) => p.value_at(t),
            Self::Emitted(w) => w.value_at(t),
        }
    }

    fn duration(&self) -> f64 {
        match self {
            Self::Ideal(p) => p.duration(),
            Self::Emitted(w) => w.duration(),
        }
    }

    fn sample_period(&self) -> f64 {
        match self {
            Self::Ideal(p) => p.sample_period(),
            Self::Emitted(w) => w.sample_period(),
        }
    }
}

/// Everything a protocol needs to know about the simulated apparatus.
#[derive(Debug, Clone, PartialEq)]
pub struct Lab {
    pub system: QutritParams,
    pub tls: TlsParams,
    pub readout: ReadoutModel,
    /// Shape used for π pulses.
    pub pulse: PulseSpec,
    /// When false, relaxation and dephasing are switched off.
    pub decoherence: bool,
    /// Integrator step, ns.
    pub dt: f64,
    pub chain: Option<ChainStage>,
}

impl Default for Lab {
    fn default() -> Self {
        Self {
            system: QutritParams::default(),
            tls: TlsParams::disabled(),
            readout: ReadoutModel::default(),
            pulse: PulseSpec::gaussian(8.0),
            decoherence: true,
            dt: DEFAULT_DT,
            chain: None,
        }
    }
}

impl Lab {
    /// Decoherence-free lab with a sharp, lossless readout.
    pub fn ideal() -> Self {
        Self { decoherence: false, readout: ReadoutModel::ideal(), ..Self::default() }
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        self.system = self.system.with_levels(levels);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.tls.validate()?;
        self.readout.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(stage) = &self.chain {
            stage.model.validate()?;
        }
        self.pulse.build(1.0).map(|_| ())
    }

    /// System parameters with the decoherence switch applied.
    pub fn params(&self) -> QutritParams {
        if self.decoherence {
            self.system.clone()
        } else {
            self.system.coherent()
        }
    }

    /// Integrator in the frame of `f10 + detuning_mhz`.
    pub fn propagator(&self, detuning_mhz: f64) -> Result<Propagator> {
        Propagator::new(&self.params(), &self.tls, detuning_mhz)
    }

    pub fn ground(&self) -> DensityState {
        DensityState::ground(&self.params(), &self.tls)
    }

    /// π amplitude at `f10`.
    pub fn calibrate_amplitude(&self, spec: &PulseSpec) -> Result<PiCalibration> {
        calibrate_pi(&self.params(), &self.tls, spec, 0.0, self.dt)
    }

    /// π amplitude and drive frequency.
    pub fn calibrate_joint(&self, spec: &PulseSpec) -> Result<PiCalibration> {
        calibrate_drive(&self.params(), &self.tls, spec, self.dt)
    }

    /// Passes a pulse train through the control chain, if one is configured.
    pub fn emit(&self, train: PulseTrain) -> Result<Signal> {
        let Some(stage) = &self.chain else {
            return Ok(Signal::Ideal(train));
        };
        let mut wave = train.to_waveform();
        if let Some(cal) = &stage.correction {
            wave = cal.correct(&wave)?;
        }
        if stage.precorrect {
            wave = precorrect(&wave, &stage.model)?;
        }
        Ok(Signal::Emitted(apply_chain(&wave, &stage.model)?))
    }

    /// Tunneling probability at bias `iz`.
    pub fn measure(&self, state: &DensityState, iz: f64) -> Result<f64> {
        measure_tunnel(&state.populations(), iz, &self.readout)
    }

    fn visibility_iz(&self) -> Result<f64> {
        Ok(optimal_iz_visibility(&self.readout)?.iz)
    }
}

/// A named coordinate list.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

/// A named value list laid out row-major over the result axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
    /// Values are probabilities and must lie in `[0, 1]`.
    pub probability: bool,
}

/// Output of one protocol.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResult {
    pub name: String,
    pub axes: Vec<Axis>,
    /// Row-major over `axes`, first axis slowest.
    pub columns: Vec<Column>,
    /// Named scalars extracted from the scan.
    pub fits: Vec<(String, f64)>,
    pub metadata: Vec<(String, String)>,
    /// One-line headline.
    pub summary: String,
}

impl ExperimentResult {
    fn new(name: &str) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    fn axis(mut self, name: &str, values: Vec<f64>) -> Self {
        self.axes.push(Axis { name: name.into(), values });
        self
    }

    fn column(mut self, name: &str, values: Vec<f64>, probability: bool) -> Self {
        self.columns.push(Column { name: name.into(), values, probability });
        self
    }

    fn set_fit(&mut self, name: &str, value: f64) {
        self.fits.push((name.into(), value));
    }

    fn note(&mut self, key: &str, value: impl Into<String>) {
        self.metadata.push((key.into(), value.into()));
    }

    /// Number of grid points (product of the axis lengths).
    pub fn grid_len(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn fit(&self, name: &str) -> Option<f64> {
        self.fits.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn values(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    pub fn axis_values(&self, name: &str) -> Option<&[f64]> {
        self.axes.iter().find(|a| a.name == name).map(|a| a.values.as_slice())
    }

    /// Axis coordinates of flat grid index `k`.
    pub fn coordinates(&self, mut k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (slot, axis) in out.iter_mut().zip(&self.axes).rev() {
            let n = axis.values.len();
            *slot = axis.values[k % n];
            k /= n;
        }
        out
    }

    /// Checks the grid shape and probability ranges.
    pub fn validate(&self) -> Result<()> {
        let n = self.grid_len();
        for c in &self.columns {
            if c.values.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: c.values.len() });
            }
            if c.probability && !c.values.iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(invalid(format!("column {} leaves [0, 1]", c.name)));
            }
        }
        Ok(())
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn arange(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|k| lo + step * k as f64).collect()
}

fn transpose(rows: Vec<Vec<f64>>, width: usize) -> Vec<Vec<f64>> {
    let mut cols = vec![Vec::with_capacity(rows.len()); width];
    for row in rows {
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    cols
}

fn pad_populations(mut p: Vec<f64>) -> Vec<f64> {
    p.resize(3, 0.0);
    p
}

/// Readout curves for the three levels and the derived operating points.
pub fn run_scurve(lab: &Lab, points: usize) -> Result<ExperimentResult> {
    lab.readout.validate()?;
    if points < 2 {
        return Err(invalid("an S-curve needs at least two points"));
    }
    let (iz, curves) = scurve_table(&lab.readout, points);
    let vis = optimal_iz_visibility(&lab.readout)?;
    let budget = lab.readout.error_budget()?;
    let mut r = ExperimentResult::new("scurve").axis("iz", iz);
    for (n, c) in curves.into_iter().enumerate() {
        r = r.column(&format!("p_tunnel_{n}"), c, true);
    }
    r.set_fit("optimal_iz", vis.iz);
    r.set_fit("visibility", vis.visibility);
    r.set_fit("error_state0", budget.e0);
    r.set_fit("error_state1", budget.e1);
    r.set_fit("budget_visibility", budget.visibility);
    if let Ok(iz2) = iz_for_level2_only(&lab.readout, DEFAULT_MAX_LEAK) {
        r.set_fit("level2_iz", iz2);
    }
    r.summary = format!("visibility {:.4} at iz = {:.4} (budget {:.4})", vis.visibility, vis.iz, budget.visibility);
    Ok(r)
}

/// Grid of the two-pulse rotation-axis and detuning scan.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMapConfig {
    pub t_sep_ns: f64,
    pub detunings_mhz: Vec<f64>,
    pub thetas: Vec<f64>,
}

impl Default for GateMapConfig {
    fn default() -> Self {
        Self { t_sep_ns: 40.0, detunings_mhz: linspace(-40.0, 40.0, 41), thetas: linspace(0.0, TAU, 41) }
    }
}

fn two_pulse_state(
    lab: &Lab,
    prop: &Propagator,
    env: &PulseEnvelope,
    t_sep: f64,
    theta: f64,
    sideband_mhz: f64,
) -> Result<DensityState> {
    let signal = lab.emit(pulse_pair(env, t_sep, theta, sideband_mhz)?)?;
    prop.final_state(&lab.ground(), &signal, lab.dt)
}

/// `P1` after `X_π` followed by a π pulse of phase `Θ`, both detuned by `Δ`
/// through the sideband, as a function of `(Δ, Θ)`.
pub fn run_gate_map(lab: &Lab, cfg: &GateMapConfig, exec: &dyn Executor) -> Result<ExperimentResult> {
    lab.validate()?;
    if cfg.detunings_mhz.is_empty() || cfg.thetas.is_empty() {
        return Err(invalid("gate map needs non-empty detuning and phase grids"));
    }
    let cal = lab.calibrate_joint(&lab.pulse)?;
    let env = lab.pulse.build(cal.amplitude)?;
    let prop = lab.propagator(0.0)?;
    let iz = lab.visibility_iz()?;
    let nt = cfg.thetas.len();
    let rows = exec.run(cfg.detunings_mhz.len() * nt, &|k| {
        let delta = cfg.detunings_mhz[k / nt];
        let theta = cfg.thetas[k % nt];
        let s = two_pulse_state(lab, &prop, &env, cfg.t_sep_ns, theta, cal.detuning_mhz + delta)?;
        let mut out = vec![lab.measure(&s, iz)?];
        out.extend(pad_populations(s.populations()));
        Ok(out)
    })?;
    let cols = transpose(rows, 4);
    let mut r = ExperimentResult::new("gate_map")
        .axis("detuning_mhz", cfg.detunings_mhz.clone())
        .axis("theta_rad", cfg.thetas.clone());
    for (name, c) in ["p_tunnel", "pop0", "pop1", "pop2"].iter().zip(cols) {
        r = r.column(name, c, true);
    }
    r.set_fit("pi_amplitude", cal.amplitude);
    r.set_fit("drive_detuning_mhz", cal.detuning_mhz);
    r.set_fit("measure_iz", iz);
    let mut summary = format!("P1 map at t_sep = {} ns", cfg.t_sep_ns);
    if let Some(row) = cfg.detunings_mhz.iter().position(|&d| d == 0.0) {
        let p = &r.values("p_tunnel").unwrap()[row * nt..(row + 1) * nt];
        let spread = p.iter().copied().fold(f64::NEG_INFINITY, f64::max) - p.iter().copied().fold(f64::INFINITY, f64::min);
        r.set_fit("theta_variation_on_resonance", spread);
        summary = format!("{summary}; on resonance P1 varies by {spread:.3e} over theta");
    }
    r.summary = summary;
    r.note("calibration", "joint amplitude and frequency");
    Ok(r)
}

/// Pulse separation at which the headline gate error is quoted, ns.
pub const REFERENCE_TSEP_NS: f64 = 12.0;
/// Separation window for the decay-slope fit, ns.
pub const SLOPE_WINDOW_NS: (f64, f64) = (15.0, 40.0);

/// Default separations: 0 to 40 ns in 1 ns steps.
pub fn default_tsep_grid() -> Vec<f64> {
    arange(0.0, 40.0, 1.0)
}

/// `P1` after two resonant π pulses versus their separation.
pub fn run_tsep_sweep(lab: &Lab, t_seps: &[f64], exec: &dyn Executor) -> Result<ExperimentResult> {
    lab.validate()?;
    if t_seps.is_empty() {
        return Err(invalid("t_sep list is empty"));
    }
    let cal = lab.calibrate_joint(&lab.pulse)?;
    let env = lab.pulse.build(cal.amplitude)?;
    let prop = lab.propagator(0.0)?;
    let iz = lab.visibility_iz()?;
    let levels = lab.system.levels;
    let mut ground_pops = vec![0.0; levels];
    ground_pops[0] = 1.0;
    let baseline = measure_tunnel(&ground_pops, iz, &lab.readout)?;
    let rows = exec.run(t_seps.len(), &|k| {
        let s = two_pulse_state(lab, &prop, &env, t_seps[k], 0.0, cal.detuning_mhz)?;
        let p = lab.measure(&s, iz)?;
        let mut out = vec![p, p - baseline];
        out.extend(pad_populations(s.populations()));
        Ok(out)
    })?;
    let cols = transpose(rows, 5);
    let p1 = cols[0].clone();
    let err = cols[1].clone();

    let mut r = ExperimentResult::new("tsep_sweep").axis("t_sep_ns", t_seps.to_vec());
    let mut cols = cols.into_iter();
    r = r.column("p_tunnel", cols.next().unwrap(), true);
    r = r.column("gate_error", cols.next().unwrap(), false);
    for name in ["pop0", "pop1", "pop2"] {
        r = r.column(name, cols.next().unwrap(), true);
    }
    r.set_fit("baseline", baseline);
    r.set_fit("pi_amplitude", cal.amplitude);
    r.set_fit("drive_detuning_mhz", cal.detuning_mhz);

    let (xs, ys): (Vec<f64>, Vec<f64>) = t_seps
        .iter()
        .zip(&p1)
        .filter(|(t, _)| (SLOPE_WINDOW_NS.0..=SLOPE_WINDOW_NS.1).contains(*t))
        .map(|(&t, &p)| (t, p))
        .unzip();
    if xs.len() >= 2 {
        let (intercept, slope) = fit_line(&xs, &ys)?;
        r.set_fit("slope_per_ns", slope);
        r.set_fit("slope_intercept", intercept);
    }
    r.summary = match interpolate(t_seps, &err, REFERENCE_TSEP_NS) {
        Some(e) => {
            r.set_fit("gate_error_reference", e);
            r.set_fit("error_per_pulse", 0.5 * e);
            format!(
                "gate error {e:.4} at t_sep = {REFERENCE_TSEP_NS} ns above baseline {baseline:.4} ({:.4} per pulse)",
                0.5 * e
            )
        }
        None => format!("baseline {baseline:.4}; t_sep grid does not cover {REFERENCE_TSEP_NS} ns"),
    };
    Ok(r)
}

fn interpolate(x: &[f64], y: &[f64], at: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2).find(|w| w[0].0 <= at && at <= w[1].0).map(|w| {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if x1 == x0 {
            y0
        } else {
            y0 + (y1 - y0) * (at - x0) / (x1 - x0)
        }
    })
}

/// Largest acceptable fit residual relative to the oscillation amplitude.
pub const RAMSEY_MAX_RELATIVE_RESIDUAL: f64 = 0.25;

/// Separations for the leakage-interference scan: 20 ns past the point where
/// the pulses stop overlapping, in 0.25 ns steps.
pub fn default_ramsey_grid(spec: &PulseSpec) -> Result<Vec<f64>> {
    let start = spec.build(1.0)?.duration().ceil();
    Ok(arange(start, start + 20.0, 0.25))
}

/// Result of the two-pulse leakage interference measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct RamseyOutcome {
    pub result: ExperimentResult,
    pub fit: SinusoidFit,
    /// `(max - min) / 4` of the fitted oscillation.
    pub single_pulse_error: f64,
}

/// `|2>`-selective signal after two π pulses versus their separation, with
/// the beat fitted to a sinusoid.
pub fn run_ramsey_filter(lab: &Lab, t_seps: &[f64], fwhm_ns: f64, exec: &dyn Executor) -> Result<RamseyOutcome> {
    lab.validate()?;
    let spec = with_width(&lab.pulse, fwhm_ns);
    let cal = lab.calibrate_amplitude(&spec)?;
    ramsey_with(lab, &spec, &cal, t_seps, exec)
}

fn with_width(spec: &PulseSpec, fwhm_ns: f64) -> PulseSpec {
    match *spec {
        PulseSpec::Gaussian { truncation, sample_rate, .. } => PulseSpec::Gaussian { fwhm_ns, truncation, sample_rate },
        PulseSpec::Slepian { .. } => PulseSpec::Gaussian {
            fwhm_ns,
            truncation: crate::pulses::DEFAULT_TRUNCATION,
            sample_rate: spec.sample_rate(),
        },
    }
}

fn ramsey_with(
    lab: &Lab,
    spec: &PulseSpec,
    cal: &PiCalibration,
    t_seps: &[f64],
    exec: &dyn Executor,
) -> Result<RamseyOutcome> {
    let iz2 = iz_for_level2_only(&lab.readout, DEFAULT_MAX_LEAK)?;
    let s0 = scurve(0, iz2, &lab.readout);
    let contrast = scurve(2, iz2, &lab.readout) - s0;
    let env = spec.build(cal.amplitude)?;
    let prop = lab.propagator(cal.detuning_mhz)?;
    let rows = exec.run(t_seps.len(), &|k| {
        let s = two_pulse_state(lab, &prop, &env, t_seps[k], 0.0, 0.0)?;
        let p = lab.measure(&s, iz2)?;
        Ok(vec![p, (p - s0) / contrast, pad_populations(s.populations())[2]])
    })?;
    let mut cols = transpose(rows, 3).into_iter();
    let (raw, signal, pop2) = (cols.next().unwrap(), cols.next().unwrap(), cols.next().unwrap());
    // Decoherence damps the fringe and adds a slow drift; the damped fit
    // extrapolates the amplitude back to zero separation.
    let fit = if lab.decoherence {
        fit_damped_sinusoid(t_seps, &signal, true)?
    } else {
        fit_sinusoid(t_seps, &signal, false)?
    };
    let rel = fit.relative_residual();
    if !(rel <= RAMSEY_MAX_RELATIVE_RESIDUAL) {
        return Err(Error::FitQuality { residual: rel, x: t_seps.to_vec(), y: raw });
    }
    let single_pulse_error = 0.5 * fit.amplitude;
    let mut r = ExperimentResult::new("ramsey_filter")
        .axis("t_sep_ns", t_seps.to_vec())
        .column("p_tunnel", raw, true)
        .column("p2_signal", signal, false)
        .column("pop2", pop2, true);
    r.set_fit("amplitude", fit.amplitude);
    r.set_fit("frequency_ghz", fit.frequency);
    r.set_fit("frequency_mhz", fit.frequency * 1e3);
    r.set_fit("period_ns", fit.period());
    r.set_fit("phase", fit.phase);
    r.set_fit("offset", fit.offset);
    r.set_fit("slope", fit.slope);
    r.set_fit("decay_per_ns", fit.decay);
    r.set_fit("relative_residual", rel);
    r.set_fit("single_pulse_error", single_pulse_error);
    r.set_fit("pi_amplitude", cal.amplitude);
    r.set_fit("measure_iz", iz2);
    r.set_fit("readout_contrast", contrast);
    r.summary = format!(
        "beat {:.2} MHz (period {:.3} ns); single-pulse |2> error {single_pulse_error:.3e}",
        fit.frequency * 1e3,
        fit.period()
    );
    r.note("signal", "tunneling corrected for the level-0 floor and the level-2 contrast");
    Ok(RamseyOutcome { result: r, fit, single_pulse_error })
}

/// Pulse widths with measured leakage data.
pub const WIDTH_SWEEP_GRID: [f64; 7] = [4.0, 5.0, 6.0, 6.5, 7.0, 7.5, 8.0];

/// Leakage versus Gaussian width from direct simulation, the interference
/// filter and the spectral power ratio.
pub fn run_width_sweep(lab: &Lab, fwhms: &[f64], exec: &dyn Executor) -> Result<ExperimentResult> {
    lab.validate()?;
    if fwhms.is_empty() {
        return Err(invalid("width list is empty"));
    }
    if let Some(&w) = fwhms.iter().find(|w| !(3.0..=12.0).contains(*w)) {
        return Err(invalid(format!("pulse width {w} ns lies outside [3, 12] ns")));
    }
    let eta = lab.system.anharmonicity_mhz;
    let mut cols: [Vec<f64>; 6] = Default::default();
    let mut unresolved = Vec::new();
    for &w in fwhms {
        let spec = with_width(&lab.pulse, w);
        let cal = lab.calibrate_amplitude(&spec)?;
        let env = spec.build(cal.amplitude)?;
        let prop = lab.propagator(0.0)?;
        let direct = pad_populations(prop.final_state(&lab.ground(), &lab.emit(single(&env)?)?, lab.dt)?.populations())[2];
        // A fringe below the fit-quality threshold is reported as unresolved.
        let (extracted, beat_mhz) = match ramsey_with(lab, &spec, &cal, &default_ramsey_grid(&spec)?, exec) {
            Ok(o) => (o.single_pulse_error, o.fit.frequency * 1e3),
            Err(Error::FitQuality { .. }) => {
                unresolved.push(w);
                (f64::NAN, f64::NAN)
            }
            Err(e) => return Err(e),
        };
        let values = [
            cal.amplitude,
            direct,
            extracted,
            leakage_ratio(&env, eta)?,
            gaussian_leakage_closed_form(w, eta),
            beat_mhz,
        ];
        for (c, v) in cols.iter_mut().zip(values) {
            c.push(v);
        }
    }
    let [amp, direct, ramsey, ratio, closed, beat] = cols;
    let monotone = |v: &[f64]| {
        let finite: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
        finite.windows(2).all(|p| p[1] < p[0])
    };
    let sorted = fwhms.windows(2).all(|p| p[1] > p[0]);
    let mut r = ExperimentResult::new("width_sweep").axis("fwhm_ns", fwhms.to_vec());
    let last = direct.len() - 1;
    r.set_fit("p2_direct_at_widest", direct[last]);
    r.set_fit("ramsey_error_at_widest", ramsey[last]);
    if sorted {
        r.set_fit("direct_monotone", if monotone(&direct) { 1.0 } else { 0.0 });
        r.set_fit("ramsey_monotone", if monotone(&ramsey) { 1.0 } else { 0.0 });
        r.set_fit("spectral_monotone", if monotone(&ratio) { 1.0 } else { 0.0 });
    }
    r.summary = format!(
        "|2> error at {} ns: direct {:.3e}, interference {:.3e}, spectral {:.3e}",
        fwhms[last], direct[last], ramsey[last], ratio[last]
    );
    if !unresolved.is_empty() {
        let list: Vec<String> = unresolved.iter().map(|w| format!("{w}")).collect();
        r.note("ramsey_unresolved_fwhm_ns", list.join(" "));
    }
    r = r
        .column("pi_amplitude", amp, false)
        .column("p2_direct", direct, true)
        .column("p2_ramsey", ramsey, false)
        .column("leakage_ratio", ratio, false)
        .column("leakage_closed_form", closed, true)
        .column("ramsey_beat_mhz", beat, false);
    Ok(r)
}

fn single(env: &PulseEnvelope) -> Result<PulseTrain> {
    PulseTrain::new(vec![crate::waveform::PlacedPulse::new(env.clone(), 0.0)])
}

/// Drive strength regime of a spectroscopy scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerMode {
    Low,
    High,
}

impl PowerMode {
    /// Default peak drive amplitude, rad/ns.
    pub fn default_amplitude(self) -> f64 {
        match self {
            Self::Low => 0.005,
            Self::High => 0.08,
        }
    }
}

/// Long-pulse frequency scan.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectroscopyConfig {
    pub freqs_ghz: Vec<f64>,
    pub mode: PowerMode,
    /// Peak drive amplitude, rad/ns.
    pub amplitude: f64,
    /// Total pulse length including edges, ns.
    pub pulse_ns: f64,
    pub edge_ns: f64,
    /// Integrator step for the long drive, ns.
    pub dt: f64,
}

impl SpectroscopyConfig {
    pub fn new(freqs_ghz: Vec<f64>, mode: PowerMode) -> Self {
        Self { freqs_ghz, mode, amplitude: mode.default_amplitude(), pulse_ns: 500.0, edge_ns: 5.0, dt: 0.05 }
    }

    fn envelope(&self) -> Result<PulseEnvelope> {
        if !(self.pulse_ns > 2.0 * self.edge_ns) {
            return Err(invalid("spectroscopy pulse must be longer than its two edges"));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(invalid("spectroscopy amplitude must be non-negative"));
        }
        smoothed_rectangle(self.pulse_ns - 2.0 * self.edge_ns, self.edge_ns, self.amplitude, 1.0)
    }
}

/// Minimum height of a spectral peak above the higher of its flanking minima.
pub const PEAK_PROMINENCE: f64 = 5e-4;
/// Peaks closer than this to a more prominent one are treated as its fringes, GHz.
pub const PEAK_MIN_SEPARATION_GHZ: f64 = 0.02;
/// Level-1 tunneling probability, relative to its plateau, at the spectroscopy bias.
pub const SPECTROSCOPY_LEVEL1_FRACTION: f64 = 0.1;

/// Bias at which `|2>` tunnels almost surely and `|1>` with a tenth of its
/// plateau, so both excitations register and neither saturates the signal.
pub fn spectroscopy_iz(model: &ReadoutModel) -> Result<f64> {
    model.validate()?;
    let f = SPECTROSCOPY_LEVEL1_FRACTION;
    Ok(model.midpoint_iz[1] + (f / (1.0 - f)).ln() / model.steepness[1])
}

fn prominence(y: &[f64], k: usize) -> f64 {
    let mut left = y[k];
    for &v in y[..k].iter().rev() {
        if v > y[k] {
            break;
        }
        left = left.min(v);
    }
    let mut right = y[k];
    for &v in &y[k + 1..] {
        if v > y[k] {
            break;
        }
        right = right.min(v);
    }
    y[k] - left.max(right)
}

/// `(position, height, prominence)` of a spectral line.
pub type Peak = (f64, f64, f64);

/// Local maxima of `y` with at least `min_prominence`, refined by a parabola
/// through the neighbouring samples. A maximum within `min_separation` of a
/// more prominent one is dropped. Returns `(position, height, prominence)` in grid order.
pub fn find_peaks(x: &[f64], y: &[f64], min_prominence: f64, min_separation: f64) -> Vec<Peak> {
    let n = y.len().min(x.len());
    let mut cand = Vec::new();
    for k in 1..n.saturating_sub(1) {
        if !(y[k] > y[k - 1] && y[k] >= y[k + 1]) {
            continue;
        }
        let prom = prominence(&y[..n], k);
        if prom < min_prominence {
            continue;
        }
        let off = parabolic_vertex(y[k - 1], y[k], y[k + 1]);
        let step = if off >= 0.0 { x[k + 1] - x[k] } else { x[k] - x[k - 1] };
        cand.push((x[k] + off * step, y[k], prom));
    }
    let keep: Vec<bool> = cand
        .iter()
        .map(|&(xc, _, pc)| !cand.iter().any(|&(xo, _, po)| (xo - xc).abs() < min_separation && (po > pc || (po == pc && xo < xc))))
        .collect();
    cand.into_iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c).collect()
}

fn spectroscopy_row(lab: &Lab, cfg: &SpectroscopyConfig, iz: f64, exec: &dyn Executor) -> Result<Vec<Vec<f64>>> {
    let env = cfg.envelope()?;
    let signal = lab.emit(single(&env)?)?;
    let f10 = lab.system.f10_ghz;
    exec.run(cfg.freqs_ghz.len(), &|k| {
        let prop = lab.propagator((cfg.freqs_ghz[k] - f10) * 1e3)?;
        let s = prop.final_state(&lab.ground(), &signal, cfg.dt)?;
        let mut out = vec![lab.measure(&s, iz)?];
        out.extend(pad_populations(s.populations()));
        out.push(s.tls_population());
        Ok(out)
    })
}

/// Tunneling after a long drive pulse versus drive frequency.
pub fn run_spectroscopy(lab: &Lab, cfg: &SpectroscopyConfig, exec: &dyn Executor) -> Result<ExperimentResult> {
    lab.validate()?;
    if cfg.freqs_ghz.len() < 3 {
        return Err(invalid("spectroscopy needs at least three frequencies"));
    }
    if !cfg.freqs_ghz.windows(2).all(|w| w[1] > w[0]) {
        return Err(invalid("spectroscopy frequencies must increase"));
    }
    let iz = spectroscopy_iz(&lab.readout)?;
    let cols = transpose(spectroscopy_row(lab, cfg, iz, exec)?, 5);
    let peaks = find_peaks(&cfg.freqs_ghz, &cols[0], PEAK_PROMINENCE, PEAK_MIN_SEPARATION_GHZ);
    let mut r = ExperimentResult::new("spectroscopy").axis("frequency_ghz", cfg.freqs_ghz.clone());
    for (name, c) in ["p_tunnel", "pop0", "pop1", "pop2", "pop_tls"].iter().zip(cols) {
        r = r.column(name, c, true);
    }
    r.set_fit("peak_count", peaks.len() as f64);
    for (k, &(f, h, _)) in peaks.iter().enumerate() {
        r.set_fit(&format!("peak{}_ghz", k + 1), f);
        r.set_fit(&format!("peak{}_height", k + 1), h);
    }
    r.set_fit("amplitude", cfg.amplitude);
    r.set_fit("measure_iz", iz);
    r.note("mode", format!("{}", cfg.mode));
    let list: Vec<String> = peaks.iter().map(|p| format!("{:.4}", p.0)).collect();
    r.summary = format!("{} peaks at [{}] GHz", peaks.len(), list.join(", "));
    Ok(r)
}

/// Bias and probe grids for the defect avoided-crossing map.
#[derive(Debug, Clone, PartialEq)]
pub struct TlsCrossingConfig {
    pub f10_ghz: Vec<f64>,
    pub probe: SpectroscopyConfig,
}

impl Default for TlsCrossingConfig {
    fn default() -> Self {
        Self {
            f10_ghz: arange(6.95, 7.15 + 1e-9, 0.025),
            probe: SpectroscopyConfig::new(arange(6.96, 7.14 + 1e-9, 0.002), PowerMode::Low),
        }
    }
}

/// Single-excitation eigenfrequencies of the qubit-defect pair, GHz.
pub fn avoided_crossing_oracle(f10_ghz: f64, tls: &TlsParams) -> (f64, f64) {
    let mean = 0.5 * (f10_ghz + tls.f_tls_ghz);
    let g = tls.coupling_mhz * 1e-3;
    let half = (0.25 * (f10_ghz - tls.f_tls_ghz).powi(2) + g * g).sqrt();
    (mean - half, mean + half)
}

/// Low-power spectroscopy at each qubit bias with the defect coupled in.
pub fn run_tls_crossing(lab: &Lab, cfg: &TlsCrossingConfig, exec: &dyn Executor) -> Result<ExperimentResult> {
    if !lab.tls.enabled {
        return Err(invalid("the avoided-crossing map needs the defect enabled"));
    }
    if cfg.f10_ghz.is_empty() || cfg.probe.freqs_ghz.len() < 3 {
        return Err(invalid("avoided-crossing grids are too small"));
    }
    let iz = spectroscopy_iz(&lab.readout)?;
    let np = cfg.probe.freqs_ghz.len();
    let mut cols: [Vec<f64>; 2] = Default::default();
    let mut closest: Option<(f64, Vec<Peak>)> = None;
    for &f10 in &cfg.f10_ghz {
        let mut row_lab = lab.clone();
        row_lab.system.f10_ghz = f10;
        row_lab.validate()?;
        let rows = spectroscopy_row(&row_lab, &cfg.probe, iz, exec)?;
        let row = transpose(rows, 5);
        let peaks = find_peaks(&cfg.probe.freqs_ghz, &row[0], PEAK_PROMINENCE, PEAK_MIN_SEPARATION_GHZ);
        let d = (f10 - lab.tls.f_tls_ghz).abs();
        if closest.as_ref().is_none_or(|(best, _)| d < (best - lab.tls.f_tls_ghz).abs()) {
            closest = Some((f10, peaks));
        }
        cols[0].extend_from_slice(&row[0]);
        cols[1].extend_from_slice(&row[4]);
    }
    debug_assert_eq!(cols[0].len(), np * cfg.f10_ghz.len());
    let [p, tls_pop] = cols;
    let mut r = ExperimentResult::new("tls_crossing")
        .axis("f10_ghz", cfg.f10_ghz.clone())
        .axis("probe_ghz", cfg.probe.freqs_ghz.clone())
        .column("p_tunnel", p, true)
        .column("pop_tls", tls_pop, true);
    let (f10, mut peaks) = closest.unwrap();
    let (lo, hi) = avoided_crossing_oracle(f10, &lab.tls);
    r.set_fit("crossing_f10_ghz", f10);
    r.set_fit("oracle_lower_ghz", lo);
    r.set_fit("oracle_upper_ghz", hi);
    r.set_fit("oracle_splitting_mhz", (hi - lo) * 1e3);
    r.summary = if peaks.len() >= 2 {
        peaks.sort_by(|a, b| b.2.total_cmp(&a.2));
        let (a, b) = (peaks[0].0.min(peaks[1].0), peaks[0].0.max(peaks[1].0));
        r.set_fit("lower_peak_ghz", a);
        r.set_fit("upper_peak_ghz", b);
        r.set_fit("splitting_mhz", (b - a) * 1e3);
        format!("splitting {:.2} MHz at f10 = {f10:.4} GHz (closed form {:.2} MHz)", (b - a) * 1e3, (hi - lo) * 1e3)
    } else {
        format!("no resolved splitting at f10 = {f10:.4} GHz ({} peaks)", peaks.len())
    };
    Ok(r)
}

/// Sideband grid for the mixer calibration, MHz.
pub fn default_sideband_grid() -> Vec<f64> {
    arange(-200.0, 200.0, 50.0).into_iter().filter(|&f| f != 0.0).collect()
}

/// Mixer calibration over a sideband grid with before/after suppression.
pub fn run_calibrate_iq(chain: &ChainModel, f_sb_mhz: &[f64]) -> Result<(ExperimentResult, IQCalibration)> {
    let cal = calibrate_sidebands(chain, f_sb_mhz)?;
    let mut cols: [Vec<f64>; 7] = Default::default();
    for (&f, (e, &res)) in f_sb_mhz.iter().zip(cal.entries.iter().zip(&cal.residuals)) {
        let before = sideband_suppression_db(chain, None, f)?;
        let after = sideband_suppression_db(chain, Some(&cal), f)?;
        for (c, v) in cols.iter_mut().zip([e.q_gain, e.q_phase, e.dc_i, e.dc_q, res, before, after]) {
            c.push(v);
        }
    }
    let worst = cols[6].iter().copied().fold(f64::INFINITY, f64::min);
    let [g, ph, di, dq, res, before, after] = cols;
    let mut r = ExperimentResult::new("calibrate_iq")
        .axis("f_sb_mhz", f_sb_mhz.to_vec())
        .column("q_gain", g, false)
        .column("q_phase", ph, false)
        .column("dc_i", di, false)
        .column("dc_q", dq, false)
        .column("residual", res, false)
        .column("suppression_uncorrected_db", before, false)
        .column("suppression_db", after, false);
    r.set_fit("worst_suppression_db", worst);
    r.summary = format!("worst-case spur suppression {worst:.1} dB over {} sidebands", f_sb_mhz.len());
    Ok((r, cal))
}

impl core::fmt::Display for PowerMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Self::Low => "low",
            Self::High => "high",
        })
    }
}

impl core::str::FromStr for PowerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Self::Low),
            "high" => Ok(Self::High),
            other => Err(invalid(format!("unknown power mode {other:?} (expected low or high)"))),
        }
    }
}
