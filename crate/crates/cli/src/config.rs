//! Run configuration: TOML in, fully resolved JSON snapshot out.
//!
//! Every section is optional and falls back to the simulator defaults.
//! Unknown keys are rejected, and every error names the key path it came from.

use std::path::PathBuf;

use phaseq_core::experiments::{
    default_ramsey_grid, default_sideband_grid, default_tsep_grid, ChainStage, GateMapConfig, Lab, PowerMode,
    SpectroscopyConfig, TlsCrossingConfig, WIDTH_SWEEP_GRID,
};
use phaseq_core::pulses::{PulseSpec, DEFAULT_SAMPLE_RATE, DEFAULT_SLEPIAN_NW, DEFAULT_TRUNCATION};
use phaseq_core::readout::ReadoutModel;
use phaseq_core::sigchain::{
    calibrate_sidebands, gaussian_lowpass, ChainModel, DEFAULT_DAC_BITS, DEFAULT_LOWPASS_MHZ, DEFAULT_REGULARIZATION,
};
use phaseq_core::system::{default_drive_scale, QutritParams, TlsParams};
use phaseq_core::C64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// One protocol per paper figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Scurve,
    GateMap,
    TsepSweep,
    RamseyFilter,
    WidthSweep,
    Spectroscopy,
    TlsCrossing,
    CalibrateIq,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Scurve => "scurve",
            Self::GateMap => "gate_map",
            Self::TsepSweep => "tsep_sweep",
            Self::RamseyFilter => "ramsey_filter",
            Self::WidthSweep => "width_sweep",
            Self::Spectroscopy => "spectroscopy",
            Self::TlsCrossing => "tls_crossing",
            Self::CalibrateIq => "calibrate_iq",
        }
    }
}

/// A coordinate list: explicit values, a stepped range, or evenly spaced points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range(RangeGrid),
    Linspace(LinspaceGrid),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinspaceGrid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub fn range(start: f64, stop: f64, step: f64) -> Self {
        Self::Range(RangeGrid { start, stop, step })
    }

    pub fn linspace(start: f64, stop: f64, points: usize) -> Self {
        Self::Linspace(LinspaceGrid { start, stop, points })
    }

    pub fn values(&self, path: &str) -> Result<Vec<f64>, CliError> {
        let v = match self {
            Self::List(v) => v.clone(),
            Self::Range(r) => {
                if !(r.step > 0.0 && r.stop >= r.start) {
                    return Err(CliError::invalid(path, "range needs step > 0 and stop >= start"));
                }
                let n = ((r.stop - r.start) / r.step + 1e-9).floor() as usize + 1;
                if n > 1_000_000 {
                    return Err(CliError::invalid(path, "range has more than 10^6 points"));
                }
                (0..n).map(|k| r.start + r.step * k as f64).collect()
            }
            Self::Linspace(l) => match l.points {
                0 => Vec::new(),
                1 => vec![l.start],
                n => (0..n).map(|k| l.start + (l.stop - l.start) * k as f64 / (n - 1) as f64).collect(),
            },
        };
        if v.is_empty() {
            return Err(CliError::invalid(path, "grid is empty"));
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(CliError::invalid(path, "grid values must be finite"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    /// GHz.
    pub f10: f64,
    /// MHz.
    pub anharmonicity: f64,
    pub levels: usize,
    /// ns.
    pub t1: f64,
    /// ns.
    pub t2: f64,
    /// `n <-> n+1` matrix elements; the harmonic ladder when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drive_scale: Option<Vec<f64>>,
}

impl Default for SystemSection {
    fn default() -> Self {
        let p = QutritParams::default();
        Self { f10: p.f10_ghz, anharmonicity: p.anharmonicity_mhz, levels: p.levels, t1: p.t1_ns, t2: p.t2_ns, drive_scale: None }
    }
}

impl SystemSection {
    fn resolve(&self) -> Result<QutritParams, CliError> {
        if !(self.t1.is_finite() && self.t2.is_finite()) {
            return Err(CliError::invalid("system", "t1 and t2 must be finite; use flags.decoherence = false instead"));
        }
        let p = QutritParams {
            f10_ghz: self.f10,
            anharmonicity_mhz: self.anharmonicity,
            levels: self.levels,
            t1_ns: self.t1,
            t2_ns: self.t2,
            drive_scale: self.drive_scale.clone().unwrap_or_else(|| default_drive_scale(self.levels)),
        };
        p.validate().map_err(|e| CliError::invalid("system", e))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TlsSection {
    /// GHz.
    pub f_tls: f64,
    /// `g / 2π`, MHz.
    pub coupling: f64,
    pub enabled: bool,
}

impl Default for TlsSection {
    fn default() -> Self {
        let t = TlsParams::default();
        Self { f_tls: t.f_tls_ghz, coupling: t.coupling_mhz, enabled: t.enabled }
    }
}

impl TlsSection {
    fn resolve(&self) -> Result<TlsParams, CliError> {
        let t = TlsParams { f_tls_ghz: self.f_tls, coupling_mhz: self.coupling, enabled: self.enabled };
        t.validate().map_err(|e| CliError::invalid("tls", e))?;
        Ok(t)
    }
}

/// Named starting points for the readout model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutPreset {
    BelowTls,
    AboveTls,
    Ideal,
}

/// Readout curves: a preset with optional per-field overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutSection {
    pub preset: ReadoutPreset,
    pub midpoint_iz: Option<Vec<f64>>,
    pub steepness: Option<Vec<f64>>,
    pub plateau: Option<Vec<f64>>,
    pub stray_floor: Option<f64>,
    pub t1_loss: Option<f64>,
    pub other_tls_loss: Option<f64>,
    pub tls_loss: Option<f64>,
    pub tls_active: Option<bool>,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        Self {
            preset: ReadoutPreset::BelowTls,
            midpoint_iz: None,
            steepness: None,
            plateau: None,
            stray_floor: None,
            t1_loss: None,
            other_tls_loss: None,
            tls_loss: None,
            tls_active: None,
        }
    }
}

impl ReadoutSection {
    fn resolve(&self) -> Result<ReadoutModel, CliError> {
        let mut m = match self.preset {
            ReadoutPreset::BelowTls => ReadoutModel::below_tls(),
            ReadoutPreset::AboveTls => ReadoutModel::above_tls(),
            ReadoutPreset::Ideal => ReadoutModel::ideal(),
        };
        if let Some(v) = &self.midpoint_iz {
            m.midpoint_iz = v.clone();
        }
        if let Some(v) = &self.steepness {
            m.steepness = v.clone();
        }
        if let Some(v) = &self.plateau {
            m.plateau = v.clone();
        }
        m.stray_floor = self.stray_floor.unwrap_or(m.stray_floor);
        m.t1_loss = self.t1_loss.unwrap_or(m.t1_loss);
        m.other_tls_loss = self.other_tls_loss.unwrap_or(m.other_tls_loss);
        m.tls_loss = self.tls_loss.unwrap_or(m.tls_loss);
        m.tls_active = self.tls_active.unwrap_or(m.tls_active);
        m.validate().map_err(|e| CliError::invalid("readout", e))?;
        Ok(m)
    }

    /// Same model with every field spelled out.
    fn resolved(&self) -> Result<Self, CliError> {
        let m = self.resolve()?;
        Ok(Self {
            preset: self.preset,
            midpoint_iz: Some(m.midpoint_iz),
            steepness: Some(m.steepness),
            plateau: Some(m.plateau),
            stray_floor: Some(m.stray_floor),
            t1_loss: Some(m.t1_loss),
            other_tls_loss: Some(m.other_tls_loss),
            tls_loss: Some(m.tls_loss),
            tls_active: Some(m.tls_active),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseShapeName {
    Gaussian,
    Slepian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSection {
    pub shape: PulseShapeName,
    /// Gaussian FWHM, ns.
    pub fwhm: f64,
    /// Gaussian half-window in units of the FWHM.
    pub truncation: f64,
    /// Slepian length, ns.
    pub duration: f64,
    pub time_bandwidth: f64,
    /// GS/s.
    pub sample_rate: f64,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self {
            shape: PulseShapeName::Gaussian,
            fwhm: 8.0,
            truncation: DEFAULT_TRUNCATION,
            duration: 16.0,
            time_bandwidth: DEFAULT_SLEPIAN_NW,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl PulseSection {
    fn resolve(&self) -> Result<PulseSpec, CliError> {
        let spec = match self.shape {
            PulseShapeName::Gaussian => {
                PulseSpec::Gaussian { fwhm_ns: self.fwhm, truncation: self.truncation, sample_rate: self.sample_rate }
            }
            PulseShapeName::Slepian => PulseSpec::Slepian {
                duration_ns: self.duration,
                time_bandwidth: self.time_bandwidth,
                sample_rate: self.sample_rate,
            },
        };
        spec.build(1.0).map_err(|e| CliError::invalid("pulse", e))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    /// GS/s.
    pub sample_rate: f64,
    /// 3 dB corner of each port's Gaussian low-pass, MHz.
    pub lowpass_i: f64,
    pub lowpass_q: f64,
    pub gain_imbalance: f64,
    /// rad.
    pub phase_skew: f64,
    pub leakage_re: f64,
    pub leakage_im: f64,
    /// 0 disables quantization.
    pub dac_bits: u32,
    pub full_scale: f64,
    pub regularization: f64,
    /// Deconvolve the port filters before emission.
    pub precorrect: bool,
    /// Calibrate the mixer over `sidebands` before the run.
    pub calibrate: bool,
    /// MHz.
    pub sidebands: Vec<f64>,
}

impl Default for ChainSection {
    fn default() -> Self {
        let m = ChainModel::default();
        Self {
            sample_rate: m.sample_rate,
            lowpass_i: DEFAULT_LOWPASS_MHZ,
            lowpass_q: DEFAULT_LOWPASS_MHZ,
            gain_imbalance: m.iq_gain_imbalance,
            phase_skew: m.iq_phase_skew,
            leakage_re: m.carrier_leakage.re,
            leakage_im: m.carrier_leakage.im,
            dac_bits: DEFAULT_DAC_BITS,
            full_scale: m.full_scale,
            regularization: DEFAULT_REGULARIZATION,
            precorrect: true,
            calibrate: true,
            sidebands: default_sideband_grid(),
        }
    }
}

impl ChainSection {
    pub fn model(&self) -> Result<ChainModel, CliError> {
        if !(self.lowpass_i > 0.0 && self.lowpass_q > 0.0) {
            return Err(CliError::invalid("chain", "low-pass corners must be positive"));
        }
        let m = ChainModel {
            sample_rate: self.sample_rate,
            lowpass_i: gaussian_lowpass(self.lowpass_i, self.sample_rate),
            lowpass_q: gaussian_lowpass(self.lowpass_q, self.sample_rate),
            iq_gain_imbalance: self.gain_imbalance,
            iq_phase_skew: self.phase_skew,
            carrier_leakage: C64::new(self.leakage_re, self.leakage_im),
            dac_bits: (self.dac_bits > 0).then_some(self.dac_bits),
            full_scale: self.full_scale,
            regularization: self.regularization,
        };
        m.validate().map_err(|e| CliError::invalid("chain", e))?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    pub decoherence: bool,
    /// Route pulses through the modeled control chain.
    pub chain: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Self { decoherence: true, chain: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScurveSection {
    pub points: usize,
}

impl Default for ScurveSection {
    fn default() -> Self {
        Self { points: 201 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateMapSection {
    /// ns.
    pub t_sep: f64,
    /// MHz.
    pub detuning: Grid,
    /// rad.
    pub theta: Grid,
}

impl Default for GateMapSection {
    fn default() -> Self {
        Self { t_sep: 40.0, detuning: Grid::linspace(-40.0, 40.0, 41), theta: Grid::linspace(0.0, std::f64::consts::TAU, 41) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsepSection {
    /// ns.
    pub t_sep: Grid,
}

impl Default for TsepSection {
    fn default() -> Self {
        Self { t_sep: Grid::List(default_tsep_grid()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RamseySection {
    /// ns.
    pub fwhm: f64,
    /// ns; starts where the two pulses stop overlapping when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_sep: Option<Grid>,
}

impl Default for RamseySection {
    fn default() -> Self {
        Self { fwhm: 5.0, t_sep: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WidthSweepSection {
    /// ns.
    pub fwhm: Grid,
}

impl Default for WidthSweepSection {
    fn default() -> Self {
        Self { fwhm: Grid::List(WIDTH_SWEEP_GRID.to_vec()) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerName {
    Low,
    High,
}

impl From<PowerName> for PowerMode {
    fn from(p: PowerName) -> Self {
        match p {
            PowerName::Low => PowerMode::Low,
            PowerName::High => PowerMode::High,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectroscopySection {
    /// GHz; `f10 - 0.3` to `f10 + 0.1` in 5 MHz steps when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequency: Option<Grid>,
    pub power: PowerName,
    /// rad/ns; the power-mode default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// ns, including edges.
    pub pulse_length: f64,
    pub edge: f64,
    /// Integrator step for the long drive, ns.
    pub dt: f64,
}

impl Default for SpectroscopySection {
    fn default() -> Self {
        let c = SpectroscopyConfig::new(Vec::new(), PowerMode::Low);
        Self { frequency: None, power: PowerName::Low, amplitude: None, pulse_length: c.pulse_ns, edge: c.edge_ns, dt: c.dt }
    }
}

impl SpectroscopySection {
    fn resolve(&self, path: &str, freqs: Vec<f64>) -> Result<SpectroscopyConfig, CliError> {
        let mode = PowerMode::from(self.power);
        let mut c = SpectroscopyConfig::new(freqs, mode);
        c.amplitude = self.amplitude.unwrap_or(c.amplitude);
        c.pulse_ns = self.pulse_length;
        c.edge_ns = self.edge;
        c.dt = self.dt;
        if !(c.dt > 0.0 && c.dt <= 1.0) {
            return Err(CliError::invalid(path, "dt must lie in (0, 1] ns"));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TlsCrossingSection {
    /// Qubit bias points, GHz.
    pub f10: Grid,
    /// GHz.
    pub probe: Grid,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    pub pulse_length: f64,
    pub edge: f64,
    pub dt: f64,
}

impl Default for TlsCrossingSection {
    fn default() -> Self {
        let d = TlsCrossingConfig::default();
        Self {
            f10: Grid::range(6.95, 7.15, 0.025),
            probe: Grid::range(6.96, 7.14, 0.002),
            amplitude: None,
            pulse_length: d.probe.pulse_ns,
            edge: d.probe.edge_ns,
            dt: d.probe.dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateIqSection {
    /// MHz.
    pub sidebands: Vec<f64>,
}

impl Default for CalibrateIqSection {
    fn default() -> Self {
        Self { sidebands: default_sideband_grid() }
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    /// Output root; overridden by `--out`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Integrator step, ns.
    pub dt: f64,
    /// Worker threads for grid points; 0 uses every available core.
    pub threads: usize,
    pub flags: Flags,
    pub system: SystemSection,
    pub tls: TlsSection,
    pub readout: ReadoutSection,
    pub pulse: PulseSection,
    pub chain: ChainSection,
    pub scurve: ScurveSection,
    pub gate_map: GateMapSection,
    pub tsep_sweep: TsepSection,
    pub ramsey_filter: RamseySection,
    pub width_sweep: WidthSweepSection,
    pub spectroscopy: SpectroscopySection,
    pub tls_crossing: TlsCrossingSection,
    pub calibrate_iq: CalibrateIqSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            output_dir: None,
            dt: phaseq_core::dynamics::DEFAULT_DT,
            threads: 0,
            flags: Flags::default(),
            system: SystemSection::default(),
            tls: TlsSection::default(),
            readout: ReadoutSection::default(),
            pulse: PulseSection::default(),
            chain: ChainSection::default(),
            scurve: ScurveSection::default(),
            gate_map: GateMapSection::default(),
            tsep_sweep: TsepSection::default(),
            ramsey_filter: RamseySection::default(),
            width_sweep: WidthSweepSection::default(),
            spectroscopy: SpectroscopySection::default(),
            tls_crossing: TlsCrossingSection::default(),
            calibrate_iq: CalibrateIqSection::default(),
        }
    }
}

/// Parses a TOML document, applies `key=value` overrides and validates.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(path_error)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a JSON snapshot written by [`RunConfig::snapshot_json`].
pub fn parse_snapshot(text: &str) -> Result<RunConfig, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(path_error)?;
    cfg.validate()?;
    Ok(cfg)
}

fn path_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> CliError {
    let path = e.path().to_string();
    let message = e.into_inner().to_string();
    let message = message.split("\nin `").next().unwrap_or_default().trim_end();
    if path == "." || path.is_empty() {
        CliError::Config(message.to_string())
    } else {
        CliError::Config(format!("{path}: {message}"))
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {item:?} is not of the form key=value")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key {key:?} is malformed")));
    }
    let value = parse_value(raw.trim());
    let mut cur = table;
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            cur.insert((*part).to_string(), value);
            return Ok(());
        }
        let entry = cur.entry((*part).to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("{}: not a table", parts[..=i].join("."))))?;
    }
    Ok(())
}

/// A TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    /// Checks every section against its module invariants.
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.dt.is_finite() && self.dt > 0.0 && self.dt <= 1.0) {
            return Err(CliError::invalid("dt", "must lie in (0, 1] ns"));
        }
        self.system.resolve()?;
        self.tls.resolve()?;
        self.readout.resolve()?;
        self.pulse.resolve()?;
        if self.flags.chain {
            self.chain.model()?;
        }
        self.gate_map.detuning.values("gate_map.detuning")?;
        self.gate_map.theta.values("gate_map.theta")?;
        self.tsep_sweep.t_sep.values("tsep_sweep.t_sep")?;
        if let Some(g) = &self.ramsey_filter.t_sep {
            g.values("ramsey_filter.t_sep")?;
        }
        for &w in &self.width_sweep.fwhm.values("width_sweep.fwhm")? {
            if !(3.0..=12.0).contains(&w) {
                return Err(CliError::invalid("width_sweep.fwhm", format!("{w} ns lies outside [3, 12] ns")));
            }
        }
        if let Some(g) = &self.spectroscopy.frequency {
            g.values("spectroscopy.frequency")?;
        }
        self.tls_crossing.f10.values("tls_crossing.f10")?;
        self.tls_crossing.probe.values("tls_crossing.probe")?;
        if self.calibrate_iq.sidebands.is_empty() {
            return Err(CliError::invalid("calibrate_iq.sidebands", "list is empty"));
        }
        Ok(())
    }

    /// The configuration with derived defaults written out, as pretty JSON.
    pub fn snapshot_json(&self) -> Result<String, CliError> {
        let mut full = self.clone();
        full.readout = self.readout.resolved()?;
        full.system.drive_scale = Some(self.system.resolve()?.drive_scale);
        serde_json::to_string_pretty(&full).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Lab assembled from the system, readout, pulse and chain sections.
    pub fn lab(&self) -> Result<Lab, CliError> {
        let chain = if self.flags.chain {
            let model = self.chain.model()?;
            let mut stage = ChainStage::new(model.clone());
            stage.precorrect = self.chain.precorrect;
            if self.chain.calibrate {
                stage = stage.with_correction(calibrate_sidebands(&model, &self.chain.sidebands)?);
            }
            Some(stage)
        } else {
            None
        };
        Ok(Lab {
            system: self.system.resolve()?,
            tls: self.tls.resolve()?,
            readout: self.readout.resolve()?,
            pulse: self.pulse.resolve()?,
            decoherence: self.flags.decoherence,
            dt: self.dt,
            chain,
        })
    }

    pub fn gate_map_config(&self) -> Result<GateMapConfig, CliError> {
        Ok(GateMapConfig {
            t_sep_ns: self.gate_map.t_sep,
            detunings_mhz: self.gate_map.detuning.values("gate_map.detuning")?,
            thetas: self.gate_map.theta.values("gate_map.theta")?,
        })
    }

    pub fn tsep_grid(&self) -> Result<Vec<f64>, CliError> {
        self.tsep_sweep.t_sep.values("tsep_sweep.t_sep")
    }

    pub fn ramsey_grid(&self) -> Result<Vec<f64>, CliError> {
        match &self.ramsey_filter.t_sep {
            Some(g) => g.values("ramsey_filter.t_sep"),
            None => Ok(default_ramsey_grid(&PulseSpec::gaussian(self.ramsey_filter.fwhm))?),
        }
    }

    pub fn width_grid(&self) -> Result<Vec<f64>, CliError> {
        self.width_sweep.fwhm.values("width_sweep.fwhm")
    }

    pub fn spectroscopy_config(&self) -> Result<SpectroscopyConfig, CliError> {
        let f10 = self.system.f10;
        let freqs = match &self.spectroscopy.frequency {
            Some(g) => g.values("spectroscopy.frequency")?,
            None => Grid::range(f10 - 0.3, f10 + 0.1, 0.005).values("spectroscopy.frequency")?,
        };
        self.spectroscopy.resolve("spectroscopy", freqs)
    }

    pub fn tls_crossing_config(&self) -> Result<TlsCrossingConfig, CliError> {
        let s = &self.tls_crossing;
        let probe = SpectroscopySection {
            frequency: None,
            power: PowerName::Low,
            amplitude: s.amplitude,
            pulse_length: s.pulse_length,
            edge: s.edge,
            dt: s.dt,
        }
        .resolve("tls_crossing", s.probe.values("tls_crossing.probe")?)?;
        Ok(TlsCrossingConfig { f10_ghz: s.f10.values("tls_crossing.f10")?, probe })
    }
}
