//! Physical model of the driven phase qubit.
//!
//! Frequencies are stored as ordinary frequencies (GHz for transition
//! frequencies, MHz for offsets) and converted to angular units (rad/ns) only
//! when a Hamiltonian is assembled. Times are in ns throughout.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};


use crate::error::{invalid, Error, Result};
use crate::linalg::{CMatrix, C64, ONE, ZERO};
#[allow(unused_imports)]
use num_traits::Float;

pub const TAU: f64 = 2.0 * PI;

/// Converts an ordinary frequency in MHz to angular frequency in rad/ns.
#[inline]
pub fn mhz_to_rad_per_ns(mhz: f64) -> f64 {
    TAU * mhz * 1e-3
}

/// Converts an ordinary frequency in GHz to angular frequency in rad/ns.
#[inline]
pub fn ghz_to_rad_per_ns(ghz: f64) -> f64 {
    TAU * ghz
}

/// Level structure and decoherence of the qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct QutritParams {
    /// `|0> -> |1>` transition frequency, GHz.
    pub f10_ghz: f64,
    /// `(w10 - w21) / 2 pi`, MHz, positive.
    pub anharmonicity_mhz: f64,
    /// Number of simulated levels (2 or 3).
    pub levels: usize,
    /// Energy relaxation time, ns. `f64::INFINITY` disables relaxation.
    pub t1_ns: f64,
    /// Ramsey coherence time, ns. `f64::INFINITY` with infinite `t1_ns` disables dephasing.
    pub t2_ns: f64,
    /// Matrix elements for the `n <-> n+1` drive coupling (`levels - 1` entries).
    pub drive_scale: Vec<f64>,
}

impl Default for QutritParams {
    fn default() -> Self {
        Self {
            f10_ghz: 6.75,
            anharmonicity_mhz: 200.0,
            levels: 3,
            t1_ns: 400.0,
            t2_ns: 120.0,
            drive_scale: default_drive_scale(3),
        }
    }
}

/// Harmonic-ladder matrix elements `sqrt(n + 1)`.
pub fn default_drive_scale(levels: usize) -> Vec<f64> {
    (0..levels.saturating_sub(1)).map(|n| ((n + 1) as f64).sqrt()).collect()
}

impl QutritParams {
    /// Same level structure with relaxation and dephasing switched off.
    pub fn coherent(&self) -> Self {
        Self { t1_ns: f64::INFINITY, t2_ns: f64::INFINITY, ..self.clone() }
    }

    /// Changes the level count and resets the drive matrix elements to the ladder default.
    pub fn with_levels(&self, levels: usize) -> Self {
        Self { levels, drive_scale: default_drive_scale(levels), ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.levels) {
            return Err(invalid(format!("levels must be 2 or 3, got {}", self.levels)));
        }
        if self.drive_scale.len() != self.levels - 1 {
            return Err(Error::DimensionMismatch {
                expected: self.levels - 1,
                found: self.drive_scale.len(),
            });
        }
        if !self.drive_scale.iter().all(|&l| l.is_finite() && l > 0.0) {
            return Err(invalid("drive_scale entries must be finite and positive"));
        }
        if !(self.anharmonicity_mhz.is_finite() && self.anharmonicity_mhz > 0.0) {
            return Err(invalid("anharmonicity must be positive"));
        }
        if !(self.f10_ghz.is_finite() && self.f10_ghz > 0.0) {
            return Err(invalid("f10 must be positive"));
        }
        if !(self.t1_ns > 0.0 && self.t2_ns > 0.0) || self.t1_ns.is_nan() || self.t2_ns.is_nan() {
            return Err(invalid("t1 and t2 must be positive"));
        }
        if self.t2_ns > 2.0 * self.t1_ns {
            return Err(invalid(format!(
                "t2 = {} ns exceeds 2*t1 = {} ns",
                self.t2_ns,
                2.0 * self.t1_ns
            )));
        }
        Ok(())
    }

    /// `|1> -> |2>` transition frequency, GHz.
    pub fn f21_ghz(&self) -> f64 {
        self.f10_ghz - self.anharmonicity_mhz * 1e-3
    }

    /// Pure-dephasing rate `1/t_phi = 1/t2 - 1/(2 t1)`, 1/ns.
    pub fn dephasing_rate(&self) -> f64 {
        let t1_term = if self.t1_ns.is_finite() { 0.5 / self.t1_ns } else { 0.0 };
        let t2_term = if self.t2_ns.is_finite() { 1.0 / self.t2_ns } else { 0.0 };
        (t2_term - t1_term).max(0.0)
    }
}

/// A spurious two-level defect exchange-coupled to the qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct TlsParams {
    pub f_tls_ghz: f64,
    /// `g / 2 pi` in MHz; the avoided-crossing splitting is `2 g`.
    pub coupling_mhz: f64,
    pub enabled: bool,
}

impl Default for TlsParams {
    fn default() -> Self {
        Self { f_tls_ghz: 7.05, coupling_mhz: 25.0, enabled: false }
    }
}

impl TlsParams {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn enabled() -> Self {
        Self { enabled: true, ..Self::default() }
    }

    pub fn splitting_mhz(&self) -> f64 {
        2.0 * self.coupling_mhz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_tls_ghz.is_finite() && self.f_tls_ghz > 0.0) {
            return Err(invalid("TLS frequency must be positive"));
        }
        if !(self.coupling_mhz.is_finite() && self.coupling_mhz >= 0.0) {
            return Err(invalid("TLS coupling must be non-negative"));
        }
        Ok(())
    }

    /// Hilbert-space factor contributed by the defect.
    pub(crate) fn factor(&self) -> usize {
        if self.enabled {
            2
        } else {
            1
        }
    }
}

/// Total Hilbert-space dimension for a qubit model plus optional defect.
pub fn hilbert_dim(params: &QutritParams, tls: &TlsParams) -> usize {
    params.levels * tls.factor()
}

/// Rotating-frame Hamiltonian in rad/ns.
///
/// The frame rotates at the drive frequency `f10 + detuning`, so the qubit
/// diagonal is `(0, -Δ, -2Δ - η)`. The drive enters as `(λ_n / 2) Ω |n><n+1| + h.c.`.
/// With the defect enabled the basis is `|n> ⊗ |t>` (index `2 n + t`) and the
/// exchange term reuses the drive's ladder matrix elements.
pub fn build_hamiltonian(
    params: &QutritParams,
    drive: C64,
    detuning_mhz: f64,
    tls: &TlsParams,
) -> Result<CMatrix> {
    params.validate()?;
    if !(drive.re.is_finite() && drive.im.is_finite()) {
        return Err(invalid("drive amplitude must be finite"));
    }
    let mut h = CMatrix::zeros(hilbert_dim(params, tls));
    HamiltonianWriter::new(params, detuning_mhz, tls).write(&mut h, drive);
    Ok(h)
}

/// Precomputed pieces of the Hamiltonian so the integrator can refresh only
/// the drive-dependent entries each step.
#[derive(Debug, Clone)]
pub(crate) struct HamiltonianWriter {
    tls_factor: usize,
    levels: usize,
    static_part: CMatrix,
    ladder: Vec<f64>,
}

impl HamiltonianWriter {
    pub(crate) fn new(params: &QutritParams, detuning_mhz: f64, tls: &TlsParams) -> Self {
        let d = params.levels;
        let tf = tls.factor();
        let dim = d * tf;
        let delta = mhz_to_rad_per_ns(detuning_mhz);
        let eta = mhz_to_rad_per_ns(params.anharmonicity_mhz);

        let mut stat = CMatrix::zeros(dim);
        for n in 0..d {
            let mut e = -(n as f64) * delta;
            if n >= 2 {
                // Anharmonic shift accumulates as n(n-1)/2 * η for a Kerr ladder; with
                // three levels only |2> is shifted by η.
                e -= (n * (n - 1) / 2) as f64 * eta;
            }
            for t in 0..tf {
                stat[(n * tf + t, n * tf + t)] = C64::new(e, 0.0);
            }
        }
        if tls.enabled {
            // Defect excitation energy in the drive frame.
            let e_tls = ghz_to_rad_per_ns(tls.f_tls_ghz - params.f10_ghz) - delta;
            for n in 0..d {
                stat[(n * 2 + 1, n * 2 + 1)] += C64::new(e_tls, 0.0);
            }
            let g = mhz_to_rad_per_ns(tls.coupling_mhz);
            for n in 0..d - 1 {
                // |n+1, 0> <-> |n, 1>
                let a = (n + 1) * 2;
                let b = n * 2 + 1;
                let v = C64::new(g * params.drive_scale[n], 0.0);
                stat[(a, b)] += v;
                stat[(b, a)] += v;
            }
        }
        Self { tls_factor: tf, levels: d, static_part: stat, ladder: params.drive_scale.clone() }
    }

    /// Adds a time-independent term, e.g. the anti-Hermitian decay part of
    /// an effective Hamiltonian.
    pub(crate) fn add_static(&mut self, m: &CMatrix) {
        self.static_part = self.static_part.add(m);
    }

    /// Writes `H(drive)` into `h`, which must be `dim x dim`.
    #[inline]
    pub(crate) fn write(&self, h: &mut CMatrix, drive: C64) {
        h.as_mut_slice().copy_from_slice(self.static_part.as_slice());
        let tf = self.tls_factor;
        for n in 0..self.levels - 1 {
            let v = drive * (0.5 * self.ladder[n]);
            for t in 0..tf {
                let r = n * tf + t;
                let c = (n + 1) * tf + t;
                h[(r, c)] += v;
                h[(c, r)] += v.conj();
            }
        }
    }
}

/// Origin of a dissipative channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelKind {
    /// Energy relaxation `|from> -> |from - 1>`.
    Relaxation { from: usize },
    Dephasing,
}

/// A Lindblad channel `rate * D[operator]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Collapse {
    pub kind: ChannelKind,
    /// Rate in 1/ns.
    pub rate: f64,
    /// Dimensionless jump operator on the qubit levels.
    pub operator: CMatrix,
}

/// Relaxation and dephasing channels on the qubit levels.
///
/// Relaxation `|n+1> -> |n>` has rate `(n+1)/t1`. Dephasing uses
/// `sqrt(2) * diag(0, 1, 2, ...)` at rate `1/t_phi`, which makes the `0-1`
/// coherence decay at exactly `1/t_phi`.
pub fn collapse_operators(params: &QutritParams) -> Result<Vec<Collapse>> {
    params.validate()?;
    let d = params.levels;
    let mut out = Vec::new();
    if params.t1_ns.is_finite() {
        for n in 0..d - 1 {
            out.push(Collapse {
                kind: ChannelKind::Relaxation { from: n + 1 },
                rate: (n + 1) as f64 / params.t1_ns,
                operator: CMatrix::outer_unit(d, n, n + 1),
            });
        }
    }
    let gamma_phi = params.dephasing_rate();
    if gamma_phi > 0.0 {
        let diag: Vec<C64> = (0..d).map(|n| C64::new(SQRT_2 * n as f64, 0.0)).collect();
        out.push(Collapse { kind: ChannelKind::Dephasing, rate: gamma_phi, operator: CMatrix::from_diag(&diag) });
    }
    Ok(out)
}

/// Lifts qubit-level channels onto the qubit ⊗ defect space.
pub fn embed_collapse(ops: &[Collapse], tls: &TlsParams) -> Vec<Collapse> {
    if !tls.enabled {
        return ops.to_vec();
    }
    let id = CMatrix::identity(2);
    ops.iter()
        .map(|c| Collapse { kind: c.kind, rate: c.rate, operator: c.operator.kron(&id) })
        .collect()
}

/// Density matrix of the simulated system.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    pub matrix: CMatrix,
    /// Time stamp, ns.
    pub time: f64,
    levels: usize,
    tls_factor: usize,
}

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-10;

/// `|level><level|` on a `d`-level system without a defect.
pub fn pure_state(level: usize, d: usize) -> Result<DensityState> {
    if level >= d {
        return Err(Error::LevelOutOfRange { level, dim: d });
    }
    Ok(DensityState { matrix: CMatrix::outer_unit(d, level, level), time: 0.0, levels: d, tls_factor: 1 })
}

/// Diagonal qubit populations with the defect (if any) traced out.
pub fn populations(state: &DensityState) -> Vec<f64> {
    state.populations()
}

impl DensityState {
    /// Wraps a matrix after checking the density-matrix invariants.
    pub fn new(matrix: CMatrix, levels: usize, with_tls: bool) -> Result<Self> {
        let tf = if with_tls { 2 } else { 1 };
        if matrix.dim() != levels * tf {
            return Err(Error::DimensionMismatch { expected: levels * tf, found: matrix.dim() });
        }
        let s = Self { matrix, time: 0.0, levels, tls_factor: tf };
        s.check()?;
        Ok(s)
    }

    /// Builds from a pure state vector and normalizes it.
    pub fn from_amplitudes(amps: &[C64]) -> Result<Self> {
        let n = amps.len();
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if n == 0 || norm <= 0.0 {
            return Err(invalid("state vector must be nonzero"));
        }
        let mut m = CMatrix::zeros(n);
        for r in 0..n {
            for c in 0..n {
                m[(r, c)] = amps[r] * amps[c].conj() / norm;
            }
        }
        Ok(Self { matrix: m, time: 0.0, levels: n, tls_factor: 1 })
    }

    /// Ground state of the qubit ⊗ defect space (both de-excited).
    pub fn ground(params: &QutritParams, tls: &TlsParams) -> Self {
        let dim = hilbert_dim(params, tls);
        Self { matrix: CMatrix::outer_unit(dim, 0, 0), time: 0.0, levels: params.levels, tls_factor: tls.factor() }
    }

    /// Qubit level `level` with the defect in its ground state.
    pub fn level(level: usize, params: &QutritParams, tls: &TlsParams) -> Result<Self> {
        if level >= params.levels {
            return Err(Error::LevelOutOfRange { level, dim: params.levels });
        }
        let tf = tls.factor();
        let dim = params.levels * tf;
        let k = level * tf;
        Ok(Self { matrix: CMatrix::outer_unit(dim, k, k), time: 0.0, levels: params.levels, tls_factor: tf })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn has_tls(&self) -> bool {
        self.tls_factor == 2
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn populations(&self) -> Vec<f64> {
        let tf = self.tls_factor;
        (0..self.levels)
            .map(|n| (0..tf).map(|t| self.matrix[(n * tf + t, n * tf + t)].re).sum())
            .collect()
    }

    /// Excited-state population of the defect, zero without one.
    pub fn tls_population(&self) -> f64 {
        if self.tls_factor == 1 {
            return 0.0;
        }
        (0..self.levels).map(|n| self.matrix[(n * 2 + 1, n * 2 + 1)].re).sum()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        self.matrix.as_slice().iter().map(|x| x.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let vals = self.matrix.hermitian_eigenvalues()?;
        Ok(vals[0])
    }

    /// Checks Hermiticity, unit trace and positivity at the module tolerances.
    pub fn check(&self) -> Result<()> {
        let herm = self.matrix.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(invalid(format!("density matrix not Hermitian ({herm:e})")));
        }
        let tr = self.matrix.trace();
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(invalid(format!("density matrix trace {} != 1", tr.re)));
        }
        let min = self.min_eigenvalue()?;
        if min < -POSITIVITY_TOL {
            return Err(invalid(format!("density matrix has negative eigenvalue {min:e}")));
        }
        Ok(())
    }
}

/// Eigenvalues (rad/ns) of the undriven Hamiltonian, convenient for spectroscopy oracles.
pub fn free_spectrum(params: &QutritParams, tls: &TlsParams) -> Result<Vec<f64>> {
    build_hamiltonian(params, ZERO, 0.0, tls)?.hermitian_eigenvalues()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn params_d(levels: usize) -> QutritParams {
        QutritParams::default().with_levels(levels)
    }

    #[test]
    fn free_hamiltonian_diagonal() {
        let h = build_hamiltonian(&QutritParams::default(), ZERO, 0.0, &TlsParams::disabled()).unwrap();
        assert_eq!(h[(0, 0)], ZERO);
        assert_eq!(h[(1, 1)], ZERO);
        assert!((h[(2, 2)].re + TAU * 0.2).abs() < 1e-15);
        assert!(h.as_slice().iter().enumerate().all(|(k, x)| k % 4 == 0 || *x == ZERO));
    }

    #[test]
    fn ladder_matrix_elements() {
        let om = 0.37;
        let h = build_hamiltonian(&QutritParams::default(), C64::new(om, 0.0), 0.0, &TlsParams::disabled()).unwrap();
        assert!((h[(0, 1)].re - om / 2.0).abs() < 1e-15);
        assert!((h[(1, 2)].re - SQRT_2 * om / 2.0).abs() < 1e-15);
    }

    #[test]
    fn hamiltonian_is_hermitian_for_complex_drive() {
        let drive = C64::from_polar(0.3, 1.1);
        let h = build_hamiltonian(&QutritParams::default(), drive, -50.0, &TlsParams::disabled()).unwrap();
        assert!(h.max_abs_diff(&h.adjoint()) <= 1e-15);
        let h = build_hamiltonian(&QutritParams::default(), drive, -50.0, &TlsParams::enabled()).unwrap();
        assert!(h.max_abs_diff(&h.adjoint()) <= 1e-15);
    }

    #[test]
    fn detuning_enters_diagonal() {
        let h = build_hamiltonian(&QutritParams::default(), ZERO, 10.0, &TlsParams::disabled()).unwrap();
        let d = mhz_to_rad_per_ns(10.0);
        assert!((h[(1, 1)].re + d).abs() < 1e-15);
        assert!((h[(2, 2)].re + 2.0 * d + TAU * 0.2).abs() < 1e-15);
    }

    #[test]
    fn qutrit_restricts_to_qubit_block() {
        let drive = C64::from_polar(0.2, -0.4);
        let h3 = build_hamiltonian(&params_d(3), drive, 7.0, &TlsParams::disabled()).unwrap();
        let h2 = build_hamiltonian(&params_d(2), drive, 7.0, &TlsParams::disabled()).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert_eq!(h3[(r, c)], h2[(r, c)]);
            }
        }
    }

    #[test]
    fn tls_doublet_splitting_at_resonance() {
        let params = QutritParams { f10_ghz: 7.05, ..QutritParams::default() };
        let tls = TlsParams::enabled();
        let h = build_hamiltonian(&params, ZERO, 0.0, &tls).unwrap();
        // Single-excitation block: |1,0> (index 2) and |0,1> (index 1).
        let block = CMatrix::from_rows(2, vec![h[(1, 1)], h[(1, 2)], h[(2, 1)], h[(2, 2)]]);
        let vals = block.hermitian_eigenvalues().unwrap();
        let split = vals[1] - vals[0];
        assert!((split - mhz_to_rad_per_ns(50.0)).abs() < 1e-10);
    }

    #[test]
    fn mismatched_drive_scale_is_rejected() {
        let p = QutritParams { drive_scale: vec![1.0], ..QutritParams::default() };
        assert_eq!(
            build_hamiltonian(&p, ZERO, 0.0, &TlsParams::disabled()),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        );
    }

    #[test]
    fn collapse_without_decoherence_is_empty() {
        assert!(collapse_operators(&QutritParams::default().coherent()).unwrap().is_empty());
    }

    #[test]
    fn dephasing_rate_arithmetic() {
        let p = QutritParams::default();
        let ops = collapse_operators(&p).unwrap();
        let deph = ops.iter().find(|c| c.kind == ChannelKind::Dephasing).unwrap();
        assert!((deph.rate - (1.0 / 120.0 - 1.0 / 800.0)).abs() < 1e-15);
        assert!((deph.rate - 7.083e-3).abs() < 1e-6);
    }

    #[test]
    fn relaxation_ladder_ratio() {
        let ops = collapse_operators(&QutritParams::default()).unwrap();
        let rates: Vec<f64> = ops
            .iter()
            .filter(|c| matches!(c.kind, ChannelKind::Relaxation { .. }))
            .map(|c| c.rate)
            .collect();
        assert_eq!(rates.len(), 2);
        assert!((rates[1] / rates[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn t2_above_twice_t1_is_invalid() {
        let p = QutritParams { t2_ns: 1000.0, ..QutritParams::default() };
        assert!(matches!(collapse_operators(&p), Err(Error::InvalidParameters(_))));
    }

    #[test]
    fn pure_state_populations() {
        assert_eq!(pure_state(0, 3).unwrap().populations(), vec![1.0, 0.0, 0.0]);
        assert_eq!(pure_state(1, 3).unwrap().populations(), vec![0.0, 1.0, 0.0]);
        assert_eq!(pure_state(3, 3), Err(Error::LevelOutOfRange { level: 3, dim: 3 }));
        let plus = DensityState::from_amplitudes(&[ONE, ONE, ZERO]).unwrap();
        let p = populations(&plus);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15 && p[2] == 0.0);
        plus.check().unwrap();
    }

    #[test]
    fn tls_partial_trace() {
        let p = QutritParams::default();
        let s = DensityState::level(1, &p, &TlsParams::enabled()).unwrap();
        assert_eq!(s.dim(), 6);
        assert_eq!(s.populations(), vec![0.0, 1.0, 0.0]);
        assert_eq!(s.tls_population(), 0.0);
    }
}
