//! Phenomenological tunneling readout.
//!
//! Each level tunnels out of the well with a logistic probability in the
//! measure-pulse amplitude `iz` (normalized units, operating range `[0, 1]`).
//! Higher levels tunnel at lower `iz`. Losses of the `|1>` signal that happen
//! before or during the measurement (relaxation, defects, failure to tunnel)
//! are fixed probabilities rather than dynamics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::optimize::golden_max;
use crate::system::TAU;
#[allow(unused_imports)]
use num_traits::Float;

/// Default upper bound on `|1>` tunneling at the level-2-selective bias.
pub const DEFAULT_MAX_LEAK: f64 = 1e-5;

/// Measured quantity in the `|1>` loss budget attributed to the 7.05 GHz defect.
const TLS_TARGET_LOSS: f64 = 0.045;

/// Per-level S-curves and measurement losses.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutModel {
    /// Bias of half-maximum tunneling per level; strictly decreasing.
    pub midpoint_iz: Vec<f64>,
    /// Logistic slope per level, 1/bias units.
    pub steepness: Vec<f64>,
    /// Saturated tunneling probability per level.
    pub plateau: Vec<f64>,
    /// `|0>` tunneling at the operating point.
    pub stray_floor: f64,
    /// `|1>` decay during the measure pulse.
    pub t1_loss: f64,
    /// `|1>` loss to defects other than the one at 7.05 GHz.
    pub other_tls_loss: f64,
    /// `|1>` loss to the 7.05 GHz defect when it is crossed during measurement.
    pub tls_loss: f64,
    pub tls_active: bool,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        Self::below_tls()
    }
}

impl ReadoutModel {
    /// Operating point at 6.75 GHz: the measurement sweep does not cross the defect.
    pub fn below_tls() -> Self {
        Self {
            midpoint_iz: vec![0.75, 0.45, 0.15],
            steepness: vec![80.0, 80.0, 80.0],
            plateau: vec![1.0, 0.989, 1.0],
            stray_floor: 0.034,
            t1_loss: 0.010,
            other_tls_loss: 0.050,
            tls_loss: lz_tls_transfer(25.0, default_sweep_rate()),
            tls_active: false,
        }
    }

    /// Operating point at 7.22 GHz: the measurement sweep crosses the defect.
    pub fn above_tls() -> Self {
        Self { tls_active: true, ..Self::below_tls() }
    }

    /// Perfect discrimination: no stray tunneling, no losses, sharp curves.
    pub fn ideal() -> Self {
        Self {
            midpoint_iz: vec![0.75, 0.45, 0.15],
            steepness: vec![1000.0, 1000.0, 1000.0],
            plateau: vec![1.0, 1.0, 1.0],
            stray_floor: 0.0,
            t1_loss: 0.0,
            other_tls_loss: 0.0,
            tls_loss: 0.0,
            tls_active: false,
        }
    }

    pub fn levels(&self) -> usize {
        self.midpoint_iz.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.midpoint_iz.len();
        if n < 2 {
            return Err(invalid("readout model needs at least two levels"));
        }
        if self.steepness.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.steepness.len() });
        }
        if self.plateau.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.plateau.len() });
        }
        if !self.midpoint_iz.iter().all(|x| x.is_finite()) {
            return Err(invalid("midpoints must be finite"));
        }
        if self.midpoint_iz.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("midpoint_iz must be strictly decreasing in level"));
        }
        if !self.steepness.iter().all(|&k| k.is_finite() && k > 0.0) {
            return Err(invalid("steepness must be positive"));
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !self.plateau.iter().all(|&p| unit(p)) {
            return Err(invalid("plateau values must lie in [0, 1]"));
        }
        for (name, v) in [
            ("stray_floor", self.stray_floor),
            ("t1_loss", self.t1_loss),
            ("other_tls_loss", self.other_tls_loss),
            ("tls_loss", self.tls_loss),
        ] {
            if !unit(v) {
                return Err(invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.stray_floor > self.plateau[0] {
            return Err(invalid("stray_floor exceeds the level-0 plateau"));
        }
        if self.level1_losses() > self.plateau[1] {
            return Err(invalid("level-1 losses exceed the level-1 plateau"));
        }
        Ok(())
    }

    fn level1_losses(&self) -> f64 {
        self.t1_loss + self.other_tls_loss + if self.tls_active { self.tls_loss } else { 0.0 }
    }

    /// Budget implied by the model at its saturated operating point.
    pub fn error_budget(&self) -> Result<ErrorBudget> {
        let mut one = vec![
            BudgetEntry::new("t1", self.t1_loss),
            BudgetEntry::new("tls_other", self.other_tls_loss),
            BudgetEntry::new("no_tunnel", 1.0 - self.plateau[1]),
        ];
        if self.tls_active {
            one.push(BudgetEntry::new("tls_705", self.tls_loss));
        }
        compose_budget(&[BudgetEntry::new("stray_0", self.stray_floor)], &one)
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Tunneling probability of `level` at measure amplitude `iz`.
///
/// Level 0 rises from `stray_floor` to its plateau; level 1 saturates at its
/// plateau minus the fixed losses. Levels beyond the model return 0.
pub fn scurve(level: usize, iz: f64, model: &ReadoutModel) -> f64 {
    if level >= model.levels() {
        return 0.0;
    }
    let s = logistic(model.steepness[level] * (iz - model.midpoint_iz[level]));
    match level {
        0 => model.stray_floor + (model.plateau[0] - model.stray_floor) * s,
        1 => (model.plateau[1] - model.level1_losses()) * s,
        _ => model.plateau[level] * s,
    }
}

/// Total tunneling probability for the given level populations.
pub fn measure_tunnel(populations: &[f64], iz: f64, model: &ReadoutModel) -> Result<f64> {
    if populations.is_empty() || populations.len() > model.levels() {
        return Err(Error::InvalidPopulations(format!(
            "{} populations for a {}-level readout model",
            populations.len(),
            model.levels()
        )));
    }
    let sum: f64 = populations.iter().sum();
    if !populations.iter().all(|&p| p.is_finite() && (-1e-9..=1.0 + 1e-9).contains(&p)) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidPopulations(format!("populations {populations:?} do not form a distribution")));
    }
    let p: f64 = populations.iter().enumerate().map(|(n, &pn)| pn * scurve(n, iz, model)).sum();
    Ok(p.clamp(0.0, 1.0))
}

/// Best measurement bias and its `|1>`/`|0>` contrast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visibility {
    pub iz: f64,
    pub visibility: f64,
    /// The two curves coincide; `iz` is then arbitrary.
    pub degenerate: bool,
}

const IZ_SCAN: usize = 1001;

/// Maximizes `scurve(1) - scurve(0)` over `iz ∈ [0, 1]` by scan plus golden refinement.
pub fn optimal_iz_visibility(model: &ReadoutModel) -> Result<Visibility> {
    model.validate()?;
    let v = |iz: f64| scurve(1, iz, model) - scurve(0, iz, model);
    let step = 1.0 / (IZ_SCAN - 1) as f64;
    let (k_best, v_best) =
        (0..IZ_SCAN).map(|k| (k, v(k as f64 * step))).fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
    if v_best.abs() < 1e-12 {
        return Ok(Visibility { iz: k_best as f64 * step, visibility: 0.0, degenerate: true });
    }
    let c = k_best as f64 * step;
    let (iz, vis) = golden_max(v, (c - step).max(0.0), (c + step).min(1.0), 1e-12);
    let (iz, vis) = if vis >= v_best { (iz, vis) } else { (c, v_best) };
    Ok(Visibility { iz, visibility: vis, degenerate: false })
}

/// Largest `iz` at which `|1>` tunnels with probability at most `max_leak`,
/// checking that `|2>` still tunnels with at least 90% of its plateau.
pub fn iz_for_level2_only(model: &ReadoutModel, max_leak: f64) -> Result<f64> {
    model.validate()?;
    if model.levels() < 3 {
        return Err(Error::Selectivity("model has no level 2".into()));
    }
    if !(max_leak > 0.0 && max_leak < 1.0) {
        return Err(invalid("max_leak must lie in (0, 1)"));
    }
    let leak = |iz: f64| scurve(1, iz, model);
    let (mut lo, mut hi) = (model.midpoint_iz[2] - 1.0, model.midpoint_iz[1]);
    if leak(lo) > max_leak {
        return Err(Error::Selectivity(format!("level 1 tunnels above {max_leak:e} at every bias")));
    }
    if leak(hi) <= max_leak {
        lo = hi;
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if leak(mid) <= max_leak {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let p2 = scurve(2, lo, model);
    if p2 < 0.9 * model.plateau[2] {
        return Err(Error::Selectivity(format!(
            "at iz = {lo:.4} level 2 tunnels with only {p2:.4} (< 0.9 x plateau)"
        )));
    }
    Ok(lo)
}

/// One named contribution to the measurement error.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetEntry {
    pub name: String,
    pub probability: f64,
}

impl BudgetEntry {
    pub fn new(name: &str, probability: f64) -> Self {
        Self { name: name.into(), probability }
    }
}

/// Measurement errors of the two computational states.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBudget {
    pub state0: Vec<BudgetEntry>,
    pub state1: Vec<BudgetEntry>,
    pub e0: f64,
    pub e1: f64,
    pub total: f64,
    pub visibility: f64,
}

/// Sums the per-state errors; visibility is `1 - e0 - e1`.
pub fn compose_budget(state0: &[BudgetEntry], state1: &[BudgetEntry]) -> Result<ErrorBudget> {
    for e in state0.iter().chain(state1) {
        if !(0.0..=1.0).contains(&e.probability) {
            return Err(invalid(format!("budget entry {} = {} outside [0, 1]", e.name, e.probability)));
        }
    }
    let e0: f64 = state0.iter().map(|e| e.probability).sum();
    let e1: f64 = state1.iter().map(|e| e.probability).sum();
    if e0 > 1.0 || e1 > 1.0 || e0 + e1 > 1.0 {
        return Err(invalid(format!("budget totals e0 = {e0}, e1 = {e1} exceed 1")));
    }
    Ok(ErrorBudget {
        state0: state0.to_vec(),
        state1: state1.to_vec(),
        e0,
        e1,
        total: e0 + e1,
        visibility: 1.0 - e0 - e1,
    })
}

/// Landau–Zener population transfer into the defect while the qubit
/// frequency sweeps through it: `1 - exp(-2π (2π g)^2 / rate)`.
///
/// `coupling_mhz` is `g/2π`; `sweep_rate` is the rate of change of the
/// qubit–defect detuning in rad/ns per ns.
pub fn lz_tls_transfer(coupling_mhz: f64, sweep_rate: f64) -> f64 {
    if sweep_rate.is_infinite() {
        return 0.0;
    }
    if sweep_rate <= 0.0 {
        return 1.0;
    }
    let g = TAU * coupling_mhz * 1e-3;
    1.0 - (-TAU * g * g / sweep_rate).exp()
}

/// Sweep rate at which a 25 MHz defect takes 0.045 of the `|1>` population.
pub fn default_sweep_rate() -> f64 {
    let g = TAU * 25.0e-3;
    TAU * g * g / -(1.0 - TLS_TARGET_LOSS).ln()
}

/// `iz` grid and per-level tunneling curves, for export.
pub fn scurve_table(model: &ReadoutModel, points: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = points.max(2);
    let iz: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
    let curves = (0..model.levels()).map(|l| iz.iter().map(|&x| scurve(l, x, model)).collect()).collect();
    (iz, curves)
}
