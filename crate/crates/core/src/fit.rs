//! Least-squares fits used by the experiment analyses.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::solve_real;
use crate::system::TAU;
#[allow(unused_imports)]
use num_traits::Float;

/// `amplitude e^{-decay x} cos(2π frequency x + phase) + offset + slope x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidFit {
    /// Oscillation amplitude extrapolated to `x = 0`.
    pub amplitude: f64,
    /// Cycles per unit of `x`.
    pub frequency: f64,
    pub phase: f64,
    pub offset: f64,
    pub slope: f64,
    /// Envelope decay rate per unit of `x`; zero for an undamped fit.
    pub decay: f64,
    pub rms_residual: f64,
}

impl SinusoidFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * (-self.decay * x).exp() * (TAU * self.frequency * x + self.phase).cos()
            + self.offset
            + self.slope * x
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }

    /// Residual relative to the oscillation amplitude.
    pub fn relative_residual(&self) -> f64 {
        if self.amplitude > 0.0 {
            self.rms_residual / self.amplitude
        } else {
            f64::INFINITY
        }
    }
}

/// Which terms a sinusoid fit carries beyond the bare oscillation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Terms {
    slope: bool,
    decay: bool,
}

impl Terms {
    fn n_lin(self) -> usize {
        if self.slope {
            4
        } else {
            3
        }
    }

    /// Parameters are `[a, b, c, (s), f, (k)]`.
    fn len(self) -> usize {
        self.n_lin() + 1 + usize::from(self.decay)
    }
}

/// Fits a sinusoid (plus optional linear drift) to `(x, y)`.
///
/// The frequency is seeded from the peak of a zero-padded periodogram of the
/// detrended data and then refined together with the linear coefficients by
/// Levenberg–Marquardt.
pub fn fit_sinusoid(x: &[f64], y: &[f64], with_slope: bool) -> Result<SinusoidFit> {
    let terms = Terms { slope: with_slope, decay: false };
    let p = seed_and_refine(x, y, terms)?;
    Ok(finish(x, y, &p, terms))
}

/// As [`fit_sinusoid`] with an exponentially decaying oscillation envelope.
///
/// Falls back to the undamped fit when the decay comes out negative.
pub fn fit_damped_sinusoid(x: &[f64], y: &[f64], with_slope: bool) -> Result<SinusoidFit> {
    let plain = Terms { slope: with_slope, decay: false };
    let p = seed_and_refine(x, y, plain)?;
    let undamped = finish(x, y, &p, plain);
    let terms = Terms { slope: with_slope, decay: true };
    if x.len() < terms.len() + 2 {
        return Ok(undamped);
    }
    let mut seed = p;
    seed.push(0.0);
    let q = levenberg_marquardt(x, y, seed, terms)?;
    let damped = finish(x, y, &q, terms);
    if damped.decay >= 0.0 && damped.rms_residual <= undamped.rms_residual && damped.amplitude.is_finite() {
        Ok(damped)
    } else {
        Ok(undamped)
    }
}

fn seed_and_refine(x: &[f64], y: &[f64], terms: Terms) -> Result<Vec<f64>> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    if n < terms.n_lin() + 2 {
        return Err(invalid("too few points for a sinusoid fit"));
    }
    if !x.iter().chain(y).all(|v| v.is_finite()) {
        return Err(invalid("fit data must be finite"));
    }
    let span = x.iter().copied().fold(f64::NEG_INFINITY, f64::max) - x.iter().copied().fold(f64::INFINITY, f64::min);
    if !(span > 0.0) {
        return Err(invalid("fit abscissae must span a nonzero range"));
    }
    let mut dx_min = f64::INFINITY;
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    for w in sorted.windows(2) {
        if w[1] > w[0] {
            dx_min = dx_min.min(w[1] - w[0]);
        }
    }
    let nyquist = 0.5 / dx_min;

    // Detrend before seeding so the drift does not dominate the periodogram.
    let baseline = linear_fit(x, y, terms.slope)?;
    let resid: Vec<f64> = x.iter().zip(y).map(|(&xi, &yi)| yi - baseline.0 - baseline.1 * xi).collect();
    let df = 1.0 / (8.0 * span);
    let f_lo = 0.5 / span;
    let mut f_seed = f_lo;
    let mut best = -1.0;
    let mut f = f_lo;
    while f <= nyquist {
        let (mut c, mut s) = (0.0, 0.0);
        for (&xi, &ri) in x.iter().zip(&resid) {
            c += ri * (TAU * f * xi).cos();
            s += ri * (TAU * f * xi).sin();
        }
        let p = c * c + s * s;
        if p > best {
            best = p;
            f_seed = f;
        }
        f += df;
    }

    let n_lin = terms.n_lin();
    let mut params = vec![0.0; n_lin + 1];
    params[n_lin] = f_seed;
    let lin = linear_at_frequency(x, y, f_seed, terms.slope)?;
    params[..n_lin].copy_from_slice(&lin);
    levenberg_marquardt(x, y, params, terms)
}

fn finish(x: &[f64], y: &[f64], p: &[f64], terms: Terms) -> SinusoidFit {
    let n_lin = terms.n_lin();
    let (a, b, c) = (p[0], p[1], p[2]);
    let fit = SinusoidFit {
        amplitude: a.hypot(b),
        frequency: p[n_lin],
        phase: (-b).atan2(a),
        offset: c,
        slope: if terms.slope { p[3] } else { 0.0 },
        decay: if terms.decay { p[n_lin + 1] } else { 0.0 },
        rms_residual: 0.0,
    };
    let fit = if fit.frequency < 0.0 { SinusoidFit { frequency: -fit.frequency, phase: -fit.phase, ..fit } } else { fit };
    let ss: f64 = x.iter().zip(y).map(|(&xi, &yi)| (yi - fit.eval(xi)).powi(2)).sum();
    SinusoidFit { rms_residual: (ss / x.len() as f64).sqrt(), ..fit }
}

/// Ordinary least squares `y ≈ c + s x` (or just the mean).
fn linear_fit(x: &[f64], y: &[f64], with_slope: bool) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    if !with_slope {
        return Ok((y.iter().sum::<f64>() / n, 0.0));
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let s = sxy / sxx;
    Ok((my - s * mx, s))
}

fn basis(xi: f64, f: f64, with_slope: bool) -> [f64; 4] {
    let w = TAU * f * xi;
    [w.cos(), w.sin(), 1.0, if with_slope { xi } else { 0.0 }]
}

fn linear_at_frequency(x: &[f64], y: &[f64], f: f64, with_slope: bool) -> Result<Vec<f64>> {
    let m = if with_slope { 4 } else { 3 };
    let mut ata = vec![0.0; m * m];
    let mut aty = vec![0.0; m];
    for (&xi, &yi) in x.iter().zip(y) {
        let b = basis(xi, f, with_slope);
        for r in 0..m {
            aty[r] += b[r] * yi;
            for c in 0..m {
                ata[r * m + c] += b[r] * b[c];
            }
        }
    }
    solve_real(&ata, &aty)
}

fn envelope(p: &[f64], xi: f64, terms: Terms) -> f64 {
    if terms.decay {
        (-p[terms.n_lin() + 1] * xi).exp()
    } else {
        1.0
    }
}

fn model(p: &[f64], xi: f64, terms: Terms) -> f64 {
    let n_lin = terms.n_lin();
    let b = basis(xi, p[n_lin], terms.slope);
    let e = envelope(p, xi, terms);
    (p[0] * b[0] + p[1] * b[1]) * e + (2..n_lin).map(|k| p[k] * b[k]).sum::<f64>()
}

fn jacobian_row(p: &[f64], xi: f64, terms: Terms) -> Vec<f64> {
    let n_lin = terms.n_lin();
    let f = p[n_lin];
    let b = basis(xi, f, terms.slope);
    let e = envelope(p, xi, terms);
    let mut row = vec![b[0] * e, b[1] * e];
    row.extend_from_slice(&b[2..n_lin]);
    let w = TAU * f * xi;
    row.push(TAU * xi * e * (-p[0] * w.sin() + p[1] * w.cos()));
    if terms.decay {
        row.push(-xi * e * (p[0] * b[0] + p[1] * b[1]));
    }
    row
}

fn levenberg_marquardt(x: &[f64], y: &[f64], mut p: Vec<f64>, terms: Terms) -> Result<Vec<f64>> {
    let m = p.len();
    let cost = |p: &[f64]| -> f64 { x.iter().zip(y).map(|(&xi, &yi)| (yi - model(p, xi, terms)).powi(2)).sum() };
    let mut c = cost(&p);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let mut jtj = vec![0.0; m * m];
        let mut jtr = vec![0.0; m];
        for (&xi, &yi) in x.iter().zip(y) {
            let r = yi - model(&p, xi, terms);
            let j = jacobian_row(&p, xi, terms);
            for a in 0..m {
                jtr[a] += j[a] * r;
                for b in 0..m {
                    jtj[a * m + b] += j[a] * j[b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtj.clone();
            for k in 0..m {
                damped[k * m + k] += lambda * jtj[k * m + k].max(1e-300);
            }
            let step = match solve_real(&damped, &jtr) {
                Ok(s) => s,
                Err(_) => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            let ct = cost(&trial);
            if ct < c {
                let rel = (c - ct) / c.max(1e-300);
                p = trial;
                c = ct;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-14 {
                    return Ok(p);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok(p)
}

/// Ordinary least-squares line; returns `(intercept, slope)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if x.len() < 2 {
        return Err(invalid("a line fit needs at least two points"));
    }
    linear_fit(x, y, true)
}

/// Vertex of the parabola through three equally spaced samples, as an
/// offset in units of the spacing from the middle sample.
pub fn parabolic_vertex(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom == 0.0 {
        0.0
    } else {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_clean_sinusoid() {
        let x: Vec<f64> = (0..81).map(|k| 32.0 + 0.25 * k as f64).collect();
        let y: Vec<f64> = x.iter().map(|&t| 3e-3 * (TAU * 0.2 * t + 0.4).cos() + 5e-3).collect();
        let fit = fit_sinusoid(&x, &y, false).unwrap();
        assert!((fit.frequency - 0.2).abs() < 1e-9);
        assert!((fit.amplitude - 3e-3).abs() < 1e-12);
        assert!((fit.offset - 5e-3).abs() < 1e-12);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn absorbs_linear_drift() {
        let x: Vec<f64> = (0..81).map(|k| 20.0 + 0.25 * k as f64).collect();
        let y: Vec<f64> = x.iter().map(|&t| 1e-3 * (TAU * 0.21 * t - 1.0).cos() + 0.1 - 2e-4 * t).collect();
        let fit = fit_sinusoid(&x, &y, true).unwrap();
        assert!((fit.frequency - 0.21).abs() < 1e-8);
        assert!((fit.slope + 2e-4).abs() < 1e-10);
        assert!((fit.amplitude - 1e-3).abs() < 1e-10);
    }

    #[test]
    fn recovers_decay_and_zero_separation_amplitude() {
        let x: Vec<f64> = (0..81).map(|k| 16.0 + 0.25 * k as f64).collect();
        let y: Vec<f64> =
            x.iter().map(|&t| 0.02 * (-0.011 * t).exp() * (TAU * 0.2 * t + 0.7).cos() + 0.01 + 1e-4 * t).collect();
        let fit = fit_damped_sinusoid(&x, &y, true).unwrap();
        assert!((fit.amplitude / 0.02 - 1.0).abs() < 1e-8, "{}", fit.amplitude);
        assert!((fit.decay - 0.011).abs() < 1e-9);
        assert!((fit.frequency - 0.2).abs() < 1e-10);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn undamped_data_keeps_zero_decay() {
        let x: Vec<f64> = (0..81).map(|k| 16.0 + 0.25 * k as f64).collect();
        let y: Vec<f64> = x.iter().map(|&t| 3e-3 * (TAU * 0.2 * t).cos()).collect();
        let fit = fit_damped_sinusoid(&x, &y, false).unwrap();
        assert!(fit.decay.abs() < 1e-9 && (fit.amplitude - 3e-3).abs() < 1e-11);
    }

    #[test]
    fn line_fit() {
        let (c, s) = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((c - 1.0).abs() < 1e-15 && (s - 2.0).abs() < 1e-15);
    }

    #[test]
    fn vertex_of_symmetric_samples() {
        assert_eq!(parabolic_vertex(1.0, 2.0, 1.0), 0.0);
        let f = |t: f64| -(t - 0.25) * (t - 0.25);
        assert!((parabolic_vertex(f(-1.0), f(0.0), f(1.0)) - 0.25).abs() < 1e-15);
    }
}
