//! Sampled drive envelopes and their spectra.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{LN_2, PI};


use crate::error::{invalid, Error, Result};
use crate::fft::fft;
use crate::linalg::{symmetric_eigen, C64};
#[allow(unused_imports)]
use num_traits::Float;

/// Default pulse window half-width in units of the FWHM.
pub const DEFAULT_TRUNCATION: f64 = 2.0;
/// DAC update rate, GS/s.
pub const DEFAULT_SAMPLE_RATE: f64 = 1.0;
pub const DEFAULT_PAD_FACTOR: usize = 16;
pub const DEFAULT_SLEPIAN_NW: f64 = 3.0;

/// Gaussian standard deviation for a given full width at half maximum.
#[inline]
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * LN_2).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub enum PulseShape {
    Gaussian { fwhm_ns: f64, truncation: f64 },
    /// `concentration` is the in-band energy fraction of the sequence.
    Slepian { duration_ns: f64, time_bandwidth: f64, concentration: f64 },
    Custom,
}

/// Real drive envelope sampled uniformly from `t = 0`.
///
/// Amplitudes are Rabi angular frequencies in rad/ns.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseEnvelope {
    pub samples: Vec<f64>,
    /// GS/s, i.e. samples per ns.
    pub sample_rate: f64,
    pub shape: PulseShape,
    pub peak_time_ns: f64,
}

impl PulseEnvelope {
    /// Envelope from explicit samples; the peak time is the first maximum of `|x|`.
    pub fn custom(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyWaveform);
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(invalid("sample rate must be positive"));
        }
        if !samples.iter().all(|x| x.is_finite()) {
            return Err(invalid("envelope samples must be finite"));
        }
        let peak = samples
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |(bi, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) })
            .0;
        Ok(Self { samples, sample_rate, shape: PulseShape::Custom, peak_time_ns: peak as f64 / sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Time span from the first to the last sample, ns.
    pub fn duration(&self) -> f64 {
        (self.samples.len().saturating_sub(1)) as f64 / self.sample_rate
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.samples.len()).map(|k| k as f64 / self.sample_rate).collect()
    }

    /// Linear interpolation between samples, zero outside the support.
    #[inline]
    pub fn value_at(&self, t: f64) -> f64 {
        let x = t * self.sample_rate;
        let n = self.samples.len();
        if !(x >= 0.0) || x > (n - 1) as f64 {
            return 0.0;
        }
        let k = x.floor() as usize;
        if k + 1 >= n {
            return self.samples[n - 1];
        }
        let frac = x - k as f64;
        self.samples[k] + frac * (self.samples[k + 1] - self.samples[k])
    }

    /// Trapezoidal pulse area, rad.
    pub fn area(&self) -> f64 {
        let n = self.samples.len();
        if n < 2 {
            return 0.0;
        }
        let inner: f64 = self.samples.iter().sum();
        (inner - 0.5 * (self.samples[0] + self.samples[n - 1])) / self.sample_rate
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, &x| if x.abs() > m.abs() { x } else { m })
    }

    /// Same shape with every sample multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { samples: self.samples.iter().map(|x| x * factor).collect(), ..self.clone() }
    }

    /// Same shape rescaled so the peak equals `amplitude`.
    pub fn with_peak(&self, amplitude: f64) -> Self {
        let p = self.peak();
        if p == 0.0 {
            return self.clone();
        }
        self.scaled(amplitude / p)
    }

    /// Prepends `count` zero samples.
    pub fn delayed(&self, count: usize) -> Self {
        let mut samples = vec![0.0; count];
        samples.extend_from_slice(&self.samples);
        Self { samples, peak_time_ns: self.peak_time_ns + count as f64 / self.sample_rate, ..self.clone() }
    }
}

/// Recipe for an envelope whose amplitude is still to be chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseSpec {
    Gaussian { fwhm_ns: f64, truncation: f64, sample_rate: f64 },
    Slepian { duration_ns: f64, time_bandwidth: f64, sample_rate: f64 },
}

impl PulseSpec {
    /// Gaussian with the default truncation and sample rate.
    pub fn gaussian(fwhm_ns: f64) -> Self {
        Self::Gaussian { fwhm_ns, truncation: DEFAULT_TRUNCATION, sample_rate: DEFAULT_SAMPLE_RATE }
    }

    pub fn slepian(duration_ns: f64) -> Self {
        Self::Slepian { duration_ns, time_bandwidth: DEFAULT_SLEPIAN_NW, sample_rate: DEFAULT_SAMPLE_RATE }
    }

    /// Envelope with peak sample `amplitude`.
    pub fn build(&self, amplitude: f64) -> Result<PulseEnvelope> {
        match *self {
            Self::Gaussian { fwhm_ns, truncation, sample_rate } => {
                gaussian_envelope(fwhm_ns, amplitude, sample_rate, truncation)
            }
            Self::Slepian { duration_ns, time_bandwidth, sample_rate } => {
                slepian_envelope(duration_ns, time_bandwidth, amplitude, sample_rate)
            }
        }
    }

    pub fn sample_rate(&self) -> f64 {
        match *self {
            Self::Gaussian { sample_rate, .. } | Self::Slepian { sample_rate, .. } => sample_rate,
        }
    }
}

/// Gaussian `A exp(-(t - t0)^2 / 2 sigma^2)` sampled on a grid symmetric about `t0`.
///
/// The window spans `truncation * fwhm` on each side of the peak, rounded to a
/// whole number of samples so that `t0` falls on a sample.
pub fn gaussian_envelope(fwhm: f64, amplitude: f64, sample_rate: f64, truncation: f64) -> Result<PulseEnvelope> {
    if !(fwhm.is_finite() && fwhm > 0.0) {
        return Err(invalid(format!("fwhm must be positive, got {fwhm}")));
    }
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(invalid(format!("sample rate must be positive, got {sample_rate}")));
    }
    if !(truncation >= 1.0) || !truncation.is_finite() {
        return Err(invalid(format!("truncation must be >= 1 fwhm, got {truncation}")));
    }
    if !amplitude.is_finite() {
        return Err(invalid("amplitude must be finite"));
    }
    let sigma = fwhm_to_sigma(fwhm);
    let half = (truncation * fwhm * sample_rate).round().max(1.0) as usize;
    let t0 = half as f64 / sample_rate;
    let samples = (0..=2 * half)
        .map(|k| {
            let dt = (k as f64 - half as f64) / sample_rate;
            amplitude * (-dt * dt / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    Ok(PulseEnvelope {
        samples,
        sample_rate,
        shape: PulseShape::Gaussian { fwhm_ns: fwhm, truncation },
        peak_time_ns: t0,
    })
}

/// Analytic Gaussian value, used for checks against the sampled envelope.
pub fn gaussian_value(t: f64, t0: f64, fwhm: f64, amplitude: f64) -> f64 {
    let sigma = fwhm_to_sigma(fwhm);
    amplitude * (-(t - t0) * (t - t0) / (2.0 * sigma * sigma)).exp()
}

/// Dominant eigenpair of the `n x n` prolate matrix with half-bandwidth `w`
/// (cycles per sample): `A_ij = sin(2 pi w (i - j)) / (pi (i - j))`, `A_ii = 2 w`.
pub fn dpss_order0(n: usize, w: f64) -> Result<(f64, Vec<f64>)> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = if i == j {
                2.0 * w
            } else {
                let d = i as f64 - j as f64;
                (2.0 * PI * w * d).sin() / (PI * d)
            };
        }
    }
    let (vals, vecs) = symmetric_eigen(n, &a)?;
    let mut v: Vec<f64> = (0..n).map(|r| vecs[r * n + (n - 1)]).collect();
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok((vals[n - 1], v))
}

/// Zeroth-order discrete prolate spheroidal sequence envelope.
///
/// The `N = duration * sample_rate` sequence samples are bracketed by one
/// explicit zero sample on each side, so the emitted envelope starts and ends
/// at exactly zero. The sequence is symmetrized and its peak set to `amplitude`.
pub fn slepian_envelope(duration: f64, time_bandwidth: f64, amplitude: f64, sample_rate: f64) -> Result<PulseEnvelope> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(invalid("sample rate must be positive"));
    }
    let n = (duration * sample_rate).round();
    if !(n >= 8.0) {
        return Err(invalid(format!("slepian needs at least 8 samples, got {n}")));
    }
    if !(time_bandwidth > 0.5) || !time_bandwidth.is_finite() {
        return Err(invalid(format!("time-bandwidth product must exceed 0.5, got {time_bandwidth}")));
    }
    let n = n as usize;
    let w = time_bandwidth / n as f64;
    if w >= 0.5 {
        return Err(invalid("time-bandwidth product too large for the sequence length"));
    }
    let (lambda, mut v) = dpss_order0(n, w)?;
    for i in 0..n / 2 {
        let avg = 0.5 * (v[i] + v[n - 1 - i]);
        v[i] = avg;
        v[n - 1 - i] = avg;
    }
    let peak = v.iter().cloned().fold(f64::MIN, f64::max);
    let mut samples = Vec::with_capacity(n + 2);
    samples.push(0.0);
    samples.extend(v.iter().map(|x| amplitude * x / peak));
    samples.push(0.0);
    Ok(PulseEnvelope {
        samples,
        sample_rate,
        shape: PulseShape::Slepian { duration_ns: duration, time_bandwidth, concentration: lambda },
        peak_time_ns: (n + 1) as f64 / (2.0 * sample_rate),
    })
}

/// Power spectrum on an ascending frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// GHz, ascending; bin spacing `sample_rate / n_fft`.
    pub freqs_ghz: Vec<f64>,
    /// `|DFT|^2` in squared sample units.
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn dc_index(&self) -> usize {
        self.freqs_ghz.iter().position(|&f| f == 0.0).unwrap_or(0)
    }

    pub fn dc_power(&self) -> f64 {
        self.power[self.dc_index()]
    }

    pub fn bin_spacing(&self) -> f64 {
        if self.freqs_ghz.len() < 2 {
            return 0.0;
        }
        self.freqs_ghz[1] - self.freqs_ghz[0]
    }

    /// Power at an arbitrary frequency by quadratic interpolation of
    /// log-power through the three bins nearest `f`.
    pub fn power_at(&self, f_ghz: f64) -> f64 {
        let n = self.freqs_ghz.len();
        if n < 3 {
            return self.power[0];
        }
        let df = self.bin_spacing();
        let pos = (f_ghz - self.freqs_ghz[0]) / df;
        let centre = pos.round().clamp(1.0, (n - 2) as f64) as usize;
        let x = pos - centre as f64;
        let floor = f64::MIN_POSITIVE;
        let ym = self.power[centre - 1].max(floor).ln();
        let y0 = self.power[centre].max(floor).ln();
        let yp = self.power[centre + 1].max(floor).ln();
        let a = 0.5 * (yp + ym) - y0;
        let b = 0.5 * (yp - ym);
        (y0 + b * x + a * x * x).exp()
    }

    /// Power in dB relative to the DC (carrier) bin.
    pub fn db_relative_to_carrier(&self) -> Vec<f64> {
        let p0 = self.dc_power();
        self.power.iter().map(|&p| 10.0 * (p.max(f64::MIN_POSITIVE) / p0).log10()).collect()
    }
}

/// Squared magnitude of the DFT of the envelope zero-padded to
/// `pad_factor * len` samples, reordered to ascending frequency.
pub fn power_spectrum(env: &PulseEnvelope, pad_factor: usize) -> Result<Spectrum> {
    if env.samples.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    if pad_factor < 1 {
        return Err(invalid("pad factor must be at least 1"));
    }
    let n = env.samples.len() * pad_factor;
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for (b, &s) in buf.iter_mut().zip(&env.samples) {
        *b = C64::new(s, 0.0);
    }
    let spec = fft(&buf);
    // Ascending order: negative bins first.
    let first_neg = (n - 1) / 2 + 1;
    let mut freqs = Vec::with_capacity(n);
    let mut power = Vec::with_capacity(n);
    for k in (first_neg..n).chain(0..first_neg) {
        let kk = if k >= first_neg { k as f64 - n as f64 } else { k as f64 };
        freqs.push(kk * env.sample_rate / n as f64);
        power.push(spec[k].norm_sqr());
    }
    Ok(Spectrum { freqs_ghz: freqs, power })
}

/// Spectral power at the `|1> -> |2>` offset relative to the carrier.
///
/// With the carrier resonant on `w10`, the `w21` line sits `anharmonicity`
/// below it in the baseband envelope spectrum.
pub fn leakage_ratio(env: &PulseEnvelope, anharmonicity_mhz: f64) -> Result<f64> {
    leakage_ratio_padded(env, anharmonicity_mhz, DEFAULT_PAD_FACTOR)
}

pub fn leakage_ratio_padded(env: &PulseEnvelope, anharmonicity_mhz: f64, pad_factor: usize) -> Result<f64> {
    if !(anharmonicity_mhz >= 0.0) {
        return Err(invalid("anharmonicity must be non-negative"));
    }
    let offset = anharmonicity_mhz * 1e-3;
    if offset >= 0.5 * env.sample_rate {
        return Err(Error::Aliasing { freq_ghz: offset, rate_gsps: env.sample_rate });
    }
    let spec = power_spectrum(env, pad_factor)?;
    let p0 = spec.dc_power();
    if p0 == 0.0 {
        return Err(invalid("envelope has no carrier power"));
    }
    Ok(spec.power_at(-offset) / p0)
}

/// Continuous, untruncated Gaussian limit `exp(-sigma^2 delta^2)`.
pub fn gaussian_leakage_closed_form(fwhm: f64, anharmonicity_mhz: f64) -> f64 {
    let sigma = fwhm_to_sigma(fwhm);
    let delta = 2.0 * PI * anharmonicity_mhz * 1e-3;
    (-(sigma * delta).powi(2)).exp()
}

/// Rectangular pulse of `flat_ns` with raised-cosine edges of `edge_ns`.
pub fn smoothed_rectangle(flat_ns: f64, edge_ns: f64, amplitude: f64, sample_rate: f64) -> Result<PulseEnvelope> {
    if !(flat_ns >= 0.0 && edge_ns >= 0.0 && sample_rate > 0.0) {
        return Err(invalid("rectangle timings must be non-negative"));
    }
    let total = flat_ns + 2.0 * edge_ns;
    let n = (total * sample_rate).round() as usize + 1;
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 / sample_rate;
            let s = if t < edge_ns {
                0.5 * (1.0 - (PI * t / edge_ns).cos())
            } else if t > total - edge_ns {
                0.5 * (1.0 - (PI * (total - t) / edge_ns).cos())
            } else {
                1.0
            };
            amplitude * s
        })
        .collect();
    let mut env = PulseEnvelope::custom(samples, sample_rate)?;
    env.peak_time_ns = 0.5 * total;
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_peak_and_half_maximum() {
        let env = gaussian_envelope(8.0, 0.4, 1.0, 2.0).unwrap();
        let k0 = (env.peak_time_ns * env.sample_rate).round() as usize;
        assert_eq!(env.samples[k0], 0.4);
        assert!((env.samples[k0 + 4] - 0.2).abs() < 1e-12);
        assert!((env.samples[k0 - 4] - 0.2).abs() < 1e-12);
        assert_eq!(env.samples.len(), 33);
        assert!((env.duration() - 32.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_sigma_for_eight_ns() {
        assert!((fwhm_to_sigma(8.0) - 3.3973).abs() < 1e-4);
    }

    #[test]
    fn gaussian_symmetric_about_peak() {
        let env = gaussian_envelope(5.0, 1.0, 2.0, 3.0).unwrap();
        let n = env.len();
        for i in 0..n / 2 {
            assert!((env.samples[i] - env.samples[n - 1 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_rejects_bad_inputs() {
        assert!(gaussian_envelope(0.0, 1.0, 1.0, 2.0).is_err());
        assert!(gaussian_envelope(8.0, 1.0, -1.0, 2.0).is_err());
        assert!(gaussian_envelope(8.0, 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn slepian_basic_properties() {
        let env = slepian_envelope(16.0, 3.0, 0.5, 1.0).unwrap();
        let n = env.len();
        assert_eq!(env.samples[0], 0.0);
        assert_eq!(env.samples[n - 1], 0.0);
        for i in 0..n {
            assert!((env.samples[i] - env.samples[n - 1 - i]).abs() < 1e-10);
        }
        assert!((env.peak() - 0.5).abs() < 1e-15);
        match env.shape {
            PulseShape::Slepian { concentration, .. } => assert!(concentration > 0.999),
            _ => unreachable!(),
        }
    }

    #[test]
    fn slepian_rejects_short_or_narrow() {
        assert!(slepian_envelope(4.0, 3.0, 1.0, 1.0).is_err());
        assert!(slepian_envelope(16.0, 0.4, 1.0, 1.0).is_err());
    }

    #[test]
    fn constant_envelope_spectrum_is_dirichlet() {
        let n = 10;
        let env = PulseEnvelope::custom(vec![1.0; n], 1.0).unwrap();
        let spec = power_spectrum(&env, 4).unwrap();
        assert!((spec.dc_power() - (n * n) as f64).abs() < 1e-9);
        let dc = spec.dc_index();
        for k in 1..6 {
            let f = spec.freqs_ghz[dc + k];
            let x = PI * f;
            let dirichlet = ((n as f64) * x).sin() / x.sin();
            assert!((spec.power[dc + k] - dirichlet * dirichlet).abs() < 1e-9);
        }
    }

    #[test]
    fn parseval_holds() {
        let env = gaussian_envelope(4.0, 0.7, 1.0, 2.0).unwrap();
        let spec = power_spectrum(&env, 1).unwrap();
        let lhs: f64 = spec.power.iter().sum();
        let rhs = env.len() as f64 * env.samples.iter().map(|x| x * x).sum::<f64>();
        assert!((lhs - rhs).abs() / rhs < 1e-8);
    }

    #[test]
    fn leakage_zero_offset_is_unity() {
        let env = gaussian_envelope(4.0, 1.0, 1.0, 2.0).unwrap();
        assert!((leakage_ratio(&env, 0.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn leakage_beyond_nyquist_is_an_error() {
        let env = gaussian_envelope(4.0, 1.0, 1.0, 2.0).unwrap();
        assert!(matches!(leakage_ratio(&env, 600.0), Err(Error::Aliasing { .. })));
    }

    #[test]
    fn closed_form_values() {
        assert!((gaussian_leakage_closed_form(4.0, 200.0) - 1.05e-2).abs() < 0.01e-2);
        assert!(gaussian_leakage_closed_form(8.0, 200.0) < gaussian_leakage_closed_form(4.0, 200.0));
        assert_eq!(gaussian_leakage_closed_form(4.0, 0.0), 1.0);
    }

    #[test]
    fn interpolation_matches_linear_between_samples() {
        let env = PulseEnvelope::custom(vec![0.0, 1.0, 3.0], 1.0).unwrap();
        assert_eq!(env.value_at(0.5), 0.5);
        assert_eq!(env.value_at(1.25), 1.5);
        assert_eq!(env.value_at(-0.1), 0.0);
        assert_eq!(env.value_at(2.1), 0.0);
        assert_eq!(env.value_at(2.0), 3.0);
    }

    #[test]
    fn smoothed_rectangle_shape() {
        let env = smoothed_rectangle(20.0, 5.0, 0.1, 1.0).unwrap();
        assert_eq!(env.len(), 31);
        assert_eq!(env.samples[0], 0.0);
        assert!((env.samples[15] - 0.1).abs() < 1e-15);
        assert!(env.samples[30].abs() < 1e-15);
    }
}
