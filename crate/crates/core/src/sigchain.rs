//! Room-temperature control electronics at complex baseband.
//!
//! A command waveform `I + iQ` is quantized by two DACs, filtered per port and
//! combined by an IQ mixer whose Q arm has gain `1 + ε` and phase skew `φ_e`:
//!
//! ```text
//! out = I_f + (1 + ε) e^{i φ_e} i Q_f + L
//! ```
//!
//! where `L` is carrier leakage. The image of a sideband tone appears at the
//! mirrored frequency. [`calibrate_sidebands`] finds a Q-channel correction
//! `Q' = g (Q cos θ + I sin θ)` plus DC offsets that cancel image and carrier,
//! and [`precorrect`] deconvolves the filter response.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::LN_2;

use crate::error::{invalid, Error, Result};
use crate::fft::{bin_frequencies, fft, ifft};
use crate::linalg::{solve_complex, C64, ZERO};
use crate::optimize::{nelder_mead, NelderMeadOptions};
use crate::pulses::PulseEnvelope;
use crate::system::TAU;
use crate::waveform::Waveform;
#[allow(unused_imports)]
use num_traits::Float;

/// −3 dB corner of the default reconstruction filters, MHz.
pub const DEFAULT_LOWPASS_MHZ: f64 = 250.0;
pub const DEFAULT_DAC_BITS: u32 = 14;
/// Tikhonov parameter relative to the peak filter response.
pub const DEFAULT_REGULARIZATION: f64 = 1e-4;

/// Transfer model of the DAC, filter and mixer chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    /// GS/s.
    pub sample_rate: f64,
    /// Centered, odd-length impulse response of the I port filter.
    pub lowpass_i: Vec<f64>,
    pub lowpass_q: Vec<f64>,
    pub iq_gain_imbalance: f64,
    /// rad.
    pub iq_phase_skew: f64,
    pub carrier_leakage: C64,
    /// `None` leaves samples unquantized.
    pub dac_bits: Option<u32>,
    /// DAC full-scale amplitude in waveform units.
    pub full_scale: f64,
    pub regularization: f64,
}

impl Default for ChainModel {
    fn default() -> Self {
        let taps = gaussian_lowpass(DEFAULT_LOWPASS_MHZ, 1.0);
        Self {
            sample_rate: 1.0,
            lowpass_i: taps.clone(),
            lowpass_q: taps,
            iq_gain_imbalance: 0.0,
            iq_phase_skew: 0.0,
            carrier_leakage: ZERO,
            dac_bits: Some(DEFAULT_DAC_BITS),
            full_scale: 1.0,
            regularization: DEFAULT_REGULARIZATION,
        }
    }
}

impl ChainModel {
    /// Delta filters, perfect mixer, no quantization.
    pub fn ideal(sample_rate: f64) -> Self {
        Self {
            sample_rate,
            lowpass_i: vec![1.0],
            lowpass_q: vec![1.0],
            iq_gain_imbalance: 0.0,
            iq_phase_skew: 0.0,
            carrier_leakage: ZERO,
            dac_bits: None,
            full_scale: 1.0,
            regularization: DEFAULT_REGULARIZATION,
        }
    }

    /// Default filters and DACs with the given mixer imperfections.
    pub fn imperfect(gain_imbalance: f64, phase_skew: f64, leakage: C64) -> Self {
        Self { iq_gain_imbalance: gain_imbalance, iq_phase_skew: phase_skew, carrier_leakage: leakage, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(invalid("chain sample rate must be positive"));
        }
        for (name, taps) in [("lowpass_i", &self.lowpass_i), ("lowpass_q", &self.lowpass_q)] {
            if taps.is_empty() || taps.len() % 2 == 0 {
                return Err(invalid(format!("{name} must have an odd, nonzero number of taps")));
            }
            if !taps.iter().all(|t| t.is_finite()) {
                return Err(invalid(format!("{name} taps must be finite")));
            }
            let dc: f64 = taps.iter().sum();
            if (dc - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("{name} DC gain {dc} differs from 1")));
            }
        }
        if !(self.iq_gain_imbalance.abs() < 0.5) {
            return Err(invalid("|iq_gain_imbalance| must be below 0.5"));
        }
        if !(self.iq_phase_skew.abs() < 0.5) {
            return Err(invalid("|iq_phase_skew| must be below 0.5 rad"));
        }
        if !(self.carrier_leakage.re.is_finite() && self.carrier_leakage.im.is_finite()) {
            return Err(invalid("carrier leakage must be finite"));
        }
        if let Some(b) = self.dac_bits {
            if !(2..=32).contains(&b) {
                return Err(invalid(format!("dac_bits must lie in 2..=32, got {b}")));
            }
        }
        if !(self.full_scale.is_finite() && self.full_scale > 0.0) {
            return Err(invalid("full_scale must be positive"));
        }
        if !(self.regularization.is_finite() && self.regularization > 0.0 && self.regularization < 1.0) {
            return Err(invalid("regularization must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Complex gain of the mixer's Q arm relative to I.
    pub fn q_arm(&self) -> C64 {
        C64::from_polar(1.0 + self.iq_gain_imbalance, self.iq_phase_skew)
    }

    /// Quantization step of one DAC, or 0 if unquantized.
    pub fn lsb(&self) -> f64 {
        match self.dac_bits {
            Some(b) => self.full_scale / ((1u64 << (b - 1)) - 1) as f64,
            None => 0.0,
        }
    }
}

/// Sampled Gaussian lowpass with continuous −3 dB corner `f3db_mhz`,
/// normalized to unit DC gain.
///
/// `|H(f)| = exp(-(ln 2 / 2) (f / f3db)^2)` corresponds to a Gaussian impulse
/// response of width `σ_t = sqrt(ln 2) / (2π f3db)`.
pub fn gaussian_lowpass(f3db_mhz: f64, sample_rate: f64) -> Vec<f64> {
    let f3 = f3db_mhz * 1e-3;
    let sigma = LN_2.sqrt() / (TAU * f3) * sample_rate;
    let half = (6.0 * sigma).ceil().max(1.0) as i64;
    let mut taps: Vec<f64> = (-half..=half).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// `env(t) exp(i (2π f_sb t + phase))` on the envelope's sample grid.
pub fn synthesize_iq(env: &PulseEnvelope, f_sb_mhz: f64, phase: f64) -> Result<Waveform> {
    if env.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    check_alias(f_sb_mhz, env.sample_rate)?;
    let w = TAU * f_sb_mhz * 1e-3;
    let samples = env
        .samples
        .iter()
        .enumerate()
        .map(|(k, &a)| C64::from_polar(a, w * k as f64 / env.sample_rate + phase))
        .collect();
    Waveform::new(samples, env.sample_rate)
}

fn check_alias(f_sb_mhz: f64, rate: f64) -> Result<()> {
    if !f_sb_mhz.is_finite() || f_sb_mhz.abs() * 1e-3 >= 0.5 * rate {
        return Err(Error::Aliasing { freq_ghz: f_sb_mhz * 1e-3, rate_gsps: rate });
    }
    Ok(())
}

fn quantize(x: f64, lsb: f64, full_scale: f64) -> f64 {
    if lsb == 0.0 {
        return x;
    }
    (x.clamp(-full_scale, full_scale) / lsb).round() * lsb
}

/// Same-length convolution with a centered kernel; samples beyond the ends are zero.
fn convolve_same(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len() as isize;
    let c = (h.len() / 2) as isize;
    (0..n)
        .map(|i| {
            h.iter()
                .enumerate()
                .map(|(k, &hk)| {
                    let j = i - (k as isize - c);
                    if (0..n).contains(&j) {
                        hk * x[j as usize]
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect()
}

/// Emitted complex envelope for a command waveform.
pub fn apply_chain(wave: &Waveform, chain: &ChainModel) -> Result<Waveform> {
    if wave.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    let lsb = chain.lsb();
    let i: Vec<f64> = wave.samples.iter().map(|z| quantize(z.re, lsb, chain.full_scale)).collect();
    let q: Vec<f64> = wave.samples.iter().map(|z| quantize(z.im, lsb, chain.full_scale)).collect();
    let i_f = convolve_same(&i, &chain.lowpass_i);
    let q_f = convolve_same(&q, &chain.lowpass_q);
    let arm = chain.q_arm() * C64::new(0.0, 1.0);
    let samples = i_f.iter().zip(&q_f).map(|(&a, &b)| C64::new(a, 0.0) + arm * b + chain.carrier_leakage).collect();
    Ok(Waveform { samples, sample_rate: wave.sample_rate })
}

/// Frequency response of a centered kernel on an `n`-point circular grid.
fn kernel_response(h: &[f64], n: usize) -> Vec<C64> {
    let c = h.len() / 2;
    let mut buf = vec![ZERO; n];
    for (k, &hk) in h.iter().enumerate() {
        let idx = (k as isize - c as isize).rem_euclid(n as isize) as usize;
        buf[idx] += C64::new(hk, 0.0);
    }
    fft(&buf)
}

/// Regularized inverse filter `H* / (|H|^2 + μ^2)` scaled so that it is exact
/// at the response peak; `μ` is `regularization` times the peak `|H|`.
///
/// The magnitude never exceeds `(1 + λ^2) / (2 λ |H|_max)`.
pub fn inverse_response(h: &[C64], regularization: f64) -> Vec<C64> {
    let peak = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mu2 = (regularization * peak).powi(2);
    let norm = 1.0 + mu2 / (peak * peak);
    h.iter().map(|z| z.conj() * (norm / (z.norm_sqr() + mu2))).collect()
}

/// Deconvolves the port filters so that `apply_chain(precorrect(x)) ≈ x`.
///
/// Mixer imbalance and leakage are left to [`calibrate_sidebands`]; DAC
/// quantization is not invertible and is ignored here.
pub fn precorrect(target: &Waveform, chain: &ChainModel) -> Result<Waveform> {
    if target.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    chain.validate()?;
    let n = target.len();
    let margin = chain.lowpass_i.len().max(chain.lowpass_q.len());
    let len = (n + 2 * margin).next_power_of_two();
    let freqs = bin_frequencies(len, target.sample_rate);

    let mut out: Vec<Vec<f64>> = Vec::with_capacity(2);
    for (taps, channel) in [(&chain.lowpass_i, target.i_channel()), (&chain.lowpass_q, target.q_channel())] {
        let h = kernel_response(taps, len);
        let w = inverse_response(&h, chain.regularization);
        let mut buf = vec![ZERO; len];
        for (k, &x) in channel.iter().enumerate() {
            buf[margin + k] = C64::new(x, 0.0);
        }
        let x = fft(&buf);
        let x_max = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let peak = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let floor = chain.regularization * peak;
        if x_max > 0.0 {
            for (k, (&xk, hk)) in x.iter().zip(&h).enumerate() {
                if xk.norm() >= 1e-3 * x_max && hk.norm() < floor {
                    return Err(Error::IllConditioned { response: hk.norm(), floor, freq_ghz: freqs[k] });
                }
            }
        }
        let y: Vec<C64> = x.iter().zip(&w).map(|(a, b)| a * b).collect();
        let back = ifft(&y);
        out.push(back[margin..margin + n].iter().map(|z| z.re).collect());
    }
    let samples = out[0].iter().zip(&out[1]).map(|(&i, &q)| C64::new(i, q)).collect();
    Ok(Waveform { samples, sample_rate: target.sample_rate })
}

/// Q-channel correction and DC offsets at one sideband frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqCorrection {
    pub f_sb_mhz: f64,
    pub q_gain: f64,
    /// rad.
    pub q_phase: f64,
    pub dc_i: f64,
    pub dc_q: f64,
}

impl IqCorrection {
    pub fn identity(f_sb_mhz: f64) -> Self {
        Self { f_sb_mhz, q_gain: 1.0, q_phase: 0.0, dc_i: 0.0, dc_q: 0.0 }
    }

    /// Applies the correction sample by sample.
    pub fn apply(&self, wave: &Waveform) -> Waveform {
        let (s, c) = self.q_phase.sin_cos();
        let samples = wave
            .samples
            .iter()
            .map(|z| C64::new(z.re + self.dc_i, self.q_gain * (z.im * c + z.re * s) + self.dc_q))
            .collect();
        Waveform { samples, sample_rate: wave.sample_rate }
    }

    fn params(&self) -> [f64; 4] {
        [self.q_gain, self.q_phase, self.dc_i, self.dc_q]
    }
}

/// Corrections on a sideband-frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IQCalibration {
    /// Sorted by `f_sb_mhz`.
    pub entries: Vec<IqCorrection>,
    /// Achieved `(image + carrier) / signal` power per entry.
    pub residuals: Vec<f64>,
}

impl IQCalibration {
    /// Linear interpolation in `f_sb`, clamped at the grid ends.
    pub fn at(&self, f_sb_mhz: f64) -> IqCorrection {
        let e = &self.entries;
        if e.len() == 1 || f_sb_mhz <= e[0].f_sb_mhz {
            return IqCorrection { f_sb_mhz, ..e[0] };
        }
        let last = e[e.len() - 1];
        if f_sb_mhz >= last.f_sb_mhz {
            return IqCorrection { f_sb_mhz, ..last };
        }
        let k = e.partition_point(|x| x.f_sb_mhz <= f_sb_mhz) - 1;
        let (a, b) = (e[k], e[k + 1]);
        let t = (f_sb_mhz - a.f_sb_mhz) / (b.f_sb_mhz - a.f_sb_mhz);
        let mix = |x: f64, y: f64| x + t * (y - x);
        IqCorrection {
            f_sb_mhz,
            q_gain: mix(a.q_gain, b.q_gain),
            q_phase: mix(a.q_phase, b.q_phase),
            dc_i: mix(a.dc_i, b.dc_i),
            dc_q: mix(a.dc_q, b.dc_q),
        }
    }

    pub fn covers(&self, f_sb_mhz: f64) -> bool {
        match (self.entries.first(), self.entries.last()) {
            (Some(a), Some(b)) => f_sb_mhz >= a.f_sb_mhz - 1e-9 && f_sb_mhz <= b.f_sb_mhz + 1e-9,
            _ => false,
        }
    }

    /// Correction for an arbitrary waveform.
    ///
    /// Each Fourier component at `|f|` of the I and Q streams receives the
    /// interpolated correction, realized as two real, even filters acting on
    /// the Q command: `Q' = G_Q * Q + G_I * I` with `G_Q = g cos θ`,
    /// `G_I = g sin θ`.
    pub fn correct(&self, wave: &Waveform) -> Result<Waveform> {
        if wave.is_empty() {
            return Err(Error::EmptyWaveform);
        }
        let first = self.entries.first().ok_or_else(|| invalid("empty calibration table"))?;
        let uniform = self.entries.iter().all(|e| e.params()[..2] == first.params()[..2]);
        if uniform {
            return Ok(IqCorrection { f_sb_mhz: 0.0, ..self.at(0.0) }.apply(wave));
        }
        let n = wave.len();
        let len = (2 * n).next_power_of_two();
        let freqs = bin_frequencies(len, wave.sample_rate);
        let mut bi = vec![ZERO; len];
        let mut bq = vec![ZERO; len];
        for (k, z) in wave.samples.iter().enumerate() {
            bi[k] = C64::new(z.re, 0.0);
            bq[k] = C64::new(z.im, 0.0);
        }
        let xi = fft(&bi);
        let xq = fft(&bq);
        let mixed: Vec<C64> = (0..len)
            .map(|k| {
                let c = self.at(freqs[k].abs() * 1e3);
                let (s, co) = c.q_phase.sin_cos();
                xq[k] * (c.q_gain * co) + xi[k] * (c.q_gain * s)
            })
            .collect();
        let q = ifft(&mixed);
        let dc = self.at(0.0);
        let samples = (0..n).map(|k| C64::new(wave.samples[k].re + dc.dc_i, q[k].re + dc.dc_q)).collect();
        Ok(Waveform { samples, sample_rate: wave.sample_rate })
    }
}

/// Complex amplitudes of a tone, its image and the carrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneComponents {
    pub signal: C64,
    pub image: C64,
    pub carrier: C64,
}

impl ToneComponents {
    /// `(image + carrier) / signal` power ratio.
    pub fn spur_ratio(&self) -> f64 {
        (self.image.norm_sqr() + self.carrier.norm_sqr()) / self.signal.norm_sqr().max(1e-300)
    }
}

/// Least-squares projection of `wave` onto `{e^{+iωt}, e^{-iωt}, 1}`,
/// skipping `skip` samples at each end.
pub fn tone_components(wave: &Waveform, f_sb_mhz: f64, skip: usize) -> Result<ToneComponents> {
    if f_sb_mhz == 0.0 {
        return Err(invalid("tone analysis needs a nonzero sideband frequency"));
    }
    check_alias(f_sb_mhz, wave.sample_rate)?;
    if wave.len() <= 2 * skip + 3 {
        return Err(invalid("waveform too short for tone analysis"));
    }
    let w = TAU * f_sb_mhz * 1e-3;
    let mut ata = [ZERO; 9];
    let mut aty = [ZERO; 3];
    for k in skip..wave.len() - skip {
        let t = k as f64 / wave.sample_rate;
        let b = [C64::from_polar(1.0, w * t), C64::from_polar(1.0, -w * t), C64::new(1.0, 0.0)];
        for r in 0..3 {
            aty[r] += b[r].conj() * wave.samples[k];
            for c in 0..3 {
                ata[r * 3 + c] += b[r].conj() * b[c];
            }
        }
    }
    let x = solve_complex(&ata, &aty)?;
    Ok(ToneComponents { signal: x[0], image: x[1], carrier: x[2] })
}

/// Samples of the calibration and diagnostic test tone.
const TONE_SAMPLES: usize = 1024;
const TONE_AMPLITUDE: f64 = 0.5;

fn test_tone(f_sb_mhz: f64, chain: &ChainModel) -> Waveform {
    let w = TAU * f_sb_mhz * 1e-3;
    let samples =
        (0..TONE_SAMPLES).map(|k| C64::from_polar(TONE_AMPLITUDE * chain.full_scale, w * k as f64 / chain.sample_rate)).collect();
    Waveform { samples, sample_rate: chain.sample_rate }
}

fn tone_skip(chain: &ChainModel) -> usize {
    chain.lowpass_i.len().max(chain.lowpass_q.len())
}

fn tone_residual(chain: &ChainModel, tone: &Waveform, corr: &IqCorrection) -> Result<ToneComponents> {
    let out = apply_chain(&corr.apply(tone), chain)?;
    tone_components(&out, corr.f_sb_mhz, tone_skip(chain))
}

/// Best-found spur ratio below which a calibration point is accepted even
/// when the simplex has not contracted.
const CAL_ACCEPT: f64 = 1e-9;

/// Finds per-sideband Q corrections and DC offsets that null the image and
/// the carrier of a test tone through the chain.
pub fn calibrate_sidebands(chain: &ChainModel, f_sb_list: &[f64]) -> Result<IQCalibration> {
    calibrate_sidebands_from(chain, f_sb_list, None)
}

/// As [`calibrate_sidebands`], starting each search from an earlier table.
pub fn calibrate_sidebands_from(chain: &ChainModel, f_sb_list: &[f64], start: Option<&IQCalibration>) -> Result<IQCalibration> {
    chain.validate()?;
    if f_sb_list.is_empty() {
        return Err(invalid("sideband list is empty"));
    }
    let mut grid = f_sb_list.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut entries = Vec::with_capacity(grid.len());
    let mut residuals = Vec::with_capacity(grid.len());
    for &f in &grid {
        check_alias(f, chain.sample_rate)?;
        if f == 0.0 {
            return Err(invalid("sideband frequency 0 cannot be calibrated against its image"));
        }
        let tone = test_tone(f, chain);
        let x0 = start.map(|c| c.at(f)).unwrap_or_else(|| IqCorrection::identity(f)).params();
        let objective = |p: &[f64]| -> f64 {
            let corr = IqCorrection { f_sb_mhz: f, q_gain: p[0], q_phase: p[1], dc_i: p[2], dc_q: p[3] };
            match tone_residual(chain, &tone, &corr) {
                Ok(c) => c.spur_ratio(),
                Err(_) => f64::INFINITY,
            }
        };
        let opts = NelderMeadOptions { f_tol: 1e-16, x_tol: 1e-11, max_iter: 4000 };
        let m = nelder_mead(objective, &x0, &[0.02, 0.02, 0.005, 0.005], opts);
        if !(m.converged || m.value <= CAL_ACCEPT) || !m.x.iter().all(|v| v.is_finite()) {
            return Err(Error::Calibration { f_sb_mhz: f, residual: m.value });
        }
        entries.push(IqCorrection { f_sb_mhz: f, q_gain: m.x[0], q_phase: m.x[1], dc_i: m.x[2], dc_q: m.x[3] });
        residuals.push(m.value);
    }
    Ok(IQCalibration { entries, residuals })
}

/// Exact correction for the model's own mixer: `g (1+ε) e^{i(φ_e - θ)} = 1`.
pub fn analytic_correction(chain: &ChainModel, f_sb_mhz: f64) -> IqCorrection {
    let g = 1.0 / (1.0 + chain.iq_gain_imbalance);
    let theta = chain.iq_phase_skew;
    // DC after the filters is dc_i + arm * dc_q; null it against the leakage.
    let arm = chain.q_arm() * C64::new(0.0, 1.0);
    let l = chain.carrier_leakage;
    let dc_q = -l.im / arm.im;
    let dc_i = -l.re - arm.re * dc_q;
    IqCorrection { f_sb_mhz, q_gain: g, q_phase: theta, dc_i, dc_q }
}

/// Signal power over the larger of image and carrier power, dB, for a long
/// tone at `f_sb` through the (optionally calibrated) chain.
pub fn sideband_suppression_db(chain: &ChainModel, calib: Option<&IQCalibration>, f_sb_mhz: f64) -> Result<f64> {
    chain.validate()?;
    let corr = match calib {
        Some(c) => {
            if !c.covers(f_sb_mhz) {
                return Err(invalid(format!("calibration does not cover {f_sb_mhz} MHz")));
            }
            c.at(f_sb_mhz)
        }
        None => IqCorrection::identity(f_sb_mhz),
    };
    let comps = tone_residual(chain, &test_tone(f_sb_mhz, chain), &corr)?;
    let spur = comps.image.norm_sqr().max(comps.carrier.norm_sqr()).max(1e-300);
    Ok((10.0 * (comps.signal.norm_sqr() / spur).log10()).min(300.0))
}

/// Image-to-signal power ratio of an uncorrected mixer, `|1-a|^2 / |1+a|^2`
/// with `a = (1+ε) e^{iφ_e}`.
pub fn image_ratio(gain_imbalance: f64, phase_skew: f64) -> f64 {
    let a = C64::from_polar(1.0 + gain_imbalance, phase_skew);
    let one = C64::new(1.0, 0.0);
    (one - a).norm_sqr() / (one + a).norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::dtft;
    use crate::pulses::gaussian_envelope;

    fn tone(f_mhz: f64, n: usize) -> Waveform {
        let w = TAU * f_mhz * 1e-3;
        Waveform::new((0..n).map(|k| C64::from_polar(0.4, w * k as f64)).collect(), 1.0).unwrap()
    }

    #[test]
    fn lowpass_has_unit_dc_gain_and_3db_corner() {
        let h = gaussian_lowpass(250.0, 1.0);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Oracle: finely sampled kernel reproduces the continuous -3 dB point.
        let fine = gaussian_lowpass(250.0, 64.0);
        let c = fine.len() / 2;
        let resp: f64 = fine.iter().enumerate().map(|(k, &v)| v * (TAU * 0.25 * (k as f64 - c as f64) / 64.0).cos()).sum();
        assert!((resp * resp - 0.5).abs() < 1e-6, "{resp}");
    }

    #[test]
    fn synthesis_examples() {
        let env = gaussian_envelope(8.0, 0.3, 1.0, 2.0).unwrap();
        let w = synthesize_iq(&env, 0.0, 0.0).unwrap();
        assert!(w.samples.iter().zip(&env.samples).all(|(z, &a)| z.re == a && z.im == 0.0));
        let w = synthesize_iq(&env, 0.0, core::f64::consts::FRAC_PI_2).unwrap();
        assert!(w.samples.iter().zip(&env.samples).all(|(z, &a)| z.re.abs() < 1e-16 && (z.im - a).abs() < 1e-16));
        assert!(matches!(synthesize_iq(&env, 500.0, 0.0), Err(Error::Aliasing { .. })));
    }

    #[test]
    fn synthesized_tone_has_no_image() {
        let env = PulseEnvelope::custom(vec![1.0; 1000], 1.0).unwrap();
        let w = synthesize_iq(&env, 100.0, 0.0).unwrap();
        let plus = dtft(&w.samples, 0.1, 1.0).norm_sqr();
        let minus = dtft(&w.samples, -0.1, 1.0).norm_sqr();
        assert!(10.0 * (plus / minus).log10() > 100.0);
    }

    #[test]
    fn identity_chain_is_identity() {
        let env = gaussian_envelope(8.0, 0.3, 1.0, 2.0).unwrap();
        let w = synthesize_iq(&env, 40.0, 0.3).unwrap();
        let chain = ChainModel::ideal(1.0);
        let out = apply_chain(&w, &chain).unwrap();
        assert!(w.samples.iter().zip(&out.samples).all(|(a, b)| (a - b).norm() < 1e-12));
        let pre = precorrect(&w, &chain).unwrap();
        assert!(w.samples.iter().zip(&pre.samples).all(|(a, b)| (a - b).norm() < 1e-10));
    }

    #[test]
    fn leakage_only_output() {
        let l = C64::new(0.01, -0.02);
        let chain = ChainModel { carrier_leakage: l, ..ChainModel::ideal(1.0) };
        let out = apply_chain(&Waveform::zeros(16, 1.0), &chain).unwrap();
        assert!(out.samples.iter().all(|z| *z == l));
    }

    #[test]
    fn image_matches_imbalance_formula() {
        let chain = ChainModel { iq_gain_imbalance: 0.05, iq_phase_skew: 0.05, ..ChainModel::ideal(1.0) };
        // Integer number of cycles so the DFT oracle has no leakage between bins.
        let out = apply_chain(&tone(100.0, 1000), &chain).unwrap();
        let plus = dtft(&out.samples, 0.1, 1.0).norm_sqr();
        let minus = dtft(&out.samples, -0.1, 1.0).norm_sqr();
        assert!((minus / plus / image_ratio(0.05, 0.05) - 1.0).abs() < 1e-9);
        let small = (0.05f64.powi(2) + 0.05f64.powi(2)) / 4.0;
        assert!((image_ratio(0.05, 0.05) / small - 1.0).abs() < 0.1);
        let db = sideband_suppression_db(&chain, None, 100.0).unwrap();
        assert!((db - 10.0 * (1.0 / image_ratio(0.05, 0.05)).log10()).abs() < 1e-6);
    }

    #[test]
    fn ideal_chain_suppression_floor() {
        let chain = ChainModel::ideal(1.0);
        for f in [-150.0, 37.0, 200.0] {
            assert!(sideband_suppression_db(&chain, None, f).unwrap() >= 100.0);
        }
    }

    #[test]
    fn chain_is_linear_without_quantization() {
        let chain = ChainModel { dac_bits: None, ..ChainModel::imperfect(0.03, -0.02, ZERO) };
        let x = tone(70.0, 200);
        let y = tone(-130.0, 200);
        let (a, b) = (C64::new(0.7, 0.0), C64::new(-0.4, 0.0));
        let mix = Waveform::new(x.samples.iter().zip(&y.samples).map(|(p, q)| p * a + q * b).collect(), 1.0).unwrap();
        let lhs = apply_chain(&mix, &chain).unwrap();
        let rx = apply_chain(&x, &chain).unwrap();
        let ry = apply_chain(&y, &chain).unwrap();
        for k in 0..200 {
            let rhs = rx.samples[k] * a + ry.samples[k] * b;
            assert!((lhs.samples[k] - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn quantization_noise_below_minus_80_dbc() {
        let chain = ChainModel { lowpass_i: vec![1.0], lowpass_q: vec![1.0], ..ChainModel::default() };
        let x = Waveform::new(tone(61.0, 4096).samples.iter().map(|z| z * 2.4).collect(), 1.0).unwrap();
        let y = apply_chain(&x, &chain).unwrap();
        let err: f64 = x.samples.iter().zip(&y.samples).map(|(a, b)| (a - b).norm_sqr()).sum();
        let sig: f64 = x.samples.iter().map(|a| a.norm_sqr()).sum();
        assert!(10.0 * (err / sig).log10() < -80.0);
    }

    #[test]
    fn round_trip_through_lowpass() {
        let env = gaussian_envelope(8.0, 0.37, 1.0, 2.0).unwrap();
        let target = Waveform::from_envelope(&env);
        let chain = ChainModel::default();
        let out = apply_chain(&precorrect(&target, &chain).unwrap(), &chain).unwrap();
        let err = target.samples.iter().zip(&out.samples).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err / target.peak_norm() < 1e-3, "{err}");
    }

    #[test]
    fn inverse_filter_is_bounded() {
        let h: Vec<C64> = (0..64).map(|k| C64::new((-(k as f64) / 4.0).exp(), 0.0)).collect();
        let w = inverse_response(&h, 1e-4);
        let bound = (1.0 + 1e-8) / (2.0 * 1e-4);
        assert!(w.iter().all(|z| z.norm() <= bound * (1.0 + 1e-12)));
        assert!(w.iter().all(|z| z.norm() <= 1.0 / 1e-4));
    }

    #[test]
    fn null_response_is_ill_conditioned() {
        let chain = ChainModel { lowpass_i: vec![0.5, 0.0, 0.5], ..ChainModel::ideal(1.0) };
        // The two-tap kernel has response cos(2π f · 1 ns), which vanishes at 250 MHz.
        let target = tone(250.0, 256);
        assert!(matches!(precorrect(&target, &chain), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn ideal_calibration_is_trivial() {
        let chain = ChainModel::ideal(1.0);
        let cal = calibrate_sidebands(&chain, &[-100.0, 100.0]).unwrap();
        for e in &cal.entries {
            assert!((e.q_gain - 1.0).abs() < 1e-4 && e.q_phase.abs() < 1e-4);
            assert!(e.dc_i.abs() < 1e-5 && e.dc_q.abs() < 1e-5);
        }
    }

    #[test]
    fn calibration_suppresses_image_and_carrier() {
        let chain = ChainModel::imperfect(0.05, 0.05, C64::new(0.01, -0.005));
        let grid = [-200.0, -100.0, 50.0, 150.0];
        let cal = calibrate_sidebands(&chain, &grid).unwrap();
        for &f in &grid {
            assert!(sideband_suppression_db(&chain, Some(&cal), f).unwrap() >= 60.0);
            let c = cal.at(f);
            let exact = analytic_correction(&chain, f);
            assert!((c.q_gain - exact.q_gain).abs() < 1e-3 && (c.q_phase - exact.q_phase).abs() < 1e-3);
        }
    }

    #[test]
    fn recalibration_is_idempotent() {
        let chain = ChainModel { dac_bits: None, ..ChainModel::imperfect(0.05, 0.05, C64::new(0.01, 0.0)) };
        let grid = [-120.0, 80.0];
        let cal = calibrate_sidebands(&chain, &grid).unwrap();
        let again = calibrate_sidebands_from(&chain, &grid, Some(&cal)).unwrap();
        for (a, b) in cal.entries.iter().zip(&again.entries) {
            assert!((a.q_gain / b.q_gain - 1.0).abs() < 1e-6);
            assert!((a.q_phase - b.q_phase).abs() < 1e-6 * a.q_phase.abs().max(1.0));
        }
    }

    #[test]
    fn interpolation_between_grid_points() {
        let cal = IQCalibration {
            entries: vec![
                IqCorrection { f_sb_mhz: 0.0, q_gain: 1.0, q_phase: 0.0, dc_i: 0.0, dc_q: 0.0 },
                IqCorrection { f_sb_mhz: 100.0, q_gain: 2.0, q_phase: 0.2, dc_i: 0.0, dc_q: 0.0 },
            ],
            residuals: vec![0.0, 0.0],
        };
        let c = cal.at(25.0);
        assert!((c.q_gain - 1.25).abs() < 1e-15 && (c.q_phase - 0.05).abs() < 1e-15);
        assert_eq!(cal.at(500.0).q_gain, 2.0);
    }

    #[test]
    fn general_correction_matches_per_tone_correction() {
        let cal = IQCalibration {
            entries: vec![
                IqCorrection { f_sb_mhz: 0.0, q_gain: 0.95, q_phase: -0.05, dc_i: 0.0, dc_q: 0.0 },
                IqCorrection { f_sb_mhz: 200.0, q_gain: 0.97, q_phase: -0.03, dc_i: 0.0, dc_q: 0.0 },
            ],
            residuals: vec![0.0, 0.0],
        };
        // 125 MHz on a 512-point grid lands exactly on an FFT bin of the padded transform.
        let x = tone(125.0, 512);
        let general = cal.correct(&x).unwrap();
        let direct = cal.at(125.0).apply(&x);
        for k in 64..448 {
            assert!((general.samples[k] - direct.samples[k]).norm() < 2e-3, "{k}");
        }
    }
}
