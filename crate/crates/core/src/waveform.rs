//! Complex drive signals as seen by the integrator.
//!
//! A [`Drive`] maps time to the complex Rabi amplitude in the rotating frame.
//! Sampled baseband streams ([`Waveform`]) and sequences of placed envelopes
//! ([`PulseTrain`]) both implement it.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{C64, ZERO};
use crate::pulses::PulseEnvelope;
use crate::system::TAU;
#[allow(unused_imports)]
use num_traits::Float;

/// Time-dependent complex drive amplitude, rad/ns.
pub trait Drive {
    fn value_at(&self, t: f64) -> C64;
    /// Span of the drive from `t = 0`, ns.
    fn duration(&self) -> f64;
    /// Spacing of the points at which states are reported, ns.
    fn sample_period(&self) -> f64;
}

/// Uniformly sampled complex baseband; real part on I, imaginary part on Q.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<C64>,
    /// GS/s.
    pub sample_rate: f64,
}

impl Waveform {
    pub fn new(samples: Vec<C64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyWaveform);
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(invalid("sample rate must be positive"));
        }
        Ok(Self { samples, sample_rate })
    }

    /// Real envelope placed on the I channel.
    pub fn from_envelope(env: &PulseEnvelope) -> Self {
        Self { samples: env.samples.iter().map(|&x| C64::new(x, 0.0)).collect(), sample_rate: env.sample_rate }
    }

    /// All-zero waveform of `n` samples.
    pub fn zeros(n: usize, sample_rate: f64) -> Self {
        Self { samples: alloc::vec![ZERO; n], sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.samples.len()).map(|k| k as f64 / self.sample_rate).collect()
    }

    pub fn i_channel(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.re).collect()
    }

    pub fn q_channel(&self) -> Vec<f64> {
        self.samples.iter().map(|z| z.im).collect()
    }

    /// Largest `|z|` over the samples.
    pub fn peak_norm(&self) -> f64 {
        self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl Drive for Waveform {
    #[inline]
    fn value_at(&self, t: f64) -> C64 {
        let x = t * self.sample_rate;
        let n = self.samples.len();
        if !(x >= 0.0) || x > (n - 1) as f64 {
            return ZERO;
        }
        let k = x.floor() as usize;
        if k + 1 >= n {
            return self.samples[n - 1];
        }
        let f = x - k as f64;
        self.samples[k] + (self.samples[k + 1] - self.samples[k]) * f
    }

    fn duration(&self) -> f64 {
        (self.samples.len() - 1) as f64 / self.sample_rate
    }

    fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate
    }
}

impl Drive for PulseEnvelope {
    #[inline]
    fn value_at(&self, t: f64) -> C64 {
        C64::new(PulseEnvelope::value_at(self, t), 0.0)
    }

    fn duration(&self) -> f64 {
        PulseEnvelope::duration(self)
    }

    fn sample_period(&self) -> f64 {
        PulseEnvelope::sample_period(self)
    }
}

/// One envelope positioned in a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedPulse {
    pub envelope: PulseEnvelope,
    /// Time of the envelope's first sample, ns.
    pub start_ns: f64,
    /// Microwave phase, rad. Phase 0 rotates about x, `π/2` about y.
    pub phase: f64,
    /// Sideband offset from the frame frequency, MHz.
    pub sideband_mhz: f64,
}

impl PlacedPulse {
    pub fn new(envelope: PulseEnvelope, start_ns: f64) -> Self {
        Self { envelope, start_ns, phase: 0.0, sideband_mhz: 0.0 }
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn with_sideband(mut self, mhz: f64) -> Self {
        self.sideband_mhz = mhz;
        self
    }

    pub fn end_ns(&self) -> f64 {
        self.start_ns + self.envelope.duration()
    }

    /// Peak-to-peak separation is measured between these instants.
    pub fn peak_ns(&self) -> f64 {
        self.start_ns + self.envelope.peak_time_ns
    }
}

/// Sum of placed pulses; overlapping pulses add coherently.
///
/// Each pulse contributes `env(t - start) exp(i (2π f_sb t + phase))`. The
/// sideband phase tracks global time, so a sideband acts as a continuous
/// detuning of the carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseTrain {
    pub pulses: Vec<PlacedPulse>,
    /// GS/s at which states are reported.
    pub sample_rate: f64,
    /// Extra idle time after the last pulse, ns.
    pub tail_ns: f64,
}

impl PulseTrain {
    pub fn new(pulses: Vec<PlacedPulse>) -> Result<Self> {
        let first = pulses.first().ok_or(Error::EmptyWaveform)?;
        let rate = first.envelope.sample_rate;
        for p in &pulses {
            if !p.start_ns.is_finite() || p.start_ns < 0.0 {
                return Err(invalid(format!("pulse start {} ns must be non-negative", p.start_ns)));
            }
            if !(p.phase.is_finite() && p.sideband_mhz.is_finite()) {
                return Err(invalid("pulse phase and sideband must be finite"));
            }
            let nyquist_mhz = 500.0 * p.envelope.sample_rate;
            if p.sideband_mhz.abs() >= nyquist_mhz {
                return Err(Error::Aliasing { freq_ghz: p.sideband_mhz * 1e-3, rate_gsps: p.envelope.sample_rate });
            }
        }
        Ok(Self { pulses, sample_rate: rate, tail_ns: 0.0 })
    }

    pub fn with_tail(mut self, tail_ns: f64) -> Self {
        self.tail_ns = tail_ns.max(0.0);
        self
    }

    /// Samples the train on its reporting grid.
    pub fn to_waveform(&self) -> Waveform {
        let n = (self.duration() * self.sample_rate).round() as usize + 1;
        let samples = (0..n).map(|k| self.value_at(k as f64 / self.sample_rate)).collect();
        Waveform { samples, sample_rate: self.sample_rate }
    }
}

impl Drive for PulseTrain {
    #[inline]
    fn value_at(&self, t: f64) -> C64 {
        let mut acc = ZERO;
        for p in &self.pulses {
            let a = p.envelope.value_at(t - p.start_ns);
            if a != 0.0 {
                acc += C64::from_polar(a, TAU * p.sideband_mhz * 1e-3 * t + p.phase);
            }
        }
        acc
    }

    fn duration(&self) -> f64 {
        self.pulses.iter().map(PlacedPulse::end_ns).fold(0.0, f64::max) + self.tail_ns
    }

    fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate
    }
}

/// Constant drive for a fixed time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantDrive {
    pub amplitude: C64,
    pub duration_ns: f64,
    pub report_period_ns: f64,
}

impl Drive for ConstantDrive {
    fn value_at(&self, t: f64) -> C64 {
        if (0.0..=self.duration_ns).contains(&t) {
            self.amplitude
        } else {
            ZERO
        }
    }

    fn duration(&self) -> f64 {
        self.duration_ns
    }

    fn sample_period(&self) -> f64 {
        self.report_period_ns
    }
}
