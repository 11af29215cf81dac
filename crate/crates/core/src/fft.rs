//! Discrete Fourier transforms of arbitrary length.
//!
//! Power-of-two sizes use an iterative radix-2 kernel; other sizes go through
//! Bluestein's chirp-z algorithm on a padded radix-2 transform.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;


use crate::linalg::{C64, ZERO};

/// Forward transform `X[k] = sum_n x[n] exp(-2 pi i k n / N)`.
pub fn fft(input: &[C64]) -> Vec<C64> {
    transform(input, false)
}

/// Inverse transform including the `1/N` normalization.
pub fn ifft(input: &[C64]) -> Vec<C64> {
    let n = input.len() as f64;
    let mut out = transform(input, true);
    out.iter_mut().for_each(|x| *x /= n);
    out
}

fn transform(input: &[C64], inverse: bool) -> Vec<C64> {
    let n = input.len();
    if n <= 1 {
        return input.to_vec();
    }
    if n.is_power_of_two() {
        let mut buf = input.to_vec();
        radix2_in_place(&mut buf, inverse);
        buf
    } else {
        bluestein(input, inverse)
    }
}

fn radix2_in_place(buf: &mut [C64], inverse: bool) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let half = len / 2;
        // Twiddles are evaluated directly rather than by recurrence to keep
        // round-off at the 1e-15 level for long transforms.
        let twiddles: Vec<C64> =
            (0..half).map(|k| C64::from_polar(1.0, ang * k as f64)).collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let u = buf[start + k];
                let v = buf[start + k + half] * twiddles[k];
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}

fn bluestein(input: &[C64], inverse: bool) -> Vec<C64> {
    let n = input.len();
    let m = (2 * n - 1).next_power_of_two();
    let sign = if inverse { 1.0 } else { -1.0 };
    // chirp[k] = exp(sign * i * pi * k^2 / n); k^2 reduced mod 2n to avoid precision loss.
    let chirp: Vec<C64> = (0..n)
        .map(|k| {
            let k2 = ((k as u128 * k as u128) % (2 * n as u128)) as f64;
            C64::from_polar(1.0, sign * PI * k2 / n as f64)
        })
        .collect();

    let mut a = vec![ZERO; m];
    for k in 0..n {
        a[k] = input[k] * chirp[k];
    }
    let mut b = vec![ZERO; m];
    b[0] = chirp[0].conj();
    for k in 1..n {
        b[k] = chirp[k].conj();
        b[m - k] = chirp[k].conj();
    }
    radix2_in_place(&mut a, false);
    radix2_in_place(&mut b, false);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    radix2_in_place(&mut a, true);
    let scale = 1.0 / m as f64;
    (0..n).map(|k| a[k] * scale * chirp[k]).collect()
}

/// DFT bin frequencies in cycles per unit of `1/sample_rate`, ordered as the
/// transform output (non-negative first, then negative).
pub fn bin_frequencies(n: usize, sample_rate: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let kk = if k <= (n - 1) / 2 { k as f64 } else { k as f64 - n as f64 };
            kk * sample_rate / n as f64
        })
        .collect()
}

/// Complex amplitude of `samples` projected onto `exp(2 pi i f t)`, i.e. the
/// continuous-frequency DTFT evaluated at `f` (cycles per sample period units
/// given by `sample_rate`).
pub fn dtft(samples: &[C64], freq: f64, sample_rate: f64) -> C64 {
    let w = -2.0 * PI * freq / sample_rate;
    samples
        .iter()
        .enumerate()
        .map(|(n, &x)| x * C64::from_polar(1.0, w * n as f64))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[C64]) -> Vec<C64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                (0..n)
                    .map(|j| x[j] * C64::from_polar(1.0, -2.0 * PI * (k * j) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    fn signal(n: usize) -> Vec<C64> {
        (0..n).map(|k| C64::new((0.37 * k as f64).sin() + 0.1, (1.3 * k as f64).cos() * 0.5)).collect()
    }

    #[test]
    fn matches_naive_dft_for_mixed_sizes() {
        for n in [1, 2, 3, 5, 8, 12, 17, 64, 100] {
            let x = signal(n);
            let fast = fft(&x);
            let slow = naive_dft(&x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-10 * (1.0 + b.norm()), "n={n}");
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        for n in [7, 16, 33] {
            let x = signal(n);
            let back = ifft(&fft(&x));
            for (a, b) in x.iter().zip(&back) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn bin_frequency_layout() {
        let f = bin_frequencies(4, 1.0);
        assert_eq!(f, vec![0.0, 0.25, -0.5, -0.25]);
        let f = bin_frequencies(5, 1.0);
        assert_eq!(f, vec![0.0, 0.2, 0.4, -0.4, -0.2]);
    }
}
