//! Power-spectrum helpers: Welch heart-rate estimation and in-band energy.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::filter::{mean, DEFAULT_HIGH_HZ, DEFAULT_LOW_HZ};

pub const MIN_HR_SAMPLES: usize = 128;
const MAX_SEGMENT: usize = 1024;
/// Frequency grid spacing targeted by zero padding.
const GRID_HZ: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrEstimate {
    pub bpm: f64,
    pub peak_hz: f64,
    /// Peak power over median in-band power.
    pub prominence: f64,
    pub low_confidence: bool,
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// One-sided power of `x` (mean removed) zero-padded to `nfft`.
fn power(x: &[f64], window: Option<&[f64]>, nfft: usize, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let m = mean(x);
    let mut buf: Vec<Complex64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = window.map_or(1.0, |w| w[i]);
            Complex64::new((v - m) * w, 0.0)
        })
        .collect();
    buf.resize(nfft, Complex64::new(0.0, 0.0));
    planner.plan_fft_forward(nfft).process(&mut buf);
    buf[..nfft / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

/// Welch power spectral density, Hann segments with 50% overlap, zero padded
/// to a fine grid. Returns `(frequencies, power)`.
pub fn welch(x: &[f64], fps: f64) -> (Vec<f64>, Vec<f64>) {
    let seg = x.len().min(MAX_SEGMENT);
    let step = (seg / 2).max(1);
    let nfft = ((fps / GRID_HZ).ceil() as usize).max(seg).next_power_of_two();
    let window = hann(seg);
    let mut planner = FftPlanner::new();
    let mut acc = vec![0.0; nfft / 2 + 1];
    let mut count = 0usize;
    let mut start = 0;
    loop {
        let p = power(&x[start..start + seg], Some(&window), nfft, &mut planner);
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
        count += 1;
        if start + seg >= x.len() {
            break;
        }
        start = (start + step).min(x.len() - seg);
    }
    for a in &mut acc {
        *a /= count as f64;
    }
    let freqs = (0..acc.len()).map(|k| k as f64 * fps / nfft as f64).collect();
    (freqs, acc)
}

/// Heart rate as the Welch peak inside the pulse band.
pub fn estimate_hr(x: &[f64], fps: f64) -> Result<HrEstimate> {
    if x.len() < MIN_HR_SAMPLES {
        return Err(Error::Shape(format!(
            "heart-rate estimation needs >= {MIN_HR_SAMPLES} samples, got {}",
            x.len()
        )));
    }
    if x.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateSignal("all-zero signal".into()));
    }
    let (freqs, psd) = welch(x, fps);
    let high = DEFAULT_HIGH_HZ.min(fps / 2.0);
    let band: Vec<(f64, f64)> = freqs
        .iter()
        .zip(&psd)
        .filter(|(f, _)| **f >= DEFAULT_LOW_HZ && **f <= high)
        .map(|(f, p)| (*f, *p))
        .collect();
    if band.is_empty() {
        return Err(Error::Band {
            low: DEFAULT_LOW_HZ,
            high: DEFAULT_HIGH_HZ,
            fps,
        });
    }
    let (peak_hz, peak) = band
        .iter()
        .copied()
        .fold((0.0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    let mut powers: Vec<f64> = band.iter().map(|(_, p)| *p).collect();
    powers.sort_by(f64::total_cmp);
    let median = powers[powers.len() / 2];
    let prominence = if median > 0.0 { peak / median } else { f64::INFINITY };
    Ok(HrEstimate {
        bpm: 60.0 * peak_hz,
        peak_hz,
        prominence,
        low_confidence: prominence < 2.0,
    })
}

/// Periodogram energy of `x` between `low` and `high` Hz.
pub fn band_energy(x: &[f64], fps: f64, low: f64, high: f64) -> f64 {
    let nfft = x.len();
    if nfft < 2 {
        return 0.0;
    }
    let mut planner = FftPlanner::new();
    let p = power(x, None, nfft, &mut planner);
    p.iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = *k as f64 * fps / nfft as f64;
            f >= low && f <= high
        })
        .map(|(_, v)| v)
        .sum()
}

/// Frequency of the largest periodogram bin in `[low, high]`, zero padded to
/// the fine grid.
pub fn peak_frequency(x: &[f64], fps: f64, low: f64, high: f64) -> f64 {
    let nfft = ((fps / GRID_HZ).ceil() as usize).max(x.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let p = power(x, None, nfft, &mut planner);
    let mut best = (0.0, f64::NEG_INFINITY);
    for (k, v) in p.iter().enumerate() {
        let f = k as f64 * fps / nfft as f64;
        if f >= low && f <= high && *v > best.1 {
            best = (f, *v);
        }
    }
    best.0
}
