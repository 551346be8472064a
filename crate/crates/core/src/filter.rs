//! Signal conditioning: linear detrend, zero-phase Butterworth band-pass and
//! z-score normalization.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

pub const DEFAULT_LOW_HZ: f64 = 0.65;
pub const DEFAULT_HIGH_HZ: f64 = 4.0;
/// Order of the analog low-pass prototype; the band-pass has twice as many poles.
pub const BUTTER_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocSpec {
    pub detrend: bool,
    pub bandpass_low_hz: f64,
    pub bandpass_high_hz: f64,
    pub bandpass: bool,
    pub normalize: bool,
}

impl Default for PreprocSpec {
    fn default() -> Self {
        Self {
            detrend: true,
            bandpass_low_hz: DEFAULT_LOW_HZ,
            bandpass_high_hz: DEFAULT_HIGH_HZ,
            bandpass: true,
            normalize: true,
        }
    }
}

impl PreprocSpec {
    pub fn validate(&self, fps: f64) -> Result<()> {
        if self.bandpass {
            check_band(fps, self.bandpass_low_hz, self.bandpass_high_hz)?;
        }
        Ok(())
    }
}

fn check_band(fps: f64, low: f64, high: f64) -> Result<()> {
    if !(low > 0.0 && low < high && high < fps / 2.0) {
        return Err(Error::Band { low, high, fps });
    }
    Ok(())
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Zero mean, unit population variance.
pub fn zscore(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::Shape(format!("zscore needs >= 2 samples, got {}", x.len())));
    }
    let m = mean(x);
    let sd = std_dev(x);
    let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if sd == 0.0 || sd <= 1e-12 * scale {
        return Err(Error::DegenerateSignal("zero variance".into()));
    }
    Ok(x.iter().map(|v| (v - m) / sd).collect())
}

/// Removes the least-squares line.
pub fn detrend(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 3 {
        return Err(Error::Shape(format!("detrend needs >= 3 samples, got {n}")));
    }
    let t_mean = (n as f64 - 1.0) / 2.0;
    let x_mean = mean(x);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let dt = i as f64 - t_mean;
        sxy += dt * (v - x_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    Ok(x
        .iter()
        .enumerate()
        .map(|(i, v)| v - x_mean - slope * (i as f64 - t_mean))
        .collect())
}

/// One second-order section, `a0 == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    /// Steady-state transposed direct-form II state for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let gain = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let z2 = b2 - a2 * gain;
        let z1 = b1 - a1 * gain + z2;
        [z1, z2]
    }

    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b[0] + z_inv * (self.b[1] + z_inv * self.b[2]);
        let den = self.a[0] + z_inv * (self.a[1] + z_inv * self.a[2]);
        num / den
    }
}

/// Butterworth band-pass as cascaded second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPass {
    pub sections: Vec<Biquad>,
}

impl BandPass {
    /// Digital Butterworth band-pass via the bilinear transform with
    /// pre-warped edges.
    pub fn butterworth(order: usize, fps: f64, low: f64, high: f64) -> Result<Self> {
        check_band(fps, low, high)?;
        if order == 0 {
            return Err(Error::Config("filter order must be positive".into()));
        }
        let fs2 = 2.0 * fps;
        let wl = fs2 * (PI * low / fps).tan();
        let wh = fs2 * (PI * high / fps).tan();
        let bw = wh - wl;
        let w0_sq = wl * wh;

        // Upper-half-plane analog band-pass poles from the low-pass prototype.
        let mut poles = Vec::with_capacity(order);
        for k in 0..order {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            let p = Complex64::from_polar(1.0, theta) * (bw / 2.0);
            let root = (p * p - w0_sq).sqrt();
            for s in [p + root, p - root] {
                let z = (fs2 + s) / (fs2 - s);
                if z.im >= 0.0 {
                    poles.push(z);
                }
            }
        }
        if poles.len() != order {
            return Err(Error::Config("pole pairing failed".into()));
        }
        poles.sort_by(|a, b| a.norm().total_cmp(&b.norm()));

        // Each section gets one zero at z = 1 and one at z = -1.
        let mut sections: Vec<Biquad> = poles
            .iter()
            .map(|p| Biquad {
                b: [1.0, 0.0, -1.0],
                a: [1.0, -2.0 * p.re, p.norm_sqr()],
            })
            .collect();

        // Unit gain at the digital image of the analog center frequency.
        let center = (w0_sq.sqrt() / fs2).atan() * 2.0;
        let z_inv = Complex64::from_polar(1.0, -center);
        let mag: f64 = sections.iter().map(|s| s.response(z_inv).norm()).product();
        let per_section = mag.powf(-1.0 / sections.len() as f64);
        for s in &mut sections {
            for b in &mut s.b {
                *b *= per_section;
            }
        }
        Ok(Self { sections })
    }

    /// Magnitude response at `freq` Hz.
    pub fn magnitude(&self, fps: f64, freq: f64) -> f64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq / fps);
        self.sections.iter().map(|s| s.response(z_inv).norm()).product()
    }

    fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    /// Causal cascade filter with explicit initial states scaled by `x[0]`.
    fn run(&self, x: &mut [f64], init_scale: f64) {
        let mut input_level = init_scale;
        for s in &self.sections {
            let [z1, z2] = s.step_state();
            let (mut z1, mut z2) = (z1 * input_level, z2 * input_level);
            let [b0, b1, b2] = s.b;
            let [_, a1, a2] = s.a;
            for v in x.iter_mut() {
                let xin = *v;
                let y = b0 * xin + z1;
                z1 = b1 * xin - a1 * y + z2;
                z2 = b2 * xin - a2 * y;
                *v = y;
            }
            input_level *= s.dc_gain();
        }
    }

    /// Forward-backward filtering with odd-reflection padding.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = x.len();
        let min_len = 3 * 2 * self.sections.len();
        if n < min_len {
            return Err(Error::Shape(format!(
                "band-pass needs >= {min_len} samples, got {n}"
            )));
        }
        let pad = self.pad_len().min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let first = ext[0];
        self.run(&mut ext, first);
        ext.reverse();
        let first = ext[0];
        self.run(&mut ext, first);
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }
}

/// Zero-phase band-pass with the default prototype order.
pub fn bandpass(x: &[f64], fps: f64, low: f64, high: f64) -> Result<Vec<f64>> {
    BandPass::butterworth(BUTTER_ORDER, fps, low, high)?.filtfilt(x)
}

/// Applies detrend and band-pass (normalization is left to the caller, which
/// owns the degenerate-channel policy).
pub fn condition(x: &[f64], fps: f64, spec: &PreprocSpec) -> Result<Vec<f64>> {
    let mut out = if spec.detrend { detrend(x)? } else { x.to_vec() };
    if spec.bandpass {
        out = bandpass(&out, fps, spec.bandpass_low_hz, spec.bandpass_high_hz)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(freq: f64, fps: f64, secs: f64) -> Vec<f64> {
        (0..(fps * secs) as usize)
            .map(|i| (2.0 * PI * freq * i as f64 / fps).sin())
            .collect()
    }

    /// Peak FFT magnitude, by direct DFT over a fine grid around `freq`.
    fn amplitude_at(x: &[f64], fps: f64, freq: f64) -> f64 {
        let n = x.len() as f64;
        let mut best = 0.0f64;
        for k in -20..=20 {
            let f = freq + k as f64 * 0.002;
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                let ph = 2.0 * PI * f * i as f64 / fps;
                re += v * ph.cos();
                im -= v * ph.sin();
            }
            best = best.max((re * re + im * im).sqrt() * 2.0 / n);
        }
        best
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        let mut num = 0.0;
        let (mut da, mut db) = (0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            num += (x - ma) * (y - mb);
            da += (x - ma).powi(2);
            db += (y - mb).powi(2);
        }
        num / (da * db).sqrt()
    }

    #[test]
    fn zscore_known_values() {
        let z = zscore(&[1.0, 2.0, 3.0]).unwrap();
        let expect = [-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589];
        for (a, b) in z.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zscore_constant_is_degenerate() {
        assert!(matches!(zscore(&[5.0, 5.0, 5.0]), Err(Error::DegenerateSignal(_))));
    }

    #[test]
    fn detrend_ramp_and_zero() {
        let d = detrend(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-9));
        assert_eq!(detrend(&[0.0; 5]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn detrend_preserves_sine() {
        let fps = 50.0;
        let clean = tone(1.2, fps, 10.0);
        let noisy: Vec<f64> = clean
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.3 * i as f64 / fps + 2.0)
            .collect();
        let d = detrend(&noisy).unwrap();
        assert!(pearson(&d, &clean) > 0.99);
        assert!(mean(&d).abs() < 1e-9);
    }

    #[test]
    fn bandpass_passes_pulse_band() {
        let fps = 50.0;
        for f in [1.0, 1.2, 1.5, 2.0, 2.5, 3.0] {
            let x = tone(f, fps, 10.0);
            let y = bandpass(&x, fps, 0.65, 4.0).unwrap();
            let ratio = amplitude_at(&y, fps, f) / amplitude_at(&x, fps, f);
            assert!(ratio >= 0.9, "{f} Hz kept {ratio}");
        }
    }

    #[test]
    fn bandpass_rejects_out_of_band() {
        let fps = 50.0;
        for f in [0.1, 0.325, 8.0, 12.0] {
            let x = tone(f, fps, 10.0);
            let y = bandpass(&x, fps, 0.65, 4.0).unwrap();
            let ratio = amplitude_at(&y, fps, f) / amplitude_at(&x, fps, f);
            assert!(ratio <= 0.1, "{f} Hz kept {ratio}");
        }
    }

    #[test]
    fn bandpass_response_is_unity_at_center() {
        let bp = BandPass::butterworth(4, 50.0, 0.65, 4.0).unwrap();
        let fc = ((2.0 * 50.0 * (PI * 0.65 / 50.0).tan()) * (2.0 * 50.0 * (PI * 4.0 / 50.0).tan()))
            .sqrt();
        let fc = (fc / 100.0).atan() * 50.0 / PI;
        assert!((bp.magnitude(50.0, fc) - 1.0).abs() < 1e-9);
        // -3 dB at the edges.
        for edge in [0.65, 4.0] {
            assert!((bp.magnitude(50.0, edge) - 0.5f64.sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn bandpass_band_errors() {
        let x = vec![0.0; 100];
        assert!(matches!(bandpass(&x, 50.0, 2.0, 1.0), Err(Error::Band { .. })));
        assert!(matches!(bandpass(&x, 50.0, 0.0, 1.0), Err(Error::Band { .. })));
        assert!(matches!(bandpass(&x, 6.0, 0.65, 4.0), Err(Error::Band { .. })));
    }

    proptest! {
        #[test]
        fn zscore_statistics(x in prop::collection::vec(-1e3f64..1e3, 2..200)) {
            prop_assume!(std_dev(&x) > 1e-6);
            let z = zscore(&x).unwrap();
            prop_assert!(mean(&z).abs() < 1e-9);
            prop_assert!((std_dev(&z) - 1.0).abs() < 1e-9);
            let zz = zscore(&z).unwrap();
            for (a, b) in z.iter().zip(&zz) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn detrend_is_idempotent(x in prop::collection::vec(-1e3f64..1e3, 3..200)) {
            let d = detrend(&x).unwrap();
            let dd = detrend(&d).unwrap();
            for (a, b) in d.iter().zip(&dd) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn bandpass_is_linear(
            x in prop::collection::vec(-10f64..10.0, 64..160),
            a in -5f64..5.0,
            b in -5f64..5.0,
        ) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| (i as f64 * 0.37).sin() * v).collect();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = bandpass(&mix, 50.0, 0.65, 4.0).unwrap();
            let fx = bandpass(&x, 50.0, 0.65, 4.0).unwrap();
            let fy = bandpass(&y, 50.0, 0.65, 4.0).unwrap();
            let scale = lhs.iter().fold(1e-12f64, |m, v| m.max(v.abs()));
            for i in 0..lhs.len() {
                let rhs = a * fx[i] + b * fy[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-6 * scale);
            }
        }
    }
}
