//! Unsupervised rPPG recovery: GREEN, CHROM, POS, LGI and OMIT, applied
//! independently to every ROI of an [`RgbTrace`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{self, mean, std_dev, zscore, PreprocSpec};
use crate::io::{read_text, write_atomic};
use crate::spectrum::band_energy;
use crate::trace::{fmt_g9, parse_rows, render_table, Header, RgbTrace};

/// Sample rate of every [`RppgSignal`].
pub const CANONICAL_FPS: f64 = 50.0;
/// Samples per channel fed to the network (2.5 s at 50 Hz).
pub const CANONICAL_LEN: usize = 125;
pub const RPPG_MAGIC: &str = "pulsekin-rppg";

/// Relative standard deviation below which a conditioned channel counts as
/// carrying no signal.
const DEGENERATE_REL: f64 = 1e-10;
/// Normalized-units threshold for degenerate CHROM/POS windows.
const WINDOW_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Green,
    Omit,
    Chrom,
    Lgi,
    Pos,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Lgi, Method::Omit, Method::Green, Method::Chrom, Method::Pos];

    pub fn name(self) -> &'static str {
        match self {
            Method::Green => "green",
            Method::Omit => "omit",
            Method::Chrom => "chrom",
            Method::Lgi => "lgi",
            Method::Pos => "pos",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown rPPG method {s:?}")))
    }
}

/// Coefficients of the two CHROM chrominance signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChromVariant {
    /// X = 3R − 2G, Y = 1.5R + G − 1.5B.
    #[default]
    Normalized,
    /// X = 0.77R − 0.51G, Y = 0.77R + 0.51G − 0.77B.
    FixedSkinTone,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSpec {
    pub method: Method,
    pub window_s: f64,
    pub overlap: f64,
    pub chrom_variant: ChromVariant,
}

impl Default for MethodSpec {
    fn default() -> Self {
        Self::new(Method::Pos)
    }
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            window_s: 1.6,
            overlap: 0.5,
            chrom_variant: ChromVariant::default(),
        }
    }

    pub fn validate(&self, fps: f64) -> Result<()> {
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::Config(format!("overlap {} outside [0, 1)", self.overlap)));
        }
        if self.window_s * fps < 16.0 {
            return Err(Error::Config(format!(
                "window of {} s at {fps} fps is shorter than 16 samples",
                self.window_s
            )));
        }
        Ok(())
    }

    fn window_samples(&self, fps: f64) -> (usize, usize) {
        let win = (self.window_s * fps).round() as usize;
        let step = ((win as f64 * (1.0 - self.overlap)).round() as usize).max(1);
        (win, step)
    }
}

/// Method output for one ROI before detrend, band-pass and normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPulse {
    pub samples: Vec<f64>,
    /// Windows that hit the σ = 0 branch and contributed zeros.
    pub flagged_windows: usize,
    /// Magnitude the output is measured against when deciding degeneracy.
    pub scale: f64,
}

/// Fully preprocessed single-ROI output.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub samples: Vec<f64>,
    /// Zero-variance channel replaced by zeros.
    pub degenerate: bool,
    pub flagged_windows: usize,
}

fn normalized(x: &[f64]) -> Vec<f64> {
    let m = mean(x);
    x.iter().map(|v| v / m).collect()
}

fn rms(rgb: &[Vec<f64>; 3]) -> f64 {
    let n = rgb[0].len() * 3;
    (rgb.iter().flatten().map(|v| v * v).sum::<f64>() / n as f64).sqrt()
}

/// Hann weights that stay positive at both ends and sum to a constant under
/// 50% overlap.
fn overlap_weights(win: usize) -> Vec<f64> {
    (0..win)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i as f64 + 0.5) / win as f64).cos())
        .collect()
}

fn window_starts(len: usize, win: usize, step: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..=len - win).step_by(step).collect();
    if *starts.last().expect("at least one window") != len - win {
        starts.push(len - win);
    }
    starts
}

/// Runs `per_window` over normalized RGB windows and overlap-adds the
/// Hann-weighted results. A window yielding `None` contributes zeros.
fn overlap_add<F>(rgb: &[Vec<f64>; 3], fps: f64, spec: &MethodSpec, per_window: F) -> Result<(Vec<f64>, usize)>
where
    F: Fn([&[f64]; 3]) -> Option<Vec<f64>>,
{
    spec.validate(fps)?;
    let len = rgb[0].len();
    let (win, step) = spec.window_samples(fps);
    if win > len {
        return Err(Error::Window { window: win, len });
    }
    let weights = overlap_weights(win);
    let mut acc = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let mut flagged = 0;
    for start in window_starts(len, win, step) {
        let cn = [
            normalized(&rgb[0][start..start + win]),
            normalized(&rgb[1][start..start + win]),
            normalized(&rgb[2][start..start + win]),
        ];
        let h = per_window([&cn[0], &cn[1], &cn[2]]);
        if h.is_none() {
            flagged += 1;
        }
        for i in 0..win {
            let v = h.as_ref().map_or(0.0, |h| h[i]);
            acc[start + i] += weights[i] * v;
            norm[start + i] += weights[i];
        }
    }
    Ok((acc.iter().zip(&norm).map(|(a, w)| a / w).collect(), flagged))
}

fn centered(x: Vec<f64>) -> Vec<f64> {
    let m = mean(&x);
    x.into_iter().map(|v| v - m).collect()
}

pub fn green_raw(trace: &RgbTrace, roi: usize) -> Result<RawPulse> {
    let g = trace.column(roi, 1)?;
    let scale = mean(&g).abs().max(f64::MIN_POSITIVE);
    Ok(RawPulse {
        samples: g,
        flagged_windows: 0,
        scale,
    })
}

pub fn chrom_raw(trace: &RgbTrace, roi: usize, spec: &MethodSpec) -> Result<RawPulse> {
    let rgb = trace.rgb(roi)?;
    let (kx, ky) = match spec.chrom_variant {
        ChromVariant::Normalized => ([3.0, -2.0, 0.0], [1.5, 1.0, -1.5]),
        ChromVariant::FixedSkinTone => ([0.77, -0.51, 0.0], [0.77, 0.51, -0.77]),
    };
    let (samples, flagged) = overlap_add(&rgb, trace.fps, spec, |[r, g, b]| {
        let x: Vec<f64> = (0..r.len()).map(|i| kx[0] * r[i] + kx[1] * g[i] + kx[2] * b[i]).collect();
        let y: Vec<f64> = (0..r.len()).map(|i| ky[0] * r[i] + ky[1] * g[i] + ky[2] * b[i]).collect();
        let sy = std_dev(&y);
        if sy <= WINDOW_EPS {
            return None;
        }
        let alpha = std_dev(&x) / sy;
        Some(centered(x.iter().zip(&y).map(|(a, b)| a - alpha * b).collect()))
    })?;
    Ok(RawPulse {
        samples,
        flagged_windows: flagged,
        scale: 1.0,
    })
}

pub fn pos_raw(trace: &RgbTrace, roi: usize, spec: &MethodSpec) -> Result<RawPulse> {
    let rgb = trace.rgb(roi)?;
    let (samples, flagged) = overlap_add(&rgb, trace.fps, spec, |[r, g, b]| {
        let s1: Vec<f64> = (0..r.len()).map(|i| g[i] - b[i]).collect();
        let s2: Vec<f64> = (0..r.len()).map(|i| -2.0 * r[i] + g[i] + b[i]).collect();
        let sd2 = std_dev(&s2);
        if sd2 <= WINDOW_EPS {
            return None;
        }
        let alpha = std_dev(&s1) / sd2;
        Some(centered(s1.iter().zip(&s2).map(|(a, b)| a + alpha * b).collect()))
    })?;
    Ok(RawPulse {
        samples,
        flagged_windows: flagged,
        scale: 1.0,
    })
}

/// Applies `I − q qᵀ` to every frame and keeps the row with the most
/// pulse-band energy.
fn project_out(rgb: &[Vec<f64>; 3], q: &Vector3<f64>, fps: f64) -> Vec<f64> {
    let proj = Matrix3::identity() - q * q.transpose();
    let n = rgb[0].len();
    let mut rows = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for t in 0..n {
        let v = Vector3::new(rgb[0][t], rgb[1][t], rgb[2][t]);
        let p = proj * v;
        for c in 0..3 {
            rows[c][t] = p[c];
        }
    }
    let high = filter::DEFAULT_HIGH_HZ.min(fps / 2.0);
    let energies: Vec<f64> = rows
        .iter()
        .map(|r| band_energy(r, fps, filter::DEFAULT_LOW_HZ, high))
        .collect();
    let mut best = 0;
    for c in 1..3 {
        if energies[c] > energies[best] {
            best = c;
        }
    }
    std::mem::take(&mut rows[best])
}

/// LGI: removes the leading left singular direction of the frame matrix.
pub fn lgi_raw(trace: &RgbTrace, roi: usize) -> Result<RawPulse> {
    let rgb = trace.rgb(roi)?;
    let scale = rms(&rgb);
    let mut gram = Matrix3::zeros();
    for t in 0..rgb[0].len() {
        let v = Vector3::new(rgb[0][t], rgb[1][t], rgb[2][t]);
        gram += v * v.transpose();
    }
    let eig = SymmetricEigen::new(gram);
    let lead = eig.eigenvalues.imax();
    if !(eig.eigenvalues[lead] > 0.0) || scale == 0.0 {
        return Err(Error::DegenerateSignal(format!("roi {roi}: rank-0 color matrix")));
    }
    let u1: Vector3<f64> = eig.eigenvectors.column(lead).into_owned();
    Ok(RawPulse {
        samples: project_out(&rgb, &u1, trace.fps),
        flagged_windows: 0,
        scale,
    })
}

/// OMIT: removes the first orthonormal direction of a QR factorization of the
/// 3 × frames color matrix.
pub fn omit_raw(trace: &RgbTrace, roi: usize) -> Result<RawPulse> {
    let rgb = trace.rgb(roi)?;
    let scale = rms(&rgb);
    let n = rgb[0].len();
    let x = DMatrix::from_fn(3, n, |c, t| rgb[c][t]);
    let qr = x.qr();
    let r00 = qr.r()[(0, 0)];
    if r00.abs() <= f64::MIN_POSITIVE || scale == 0.0 {
        return Err(Error::DegenerateSignal(format!("roi {roi}: rank-0 color matrix")));
    }
    let q = qr.q();
    let q1 = Vector3::new(q[(0, 0)], q[(1, 0)], q[(2, 0)]);
    Ok(RawPulse {
        samples: project_out(&rgb, &q1, trace.fps),
        flagged_windows: 0,
        scale,
    })
}

pub fn raw_pulse(trace: &RgbTrace, roi: usize, spec: &MethodSpec) -> Result<RawPulse> {
    match spec.method {
        Method::Green => green_raw(trace, roi),
        Method::Chrom => chrom_raw(trace, roi, spec),
        Method::Pos => pos_raw(trace, roi, spec),
        Method::Lgi => lgi_raw(trace, roi),
        Method::Omit => omit_raw(trace, roi),
    }
}

/// Method output followed by detrend and band-pass; `None` when the result
/// carries no measurable variation.
fn conditioned(trace: &RgbTrace, roi: usize, spec: &MethodSpec, pre: &PreprocSpec) -> Result<(Option<Vec<f64>>, usize)> {
    let raw = raw_pulse(trace, roi, spec)?;
    let x = filter::condition(&raw.samples, trace.fps, pre)?;
    let live = std_dev(&x) > DEGENERATE_REL * raw.scale;
    Ok((live.then_some(x), raw.flagged_windows))
}

/// Extracts one ROI with the given method and preprocessing. A channel with
/// no variation comes back as flagged zeros.
pub fn extract_roi(trace: &RgbTrace, roi: usize, spec: &MethodSpec, pre: &PreprocSpec) -> Result<Channel> {
    pre.validate(trace.fps)?;
    let (x, flagged_windows) = conditioned(trace, roi, spec, pre)?;
    let (samples, degenerate) = match x {
        Some(x) if pre.normalize => match zscore(&x) {
            Ok(z) => (z, false),
            Err(Error::DegenerateSignal(_)) => (vec![0.0; x.len()], true),
            Err(e) => return Err(e),
        },
        Some(x) => (x, false),
        None => (vec![0.0; trace.frames()], true),
    };
    Ok(Channel {
        samples,
        degenerate,
        flagged_windows,
    })
}

pub fn extract_green(trace: &RgbTrace, roi: usize, pre: &PreprocSpec) -> Result<Channel> {
    extract_roi(trace, roi, &MethodSpec::new(Method::Green), pre)
}

pub fn extract_chrom(trace: &RgbTrace, roi: usize, spec: &MethodSpec, pre: &PreprocSpec) -> Result<Channel> {
    extract_roi(trace, roi, &MethodSpec { method: Method::Chrom, ..*spec }, pre)
}

pub fn extract_pos(trace: &RgbTrace, roi: usize, spec: &MethodSpec, pre: &PreprocSpec) -> Result<Channel> {
    extract_roi(trace, roi, &MethodSpec { method: Method::Pos, ..*spec }, pre)
}

pub fn extract_lgi(trace: &RgbTrace, roi: usize, pre: &PreprocSpec) -> Result<Channel> {
    extract_roi(trace, roi, &MethodSpec::new(Method::Lgi), pre)
}

pub fn extract_omit(trace: &RgbTrace, roi: usize, pre: &PreprocSpec) -> Result<Channel> {
    extract_roi(trace, roi, &MethodSpec::new(Method::Omit), pre)
}

/// Linear interpolation onto a grid at `to_fps`.
pub fn resample(x: &[f64], from_fps: f64, to_fps: f64) -> Vec<f64> {
    if from_fps == to_fps || x.len() < 2 {
        return x.to_vec();
    }
    let n_out = ((x.len() - 1) as f64 * to_fps / from_fps).floor() as usize + 1;
    (0..n_out)
        .map(|k| {
            let pos = k as f64 * from_fps / to_fps;
            let i = (pos.floor() as usize).min(x.len() - 2);
            let frac = pos - i as f64;
            x[i] * (1.0 - frac) + x[i + 1] * frac
        })
        .collect()
}

/// Center crop to `len`, or pad by holding the edge values.
pub fn fit_length(x: &[f64], len: usize) -> Vec<f64> {
    if x.len() >= len {
        let start = (x.len() - len) / 2;
        return x[start..start + len].to_vec();
    }
    let before = (len - x.len()) / 2;
    let after = len - x.len() - before;
    let mut out = Vec::with_capacity(len);
    out.extend(std::iter::repeat_n(x[0], before));
    out.extend_from_slice(x);
    out.extend(std::iter::repeat_n(x[x.len() - 1], after));
    out
}

/// Multi-channel network input: C × W, every channel z-scored or zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RppgSignal {
    pub subject_id: String,
    pub video_id: String,
    pub method: Method,
    channels: usize,
    length: usize,
    data: Vec<f64>,
    degenerate: Vec<bool>,
}

impl RppgSignal {
    pub fn new(subject_id: impl Into<String>, video_id: impl Into<String>, method: Method, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || data.is_empty() || data.len() % channels != 0 {
            return Err(Error::Shape(format!(
                "{} values do not split into {channels} channels",
                data.len()
            )));
        }
        let length = data.len() / channels;
        let degenerate = data.chunks(length).map(|c| c.iter().all(|v| *v == 0.0)).collect();
        Ok(Self {
            subject_id: subject_id.into(),
            video_id: video_id.into(),
            method,
            channels,
            length,
            data,
            degenerate,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    /// Channel-major C × W buffer.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.length..(c + 1) * self.length]
    }

    pub fn degenerate_channels(&self) -> usize {
        self.degenerate.iter().filter(|d| **d).count()
    }

    pub fn is_degenerate(&self, c: usize) -> bool {
        self.degenerate[c]
    }

    pub fn header_line(&self) -> String {
        format!(
            "# {RPPG_MAGIC} v1 method={} fps={} channels={} length={} subject={} video={}",
            self.method,
            fmt_g9(CANONICAL_FPS),
            self.channels,
            self.length,
            self.subject_id,
            self.video_id
        )
    }

    /// One line per sample, one column per channel.
    pub fn to_csv(&self) -> String {
        let rows = (0..self.length).map(|t| (0..self.channels).map(|c| self.data[c * self.length + t]).collect());
        render_table(&self.header_line(), rows)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (first, body) = text.split_once('\n').unwrap_or((text, ""));
        let header = Header::parse(first, RPPG_MAGIC)?;
        let method: Method = header
            .get("method")?
            .parse()
            .map_err(|_| Error::format(1, "unknown method"))?;
        let fps = header.f64("fps")?;
        if fps != CANONICAL_FPS {
            return Err(Error::format(1, format!("rPPG cache must be at {CANONICAL_FPS} fps")));
        }
        let channels = header.usize("channels")?;
        let length = header.usize("length")?;
        if channels == 0 || length == 0 {
            return Err(Error::format(1, "channels and length must be positive"));
        }
        let rows = parse_rows(body, length, channels)?;
        let mut data = vec![0.0; channels * length];
        for t in 0..length {
            for c in 0..channels {
                data[c * length + t] = rows[t * channels + c];
            }
        }
        RppgSignal::new(header.get("subject")?, header.get("video")?, method, channels, data)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&read_text(path.as_ref())?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }
}

/// How ROIs map onto network channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelMode {
    /// One channel per ROI.
    #[default]
    Multi,
    /// ROIs averaged into one holistic trace before extraction.
    Single,
}

/// Applies the method to every ROI and assembles the canonical C × W input.
pub fn extract_all(trace: &RgbTrace, spec: &MethodSpec, pre: &PreprocSpec, mode: ChannelMode) -> Result<RppgSignal> {
    pre.validate(trace.fps)?;
    spec.validate(trace.fps)?;
    let holistic;
    let source = match mode {
        ChannelMode::Multi => trace,
        ChannelMode::Single => {
            holistic = trace.holistic();
            &holistic
        }
    };
    let per_roi: Vec<Option<Vec<f64>>> = (0..source.rois())
        .into_par_iter()
        .map(|roi| conditioned(source, roi, spec, pre).map(|(x, _)| x))
        .collect::<Result<_>>()?;

    let mut data = Vec::with_capacity(per_roi.len() * CANONICAL_LEN);
    let mut live = 0;
    for x in per_roi {
        let fitted = x.map(|x| fit_length(&resample(&x, source.fps, CANONICAL_FPS), CANONICAL_LEN));
        match fitted.map(|f| zscore(&f)) {
            Some(Ok(z)) => {
                live += 1;
                data.extend(z);
            }
            Some(Err(Error::DegenerateSignal(_))) | None => data.extend(std::iter::repeat_n(0.0, CANONICAL_LEN)),
            Some(Err(e)) => return Err(e),
        }
    }
    if live == 0 {
        return Err(Error::Extraction(format!(
            "every ROI of {}/{} is degenerate under {}",
            trace.subject_id, trace.video_id, spec.method
        )));
    }
    RppgSignal::new(trace.subject_id.clone(), trace.video_id.clone(), spec.method, source.rois(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Every ROI: color = base * (1 + gains * wave(t)).
    fn modulated(base: [f64; 3], gains: [f64; 3], wave: impl Fn(f64) -> f64, secs: f64) -> RgbTrace {
        let fps = 50.0;
        let frames = (fps * secs) as usize;
        let mut data = Vec::new();
        for f in 0..frames {
            let w = wave(f as f64 / fps);
            for c in 0..3 {
                data.push(base[c] * (1.0 + gains[c] * w));
            }
        }
        RgbTrace::new("s", "v", fps, 1, data).unwrap()
    }

    fn sine(t: f64) -> f64 {
        (2.0 * PI * 1.2 * t).sin()
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let da: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let db: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        num / (da * db).sqrt()
    }

    #[test]
    fn green_follows_green_column() {
        let t = modulated([120.0, 90.0, 70.0], [0.0, 0.01, 0.0], sine, 10.0);
        let ch = extract_green(&t, 0, &PreprocSpec::default()).unwrap();
        let truth: Vec<f64> = (0..t.frames()).map(|f| sine(f as f64 / 50.0)).collect();
        assert!(correlation(&ch.samples, &truth) > 0.99);
        assert!(!ch.degenerate);
    }

    #[test]
    fn green_index_and_constant() {
        let t = modulated([120.0, 90.0, 70.0], [0.0, 0.0, 0.0], sine, 4.0);
        assert!(matches!(extract_green(&t, 1, &PreprocSpec::default()), Err(Error::Index { .. })));
        let ch = extract_green(&t, 0, &PreprocSpec::default()).unwrap();
        assert!(ch.degenerate);
        assert!(ch.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn chrom_and_pos_cancel_intensity() {
        let t = modulated([130.0, 100.0, 80.0], [0.05, 0.05, 0.05], sine, 10.0);
        let spec = MethodSpec::new(Method::Chrom);
        let c = chrom_raw(&t, 0, &spec).unwrap();
        assert!(c.samples.iter().all(|v| v.abs() < 1e-6));
        let p = pos_raw(&t, 0, &MethodSpec::new(Method::Pos)).unwrap();
        assert!(p.samples.iter().all(|v| v.abs() < 1e-6));
        assert!(p.flagged_windows > 0);
    }

    #[test]
    fn window_longer_than_trace() {
        let t = modulated([130.0, 100.0, 80.0], [0.0, 0.01, 0.0], sine, 1.0);
        let spec = MethodSpec { window_s: 2.0, ..MethodSpec::new(Method::Chrom) };
        assert!(matches!(chrom_raw(&t, 0, &spec), Err(Error::Window { .. })));
        assert!(matches!(pos_raw(&t, 0, &spec), Err(Error::Window { .. })));
    }

    #[test]
    fn projections_annihilate_rank_one_modulation() {
        let t = modulated([130.0, 100.0, 80.0], [0.05, 0.05, 0.05], sine, 10.0);
        for raw in [lgi_raw(&t, 0).unwrap(), omit_raw(&t, 0).unwrap()] {
            let peak = raw.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(peak < 1e-9 * raw.scale, "{peak}");
        }
    }

    #[test]
    fn constant_trace_is_degenerate() {
        let t = modulated([130.0, 100.0, 80.0], [0.0; 3], sine, 4.0);
        let pre = PreprocSpec::default();
        assert!(extract_lgi(&t, 0, &pre).unwrap().degenerate);
        assert!(extract_omit(&t, 0, &pre).unwrap().degenerate);
        let zero = modulated([0.0; 3], [0.0; 3], sine, 4.0);
        assert!(matches!(lgi_raw(&zero, 0), Err(Error::DegenerateSignal(_))));
        assert!(matches!(omit_raw(&zero, 0), Err(Error::DegenerateSignal(_))));
    }

    #[test]
    fn all_degenerate_trace_fails_extraction() {
        let t = modulated([130.0, 100.0, 80.0], [0.0; 3], sine, 4.0);
        let r = extract_all(&t, &MethodSpec::new(Method::Green), &PreprocSpec::default(), ChannelMode::Multi);
        assert!(matches!(r, Err(Error::Extraction(_))));
    }

    #[test]
    fn resample_and_fit() {
        let x: Vec<f64> = (0..31).map(|i| i as f64).collect();
        let y = resample(&x, 30.0, 50.0);
        assert_eq!(y.len(), 51);
        assert!((y[5] - 3.0).abs() < 1e-12);
        assert_eq!(fit_length(&[1.0, 2.0, 3.0, 4.0, 5.0], 3), vec![2.0, 3.0, 4.0]);
        assert_eq!(fit_length(&[1.0, 2.0], 5), vec![1.0, 1.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("POS".parse::<Method>().is_ok());
        assert!("ica".parse::<Method>().is_err());
    }
}
