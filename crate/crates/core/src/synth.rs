//! Synthetic families: parametric pulse waveforms with kin-shared morphology
//! and heart rate, rendered into multi-ROI skin-color traces.
//!
//! Every member's parameters are `population mean + s * family deviation +
//! (1 - s) * individual deviation` where `s` is the kin similarity, so `s = 1`
//! makes members identical and `s = 0` makes them independent draws.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{mean, std_dev};
use crate::registry::{AnnotatedPair, Registry, Relation, Role, Subject};
use crate::trace::{write_trace, RgbTrace, MIN_DURATION_S};

const HR_RANGE: (f64, f64) = (0.65, 4.0);

/// Beat shape parameters. Phases are fractions of one cardiac cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Morphology {
    /// Dicrotic wave amplitude relative to the systolic peak.
    pub notch_amplitude: f64,
    /// Systolic width over diastolic width.
    pub width_ratio: f64,
    pub systolic_width: f64,
    /// Phase gap between the systolic and dicrotic peaks.
    pub notch_delay: f64,
}

impl Morphology {
    const MEAN: Morphology = Morphology {
        notch_amplitude: 0.35,
        width_ratio: 0.6,
        systolic_width: 0.07,
        notch_delay: 0.25,
    };
    const SPREAD: Morphology = Morphology {
        notch_amplitude: 0.12,
        width_ratio: 0.15,
        systolic_width: 0.015,
        notch_delay: 0.04,
    };

    fn as_array(&self) -> [f64; 4] {
        [self.notch_amplitude, self.width_ratio, self.systolic_width, self.notch_delay]
    }

    fn from_array(a: [f64; 4]) -> Self {
        Morphology {
            notch_amplitude: a[0].clamp(0.05, 0.6),
            width_ratio: a[1].clamp(0.25, 1.2),
            systolic_width: a[2].clamp(0.03, 0.12),
            notch_delay: a[3].clamp(0.15, 0.33),
        }
    }

    /// One cycle of the waveform at `phase` in [0, 1).
    pub fn shape(&self, phase: f64) -> f64 {
        let systolic = 0.15;
        let bumps = [
            (1.0, systolic, self.systolic_width),
            (self.notch_amplitude, systolic + self.notch_delay, self.systolic_width / self.width_ratio),
            (0.1, systolic + 0.6, 0.1),
        ];
        bumps
            .iter()
            .map(|&(amp, center, width)| {
                let mut d = (phase - center).rem_euclid(1.0);
                if d > 0.5 {
                    d -= 1.0;
                }
                amp * (-d * d / (2.0 * width * width)).exp()
            })
            .sum()
    }
}

/// One family's members with their drawn heart rates and morphologies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub family_id: String,
    pub roles: Vec<Role>,
    pub heart_rate_hz: Vec<f64>,
    pub morphology: Vec<Morphology>,
    pub kin_similarity: f64,
    /// `None` for noise-free waveforms.
    pub noise_snr_db: Option<f64>,
}

impl FamilySpec {
    pub fn n_members(&self) -> usize {
        self.roles.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.roles.len() < 2 {
            return Err(Error::Config("a family needs at least two members".into()));
        }
        if !(0.0..=1.0).contains(&self.kin_similarity) {
            return Err(Error::Config(format!("kin_similarity {} outside [0, 1]", self.kin_similarity)));
        }
        if self.heart_rate_hz.len() != self.roles.len() || self.morphology.len() != self.roles.len() {
            return Err(Error::Config("per-member parameter count mismatch".into()));
        }
        if let Some(hr) = self.heart_rate_hz.iter().find(|h| !(HR_RANGE.0..=HR_RANGE.1).contains(*h)) {
            return Err(Error::Config(format!("heart rate {hr} Hz outside [0.65, 4.0]")));
        }
        Ok(())
    }

    /// Draws member parameters around a shared family deviation.
    pub fn draw(
        family_id: impl Into<String>,
        roles: Vec<Role>,
        kin_similarity: f64,
        noise_snr_db: Option<f64>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mean_hr = 1.25;
        let hr_spread = 0.3;
        let family_hr: f64 = rng.sample::<f64, _>(StandardNormal);
        let family_morph: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let mut heart_rate_hz = Vec::with_capacity(roles.len());
        let mut morphology = Vec::with_capacity(roles.len());
        for _ in &roles {
            let own_hr: f64 = rng.sample(StandardNormal);
            let dev = kin_similarity * family_hr + (1.0 - kin_similarity) * own_hr;
            heart_rate_hz.push((mean_hr + hr_spread * dev).clamp(0.75, 3.5));
            let mean = Morphology::MEAN.as_array();
            let spread = Morphology::SPREAD.as_array();
            let params = std::array::from_fn(|k| {
                let own: f64 = rng.sample(StandardNormal);
                mean[k] + spread[k] * (kin_similarity * family_morph[k] + (1.0 - kin_similarity) * own)
            });
            morphology.push(Morphology::from_array(params));
        }
        let spec = FamilySpec {
            family_id: family_id.into(),
            roles,
            heart_rate_hz,
            morphology,
            kin_similarity,
            noise_snr_db,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Sampling grid and starting phase of one recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recording {
    pub fps: f64,
    pub duration_s: f64,
    /// Cardiac phase at t = 0, in cycles.
    pub phase: f64,
}

impl Recording {
    pub fn frames(&self) -> usize {
        (self.fps * self.duration_s).round() as usize
    }
}

/// Unit-variance pulse waveform of one member, plus Gaussian noise at the
/// family's SNR.
pub fn synth_pulse(spec: &FamilySpec, member: usize, rec: &Recording, rng: &mut impl Rng) -> Result<Vec<f64>> {
    spec.validate()?;
    if member >= spec.n_members() {
        return Err(Error::Index { index: member, len: spec.n_members() });
    }
    let hr = spec.heart_rate_hz[member];
    let morph = spec.morphology[member];
    let clean: Vec<f64> = (0..rec.frames())
        .map(|i| morph.shape((rec.phase + hr * i as f64 / rec.fps).rem_euclid(1.0)))
        .collect();
    let (m, sd) = (mean(&clean), std_dev(&clean));
    let mut out: Vec<f64> = clean.iter().map(|v| (v - m) / sd).collect();
    if let Some(snr) = spec.noise_snr_db {
        let noise = Normal::new(0.0, 10f64.powf(-snr / 20.0)).expect("finite sigma");
        for v in &mut out {
            *v += noise.sample(rng);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkinModelSpec {
    pub base_rgb: [f64; 3],
    /// Relative pulsatile modulation per channel.
    pub pulse_gain_rgb: [f64; 3],
    /// Relative amplitude of the illumination flicker shared by all channels.
    pub specular_gain: f64,
    /// Per-ROI relative spread of the base color.
    pub roi_color_spread: f64,
    /// Per-ROI relative spread of the pulse amplitude.
    pub roi_pulse_spread: f64,
    /// Independent per-ROI, per-channel relative sensor noise.
    pub sensor_noise: f64,
    pub rois: usize,
    pub fps: f64,
}

impl Default for SkinModelSpec {
    fn default() -> Self {
        let pulse = 0.004;
        Self {
            base_rgb: [170.0, 120.0, 95.0],
            pulse_gain_rgb: [0.3 * pulse, pulse, 0.6 * pulse],
            specular_gain: 0.002,
            roi_color_spread: 0.08,
            roi_pulse_spread: 0.3,
            sensor_noise: 0.0,
            rois: 100,
            fps: 50.0,
        }
    }
}

impl SkinModelSpec {
    pub fn validate(&self, duration_s: f64, max_pulse_hz: f64) -> Result<()> {
        let gains = self.pulse_gain_rgb.iter().chain([
            &self.specular_gain,
            &self.roi_color_spread,
            &self.roi_pulse_spread,
            &self.sensor_noise,
        ]);
        if gains.into_iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::Config("skin model gains must be non-negative".into()));
        }
        if self.base_rgb.iter().any(|c| !(*c > 0.0)) || self.rois == 0 {
            return Err(Error::Config("base color must be positive and rois >= 1".into()));
        }
        if duration_s < MIN_DURATION_S {
            return Err(Error::Config(format!("duration {duration_s} s below {MIN_DURATION_S} s")));
        }
        if self.fps <= 2.0 * max_pulse_hz {
            return Err(Error::Config(format!("fps {} does not resolve {max_pulse_hz} Hz", self.fps)));
        }
        Ok(())
    }
}

/// Smoothed white noise with unit variance.
fn flicker(frames: usize, rng: &mut impl Rng) -> Vec<f64> {
    let white: Vec<f64> = (0..frames + 4).map(|_| rng.sample(StandardNormal)).collect();
    let smooth: Vec<f64> = white.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    let (m, sd) = (mean(&smooth), std_dev(&smooth).max(f64::MIN_POSITIVE));
    smooth.iter().map(|v| (v - m) / sd).collect()
}

/// Renders a pulse into per-ROI mean colors:
/// `rgb = base * (1 + gain * pulse + specular * s)` with `s` shared by every
/// channel and ROI.
pub fn synth_rgb_trace(
    pulse: &[f64],
    spec: &SkinModelSpec,
    subject_id: &str,
    video_id: &str,
    rng: &mut impl Rng,
) -> Result<RgbTrace> {
    let frames = pulse.len();
    spec.validate(frames as f64 / spec.fps, HR_RANGE.1)?;
    let s = flicker(frames, rng);
    let rois: Vec<([f64; 3], f64)> = (0..spec.rois)
        .map(|_| {
            let tint: f64 = rng.sample(StandardNormal);
            let base = std::array::from_fn(|c| {
                let own: f64 = rng.sample(StandardNormal);
                spec.base_rgb[c] * (1.0 + spec.roi_color_spread * (0.8 * tint + 0.2 * own))
            });
            let amp: f64 = rng.sample(StandardNormal);
            (base, (1.0 + spec.roi_pulse_spread * amp).max(0.0))
        })
        .collect();
    let mut data = Vec::with_capacity(frames * spec.rois * 3);
    for t in 0..frames {
        for (base, amp) in &rois {
            for c in 0..3 {
                let mut rel = 1.0 + spec.pulse_gain_rgb[c] * amp * pulse[t] + spec.specular_gain * s[t];
                if spec.sensor_noise > 0.0 {
                    rel += spec.sensor_noise * rng.sample::<f64, _>(StandardNormal);
                }
                data.push(base[c] * rel);
            }
        }
    }
    RgbTrace::new(subject_id, video_id, spec.fps, spec.rois, data)
}

/// Dataset-level generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Families per relation; each family contributes one annotated kin pair.
    pub families: BTreeMap<Relation, usize>,
    pub kin_similarity: f64,
    pub noise_snr_db: Option<f64>,
    pub skin: SkinModelSpec,
    pub duration_s: (f64, f64),
    /// Draw a random cardiac phase per recording; otherwise every recording
    /// starts at phase 0.
    pub random_phase: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            families: Relation::ALL.into_iter().map(|r| (r, 10)).collect(),
            kin_similarity: 0.9,
            noise_snr_db: Some(10.0),
            skin: SkinModelSpec::default(),
            duration_s: (3.0, 5.0),
            random_phase: true,
            seed: 7,
        }
    }
}

/// One generated recording.
#[derive(Debug, Clone)]
pub struct SynthRecording {
    pub subject: Subject,
    pub trace: RgbTrace,
}

/// Everything a dataset run produces, before it is written anywhere.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub registry: Registry,
    pub families: Vec<FamilySpec>,
    pub recordings: Vec<SynthRecording>,
}

/// Builds the registry and traces. Family `i` draws from ChaCha stream `i`
/// of the seed, so families are independent of generation order.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    let (lo, hi) = cfg.duration_s;
    if !(lo >= MIN_DURATION_S && hi >= lo) {
        return Err(Error::Config(format!("duration range ({lo}, {hi}) invalid")));
    }
    let mut registry = Registry::default();
    let mut families = Vec::new();
    let mut recordings = Vec::new();
    let mut stream = 0u64;
    for (&relation, &count) in &cfg.families {
        if count == 0 {
            continue;
        }
        if count < 4 {
            return Err(Error::InsufficientData(format!("{relation}: need >= 4 families, got {count}")));
        }
        let (role_a, role_b) = relation.roles();
        let tag: String = relation.code().chars().filter(|c| *c != '-').collect();
        for i in 0..count {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream);
            stream += 1;
            let family_id = format!("{tag}{i:03}");
            let family = FamilySpec::draw(&family_id, vec![role_a, role_b], cfg.kin_similarity, cfg.noise_snr_db, &mut rng)?;
            let ids = [format!("{family_id}a"), format!("{family_id}b")];
            for (member, id) in ids.iter().enumerate() {
                let duration_s = lo + (hi - lo) * rng.random::<f64>();
                let phase = if cfg.random_phase { rng.random::<f64>() } else { 0.0 };
                let rec = Recording { fps: cfg.skin.fps, duration_s, phase };
                let pulse = synth_pulse(&family, member, &rec, &mut rng)?;
                let trace = synth_rgb_trace(&pulse, &cfg.skin, id, "v0", &mut rng)?;
                let subject = Subject { id: id.clone(), family: family_id.clone(), role: family.roles[member] };
                registry.subjects.push(subject.clone());
                recordings.push(SynthRecording { subject, trace });
            }
            registry.pairs.push(AnnotatedPair { a: ids[0].clone(), b: ids[1].clone(), relation, kin: true });
            families.push(family);
        }
    }
    registry.validate()?;
    Ok(SynthDataset { registry, families, recordings })
}

impl SynthDataset {
    /// Writes `registry.json` and `traces/<subject>.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let reg_path = dir.join("registry.json");
        self.registry.save(&reg_path)?;
        written.push(reg_path);
        for rec in &self.recordings {
            let path = dir.join("traces").join(format!("{}.csv", rec.subject.id));
            write_trace(&rec.trace, &path)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Single-member trace with a fixed heart rate, for extraction oracles.
pub fn oracle_trace(heart_rate_hz: f64, snr_db: Option<f64>, skin: &SkinModelSpec, duration_s: f64, seed: u64) -> Result<RgbTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family = FamilySpec {
        family_id: "oracle".into(),
        roles: vec![Role::Father, Role::Son],
        heart_rate_hz: vec![heart_rate_hz; 2],
        morphology: vec![Morphology::MEAN; 2],
        kin_similarity: 1.0,
        noise_snr_db: snr_db,
    };
    let rec = Recording { fps: skin.fps, duration_s, phase: rng.random() };
    let pulse = synth_pulse(&family, 0, &rec, &mut rng)?;
    synth_rgb_trace(&pulse, skin, "oracle", "v0", &mut rng)
}

/// Pure sinusoid at `freq` (for tests needing an exact tone).
pub fn tone(freq: f64, fps: f64, frames: usize) -> Vec<f64> {
    (0..frames).map(|i| (2.0 * PI * freq * i as f64 / fps).sin()).collect()
}
