//! Raw per-ROI RGB traces and their CSV file format.
//!
//! A trace file is UTF-8 with LF line endings. The first line is a comment
//! header, followed by one line per frame holding `R,G,B` triples for every
//! ROI in order:
//!
//! ```text
//! # pulsekin-trace v1 fps=50 subject=s01 video=v0 rois=2 frames=3
//! 101.2,80.5,60.25,99.5,79,61
//! ...
//! ```
//!
//! Values are written with nine significant digits (C `%.9g`), which is the
//! canonical form: reading and re-writing a canonical file reproduces it byte
//! for byte.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const TRACE_MAGIC: &str = "pulsekin-trace";
pub const TRACE_VERSION: &str = "v1";

/// Shortest trace admitted to training and evaluation.
pub const MIN_DURATION_S: f64 = 2.5;

#[derive(Debug, Clone, PartialEq)]
pub struct RgbTrace {
    pub subject_id: String,
    pub video_id: String,
    pub fps: f64,
    rois: usize,
    frames: usize,
    /// frames × rois × 3, row-major.
    data: Vec<f64>,
}

impl RgbTrace {
    /// Builds a trace from a frames × rois × 3 buffer, checking the structural
    /// invariants but not the minimum duration.
    pub fn new(
        subject_id: impl Into<String>,
        video_id: impl Into<String>,
        fps: f64,
        rois: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        let video_id = video_id.into();
        check_id("subject", &subject_id)?;
        check_id("video", &video_id)?;
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::format(1, format!("fps must be positive, got {fps}")));
        }
        if rois == 0 {
            return Err(Error::format(1, "rois must be at least 1"));
        }
        if data.len() % (rois * 3) != 0 {
            return Err(Error::Shape(format!(
                "buffer of {} values is not a multiple of rois*3 = {}",
                data.len(),
                rois * 3
            )));
        }
        let frames = data.len() / (rois * 3);
        if frames < 2 {
            return Err(Error::format(1, "frames must be at least 2"));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            let row = idx / (rois * 3);
            return Err(Error::Data {
                row,
                column: idx % (rois * 3),
            });
        }
        Ok(Self {
            subject_id,
            video_id,
            fps,
            rois,
            frames,
            data,
        })
    }

    pub fn rois(&self) -> usize {
        self.rois
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn duration_s(&self) -> f64 {
        self.frames as f64 / self.fps
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn value(&self, frame: usize, roi: usize, color: usize) -> f64 {
        self.data[(frame * self.rois + roi) * 3 + color]
    }

    /// One color column (0 = R, 1 = G, 2 = B) of one ROI.
    pub fn column(&self, roi: usize, color: usize) -> Result<Vec<f64>> {
        if roi >= self.rois {
            return Err(Error::Index {
                index: roi,
                len: self.rois,
            });
        }
        Ok((0..self.frames)
            .map(|f| self.value(f, roi, color))
            .collect())
    }

    /// The R, G and B columns of one ROI.
    pub fn rgb(&self, roi: usize) -> Result<[Vec<f64>; 3]> {
        Ok([
            self.column(roi, 0)?,
            self.column(roi, 1)?,
            self.column(roi, 2)?,
        ])
    }

    /// Single-ROI trace whose colors are the mean over all ROIs per frame.
    pub fn holistic(&self) -> RgbTrace {
        let mut data = Vec::with_capacity(self.frames * 3);
        for f in 0..self.frames {
            for c in 0..3 {
                let sum: f64 = (0..self.rois).map(|r| self.value(f, r, c)).sum();
                data.push(sum / self.rois as f64);
            }
        }
        RgbTrace {
            subject_id: self.subject_id.clone(),
            video_id: self.video_id.clone(),
            fps: self.fps,
            rois: 1,
            frames: self.frames,
            data,
        }
    }

    pub fn scaled(&self, factor: f64) -> RgbTrace {
        RgbTrace {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    pub fn check_duration(&self, minimum: f64) -> Result<()> {
        let seconds = self.duration_s();
        if seconds < minimum {
            return Err(Error::Duration { seconds, minimum });
        }
        Ok(())
    }

    pub fn header_line(&self) -> String {
        format!(
            "# {TRACE_MAGIC} {TRACE_VERSION} fps={} subject={} video={} rois={} frames={}",
            fmt_g9(self.fps),
            self.subject_id,
            self.video_id,
            self.rois,
            self.frames
        )
    }

    /// Canonical text encoding.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 10);
        out.push_str(&self.header_line());
        out.push('\n');
        for row in self.data.chunks(self.rois * 3) {
            push_row(&mut out, row);
        }
        out
    }
}

pub(crate) fn push_row(out: &mut String, row: &[f64]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&fmt_g9(*v));
    }
    out.push('\n');
}

fn check_id(kind: &str, id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(|c| c.is_whitespace() || c == ',' || c == '=') {
        return Err(Error::format(1, format!("invalid {kind} id {id:?}")));
    }
    Ok(())
}

/// Formats like C's `%.9g`.
pub fn fmt_g9(v: f64) -> String {
    fmt_g(v, 9)
}

pub(crate) fn fmt_g(v: f64, precision: usize) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", precision - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if exp < -4 || exp >= precision as i32 {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (precision as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug)]
pub(crate) struct Header {
    pub fields: Vec<(String, String)>,
}

impl Header {
    pub fn parse(line: &str, magic: &str) -> Result<Self> {
        let rest = line
            .strip_prefix("# ")
            .ok_or_else(|| Error::format(1, "header must start with '# '"))?;
        let mut tokens = rest.split(' ');
        if tokens.next() != Some(magic) {
            return Err(Error::format(1, format!("expected `{magic}` header")));
        }
        match tokens.next() {
            Some(TRACE_VERSION) => {}
            other => {
                return Err(Error::format(
                    1,
                    format!("unsupported version {:?}", other.unwrap_or("")),
                ))
            }
        }
        let mut fields = Vec::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::format(1, format!("malformed header field {tok:?}")))?;
            if fields.iter().any(|(key, _)| key == k) {
                return Err(Error::format(1, format!("duplicate header field {k}")));
            }
            fields.push((k.to_string(), v.to_string()));
        }
        Ok(Self { fields })
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::format(1, format!("missing header field {key}")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| Error::format(1, format!("{key}={v} is not a non-negative integer")))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| Error::format(1, format!("{key}={v} is not a number")))
    }
}

/// Parses numeric rows following the header. `row_width` values per line,
/// `rows` lines. Non-finite cells are reported as [`Error::Data`].
pub(crate) fn parse_rows(body: &str, rows: usize, row_width: usize) -> Result<Vec<f64>> {
    let mut data = Vec::with_capacity(rows * row_width);
    let mut seen = 0;
    for (i, line) in body.split_terminator('\n').enumerate() {
        let line_no = i + 2;
        if seen == rows {
            return Err(Error::format(line_no, format!("more than {rows} data rows")));
        }
        if line.ends_with('\r') {
            return Err(Error::format(line_no, "CR line endings are not allowed"));
        }
        let mut count = 0;
        for (col, cell) in line.split(',').enumerate() {
            if col >= row_width {
                count = col + 1;
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::format(line_no, format!("cell {col} {cell:?} is not a number"))
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    row: seen,
                    column: col,
                });
            }
            data.push(v);
            count = col + 1;
        }
        if count != row_width {
            return Err(Error::format(
                line_no,
                format!("expected {row_width} values, found {count}"),
            ));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::format(
            seen + 2,
            format!("expected {rows} data rows, found {seen}"),
        ));
    }
    Ok(data)
}

/// Parses trace text without enforcing the minimum duration.
pub fn parse_trace(text: &str) -> Result<RgbTrace> {
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    let header = Header::parse(first, TRACE_MAGIC)?;
    let fps = header.f64("fps")?;
    let subject = header.get("subject")?;
    let video = header.get("video")?;
    let rois = header.usize("rois")?;
    let frames = header.usize("frames")?;
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::format(1, format!("fps must be positive, got {fps}")));
    }
    if rois == 0 || frames < 2 {
        return Err(Error::format(1, "need rois >= 1 and frames >= 2"));
    }
    let data = parse_rows(body, frames, rois * 3)?;
    RgbTrace::new(subject, video, fps, rois, data)
}

/// Reads and validates a trace file, rejecting traces shorter than
/// [`MIN_DURATION_S`].
pub fn ingest_trace(path: impl AsRef<Path>) -> Result<RgbTrace> {
    ingest_trace_with(path, MIN_DURATION_S)
}

pub fn ingest_trace_with(path: impl AsRef<Path>, min_duration_s: f64) -> Result<RgbTrace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let trace = parse_trace(&text)?;
    trace.check_duration(min_duration_s)?;
    Ok(trace)
}

pub fn write_trace(trace: &RgbTrace, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), trace.to_csv().as_bytes())
}

/// Renders a header-plus-rows CSV body. Shared by the rPPG cache format.
pub(crate) fn render_table(header: &str, rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{header}");
    for row in rows {
        push_row(&mut out, &row);
    }
    out
}
