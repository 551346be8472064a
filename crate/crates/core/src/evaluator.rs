//! ROC/AUC over pooled fold scores, relation summaries and SVG plots.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::registry::Relation;
use crate::trainer::ScoredPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    /// `(false positive rate, true positive rate)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// AUC by the rank statistic with ties counted one half. Inputs are
/// `(distance, kin)`; similarity is the negated distance.
pub fn roc_auc(scores: &[(f64, bool)]) -> Result<Roc> {
    let n_pos = scores.iter().filter(|s| s.1).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Class { positives: n_pos, negatives: n_neg });
    }
    if let Some(bad) = scores.iter().find(|s| !s.0.is_finite()) {
        return Err(Error::DegenerateSignal(format!("non-finite score {}", bad.0)));
    }
    // Most kin-like (smallest distance) first.
    let mut sorted: Vec<(f64, bool)> = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    // Count of (pos, neg) comparisons won by the positive, times two.
    let mut wins2: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0usize, 0usize);
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        // Positives in this group beat all negatives still unseen and tie
        // with the negatives of the group.
        wins2 += gp as u128 * (2 * (n_neg - fp - gn) + gn) as u128;
        tp += gp;
        fp += gn;
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
        i = j;
    }
    let auc = wins2 as f64 / (2 * n_pos * n_neg) as f64;
    Ok(Roc { points, auc, n_pos, n_neg })
}

/// Trapezoidal area under a ROC polyline.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub relation: Relation,
    pub n_folds: usize,
    pub scores: Vec<ScoredPair>,
    pub roc: Roc,
}

impl EvalReport {
    /// Pools every fold's test scores into one ROC.
    pub fn pooled(label: impl Into<String>, relation: Relation, scores: Vec<ScoredPair>) -> Result<Self> {
        let mut folds: Vec<usize> = scores.iter().map(|s| s.fold).collect();
        folds.sort_unstable();
        folds.dedup();
        let roc = roc_auc(&scores.iter().map(|s| (s.distance, s.kin)).collect::<Vec<_>>())?;
        Ok(Self { label: label.into(), relation, n_folds: folds.len(), scores, roc })
    }
}

pub fn scores_csv(scores: &[ScoredPair]) -> String {
    let mut s = String::from("fold,a,b,kin,distance\n");
    for p in scores {
        let _ = writeln!(s, "{},{},{},{},{:?}", p.fold, p.a, p.b, u8::from(p.kin), p.distance);
    }
    s
}

pub fn parse_scores_csv(text: &str) -> Result<Vec<ScoredPair>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "fold,a,b,kin,distance")) => {}
        _ => return Err(Error::format(1, "expected scores header fold,a,b,kin,distance")),
    }
    lines
        .map(|(i, line)| {
            let bad = || Error::format(i + 1, format!("malformed score row {line:?}"));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            Ok(ScoredPair {
                fold: f[0].parse().map_err(|_| bad())?,
                a: f[1].to_string(),
                b: f[2].to_string(),
                kin: match f[3] {
                    "1" => true,
                    "0" => false,
                    _ => return Err(bad()),
                },
                distance: f[4].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// One row of the results table; `auc` is `None` for relations that could
/// not be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationRow {
    pub relation: Relation,
    pub auc: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_folds: usize,
}

impl From<&EvalReport> for RelationRow {
    fn from(r: &EvalReport) -> Self {
        Self { relation: r.relation, auc: Some(r.roc.auc), n_pos: r.roc.n_pos, n_neg: r.roc.n_neg, n_folds: r.n_folds }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<RelationRow>,
    /// Mean and population standard deviation of the available AUCs.
    pub mean: f64,
    pub std: f64,
}

pub fn aggregate_relations(rows: Vec<RelationRow>) -> Result<Summary> {
    let aucs: Vec<f64> = rows.iter().filter_map(|r| r.auc).collect();
    if aucs.is_empty() {
        return Err(Error::InsufficientData("no relation produced an AUC".into()));
    }
    let n = aucs.len() as f64;
    let mean = aucs.iter().sum::<f64>() / n;
    let std = (aucs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n).sqrt();
    Ok(Summary { rows, mean, std })
}

impl Summary {
    /// `relation,auc_percent,n_pos,n_neg,n_folds`, one row per relation, then
    /// `MEAN` and `STD` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("relation,auc_percent,n_pos,n_neg,n_folds\n");
        for r in &self.rows {
            let auc = r.auc.map_or_else(|| "NA".to_string(), |a| format!("{:.2}", 100.0 * a));
            let _ = writeln!(s, "{},{auc},{},{},{}", r.relation, r.n_pos, r.n_neg, r.n_folds);
        }
        let _ = writeln!(s, "MEAN,{:.2},,,", 100.0 * self.mean);
        let _ = writeln!(s, "STD,{:.2},,,", 100.0 * self.std);
        s
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const DASHES: [&str; 3] = ["", "6,3", "2,2"];

/// SVG 1.1 overlay of one or more ROC curves with a chance diagonal.
pub fn roc_svg(curves: &[(&str, &Roc)], width: u32, height: u32) -> Result<String> {
    if curves.is_empty() {
        return Err(Error::InsufficientData("no ROC curves to plot".into()));
    }
    for (label, roc) in curves {
        if roc.points.len() < 2 {
            return Err(Error::InsufficientData(format!("ROC curve {label:?} has no points")));
        }
    }
    let (w, h) = (width as f64, height as f64);
    let (left, right, top, bottom) = (64.0, 24.0, 32.0, 56.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x = |f: f64| left + f * pw;
    let y = |t: f64| top + (1.0 - t) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{left:.2}" y="{top:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{v:.1}</text>"#,
            x(v),
            y(0.0),
            x(v),
            y(0.0) + 4.0,
            x(v),
            y(0.0) + 17.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.1}</text>"#,
            x(0.0) - 4.0,
            y(v),
            x(0.0),
            y(v),
            x(0.0) - 7.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">False positive rate</text>"#,
        left + pw / 2.0,
        h - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.2})">True positive rate</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    let _ = writeln!(
        s,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888888" stroke-dasharray="4,4"/>"##,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    for (i, (label, roc)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = DASHES[(i / PALETTE.len() + i) % DASHES.len()];
        let dash_attr = if dash.is_empty() { String::new() } else { format!(r#" stroke-dasharray="{dash}""#) };
        let pts: Vec<String> = roc.points.iter().map(|(f, t)| format!("{:.2},{:.2}", x(*f), y(*t))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2"{dash_attr} points="{}"/>"#,
            pts.join(" ")
        );
        // Legend sits in the lower right, clear of curves above the diagonal.
        let ly = top + ph - 18.0 * (curves.len() - i) as f64;
        let lx = x(1.0) - 200.0;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"{dash_attr}/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{} (AUC {:.2}%)</text>"#,
            lx,
            ly,
            lx + 24.0,
            ly,
            lx + 30.0,
            ly + 4.0,
            escape(label),
            100.0 * roc.auc
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn emit_roc_plot(curves: &[(&str, &Roc)], path: &Path) -> Result<()> {
    let svg = roc_svg(curves, 640, 480)?;
    write_atomic(path, svg.as_bytes())
}
