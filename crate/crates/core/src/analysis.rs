//! Note distribution histograms, token-type succession matrices and their
//! CSV / JSON / SVG renderings.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::score::{grid_index, Score, DURATION_GRID, POSITIONS_PER_BAR, UNITS_PER_BAR};
use crate::tok::{build_vocab, Scheme, TokenSequence, TokenType};
use crate::tse::{ErrorCategory, TseReport};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("sequence is BPE-encoded; decode it first")]
    BpeNotDecoded,
    #[error("sequence scheme {found} does not match {expected}")]
    SchemeMismatch { expected: Scheme, found: Scheme },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramKind {
    OnsetPosition,
    OffsetPosition,
    Duration,
    CosineSimilarity,
}

impl HistogramKind {
    fn title(self) -> &'static str {
        match self {
            HistogramKind::OnsetPosition => "Note onset positions within bars",
            HistogramKind::OffsetPosition => "Note offset positions within bars",
            HistogramKind::Duration => "Note durations (1/8 beat)",
            HistogramKind::CosineSimilarity => "Cosine similarity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub kind: HistogramKind,
    pub bins: Vec<String>,
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn new(kind: HistogramKind, bins: Vec<String>) -> Self {
        let n = bins.len();
        Self {
            kind,
            bins,
            counts: vec![0; n],
            density: vec![0.0; n],
        }
    }

    pub fn position(kind: HistogramKind) -> Self {
        Self::new(kind, (0..POSITIONS_PER_BAR).map(|p| p.to_string()).collect())
    }

    pub fn durations() -> Self {
        Self::new(
            HistogramKind::Duration,
            DURATION_GRID.iter().map(|d| d.to_string()).collect(),
        )
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Recomputes `density` from `counts`; all-zero when there is no count.
    pub fn normalize(&mut self) {
        let total = self.total();
        self.density = self
            .counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect();
    }

    /// Index of the largest count (first on ties).
    pub fn mode(&self) -> Option<usize> {
        let max = *self.counts.iter().max()?;
        (max > 0).then(|| self.counts.iter().position(|&c| c == max).unwrap())
    }
}

pub struct NoteHistograms {
    pub onset: Histogram,
    pub offset: Histogram,
    pub duration: Histogram,
}

pub fn note_histograms(scores: &[Score]) -> NoteHistograms {
    let mut onset = Histogram::position(HistogramKind::OnsetPosition);
    let mut offset = Histogram::position(HistogramKind::OffsetPosition);
    let mut duration = Histogram::durations();
    for n in scores.iter().flat_map(|s| &s.notes) {
        onset.counts[(n.onset % UNITS_PER_BAR) as usize] += 1;
        offset.counts[(n.offset() % UNITS_PER_BAR) as usize] += 1;
        if let Some(i) = grid_index(n.duration) {
            duration.counts[i] += 1;
        }
    }
    onset.normalize();
    offset.normalize();
    duration.normalize();
    NoteHistograms {
        onset,
        offset,
        duration,
    }
}

/// Row-normalized next-type frequencies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessionMatrix {
    pub scheme: Scheme,
    pub types: Vec<TokenType>,
    pub counts: Vec<Vec<u64>>,
    pub rows: Vec<Vec<f64>>,
    /// False for rows with no observed transition (left all-zero).
    pub observed: Vec<bool>,
    /// Transitions touching ids outside `types` (unknown ids, PAD, MASK, SEP).
    pub skipped: u64,
}

impl SuccessionMatrix {
    pub fn cell(&self, from: TokenType, to: TokenType) -> f64 {
        match (self.type_index(from), self.type_index(to)) {
            (Some(i), Some(j)) => self.rows[i][j],
            _ => 0.0,
        }
    }

    pub fn type_index(&self, t: TokenType) -> Option<usize> {
        self.types.iter().position(|&x| x == t)
    }
}

pub fn succession_matrix(
    seqs: &[TokenSequence],
    scheme: Scheme,
) -> Result<SuccessionMatrix, AnalysisError> {
    let vocab = build_vocab(scheme);
    let types = scheme.content_types();
    let k = types.len();
    let mut counts = vec![vec![0u64; k]; k];
    let mut skipped = 0;
    for seq in seqs {
        if seq.is_bpe {
            return Err(AnalysisError::BpeNotDecoded);
        }
        if seq.scheme != scheme {
            return Err(AnalysisError::SchemeMismatch {
                expected: scheme,
                found: seq.scheme,
            });
        }
        let idx: Vec<Option<usize>> = seq
            .ids
            .iter()
            .map(|&id| {
                vocab
                    .spec(id)
                    .and_then(|s| types.iter().position(|&t| t == s.ttype))
            })
            .collect();
        for w in idx.windows(2) {
            match (w[0], w[1]) {
                (Some(i), Some(j)) => counts[i][j] += 1,
                _ => skipped += 1,
            }
        }
    }
    let observed: Vec<bool> = counts.iter().map(|r| r.iter().sum::<u64>() > 0).collect();
    let rows = counts
        .iter()
        .map(|r| {
            let total: u64 = r.iter().sum();
            r.iter()
                .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                .collect()
        })
        .collect();
    Ok(SuccessionMatrix {
        scheme,
        types,
        counts,
        rows,
        observed,
        skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Artifact<'a> {
    Histogram(&'a Histogram),
    Succession(&'a SuccessionMatrix),
    Tse(&'a TseReport),
}

pub fn render(artifact: Artifact<'_>, format: Format) -> String {
    match (artifact, format) {
        (Artifact::Histogram(h), Format::Json) => to_json(h),
        (Artifact::Succession(m), Format::Json) => to_json(m),
        (Artifact::Tse(r), Format::Json) => to_json(r),
        (Artifact::Histogram(h), Format::Csv) => histogram_csv(h),
        (Artifact::Succession(m), Format::Csv) => matrix_csv(m),
        (Artifact::Tse(r), Format::Csv) => tse_csv(r),
        (Artifact::Histogram(h), Format::Svg) => {
            bar_chart_svg(h.kind.title(), &h.bins, &h.density)
        }
        (Artifact::Succession(m), Format::Svg) => heatmap_svg(m),
        (Artifact::Tse(r), Format::Svg) => {
            let labels = ErrorCategory::ALL.iter().map(|c| c.column().to_string()).collect::<Vec<_>>();
            let values = ErrorCategory::ALL.iter().map(|&c| r.ratio(c)).collect::<Vec<_>>();
            bar_chart_svg("Token syntax error ratios", &labels, &values)
        }
    }
}

pub fn emit(artifact: Artifact<'_>, format: Format, path: &Path) -> Result<(), AnalysisError> {
    std::fs::write(path, render(artifact, format))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("bin,count,density\n");
    for ((bin, count), density) in h.bins.iter().zip(&h.counts).zip(&h.density) {
        let _ = writeln!(out, "{bin},{count},{density}");
    }
    out
}

fn matrix_csv(m: &SuccessionMatrix) -> String {
    let mut out = String::from("from");
    for t in &m.types {
        let _ = write!(out, ",{t}");
    }
    out.push('\n');
    for (t, row) in m.types.iter().zip(&m.rows) {
        out.push_str(t.label());
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Header `type,time,dupn,nnon,nnof` then the ratios.
pub fn tse_csv(r: &TseReport) -> String {
    let header: Vec<&str> = ErrorCategory::ALL.iter().map(|c| c.column()).collect();
    let ratios: Vec<String> = ErrorCategory::ALL
        .iter()
        .map(|&c| r.ratio(c).to_string())
        .collect();
    format!("{}\n{}\n", header.join(","), ratios.join(","))
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 320.0;

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}" font-family="sans-serif">
<text x="{}" y="18" font-size="13" text-anchor="middle">{}</text>"#,
        SVG_W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bar_chart_svg(title: &str, labels: &[String], values: &[f64]) -> String {
    let (left, right, top, bottom) = (48.0, 12.0, 30.0, 40.0);
    let plot_w = SVG_W - left - right;
    let plot_h = SVG_H - top - bottom;
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    let n = values.len().max(1) as f64;
    let slot = plot_w / n;

    let mut out = String::new();
    svg_open(&mut out, title);
    let base = top + plot_h;
    let _ = writeln!(
        out,
        r##"<line x1="{left}" y1="{base}" x2="{}" y2="{base}" stroke="#000"/>"##,
        left + plot_w
    );
    let _ = writeln!(
        out,
        r##"<line x1="{left}" y1="{top}" x2="{left}" y2="{base}" stroke="#000"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{max:.3}</text>"#,
        left - 4.0,
        top + 4.0
    );
    let label_every = (values.len() / 16).max(1);
    for (i, (&v, label)) in values.iter().zip(labels).enumerate() {
        let h = if max > 0.0 { v / max * plot_h } else { 0.0 };
        let x = left + i as f64 * slot;
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4a78b0"/>"##,
            x + slot * 0.1,
            base - h,
            slot * 0.8,
            h
        );
        if i % label_every == 0 {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{}" font-size="9" text-anchor="middle">{}</text>"#,
                x + slot / 2.0,
                base + 12.0,
                escape(label)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

fn heatmap_svg(m: &SuccessionMatrix) -> String {
    let (left, top) = (80.0, 30.0);
    let k = m.types.len().max(1) as f64;
    let cell = ((SVG_W - left - 10.0) / k).min((SVG_H - top - 50.0) / k);

    let mut out = String::new();
    svg_open(&mut out, &format!("Token type succession ({})", m.scheme));
    for (i, (t, row)) in m.types.iter().zip(&m.rows).enumerate() {
        let y = top + i as f64 * cell;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" font-size="9" text-anchor="end">{}</text>"#,
            left - 4.0,
            y + cell / 2.0 + 3.0,
            t
        );
        for (j, &v) in row.iter().enumerate() {
            let level = 255 - (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({level},{level},{level})"/>"#,
                left + j as f64 * cell
            );
        }
    }
    for (j, t) in m.types.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="9" text-anchor="middle">{}</text>"#,
            left + j as f64 * cell + cell / 2.0,
            top + k * cell + 12.0,
            t
        );
    }
    out.push_str("</svg>\n");
    out
}
