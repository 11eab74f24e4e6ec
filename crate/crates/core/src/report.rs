//! Change tables and cross-case correlation findings over run results.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::layout::VariablePath;
use crate::minisol::ElemType;
use crate::runner::{EventResult, ExpectationResult, RunResult};
use crate::vm::TraceRecord;
use crate::word::{serialize_hex, SignedWord, U256};

pub const DEFAULT_THRESHOLD: f64 = 0.8;
pub const MIN_POINTS: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VariableChange {
    pub path: VariablePath,
    #[serde(skip)]
    pub ty: ElemType,
    #[serde(serialize_with = "serialize_hex")]
    pub initial: U256,
    #[serde(rename = "final", serialize_with = "serialize_hex")]
    pub final_value: U256,
    #[serde(serialize_with = "serialize_delta")]
    pub delta: SignedWord,
    #[serde(rename = "writes")]
    pub write_count: usize,
}

fn serialize_delta<S: serde::Serializer>(d: &SignedWord, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&d.to_hex())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Correlation {
    pub a: String,
    pub b: String,
    pub r: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseReport {
    pub name: String,
    pub changes: Vec<VariableChange>,
    pub events: Vec<EventResult>,
    pub expectations: Vec<ExpectationResult>,
    pub unknown_writes: Vec<TraceRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub cases: Vec<CaseReport>,
    pub correlations: Vec<Correlation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

impl AnalysisReport {
    pub fn all_passed(&self) -> bool {
        self.cases
            .iter()
            .all(|c| c.expectations.iter().all(|e| e.pass))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("unsupported report format `{0}` (expected text or json)")]
    UnsupportedFormat(String),
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            other => Err(ReportError::UnsupportedFormat(other.to_string())),
        }
    }
}

/// One row per watched path, sorted by path text.
pub fn summarize_changes(result: &RunResult) -> Vec<VariableChange> {
    let mut writes: BTreeMap<&VariablePath, usize> = BTreeMap::new();
    for t in &result.traces {
        *writes.entry(&t.path).or_default() += 1;
    }
    let mut rows: Vec<VariableChange> = result
        .variables
        .iter()
        .map(|v| VariableChange {
            path: v.path.clone(),
            ty: v.ty,
            initial: v.initial,
            final_value: v.final_value,
            delta: if v.ty.is_signed() {
                SignedWord::diff_signed(v.initial.as_i256(), v.final_value.as_i256())
            } else {
                SignedWord::diff_unsigned(v.initial, v.final_value)
            },
            write_count: writes.get(&v.path).copied().unwrap_or(0),
        })
        .collect();
    rows.sort_by_cached_key(|r| r.path.to_string());
    rows
}

fn as_f64(word: U256, ty: ElemType) -> f64 {
    if ty.is_signed() {
        word.as_i256().as_f64()
    } else {
        word.as_f64()
    }
}

/// Sample Pearson coefficient; `None` when either series has zero variance.
pub fn pearson(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    // Sorting first makes the float sums independent of input order.
    let mut pts = points.to_vec();
    pts.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pts {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pairs of paths, present in every result, whose final values correlate with |r| ≥ threshold.
pub fn correlate(results: &[RunResult], threshold: f64) -> Vec<Correlation> {
    if results.len() < MIN_POINTS {
        return Vec::new();
    }
    let mut common: Option<BTreeSet<String>> = None;
    for r in results {
        let paths: BTreeSet<String> = r.variables.iter().map(|v| v.path.to_string()).collect();
        common = Some(match common {
            None => paths,
            Some(c) => c.intersection(&paths).cloned().collect(),
        });
    }
    let paths: Vec<String> = common.unwrap_or_default().into_iter().collect();
    let series: Vec<Vec<f64>> = paths
        .iter()
        .map(|p| {
            results
                .iter()
                .map(|r| {
                    let v = r.variable(p).expect("path is common to all results");
                    as_f64(v.final_value, v.ty)
                })
                .collect()
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..paths.len())
        .flat_map(|i| (i + 1..paths.len()).map(move |j| (i, j)))
        .collect();
    let eval = |&(i, j): &(usize, usize)| -> Option<Correlation> {
        let pts: Vec<(f64, f64)> = series[i]
            .iter()
            .copied()
            .zip(series[j].iter().copied())
            .collect();
        let r = pearson(&pts)?;
        (r.abs() >= threshold).then(|| Correlation {
            a: paths[i].clone(),
            b: paths[j].clone(),
            r,
            n: pts.len(),
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        pairs.par_iter().filter_map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        pairs.iter().filter_map(eval).collect()
    }
}

pub fn build_report(results: &[RunResult], threshold: f64) -> AnalysisReport {
    AnalysisReport {
        cases: results
            .iter()
            .map(|r| CaseReport {
                name: r.case_name.clone(),
                changes: summarize_changes(r),
                events: r.events.clone(),
                expectations: r.expectations.clone(),
                unknown_writes: r.unknown_writes.clone(),
            })
            .collect(),
        correlations: correlate(results, threshold),
        generated_at: None,
    }
}

fn show(word: U256, ty: ElemType) -> String {
    if ty.is_signed() {
        word.as_i256().to_string()
    } else {
        word.to_string()
    }
}

fn table(out: &mut String, indent: &str, rows: &[Vec<String>]) {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    for row in rows {
        let mut line = String::from(indent);
        for (c, cell) in row.iter().enumerate() {
            if c + 1 == row.len() {
                line.push_str(cell);
            } else {
                let _ = write!(line, "{cell:<w$}  ", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
}

fn render_text(report: &AnalysisReport) -> String {
    let mut out = String::new();
    if let Some(ts) = &report.generated_at {
        let _ = writeln!(out, "generated at {ts}");
    }
    for case in &report.cases {
        let _ = writeln!(out, "case {:?}", case.name);
        for (i, e) in case.events.iter().enumerate() {
            let _ = writeln!(out, "  event {i}: {} -> {}", e.text, e.status);
        }
        let mut rows = vec![["path", "initial", "final", "delta", "writes"]
            .map(String::from)
            .to_vec()];
        rows.extend(case.changes.iter().map(|c| {
            vec![
                c.path.to_string(),
                show(c.initial, c.ty),
                show(c.final_value, c.ty),
                c.delta.to_string(),
                c.write_count.to_string(),
            ]
        }));
        table(&mut out, "  ", &rows);
        for e in &case.expectations {
            let mark = if e.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "  {mark} {} (actual {})", e.text, e.actual);
        }
        for t in &case.unknown_writes {
            let _ = writeln!(
                out,
                "  unknown write: event {} slot {:#x} offset {} width {}",
                t.event_index, t.slot, t.offset, t.width
            );
        }
    }
    out.push_str("correlations\n");
    if report.correlations.is_empty() {
        out.push_str("  none\n");
    } else {
        let mut rows = vec![["a", "b", "r", "n"].map(String::from).to_vec()];
        rows.extend(report.correlations.iter().map(|c| {
            vec![
                c.a.clone(),
                c.b.clone(),
                format!("{:.4}", c.r),
                c.n.to_string(),
            ]
        }));
        table(&mut out, "  ", &rows);
    }
    out
}

/// Deterministic bytes for either format.
pub fn render_report(report: &AnalysisReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => serde_json::to_vec(report).expect("report is always serializable"),
        ReportFormat::Text => render_text(report).into_bytes(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::VariableValue;

    fn result(name: &str, vals: &[(&str, u64)]) -> RunResult {
        RunResult {
            case_name: name.into(),
            events: vec![],
            variables: vals
                .iter()
                .map(|(p, v)| VariableValue {
                    path: VariablePath::new("C", *p),
                    ty: ElemType::Uint(256),
                    initial: U256::ZERO,
                    final_value: U256::from(*v),
                })
                .collect(),
            traces: vec![],
            expectations: vec![],
            unknown_writes: vec![],
        }
    }

    #[test]
    fn empty_report_json() {
        let bytes = render_report(&AnalysisReport::default(), ReportFormat::Json);
        assert_eq!(bytes, br#"{"cases":[],"correlations":[]}"#);
    }

    #[test]
    fn unsupported_format() {
        assert_eq!(
            "xml".parse::<ReportFormat>(),
            Err(ReportError::UnsupportedFormat("xml".into()))
        );
    }

    #[test]
    fn perfect_correlations() {
        let pts =
            |a: &[f64], b: &[f64]| a.iter().copied().zip(b.iter().copied()).collect::<Vec<_>>();
        let r = pearson(&pts(&[1., 2., 3.], &[2., 4., 6.])).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let r = pearson(&pts(&[1., 2., 3.], &[3., 2., 1.])).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&pts(&[1., 1., 1.], &[1., 2., 3.])), None);
    }

    #[test]
    fn correlate_needs_three_points() {
        let rs = vec![
            result("a", &[("x", 1), ("y", 2)]),
            result("b", &[("x", 2), ("y", 4)]),
        ];
        assert!(correlate(&rs, 0.0).is_empty());
    }

    #[test]
    fn correlate_reports_each_pair_once() {
        let rs: Vec<_> = (1..=4)
            .map(|i| result("c", &[("x", i), ("y", 2 * i), ("z", 10 - i)]))
            .collect();
        let found = correlate(&rs, 0.8);
        let names: Vec<_> = found.iter().map(|c| (c.a.as_str(), c.b.as_str())).collect();
        assert_eq!(names, [("C.x", "C.y"), ("C.x", "C.z"), ("C.y", "C.z")]);
        assert!(found[1].r < 0.0);
    }

    #[test]
    fn one_change_row_is_one_line() {
        let mut r = result("t", &[("x", 2)]);
        r.traces = vec![];
        let text =
            String::from_utf8(render_report(&build_report(&[r], 0.8), ReportFormat::Text)).unwrap();
        let rows: Vec<_> = text
            .lines()
            .filter(|l| l.trim_start().starts_with("C.x"))
            .collect();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].contains("+2"));
    }

    #[test]
    fn signed_delta_uses_declared_type() {
        let mut r = result("t", &[]);
        r.variables.push(VariableValue {
            path: VariablePath::new("C", "s"),
            ty: ElemType::Int256,
            initial: crate::word::I256::new(5).as_u256(),
            final_value: crate::word::I256::new(-3).as_u256(),
        });
        let rows = summarize_changes(&r);
        assert_eq!(rows[0].delta.to_string(), "-8");
    }
}
