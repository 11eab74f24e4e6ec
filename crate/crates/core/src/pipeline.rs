//! Entry points shared by the command-line tool and the HTTP server, so both
//! produce byte-identical output for the same inputs.

use serde::Serialize;

use crate::dbdl::{parse_dbdl, DbdlError, Diagnostic, TestSuite};
use crate::layout::compute_layout;
use crate::minisol::{parse_source, SourceError, SourceUnit};
use crate::report::{build_report, render_report, AnalysisReport, ReportFormat, DEFAULT_THRESHOLD};
use crate::runner::{run_suite, RunError, RunOptions, RunResult};
use crate::word::to_hex;

/// One input problem, flattened for machine-readable output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Problem {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub col: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
}

impl Problem {
    fn plain(kind: &str, message: String) -> Self {
        Problem {
            kind: kind.into(),
            message,
            file: None,
            line: None,
            col: None,
            case: None,
            subject: None,
        }
    }

    fn at(kind: &str, file: &str, (line, col): (usize, usize), message: String) -> Self {
        Problem {
            file: Some(file.into()),
            line: Some(line),
            col: Some(col),
            ..Problem::plain(kind, message)
        }
    }
}

impl std::fmt::Display for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{file}:")?;
        }
        if let Some(case) = &self.case {
            write!(f, "case {case:?}: ")?;
        }
        write!(f, "{}", self.message)
    }
}

impl From<&SourceError> for Problem {
    fn from(e: &SourceError) -> Self {
        let kind = match e {
            SourceError::Syntax { .. } => "Syntax",
            SourceError::DuplicateName { .. } => "DuplicateName",
            SourceError::UnknownName { .. } => "UnknownName",
        };
        Problem {
            line: Some(e.position().0),
            col: Some(e.position().1),
            ..Problem::plain(kind, e.to_string())
        }
    }
}

impl From<&DbdlError> for Problem {
    fn from(e: &DbdlError) -> Self {
        let kind = match e {
            DbdlError::Syntax { .. } => "Syntax",
            DbdlError::DuplicateCase { .. } => "DuplicateCase",
            DbdlError::UnknownAlias { .. } => "UnknownAlias",
        };
        Problem {
            line: Some(e.position().0),
            col: Some(e.position().1),
            ..Problem::plain(kind, e.to_string())
        }
    }
}

impl From<&Diagnostic> for Problem {
    fn from(d: &Diagnostic) -> Self {
        Problem {
            case: Some(d.case.clone()),
            subject: Some(d.subject.clone()),
            ..Problem::plain(&format!("{:?}", d.kind), d.message.clone())
        }
    }
}

/// Input rejected before or while running; carries every problem found.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InputError {
    pub error: String,
    pub diagnostics: Vec<Problem>,
}

impl InputError {
    fn new(error: &str, diagnostics: Vec<Problem>) -> Self {
        InputError {
            error: error.into(),
            diagnostics,
        }
    }

    /// An error carrying one diagnostic of the given kind.
    pub fn single(kind: &str, message: String) -> Self {
        InputError::new(&message.clone(), vec![Problem::plain(kind, message)])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)?;
        for d in &self.diagnostics {
            write!(f, "\n  {d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for InputError {}

impl From<RunError> for InputError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Invalid(diags) => InputError::new(
                "test suite failed validation",
                diags.iter().map(Problem::from).collect(),
            ),
            other => InputError::new(
                "run refused",
                vec![Problem::plain("Run", other.to_string())],
            ),
        }
    }
}

pub fn load_source(file: &str, text: &str) -> Result<SourceUnit, InputError> {
    parse_source(text).map_err(|errs| {
        InputError::new(
            "contract source failed to parse",
            errs.iter()
                .map(|e| Problem::at(&Problem::from(e).kind, file, e.position(), e.to_string()))
                .collect(),
        )
    })
}

pub fn load_suite(file: &str, text: &str) -> Result<TestSuite, InputError> {
    parse_dbdl(text).map_err(|errs| {
        InputError::new(
            "test suite failed to parse",
            errs.iter()
                .map(|e| Problem::at(&Problem::from(e).kind, file, e.position(), e.to_string()))
                .collect(),
        )
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VariableRow {
    pub contract: String,
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
    pub slot: String,
    pub offset: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VariableListing {
    pub variables: Vec<VariableRow>,
}

/// Every state variable of every contract with its static placement.
pub fn list_variables(unit: &SourceUnit) -> Result<VariableListing, InputError> {
    let mut variables = Vec::new();
    let mut problems = Vec::new();
    for c in &unit.contracts {
        match compute_layout(c) {
            Ok(layout) => variables.extend(layout.vars.iter().map(|v| VariableRow {
                contract: c.name.clone(),
                name: v.name.clone(),
                ty: v.ty.to_string(),
                slot: to_hex(v.base.slot),
                offset: v.base.offset,
            })),
            Err(e) => {
                problems.push(Problem {
                    subject: Some(c.name.clone()),
                    ..Problem::plain("UnsupportedLayout", e.to_string())
                });
            }
        }
    }
    if problems.is_empty() {
        Ok(VariableListing { variables })
    } else {
        Err(InputError::new("storage layout failed", problems))
    }
}

pub fn render_variables(listing: &VariableListing, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => serde_json::to_vec(listing).expect("serializable"),
        ReportFormat::Text => {
            let rows: Vec<[String; 5]> =
                std::iter::once(["contract", "name", "type", "slot", "offset"].map(String::from))
                    .chain(listing.variables.iter().map(|v| {
                        [
                            v.contract.clone(),
                            v.name.clone(),
                            v.ty.clone(),
                            v.slot.clone(),
                            v.offset.to_string(),
                        ]
                    }))
                    .collect();
            let widths: Vec<usize> = (0..5)
                .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
                .collect();
            let mut out = String::new();
            for r in &rows {
                let line: Vec<String> = r
                    .iter()
                    .zip(&widths)
                    .map(|(cell, w)| format!("{cell:<w$}"))
                    .collect();
                out.push_str(line.join("  ").trim_end());
                out.push('\n');
            }
            out.into_bytes()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineOptions {
    pub run: RunOptions,
    pub threshold: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            run: RunOptions::default(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl PipelineOptions {
    /// Rejects option values the runner or analyzer cannot honor.
    pub fn check(&self) -> Result<(), InputError> {
        let mut problems = Vec::new();
        if !(0.0..=1.0).contains(&self.threshold) {
            problems.push(Problem::plain(
                "Options",
                format!("threshold {} is outside [0, 1]", self.threshold),
            ));
        }
        if self.run.step_limit == 0 {
            problems.push(Problem::plain(
                "Options",
                "step limit must be positive".into(),
            ));
        }
        if self.run.jobs == 0 {
            problems.push(Problem::plain("Options", "jobs must be positive".into()));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(InputError::new("invalid options", problems))
        }
    }
}

pub struct PipelineOutput {
    pub results: Vec<RunResult>,
    pub report: AnalysisReport,
}

impl PipelineOutput {
    pub fn render(&self, format: ReportFormat) -> Vec<u8> {
        render_report(&self.report, format)
    }
}

/// Runs a parsed suite and analyzes the results.
pub fn run_pipeline(
    sources: &[SourceUnit],
    suite: &TestSuite,
    options: &PipelineOptions,
) -> Result<PipelineOutput, InputError> {
    options.check()?;
    let results = run_suite(suite, sources, &options.run)?;
    let report = build_report(&results, options.threshold);
    Ok(PipelineOutput { results, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listing_names_slots() {
        let unit =
            load_source("c.msol", "contract C { uint128 a; uint128 b; uint256 c; }").unwrap();
        let l = list_variables(&unit).unwrap();
        let slots: Vec<_> = l
            .variables
            .iter()
            .map(|v| (v.name.as_str(), v.slot.as_str(), v.offset))
            .collect();
        assert_eq!(slots, [("a", "0x0", 0), ("b", "0x0", 16), ("c", "0x1", 0)]);
        let text = String::from_utf8(render_variables(&l, ReportFormat::Text)).unwrap();
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn parse_error_has_position() {
        let err = load_source("c.msol", "contract C {\n  uint256 ;\n}").unwrap_err();
        let d = &err.diagnostics[0];
        assert_eq!((d.line, d.col), (Some(2), Some(11)));
        assert_eq!(d.file.as_deref(), Some("c.msol"));
        assert!(err.to_json().starts_with(r#"{"error":"#));
    }
}
