//! Result records and their two on-disk forms.
//!
//! The line-delimited form holds one JSON object per [`ResultRecord`]. The
//! flat table has one row per metric or check, with the columns
//!
//! ```text
//! preset,trial,seed,vocab,horizon,teacher_order,student_order,kind,entry,name,value,tolerance,passed
//! ```
//!
//! `entry` is `metric` or `check`; `tolerance` and `passed` are empty for
//! metrics. Aggregate rows leave `trial` empty. Reals are written in
//! Rust's shortest round-trip form.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Preset, Scale};
use crate::error::{HarnessError, Result};

pub const CSV_COLUMNS: [&str; 13] = [
    "preset",
    "trial",
    "seed",
    "vocab",
    "horizon",
    "teacher_order",
    "student_order",
    "kind",
    "entry",
    "name",
    "value",
    "tolerance",
    "passed",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = "<")]
    Below,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = ">")]
    Above,
}

impl Comparison {
    fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Self::AtMost => value <= threshold,
            Self::Below => value < threshold,
            Self::AtLeast => value >= threshold,
            Self::Above => value > threshold,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Self::AtMost => "<=",
            Self::Below => "<",
            Self::AtLeast => ">=",
            Self::Above => ">",
        }
    }
}

/// An asserted property: `value op threshold`. NaN never passes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub op: Comparison,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, op: Comparison, threshold: f64) -> Self {
        Self { name: name.into(), value, op, threshold, passed: op.holds(value, threshold) }
    }

    pub fn tolerance(&self) -> String {
        format!("{} {:?}", self.op.symbol(), self.threshold)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {:?} (want {})", self.name, self.value, self.tolerance())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub preset: Preset,
    /// `None` for records aggregated over trials.
    pub trial: Option<usize>,
    pub seed: u64,
    pub scale: Scale,
    /// Objective name, or `all`.
    pub kind: String,
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
}

impl ResultRecord {
    pub fn new(preset: Preset, trial: Option<usize>, seed: u64, scale: Scale, kind: impl Into<String>) -> Self {
        Self { preset, trial, seed, scale, kind: kind.into(), metrics: BTreeMap::new(), checks: Vec::new() }
    }

    pub fn metric(&mut self, name: impl Into<String>, value: f64) -> &mut Self {
        self.metrics.insert(name.into(), value);
        self
    }

    pub fn check(&mut self, name: impl Into<String>, value: f64, op: Comparison, threshold: f64) -> &mut Self {
        self.checks.push(Check::new(name, value, op, threshold));
        self
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn all_passed(records: &[ResultRecord]) -> bool {
    records.iter().all(ResultRecord::passed)
}

/// One line per (kind, check name): pass count and the worst value seen.
pub fn summary_lines(records: &[ResultRecord]) -> Vec<String> {
    let mut groups: Vec<(String, &str, Vec<&Check>)> = Vec::new();
    for r in records {
        for c in &r.checks {
            match groups.iter_mut().find(|(kind, name, _)| *kind == r.kind && *name == c.name) {
                Some((_, _, checks)) => checks.push(c),
                None => groups.push((r.kind.clone(), &c.name, vec![c])),
            }
        }
    }
    groups
        .into_iter()
        .map(|(kind, name, checks)| {
            let passed = checks.iter().filter(|c| c.passed).count();
            let worst = checks
                .iter()
                .map(|c| c.value)
                .reduce(|a, b| match checks[0].op {
                    Comparison::AtMost | Comparison::Below => a.max(b),
                    Comparison::AtLeast | Comparison::Above => a.min(b),
                })
                .unwrap_or(f64::NAN);
            let verdict = if passed == checks.len() { "PASS" } else { "FAIL" };
            format!(
                "{verdict} {kind} {name}: {passed}/{} (worst {worst:?}, want {})",
                checks.len(),
                checks[0].tolerance()
            )
        })
        .collect()
}

pub fn write_jsonl<W: Write>(records: &[ResultRecord], mut out: W) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n").map_err(|e| HarnessError::io("<results>", e))?;
    }
    Ok(())
}

pub fn write_csv<W: Write>(records: &[ResultRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        let trial = r.trial.map(|t| t.to_string()).unwrap_or_default();
        let head = [
            r.preset.name().to_string(),
            trial,
            r.seed.to_string(),
            r.scale.vocab.to_string(),
            r.scale.horizon.to_string(),
            r.scale.teacher_order.to_string(),
            r.scale.student_order.to_string(),
            r.kind.clone(),
        ];
        for (name, value) in &r.metrics {
            let tail = ["metric".into(), name.clone(), format!("{value:?}"), String::new(), String::new()];
            w.write_record(head.iter().chain(tail.iter()))?;
        }
        for c in &r.checks {
            let tail = ["check".into(), c.name.clone(), format!("{:?}", c.value), c.tolerance(), c.passed.to_string()];
            w.write_record(head.iter().chain(tail.iter()))?;
        }
    }
    w.flush().map_err(|e| HarnessError::io("<results>", e))?;
    Ok(())
}

/// The two files written for output path `path`: `.jsonl` and `.csv`.
pub fn output_files(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("jsonl"), path.with_extension("csv"))
}

/// Writes both forms next to `path`, see [`output_files`].
pub fn emit_results(records: &[ResultRecord], path: &Path) -> Result<()> {
    let (jsonl, csv_path) = output_files(path);
    let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| HarnessError::io(p, e));
    let mut out = create(&jsonl)?;
    write_jsonl(records, &mut out)?;
    out.flush().map_err(|e| HarnessError::io(&jsonl, e))?;
    write_csv(records, create(&csv_path)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> ResultRecord {
        let scale = Scale { vocab: 4, horizon: 4, teacher_order: 3, student_order: 0 };
        let mut r = ResultRecord::new(Preset::ModeStudy, Some(2), 99, scale, "kl");
        r.metric("r_llh", 19.5).metric("r_cvg", 2.75);
        r.check("residual", 3e-12, Comparison::AtMost, 1e-9);
        r
    }

    #[test]
    fn checks_evaluate_their_tolerance() {
        assert!(Check::new("a", 1.0, Comparison::AtMost, 1.0).passed);
        assert!(!Check::new("a", 1.0, Comparison::Below, 1.0).passed);
        assert!(Check::new("a", 0.0, Comparison::AtLeast, -1e-12).passed);
        assert!(!Check::new("a", f64::NAN, Comparison::AtLeast, 0.0).passed);
        assert!(!Check::new("a", f64::NAN, Comparison::AtMost, 0.0).passed);
        assert_eq!(Check::new("a", 0.5, Comparison::Above, 0.0).tolerance(), "> 0.0");
    }

    #[test]
    fn csv_layout() {
        let mut aggregate = record();
        aggregate.trial = None;
        aggregate.kind = "all".into();
        aggregate.checks[0] = Check::new("count", 3.0, Comparison::AtLeast, 4.0);
        let mut buf = Vec::new();
        write_csv(&[record(), aggregate], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_COLUMNS.join(","));
        assert_eq!(lines[1], "mode-study,2,99,4,4,3,0,kl,metric,r_cvg,2.75,,");
        assert_eq!(lines[3], "mode-study,2,99,4,4,3,0,kl,check,residual,3e-12,<= 1e-9,true");
        assert_eq!(lines[6], "mode-study,,99,4,4,3,0,all,check,count,3.0,>= 4.0,false");
        assert_eq!(lines.len(), 7);
    }

    #[test]
    fn summary_groups_by_kind_and_name() {
        let mut worse = record();
        worse.checks[0] = Check::new("residual", 2e-9, Comparison::AtMost, 1e-9);
        let lines = summary_lines(&[record(), worse, record()]);
        assert_eq!(lines, ["FAIL kl residual: 2/3 (worst 2e-9, want <= 1e-9)"]);
    }

    #[test]
    fn jsonl_layout() {
        let mut buf = Vec::new();
        write_jsonl(&[record()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let value: serde_json::Value = serde_json::from_str(text.trim_end()).unwrap();
        assert_eq!(value["preset"], "mode-study");
        assert_eq!(value["trial"], 2);
        assert_eq!(value["scale"]["student_order"], 0);
        assert_eq!(value["metrics"]["r_llh"], 19.5);
        assert_eq!(value["checks"][0]["op"], "<=");
        assert_eq!(value["checks"][0]["passed"], true);
        assert!(text.ends_with("}\n") && text.lines().count() == 1);
    }

    #[test]
    fn emit_writes_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("run");
        emit_results(&[record()], &base).unwrap();
        let (jsonl, csv_path) = output_files(&base);
        assert_eq!(std::fs::read_to_string(jsonl).unwrap().lines().count(), 1);
        assert_eq!(std::fs::read_to_string(csv_path).unwrap().lines().count(), 4);
        assert!(!all_passed(&[record(), {
            let mut r = record();
            r.check("bad", 1.0, Comparison::Below, 0.0);
            r
        }]));
    }
}
