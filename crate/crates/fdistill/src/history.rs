//! Training history as line-delimited JSON, one object per step.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use fdistill_core::distill::StepRecord;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryLine {
    pub step: usize,
    pub loss: f64,
    pub teacher_evals_cumulative: u64,
}

impl From<&StepRecord> for HistoryLine {
    fn from(r: &StepRecord) -> Self {
        Self { step: r.step, loss: r.loss, teacher_evals_cumulative: r.teacher_evals_cumulative }
    }
}

pub fn write_history<W: Write>(history: &[StepRecord], mut out: W) -> Result<()> {
    for record in history {
        serde_json::to_writer(&mut out, &HistoryLine::from(record))?;
        out.write_all(b"\n").map_err(|e| HarnessError::io("<history>", e))?;
    }
    Ok(())
}

pub fn save_history(history: &[StepRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_history(history, &mut out)?;
    out.flush().map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_object_per_line() {
        let history = [
            StepRecord { step: 0, loss: 1.5, teacher_evals_cumulative: 4 },
            StepRecord { step: 1, loss: 0.25, teacher_evals_cumulative: 8 },
        ];
        let mut buf = Vec::new();
        write_history(&history, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "{\"step\":0,\"loss\":1.5,\"teacher_evals_cumulative\":4}\n\
             {\"step\":1,\"loss\":0.25,\"teacher_evals_cumulative\":8}\n"
        );
        let back: Vec<HistoryLine> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back[1], HistoryLine::from(&history[1]));
    }
}
