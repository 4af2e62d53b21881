//! Plain-text model files.
//!
//! ```text
//! fdistill-model 1
//! vocab 3
//! horizon 2
//! order 1
//! stationary false
//! rows 4
//! 0.0000000000000000e0 -1.2500000000000000e0 -inf
//! ...
//! ```
//!
//! One logits row per line, in the model's row order. Reals are written
//! with 17 significant digits, so every logit (and hence every
//! conditional) reads back bit-for-bit. Blank lines and lines starting
//! with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fdistill_core::model::Autoregressive;
use fdistill_core::{TabularARModel, Vocab};

use crate::error::{HarnessError, Result};

const MAGIC: &str = "fdistill-model";
const VERSION: u32 = 1;

pub fn to_model_string(model: &TabularARModel) -> String {
    let v = model.vocab().size();
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "vocab {v}");
    let _ = writeln!(out, "horizon {}", model.horizon());
    let _ = writeln!(out, "order {}", model.order());
    let _ = writeln!(out, "stationary {}", model.is_stationary());
    let _ = writeln!(out, "rows {}", model.num_rows());
    for row in model.logits().chunks(v) {
        let cells: Vec<String> = row.iter().map(|z| format!("{z:.16e}")).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a Path,
    last: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, line: usize, message: impl Into<String>) -> HarnessError {
        HarnessError::Format { path: self.path.to_path_buf(), line, message: message.into() }
    }

    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        for (i, raw) in self.inner.by_ref() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.last = i + 1;
            return Some((i + 1, line));
        }
        None
    }

    fn field(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, line) = self.next_content().ok_or_else(|| self.err(self.last + 1, format!("missing `{key}`")))?;
        match line.split_once(char::is_whitespace) {
            Some((k, value)) if k == key => Ok((n, value.trim())),
            _ => Err(self.err(n, format!("expected `{key} <value>`, found `{line}`"))),
        }
    }

    fn number<T: std::str::FromStr>(&mut self, key: &str) -> Result<(usize, T)> {
        let (n, value) = self.field(key)?;
        let parsed = value.parse().map_err(|_| self.err(n, format!("`{key}` is not a valid number: `{value}`")))?;
        Ok((n, parsed))
    }
}

/// Parses a model document; `path` only labels error messages.
pub fn parse_model(text: &str, path: &Path) -> Result<TabularARModel> {
    let mut lines = Lines { inner: text.lines().enumerate(), path, last: 0 };
    let (n, version) = lines.field(MAGIC)?;
    if version != VERSION.to_string() {
        return Err(lines.err(n, format!("unsupported format version `{version}`")));
    }
    let (vocab_line, vocab): (_, usize) = lines.number("vocab")?;
    let (_, horizon): (_, usize) = lines.number("horizon")?;
    let (order_line, order): (_, usize) = lines.number("order")?;
    let (n, flag) = lines.field("stationary")?;
    let stationary = match flag {
        "true" => true,
        "false" => false,
        other => return Err(lines.err(n, format!("`stationary` must be true or false, found `{other}`"))),
    };
    let (rows_line, rows): (_, usize) = lines.number("rows")?;

    let vocab = Vocab::new(vocab).map_err(|e| lines.err(vocab_line, e.to_string()))?;
    let shape =
        TabularARModel::zeros(vocab, horizon, order, stationary).map_err(|e| lines.err(order_line, e.to_string()))?;
    if rows != shape.num_rows() {
        return Err(lines.err(rows_line, format!("this shape has {} rows, the file declares {rows}", shape.num_rows())));
    }

    let v = vocab.size();
    let mut logits = Vec::with_capacity(rows * v);
    for r in 0..rows {
        let (n, line) =
            lines.next_content().ok_or_else(|| lines.err(lines.last + 1, format!("missing logits row {r}")))?;
        let before = logits.len();
        for cell in line.split_whitespace() {
            let z: f64 = cell.parse().map_err(|_| lines.err(n, format!("not a real number: `{cell}`")))?;
            logits.push(z);
        }
        if logits.len() - before != v {
            return Err(lines.err(n, format!("row {r} has {} entries, expected {v}", logits.len() - before)));
        }
    }
    if let Some((n, _)) = lines.next_content() {
        return Err(lines.err(n, "unexpected content after the last row"));
    }
    TabularARModel::from_logits(vocab, horizon, order, stationary, logits)
        .map_err(|e| lines.err(rows_line, e.to_string()))
}

pub fn save_model(model: &TabularARModel, path: &Path) -> Result<()> {
    fs::write(path, to_model_string(model)).map_err(|e| HarnessError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<TabularARModel> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_model(&text, path)
}
