//! Matrix and score-table CSV.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::format_sig9;

/// Header `node,edge0,...`, then one row per node.
pub fn matrix_csv(m: &Tensor) -> Result<String> {
    table(m, "node", "edge")
}

/// Header `sample,score_0,...`, then one row per sample.
pub fn scores_csv(scores: &Tensor) -> Result<String> {
    table(scores, "sample", "score_")
}

fn table(m: &Tensor, index: &str, prefix: &str) -> Result<String> {
    let (rows, cols) = m.dims2()?;
    let mut s = String::from(index);
    for j in 0..cols {
        write!(s, ",{prefix}{j}").expect("writing to a String");
    }
    s.push('\n');
    for i in 0..rows {
        write!(s, "{i}").expect("writing to a String");
        for j in 0..cols {
            write!(s, ",{}", format_sig9(m.at2(i, j))).expect("writing to a String");
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn parse_matrix_csv(text: &str) -> Result<Tensor> {
    parse_table(text, "node", "edge")
}

pub fn parse_scores_csv(text: &str) -> Result<Tensor> {
    parse_table(text, "sample", "score_")
}

/// Strict reader for tables written by [`matrix_csv`] and
/// [`scores_csv`]: the header must match, row indices must count up
/// from zero and every value must be finite. Errors carry the byte
/// offset of the offending line.
fn parse_table(text: &str, index: &str, prefix: &str) -> Result<Tensor> {
    let mut offset = 0;
    let mut lines = text.split_inclusive('\n').map(|l| {
        let start = offset;
        offset += l.len();
        (start, l.trim_end_matches(['\n', '\r']))
    });
    let (_, header) = lines.next().ok_or_else(|| Error::format(0, "empty table"))?;
    let mut names = header.split(',');
    if names.next() != Some(index) {
        return Err(Error::format(0, format!("header must start with '{index}'")));
    }
    let mut cols = 0;
    for (j, name) in names.enumerate() {
        if name.strip_prefix(prefix) != Some(&j.to_string()) {
            return Err(Error::format(0, format!("column {} should be '{prefix}{j}', found '{name}'", j + 1)));
        }
        cols += 1;
    }
    if cols == 0 {
        return Err(Error::format(0, "table has no value columns"));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (start, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let idx = fields.next().unwrap_or_default();
        if idx.parse::<usize>().ok() != Some(rows) {
            return Err(Error::format(start, format!("expected row index {rows}, found '{idx}'")));
        }
        let before = data.len();
        for f in fields {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::format(start, format!("row {rows}: '{f}' is not a number")))?;
            if !v.is_finite() {
                return Err(Error::format(start, format!("row {rows}: non-finite value")));
            }
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::format(
                start,
                format!("row {rows} has {} values, expected {cols}", data.len() - before),
            ));
        }
        rows += 1;
    }
    Tensor::new(&[rows, cols], data)
}
