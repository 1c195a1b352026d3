//! Table-shaped metric reports: rows keyed by model or strategy, columns by
//! metric name. Values keep full precision; rounding happens only in
//! [`MetricReport::to_table`].

use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

pub const BLEU: &str = "B-U";
pub const METEOR: &str = "M-R";
pub const ROUGE_L: &str = "R-L";
pub const BERT_SCORE: &str = "B-S";
pub const FAD: &str = "FAD";
pub const KL: &str = "KL";

/// Caption metric columns, in table order.
pub const CAPTION_COLUMNS: [&str; 4] = [BLEU, METEOR, ROUGE_L, BERT_SCORE];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    #[serde(flatten)]
    pub values: IndexMap<String, f64>,
    /// Set when the row could not be completed; `values` may then be empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partial: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricReport {
    pub rows: IndexMap<String, MetricRow>,
}

impl MetricReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_row<'a>(
        &mut self,
        key: impl Into<String>,
        values: impl IntoIterator<Item = (&'a str, f64)>,
    ) {
        let row = MetricRow {
            values: values
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            partial: None,
        };
        self.rows.insert(key.into(), row);
    }

    pub fn insert_partial(&mut self, key: impl Into<String>, reason: impl Into<String>) {
        self.rows.insert(
            key.into(),
            MetricRow {
                values: IndexMap::new(),
                partial: Some(reason.into()),
            },
        );
    }

    pub fn merge(&mut self, other: MetricReport) {
        self.rows.extend(other.rows);
    }

    pub fn get(&self, row: &str, column: &str) -> Option<f64> {
        self.rows.get(row)?.values.get(column).copied()
    }

    /// Union of column names in first-seen order.
    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = Vec::new();
        for row in self.rows.values() {
            for k in row.values.keys() {
                if !cols.contains(k) {
                    cols.push(k.clone());
                }
            }
        }
        cols
    }

    /// All values finite; caption metrics inside `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        for (key, row) in &self.rows {
            for (col, &v) in &row.values {
                if !v.is_finite() {
                    return Err(Error::Numerical(format!("{key}/{col} is not finite")));
                }
                if CAPTION_COLUMNS.contains(&col.as_str()) && !(0.0..=1.0).contains(&v) {
                    return Err(Error::Numerical(format!(
                        "{key}/{col} = {v} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Plain-text table with values rounded to `decimals` places.
    pub fn to_table(&self, decimals: usize) -> String {
        let cols = self.columns();
        let key_width = self.rows.keys().map(|k| k.len()).max().unwrap_or(0).max(5);
        let mut out = String::new();
        let _ = write!(out, "{:<key_width$}", "");
        for c in &cols {
            let _ = write!(out, "  {c:>8}");
        }
        out.push('\n');
        for (key, row) in &self.rows {
            let _ = write!(out, "{key:<key_width$}");
            for c in &cols {
                match row.values.get(c) {
                    Some(v) => {
                        let _ = write!(out, "  {v:>8.decimals$}");
                    }
                    None => {
                        let _ = write!(out, "  {:>8}", "-");
                    }
                }
            }
            if let Some(reason) = &row.partial {
                let _ = write!(out, "  (partial: {reason})");
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}
