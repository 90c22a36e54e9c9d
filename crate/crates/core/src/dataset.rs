//! Loading and summarising question datasets.
//!
//! Three on-disk layouts are accepted: JSONL (one object per line) and CSV/TSV
//! with a header row. Field names default to `id`, `question`, `label` and
//! `source` and can be remapped with a [`ColumnMap`].

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::domain::{DomainError, Label, Question, Source};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: {reason}")]
    Parse { row: usize, reason: String },
    #[error("row {row}: duplicate id {id:?}")]
    DuplicateId { row: usize, id: String },
    #[error("row {row}: unknown label {label:?}")]
    UnknownLabel { row: usize, label: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("question {id:?} has no gold label")]
    MissingLabel { id: String },
    #[error("unknown dataset format {0:?} (expected jsonl, csv or tsv)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Jsonl,
    Csv,
    Tsv,
}

impl DatasetFormat {
    /// Guesses the format from the file extension; unknown extensions are
    /// treated as JSONL.
    pub fn from_path(path: &Path) -> DatasetFormat {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("csv") => DatasetFormat::Csv,
            Some("tsv") | Some("tab") => DatasetFormat::Tsv,
            _ => DatasetFormat::Jsonl,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(DatasetFormat::Jsonl),
            "csv" => Ok(DatasetFormat::Csv),
            "tsv" => Ok(DatasetFormat::Tsv),
            _ => Err(DatasetError::UnknownFormat(s.to_string())),
        }
    }
}

/// Physical column names for each logical field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub id: String,
    pub question: String,
    pub label: String,
    pub source: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            id: "id".into(),
            question: "question".into(),
            label: "label".into(),
            source: "source".into(),
        }
    }
}

impl ColumnMap {
    /// Applies `logical -> physical` overrides on top of the defaults.
    pub fn from_overrides(overrides: &BTreeMap<String, String>) -> Result<Self, DatasetError> {
        let mut map = ColumnMap::default();
        for (logical, physical) in overrides {
            let slot = match logical.as_str() {
                "id" => &mut map.id,
                "question" => &mut map.question,
                "label" => &mut map.label,
                "source" => &mut map.source,
                other => {
                    return Err(DatasetError::Parse {
                        row: 0,
                        reason: format!("column map names unknown field {other:?}"),
                    })
                }
            };
            *slot = physical.clone();
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub items: Vec<Question>,
    pub source_path: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Question> {
        self.items.iter().find(|q| q.id == id)
    }

    /// Errors if any item lacks a gold label.
    pub fn require_labels(&self) -> Result<(), DatasetError> {
        match self.items.iter().find(|q| q.gold_label.is_none()) {
            Some(q) => Err(DatasetError::MissingLabel { id: q.id.clone() }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub ambiguous: usize,
    pub unambiguous: usize,
    pub unlabeled: usize,
    pub avg_question_length_words: f64,
}

impl DatasetStats {
    /// Renders the counts as a small two-column table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let rows = [
            ("#Questions", group_thousands(self.total)),
            ("Ambiguous Questions", group_thousands(self.ambiguous)),
            ("Unambiguous Questions", group_thousands(self.unambiguous)),
            (
                "Average question length (words)",
                format!("{:.2}", self.avg_question_length_words),
            ),
        ];
        out.push_str(&format!("{:<34}{}\n", "", "No. of Questions"));
        for (name, value) in rows {
            out.push_str(&format!("{name:<34}{value}\n"));
        }
        if self.unlabeled > 0 {
            out.push_str(&format!(
                "{:<34}{}\n",
                "Unlabeled Questions",
                group_thousands(self.unlabeled)
            ));
        }
        out
    }
}

fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Word count of a question: whitespace-delimited tokens of the raw text.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn stats(ds: &Dataset) -> Result<DatasetStats, DatasetError> {
    if ds.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    let mut ambiguous = 0;
    let mut unambiguous = 0;
    let mut unlabeled = 0;
    let mut words = 0usize;
    for q in &ds.items {
        match q.gold_label {
            Some(Label::Ambiguous) => ambiguous += 1,
            Some(Label::Unambiguous) => unambiguous += 1,
            None => unlabeled += 1,
        }
        words += word_count(&q.text);
    }
    Ok(DatasetStats {
        total: ds.len(),
        ambiguous,
        unambiguous,
        unlabeled,
        avg_question_length_words: words as f64 / ds.len() as f64,
    })
}

/// Loads a dataset. `format` defaults to a guess from the file extension.
pub fn load(path: &Path, format: Option<DatasetFormat>, columns: &ColumnMap) -> Result<Dataset, DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let format = format.unwrap_or_else(|| DatasetFormat::from_path(path));
    let reader = BufReader::new(file);
    let items = match format {
        DatasetFormat::Jsonl => read_jsonl(reader, columns)?,
        DatasetFormat::Csv => read_delimited(reader, b',', columns)?,
        DatasetFormat::Tsv => read_delimited(reader, b'\t', columns)?,
    };
    Ok(Dataset {
        items,
        source_path: path.display().to_string(),
    })
}

/// One raw record, before validation. Row numbers are 1-based data rows.
struct RawRow {
    row: usize,
    id: Option<String>,
    question: Option<String>,
    label: Option<String>,
    source: Option<String>,
}

fn read_jsonl<R: BufRead>(reader: R, columns: &ColumnMap) -> Result<Vec<Question>, DatasetError> {
    let mut raw = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let row = idx + 1;
        let line = line.map_err(|e| DatasetError::Parse {
            row,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            row,
            reason: format!("invalid JSON: {e}"),
        })?;
        let obj = value.as_object().ok_or_else(|| DatasetError::Parse {
            row,
            reason: "record is not a JSON object".into(),
        })?;
        let field = |name: &str| -> Result<Option<String>, DatasetError> {
            match obj.get(name) {
                None | Some(Value::Null) => Ok(None),
                Some(Value::String(s)) => Ok(Some(s.clone())),
                Some(Value::Number(n)) => Ok(Some(n.to_string())),
                Some(other) => Err(DatasetError::Parse {
                    row,
                    reason: format!("field {name:?} has unsupported type: {other}"),
                }),
            }
        };
        raw.push(RawRow {
            row,
            id: field(&columns.id)?,
            question: field(&columns.question)?,
            label: field(&columns.label)?,
            source: field(&columns.source)?,
        });
    }
    validate_rows(raw)
}

fn read_delimited<R: BufRead>(reader: R, delimiter: u8, columns: &ColumnMap) -> Result<Vec<Question>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DatasetError::Parse {
            row: 0,
            reason: format!("bad header: {e}"),
        })?
        .clone();
    let position = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (id_col, q_col, label_col, source_col) = (
        position(&columns.id),
        position(&columns.question),
        position(&columns.label),
        position(&columns.source),
    );
    if q_col.is_none() {
        return Err(DatasetError::Parse {
            row: 0,
            reason: format!("header has no {:?} column", columns.question),
        });
    }
    let mut raw = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| DatasetError::Parse {
            row,
            reason: e.to_string(),
        })?;
        let get = |col: Option<usize>| {
            col.and_then(|c| record.get(c))
                .map(str::to_string)
                .filter(|s| !s.trim().is_empty())
        };
        raw.push(RawRow {
            row,
            id: get(id_col),
            question: get(q_col),
            label: get(label_col),
            source: get(source_col),
        });
    }
    validate_rows(raw)
}

fn validate_rows(raw: Vec<RawRow>) -> Result<Vec<Question>, DatasetError> {
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(raw.len());
    for r in raw {
        let id = r.id.unwrap_or_else(|| r.row.to_string());
        let text = r.question.ok_or_else(|| DatasetError::Parse {
            row: r.row,
            reason: "missing question text".into(),
        })?;
        let gold_label = match r.label.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(l) => Some(l.parse::<Label>().map_err(|_| DatasetError::UnknownLabel {
                row: r.row,
                label: l.to_string(),
            })?),
        };
        let source = r.source.as_deref().map(Source::parse_lenient).unwrap_or_default();
        let q = Question::new(id.clone(), &text, gold_label, source).map_err(|e| match e {
            DomainError::EmptyText => DatasetError::Parse {
                row: r.row,
                reason: "empty question text".into(),
            },
            other => DatasetError::Parse {
                row: r.row,
                reason: other.to_string(),
            },
        })?;
        if !seen.insert(id.clone()) {
            return Err(DatasetError::DuplicateId { row: r.row, id });
        }
        items.push(q);
    }
    Ok(items)
}

#[derive(Serialize)]
struct JsonlRow<'a> {
    id: &'a str,
    question: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<Label>,
    source: Source,
}

/// Writes the dataset as JSONL with the default column names.
pub fn write_jsonl<W: Write>(ds: &Dataset, mut out: W) -> std::io::Result<()> {
    for q in &ds.items {
        let row = JsonlRow {
            id: &q.id,
            question: &q.text,
            label: q.gold_label,
            source: q.source,
        };
        serde_json::to_writer(&mut out, &row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
