//! Artifact writing. Every table is produced as CSV text; with
//! `--format json` it is converted to an array of row objects instead.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

pub struct Output {
    dir: PathBuf,
    format: Format,
    written: Vec<PathBuf>,
}

fn cell(s: &str) -> Value {
    if s == "---" || s.is_empty() {
        return Value::Null;
    }
    if let Ok(i) = s.parse::<i64>() {
        return Value::from(i);
    }
    match s.parse::<f64>() {
        Ok(f) if f.is_finite() => Value::from(f),
        _ => match s {
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            _ => Value::String(s.to_string()),
        },
    }
}

/// CSV text to an array of objects keyed by the header.
pub fn csv_to_json(text: &str) -> Result<Value> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let obj: Map<String, Value> = header.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), cell(v))).collect();
        rows.push(Value::Object(obj));
    }
    Ok(Value::Array(rows))
}

/// Builds CSV text from a header and string rows, quoting where needed.
pub fn csv_text<S: AsRef<str>>(header: &[&str], rows: impl IntoIterator<Item = Vec<S>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|s| s.as_ref()))?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

impl Output {
    pub fn new(dir: &Path, format: Format) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            format,
            written: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {}", path.display());
        self.written.push(path);
        Ok(())
    }

    /// Writes `<stem>.csv` or `<stem>.json` depending on the format.
    pub fn table(&mut self, stem: &str, csv: &str) -> Result<()> {
        match self.format {
            Format::Csv => self.put(&format!("{stem}.csv"), csv.as_bytes()),
            Format::Json => {
                let v = csv_to_json(csv)?;
                self.json(stem, &v)
            }
        }
    }

    /// CSV regardless of `--format`, for files other tools read back.
    pub fn csv(&mut self, stem: &str, csv: &str) -> Result<()> {
        self.put(&format!("{stem}.csv"), csv.as_bytes())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, stem: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.put(&format!("{stem}.json"), text.as_bytes())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_to_json_types() {
        let v = csv_to_json("a,b,c\n1,0.5,x\n---,true,\"q,r\"\n").unwrap();
        assert_eq!(
            v,
            serde_json::json!([
                {"a": 1, "b": 0.5, "c": "x"},
                {"a": null, "b": true, "c": "q,r"}
            ])
        );
    }

    #[test]
    fn quoting() {
        let t = csv_text(&["id", "v"], vec![vec!["a,b", "1"]]).unwrap();
        assert_eq!(t, "id,v\n\"a,b\",1\n");
    }
}
