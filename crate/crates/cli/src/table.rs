//! Tabular output with lossless CSV and JSON encodings.

use std::io::Write;

use serde_json::{json, Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Metadata echo, a header and rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

/// 17 significant digits in scientific notation, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Default::default()
        }
    }

    /// Two-column `name,value` table.
    pub fn key_value() -> Self {
        Table::new(&["name", "value"])
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn entry(&mut self, name: &str, value: f64) {
        self.push(vec![Cell::Text(name.to_string()), Cell::Num(value)]);
    }

    /// Value of a `name,value` row.
    pub fn lookup(&self, name: &str) -> Option<f64> {
        self.rows.iter().find_map(|r| match r.as_slice() {
            [Cell::Text(n), Cell::Num(v)] if n == name => Some(*v),
            _ => None,
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = out;
        for (k, v) in &self.metadata {
            writeln!(out, "# {k} = {v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| match c {
                Cell::Num(v) => fmt_f64(*v),
                Cell::Text(t) => t.clone(),
            }))?;
        }
        w.flush()
    }

    pub fn to_json(&self) -> Value {
        let mut meta = Map::new();
        for (k, v) in &self.metadata {
            meta.insert(k.clone(), Value::String(v.clone()));
        }
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                Value::Array(
                    r.iter()
                        .map(|c| match c {
                            Cell::Num(v) if v.is_finite() => json!(v),
                            Cell::Num(_) => Value::Null,
                            Cell::Text(t) => Value::String(t.clone()),
                        })
                        .collect(),
                )
            })
            .collect();
        json!({ "metadata": meta, "columns": self.columns, "rows": rows })
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer_pretty(&mut out, &self.to_json())?;
        writeln!(out)
    }

    /// Parses output of [`Table::write_csv`].
    pub fn read_csv(text: &str) -> Result<Table, String> {
        let mut metadata = Vec::new();
        let mut body = String::new();
        for line in text.lines() {
            match line.strip_prefix("# ") {
                Some(m) => {
                    let (k, v) = m.split_once(" = ").ok_or_else(|| format!("bad metadata line '{line}'"))?;
                    metadata.push((k.to_string(), v.to_string()));
                }
                None => {
                    body.push_str(line);
                    body.push('\n');
                }
            }
        }
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let columns = r
            .headers()
            .map_err(|e| e.to_string())?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            rows.push(
                rec.iter()
                    .map(|f| match f.parse::<f64>() {
                        Ok(v) => Cell::Num(v),
                        Err(_) => Cell::Text(f.to_string()),
                    })
                    .collect(),
            );
        }
        Ok(Table { metadata, columns, rows })
    }

    /// Parses output of [`Table::write_json`]; `null` reads back as NaN.
    pub fn read_json(text: &str) -> Result<Table, String> {
        let v: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let metadata = v["metadata"]
            .as_object()
            .ok_or("missing metadata")?
            .iter()
            .map(|(k, v)| (k.clone(), v.as_str().unwrap_or_default().to_string()))
            .collect();
        let columns = v["columns"]
            .as_array()
            .ok_or("missing columns")?
            .iter()
            .map(|c| c.as_str().unwrap_or_default().to_string())
            .collect();
        let rows = v["rows"]
            .as_array()
            .ok_or("missing rows")?
            .iter()
            .map(|r| {
                r.as_array()
                    .map(|cells| {
                        cells
                            .iter()
                            .map(|c| match c {
                                Value::Number(n) => Cell::Num(n.as_f64().unwrap_or(f64::NAN)),
                                Value::String(s) => Cell::Text(s.clone()),
                                _ => Cell::Num(f64::NAN),
                            })
                            .collect()
                    })
                    .ok_or("row is not an array")
            })
            .collect::<Result<_, _>>()?;
        Ok(Table { metadata, columns, rows })
    }
}
