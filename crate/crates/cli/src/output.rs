use std::io::{self, Write};

use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Aligned columns, numbers rounded to `--digits` significant digits.
    Table,
    /// Full precision.
    Csv,
    /// Full precision, one object per row.
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    List(Vec<f64>),
    Missing,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_owned())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl From<Vec<f64>> for Cell {
    fn from(x: Vec<f64>) -> Self {
        Cell::List(x)
    }
}

/// `x` rounded to `digits` significant digits, trailing zeros dropped.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    let digits = digits.max(1);
    let exp = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let s = format!("{x:.prec$e}", prec = digits - 1);
        match s.split_once('e') {
            Some((mantissa, e)) => format!("{}e{e}", trim_zeros(mantissa.to_owned())),
            None => s,
        }
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    }
}

impl Cell {
    fn rounded(&self, digits: usize) -> String {
        match self {
            Cell::Num(x) => fmt_sig(*x, digits),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::List(v) => v.iter().map(|x| fmt_sig(*x, digits)).collect::<Vec<_>>().join(","),
            Cell::Missing => "-".into(),
        }
    }

    fn exact(&self) -> String {
        match self {
            Cell::Num(x) => format!("{x:e}"),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::List(v) => v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";"),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Num(x) => serde_json::json!(x),
            Cell::Int(n) => serde_json::json!(n),
            Cell::Text(s) => serde_json::json!(s),
            Cell::List(v) => serde_json::json!(v),
            Cell::Missing => serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    /// A single row built from `(column, value)` pairs.
    pub fn one(cells: Vec<(&'static str, Cell)>) -> Self {
        let (headers, row) = cells.into_iter().unzip();
        Self {
            headers,
            rows: vec![row],
        }
    }

    pub fn write(&self, out: &mut dyn Write, format: Format, digits: usize) -> io::Result<()> {
        match format {
            Format::Table => {
                let text: Vec<Vec<String>> = self
                    .rows
                    .iter()
                    .map(|r| r.iter().map(|c| c.rounded(digits)).collect())
                    .collect();
                let widths: Vec<usize> = self
                    .headers
                    .iter()
                    .enumerate()
                    .map(|(i, h)| text.iter().map(|r| r[i].len()).chain([h.len()]).max().unwrap_or(0))
                    .collect();
                let line = |cells: Vec<&str>| {
                    let padded: Vec<String> = cells
                        .iter()
                        .zip(&widths)
                        .map(|(c, w)| format!("{c:<w$}"))
                        .collect();
                    padded.join("  ").trim_end().to_owned()
                };
                writeln!(out, "{}", line(self.headers.clone()))?;
                for r in &text {
                    writeln!(out, "{}", line(r.iter().map(String::as_str).collect()))?;
                }
                Ok(())
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(&self.headers)?;
                for r in &self.rows {
                    w.write_record(r.iter().map(Cell::exact))?;
                }
                w.flush()
            }
            Format::Json => {
                let rows: Vec<serde_json::Value> = self
                    .rows
                    .iter()
                    .map(|r| {
                        let map: serde_json::Map<String, serde_json::Value> = self
                            .headers
                            .iter()
                            .zip(r)
                            .map(|(h, c)| (h.to_string(), c.json()))
                            .collect();
                        serde_json::Value::Object(map)
                    })
                    .collect();
                serde_json::to_writer_pretty(&mut *out, &rows)?;
                writeln!(out)
            }
        }
    }
}
