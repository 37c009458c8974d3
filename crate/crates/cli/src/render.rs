//! Output documents: a metadata header, one table and free-form notes,
//! rendered as commented CSV or as an aligned text report.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Report,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "report" => Ok(Format::Report),
            other => Err(format!("unknown format `{other}` (expected csv or report)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    /// Rate, probability or other real number.
    Num(f64),
    /// A fraction shown as a percentage in reports.
    Frac(f64),
    Int(u64),
    Text(String),
    Missing,
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

/// `digits` significant digits; fixed notation for moderate magnitudes.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.prec$e}", prec = digits - 1);
        match s.split_once('e') {
            Some((mantissa, exp)) if mantissa.contains('.') => {
                format!("{}e{exp}", mantissa.trim_end_matches('0').trim_end_matches('.'))
            }
            _ => s,
        }
    }
}

pub fn num(x: f64) -> String {
    fmt_sig(x, 9)
}

pub fn percent(frac: f64) -> String {
    format!("{} %", fmt_sig(frac * 100.0, 4))
}

impl Cell {
    fn render(&self, format: Format) -> String {
        match (self, format) {
            (Cell::Num(x), _) | (Cell::Frac(x), Format::Csv) => num(*x),
            (Cell::Frac(x), Format::Report) => percent(*x),
            (Cell::Int(n), _) => n.to_string(),
            (Cell::Text(s), _) => s.clone(),
            (Cell::Missing, Format::Csv) => String::new(),
            (Cell::Missing, Format::Report) => "-".into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Document {
    pub title: String,
    pub meta: Vec<(String, String)>,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub notes: Vec<String>,
}

impl Document {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            ..Default::default()
        }
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.meta.push((key.into(), value.to_string()));
    }

    pub fn headers(&mut self, headers: &[&str]) {
        self.headers = headers.iter().map(|h| h.to_string()).collect();
    }

    pub fn row(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Csv => self.render_csv(),
            Format::Report => Ok(self.render_report()),
        }
    }

    fn render_csv(&self) -> Result<String, CliError> {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}: {v}");
        }
        for note in &self.notes {
            let _ = writeln!(out, "# note: {note}");
        }
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&self.headers)?;
        for row in &self.rows {
            writer.write_record(row.iter().map(|c| c.render(Format::Csv)))?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| CliError::io("csv buffer", e.into_error()))?;
        out.push_str(&String::from_utf8_lossy(&bytes));
        Ok(out)
    }

    fn render_report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.title);
        let _ = writeln!(out, "{}", "=".repeat(self.title.len()));
        let key_width = self.meta.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "{k:<key_width$}  {v}");
        }
        if !self.headers.is_empty() {
            out.push('\n');
            let cells: Vec<Vec<String>> = self
                .rows
                .iter()
                .map(|r| r.iter().map(|c| c.render(Format::Report)).collect())
                .collect();
            let widths: Vec<usize> = self
                .headers
                .iter()
                .enumerate()
                .map(|(i, h)| cells.iter().map(|r| r[i].len()).chain([h.len()]).max().unwrap_or(0))
                .collect();
            let line = |items: &[String]| -> String {
                items
                    .iter()
                    .zip(&widths)
                    .map(|(s, w)| format!("{s:>w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            let _ = writeln!(out, "{}", line(&self.headers));
            for r in &cells {
                let _ = writeln!(out, "{}", line(r));
            }
        }
        if !self.notes.is_empty() {
            out.push('\n');
            for note in &self.notes {
                let _ = writeln!(out, "{note}");
            }
        }
        out
    }
}
