//! Tables in the layout of the subgroup sign-test tables.

use std::fmt::Write;

use anyhow::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Markdown,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            other => bail!("unknown report format `{other}`"),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Markdown => "md",
        }
    }
}

/// A cell with its display precision.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    /// Percentage, 0 decimals with a `%` sign.
    Share(f64),
    /// p-value, 2 decimals.
    PValue(f64),
    Count(usize),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Share(v) => format!("{v:.0}%"),
            Cell::PValue(v) => format!("{v:.2}"),
            Cell::Count(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub label: String,
    pub values: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub footnote: String,
}

impl ReportTable {
    pub fn new(title: impl Into<String>, columns: Vec<String>) -> Self {
        Self {
            title: title.into(),
            columns,
            rows: Vec::new(),
            footnote: String::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, values: Vec<Cell>) -> Result<()> {
        if values.len() != self.columns.len() {
            bail!("row has {} cells for {} columns", values.len(), self.columns.len());
        }
        self.rows.push(Row {
            label: label.into(),
            values,
        });
        Ok(())
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => self.render_csv(),
            Format::Markdown => Ok(self.render_markdown()),
        }
    }

    /// Header row first; title and footnote are dropped.
    fn render_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![String::new()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.label.clone()];
            rec.extend(row.values.iter().map(Cell::render));
            w.write_record(&rec)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    fn render_markdown(&self) -> String {
        let mut out = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(out, "## {}\n", self.title);
        }
        let _ = writeln!(out, "| | {} |", self.columns.join(" | "));
        let _ = writeln!(out, "|---|{}", "---:|".repeat(self.columns.len()));
        for row in &self.rows {
            let cells: Vec<String> = row.values.iter().map(Cell::render).collect();
            let _ = writeln!(out, "| {} | {} |", row.label, cells.join(" | "));
        }
        if !self.footnote.is_empty() {
            let _ = writeln!(out, "\n{}", self.footnote);
        }
        out
    }
}
