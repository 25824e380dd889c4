//! In-memory column tables and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Real,
    Integer,
    Category,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Real(Vec<f64>),
    Integer(Vec<i64>),
    /// Codes `0..levels.len()`, levels in order of first appearance.
    Category { codes: Vec<usize>, levels: Vec<String> },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Real(v) => v.len(),
            Column::Integer(v) => v.len(),
            Column::Category { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnType {
        match self {
            Column::Real(_) => ColumnType::Real,
            Column::Integer(_) => ColumnType::Integer,
            Column::Category { .. } => ColumnType::Category,
        }
    }

    /// Encodes labels with levels numbered by first appearance.
    pub fn category<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut levels: Vec<String> = Vec::new();
        let mut lookup = std::collections::HashMap::new();
        let codes = labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                *lookup.entry(l.to_owned()).or_insert_with(|| {
                    levels.push(l.to_owned());
                    levels.len() - 1
                })
            })
            .collect();
        Column::Category { codes, levels }
    }

    fn cell(&self, row: usize) -> String {
        match self {
            Column::Real(v) => format!("{:.16e}", v[row]),
            Column::Integer(v) => v[row].to_string(),
            Column::Category { codes, levels } => levels[codes[row]].clone(),
        }
    }
}

/// Expected column types. `columns` are required, `optional` ones are read
/// when present, and any other column takes `default` or is skipped.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schema {
    pub columns: Vec<(String, ColumnType)>,
    pub optional: Vec<(String, ColumnType)>,
    pub default: Option<ColumnType>,
}

impl Schema {
    pub fn new(columns: &[(&str, ColumnType)]) -> Self {
        Self {
            columns: columns.iter().map(|(n, t)| ((*n).to_owned(), *t)).collect(),
            optional: Vec::new(),
            default: None,
        }
    }

    pub fn with_optional(mut self, name: &str, kind: ColumnType) -> Self {
        self.optional.push((name.to_owned(), kind));
        self
    }

    pub fn with_default(mut self, kind: ColumnType) -> Self {
        self.default = Some(kind);
        self
    }

    fn kind_of(&self, name: &str) -> Option<ColumnType> {
        self.columns
            .iter()
            .chain(&self.optional)
            .find(|(n, _)| n == name)
            .map(|(_, t)| *t)
            .or(self.default)
    }
}

/// Named columns of equal length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColumnTable {
    names: Vec<String>,
    columns: Vec<Column>,
    rows: usize,
}

impl ColumnTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn push(&mut self, name: impl Into<String>, column: Column) -> Result<()> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::InvalidArgument(format!("duplicate column `{name}`")));
        }
        if !self.columns.is_empty() && column.len() != self.rows {
            return Err(Error::Dimension(format!(
                "column `{name}` has {} rows, table has {}",
                column.len(),
                self.rows
            )));
        }
        self.rows = column.len();
        self.names.push(name);
        self.columns.push(column);
        Ok(())
    }

    pub fn with(mut self, name: impl Into<String>, column: Column) -> Result<Self> {
        self.push(name, column)?;
        Ok(self)
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    }

    pub fn has(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    /// A numeric column as reals.
    pub fn real(&self, name: &str) -> Result<Vec<f64>> {
        match self.column(name)? {
            Column::Real(v) => Ok(v.clone()),
            Column::Integer(v) => Ok(v.iter().map(|&x| x as f64).collect()),
            Column::Category { .. } => Err(Error::InvalidArgument(format!("column `{name}` is categorical"))),
        }
    }

    /// A category column's codes and levels.
    pub fn category(&self, name: &str) -> Result<(&[usize], &[String])> {
        match self.column(name)? {
            Column::Category { codes, levels } => Ok((codes, levels)),
            _ => Err(Error::InvalidArgument(format!("column `{name}` is not categorical"))),
        }
    }

    pub fn write_csv_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.names)?;
        for r in 0..self.rows {
            w.write_record(self.columns.iter().map(|c| c.cell(r)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_to(std::fs::File::create(path)?)
    }
}

/// Parses CSV text with a header row; rows are numbered from 1 after the header.
pub fn read_csv_from<R: Read>(input: R, schema: &Schema) -> Result<ColumnTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();
    let header: Vec<String> = match records.next() {
        Some(h) => h?.iter().map(str::to_owned).collect(),
        None => {
            // empty input: the schema's columns with no rows
            let mut table = ColumnTable::new();
            for (name, kind) in &schema.columns {
                let col = match kind {
                    ColumnType::Real => Column::Real(Vec::new()),
                    ColumnType::Integer => Column::Integer(Vec::new()),
                    ColumnType::Category => Column::category::<&str>(&[]),
                };
                table.push(name.clone(), col)?;
            }
            return Ok(table);
        }
    };
    for (name, _) in &schema.columns {
        if !header.contains(name) {
            return Err(Error::MissingColumn(name.clone()));
        }
    }
    let kinds: Vec<Option<ColumnType>> = header.iter().map(|h| schema.kind_of(h)).collect();
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for (r, rec) in records.enumerate() {
        let rec = rec?;
        let row = r + 1;
        if rec.len() != header.len() {
            return Err(Error::RowLength {
                row,
                got: rec.len(),
                expected: header.len(),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            raw[c].push(cell.to_owned());
        }
    }

    let mut table = ColumnTable::new();
    for ((name, kind), cells) in header.iter().zip(kinds).zip(raw) {
        let Some(kind) = kind else { continue };
        let bad = |row: usize, value: &str, reason: String| Error::ParseCell {
            row: row + 1,
            column: name.clone(),
            value: value.to_owned(),
            reason,
        };
        let column = match kind {
            ColumnType::Real => Column::Real(
                cells
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v.parse::<f64>().map_err(|e| bad(i, v, e.to_string())))
                    .collect::<Result<_>>()?,
            ),
            ColumnType::Integer => Column::Integer(
                cells
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v.parse::<i64>().map_err(|e| bad(i, v, e.to_string())))
                    .collect::<Result<_>>()?,
            ),
            ColumnType::Category => Column::category(&cells),
        };
        table.push(name.clone(), column)?;
    }
    Ok(table)
}

pub fn read_csv(path: &Path, schema: &Schema) -> Result<ColumnTable> {
    read_csv_from(std::fs::File::open(path)?, schema)
}
