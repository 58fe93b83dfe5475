//! Minimal tab-separated reader: header row required, columns looked up by
//! name so files may reorder or add columns.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub(crate) struct Table {
    path: PathBuf,
    columns: HashMap<String, usize>,
    rows: Vec<(usize, Vec<String>)>,
}

pub(crate) struct Row<'a> {
    table: &'a Table,
    pub line: usize,
    cells: &'a [String],
}

impl Table {
    pub fn read(path: &Path) -> Result<Table> {
        let text = crate::evalset::read_text(path)?;
        Table::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Table> {
        let mut lines = text.lines().enumerate();
        let header = match lines.next() {
            Some((_, h)) if !h.trim().is_empty() => h,
            _ => return Err(Error::parse(path, 1, "missing header row")),
        };
        let columns: HashMap<String, usize> = header
            .split('\t')
            .enumerate()
            .map(|(i, c)| (c.trim().to_owned(), i))
            .collect();
        let width = header.split('\t').count();
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<String> = line.split('\t').map(str::to_owned).collect();
            if cells.len() != width {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected {width} columns, found {}", cells.len()),
                ));
            }
            rows.push((i + 1, cells));
        }
        Ok(Table {
            path: path.to_owned(),
            columns,
            rows,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn has(&self, column: &str) -> bool {
        self.columns.contains_key(column)
    }

    pub fn require(&self, columns: &[&str]) -> Result<()> {
        for c in columns {
            if !self.has(c) {
                return Err(Error::parse(&self.path, 1, format!("missing column {c:?}")));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.rows.iter().map(move |(line, cells)| Row {
            table: self,
            line: *line,
            cells,
        })
    }
}

impl Row<'_> {
    pub fn get(&self, column: &str) -> Option<&str> {
        self.table
            .columns
            .get(column)
            .map(|&i| self.cells[i].as_str())
    }

    /// Value of a column known to exist (checked via [`Table::require`]).
    pub fn cell(&self, column: &str) -> &str {
        self.get(column).unwrap_or("")
    }

    pub fn error(&self, msg: impl Into<String>) -> Error {
        Error::parse(&self.table.path, self.line, msg)
    }

    pub fn parse<T: std::str::FromStr>(&self, column: &str) -> Result<T> {
        let raw = self.cell(column);
        raw.trim()
            .parse()
            .map_err(|_| self.error(format!("cannot parse {column} value {raw:?}")))
    }
}
