//! Plain-text tabular format for finite families.
//!
//! ```text
//! # comment
//! features 0 1 0.5;0.5
//! 0.1 0.9 0.5
//! 0.3 0.3 0.3
//! ```
//!
//! The header keyword is `features` for static experts over a finite domain
//! (one column per domain point) or `design` for sequential experts defined
//! along a fixed feature sequence (one column per step). Coordinates of a
//! feature are joined with `;`. Each further line is one expert.

use std::fmt::Write as _;
use std::path::Path;

use super::{ExpertFamily, Feature, FiniteDomain, FiniteSequential, FiniteStatic};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableMode {
    Static,
    Design,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyTable {
    pub mode: TableMode,
    pub features: Vec<Feature>,
    pub rows: Vec<Vec<f64>>,
}

impl FamilyTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (_, header) = lines.next().ok_or(Error::Empty("family table"))?;
        let mut tokens = header.split_whitespace();
        let mode = match tokens.next() {
            Some("features") => TableMode::Static,
            Some("design") => TableMode::Design,
            other => {
                return Err(Error::Parse(format!(
                    "family table must start with `features` or `design`, found {other:?}"
                )))
            }
        };
        let features = tokens.map(str::parse).collect::<Result<Vec<Feature>>>()?;
        let mut rows = Vec::new();
        for (lineno, line) in lines {
            let row = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {t:?}: {e}", lineno + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != features.len() {
                return Err(Error::Parse(format!(
                    "line {}: {} values for {} columns",
                    lineno + 1,
                    row.len(),
                    features.len()
                )));
            }
            rows.push(row);
        }
        Ok(Self { mode, features, rows })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(match self.mode {
            TableMode::Static => "features",
            TableMode::Design => "design",
        });
        for x in &self.features {
            let _ = write!(out, " {x}");
        }
        out.push('\n');
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn from_static(family: &FiniteStatic) -> Self {
        Self {
            mode: TableMode::Static,
            features: family.domain().features().to_vec(),
            rows: family.rows().to_vec(),
        }
    }

    pub fn into_family(self) -> Result<ExpertFamily> {
        match self.mode {
            TableMode::Static => Ok(ExpertFamily::FiniteStatic(FiniteStatic::new(
                FiniteDomain::new(self.features)?,
                self.rows,
            )?)),
            TableMode::Design => Ok(ExpertFamily::FiniteSequential(FiniteSequential::from_design(
                self.features,
                self.rows,
            )?)),
        }
    }
}
