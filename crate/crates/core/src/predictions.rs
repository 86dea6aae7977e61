//! Per-example prediction files.
//!
//! JSON lines: a header `{"mode": "multilabel", "properties": [...]}` followed
//! by one `{"id": "...", "values": [...]}` per example. Multi-label values are
//! probabilities of "applies" (or 0/1 after voting); regression values are
//! Likert estimates.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{PreparedExample, PropertyInventory, SprExample};
use crate::model::{applies, Mode, Prediction};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    pub mode: Mode,
    pub properties: Vec<String>,
    pub rows: Vec<PredictionRow>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    mode: String,
    properties: Vec<String>,
}

impl PredictionSet {
    pub fn from_predictions(
        mode: Mode,
        inventory: &PropertyInventory,
        examples: &[PreparedExample],
        preds: &[Prediction],
    ) -> Self {
        Self {
            mode,
            properties: inventory.properties().to_vec(),
            rows: examples
                .iter()
                .zip(preds)
                .map(|(e, p)| PredictionRow {
                    id: e.id.clone(),
                    values: p.scores(),
                })
                .collect(),
        }
    }

    /// Gold labels or Likert targets of `examples`, in the same layout.
    pub fn gold(mode: Mode, inventory: &PropertyInventory, examples: &[SprExample]) -> Self {
        Self {
            mode,
            properties: inventory.properties().to_vec(),
            rows: examples
                .iter()
                .map(|e| PredictionRow {
                    id: e.id.clone(),
                    values: match mode {
                        Mode::Multilabel => e
                            .multilabel_targets()
                            .into_iter()
                            .map(|b| if b { 1.0 } else { 0.0 })
                            .collect(),
                        Mode::Regression => e.regression_targets(),
                    },
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Multi-label decisions; regression scores are read as `≥ 4`.
    pub fn labels(&self) -> Vec<Vec<bool>> {
        self.rows
            .iter()
            .map(|r| {
                r.values
                    .iter()
                    .map(|&v| match self.mode {
                        Mode::Multilabel => applies(v),
                        Mode::Regression => v >= 4.0,
                    })
                    .collect()
            })
            .collect()
    }

    pub fn scores(&self) -> Vec<Vec<f32>> {
        self.rows.iter().map(|r| r.values.clone()).collect()
    }

    /// Checks that `other` covers the same examples in the same order with
    /// the same properties. Reports the first mismatching id.
    pub fn check_aligned(&self, other: &PredictionSet) -> Result<()> {
        if self.properties != other.properties {
            return Err(Error::data("property inventories differ"));
        }
        for (i, (a, b)) in self.rows.iter().zip(&other.rows).enumerate() {
            if a.id != b.id {
                return Err(Error::data(format!(
                    "row {}: example {} does not match {}",
                    i + 1,
                    a.id,
                    b.id
                )));
            }
        }
        if self.rows.len() != other.rows.len() {
            let longer = if self.rows.len() > other.rows.len() { self } else { other };
            let first = &longer.rows[self.rows.len().min(other.rows.len())].id;
            return Err(Error::data(format!("example {first} has no counterpart")));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        let header = Header {
            mode: self.mode.as_str().into(),
            properties: self.properties.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&header).expect("header")).map_err(io)?;
        for row in &self.rows {
            writeln!(out, "{}", serde_json::to_string(row).expect("row")).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let mut lines = BufReader::new(File::open(path).map_err(io)?).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::data(format!("{}: empty predictions file", path.display())))?
            .map_err(io)?;
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| Error::data(format!("{}: bad header: {e}", path.display())))?;
        let mode = header.mode.parse()?;
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let row: PredictionRow = serde_json::from_str(&line)
                .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), n + 2)))?;
            if row.values.len() != header.properties.len() {
                return Err(Error::data(format!(
                    "{}: example {} has {} values for {} properties",
                    path.display(),
                    row.id,
                    row.values.len(),
                    header.properties.len()
                )));
            }
            rows.push(row);
        }
        Ok(Self {
            mode,
            properties: header.properties,
            rows,
        })
    }
}

impl PredictionSet {
    /// Gold targets carried by prepared examples.
    pub fn gold_prepared(mode: Mode, inventory: &PropertyInventory, examples: &[PreparedExample]) -> Self {
        Self {
            mode,
            properties: inventory.properties().to_vec(),
            rows: examples
                .iter()
                .map(|e| PredictionRow {
                    id: e.id.clone(),
                    values: match mode {
                        Mode::Multilabel => e
                            .binary_targets
                            .iter()
                            .map(|&b| if b { 1.0 } else { 0.0 })
                            .collect(),
                        Mode::Regression => e.likert_targets.clone(),
                    },
                })
                .collect(),
        }
    }

    /// Macro F1 (multi-label) or macro ρ (regression) against `gold`.
    pub fn headline_metric(&self, gold: &PredictionSet) -> Result<f64> {
        self.check_aligned(gold)?;
        Ok(match self.mode {
            Mode::Multilabel => {
                let conf = crate::evaluation::confusions(&self.labels(), &gold.labels())?;
                crate::evaluation::macro_f1(&crate::evaluation::per_property_prf(&conf))
            }
            Mode::Regression => {
                crate::evaluation::pearson_per_property(&self.scores(), &gold.scores())?.macro_rho
            }
        })
    }
}
