//! Append-only training data for the surrogate, with CSV persistence.
//!
//! Rows are keyed by (parameters, rollout seed set); pushing an existing key
//! is a no-op, so re-sampling an already-labeled scenario never inflates the
//! dataset. Rows are never removed or edited, which keeps training data
//! monotone across outer iterations.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One ground-truth evaluation: scenario parameters, its objective and
/// measures, the per-cell occupancy counts, and the rollout seeds that
/// produced the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRow {
    pub params: Vec<f64>,
    pub objective: f64,
    pub measures: Vec<f64>,
    pub occupancy: Vec<f64>,
    pub seeds: Vec<u64>,
}

/// Bit-pattern identity for the dedupe key; distinct NaN payloads would
/// differ, but labeled rows are always finite.
fn key_of(row: &DataRow) -> (Vec<u64>, Vec<u64>) {
    (row.params.iter().map(|p| p.to_bits()).collect(), row.seeds.clone())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Dataset {
    rows: Vec<DataRow>,
    #[serde(skip)]
    keys: HashSet<(Vec<u64>, Vec<u64>)>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[DataRow] {
        &self.rows
    }

    /// Append a row unless its (params, seeds) key is already present.
    /// Returns whether the row was added.
    pub fn push(&mut self, row: DataRow) -> bool {
        if self.keys.insert(key_of(&row)) {
            self.rows.push(row);
            true
        } else {
            false
        }
    }

    /// One column per parameter, the objective, one column per measure, and
    /// one column per occupancy cell. Seed sets are not persisted, so a
    /// reloaded dataset dedupes on parameters alone.
    pub fn to_csv(&self) -> String {
        let (p, m, o) = self
            .rows
            .first()
            .map(|r| (r.params.len(), r.measures.len(), r.occupancy.len()))
            .unwrap_or((0, 0, 0));
        let mut header: Vec<String> = (0..p).map(|i| format!("p{i}")).collect();
        header.push("objective".into());
        header.extend((0..m).map(|i| format!("m{i}")));
        header.extend((0..o).map(|i| format!("occ{i}")));
        let mut out = header.join(",");
        out.push('\n');
        for row in &self.rows {
            let mut fields: Vec<String> = row.params.iter().map(|v| v.to_string()).collect();
            fields.push(row.objective.to_string());
            fields.extend(row.measures.iter().map(|v| v.to_string()));
            fields.extend(row.occupancy.iter().map(|v| v.to_string()));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Parse(format!("dataset csv: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let p = cols.iter().take_while(|c| c.starts_with('p')).count();
        if cols.get(p) != Some(&"objective") {
            return Err(bad("expected an objective column after the parameters".into()));
        }
        let m = cols[p + 1..].iter().take_while(|c| c.starts_with('m')).count();
        let o = cols.len() - p - 1 - m;

        let mut data = Dataset::new();
        for (idx, line) in lines.enumerate() {
            let vals: Vec<f64> = line
                .split(',')
                .map(|f| f.parse::<f64>().map_err(|_| bad(format!("row {idx}: bad float {f:?}"))))
                .collect::<Result<_>>()?;
            if vals.len() != cols.len() {
                return Err(bad(format!(
                    "row {idx}: {} fields, expected {}",
                    vals.len(),
                    cols.len()
                )));
            }
            data.push(DataRow {
                params: vals[..p].to_vec(),
                objective: vals[p],
                measures: vals[p + 1..p + 1 + m].to_vec(),
                occupancy: vals[p + 1 + m..].to_vec(),
                seeds: vec![],
            });
        }
        debug_assert!(data.rows.iter().all(|r| r.occupancy.len() == o));
        Ok(data)
    }

    /// Rebuild the dedupe index; needed after serde deserialization, which
    /// skips the transient key set.
    pub fn rebuild_index(&mut self) {
        self.keys = self.rows.iter().map(key_of).collect();
    }
}
