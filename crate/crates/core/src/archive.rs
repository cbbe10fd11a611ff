//! Tessellated measure-space archive with per-cell acceptance thresholds.
//!
//! Each cell of a k-dimensional uniform grid holds at most one occupant and a
//! threshold `t_e`. A candidate is accepted iff its objective strictly exceeds
//! the cell threshold; on acceptance the threshold moves by the archive
//! learning rate alpha: `t_e <- (1 - alpha) * t_e + alpha * f`. With alpha = 1
//! this is the classic elitist archive (threshold == occupant objective); with
//! alpha < 1 thresholds trail the occupant, so a cell keeps paying out
//! positive improvement for a while even after its occupant stops improving.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// --- configuration ---

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveConfig {
    pub lower_bounds: Vec<f64>,
    pub upper_bounds: Vec<f64>,
    pub resolution: Vec<usize>,
    /// Threshold learning rate alpha in [0, 1].
    pub learning_rate: f64,
    /// Threshold of every empty cell.
    pub threshold_floor: f64,
}

impl ArchiveConfig {
    pub fn new(
        lower_bounds: Vec<f64>,
        upper_bounds: Vec<f64>,
        resolution: Vec<usize>,
        learning_rate: f64,
        threshold_floor: f64,
    ) -> Result<Self> {
        let cfg = Self { lower_bounds, upper_bounds, resolution, learning_rate, threshold_floor };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.lower_bounds.len();
        if k == 0 {
            return Err(Error::Config("archive needs at least one measure dimension".into()));
        }
        if self.upper_bounds.len() != k || self.resolution.len() != k {
            return Err(Error::Config(format!(
                "archive bounds/resolution lengths disagree: {} lower, {} upper, {} resolution",
                k,
                self.upper_bounds.len(),
                self.resolution.len()
            )));
        }
        for d in 0..k {
            if !self.lower_bounds[d].is_finite() || !self.upper_bounds[d].is_finite() {
                return Err(Error::Config(format!("archive bounds for dim {d} must be finite")));
            }
            if self.lower_bounds[d] >= self.upper_bounds[d] {
                return Err(Error::Config(format!(
                    "archive dim {d}: lower bound {} not below upper bound {}",
                    self.lower_bounds[d], self.upper_bounds[d]
                )));
            }
            if self.resolution[d] == 0 {
                return Err(Error::Config(format!("archive dim {d}: resolution must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(Error::Config(format!(
                "archive learning rate {} outside [0, 1]",
                self.learning_rate
            )));
        }
        if !self.threshold_floor.is_finite() {
            return Err(Error::Config("archive threshold floor must be finite".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.lower_bounds.len()
    }

    pub fn num_cells(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn cell_width(&self, dim: usize) -> f64 {
        (self.upper_bounds[dim] - self.lower_bounds[dim]) / self.resolution[dim] as f64
    }
}

// --- solutions and cells ---

/// A candidate solution together with its evaluation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub params: Vec<f64>,
    pub objective: f64,
    pub measures: Vec<f64>,
    /// Evaluation seeds used to score this solution (empty for
    /// deterministic domains).
    pub seeds: Vec<u64>,
}

impl Solution {
    pub fn new(params: Vec<f64>, objective: f64, measures: Vec<f64>) -> Self {
        Self { params, objective, measures, seeds: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub occupant: Option<Solution>,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AddStatus {
    /// Accepted into a previously empty cell.
    NewCell,
    /// Accepted into an occupied cell (threshold advanced; occupant replaced
    /// only if the candidate's objective beats the occupant's).
    Improved,
    /// Objective did not exceed the cell threshold; archive unchanged.
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AddResult {
    pub status: AddStatus,
    /// `f - t_e` against the threshold in force before this add. May be
    /// negative or zero for rejected candidates.
    pub improvement: f64,
    pub cell_index: Vec<usize>,
}

impl AddResult {
    pub fn accepted(&self) -> bool {
        self.status != AddStatus::Rejected
    }
}

// --- the archive ---

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridArchive {
    config: ArchiveConfig,
    cells: Vec<Cell>,
    occupied: usize,
    /// Parameter dimensionality, learned from the first accepted or rejected
    /// add and enforced afterwards.
    solution_dim: Option<usize>,
}

impl GridArchive {
    pub fn new(config: ArchiveConfig) -> Result<Self> {
        config.validate()?;
        let cells = vec![
            Cell { occupant: None, threshold: config.threshold_floor };
            config.num_cells()
        ];
        Ok(Self { config, cells, occupied: 0, solution_dim: None })
    }

    pub fn config(&self) -> &ArchiveConfig {
        &self.config
    }

    /// Grid coordinates of the cell containing `measures`. Out-of-bounds
    /// measures clamp to the boundary cells.
    pub fn map_to_cell(&self, measures: &[f64]) -> Result<Vec<usize>> {
        let k = self.config.dims();
        if measures.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: measures.len(),
                context: "measures",
            });
        }
        let mut idx = Vec::with_capacity(k);
        for d in 0..k {
            let m = measures[d];
            if !m.is_finite() {
                return Err(Error::NonFinite(format!("measure {d} = {m}")));
            }
            let raw = ((m - self.config.lower_bounds[d]) / self.config.cell_width(d)).floor();
            let clamped = if raw < 0.0 { 0 } else { raw as usize };
            idx.push(clamped.min(self.config.resolution[d] - 1));
        }
        Ok(idx)
    }

    /// Row-major flattening of grid coordinates.
    pub fn flat_index(&self, cell_index: &[usize]) -> usize {
        debug_assert_eq!(cell_index.len(), self.config.dims());
        let mut flat = 0;
        for (d, &i) in cell_index.iter().enumerate() {
            debug_assert!(i < self.config.resolution[d]);
            flat = flat * self.config.resolution[d] + i;
        }
        flat
    }

    pub fn cell(&self, flat: usize) -> &Cell {
        &self.cells[flat]
    }

    /// `f - t_e` for a hypothetical candidate in the cell at `flat`.
    pub fn compute_improvement(&self, objective: f64, flat: usize) -> f64 {
        objective - self.cells[flat].threshold
    }

    /// Offer a solution to the archive.
    ///
    /// Accepts iff `objective > t_e` of its cell. On acceptance the threshold
    /// anneals toward the objective by the learning rate, and the occupant is
    /// replaced only by a strictly better objective, so the occupant is always
    /// the best solution ever accepted into the cell.
    pub fn add(&mut self, solution: Solution) -> Result<AddResult> {
        if !solution.objective.is_finite() {
            return Err(Error::NonFinite(format!("objective = {}", solution.objective)));
        }
        for (d, &p) in solution.params.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite(format!("param {d} = {p}")));
            }
        }
        let cell_index = self.map_to_cell(&solution.measures)?;
        match self.solution_dim {
            Some(n) if n != solution.params.len() => {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: solution.params.len(),
                    context: "solution params",
                });
            }
            None => self.solution_dim = Some(solution.params.len()),
            _ => {}
        }

        let flat = self.flat_index(&cell_index);
        let cell = &mut self.cells[flat];
        let improvement = solution.objective - cell.threshold;
        if !(solution.objective > cell.threshold) {
            return Ok(AddResult { status: AddStatus::Rejected, improvement, cell_index });
        }

        let status = if cell.occupant.is_none() {
            self.occupied += 1;
            AddStatus::NewCell
        } else {
            AddStatus::Improved
        };
        let alpha = self.config.learning_rate;
        cell.threshold = (1.0 - alpha) * cell.threshold + alpha * solution.objective;
        let replace = match &cell.occupant {
            None => true,
            Some(existing) => solution.objective > existing.objective,
        };
        if replace {
            cell.occupant = Some(solution);
        }
        Ok(AddResult { status, improvement, cell_index })
    }

    // --- summary statistics ---

    pub fn num_occupied(&self) -> usize {
        self.occupied
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Sum of occupant objectives.
    pub fn qd_score(&self) -> f64 {
        self.cells
            .iter()
            .filter_map(|c| c.occupant.as_ref().map(|s| s.objective))
            .sum()
    }

    /// Occupied fraction of cells, in [0, 1].
    pub fn coverage(&self) -> f64 {
        self.occupied as f64 / self.cells.len() as f64
    }

    pub fn best_objective(&self) -> Option<f64> {
        self.cells
            .iter()
            .filter_map(|c| c.occupant.as_ref().map(|s| s.objective))
            .fold(None, |best, f| Some(best.map_or(f, |b: f64| b.max(f))))
    }

    /// Occupants in flat-index order (deterministic iteration).
    pub fn occupants(&self) -> impl Iterator<Item = (usize, &Solution)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.occupant.as_ref().map(|s| (i, s)))
    }

    /// Clear all occupants and reset thresholds to the floor.
    pub fn reset(&mut self) {
        for cell in &mut self.cells {
            cell.occupant = None;
            cell.threshold = self.config.threshold_floor;
        }
        self.occupied = 0;
        self.solution_dim = None;
    }

    // --- CSV export / import ---

    /// CSV of occupied cells in flat-index order. Columns: grid coordinates,
    /// cell lower corner per measure dim, objective, threshold, parameters.
    /// Floats use Rust's shortest round-trip formatting, so equal archives
    /// produce byte-identical output.
    pub fn to_csv(&self) -> String {
        let k = self.config.dims();
        let n = self.solution_dim.unwrap_or(0);
        let mut header = Vec::with_capacity(2 * k + 2 + n);
        for d in 0..k {
            header.push(format!("cell_idx_{d}"));
        }
        for d in 0..k {
            header.push(format!("measure_lb_{d}"));
        }
        header.push("objective".into());
        header.push("threshold".into());
        for j in 0..n {
            header.push(format!("param_{j}"));
        }
        let mut out = header.join(",");
        out.push('\n');

        for (flat, cell) in self.cells.iter().enumerate() {
            let Some(sol) = &cell.occupant else { continue };
            let idx = self.unflatten(flat);
            let mut fields = Vec::with_capacity(2 * k + 2 + n);
            for &i in &idx {
                fields.push(i.to_string());
            }
            for (d, &i) in idx.iter().enumerate() {
                let lb = self.config.lower_bounds[d] + i as f64 * self.config.cell_width(d);
                fields.push(format!("{lb}"));
            }
            fields.push(format!("{}", sol.objective));
            fields.push(format!("{}", cell.threshold));
            for &p in &sol.params {
                fields.push(format!("{p}"));
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        crate::write_atomic(path, self.to_csv().as_bytes())
    }

    /// Rebuild an archive from its CSV export under the given config.
    ///
    /// Lossy for information the CSV does not carry: occupant measures are
    /// synthesized at cell centers, empty-cell thresholds reset to the floor,
    /// and evaluation seeds are dropped. Summary statistics and occupant
    /// parameters round-trip exactly.
    pub fn from_csv(config: ArchiveConfig, text: &str) -> Result<Self> {
        let mut archive = Self::new(config)?;
        let k = archive.config.dims();
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty archive CSV".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let expected_prefix = 2 * k + 2;
        if cols.len() < expected_prefix {
            return Err(Error::Parse(format!(
                "archive CSV header has {} columns, need at least {expected_prefix}",
                cols.len()
            )));
        }
        for d in 0..k {
            if cols[d] != format!("cell_idx_{d}") {
                return Err(Error::Parse(format!(
                    "archive CSV column {d} is {:?}, expected cell_idx_{d}",
                    cols[d]
                )));
            }
        }
        if cols[2 * k] != "objective" || cols[2 * k + 1] != "threshold" {
            return Err(Error::Parse("archive CSV missing objective/threshold columns".into()));
        }
        let n = cols.len() - expected_prefix;

        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::Parse(format!(
                    "archive CSV row {}: {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    cols.len()
                )));
            }
            let parse_f = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("archive CSV row {}: bad {what} {s:?}", lineno + 2)))
            };
            let mut idx = Vec::with_capacity(k);
            for d in 0..k {
                let i: usize = fields[d].parse().map_err(|_| {
                    Error::Parse(format!("archive CSV row {}: bad cell index {:?}", lineno + 2, fields[d]))
                })?;
                if i >= archive.config.resolution[d] {
                    return Err(Error::Parse(format!(
                        "archive CSV row {}: cell index {i} out of range for dim {d}",
                        lineno + 2
                    )));
                }
                idx.push(i);
            }
            let objective = parse_f(fields[2 * k], "objective")?;
            let threshold = parse_f(fields[2 * k + 1], "threshold")?;
            let mut params = Vec::with_capacity(n);
            for j in 0..n {
                params.push(parse_f(fields[expected_prefix + j], "param")?);
            }
            // Measures are not exported; place the occupant at its cell
            // center so re-mapping is robust to rounding at cell edges.
            let measures: Vec<f64> = idx
                .iter()
                .enumerate()
                .map(|(d, &i)| {
                    archive.config.lower_bounds[d] + (i as f64 + 0.5) * archive.config.cell_width(d)
                })
                .collect();
            let flat = archive.flat_index(&idx);
            let cell = &mut archive.cells[flat];
            if cell.occupant.is_some() {
                return Err(Error::Parse(format!(
                    "archive CSV row {}: duplicate cell {idx:?}",
                    lineno + 2
                )));
            }
            cell.occupant = Some(Solution::new(params, objective, measures));
            cell.threshold = threshold;
            archive.occupied += 1;
        }
        archive.solution_dim = if n > 0 { Some(n) } else { None };
        Ok(archive)
    }

    // --- heatmap ---

    /// Render a 2-dimensional archive as a binary PGM (P5) image.
    ///
    /// Pixel intensity maps [min occupied objective, max] linearly onto
    /// [0, 255]; empty cells are 0. If all occupants share one objective the
    /// occupied cells render as 255. Measure dim 0 is the x axis, measure
    /// dim 1 increases upward (image rows run top to bottom).
    pub fn heatmap_pgm(&self) -> Result<Vec<u8>> {
        if self.config.dims() != 2 {
            return Err(Error::Config(format!(
                "heatmap requires a 2-dimensional archive, got {} dims",
                self.config.dims()
            )));
        }
        let (w, h) = (self.config.resolution[0], self.config.resolution[1]);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (_, sol) in self.occupants() {
            lo = lo.min(sol.objective);
            hi = hi.max(sol.objective);
        }
        let span = hi - lo;
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        for row in 0..h {
            let iy = h - 1 - row;
            for ix in 0..w {
                let flat = self.flat_index(&[ix, iy]);
                let px = match &self.cells[flat].occupant {
                    None => 0u8,
                    Some(sol) if span <= 0.0 => {
                        let _ = sol;
                        255
                    }
                    Some(sol) => ((sol.objective - lo) / span * 255.0).round() as u8,
                };
                out.push(px);
            }
        }
        Ok(out)
    }

    fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let k = self.config.dims();
        let mut idx = vec![0usize; k];
        for d in (0..k).rev() {
            idx[d] = flat % self.config.resolution[d];
            flat /= self.config.resolution[d];
        }
        idx
    }
}
