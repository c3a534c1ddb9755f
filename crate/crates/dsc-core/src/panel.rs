//! Micro-level panel data model and CSV ingestion.
//!
//! Input files are long-format CSV with header `unit,time,value`: one row per
//! individual observation. Unit 1 is the treated unit, units 2..J+1 the
//! controls. Group sizes n_j must be constant across periods within a unit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::dist::DrawMode;
use crate::error::{DscError, Result};

/// Micro-level observations grouped by unit and period.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelDataset {
    units: Vec<u32>,
    periods: Vec<u32>,
    /// observations[unit_idx][period_idx] = cell sample, order preserved as read
    observations: Vec<Vec<Vec<f64>>>,
    t0: u32,
}

impl PanelDataset {
    /// Build a panel from (unit, time, value) triples and the last
    /// pre-treatment period `t0`.
    pub fn from_rows(rows: &[(u32, u32, f64)], t0: u32) -> Result<Self> {
        let mut cells: BTreeMap<u32, BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
        for &(unit, time, value) in rows {
            cells.entry(unit).or_default().entry(time).or_default().push(value);
        }
        Self::from_cells(cells, t0)
    }

    fn from_cells(cells: BTreeMap<u32, BTreeMap<u32, Vec<f64>>>, t0: u32) -> Result<Self> {
        if cells.is_empty() {
            return Err(DscError::InvalidPanel("panel has no observations".into()));
        }
        let units: Vec<u32> = cells.keys().copied().collect();
        if units.len() < 2 {
            return Err(DscError::InvalidPanel(
                "panel needs a treated unit and at least one control".into(),
            ));
        }
        // union of observed periods over all units
        let mut periods: Vec<u32> = cells
            .values()
            .flat_map(|by_period| by_period.keys().copied())
            .collect();
        periods.sort_unstable();
        periods.dedup();

        let mut observations = Vec::with_capacity(units.len());
        for (&unit, by_period) in &cells {
            let mut expected = None;
            let mut per_period = Vec::with_capacity(periods.len());
            for &period in &periods {
                let sample = by_period
                    .get(&period)
                    .filter(|s| !s.is_empty())
                    .ok_or(DscError::EmptyCell { unit, period })?;
                let expected = *expected.get_or_insert(sample.len());
                if sample.len() != expected {
                    return Err(DscError::UnevenGroup {
                        unit,
                        period,
                        expected,
                        found: sample.len(),
                    });
                }
                per_period.push(sample.clone());
            }
            observations.push(per_period);
        }

        let last = *periods.last().unwrap();
        if !periods.contains(&t0) || t0 >= last {
            return Err(DscError::InvalidPanel(format!(
                "T0 = {t0} must be an observed period strictly before the last period {last}"
            )));
        }

        Ok(Self {
            units,
            periods,
            observations,
            t0,
        })
    }

    pub fn units(&self) -> &[u32] {
        &self.units
    }

    pub fn periods(&self) -> &[u32] {
        &self.periods
    }

    /// Number of control units J.
    pub fn num_controls(&self) -> usize {
        self.units.len() - 1
    }

    pub fn t0(&self) -> u32 {
        self.t0
    }

    /// Pre-treatment period values {1..T0}.
    pub fn pre_periods(&self) -> Vec<u32> {
        self.periods.iter().copied().filter(|&p| p <= self.t0).collect()
    }

    /// Post-treatment period values {T0+1..T}.
    pub fn post_periods(&self) -> Vec<u32> {
        self.periods.iter().copied().filter(|&p| p > self.t0).collect()
    }

    /// Cell sample for a unit index (0 = treated) and a period value.
    pub fn cell(&self, unit_idx: usize, period: u32) -> Result<&[f64]> {
        let p_idx = self
            .periods
            .iter()
            .position(|&p| p == period)
            .ok_or_else(|| DscError::InvalidArgument(format!("period {period} not in panel")))?;
        self.observations
            .get(unit_idx)
            .map(|u| u[p_idx].as_slice())
            .ok_or_else(|| DscError::InvalidArgument(format!("unit index {unit_idx} out of range")))
    }

    /// Group size n_j for a unit index.
    pub fn group_size(&self, unit_idx: usize) -> usize {
        self.observations[unit_idx][0].len()
    }

    /// Write the panel back to long-format CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|source| DscError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = BufWriter::new(file);
        let io_err = |source| DscError::Io {
            path: path.to_path_buf(),
            source,
        };
        writeln!(w, "unit,time,value").map_err(io_err)?;
        for (u_idx, &unit) in self.units.iter().enumerate() {
            for (p_idx, &period) in self.periods.iter().enumerate() {
                for &v in &self.observations[u_idx][p_idx] {
                    writeln!(w, "{unit},{period},{v}").map_err(io_err)?;
                }
            }
        }
        w.flush().map_err(io_err)
    }
}

/// Load a long-format `unit,time,value` CSV into a panel.
pub fn load_panel_csv(path: &Path, t0: u32) -> Result<PanelDataset> {
    let file = File::open(path).map_err(|source| DscError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DscError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if idx == 0 {
            if trimmed != "unit,time,value" {
                return Err(DscError::MalformedRow {
                    line: 1,
                    message: format!("expected header 'unit,time,value', got '{trimmed}'"),
                });
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            return Err(DscError::MalformedRow {
                line: lineno,
                message: format!("expected 3 comma-separated fields, got {}", fields.len()),
            });
        }
        let unit: u32 = fields[0].trim().parse().map_err(|_| DscError::MalformedRow {
            line: lineno,
            message: format!("unit '{}' is not an integer >= 1", fields[0]),
        })?;
        let time: u32 = fields[1].trim().parse().map_err(|_| DscError::MalformedRow {
            line: lineno,
            message: format!("time '{}' is not an integer >= 1", fields[1]),
        })?;
        if unit < 1 || time < 1 {
            return Err(DscError::MalformedRow {
                line: lineno,
                message: "unit and time must be >= 1".into(),
            });
        }
        let value: f64 = fields[2].trim().parse().map_err(|_| DscError::MalformedRow {
            line: lineno,
            message: format!("value '{}' does not parse as a real number", fields[2]),
        })?;
        if !value.is_finite() {
            return Err(DscError::MalformedRow {
                line: lineno,
                message: format!("value {value} is not finite"),
            });
        }
        rows.push((unit, time, value));
    }
    PanelDataset::from_rows(&rows, t0)
}

/// Minimum cell sample size n = min_j n_j.
pub fn min_group_size(panel: &PanelDataset) -> usize {
    (0..panel.units().len())
        .map(|u| panel.group_size(u))
        .min()
        .expect("panel has at least one unit")
}

/// Weighting scheme over pre-treatment periods.
#[derive(Clone, Debug, PartialEq)]
pub enum LambdaSpec {
    /// Equal weights 1/T0.
    Uniform,
    /// Explicit nonnegative weights summing to one.
    Explicit(Vec<f64>),
}

/// Estimation settings for a DSC fit.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimationConfig {
    /// Explicit number of draws M; wins over `c` when set.
    pub m: Option<usize>,
    /// Multiplier for M = ceil(C * n) when `m` is not given.
    pub c: Option<f64>,
    pub seed: u64,
    pub lambda: LambdaSpec,
    pub draw_mode: DrawMode,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            m: None,
            c: Some(1.0),
            seed: 0,
            lambda: LambdaSpec::Uniform,
            draw_mode: DrawMode::Iid,
        }
    }
}

impl EstimationConfig {
    /// Resolve the number of draws: explicit M wins, otherwise ceil(C * n).
    pub fn resolve_m(&self, n: usize) -> Result<usize> {
        match (self.m, self.c) {
            (Some(m), _) => {
                if m == 0 {
                    Err(DscError::InvalidArgument("M must be at least 1".into()))
                } else {
                    Ok(m)
                }
            }
            (None, Some(c)) => {
                if !(c > 0.0) {
                    return Err(DscError::InvalidArgument(format!(
                        "C must be positive, got {c}"
                    )));
                }
                Ok(((c * n as f64).ceil() as usize).max(1))
            }
            (None, None) => Err(DscError::InvalidArgument(
                "either M or C must be specified".into(),
            )),
        }
    }

    /// Materialize lambda weights for `t0_count` pre-treatment periods.
    pub fn resolve_lambdas(&self, t0_count: usize) -> Result<Vec<f64>> {
        match &self.lambda {
            LambdaSpec::Uniform => Ok(vec![1.0 / t0_count as f64; t0_count]),
            LambdaSpec::Explicit(l) => {
                if l.len() != t0_count {
                    return Err(DscError::InvalidArgument(format!(
                        "lambda has {} entries but there are {t0_count} pre-treatment periods",
                        l.len()
                    )));
                }
                if l.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                    return Err(DscError::InvalidArgument(
                        "lambda entries must be nonnegative and finite".into(),
                    ));
                }
                let sum: f64 = l.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(DscError::InvalidArgument(format!(
                        "lambda must sum to 1, got {sum}"
                    )));
                }
                Ok(l.clone())
            }
        }
    }
}
