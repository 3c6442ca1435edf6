use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `{0, Δ, 2Δ, …, T}` with `Δ = T / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::domain("grid needs at least one step"));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_i = i T / n`; exact at both ends.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            self.horizon * i as f64 / self.steps as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.time(i)).collect()
    }

    /// Coarser grid keeping every `factor`-th point.
    pub fn coarsen(&self, factor: usize) -> Result<TimeGrid> {
        if factor == 0 || !self.steps.is_multiple_of(factor) {
            return Err(Error::domain(format!(
                "cannot coarsen {} steps by {factor}",
                self.steps
            )));
        }
        TimeGrid::new(self.horizon, self.steps / factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathLabel {
    Bifbm,
    ObservedX,
    LimitX,
    AuxiliaryY,
}

/// Values of one trajectory on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub label: PathLabel,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>, label: PathLabel) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(Error::domain(format!(
                "path has {} values for a grid of {} steps",
                values.len(),
                grid.steps()
            )));
        }
        if label == PathLabel::Bifbm && values[0] != 0.0 {
            return Err(Error::domain("bifBm path must start at 0"));
        }
        Ok(SamplePath { grid, values, label })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Increments `v_{i+1} - v_i`.
    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }

    /// Grid maximum of `|v|`; stands in for the continuum supremum.
    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Subsample onto `grid.coarsen(factor)`.
    pub fn coarsen(&self, factor: usize) -> Result<SamplePath> {
        let grid = self.grid.coarsen(factor)?;
        let values = self.values.iter().step_by(factor).copied().collect();
        SamplePath::new(grid, values, self.label)
    }

    pub(crate) fn same_grid(&self, other: &SamplePath) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "grid mismatch: {:?} vs {:?}",
                self.grid, other.grid
            )))
        }
    }
}
