//! Four-quadrant split of the (unit, period) grid used by the cross-fitted
//! estimator.
//!
//! Fold indices are zero-based: fold 0 is the first half of the units crossed
//! with the first half of the periods, fold 1 the first units with the later
//! periods, fold 2 the later units with the first periods, and fold 3 the
//! later units with the later periods. Halves use `floor(N/2)` and
//! `floor(T/2)`, so odd dimensions put the extra unit or period in the second
//! half.

use std::ops::Range;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub units: Range<usize>,
    pub times: Range<usize>,
}

impl Fold {
    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_periods(&self) -> usize {
        self.times.len()
    }

    pub fn contains(&self, unit: usize, time: usize) -> bool {
        self.units.contains(&unit) && self.times.contains(&time)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldLayout {
    n_units: usize,
    n_periods: usize,
    folds: [Fold; 4],
}

impl FoldLayout {
    pub fn new(n_units: usize, n_periods: usize) -> Result<Self> {
        if n_units < 4 || n_periods < 4 {
            return Err(Error::PanelTooSmall { n: n_units, t: n_periods });
        }
        let (nh, th) = (n_units / 2, n_periods / 2);
        let fold = |units: Range<usize>, times: Range<usize>| Fold { units, times };
        Ok(Self {
            n_units,
            n_periods,
            folds: [
                fold(0..nh, 0..th),
                fold(0..nh, th..n_periods),
                fold(nh..n_units, 0..th),
                fold(nh..n_units, th..n_periods),
            ],
        })
    }

    pub fn folds(&self) -> &[Fold; 4] {
        &self.folds
    }

    pub fn fold(&self, d: usize) -> &Fold {
        &self.folds[d]
    }

    /// Fold with the same units as `d` and the other periods; its time
    /// averages feed the unit clustering of fold `d`.
    pub fn unit_source(d: usize) -> usize {
        [1, 0, 3, 2][d]
    }

    /// Fold with the same periods as `d` and the other units; its
    /// cross-section averages feed the time clustering of fold `d`.
    pub fn time_source(d: usize) -> usize {
        [2, 3, 0, 1][d]
    }

    /// Fold containing cell `(unit, time)`.
    pub fn fold_of(&self, unit: usize, time: usize) -> usize {
        let lower_units = unit >= self.n_units / 2;
        let later_times = time >= self.n_periods / 2;
        2 * usize::from(lower_units) + usize::from(later_times)
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }
}

pub fn build_fold_layout(n_units: usize, n_periods: usize) -> Result<FoldLayout> {
    FoldLayout::new(n_units, n_periods)
}
