//! Discretize-then-regress inference for linear panels with nonseparable
//! two-way heterogeneity.
//!
//! Units are clustered on their time-series averages and periods on their
//! cross-section averages; the slope is then estimated by OLS after purging
//! additive grouped fixed effects (`unit x time-cluster` and
//! `unit-cluster x period`). The crate also ships a four-fold cross-fitted
//! variant, the usual comparison estimators, and a Monte Carlo harness.

pub mod benchmarks;
pub mod clustering;
pub mod error;
pub mod estimators;
pub mod folds;
pub mod kmeans;
pub mod panel;
pub mod result;
pub mod seeding;
pub mod simulation;

pub use error::{Error, Result};
pub use folds::{build_fold_layout, Fold, FoldLayout};
pub use panel::{cell_means, validate_panel, CellMeans, PanelData, Partition, RawRow, Standardization};
pub use result::{ClusterCount, EstimateRecord, EstimateResult, Method};
