//! Monte Carlo ensembles, empirical quantiles and the DRO tuning grid.

pub mod ensemble;
pub mod quantiles;
pub mod tune;

pub use ensemble::{initial_point, run_ensemble, DivergedPath, EnsembleSpec, EnsembleStats, InitMode, MetricSeries, RunContext};
pub use quantiles::{compare_quantiles, empirical_quantile_sorted, empirical_quantiles, QuantileComparison};
pub use tune::{grid_tune_dro, CellResult, TuneBudget, TuneGrid, TuneReport};
