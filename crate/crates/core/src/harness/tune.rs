use serde::{Deserialize, Serialize};

use crate::dro::{ConstrainedStationarity, DroProblem};
use crate::error::{invalid, Error, Result};
use crate::harness::ensemble::{run_ensemble, EnsembleSpec, InitMode};
use crate::harness::quantiles::empirical_quantile_sorted;
use crate::optimizer::{RecordSchedule, SmAgdaParams};
use crate::problem::MetricHook;

/// Candidate values; the dual stepsize is always `τ₁/48`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneGrid {
    pub tau1: Vec<f64>,
    pub beta: Vec<f64>,
    pub p: Vec<f64>,
}

impl Default for TuneGrid {
    fn default() -> Self {
        Self {
            tau1: vec![1e-1, 1e-2, 1e-3, 1e-4],
            beta: vec![1e-3, 1e-4, 1e-5],
            p: vec![1.0, 1e-1, 1e-2, 1e-3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneBudget {
    pub iterations: usize,
    pub paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub params: SmAgdaParams,
    /// Median over paths of the final constrained stationarity; `None` when
    /// some path diverged.
    pub median_final: Option<f64>,
    pub diverged_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneReport {
    pub cells: Vec<CellResult>,
    /// Cell indices from best to worst.
    pub ranking: Vec<usize>,
}

impl TuneReport {
    pub fn winner(&self) -> &CellResult {
        &self.cells[self.ranking[0]]
    }
}

/// Runs every grid cell for the budget from `x₀ = 0`, `y₀ = u` and ranks the
/// cells by the median final constrained stationarity. Cells with a diverging
/// path rank last.
pub fn grid_tune_dro(problem: &DroProblem, grid: &TuneGrid, budget: &TuneBudget) -> Result<TuneReport> {
    if grid.tau1.is_empty() || grid.beta.is_empty() || grid.p.is_empty() {
        return Err(invalid("grid", "every axis needs at least one value"));
    }
    if budget.paths == 0 {
        return Err(invalid("paths", "must be positive"));
    }
    let mut cells = Vec::new();
    for &tau1 in &grid.tau1 {
        for &beta in &grid.beta {
            for &p in &grid.p {
                let params = SmAgdaParams::free(tau1, tau1 / 48.0, beta, p, budget.iterations)?;
                let spec = EnsembleSpec {
                    num_paths: budget.paths,
                    base_seed: budget.seed,
                    params,
                    init: InitMode::Zero,
                    schedule: RecordSchedule::Checkpoints(vec![budget.iterations]),
                    keep_paths: true,
                    threads: None,
                };
                let hook = ConstrainedStationarity { tau2: params.tau2 };
                let hooks: [&dyn MetricHook<DroProblem>; 1] = [&hook];
                let stats = run_ensemble(problem, &spec, &hooks)?;
                let finals: Vec<f64> = stats.metrics[0]
                    .per_path
                    .as_ref()
                    .map(|pp| pp.iter().filter_map(|s| s.last().copied()).collect())
                    .unwrap_or_default();
                let median_final = if stats.divergent.is_empty() && finals.iter().all(|v| v.is_finite()) {
                    let mut sorted = finals;
                    sorted.sort_by(f64::total_cmp);
                    Some(empirical_quantile_sorted(&sorted, 0.5))
                } else {
                    None
                };
                log::info!("tau1={tau1} beta={beta} p={p}: median final {median_final:?}");
                cells.push(CellResult {
                    params,
                    median_final,
                    diverged_paths: stats.divergent.len(),
                });
            }
        }
    }
    if cells.iter().all(|c| c.median_final.is_none()) {
        return Err(Error::AllCellsDiverged);
    }
    let mut ranking: Vec<usize> = (0..cells.len()).collect();
    ranking.sort_by(|&a, &b| {
        let key = |i: usize| cells[i].median_final.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b)).then(a.cmp(&b))
    });
    Ok(TuneReport { cells, ranking })
}
