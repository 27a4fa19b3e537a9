//! One function per subcommand. Each writes its outputs into a run directory
//! and returns the process exit code.

use std::path::{Path, PathBuf};

use serde::Serialize;
use smagda::bounds::{default_mesh, estimate_delta0_b0, q_bound_for, verify_concentration, BoundInputs, Delta0B0Estimate, GeneratorSpec};
use smagda::dro::{parse_libsvm, ConstrainedStationarity, DroProblem};
use smagda::harness::{
    compare_quantiles, empirical_quantile_sorted, grid_tune_dro, initial_point, run_ensemble, EnsembleSpec, EnsembleStats,
    InitMode, RunContext, TuneBudget, TuneReport,
};
use smagda::ncpl::NcplGame;
use smagda::optimizer::{RecordSchedule, SmAgdaParams};
use smagda::problem::{DistanceToSaddle, MetricHook, StationarityKappa};
use smagda::MinimaxProblem;

use crate::config::{self, ConcentrationConfig, DroRunConfig, ExperimentConfig, MetricName, ProblemConfig};
use crate::output::{fmt_f64, verify_manifest, RunDir};
use crate::{Failure, EXIT_CHECK_FAILED, EXIT_DIVERGED};

fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn ensemble_spec(cfg: &ExperimentConfig, params: SmAgdaParams) -> EnsembleSpec {
    EnsembleSpec {
        num_paths: cfg.num_paths,
        base_seed: cfg.base_seed,
        params,
        init: cfg.init.clone(),
        schedule: match &cfg.checkpoints {
            Some(c) => RecordSchedule::Checkpoints(c.clone()),
            None => RecordSchedule::EveryStep,
        },
        keep_paths: false,
        threads: cfg.threads,
    }
}

#[derive(Serialize)]
struct EnsembleSummary<'a> {
    num_paths: usize,
    surviving: usize,
    context: &'a RunContext,
    divergent: &'a [smagda::harness::DivergedPath],
}

fn write_ensemble(run: &mut RunDir, stats: &EnsembleStats) -> Result<(), Failure> {
    let mut rows = Vec::new();
    if let Some(first) = stats.metrics.first() {
        for (k, t) in first.recorded_t.iter().enumerate() {
            for m in &stats.metrics {
                rows.push(vec![
                    t.to_string(),
                    m.name.clone(),
                    fmt_f64(m.mean[k]),
                    fmt_f64(m.min[k]),
                    fmt_f64(m.max[k]),
                ]);
            }
        }
    }
    run.write_csv("ensemble.csv", &["t", "metric", "mean", "min", "max"], rows)?;
    if let Some(terminal) = &stats.terminal {
        let rows = stats
            .surviving
            .iter()
            .zip(terminal)
            .map(|(p, v)| vec![p.to_string(), fmt_f64(*v)]);
        run.write_csv("terminal.csv", &["path", "X_T"], rows)?;
    }
    run.write_csv(
        "divergent.csv",
        &["path", "t", "magnitude"],
        stats
            .divergent
            .iter()
            .map(|d| vec![d.path.to_string(), d.t.to_string(), fmt_f64(d.magnitude)]),
    )?;
    run.write_json(
        "summary.json",
        &EnsembleSummary {
            num_paths: stats.num_paths,
            surviving: stats.surviving.len(),
            context: &stats.context,
            divergent: &stats.divergent,
        },
    )
}

fn ncpl_hooks(names: &[MetricName]) -> Result<Vec<&'static dyn MetricHook<NcplGame>>, Failure> {
    names
        .iter()
        .map(|n| match n {
            MetricName::MKappa => Ok(&StationarityKappa as &dyn MetricHook<NcplGame>),
            MetricName::Distance => Ok(&DistanceToSaddle as &dyn MetricHook<NcplGame>),
            MetricName::ConstrainedStationarity => Err(Failure::Config(
                "metrics: constrained_stationarity needs a problem with a constrained dual".into(),
            )),
        })
        .collect()
}

/// Runs the ensemble described by `cfg` and returns its statistics.
pub fn ensemble_stats(cfg: &ExperimentConfig, base: &Path) -> Result<EnsembleStats, Failure> {
    cfg.validate()?;
    match &cfg.problem {
        ProblemConfig::Ncpl(nc) => {
            let game = NcplGame::from_config(nc)?;
            let params = cfg.params.resolve(&game.constants(), &game.noise())?;
            let hooks = ncpl_hooks(&cfg.metrics)?;
            Ok(run_ensemble(&game, &ensemble_spec(cfg, params), &hooks)?)
        }
        ProblemConfig::Dro(dc) => {
            let (problem, _) = dc.load(base)?;
            let params = cfg.params.resolve(&problem.constants(), &problem.noise())?;
            let cs = ConstrainedStationarity { tau2: params.tau2 };
            let hooks = cfg
                .metrics
                .iter()
                .map(|n| match n {
                    MetricName::MKappa => Ok(&StationarityKappa as &dyn MetricHook<DroProblem>),
                    MetricName::ConstrainedStationarity => Ok(&cs as &dyn MetricHook<DroProblem>),
                    MetricName::Distance => Err(Failure::Config(
                        "metrics: distance needs a known saddle point, which this problem lacks".into(),
                    )),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(run_ensemble(&problem, &ensemble_spec(cfg, params), &hooks)?)
        }
    }
}

fn divergence_outcome(stats: &EnsembleStats) -> Result<i32, Failure> {
    if stats.surviving.is_empty() {
        return Err(Failure::Divergence(format!("all {} paths diverged", stats.num_paths)));
    }
    if stats.divergent.is_empty() {
        Ok(0)
    } else {
        log::warn!("{} of {} paths diverged", stats.divergent.len(), stats.num_paths);
        Ok(EXIT_DIVERGED)
    }
}

pub fn cmd_run_ensemble(config_path: &Path, out: &Path) -> Result<i32, Failure> {
    let cfg: ExperimentConfig = config::load(config_path)?;
    let stats = ensemble_stats(&cfg, &base_dir(config_path))?;
    let mut run = RunDir::create(out)?;
    write_ensemble(&mut run, &stats)?;
    run.finish("run-ensemble", &cfg, vec![cfg.base_seed])?;
    divergence_outcome(&stats)
}

/// Bound inputs for an experiment, estimating `Δ₀ + b₀` unless it is given.
pub fn bound_inputs(cfg: &ExperimentConfig) -> Result<(NcplGame, BoundInputs, Option<Delta0B0Estimate>), Failure> {
    let game = match &cfg.problem {
        ProblemConfig::Ncpl(nc) => NcplGame::from_config(nc)?,
        ProblemConfig::Dro(_) => return Err(smagda::Error::ConstrainedDual.into()),
    };
    let params = cfg.params.resolve(&game.constants(), &game.noise())?;
    let (delta0_b0, estimate) = match cfg.bound.delta0_b0 {
        Some(v) => (v, None),
        None => {
            if matches!(cfg.init, InitMode::PerPath { .. }) {
                log::warn!("per-path initialization: Δ₀+b₀ is estimated at the initial point of path 0 only");
            }
            let (x0, y0) = initial_point(&game, &ensemble_spec(cfg, params), 0)?;
            let est = estimate_delta0_b0(&game, &x0, &y0, &x0, params.p, &cfg.bound.search)?;
            (est.total, Some(est))
        }
    };
    let mesh = cfg.bound.mesh.clone().unwrap_or_else(default_mesh);
    let inputs = BoundInputs::from_run(&game.constants(), &params, &game.noise(), delta0_b0, mesh)?;
    Ok((game, inputs, estimate))
}

#[derive(Serialize)]
struct BoundSidecar<'a> {
    inputs: &'a BoundInputs,
    mesh_points: usize,
    constants: smagda::bounds::BoundConstants,
    delta0_b0_estimate: Option<&'a Delta0B0Estimate>,
}

pub fn cmd_bound(config_path: &Path, out: &Path) -> Result<i32, Failure> {
    let cfg: ExperimentConfig = config::load(config_path)?;
    let (game, inputs, estimate) = bound_inputs(&cfg)?;
    let curve = q_bound_for(&game, &inputs)?;
    let mut run = RunDir::create(out)?;
    run.write_csv(
        "bound.csv",
        &["qbar", "Q"],
        curve.points.iter().map(|(q, v)| vec![fmt_f64(*q), fmt_f64(*v)]),
    )?;
    run.write_json(
        "bound.json",
        &BoundSidecar {
            inputs: &inputs,
            mesh_points: inputs.qbar_mesh.len(),
            constants: curve.constants,
            delta0_b0_estimate: estimate.as_ref(),
        },
    )?;
    run.finish("bound", &cfg, vec![cfg.base_seed, cfg.bound.search.seed])?;
    Ok(0)
}

fn read_terminal(dir: &Path) -> Result<Vec<f64>, Failure> {
    let mut reader = csv::Reader::from_path(dir.join("terminal.csv"))
        .map_err(|e| Failure::Config(format!("{}: {e}", dir.join("terminal.csv").display())))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Failure::Other(e.into()))?;
        let v: f64 = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Failure::Other(anyhow::anyhow!("malformed terminal.csv row")))?;
        out.push(v);
    }
    Ok(out)
}

#[derive(Serialize, serde::Deserialize)]
struct StoredSummary {
    context: RunContext,
}

#[derive(Serialize)]
struct ComparisonSummary {
    all_dominated: bool,
    samples: usize,
    mesh_points: usize,
    violations: usize,
    delta0_b0: f64,
}

pub fn cmd_compare(ensemble_dir: &Path, config_path: &Path, out: &Path) -> Result<i32, Failure> {
    verify_manifest(ensemble_dir)?;
    let summary: StoredSummary = {
        let text = std::fs::read_to_string(ensemble_dir.join("summary.json")).map_err(|e| Failure::Other(e.into()))?;
        serde_json::from_str(&text).map_err(|e| Failure::Other(e.into()))?
    };
    let terminal = read_terminal(ensemble_dir)?;
    let cfg: ExperimentConfig = config::load(config_path)?;
    let (_, inputs, _) = bound_inputs(&cfg)?;
    let cmp = compare_quantiles(&terminal, &summary.context, &inputs)?;
    let mut run = RunDir::create(out)?;
    run.write_csv(
        "comparison.csv",
        &["q", "empirical", "theoretical", "theoretical_scaled", "dominated"],
        cmp.rows.iter().map(|r| {
            vec![
                fmt_f64(r.q),
                fmt_f64(r.empirical),
                fmt_f64(r.theoretical),
                fmt_f64(r.theoretical_scaled),
                (r.dominated as u8).to_string(),
            ]
        }),
    )?;
    run.write_json(
        "comparison.json",
        &ComparisonSummary {
            all_dominated: cmp.all_dominated,
            samples: cmp.samples,
            mesh_points: cmp.rows.len(),
            violations: cmp.rows.iter().filter(|r| !r.dominated).count(),
            delta0_b0: inputs.delta0_b0,
        },
    )?;
    run.finish("compare", &cfg, vec![cfg.base_seed])?;
    Ok(if cmp.all_dominated { 0 } else { EXIT_CHECK_FAILED })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub runs: usize,
    pub median_log10: f64,
    pub p10_log10: f64,
    pub p90_log10: f64,
}

impl EpochStats {
    pub fn interdecile_width(&self) -> f64 {
        self.p90_log10 - self.p10_log10
    }
}

/// Median and deciles of `log₁₀` of the metric across runs.
pub fn epoch_stats(epoch: usize, values: &[f64]) -> EpochStats {
    let mut logs: Vec<f64> = values.iter().map(|v| v.log10()).collect();
    logs.sort_by(f64::total_cmp);
    EpochStats {
        epoch,
        runs: logs.len(),
        median_log10: empirical_quantile_sorted(&logs, 0.5),
        p10_log10: empirical_quantile_sorted(&logs, 0.1),
        p90_log10: empirical_quantile_sorted(&logs, 0.9),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DroOutcome {
    pub d1: usize,
    pub d2: usize,
    pub epoch_len: usize,
    pub params: SmAgdaParams,
    pub epochs: Vec<EpochStats>,
    pub diverged_runs: usize,
}

/// `(epoch, run, metric)` rows.
pub type CheckpointTable = Vec<(usize, usize, f64)>;

/// Tunes (optionally) and runs the DRO experiment; returns the per-epoch
/// statistics and the per-run metric table.
pub fn dro_experiment(cfg: &DroRunConfig, base: &Path) -> Result<(DroOutcome, Option<TuneReport>, CheckpointTable), Failure> {
    if cfg.runs == 0 || cfg.epochs == 0 {
        return Err(Failure::Config("runs and epochs must be positive".into()));
    }
    let (problem, report) = cfg.problem.load(base)?;
    let d2 = problem.dataset().d2();
    let epoch_len = d2.div_ceil(problem.settings().batch_size).max(1);

    let (params, tune_report) = match (&cfg.tune, &cfg.params) {
        (Some(t), _) => {
            let budget = TuneBudget {
                iterations: t.epochs * epoch_len,
                paths: t.paths,
                seed: cfg.seed,
            };
            let report = grid_tune_dro(&problem, &t.grid, &budget)?;
            let w = report.winner().params;
            (SmAgdaParams::free(w.tau1, w.tau2, w.beta, w.p, cfg.epochs * epoch_len)?, Some(report))
        }
        (None, Some(p)) => (
            SmAgdaParams::free(p.tau1, p.tau2.unwrap_or(p.tau1 / 48.0), p.beta, p.p, cfg.epochs * epoch_len)?,
            None,
        ),
        (None, None) => return Err(Failure::Config("dro: give either `tune` or `params`".into())),
    };

    let epochs: Vec<usize> = match &cfg.checkpoint_epochs {
        Some(e) => {
            let mut e: Vec<usize> = e.iter().copied().filter(|&k| k <= cfg.epochs).collect();
            e.sort_unstable();
            e.dedup();
            e
        }
        None => (1..=cfg.epochs).collect(),
    };
    let spec = EnsembleSpec {
        num_paths: cfg.runs,
        base_seed: cfg.seed,
        params,
        init: InitMode::Zero,
        schedule: RecordSchedule::Checkpoints(epochs.iter().map(|e| e * epoch_len).collect()),
        keep_paths: true,
        threads: cfg.threads,
    };
    let hook = ConstrainedStationarity { tau2: params.tau2 };
    let hooks: [&dyn MetricHook<DroProblem>; 1] = [&hook];
    let stats = run_ensemble(&problem, &spec, &hooks)?;
    if stats.surviving.is_empty() {
        return Err(Failure::Divergence(format!("all {} runs diverged", cfg.runs)));
    }
    let series = &stats.metrics[0];
    let per_path = series.per_path.as_ref().expect("paths kept");
    let mut table = Vec::new();
    let mut epoch_rows = Vec::new();
    for (k, &t) in series.recorded_t.iter().enumerate() {
        let epoch = t / epoch_len;
        let values: Vec<f64> = per_path.iter().map(|s| s[k]).collect();
        for (run, v) in stats.surviving.iter().zip(&values) {
            table.push((epoch, *run, *v));
        }
        epoch_rows.push(epoch_stats(epoch, &values));
    }
    Ok((
        DroOutcome {
            d1: report.d1,
            d2: report.d2,
            epoch_len,
            params,
            epochs: epoch_rows,
            diverged_runs: stats.divergent.len(),
        },
        tune_report,
        table,
    ))
}

pub fn cmd_dro(config_path: &Path, out: &Path) -> Result<i32, Failure> {
    let cfg: DroRunConfig = config::load(config_path)?;
    let (outcome, tune, table) = dro_experiment(&cfg, &base_dir(config_path))?;
    let mut run = RunDir::create(out)?;
    if let Some(report) = &tune {
        run.write_csv(
            "tune.csv",
            &["rank", "tau1", "tau2", "beta", "p", "median_final", "diverged_paths"],
            report.ranking.iter().enumerate().map(|(rank, &i)| {
                let c = &report.cells[i];
                vec![
                    (rank + 1).to_string(),
                    fmt_f64(c.params.tau1),
                    fmt_f64(c.params.tau2),
                    fmt_f64(c.params.beta),
                    fmt_f64(c.params.p),
                    c.median_final.map(fmt_f64).unwrap_or_default(),
                    c.diverged_paths.to_string(),
                ]
            }),
        )?;
    }
    run.write_csv(
        "checkpoints.csv",
        &["epoch", "run", "constrained_stationarity"],
        table.iter().map(|(e, r, v)| vec![e.to_string(), r.to_string(), fmt_f64(*v)]),
    )?;
    run.write_json("summary.json", &outcome)?;
    run.finish("dro", &cfg, vec![cfg.seed])?;
    Ok(if outcome.diverged_runs > 0 { EXIT_DIVERGED } else { 0 })
}

pub fn cmd_check_concentration(config_path: &Path, out: &Path) -> Result<i32, Failure> {
    let cfg: ConcentrationConfig = config::load(config_path)?;
    let generator = cfg
        .generator
        .unwrap_or_else(|| GeneratorSpec::default_for(cfg.sigma_c_sq, cfg.sigma_d_sq));
    let report = verify_concentration(
        &generator,
        cfg.sigma_c_sq,
        cfg.sigma_d_sq,
        cfg.tau1,
        cfg.iterations,
        cfg.qbar,
        cfg.trials,
        cfg.seed,
    )?;
    let mut run = RunDir::create(out)?;
    run.write_json("concentration.json", &report)?;
    run.finish("check-concentration", &cfg, vec![cfg.seed])?;
    Ok(if report.passed { 0 } else { EXIT_CHECK_FAILED })
}

pub fn cmd_ingest(path: &Path, min_d1: Option<usize>, out: Option<&Path>) -> Result<i32, Failure> {
    let (_, report) = parse_libsvm(path, min_d1)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Other(e.into()))?;
    println!("{text}");
    if let Some(out) = out {
        let mut run = RunDir::create(out)?;
        run.write_json("ingest.json", &report)?;
        run.finish("ingest", &serde_json::json!({ "path": path, "min_d1": min_d1 }), vec![])?;
    }
    Ok(0)
}
