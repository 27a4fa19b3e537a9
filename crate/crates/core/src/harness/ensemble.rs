use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::optimizer::{run, RecordSchedule, Retention, RunOptions, SmAgdaParams};
use crate::problem::{MetricHook, MinimaxProblem, StationarityKappa};
use crate::rng::{keyed_stream, uniform_box, PathStreams, StreamTag};

/// How `(x₀, y₀)` is chosen for each path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum InitMode {
    /// One uniform draw on `[−w, w]` shared by every path.
    Shared { half_width: f64 },
    /// An independent uniform draw per path.
    PerPath { half_width: f64 },
    Fixed { x0: Vec<f64>, y0: Vec<f64> },
    /// `x₀ = 0` and `y₀ = 0`, or the projection of `0` for a constrained dual.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub num_paths: usize,
    pub base_seed: u64,
    pub params: SmAgdaParams,
    pub init: InitMode,
    #[serde(default)]
    pub schedule: RecordSchedule,
    /// Keep every path's metric series in the result.
    #[serde(default)]
    pub keep_paths: bool,
    /// Worker threads; `None` uses the global pool.
    #[serde(default)]
    pub threads: Option<usize>,
}

/// `(x₀, y₀)` of path `path`, with `y₀` projected onto the dual domain when
/// the problem has one. `z₀ = x₀`.
pub fn initial_point<P: MinimaxProblem + ?Sized>(
    problem: &P,
    spec: &EnsembleSpec,
    path: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (dx, dy) = (problem.dim_x(), problem.dim_y());
    let (x0, mut y0) = match &spec.init {
        InitMode::Shared { half_width } | InitMode::PerPath { half_width } => {
            if !(*half_width >= 0.0 && half_width.is_finite()) {
                return Err(invalid("half_width", "must be finite and >= 0"));
            }
            let mut rng = match spec.init {
                InitMode::Shared { .. } => keyed_stream(spec.base_seed, 0, StreamTag::Init, 1),
                _ => keyed_stream(spec.base_seed, path as u64, StreamTag::Init, 0),
            };
            let x0 = uniform_box(&mut rng, dx, *half_width);
            let y0 = uniform_box(&mut rng, dy, *half_width);
            (x0, y0)
        }
        InitMode::Fixed { x0, y0 } => (x0.clone(), y0.clone()),
        InitMode::Zero => (vec![0.0; dx], vec![0.0; dy]),
    };
    if problem.has_dual_projection() {
        problem.project_dual(&mut y0);
    }
    Ok((x0, y0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSeries {
    pub name: String,
    pub recorded_t: Vec<usize>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    /// `per_path[i][k]`: path `surviving[i]` at `recorded_t[k]`, when kept.
    pub per_path: Option<Vec<Vec<f64>>>,
}

impl MetricSeries {
    /// `max − min` at the `k`-th recorded iteration.
    pub fn range_at(&self, k: usize) -> f64 {
        self.max[k] - self.min[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergedPath {
    pub path: usize,
    pub t: usize,
    pub magnitude: f64,
}

/// What a comparison against the bound needs to know about the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunContext {
    pub params: SmAgdaParams,
    pub ell: f64,
    pub mu: f64,
    pub delta_x_sq: f64,
    pub delta_y_sq: f64,
    pub dual_constrained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub num_paths: usize,
    pub context: RunContext,
    pub metrics: Vec<MetricSeries>,
    /// Indices of the paths that finished, in increasing order.
    pub surviving: Vec<usize>,
    /// `X_T = (1/T) Σ_{t<T} M_κ(t)` per surviving path, when `M_κ` is
    /// recorded at every step.
    pub terminal: Option<Vec<f64>>,
    pub divergent: Vec<DivergedPath>,
}

impl EnsembleStats {
    pub fn metric(&self, name: &str) -> Option<&MetricSeries> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

const CHUNK: usize = 64;

/// Running per-iteration reduction, fed paths in index order.
struct Accumulator {
    sum: Vec<f64>,
    min: Vec<f64>,
    max: Vec<f64>,
    per_path: Option<Vec<Vec<f64>>>,
}

impl Accumulator {
    fn new(len: usize, keep: bool) -> Self {
        Self {
            sum: vec![0.0; len],
            min: vec![f64::INFINITY; len],
            max: vec![f64::NEG_INFINITY; len],
            per_path: keep.then(Vec::new),
        }
    }

    fn push(&mut self, series: &[f64]) {
        for (k, &v) in series.iter().enumerate() {
            self.sum[k] += v;
            self.min[k] = self.min[k].min(v);
            self.max[k] = self.max[k].max(v);
        }
        if let Some(pp) = self.per_path.as_mut() {
            pp.push(series.to_vec());
        }
    }
}

/// Runs `spec.num_paths` independent paths with streams `(base_seed, i)`.
///
/// Paths run in parallel; their results are reduced in path order so the
/// statistics do not depend on scheduling. Diverging paths are reported and
/// left out of the statistics.
pub fn run_ensemble<P: MinimaxProblem + ?Sized>(
    problem: &P,
    spec: &EnsembleSpec,
    hooks: &[&dyn MetricHook<P>],
) -> Result<EnsembleStats> {
    if spec.num_paths == 0 {
        return Err(invalid("num_paths", "must be at least 1"));
    }
    spec.params.validate_free()?;
    match spec.threads {
        Some(0) => Err(invalid("threads", "must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| invalid("threads", e.to_string()))?
            .install(|| run_inner(problem, spec, hooks)),
        None => run_inner(problem, spec, hooks),
    }
}

fn run_inner<P: MinimaxProblem + ?Sized>(
    problem: &P,
    spec: &EnsembleSpec,
    hooks: &[&dyn MetricHook<P>],
) -> Result<EnsembleStats> {
    let total = spec.params.iterations;
    let recorded_t: Vec<usize> = match &spec.schedule {
        RecordSchedule::EveryStep => (0..=total).collect(),
        RecordSchedule::Checkpoints(c) => {
            let mut c: Vec<usize> = c.iter().copied().filter(|&t| t <= total).collect();
            c.sort_unstable();
            c.dedup();
            c
        }
    };
    let kappa_index = hooks.iter().position(|h| h.name() == StationarityKappa::NAME);
    let want_terminal = kappa_index.is_some() && matches!(spec.schedule, RecordSchedule::EveryStep) && total > 0;
    let options = RunOptions {
        retention: Retention::MetricsOnly,
        schedule: match spec.schedule {
            RecordSchedule::EveryStep => RecordSchedule::EveryStep,
            RecordSchedule::Checkpoints(_) => RecordSchedule::Checkpoints(recorded_t.clone()),
        },
    };

    let mut acc: Vec<Accumulator> = hooks
        .iter()
        .map(|_| Accumulator::new(recorded_t.len(), spec.keep_paths))
        .collect();
    let mut surviving = Vec::new();
    let mut terminal = Vec::new();
    let mut divergent = Vec::new();

    for start in (0..spec.num_paths).step_by(CHUNK) {
        let end = (start + CHUNK).min(spec.num_paths);
        let results: Vec<Result<Vec<Vec<f64>>>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let (x0, y0) = initial_point(problem, spec, i)?;
                let streams = PathStreams::new(spec.base_seed, i as u64);
                run(problem, &spec.params, streams, x0, y0, None, hooks, &options).map(|tr| tr.metrics)
            })
            .collect();
        for (offset, result) in results.into_iter().enumerate() {
            let path = start + offset;
            match result {
                Ok(metrics) => {
                    for (a, series) in acc.iter_mut().zip(&metrics) {
                        a.push(series);
                    }
                    if let (true, Some(k)) = (want_terminal, kappa_index) {
                        terminal.push(metrics[k][..total].iter().sum::<f64>() / total as f64);
                    }
                    surviving.push(path);
                }
                Err(Error::Divergence { t, magnitude }) => {
                    log::warn!("path {path} diverged at t = {t}");
                    divergent.push(DivergedPath { path, t, magnitude });
                }
                Err(e) => return Err(e),
            }
        }
    }

    let n = surviving.len() as f64;
    let metrics = hooks
        .iter()
        .zip(acc)
        .map(|(h, a)| {
            let mean = a
                .sum
                .iter()
                .zip(a.min.iter().zip(&a.max))
                // The true mean lies in [min, max]; clamping removes rounding excursions.
                .map(|(s, (lo, hi))| if n > 0.0 { (s / n).clamp(*lo, *hi) } else { f64::NAN })
                .collect();
            MetricSeries {
                name: h.name().to_string(),
                recorded_t: recorded_t.clone(),
                mean,
                min: a.min,
                max: a.max,
                per_path: a.per_path,
            }
        })
        .collect();

    let constants = problem.constants();
    let noise = problem.noise();
    Ok(EnsembleStats {
        num_paths: spec.num_paths,
        context: RunContext {
            params: spec.params,
            ell: constants.ell(),
            mu: constants.mu(),
            delta_x_sq: noise.delta_x_sq,
            delta_y_sq: noise.delta_y_sq,
            dual_constrained: problem.has_dual_projection(),
        },
        metrics,
        surviving,
        terminal: want_terminal.then_some(terminal),
        divergent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncpl::NcplGame;
    use crate::problem::DistanceToSaddle;

    fn game() -> NcplGame {
        NcplGame::make(4, 4, 1.0, 1.0, 1.0, 1.0, 2).unwrap()
    }

    fn spec(n: usize, threads: Option<usize>) -> EnsembleSpec {
        let g = game();
        EnsembleSpec {
            num_paths: n,
            base_seed: 17,
            params: SmAgdaParams::theory(&g.constants(), 1.0 / 36.0, 1.0 / 1600.0, 200).unwrap(),
            init: InitMode::PerPath { half_width: 2.0 },
            schedule: RecordSchedule::EveryStep,
            keep_paths: false,
            threads,
        }
    }

    #[test]
    fn single_path_mean_equals_extremes() {
        let g = game();
        let stats = run_ensemble(&g, &spec(1, None), &[&StationarityKappa]).unwrap();
        let m = &stats.metrics[0];
        assert_eq!(m.mean, m.min);
        assert_eq!(m.mean, m.max);
        assert_eq!(m.mean.len(), 201);
        assert_eq!(stats.terminal.as_ref().unwrap().len(), 1);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let g = game();
        let hooks: [&dyn MetricHook<NcplGame>; 2] = [&StationarityKappa, &DistanceToSaddle];
        let a = run_ensemble(&g, &spec(70, Some(1)), &hooks).unwrap();
        let b = run_ensemble(&g, &spec(70, Some(4)), &hooks).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ordering_of_min_mean_max() {
        let g = game();
        let stats = run_ensemble(&g, &spec(9, None), &[&StationarityKappa]).unwrap();
        let m = &stats.metrics[0];
        for k in 0..m.mean.len() {
            assert!(m.min[k] <= m.mean[k] && m.mean[k] <= m.max[k]);
        }
        assert!(stats.terminal.unwrap().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn zero_paths_rejected() {
        assert!(run_ensemble(&game(), &spec(0, None), &[&StationarityKappa]).is_err());
    }

    #[test]
    fn shared_init_is_common() {
        let g = game();
        let mut s = spec(3, None);
        s.init = InitMode::Shared { half_width: 20.0 };
        assert_eq!(initial_point(&g, &s, 0).unwrap(), initial_point(&g, &s, 2).unwrap());
        s.init = InitMode::PerPath { half_width: 20.0 };
        assert_ne!(initial_point(&g, &s, 0).unwrap(), initial_point(&g, &s, 2).unwrap());
    }

    #[test]
    fn divergent_paths_are_listed() {
        let g = game();
        let mut s = spec(3, None);
        s.params = SmAgdaParams::free(5.0, 5.0, 0.1, 0.0, 500).unwrap();
        let stats = run_ensemble(&g, &s, &[&StationarityKappa]).unwrap();
        assert_eq!(stats.divergent.len(), 3);
        assert!(stats.surviving.is_empty());
    }

    #[test]
    fn checkpoints_keep_paths() {
        let g = game();
        let mut s = spec(5, None);
        s.schedule = RecordSchedule::Checkpoints(vec![200, 0, 100, 100]);
        s.keep_paths = true;
        let stats = run_ensemble(&g, &s, &[&StationarityKappa]).unwrap();
        let m = &stats.metrics[0];
        assert_eq!(m.recorded_t, vec![0, 100, 200]);
        assert_eq!(m.per_path.as_ref().unwrap().len(), 5);
        assert!(stats.terminal.is_none());
    }
}
