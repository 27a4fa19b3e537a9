//! sm-AGDA: smoothed alternating gradient descent ascent.
//!
//! One step, with stochastic oracles `G_x`, `G_y`:
//!
//! ```text
//! x⁺ = x − τ₁ [G_x(x, y) + p (x − z)]
//! y⁺ = y + τ₂ G_y(x⁺, y)            (projected when the dual is constrained)
//! z⁺ = z + β (x⁺ − z)
//! ```
//!
//! The dual oracle is evaluated at the freshly updated primal point. With
//! `p = 0` the method reduces to plain stochastic AGDA.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::problem::{MetricHook, MinimaxProblem, ProblemConstants};
use crate::rng::{NoiseRng, PathStreams};

/// Largest β-policy coefficient covered by the convergence theory.
pub const ALPHA_MAX: f64 = 1.0 / 406.0;
/// Iterates beyond this magnitude abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
const POLICY_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmAgdaParams {
    pub tau1: f64,
    pub tau2: f64,
    pub beta: f64,
    pub p: f64,
    pub iterations: usize,
    /// β-policy coefficient (`β = αμτ₂`); `None` for hand-picked parameters.
    pub alpha: Option<f64>,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= POLICY_RTOL * a.abs().max(b.abs())
}

impl SmAgdaParams {
    /// Hand-picked parameters: positive stepsizes, `β ∈ [0, 1]`, `p ≥ 0`.
    pub fn free(tau1: f64, tau2: f64, beta: f64, p: f64, iterations: usize) -> Result<Self> {
        let params = Self {
            tau1,
            tau2,
            beta,
            p,
            iterations,
            alpha: None,
        };
        params.validate_free()?;
        Ok(params)
    }

    /// Plain stochastic AGDA, the `p = 0` configuration.
    pub fn plain_agda(tau1: f64, tau2: f64, iterations: usize) -> Result<Self> {
        Self::free(tau1, tau2, 0.0, 0.0, iterations)
    }

    /// The theory policy for a given primal stepsize: `p = 2ℓ`,
    /// `τ₂ = τ₁/48`, `β = αμτ₂`.
    pub fn theory(constants: &ProblemConstants, tau1: f64, alpha: f64, iterations: usize) -> Result<Self> {
        let tau2 = tau1 / 48.0;
        let params = Self {
            tau1,
            tau2,
            beta: alpha * constants.mu() * tau2,
            p: 2.0 * constants.ell(),
            iterations,
            alpha: Some(alpha),
        };
        params.validate_theory(constants)?;
        Ok(params)
    }

    pub fn validate_free(&self) -> Result<()> {
        if !(self.tau1 > 0.0 && self.tau1.is_finite()) {
            return Err(invalid("tau1", "must be positive and finite"));
        }
        if !(self.tau2 > 0.0 && self.tau2.is_finite()) {
            return Err(invalid("tau2", "must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(invalid("beta", "must lie in [0, 1]"));
        }
        if !(self.p >= 0.0 && self.p.is_finite()) {
            return Err(invalid("p", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn validate_theory(&self, constants: &ProblemConstants) -> Result<()> {
        self.validate_free()?;
        let ell = constants.ell();
        if self.tau1 > 1.0 / (3.0 * ell) * (1.0 + POLICY_RTOL) {
            return Err(invalid("tau1", format!("{} exceeds 1/(3ℓ) = {}", self.tau1, 1.0 / (3.0 * ell))));
        }
        if !close(self.tau2, self.tau1 / 48.0) {
            return Err(invalid("tau2", "must equal tau1/48"));
        }
        if !close(self.p, 2.0 * ell) {
            return Err(invalid("p", format!("must equal 2ℓ = {}", 2.0 * ell)));
        }
        let alpha = self.alpha.ok_or_else(|| invalid("alpha", "required by the theory policy"))?;
        if !(alpha > 0.0 && alpha <= ALPHA_MAX) {
            return Err(invalid("alpha", format!("must lie in (0, 1/406], got {alpha}")));
        }
        if !close(self.beta, alpha * constants.mu() * self.tau2) {
            return Err(invalid("beta", "must equal alpha·mu·tau2"));
        }
        Ok(())
    }
}

/// Horizon-dependent theory parameters:
/// `τ₁ = min(1/(3ℓ), 48√(Δ₀+b₀)/√(Tℓδ²))` with `δ² = δ_x² + δ_y²`, then the
/// policy of [`SmAgdaParams::theory`]. With `δ² = 0` the first branch applies.
pub fn derive_params(
    constants: &ProblemConstants,
    iterations: usize,
    delta0_b0: f64,
    delta_sq: f64,
    alpha: f64,
) -> Result<SmAgdaParams> {
    if iterations == 0 {
        return Err(invalid("iterations", "must be positive"));
    }
    if !(delta0_b0 > 0.0 && delta0_b0.is_finite()) {
        return Err(invalid("delta0_b0", "must be positive and finite"));
    }
    if !(delta_sq >= 0.0 && delta_sq.is_finite()) {
        return Err(invalid("delta_sq", "must be finite and >= 0"));
    }
    let ell = constants.ell();
    let short = 1.0 / (3.0 * ell);
    let tau1 = if delta_sq == 0.0 {
        short
    } else {
        short.min(48.0 * delta0_b0.sqrt() / (iterations as f64 * ell * delta_sq).sqrt())
    };
    SmAgdaParams::theory(constants, tau1, alpha, iterations)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Proximal center.
    pub z: Vec<f64>,
    pub t: usize,
}

impl IterateState {
    pub fn new<P: MinimaxProblem + ?Sized>(problem: &P, x0: Vec<f64>, y0: Vec<f64>, z0: Option<Vec<f64>>) -> Result<Self> {
        let z0 = z0.unwrap_or_else(|| x0.clone());
        for (what, v, n) in [
            ("x0", &x0, problem.dim_x()),
            ("y0", &y0, problem.dim_y()),
            ("z0", &z0, problem.dim_x()),
        ] {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    found: v.len(),
                });
            }
            if !crate::linalg::all_finite(v) {
                return Err(Error::NonFinite(what));
            }
        }
        Ok(Self { x: x0, y: y0, z: z0, t: 0 })
    }
}

/// Scratch buffers for one path.
struct Workspace {
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl Workspace {
    fn for_problem<P: MinimaxProblem + ?Sized>(problem: &P) -> Self {
        Self {
            gx: vec![0.0; problem.dim_x()],
            gy: vec![0.0; problem.dim_y()],
        }
    }
}

fn step_in_place<P: MinimaxProblem + ?Sized>(
    problem: &P,
    state: &mut IterateState,
    params: &SmAgdaParams,
    streams: &PathStreams,
    ws: &mut Workspace,
) -> Result<()> {
    let t = state.t;
    let mut x_rng = streams.x_noise(t);
    problem.grad_x_stoch_into(&state.x, &state.y, &mut x_rng, &mut ws.gx);
    for ((x, z), g) in state.x.iter_mut().zip(&state.z).zip(&ws.gx) {
        *x -= params.tau1 * (g + params.p * (*x - z));
    }

    let mut y_rng = streams.y_noise(t);
    problem.grad_y_stoch_into(&state.x, &state.y, &mut y_rng, &mut ws.gy);
    for (y, g) in state.y.iter_mut().zip(&ws.gy) {
        *y += params.tau2 * g;
    }
    if problem.has_dual_projection() {
        problem.project_dual(&mut state.y);
    }

    // (1 − β)z + βx is the same average as z + β(x − z) and returns x exactly
    // when β = 1.
    let keep = 1.0 - params.beta;
    for (z, x) in state.z.iter_mut().zip(&state.x) {
        *z = keep * *z + params.beta * x;
    }
    state.t += 1;

    let worst = state
        .x
        .iter()
        .chain(&state.y)
        .chain(&state.z)
        .fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
    if worst > DIVERGENCE_LIMIT {
        return Err(Error::Divergence { t, magnitude: worst });
    }
    Ok(())
}

/// One sm-AGDA step from `state`, using the noise streams of step `state.t`.
pub fn step<P: MinimaxProblem + ?Sized>(
    problem: &P,
    state: &IterateState,
    params: &SmAgdaParams,
    streams: &PathStreams,
) -> Result<IterateState> {
    let mut next = state.clone();
    let mut ws = Workspace::for_problem(problem);
    step_in_place(problem, &mut next, params, streams, &mut ws)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retention {
    #[default]
    MetricsOnly,
    Full,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSchedule {
    /// Metrics at every `t = 0..=T`.
    #[default]
    EveryStep,
    /// Metrics only at the listed iterations (those `> T` are ignored).
    Checkpoints(Vec<usize>),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub retention: Retention,
    pub schedule: RecordSchedule,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub streams: PathStreams,
    pub params: SmAgdaParams,
    pub metric_names: Vec<String>,
    /// Iterations at which metrics were recorded.
    pub recorded_t: Vec<usize>,
    /// `metrics[k][i]` is metric `k` at iteration `recorded_t[i]`.
    pub metrics: Vec<Vec<f64>>,
    /// `(x_t, y_t)` for `t = 0..=T` under full retention.
    pub iterates: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    pub final_state: IterateState,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.params.iterations + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn metric(&self, name: &str) -> Option<&[f64]> {
        let k = self.metric_names.iter().position(|n| n == name)?;
        Some(&self.metrics[k])
    }

    /// `(1/T) Σ_{t<T} metric(t)`; requires every-step recording and `T ≥ 1`.
    pub fn path_average(&self, name: &str) -> Option<f64> {
        let series = self.metric(name)?;
        let t = self.params.iterations;
        if t == 0 || series.len() != t + 1 {
            return None;
        }
        Some(series[..t].iter().sum::<f64>() / t as f64)
    }
}

/// Runs `params.iterations` steps from `(x0, y0, z0)`; `z0` defaults to `x0`.
/// Hooks are evaluated at `(x_t, y_t)` before step `t` and once more at the
/// final iterate.
pub fn run<P: MinimaxProblem + ?Sized>(
    problem: &P,
    params: &SmAgdaParams,
    streams: PathStreams,
    x0: Vec<f64>,
    y0: Vec<f64>,
    z0: Option<Vec<f64>>,
    hooks: &[&dyn MetricHook<P>],
    options: &RunOptions,
) -> Result<Trajectory> {
    params.validate_free()?;
    let mut state = IterateState::new(problem, x0, y0, z0)?;
    let total = params.iterations;
    let wanted = |t: usize| match &options.schedule {
        RecordSchedule::EveryStep => true,
        RecordSchedule::Checkpoints(c) => c.contains(&t),
    };
    let mut recorded_t = Vec::new();
    let mut metrics: Vec<Vec<f64>> = vec![Vec::new(); hooks.len()];
    let mut iterates = match options.retention {
        Retention::Full => Some(Vec::with_capacity(total + 1)),
        Retention::MetricsOnly => None,
    };
    let mut ws = Workspace::for_problem(problem);

    for t in 0..=total {
        if wanted(t) {
            recorded_t.push(t);
            for (series, hook) in metrics.iter_mut().zip(hooks) {
                series.push(hook.eval(problem, &state.x, &state.y));
            }
        }
        if let Some(it) = iterates.as_mut() {
            it.push((state.x.clone(), state.y.clone()));
        }
        if t < total {
            step_in_place(problem, &mut state, params, &streams, &mut ws)?;
        }
    }

    Ok(Trajectory {
        streams,
        params: *params,
        metric_names: hooks.iter().map(|h| h.name().to_string()).collect(),
        recorded_t,
        metrics,
        iterates,
        final_state: state,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedOutput {
    pub index: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Draws `U` uniformly from `{0, …, T−1}` and returns `(x_U, y_U)`.
pub fn select_output(trajectory: &Trajectory, rng: &mut NoiseRng) -> Result<SelectedOutput> {
    let iterates = trajectory.iterates.as_ref().ok_or(Error::RetentionRequired)?;
    let t = trajectory.params.iterations;
    if t == 0 {
        return Err(invalid("iterations", "output selection needs T >= 1"));
    }
    let index = rng.random_range(0..t);
    let (x, y) = iterates[index].clone();
    Ok(SelectedOutput { index, x, y })
}

/// Plain stochastic AGDA written out on its own, `x⁺ = x − τ₁G_x(x, y)`,
/// `y⁺ = y + τ₂G_y(x⁺, y)`, consuming the same noise streams as [`run`].
/// Returns `(x_t, y_t)` for `t = 0..=T`.
pub fn plain_agda<P: MinimaxProblem + ?Sized>(
    problem: &P,
    tau1: f64,
    tau2: f64,
    iterations: usize,
    streams: &PathStreams,
    x0: Vec<f64>,
    y0: Vec<f64>,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = Vec::with_capacity(iterations + 1);
    let (mut x, mut y) = (x0, y0);
    let mut gx = vec![0.0; x.len()];
    let mut gy = vec![0.0; y.len()];
    for t in 0..iterations {
        out.push((x.clone(), y.clone()));
        problem.grad_x_stoch_into(&x, &y, &mut streams.x_noise(t), &mut gx);
        for (xi, g) in x.iter_mut().zip(&gx) {
            *xi -= tau1 * g;
        }
        problem.grad_y_stoch_into(&x, &y, &mut streams.y_noise(t), &mut gy);
        for (yi, g) in y.iter_mut().zip(&gy) {
            *yi += tau2 * g;
        }
        if problem.has_dual_projection() {
            problem.project_dual(&mut y);
        }
    }
    out.push((x, y));
    out
}
