//! Distributionally robust nonconvex logistic regression
//!
//! `min_x max_{y ∈ Δ} (1/d₂)Σⱼ yⱼ log(1 + exp(−bⱼaⱼᵀx)) + r(x) − g(y)` with
//! `r(x) = λ₁Σᵢ ωxᵢ²/(1 + ωxᵢ²)` and `g(y) = (λ₂d₂/2)‖y − u‖²`, `u = 1/d₂`.
//!
//! The dual variable lives on the probability simplex Δ; sm-AGDA is run with
//! a projection after every ascent step.

pub mod dataset;
pub mod simplex;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use dataset::{parse_libsvm, Dataset, IngestReport, LabelMapping};
pub use simplex::{in_simplex, project_simplex, project_simplex_in_place, SimplexPoint};

use crate::error::{invalid, Result};
use crate::linalg::norm_sq;
use crate::problem::{MetricHook, MinimaxProblem, NoiseSpec, ProblemConstants};
use crate::rng::{fill_standard_normal, NoiseRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DroSettings {
    pub lambda1: f64,
    pub lambda2: f64,
    pub omega: f64,
    pub batch_size: usize,
}

impl Default for DroSettings {
    fn default() -> Self {
        Self {
            lambda1: 1e-4,
            lambda2: 1.0,
            omega: 10.0,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DroProblem {
    data: Dataset,
    settings: DroSettings,
    constants: ProblemConstants,
}

/// Stable `log(1 + exp(−m))`.
fn softplus_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// `1 / (1 + exp(m))`, i.e. sigmoid(−m).
fn sigmoid_neg(m: f64) -> f64 {
    if m > 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

impl DroProblem {
    pub fn new(data: Dataset, settings: DroSettings) -> Result<Self> {
        if data.d2() == 0 {
            return Err(invalid("dataset", "has no samples"));
        }
        if data.d1() == 0 {
            return Err(invalid("dataset", "has no features"));
        }
        if settings.batch_size == 0 || settings.batch_size > data.d2() {
            return Err(invalid(
                "batch_size",
                format!("must be in [1, d2 = {}], got {}", data.d2(), settings.batch_size),
            ));
        }
        for (name, v) in [
            ("lambda1", settings.lambda1),
            ("lambda2", settings.lambda2),
            ("omega", settings.omega),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be finite and >= 0"));
            }
        }
        let constants = Self::tuned_constants(&data, &settings)?;
        Ok(Self {
            data,
            settings,
            constants,
        })
    }

    /// Heuristic smoothness constants. No global Lipschitz constant is known
    /// for this objective, so the result is flagged as uncertified.
    fn tuned_constants(data: &Dataset, s: &DroSettings) -> Result<ProblemConstants> {
        let d2 = data.d2() as f64;
        let max_row_sq = (0..data.d2()).map(|j| data.row_norm_sq(j)).fold(0.0, f64::max);
        let strong_concavity = s.lambda2 * d2;
        let ell = strong_concavity + max_row_sq / 4.0 + 2.0 * s.lambda1 * s.omega + max_row_sq.sqrt() / d2;
        let mu = if strong_concavity > 0.0 { strong_concavity } else { ell };
        Ok(ProblemConstants::new(ell, mu.min(ell))?.uncertified())
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn settings(&self) -> &DroSettings {
        &self.settings
    }

    fn margin(&self, j: usize, x: &[f64]) -> f64 {
        self.data.label(j) * self.data.row_dot(j, x)
    }

    pub fn loss(&self, j: usize, x: &[f64]) -> f64 {
        softplus_neg(self.margin(j, x))
    }

    pub fn regularizer(&self, x: &[f64]) -> f64 {
        let w = self.settings.omega;
        self.settings.lambda1 * x.iter().map(|v| w * v * v / (1.0 + w * v * v)).sum::<f64>()
    }

    pub fn dual_penalty(&self, y: &[f64]) -> f64 {
        let d2 = self.data.d2() as f64;
        let u = 1.0 / d2;
        0.5 * self.settings.lambda2 * d2 * y.iter().map(|v| (v - u) * (v - u)).sum::<f64>()
    }

    /// `out = r′(x) + scale · Σ_{j∈rows} yⱼ ∇ℓⱼ(x)`
    fn grad_x_over<I: Iterator<Item = usize>>(&self, x: &[f64], y: &[f64], rows: I, scale: f64, out: &mut [f64]) {
        let mut acc = vec![0.0; self.data.d1()];
        for j in rows {
            let b = self.data.label(j);
            let m = b * self.data.row_dot(j, x);
            let coef = -b * y[j] * sigmoid_neg(m);
            let (idx, val) = self.data.row(j);
            for (i, v) in idx.iter().zip(val) {
                acc[*i as usize] += coef * v;
            }
        }
        let (l1, w) = (self.settings.lambda1, self.settings.omega);
        for ((o, a), xi) in out.iter_mut().zip(&acc).zip(x) {
            let denom = 1.0 + w * xi * xi;
            *o = l1 * (2.0 * w * xi / (denom * denom)) + scale * a;
        }
    }

    /// Loss part `scale · ℓⱼ(x)` on `rows`, zero elsewhere, plus the exact
    /// regularizer part `−λ₂d₂(yⱼ − 1/d₂)`.
    fn grad_y_over<I: Iterator<Item = usize>>(&self, x: &[f64], y: &[f64], rows: I, scale: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in rows {
            out[j] = self.loss(j, x) * scale;
        }
        let d2 = self.data.d2() as f64;
        let coef = self.settings.lambda2 * d2;
        let u = 1.0 / d2;
        for (o, yj) in out.iter_mut().zip(y) {
            *o -= coef * (yj - u);
        }
    }

    fn draw_batch(&self, rng: &mut NoiseRng) -> Vec<usize> {
        let n = self.data.d2();
        let b = self.settings.batch_size;
        if b == n {
            return (0..n).collect();
        }
        let mut idx = sample(rng, n, b).into_vec();
        idx.sort_unstable();
        idx
    }

    pub fn grad_x_full(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.data.d1()];
        self.grad_x_into(x, y, &mut out);
        out
    }

    pub fn grad_y_full(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.data.d2()];
        self.grad_y_into(x, y, &mut out);
        out
    }

    /// Both partial gradients from one uniform without-replacement minibatch.
    pub fn grad_stoch(&self, x: &[f64], y: &[f64], rng: &mut NoiseRng) -> (Vec<f64>, Vec<f64>) {
        let batch = self.draw_batch(rng);
        let scale = 1.0 / batch.len() as f64;
        let mut gx = vec![0.0; self.data.d1()];
        let mut gy = vec![0.0; self.data.d2()];
        self.grad_x_over(x, y, batch.iter().copied(), scale, &mut gx);
        self.grad_y_over(x, y, batch.iter().copied(), scale, &mut gy);
        (gx, gy)
    }

    /// Projected-gradient residual `(P(y + τ₂∇_y f) − y)/τ₂` in the dual.
    pub fn dual_residual(&self, x: &[f64], y: &[f64], tau2: f64) -> Vec<f64> {
        let g = self.grad_y_full(x, y);
        let mut moved: Vec<f64> = y.iter().zip(&g).map(|(yj, gj)| yj + tau2 * gj).collect();
        project_simplex_in_place(&mut moved);
        moved.iter().zip(y).map(|(p, yj)| (p - yj) / tau2).collect()
    }

    /// `‖∇ₓf‖² + ‖(P(y + τ₂∇_y f) − y)/τ₂‖²`.
    pub fn constrained_stationarity(&self, x: &[f64], y: &[f64], tau2: f64) -> f64 {
        norm_sq(&self.grad_x_full(x, y)) + norm_sq(&self.dual_residual(x, y, tau2))
    }
}

impl MinimaxProblem for DroProblem {
    fn dim_x(&self) -> usize {
        self.data.d1()
    }

    fn dim_y(&self) -> usize {
        self.data.d2()
    }

    fn constants(&self) -> ProblemConstants {
        self.constants
    }

    /// Minibatch noise has no closed-form proxy; reported as zero.
    fn noise(&self) -> NoiseSpec {
        NoiseSpec::exact()
    }

    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let d2 = self.data.d2();
        let weighted: f64 = (0..d2).map(|j| y[j] * self.loss(j, x)).sum();
        weighted / d2 as f64 + self.regularizer(x) - self.dual_penalty(y)
    }

    fn grad_x_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let n = self.data.d2();
        self.grad_x_over(x, y, 0..n, 1.0 / n as f64, out);
    }

    fn grad_y_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let n = self.data.d2();
        self.grad_y_over(x, y, 0..n, 1.0 / n as f64, out);
    }

    fn grad_x_stoch_into(&self, x: &[f64], y: &[f64], rng: &mut NoiseRng, out: &mut [f64]) {
        let batch = self.draw_batch(rng);
        let scale = 1.0 / batch.len() as f64;
        self.grad_x_over(x, y, batch.into_iter(), scale, out);
    }

    fn grad_y_stoch_into(&self, x: &[f64], y: &[f64], rng: &mut NoiseRng, out: &mut [f64]) {
        let batch = self.draw_batch(rng);
        let scale = 1.0 / batch.len() as f64;
        self.grad_y_over(x, y, batch.into_iter(), scale, out);
    }

    fn has_dual_projection(&self) -> bool {
        true
    }

    fn project_dual(&self, y: &mut [f64]) {
        project_simplex_in_place(y);
    }

    fn sample_point(&self, rng: &mut NoiseRng) -> (Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; self.dim_x()];
        fill_standard_normal(rng, &mut x);
        let mut y: Vec<f64> = (0..self.dim_y())
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let s: f64 = y.iter().sum();
        y.iter_mut().for_each(|v| *v /= s);
        (x, y)
    }
}

/// Constrained stationarity metric with the run's dual stepsize.
#[derive(Debug, Clone, Copy)]
pub struct ConstrainedStationarity {
    pub tau2: f64,
}

impl ConstrainedStationarity {
    pub const NAME: &'static str = "constrained_stationarity";
}

impl MetricHook<DroProblem> for ConstrainedStationarity {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn eval(&self, problem: &DroProblem, x: &[f64], y: &[f64]) -> f64 {
        problem.constrained_stationarity(x, y, self.tau2)
    }
}
