//! High-probability bound machinery.
//!
//! - [`sigma_c_sq`] and [`sigma_d_sq`]: the noise proxies of the martingale and
//!   drift terms in the Lyapunov descent.
//! - [`q_bound`]: `Q_{q̄,T} = r₁{(Δ₀+b₀)/T + r₂ + (r₃/T) log(1/q̄)}` with
//!   `r₁ = 64κ/(ατ₂)`, `r₂ = σ_D²`, `r₃ = max{4σ_C², 2σ_D²}`.
//! - [`estimate_delta0_b0`]: a search-based estimate of the initialization gap.
//! - [`verify_concentration`]: Monte Carlo check of the concentration
//!   inequality on synthetic processes.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{all_finite, dist_sq};
use crate::optimizer::{SmAgdaParams, ALPHA_MAX};
use crate::problem::{MinimaxProblem, NoiseSpec, ProblemConstants};
use crate::rng::{keyed_stream, standard_normal, StreamTag};

const POLICY_RTOL: f64 = 1e-12;

pub fn sigma_c_sq(tau1: f64, delta_x_sq: f64, delta_y_sq: f64) -> f64 {
    tau1 * (240.0 * delta_x_sq + 32.0 * delta_y_sq)
}

pub fn sigma_d_sq(ell: f64, tau1: f64, tau2: f64, delta_x_sq: f64, delta_y_sq: f64) -> f64 {
    16.0 * ell * tau1 * tau1 * delta_x_sq + 64.0 * ell * tau2 * tau2 * delta_y_sq
}

/// Mesh step and margin of the default confidence grid.
pub const MESH_STEP: f64 = 2e-4;

/// `q̄ = k·2e−4` for `k = 1..=4999`.
pub fn default_mesh() -> Vec<f64> {
    let n = (1.0 / MESH_STEP).round() as usize;
    (1..n).map(|k| k as f64 * MESH_STEP).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputs {
    pub ell: f64,
    pub mu: f64,
    pub kappa: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub alpha: f64,
    pub delta_x_sq: f64,
    pub delta_y_sq: f64,
    pub delta0_b0: f64,
    #[serde(rename = "T")]
    pub iterations: usize,
    #[serde(default = "default_mesh", skip_serializing)]
    pub qbar_mesh: Vec<f64>,
}

impl BoundInputs {
    pub fn from_run(
        constants: &ProblemConstants,
        params: &SmAgdaParams,
        noise: &NoiseSpec,
        delta0_b0: f64,
        qbar_mesh: Vec<f64>,
    ) -> Result<Self> {
        let alpha = params
            .alpha
            .ok_or_else(|| invalid("alpha", "the bound needs theory-policy parameters"))?;
        let inputs = Self {
            ell: constants.ell(),
            mu: constants.mu(),
            kappa: constants.kappa(),
            tau1: params.tau1,
            tau2: params.tau2,
            alpha,
            delta_x_sq: noise.delta_x_sq,
            delta_y_sq: noise.delta_y_sq,
            delta0_b0,
            iterations: params.iterations,
            qbar_mesh,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ell", self.ell),
            ("mu", self.mu),
            ("kappa", self.kappa),
            ("tau1", self.tau1),
            ("tau2", self.tau2),
            ("alpha", self.alpha),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive and finite"));
            }
        }
        for (name, v) in [
            ("delta_x_sq", self.delta_x_sq),
            ("delta_y_sq", self.delta_y_sq),
            ("delta0_b0", self.delta0_b0),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be finite and >= 0"));
            }
        }
        if self.iterations == 0 {
            return Err(invalid("T", "must be positive"));
        }
        if (self.kappa - self.ell / self.mu).abs() > POLICY_RTOL * self.kappa {
            return Err(invalid("kappa", "must equal ell/mu"));
        }
        if (self.tau2 - self.tau1 / 48.0).abs() > POLICY_RTOL * self.tau2 {
            return Err(invalid("tau2", "must equal tau1/48"));
        }
        if self.tau1 > (1.0 + POLICY_RTOL) / (3.0 * self.ell) {
            return Err(invalid("tau1", "must not exceed 1/(3ℓ)"));
        }
        if self.alpha > ALPHA_MAX {
            return Err(invalid("alpha", "must not exceed 1/406"));
        }
        let mut prev = 0.0;
        for &q in &self.qbar_mesh {
            if !(q > 0.0 && q < 1.0) {
                return Err(invalid("qbar_mesh", format!("{q} is outside (0, 1)")));
            }
            if q <= prev {
                return Err(invalid("qbar_mesh", "must be strictly increasing"));
            }
            prev = q;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    pub sigma_c_sq: f64,
    pub sigma_d_sq: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    /// False when `2σ_D² > 4σ_C²` and the second branch of `r₃` governs.
    pub r3_is_four_sigma_c: bool,
}

pub fn bound_constants(inputs: &BoundInputs) -> BoundConstants {
    let sc = sigma_c_sq(inputs.tau1, inputs.delta_x_sq, inputs.delta_y_sq);
    let sd = sigma_d_sq(inputs.ell, inputs.tau1, inputs.tau2, inputs.delta_x_sq, inputs.delta_y_sq);
    let four_c = 4.0 * sc;
    let two_d = 2.0 * sd;
    let r3_is_four_sigma_c = four_c >= two_d;
    if !r3_is_four_sigma_c {
        log::warn!("r3 governed by 2σ_D² = {two_d:e} > 4σ_C² = {four_c:e}");
    }
    BoundConstants {
        sigma_c_sq: sc,
        sigma_d_sq: sd,
        r1: 64.0 / inputs.alpha * inputs.kappa / inputs.tau2,
        r2: sd,
        r3: four_c.max(two_d),
        r3_is_four_sigma_c,
    }
}

impl BoundConstants {
    pub fn q_at(&self, delta0_b0: f64, iterations: usize, qbar: f64) -> f64 {
        let t = iterations as f64;
        self.r1 * (delta0_b0 / t + self.r2 + self.r3 / t * (1.0 / qbar).ln())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileCurve {
    /// `(q̄, Q_{q̄,T})` over the mesh.
    pub points: Vec<(f64, f64)>,
    pub inputs: BoundInputs,
    pub constants: BoundConstants,
}

/// Evaluates `Q_{q̄,T}` over `inputs.qbar_mesh`.
pub fn q_bound(inputs: &BoundInputs) -> Result<QuantileCurve> {
    inputs.validate()?;
    let constants = bound_constants(inputs);
    let points = inputs
        .qbar_mesh
        .iter()
        .map(|&q| (q, constants.q_at(inputs.delta0_b0, inputs.iterations, q)))
        .collect();
    Ok(QuantileCurve {
        points,
        inputs: inputs.clone(),
        constants,
    })
}

/// [`q_bound`] for a concrete problem; problems with a constrained dual are
/// refused.
pub fn q_bound_for<P: MinimaxProblem + ?Sized>(problem: &P, inputs: &BoundInputs) -> Result<QuantileCurve> {
    if problem.has_dual_projection() {
        return Err(Error::ConstrainedDual);
    }
    q_bound(inputs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SearchMode {
    /// Uniform grid with `2^level + 1` points per axis on the box.
    Grid { level: u32 },
    /// Uniform samples on the box, then projected gradient refinement from the
    /// best candidate.
    Sampled { samples: usize, refine_steps: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpec {
    /// The search box is `[−half_width, half_width]^d` in each block.
    pub half_width: f64,
    pub mode: SearchMode,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            half_width: 1e3,
            mode: SearchMode::Sampled {
                samples: 64,
                refine_steps: 300,
            },
            seed: 0,
        }
    }
}

const GRID_POINT_LIMIT: u64 = 50_000_000;

impl SearchSpec {
    fn validate(&self, dim_x: usize, dim_y: usize) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(invalid("half_width", "must be positive and finite"));
        }
        match self.mode {
            SearchMode::Grid { level } => {
                let per_axis = (1u64 << level.min(40)) + 1;
                let count = |d: usize| per_axis.checked_pow(d as u32).unwrap_or(u64::MAX);
                let nested = count(dim_x).saturating_mul(count(dim_y));
                if level > 20 || nested > GRID_POINT_LIMIT {
                    return Err(invalid(
                        "mode",
                        format!("grid of level {level} is too large for dimensions ({dim_x}, {dim_y})"),
                    ));
                }
            }
            SearchMode::Sampled { .. } => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extremum {
    pub value: f64,
    pub point: Vec<f64>,
    /// The best point touches the search box.
    pub on_boundary: bool,
}

/// Deterministic maximization or minimization over the search box.
struct Searcher<'a> {
    spec: &'a SearchSpec,
    /// +1 to maximize, −1 to minimize.
    sense: f64,
    step: f64,
    counter: u64,
}

impl Searcher<'_> {
    fn better(&self, a: f64, b: f64) -> bool {
        self.sense * a > self.sense * b
    }

    fn run(
        &self,
        dim: usize,
        candidates: &[&[f64]],
        value: &dyn Fn(&[f64]) -> f64,
        grad: &dyn Fn(&[f64], &mut [f64]),
    ) -> Extremum {
        let r = self.spec.half_width;
        let mut best_value = f64::NAN;
        let mut best = Vec::new();
        let consider = |p: &[f64], v: f64, best_value: &mut f64, best: &mut Vec<f64>| {
            if v.is_finite() && (best.is_empty() || self.better(v, *best_value)) {
                *best_value = v;
                best.clear();
                best.extend_from_slice(p);
            }
        };
        for c in candidates {
            consider(c, value(c), &mut best_value, &mut best);
        }
        match self.spec.mode {
            SearchMode::Grid { level } => {
                let per_axis = (1usize << level) + 1;
                let h = 2.0 * r / (per_axis - 1) as f64;
                let mut idx = vec![0usize; dim];
                let mut p = vec![-r; dim];
                loop {
                    consider(&p, value(&p), &mut best_value, &mut best);
                    let mut k = 0;
                    while k < dim {
                        idx[k] += 1;
                        if idx[k] < per_axis {
                            p[k] = -r + idx[k] as f64 * h;
                            break;
                        }
                        idx[k] = 0;
                        p[k] = -r;
                        k += 1;
                    }
                    if k == dim {
                        break;
                    }
                }
            }
            SearchMode::Sampled { samples, refine_steps } => {
                let mut rng = keyed_stream(self.spec.seed, 0, StreamTag::Search, self.counter);
                let mut p = vec![0.0; dim];
                for _ in 0..samples {
                    for v in p.iter_mut() {
                        *v = rng.random_range(-r..=r);
                    }
                    consider(&p, value(&p), &mut best_value, &mut best);
                }
                if !best.is_empty() {
                    let mut cur = best.clone();
                    let mut g = vec![0.0; dim];
                    for _ in 0..refine_steps {
                        grad(&cur, &mut g);
                        for (c, gi) in cur.iter_mut().zip(&g) {
                            *c = (*c + self.sense * self.step * gi).clamp(-r, r);
                        }
                        if !all_finite(&cur) {
                            break;
                        }
                        consider(&cur, value(&cur), &mut best_value, &mut best);
                    }
                }
            }
        }
        let on_boundary = best.iter().any(|v| v.abs() >= r * (1.0 - 1e-9));
        Extremum {
            value: best_value,
            point: best,
            on_boundary,
        }
    }
}

/// `max_y f(x, y)` over the search box (with `y = 0` as an extra candidate).
pub fn maximize_dual<P: MinimaxProblem + ?Sized>(problem: &P, x: &[f64], spec: &SearchSpec) -> Extremum {
    maximize_dual_from(problem, x, &[], spec)
}

fn maximize_dual_from<P: MinimaxProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    extra: &[&[f64]],
    spec: &SearchSpec,
) -> Extremum {
    let origin = vec![0.0; problem.dim_y()];
    let mut candidates: Vec<&[f64]> = vec![&origin];
    candidates.extend_from_slice(extra);
    Searcher {
        spec,
        sense: 1.0,
        step: 1.0 / problem.constants().ell(),
        counter: 1,
    }
    .run(
        problem.dim_y(),
        &candidates,
        &|y| problem.value(x, y),
        &|y, out| problem.grad_y_into(x, y, out),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Delta0B0Estimate {
    pub delta0: f64,
    pub b0: f64,
    pub total: f64,
    /// Estimate of `Φ(z₀) = max_y f(z₀, y)`.
    pub phi_z0: f64,
    /// Estimate of `Φ* = min_x Φ(x)`.
    pub phi_star: f64,
    pub p: f64,
    pub search: SearchSpec,
    /// Some optimum sits on the search box; the estimate may be loose.
    pub boundary_warning: bool,
}

/// Estimates `Δ₀ + b₀` where `Δ₀ = Φ(z₀) − Φ*` and
/// `b₀ = 2[max_y f̂(x₀, y; z₀) − min_x f̂(x, y₀; z₀)]` with
/// `f̂(x, y; z) = f(x, y) + (p/2)‖x − z‖²`.
///
/// Every search includes the initial point among its candidates, so both
/// gaps are nonnegative. The result is an estimate, not a certified bound.
pub fn estimate_delta0_b0<P: MinimaxProblem + ?Sized>(
    problem: &P,
    x0: &[f64],
    y0: &[f64],
    z0: &[f64],
    p: f64,
    spec: &SearchSpec,
) -> Result<Delta0B0Estimate> {
    let (dx, dy) = (problem.dim_x(), problem.dim_y());
    for (what, v, n) in [("x0", x0, dx), ("y0", y0, dy), ("z0", z0, dx)] {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                what,
                expected: n,
                found: v.len(),
            });
        }
        if !all_finite(v) {
            return Err(Error::NonFinite(what));
        }
    }
    if !(p >= 0.0 && p.is_finite()) {
        return Err(invalid("p", "must be finite and >= 0"));
    }
    spec.validate(dx, dy)?;
    let ell = problem.constants().ell();
    let kappa = problem.constants().kappa();

    let phi = |x: &[f64]| maximize_dual(problem, x, spec);
    let phi_z0 = phi(z0);
    let outer = Searcher {
        spec,
        sense: -1.0,
        step: 1.0 / (ell * (1.0 + kappa)),
        counter: 2,
    }
    .run(
        dx,
        &[z0, x0, &vec![0.0; dx]],
        &|x| phi(x).value,
        &|x, out| {
            let y = phi(x).point;
            problem.grad_x_into(x, &y, out);
        },
    );
    let delta0 = (phi_z0.value - outer.value).max(0.0);

    let shift = 0.5 * p * dist_sq(x0, z0);
    let upper = maximize_dual_from(problem, x0, &[y0], spec);
    let lower = Searcher {
        spec,
        sense: -1.0,
        step: 1.0 / (ell + p),
        counter: 3,
    }
    .run(
        dx,
        &[x0, z0],
        &|x| problem.value(x, y0) + 0.5 * p * dist_sq(x, z0),
        &|x, out| {
            problem.grad_x_into(x, y0, out);
            for ((o, xi), zi) in out.iter_mut().zip(x).zip(z0) {
                *o += p * (xi - zi);
            }
        },
    );
    let b0 = (2.0 * (upper.value + shift - lower.value)).max(0.0);

    let boundary_warning = phi_z0.on_boundary || outer.on_boundary || upper.on_boundary || lower.on_boundary;
    if boundary_warning {
        log::warn!("Δ₀+b₀ search reached the box boundary (half width {})", spec.half_width);
    }
    Ok(Delta0B0Estimate {
        delta0,
        b0,
        total: delta0 + b0,
        phi_z0: phi_z0.value,
        phi_star: outer.value,
        p,
        search: spec.clone(),
        boundary_warning,
    })
}

/// Synthetic processes for the concentration check:
/// `B_t = b`, `C_{t+1} = σ_C √(2B_t) N(0, 1)` and
/// `D_{t+1} = σ_D² (1 − E)` with `E ~ Exp(1)`, with `A` built by the
/// descent recursion with equality.
///
/// These satisfy `E e^{λC} = e^{λ²σ_C²B}` and
/// `E e^{λD} = e^{λσ_D²}/(1 + λσ_D²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub b: f64,
    pub sigma_c_sq: f64,
    pub sigma_d_sq: f64,
}

impl GeneratorSpec {
    pub fn default_for(sigma_c_sq: f64, sigma_d_sq: f64) -> Self {
        Self {
            b: 1.0,
            sigma_c_sq,
            sigma_d_sq,
        }
    }

    pub fn zero_noise(b: f64) -> Self {
        Self {
            b,
            sigma_c_sq: 0.0,
            sigma_d_sq: 0.0,
        }
    }

    fn draw_c<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma_c_sq == 0.0 {
            return 0.0;
        }
        (2.0 * self.sigma_c_sq * self.b).sqrt() * standard_normal(rng)
    }

    fn draw_d<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma_d_sq == 0.0 {
            return 0.0;
        }
        let e = -(1.0 - rng.random::<f64>()).ln();
        self.sigma_d_sq * (1.0 - e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub trials: usize,
    pub violations: usize,
    pub frequency: f64,
    pub threshold: f64,
    pub passed: bool,
    pub qbar: f64,
    pub iterations: usize,
}

const MGF_CHECK_DRAWS: usize = 20_000;

/// Checks the generator against conditions (i)–(iii) for the bound's `σ_C`,
/// `σ_D`: analytically through its parameters and empirically through the
/// moment-generating function at the end of the admissible `λ` range.
fn self_check(generator: &GeneratorSpec, sigma_c_sq_bound: f64, sigma_d_sq_bound: f64, seed: u64) -> Result<()> {
    let g = generator;
    if !(g.b >= 0.0 && g.b.is_finite()) {
        return Err(Error::Precondition(format!("B_t = {} must be finite and >= 0", g.b)));
    }
    if !(g.sigma_c_sq >= 0.0 && g.sigma_d_sq >= 0.0 && g.sigma_c_sq.is_finite() && g.sigma_d_sq.is_finite()) {
        return Err(Error::Precondition("generator variances must be finite and >= 0".into()));
    }
    if g.sigma_c_sq > sigma_c_sq_bound * (1.0 + POLICY_RTOL) {
        return Err(Error::Precondition(format!(
            "C has proxy {} above the bound's σ_C² = {}",
            g.sigma_c_sq, sigma_c_sq_bound
        )));
    }
    if g.sigma_d_sq > sigma_d_sq_bound * (1.0 + POLICY_RTOL) {
        return Err(Error::Precondition(format!(
            "D has scale {} above the bound's σ_D² = {}",
            g.sigma_d_sq, sigma_d_sq_bound
        )));
    }

    let mut rng = keyed_stream(seed, 0, StreamTag::Check, 0);
    let n = MGF_CHECK_DRAWS as f64;
    let mgf_ok = |draws: &[f64], lambda: f64, limit: f64| {
        let e: Vec<f64> = draws.iter().map(|d| (lambda * d).exp()).collect();
        let mean = e.iter().sum::<f64>() / n;
        let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        mean <= limit + 5.0 * (var / n).sqrt()
    };
    if g.sigma_c_sq > 0.0 && g.b > 0.0 {
        let draws: Vec<f64> = (0..MGF_CHECK_DRAWS).map(|_| g.draw_c(&mut rng)).collect();
        let lambda = 1.0 / (sigma_c_sq_bound * g.b).sqrt();
        if !mgf_ok(&draws, lambda, (lambda * lambda * sigma_c_sq_bound * g.b).exp()) {
            return Err(Error::Precondition("empirical MGF of C exceeds its sub-Gaussian bound".into()));
        }
    }
    if g.sigma_d_sq > 0.0 {
        let draws: Vec<f64> = (0..MGF_CHECK_DRAWS).map(|_| g.draw_d(&mut rng)).collect();
        let lambda = 1.0 / sigma_d_sq_bound;
        if !mgf_ok(&draws, lambda, (lambda * sigma_d_sq_bound).exp()) {
            return Err(Error::Precondition("empirical MGF of D exceeds e^{λσ_D²}".into()));
        }
    }
    Ok(())
}

/// Simulates `trials` independent runs of length `T` and counts violations
/// of
/// `(τ₁/2)Σ B_t ≤ (A₀ − A_T) + τ₁σ_D²T + 2τ₁ max{2σ_C², σ_D²} log(1/q̄)`.
/// Passes iff the violation frequency is at most `q̄ + 3√(q̄(1−q̄)/trials)`.
#[allow(clippy::too_many_arguments)]
pub fn verify_concentration(
    generator: &GeneratorSpec,
    sigma_c_sq_bound: f64,
    sigma_d_sq_bound: f64,
    tau1: f64,
    iterations: usize,
    qbar: f64,
    trials: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    if !(tau1 > 0.0 && tau1.is_finite()) {
        return Err(invalid("tau1", "must be positive and finite"));
    }
    if !(qbar > 0.0 && qbar <= 1.0) {
        return Err(invalid("qbar", "must lie in (0, 1]"));
    }
    if trials == 0 {
        return Err(invalid("trials", "must be positive"));
    }
    self_check(generator, sigma_c_sq_bound, sigma_d_sq_bound, seed)?;

    let slack = tau1 * sigma_d_sq_bound * iterations as f64
        + 2.0 * tau1 * (2.0 * sigma_c_sq_bound).max(sigma_d_sq_bound) * (1.0 / qbar).ln();
    let violations = (0..trials)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = keyed_stream(seed, i as u64, StreamTag::Trial, 0);
            let a0 = 0.0;
            let mut a = a0;
            let mut sum_b = 0.0;
            for _ in 0..iterations {
                let b = generator.b;
                let c = generator.draw_c(&mut rng);
                let d = generator.draw_d(&mut rng);
                a += tau1 * (-b + c + d);
                sum_b += b;
            }
            0.5 * tau1 * sum_b > (a0 - a) + slack
        })
        .count();
    let frequency = violations as f64 / trials as f64;
    let threshold = qbar + 3.0 * (qbar * (1.0 - qbar) / trials as f64).sqrt();
    Ok(ConcentrationReport {
        trials,
        violations,
        frequency,
        threshold,
        passed: frequency <= threshold,
        qbar,
        iterations,
    })
}

/// `r₂` in the factored form `16ℓτ₁(τ₁δ_x² + τ₂δ_y²/12)`, equal to `σ_D²`
/// when `τ₂ = τ₁/48`.
pub fn r2_factored(ell: f64, tau1: f64, tau2: f64, delta_x_sq: f64, delta_y_sq: f64) -> f64 {
    16.0 * ell * tau1 * (tau1 * delta_x_sq + tau2 * delta_y_sq / 12.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::LinearProblem;
    use approx::assert_relative_eq;

    fn ncpl_inputs() -> BoundInputs {
        BoundInputs {
            ell: 12.0,
            mu: 2.0,
            kappa: 6.0,
            tau1: 1.0 / 36.0,
            tau2: 1.0 / 36.0 / 48.0,
            alpha: 1.0 / 1600.0,
            delta_x_sq: 1.0,
            delta_y_sq: 1.0,
            delta0_b0: 12.0,
            iterations: 10_000,
            qbar_mesh: vec![0.5],
        }
    }

    #[test]
    fn sigma_values() {
        assert_eq!(sigma_c_sq(0.3, 0.0, 0.0), 0.0);
        assert_eq!(sigma_c_sq(1.0, 1.0, 1.0), 272.0);
        assert_eq!(sigma_c_sq(2.0, 0.7, 0.2), 2.0 * sigma_c_sq(1.0, 0.7, 0.2));
        assert_eq!(sigma_d_sq(3.0, 0.1, 0.1, 0.0, 0.0), 0.0);
        assert_relative_eq!(sigma_d_sq(1.0, 1.0, 1.0 / 48.0, 1.0, 1.0), 16.0 + 64.0 / 2304.0, max_relative = 1e-15);
    }

    #[test]
    fn r2_forms_agree() {
        let (ell, tau1) = (12.0, 1.0 / 36.0);
        let tau2 = tau1 / 48.0;
        assert_relative_eq!(
            r2_factored(ell, tau1, tau2, 0.7, 1.3),
            sigma_d_sq(ell, tau1, tau2, 0.7, 1.3),
            max_relative = 1e-14
        );
    }

    #[test]
    fn mesh_has_4999_points() {
        let m = default_mesh();
        assert_eq!(m.len(), 4999);
        assert_relative_eq!(m[0], 2e-4);
        assert_relative_eq!(m[4998], 1.0 - 2e-4, max_relative = 1e-12);
        assert!(m.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn ncpl_value_matches_direct_evaluation() {
        let inputs = ncpl_inputs();
        let curve = q_bound(&inputs).unwrap();
        let tau1: f64 = 1.0 / 36.0;
        let tau2 = tau1 / 48.0;
        let sc = tau1 * 272.0;
        let sd = 16.0 * 12.0 * tau1 * tau1 + 64.0 * 12.0 * tau2 * tau2;
        let direct = (64.0 * 1600.0 * 6.0 / tau2) * (12.0 / 1e4 + sd + (4.0 * sc).max(2.0 * sd) / 1e4 * 2f64.ln());
        assert_relative_eq!(curve.points[0].1, direct, max_relative = 1e-12);
        assert!(curve.constants.r3_is_four_sigma_c);
    }

    #[test]
    fn limits() {
        let mut inputs = ncpl_inputs();
        let c = bound_constants(&inputs);
        inputs.iterations = 1_000_000_000_000;
        let far = q_bound(&inputs).unwrap().points[0].1;
        assert_relative_eq!(far, c.r1 * c.r2, max_relative = 1e-6);

        let mut inputs = ncpl_inputs();
        inputs.qbar_mesh = vec![1.0 - 1e-15];
        let top = q_bound(&inputs).unwrap().points[0].1;
        assert_relative_eq!(top, c.r1 * (12.0 / 1e4 + c.r2), max_relative = 1e-12);
    }

    #[test]
    fn curve_decreases_in_qbar() {
        let mut inputs = ncpl_inputs();
        inputs.qbar_mesh = default_mesh();
        let curve = q_bound(&inputs).unwrap();
        assert!(curve.points.windows(2).all(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn mesh_validation() {
        for mesh in [vec![0.0], vec![1.0], vec![0.3, 0.2], vec![0.2, 0.2]] {
            let mut inputs = ncpl_inputs();
            inputs.qbar_mesh = mesh;
            assert!(q_bound(&inputs).is_err());
        }
    }

    #[test]
    fn policy_validation() {
        let mut inputs = ncpl_inputs();
        inputs.tau2 *= 2.0;
        assert!(q_bound(&inputs).is_err());
        let mut inputs = ncpl_inputs();
        inputs.kappa = 5.0;
        assert!(q_bound(&inputs).is_err());
    }

    #[test]
    fn constrained_problem_refused() {
        let data = crate::dro::Dataset::from_sparse_rows(vec![vec![(0, 1.0)], vec![(0, -1.0)]], vec![1.0, -1.0], 1).unwrap();
        let settings = crate::dro::DroSettings { batch_size: 1, ..Default::default() };
        let dro = crate::dro::DroProblem::new(data, settings).unwrap();
        assert!(matches!(q_bound_for(&dro, &ncpl_inputs()), Err(Error::ConstrainedDual)));
        let lin = LinearProblem { a: vec![1.0], b: vec![1.0] };
        assert!(q_bound_for(&lin, &ncpl_inputs()).is_ok());
    }

    struct Bowl;

    impl MinimaxProblem for Bowl {
        fn dim_x(&self) -> usize {
            1
        }
        fn dim_y(&self) -> usize {
            1
        }
        fn constants(&self) -> ProblemConstants {
            ProblemConstants::new(2.0, 2.0).unwrap()
        }
        fn noise(&self) -> NoiseSpec {
            NoiseSpec::exact()
        }
        fn value(&self, x: &[f64], y: &[f64]) -> f64 {
            x[0] * x[0] - y[0] * y[0]
        }
        fn grad_x_into(&self, x: &[f64], _y: &[f64], out: &mut [f64]) {
            out[0] = 2.0 * x[0];
        }
        fn grad_y_into(&self, _x: &[f64], y: &[f64], out: &mut [f64]) {
            out[0] = -2.0 * y[0];
        }
        fn grad_x_stoch_into(&self, x: &[f64], y: &[f64], _rng: &mut crate::rng::NoiseRng, out: &mut [f64]) {
            self.grad_x_into(x, y, out)
        }
        fn grad_y_stoch_into(&self, x: &[f64], y: &[f64], _rng: &mut crate::rng::NoiseRng, out: &mut [f64]) {
            self.grad_y_into(x, y, out)
        }
    }

    #[test]
    fn saddle_start_has_zero_gap() {
        for mode in [SearchMode::Grid { level: 4 }, SearchMode::Sampled { samples: 50, refine_steps: 50 }] {
            let spec = SearchSpec { half_width: 3.0, mode, seed: 1 };
            let est = estimate_delta0_b0(&Bowl, &[0.0], &[0.0], &[0.0], 4.0, &spec).unwrap();
            assert_eq!(est.total, 0.0);
        }
    }

    #[test]
    fn off_saddle_gap_is_exact_for_bowl() {
        // Φ(x) = x², Φ* = 0; max_y f̂(x₀, y) = x₀² + (p/2)(x₀−z₀)²,
        // min_x f̂(x, y₀) = −y₀² + p/(2+p) z₀².
        let spec = SearchSpec {
            half_width: 4.0,
            mode: SearchMode::Sampled { samples: 20, refine_steps: 400 },
            seed: 0,
        };
        let (x0, y0, z0, p) = (1.0, 0.5, 1.0, 4.0);
        let est = estimate_delta0_b0(&Bowl, &[x0], &[y0], &[z0], p, &spec).unwrap();
        assert_relative_eq!(est.delta0, 1.0, epsilon = 1e-9);
        let b0 = 2.0 * (x0 * x0 + y0 * y0 - p / (2.0 + p) * z0 * z0);
        assert_relative_eq!(est.b0, b0, epsilon = 1e-9);
        assert!(!est.boundary_warning);
    }

    #[test]
    fn boundary_flag_when_box_too_small() {
        let spec = SearchSpec {
            half_width: 0.5,
            mode: SearchMode::Grid { level: 3 },
            seed: 0,
        };
        let lin = LinearProblem { a: vec![1.0], b: vec![1.0] };
        let est = estimate_delta0_b0(&lin, &[0.0], &[0.0], &[0.0], 2.0, &spec).unwrap();
        assert!(est.boundary_warning);
    }

    #[test]
    fn oversized_grid_rejected() {
        let spec = SearchSpec {
            half_width: 1.0,
            mode: SearchMode::Grid { level: 10 },
            seed: 0,
        };
        let lin = LinearProblem { a: vec![1.0; 3], b: vec![1.0; 3] };
        assert!(estimate_delta0_b0(&lin, &[0.0; 3], &[0.0; 3], &[0.0; 3], 2.0, &spec).is_err());
    }

    #[test]
    fn finer_grid_never_lowers_inner_max() {
        let game = crate::ncpl::NcplGame::make(2, 2, 1.0, 1.0, 1.0, 1.0, 3).unwrap();
        let x = [0.3, -0.7];
        let mut prev = f64::NEG_INFINITY;
        for level in 1..7 {
            let spec = SearchSpec { half_width: 5.0, mode: SearchMode::Grid { level }, seed: 0 };
            let v = maximize_dual(&game, &x, &spec).value;
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn concentration_default_generator() {
        let (sc, sd) = (sigma_c_sq(0.05, 1.0, 1.0), sigma_d_sq(12.0, 0.05, 0.05 / 48.0, 1.0, 1.0));
        let g = GeneratorSpec::default_for(sc, sd);
        let r = verify_concentration(&g, sc, sd, 0.05, 100, 0.1, 10_000, 7).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.frequency <= 0.109);
    }

    #[test]
    fn concentration_zero_noise() {
        let g = GeneratorSpec::zero_noise(1.0);
        let r = verify_concentration(&g, 0.0, 0.0, 0.05, 100, 0.1, 1000, 0).unwrap();
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn concentration_looser_sigma_c() {
        let (sc, sd) = (1.0, 0.5);
        let g = GeneratorSpec::default_for(sc, sd);
        let r = verify_concentration(&g, 100.0 * sc, sd, 0.1, 100, 0.1, 2000, 3).unwrap();
        assert!(r.passed);
    }

    #[test]
    fn concentration_rejects_understated_sigma() {
        let g = GeneratorSpec::default_for(2.0, 1.0);
        assert!(matches!(
            verify_concentration(&g, 1.0, 1.0, 0.1, 10, 0.1, 10, 0),
            Err(Error::Precondition(_))
        ));
        let g = GeneratorSpec::default_for(1.0, 2.0);
        assert!(matches!(
            verify_concentration(&g, 1.0, 1.0, 0.1, 10, 0.1, 10, 0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn concentration_is_reproducible() {
        let g = GeneratorSpec::default_for(1.0, 1.0);
        let a = verify_concentration(&g, 1.0, 1.0, 0.1, 50, 0.3, 500, 9).unwrap();
        let b = verify_concentration(&g, 1.0, 1.0, 0.1, 50, 0.3, 500, 9).unwrap();
        assert_eq!(a, b);
    }
}
