//! The stochastic minimax problem abstraction and its oracle contracts.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{all_finite, dist_sq, norm, norm_sq};
use crate::rng::{fill_standard_normal, keyed_stream, NoiseRng, StreamTag};

/// Smoothness and PL constants of a problem. The condition number is always
/// derived from the two stored constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    lipschitz_ell: f64,
    pl_mu: f64,
    /// `false` when the constants were tuned rather than derived from the
    /// problem structure.
    pub certified: bool,
}

impl ProblemConstants {
    pub fn new(lipschitz_ell: f64, pl_mu: f64) -> Result<Self> {
        if !(lipschitz_ell > 0.0 && lipschitz_ell.is_finite()) {
            return Err(invalid("lipschitz_ell", "must be positive and finite"));
        }
        if !(pl_mu > 0.0 && pl_mu.is_finite()) {
            return Err(invalid("pl_mu", "must be positive and finite"));
        }
        if pl_mu > lipschitz_ell {
            return Err(invalid(
                "pl_mu",
                format!("μ = {pl_mu} exceeds ℓ = {lipschitz_ell} (κ < 1)"),
            ));
        }
        Ok(Self {
            lipschitz_ell,
            pl_mu,
            certified: true,
        })
    }

    pub fn uncertified(mut self) -> Self {
        self.certified = false;
        self
    }

    pub fn ell(&self) -> f64 {
        self.lipschitz_ell
    }

    pub fn mu(&self) -> f64 {
        self.pl_mu
    }

    pub fn kappa(&self) -> f64 {
        self.lipschitz_ell / self.pl_mu
    }
}

/// Sub-Gaussian proxy variances of the gradient noise. Zero means the oracle
/// is exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub delta_x_sq: f64,
    pub delta_y_sq: f64,
}

impl NoiseSpec {
    pub fn new(delta_x_sq: f64, delta_y_sq: f64) -> Result<Self> {
        if !(delta_x_sq >= 0.0 && delta_x_sq.is_finite()) {
            return Err(invalid("delta_x_sq", "must be finite and >= 0"));
        }
        if !(delta_y_sq >= 0.0 && delta_y_sq.is_finite()) {
            return Err(invalid("delta_y_sq", "must be finite and >= 0"));
        }
        Ok(Self {
            delta_x_sq,
            delta_y_sq,
        })
    }

    pub fn exact() -> Self {
        Self {
            delta_x_sq: 0.0,
            delta_y_sq: 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.delta_x_sq + self.delta_y_sq
    }
}

/// Oracle bundle for `min_x max_y f(x, y)`.
///
/// The `*_into` methods are the unchecked hot path used by the optimizer;
/// [`grad_x_exact`] and friends wrap them with dimension and finiteness
/// checks. Implementations must be immutable and free of interior state so
/// one problem can be shared by concurrent sample paths.
pub trait MinimaxProblem: Sync {
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;
    fn constants(&self) -> ProblemConstants;
    fn noise(&self) -> NoiseSpec;

    fn value(&self, x: &[f64], y: &[f64]) -> f64;
    fn grad_x_into(&self, x: &[f64], y: &[f64], out: &mut [f64]);
    fn grad_y_into(&self, x: &[f64], y: &[f64], out: &mut [f64]);

    /// Unbiased draw of ∇ₓf using only `rng`.
    fn grad_x_stoch_into(&self, x: &[f64], y: &[f64], rng: &mut NoiseRng, out: &mut [f64]);
    /// Unbiased draw of ∇_y f using only `rng`.
    fn grad_y_stoch_into(&self, x: &[f64], y: &[f64], rng: &mut NoiseRng, out: &mut [f64]);

    fn has_dual_projection(&self) -> bool {
        false
    }

    /// Projects `y` onto the dual domain in place. No-op when unconstrained.
    fn project_dual(&self, _y: &mut [f64]) {}

    /// Known saddle point, if any.
    fn saddle_reference(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }

    /// Draws a test point for numerical gradient checks.
    fn sample_point(&self, rng: &mut NoiseRng) -> (Vec<f64>, Vec<f64>) {
        let mut x = vec![0.0; self.dim_x()];
        let mut y = vec![0.0; self.dim_y()];
        fill_standard_normal(rng, &mut x);
        fill_standard_normal(rng, &mut y);
        (x, y)
    }
}

fn check_point<P: MinimaxProblem + ?Sized>(problem: &P, x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != problem.dim_x() {
        return Err(Error::DimensionMismatch {
            what: "x",
            expected: problem.dim_x(),
            found: x.len(),
        });
    }
    if y.len() != problem.dim_y() {
        return Err(Error::DimensionMismatch {
            what: "y",
            expected: problem.dim_y(),
            found: y.len(),
        });
    }
    if !all_finite(x) {
        return Err(Error::NonFinite("x"));
    }
    if !all_finite(y) {
        return Err(Error::NonFinite("y"));
    }
    Ok(())
}

pub fn value_checked<P: MinimaxProblem + ?Sized>(problem: &P, x: &[f64], y: &[f64]) -> Result<f64> {
    check_point(problem, x, y)?;
    Ok(problem.value(x, y))
}

pub fn grad_x_exact<P: MinimaxProblem + ?Sized>(problem: &P, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_point(problem, x, y)?;
    let mut out = vec![0.0; problem.dim_x()];
    problem.grad_x_into(x, y, &mut out);
    Ok(out)
}

pub fn grad_y_exact<P: MinimaxProblem + ?Sized>(problem: &P, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_point(problem, x, y)?;
    let mut out = vec![0.0; problem.dim_y()];
    problem.grad_y_into(x, y, &mut out);
    Ok(out)
}

pub fn grad_x_stoch<P: MinimaxProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    y: &[f64],
    rng: &mut NoiseRng,
) -> Result<Vec<f64>> {
    check_point(problem, x, y)?;
    let mut out = vec![0.0; problem.dim_x()];
    problem.grad_x_stoch_into(x, y, rng, &mut out);
    Ok(out)
}

pub fn grad_y_stoch<P: MinimaxProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    y: &[f64],
    rng: &mut NoiseRng,
) -> Result<Vec<f64>> {
    check_point(problem, x, y)?;
    let mut out = vec![0.0; problem.dim_y()];
    problem.grad_y_stoch_into(x, y, rng, &mut out);
    Ok(out)
}

/// A per-iterate scalar recorded along a trajectory.
pub trait MetricHook<P: ?Sized>: Sync {
    fn name(&self) -> &str;
    fn eval(&self, problem: &P, x: &[f64], y: &[f64]) -> f64;
}

/// `M_κ = ‖∇ₓf‖² + κ‖∇_y f‖²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct StationarityKappa;

impl StationarityKappa {
    pub const NAME: &'static str = "M_kappa";
}

impl<P: MinimaxProblem + ?Sized> MetricHook<P> for StationarityKappa {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn eval(&self, problem: &P, x: &[f64], y: &[f64]) -> f64 {
        stationarity_kappa(problem, x, y)
    }
}

pub fn stationarity_kappa<P: MinimaxProblem + ?Sized>(problem: &P, x: &[f64], y: &[f64]) -> f64 {
    let mut gx = vec![0.0; problem.dim_x()];
    let mut gy = vec![0.0; problem.dim_y()];
    problem.grad_x_into(x, y, &mut gx);
    problem.grad_y_into(x, y, &mut gy);
    norm_sq(&gx) + problem.constants().kappa() * norm_sq(&gy)
}

/// `I = ‖x − x*‖² + ‖y − y*‖²` against the problem's saddle reference.
#[derive(Debug, Clone, Copy, Default)]
pub struct DistanceToSaddle;

impl DistanceToSaddle {
    pub const NAME: &'static str = "distance";
}

impl<P: MinimaxProblem + ?Sized> MetricHook<P> for DistanceToSaddle {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn eval(&self, problem: &P, x: &[f64], y: &[f64]) -> f64 {
        match problem.saddle_reference() {
            Some((xs, ys)) => dist_sq(x, &xs) + dist_sq(y, &ys),
            None => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheckReport {
    pub points: usize,
    pub fd_step: f64,
    pub tolerance: f64,
    pub max_rel_error_x: f64,
    pub max_rel_error_y: f64,
    pub passed: bool,
}

impl GradientCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.max_rel_error_x.max(self.max_rel_error_y)
    }
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference check of both exact gradients at `num_points` points
/// drawn by [`MinimaxProblem::sample_point`]. The relative error is
/// `‖fd − analytic‖ / max(1, ‖analytic‖)`. Failures are reported, never
/// raised.
pub fn check_gradients<P: MinimaxProblem + ?Sized>(
    problem: &P,
    num_points: usize,
    fd_step: f64,
    tolerance: f64,
    seed: u64,
) -> Result<GradientCheckReport> {
    if num_points == 0 {
        return Err(invalid("num_points", "must be >= 1"));
    }
    if !(fd_step > 0.0) {
        return Err(invalid("fd_step", "must be positive"));
    }
    let mut worst_x: f64 = 0.0;
    let mut worst_y: f64 = 0.0;
    for k in 0..num_points {
        let mut rng = keyed_stream(seed, k as u64, StreamTag::Check, 0);
        let (x, y) = problem.sample_point(&mut rng);
        let gx = grad_x_exact(problem, &x, &y)?;
        let gy = grad_y_exact(problem, &x, &y)?;
        let fd_x = central_difference(|xp| problem.value(xp, &y), &x, fd_step);
        let fd_y = central_difference(|yp| problem.value(&x, yp), &y, fd_step);
        worst_x = worst_x.max(relative_error(&fd_x, &gx));
        worst_y = worst_y.max(relative_error(&fd_y, &gy));
    }
    Ok(GradientCheckReport {
        points: num_points,
        fd_step,
        tolerance,
        max_rel_error_x: worst_x,
        max_rel_error_y: worst_y,
        passed: worst_x <= tolerance && worst_y <= tolerance,
    })
}

/// Central differences of `f` at `at`. The divisor is the representable
/// spacing `(v+h) − (v−h)` rather than `2h`.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(mut f: F, at: &[f64], step: f64) -> Vec<f64> {
    let mut probe = at.to_vec();
    let mut grad = vec![0.0; at.len()];
    for i in 0..at.len() {
        let v = at[i];
        let hi = v + step;
        let lo = v - step;
        probe[i] = hi;
        let f_hi = f(&probe);
        probe[i] = lo;
        let f_lo = f(&probe);
        probe[i] = v;
        grad[i] = (f_hi - f_lo) / (hi - lo);
    }
    grad
}

pub fn relative_error(approx: &[f64], exact: &[f64]) -> f64 {
    let diff: f64 = approx
        .iter()
        .zip(exact)
        .map(|(a, e)| (a - e) * (a - e))
        .sum::<f64>()
        .sqrt();
    diff / norm(exact).max(1.0)
}

/// `f(x, y) = aᵀx + bᵀy` with exact oracles. Used to validate the numerical
/// tooling: finite differences are exact for it up to rounding.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl MinimaxProblem for LinearProblem {
    fn dim_x(&self) -> usize {
        self.a.len()
    }

    fn dim_y(&self) -> usize {
        self.b.len()
    }

    fn constants(&self) -> ProblemConstants {
        ProblemConstants::new(1.0, 1.0).expect("unit constants").uncertified()
    }

    fn noise(&self) -> NoiseSpec {
        NoiseSpec::exact()
    }

    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        crate::linalg::dot(&self.a, x) + crate::linalg::dot(&self.b, y)
    }

    fn grad_x_into(&self, _x: &[f64], _y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.a);
    }

    fn grad_y_into(&self, _x: &[f64], _y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b);
    }

    fn grad_x_stoch_into(&self, x: &[f64], y: &[f64], _rng: &mut NoiseRng, out: &mut [f64]) {
        self.grad_x_into(x, y, out);
    }

    fn grad_y_stoch_into(&self, x: &[f64], y: &[f64], _rng: &mut NoiseRng, out: &mut [f64]) {
        self.grad_y_into(x, y, out);
    }
}
