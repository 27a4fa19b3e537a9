//! Synthetic nonconvex-PL game
//!
//! `f(x, y) = m₁[‖x‖² + sin(3√(‖x‖²+1))] + xᵀKy − m₂[‖y‖² + 3sin²(‖y‖)]`
//!
//! with a random symmetric interaction matrix normalised to spectral norm 10
//! and additive Gaussian gradient noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{norm_sq, spectral_norm, DenseMatrix};
use crate::problem::{MinimaxProblem, NoiseSpec, ProblemConstants};
use crate::rng::{keyed_stream, NoiseRng, StreamTag};

const INTERACTION_NORM: f64 = 10.0;
const SMALL_Y: f64 = 1e-12;

/// Serializable description of a game instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NcplConfig {
    pub d: usize,
    pub m1: f64,
    pub m2: f64,
    pub sigma_sq: f64,
    pub delta_sq: f64,
    pub matrix_seed: u64,
}

impl Default for NcplConfig {
    fn default() -> Self {
        Self {
            d: 30,
            m1: 1.0,
            m2: 1.0,
            sigma_sq: 1.0,
            delta_sq: 1.0,
            matrix_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NcplGame {
    config: NcplConfig,
    k: DenseMatrix,
    k_norm: f64,
    constants: ProblemConstants,
    delta: f64,
}

impl NcplGame {
    /// Builds the game for a `d × d` interaction. `d1` and `d2` must agree
    /// because the construction symmetrises a square Gaussian matrix.
    pub fn make(
        d1: usize,
        d2: usize,
        m1: f64,
        m2: f64,
        sigma_sq: f64,
        delta_sq: f64,
        matrix_seed: u64,
    ) -> Result<Self> {
        if d1 != d2 {
            return Err(Error::DimensionMismatch {
                what: "NCPL game requires d1 == d2",
                expected: d1,
                found: d2,
            });
        }
        Self::from_config(&NcplConfig {
            d: d1,
            m1,
            m2,
            sigma_sq,
            delta_sq,
            matrix_seed,
        })
    }

    pub fn from_config(config: &NcplConfig) -> Result<Self> {
        let d = config.d;
        if d == 0 {
            return Err(invalid("d", "must be positive"));
        }
        for (name, v) in [("m1", config.m1), ("m2", config.m2), ("sigma_sq", config.sigma_sq)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive and finite"));
            }
        }
        if !(config.delta_sq >= 0.0 && config.delta_sq.is_finite()) {
            return Err(invalid("delta_sq", "must be finite and >= 0"));
        }

        let sigma = config.sigma_sq.sqrt();
        let mut rng = keyed_stream(config.matrix_seed, 0, StreamTag::Construction, 0);
        let mut m = DenseMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                m[(i, j)] = sigma * z;
            }
        }
        let mut sym = DenseMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                sym[(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)]);
            }
        }
        let sym_norm = spectral_norm(&sym)?;
        if sym_norm == 0.0 {
            return Err(invalid("matrix_seed", "symmetrised interaction matrix is zero"));
        }
        let k = sym.scaled(INTERACTION_NORM / sym_norm);
        let k_norm = spectral_norm(&k)?;

        let ell = (12.0 * config.m1).max(8.0 * config.m2).max(k_norm);
        let mu = 2.0 * config.m2;
        let constants = ProblemConstants::new(ell, mu)?;
        Ok(Self {
            config: config.clone(),
            k,
            k_norm,
            constants,
            delta: config.delta_sq.sqrt(),
        })
    }

    /// Replaces the derived ℓ and μ. The stepsize policy depends on them, so
    /// this is logged.
    pub fn with_constants_override(mut self, constants: ProblemConstants) -> Self {
        log::warn!(
            "overriding NCPL constants: ℓ {} -> {}, μ {} -> {}",
            self.constants.ell(),
            constants.ell(),
            self.constants.mu(),
            constants.mu()
        );
        self.constants = constants;
        self
    }

    pub fn config(&self) -> &NcplConfig {
        &self.config
    }

    pub fn interaction(&self) -> &DenseMatrix {
        &self.k
    }

    pub fn interaction_norm(&self) -> f64 {
        self.k_norm
    }

    /// `‖x‖² + ‖y‖²`; the saddle point is the origin.
    pub fn metric_distance_sq(&self, x: &[f64], y: &[f64]) -> f64 {
        norm_sq(x) + norm_sq(y)
    }

    fn add_noise(&self, rng: &mut NoiseRng, out: &mut [f64]) {
        if self.delta == 0.0 {
            return;
        }
        for o in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *o += self.delta * z;
        }
    }
}

/// `sin(2r)/r`, with its Taylor expansion below `1e-12`.
fn sin2r_over_r(r: f64) -> f64 {
    if r < SMALL_Y {
        2.0 - (4.0 / 3.0) * r * r
    } else {
        (2.0 * r).sin() / r
    }
}

impl MinimaxProblem for NcplGame {
    fn dim_x(&self) -> usize {
        self.config.d
    }

    fn dim_y(&self) -> usize {
        self.config.d
    }

    fn constants(&self) -> ProblemConstants {
        self.constants
    }

    fn noise(&self) -> NoiseSpec {
        NoiseSpec {
            delta_x_sq: self.config.delta_sq,
            delta_y_sq: self.config.delta_sq,
        }
    }

    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        let xx = norm_sq(x);
        let ny = norm_sq(y).sqrt();
        let ky = self.k.mul_vec(y);
        let bilinear = crate::linalg::dot(x, &ky);
        let s = ny.sin();
        self.config.m1 * (xx + (3.0 * (xx + 1.0).sqrt()).sin()) + bilinear
            - self.config.m2 * (ny * ny + 3.0 * s * s)
    }

    fn grad_x_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let s = (norm_sq(x) + 1.0).sqrt();
        let c = 3.0 * (3.0 * s).cos() / s;
        self.k.mul_vec_into(y, out);
        let m1 = self.config.m1;
        for (o, xi) in out.iter_mut().zip(x) {
            *o += m1 * (2.0 * xi + c * xi);
        }
    }

    fn grad_y_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let r = norm_sq(y).sqrt();
        let c = 3.0 * sin2r_over_r(r);
        self.k.tr_mul_vec_into(x, out);
        let m2 = self.config.m2;
        for (o, yi) in out.iter_mut().zip(y) {
            *o -= m2 * (2.0 * yi + c * yi);
        }
    }

    fn grad_x_stoch_into(&self, x: &[f64], y: &[f64], rng: &mut NoiseRng, out: &mut [f64]) {
        self.grad_x_into(x, y, out);
        self.add_noise(rng, out);
    }

    fn grad_y_stoch_into(&self, x: &[f64], y: &[f64], rng: &mut NoiseRng, out: &mut [f64]) {
        self.grad_y_into(x, y, out);
        self.add_noise(rng, out);
    }

    fn saddle_reference(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        Some((vec![0.0; self.config.d], vec![0.0; self.config.d]))
    }
}
