//! Dense vector helpers and a power-iteration spectral norm.

use crate::error::{Error, Result};
use crate::rng::{fill_standard_normal, keyed_stream, StreamTag};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "matrix data",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    /// `out = A v`
    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), v);
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(v, &mut out);
        out
    }

    /// `out = Aᵀ v`
    pub fn tr_mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

const POWER_MAX_ITERS: usize = 100_000;
const POWER_TOL: f64 = 1e-11;
const STAGNATION_WINDOW: usize = 2_000;

/// Largest absolute eigenvalue of a symmetric matrix.
///
/// Runs power iteration on `A²` so that a ± pair of extreme eigenvalues does
/// not cause oscillation. The iteration stops once the eigen-residual
/// `‖A²v − ρv‖` is below `1e-11·ρ`. If the residual stops improving for a
/// while the iteration restarts from the current vector plus a fresh random
/// perturbation.
pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch {
            what: "spectral_norm (square matrix)",
            expected: a.rows(),
            found: a.cols(),
        });
    }
    if !all_finite(a.as_slice()) {
        return Err(Error::NonFinite("matrix"));
    }
    let scale = a.frobenius_norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let asym = a.max_asymmetry();
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let n = a.rows();
    let mut rng = keyed_stream(0x5eed, n as u64, StreamTag::Construction, 0);
    let mut v = vec![0.0; n];
    fill_standard_normal(&mut rng, &mut v);
    normalize(&mut v);

    let mut av = vec![0.0; n];
    let mut aav = vec![0.0; n];
    let mut best_residual = f64::INFINITY;
    let mut last_improvement = 0;
    let mut restarts = 0u64;

    for iter in 0..POWER_MAX_ITERS {
        a.mul_vec_into(&v, &mut av);
        a.mul_vec_into(&av, &mut aav);
        // ρ = vᵀA²v = ‖Av‖²
        let rho = norm_sq(&av);
        if rho == 0.0 {
            // v landed in the null space; perturb and continue.
            restarts += 1;
            let mut r = keyed_stream(0x5eed, n as u64, StreamTag::Construction, restarts);
            fill_standard_normal(&mut r, &mut v);
            normalize(&mut v);
            continue;
        }
        let residual = aav
            .iter()
            .zip(&v)
            .map(|(w, x)| (w - rho * x).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= POWER_TOL * rho {
            return Ok(rho.sqrt());
        }
        if residual < 0.5 * best_residual {
            best_residual = residual;
            last_improvement = iter;
        }
        v.copy_from_slice(&aav);
        normalize(&mut v);
        if iter - last_improvement > STAGNATION_WINDOW {
            restarts += 1;
            let mut r = keyed_stream(0x5eed, n as u64, StreamTag::Construction, restarts);
            let mut kick = vec![0.0; n];
            fill_standard_normal(&mut r, &mut kick);
            for (x, k) in v.iter_mut().zip(&kick) {
                *x += 1e-3 * k;
            }
            normalize(&mut v);
            best_residual = f64::INFINITY;
            last_improvement = iter;
        }
    }
    Err(Error::NotConverged(POWER_MAX_ITERS))
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_has_unit_norm() {
        assert_relative_eq!(
            spectral_norm(&DenseMatrix::identity(3)).unwrap(),
            1.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn diagonal_picks_largest_magnitude() {
        let m = DenseMatrix::diag(&[2.0, -5.0, 1.0]);
        assert_relative_eq!(spectral_norm(&m).unwrap(), 5.0, max_relative = 1e-12);
    }

    #[test]
    fn plus_minus_pair() {
        let m = DenseMatrix::diag(&[3.0, -3.0, 1.0]);
        assert_relative_eq!(spectral_norm(&m).unwrap(), 3.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_matrix_is_zero() {
        assert_eq!(spectral_norm(&DenseMatrix::zeros(4, 4)).unwrap(), 0.0);
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DenseMatrix::from_row_major(2, 2, vec![1.0, 2.0, 0.0, 1.0]).unwrap();
        assert!(matches!(spectral_norm(&m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn rejects_non_square() {
        assert!(spectral_norm(&DenseMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn transpose_product_matches() {
        let m = DenseMatrix::from_row_major(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let v = [1.0, -1.0];
        let mut out = vec![0.0; 3];
        m.tr_mul_vec_into(&v, &mut out);
        assert_eq!(out, m.transpose().mul_vec(&v));
    }
}
