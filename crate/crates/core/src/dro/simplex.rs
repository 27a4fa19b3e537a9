//! Euclidean projection onto the probability simplex.

use std::ops::Deref;

/// A point of `{y : y ≥ 0, Σy = 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }
}

impl Deref for SimplexPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn project_simplex(v: &[f64]) -> SimplexPoint {
    let mut y = v.to_vec();
    project_simplex_in_place(&mut y);
    SimplexPoint(y)
}

/// Sort-and-threshold projection: `y = max(v − θ, 0)` with θ chosen so that
/// `Σy = 1`.
pub fn project_simplex_in_place(v: &mut [f64]) {
    let n = v.len();
    if n == 0 {
        return;
    }
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

pub fn in_simplex(y: &[f64], tol: f64) -> bool {
    y.iter().all(|v| *v >= 0.0) && (y.iter().sum::<f64>() - 1.0).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn already_feasible() {
        assert_eq!(&*project_simplex(&[0.5, 0.5]), &[0.5, 0.5]);
    }

    #[test]
    fn corner() {
        assert_eq!(&*project_simplex(&[2.0, 0.0]), &[1.0, 0.0]);
    }

    #[test]
    fn symmetric_input() {
        let p = project_simplex(&[0.3, 0.3, 0.3]);
        for v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn negative_and_large_entries() {
        let p = project_simplex(&[-5.0, 10.0, 9.5, -1.0]);
        assert!(in_simplex(&p, 1e-12));
        assert_eq!(p[0], 0.0);
        assert!((p[1] - 0.75).abs() < 1e-15 && (p[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn empty_is_noop() {
        let mut v: Vec<f64> = vec![];
        project_simplex_in_place(&mut v);
        assert!(v.is_empty());
    }
}
