use serde::Serialize;

use crate::bounds::{q_bound, BoundInputs};
use crate::error::{invalid, Error, Result};
use crate::harness::ensemble::RunContext;

/// Linear-interpolation quantile of sorted data: position `h = (n−1)q`,
/// interpolated between the neighbouring order statistics.
pub fn empirical_quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let w = h - lo as f64;
    let (a, b) = (sorted[lo], sorted[lo + 1]);
    if w == 0.0 || a == b {
        a
    } else {
        a + w * (b - a)
    }
}

pub fn empirical_quantiles(samples: &[f64], levels: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("samples"));
    }
    if let Some(q) = levels.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(invalid("levels", format!("{q} is outside [0, 1]")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(levels.iter().map(|&q| empirical_quantile_sorted(&sorted, q)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    /// Probability level `q = 1 − q̄`.
    pub q: f64,
    pub empirical: f64,
    /// `Q_{q̄,T}`.
    pub theoretical: f64,
    /// The bound mapped affinely onto the range of the empirical curve.
    pub theoretical_scaled: f64,
    pub dominated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileComparison {
    /// Rows sorted by increasing `q`.
    pub rows: Vec<ComparisonRow>,
    pub all_dominated: bool,
    pub samples: usize,
}

fn check_field(field: &'static str, bound: f64, ensemble: f64) -> Result<()> {
    if (bound - ensemble).abs() <= 1e-12 * bound.abs().max(ensemble.abs()) {
        Ok(())
    } else {
        Err(Error::Mismatch { field, bound, ensemble })
    }
}

/// Compares empirical quantiles of `X_T` with `Q_{q̄,T}`. The bound holds with
/// probability at least `1 − q̄`, so at each mesh point the empirical
/// `(1 − q̄)`-quantile must not exceed `Q_{q̄,T}`. Domination is decided on
/// unscaled values.
pub fn compare_quantiles(terminal: &[f64], context: &RunContext, inputs: &BoundInputs) -> Result<QuantileComparison> {
    if context.dual_constrained {
        return Err(Error::ConstrainedDual);
    }
    let p = &context.params;
    check_field("ell", inputs.ell, context.ell)?;
    check_field("mu", inputs.mu, context.mu)?;
    check_field("tau1", inputs.tau1, p.tau1)?;
    check_field("tau2", inputs.tau2, p.tau2)?;
    if let Some(alpha) = p.alpha {
        check_field("alpha", inputs.alpha, alpha)?;
    }
    check_field("delta_x_sq", inputs.delta_x_sq, context.delta_x_sq)?;
    check_field("delta_y_sq", inputs.delta_y_sq, context.delta_y_sq)?;
    check_field("T", inputs.iterations as f64, p.iterations as f64)?;

    let curve = q_bound(inputs)?;
    let levels: Vec<f64> = curve.points.iter().map(|(qbar, _)| 1.0 - qbar).collect();
    let empirical = empirical_quantiles(terminal, &levels)?;

    let (t_lo, t_hi) = curve
        .points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| (lo.min(v), hi.max(v)));
    let (e_lo, e_hi) = empirical
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let scale = |v: f64| {
        if t_hi > t_lo {
            e_lo + (v - t_lo) * (e_hi - e_lo) / (t_hi - t_lo)
        } else {
            e_lo
        }
    };

    let mut rows: Vec<ComparisonRow> = curve
        .points
        .iter()
        .zip(&empirical)
        .zip(&levels)
        .map(|((&(_, theo), &emp), &q)| ComparisonRow {
            q,
            empirical: emp,
            theoretical: theo,
            theoretical_scaled: scale(theo),
            dominated: emp <= theo,
        })
        .collect();
    rows.reverse();
    let all_dominated = rows.iter().all(|r| r.dominated);
    Ok(QuantileComparison {
        rows,
        all_dominated,
        samples: terminal.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::SmAgdaParams;
    use crate::problem::ProblemConstants;

    #[test]
    fn small_cases() {
        assert_eq!(empirical_quantiles(&[3.0, 1.0, 2.0], &[0.5]).unwrap(), vec![2.0]);
        assert_eq!(empirical_quantiles(&[0.0, 10.0], &[0.25]).unwrap(), vec![2.5]);
        assert_eq!(empirical_quantiles(&[4.0], &[0.3, 1.0]).unwrap(), vec![4.0, 4.0]);
        assert_eq!(empirical_quantiles(&[1.0, 5.0, 9.0], &[0.0, 1.0]).unwrap(), vec![1.0, 9.0]);
        assert!(matches!(empirical_quantiles(&[], &[0.5]), Err(Error::EmptySamples)));
        assert!(empirical_quantiles(&[1.0], &[1.5]).is_err());
    }

    fn setup() -> (RunContext, BoundInputs) {
        let c = ProblemConstants::new(12.0, 2.0).unwrap();
        let params = SmAgdaParams::theory(&c, 1.0 / 36.0, 1.0 / 1600.0, 10_000).unwrap();
        let ctx = RunContext {
            params,
            ell: 12.0,
            mu: 2.0,
            delta_x_sq: 1.0,
            delta_y_sq: 1.0,
            dual_constrained: false,
        };
        let noise = crate::problem::NoiseSpec::new(1.0, 1.0).unwrap();
        let inputs = BoundInputs::from_run(&c, &params, &noise, 12.0, vec![0.1, 0.5, 0.9]).unwrap();
        (ctx, inputs)
    }

    #[test]
    fn zero_samples_are_dominated() {
        let (ctx, inputs) = setup();
        let cmp = compare_quantiles(&[0.0; 10], &ctx, &inputs).unwrap();
        assert!(cmp.all_dominated);
        let qs: Vec<f64> = cmp.rows.iter().map(|r| r.q).collect();
        assert!(qs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn mismatch_names_field() {
        let (mut ctx, inputs) = setup();
        ctx.params.iterations = 5;
        match compare_quantiles(&[1.0, 2.0], &ctx, &inputs) {
            Err(Error::Mismatch { field, .. }) => assert_eq!(field, "T"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn huge_samples_are_not_dominated() {
        let (ctx, inputs) = setup();
        let cmp = compare_quantiles(&[1e300, 1e300], &ctx, &inputs).unwrap();
        assert!(!cmp.all_dominated);
    }

    #[test]
    fn scaled_curve_spans_empirical_range() {
        let (ctx, inputs) = setup();
        let samples: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let cmp = compare_quantiles(&samples, &ctx, &inputs).unwrap();
        let scaled: Vec<f64> = cmp.rows.iter().map(|r| r.theoretical_scaled).collect();
        let emp: Vec<f64> = cmp.rows.iter().map(|r| r.empirical).collect();
        let (lo, hi) = (emp.iter().cloned().fold(f64::INFINITY, f64::min), emp.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        assert!((scaled.iter().cloned().fold(f64::INFINITY, f64::min) - lo).abs() < 1e-9);
        assert!((scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - hi).abs() < 1e-9);
    }
}
