use serde::Serialize;
use thiserror::Error;

use super::Method;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("ground truth is zero")]
    ZeroTruth,
    #[error("no values")]
    Empty,
    #[error("series needs at least 2 values, got {0}")]
    TooShort(usize),
    #[error("series lengths differ: {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("series has zero variance")]
    ZeroVariance,
}

/// `(estimate − truth) / truth · 100`.
pub fn percentage_error(estimate: f64, truth: f64) -> Result<f64, MetricError> {
    if truth == 0.0 {
        return Err(MetricError::ZeroTruth);
    }
    Ok((estimate - truth) / truth * 100.0)
}

/// Mean absolute percentage error over `(truth, estimate)` pairs.
pub fn mape(pairs: &[(f64, f64)]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut sum = 0.0;
    for &(truth, est) in pairs {
        sum += percentage_error(est, truth)?.abs();
    }
    Ok(sum / pairs.len() as f64)
}

/// Sample variance with denominator `n − 1`.
pub fn sample_variance(xs: &[f64]) -> Result<f64, MetricError> {
    if xs.len() < 2 {
        return Err(MetricError::TooShort(xs.len()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    Ok(xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0))
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(MetricError::TooShort(xs.len()));
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Full per-iteration history of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSeries {
    pub method: Method,
    /// Iterations evaluated by the estimator.
    pub k_stop: u64,
    /// `(Δt_iteration, Δt_overlap)` for iterations 1..=k.
    pub series: Vec<(u64, i64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub mean_var_iteration: f64,
    pub mean_var_overlap: f64,
    pub fallback_layer_fraction: f64,
    /// Layers whose tail `[k_stop, k]` held at least two iterations.
    pub layers_measured: usize,
}

/// Mean over layers of the sample variance of each layer's tail after the
/// evaluated prefix. Layers with fewer than two tail iterations are skipped.
pub fn variance_diagnostics(layers: &[LayerSeries]) -> Result<Diagnostics, MetricError> {
    if layers.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut vi = Vec::new();
    let mut vo = Vec::new();
    for l in layers {
        let from = (l.k_stop.max(1) - 1) as usize;
        let tail = l.series.get(from..).unwrap_or(&[]);
        if tail.len() < 2 {
            continue;
        }
        let it: Vec<f64> = tail.iter().map(|&(i, _)| i as f64).collect();
        let ov: Vec<f64> = tail.iter().map(|&(_, o)| o as f64).collect();
        vi.push(sample_variance(&it)?);
        vo.push(sample_variance(&ov)?);
    }
    if vi.is_empty() {
        return Err(MetricError::TooShort(0));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let fallbacks = layers.iter().filter(|l| l.method == Method::Fallback).count();
    Ok(Diagnostics {
        mean_var_iteration: mean(&vi),
        mean_var_overlap: mean(&vo),
        fallback_layer_fraction: fallbacks as f64 / layers.len() as f64,
        layers_measured: vi.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn percentage_error_examples() {
        assert!((percentage_error(22484.0, 22481.0).unwrap() - 0.013_344_6).abs() < 1e-6);
        assert_eq!(percentage_error(100.0, 100.0), Ok(0.0));
        assert_eq!(percentage_error(90.0, 100.0), Ok(-10.0));
        assert_eq!(percentage_error(1.0, 0.0), Err(MetricError::ZeroTruth));
    }

    #[test]
    fn mape_examples() {
        assert!((mape(&[(100.0, 110.0), (200.0, 180.0)]).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(mape(&[]), Err(MetricError::Empty));
    }

    #[test]
    fn variance_examples() {
        assert_eq!(sample_variance(&[5.0; 6]), Ok(0.0));
        assert!((sample_variance(&[9.0, 7.0, 9.0, 7.0]).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(sample_variance(&[1.0]), Err(MetricError::TooShort(1)));
    }

    #[test]
    fn diagnostics_of_constant_tail() {
        let l = LayerSeries { method: Method::FixedPoint, k_stop: 3, series: vec![(8, 0), (9, 2), (9, 2), (9, 2)] };
        let d = variance_diagnostics(&[l]).unwrap();
        assert_eq!(d.mean_var_iteration, 0.0);
        assert_eq!(d.mean_var_overlap, 0.0);
        assert_eq!(d.fallback_layer_fraction, 0.0);
    }

    #[test]
    fn pearson_of_linear_series() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn mape_of_exact_estimates_is_zero(xs in prop::collection::vec(1.0f64..1e9, 1..20)) {
            let pairs: Vec<_> = xs.iter().map(|&x| (x, x)).collect();
            prop_assert_eq!(mape(&pairs).unwrap(), 0.0);
        }

        #[test]
        fn variance_is_shift_invariant(xs in prop::collection::vec(-1e3f64..1e3, 2..20), d in -1e3f64..1e3) {
            let shifted: Vec<_> = xs.iter().map(|x| x + d).collect();
            let a = sample_variance(&xs).unwrap();
            let b = sample_variance(&shifted).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-6 * (1.0 + a));
        }
    }
}
