//! Combining independent per-experiment VOIE estimates.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Result, VoieError};
use crate::estimators::VoieEstimate;
use crate::normal;

/// Tolerance on `Σ a_j = 1` for caller-supplied weights.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// One experiment's estimate and conservative variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Effect {
    pub id: String,
    pub tau: f64,
    pub var: f64,
}

impl Effect {
    pub fn new(id: impl Into<String>, tau: f64, var: f64) -> Self {
        Effect { id: id.into(), tau, var }
    }

    pub fn from_estimate(id: impl Into<String>, estimate: &VoieEstimate<f64>) -> Result<Self> {
        let id = id.into();
        let var = estimate.var_upper_hat().ok_or_else(|| VoieError::MissingVariance(id.clone()))?;
        Ok(Effect::new(id, estimate.tau_hat(), var))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateEstimate {
    pub delta_hat: f64,
    pub var_hat: f64,
    /// Aligned with the input; excluded experiments carry weight 0.
    pub weights: Vec<f64>,
    pub ids: Vec<String>,
    /// Two-sided normal-reference p-value; absent when `var_hat = 0`.
    pub p_value: Option<f64>,
    pub normalized: Option<f64>,
    /// Experiments with nonzero weight.
    pub experiment_count: usize,
    /// Ids dropped for having zero variance.
    pub excluded: Vec<String>,
}

impl AggregateEstimate {
    pub fn standard_error(&self) -> f64 {
        self.var_hat.sqrt()
    }

    pub fn interval(&self, alpha: f64) -> Result<(f64, f64)> {
        let half = normal::critical_value(alpha)? * self.standard_error();
        Ok((self.delta_hat - half, self.delta_hat + half))
    }

    /// Sets `normalized = f(delta_hat)` for the given baselines.
    pub fn with_normalization(mut self, baseline_prev: f64, baseline_curr: f64) -> Result<Self> {
        self.normalized = Some(normalize(self.delta_hat, baseline_prev, baseline_curr)?);
        Ok(self)
    }

    pub fn significant_at(&self, level: f64) -> bool {
        self.p_value.is_some_and(|p| p < level)
    }
}

fn check_effects(effects: &[Effect]) -> Result<()> {
    if effects.is_empty() {
        return Err(VoieError::EmptyInput);
    }
    for e in effects {
        if !e.tau.is_finite() {
            return Err(VoieError::Precondition(format!("{}: non-finite estimate", e.id)));
        }
        if e.var.is_nan() || e.var < 0.0 {
            return Err(VoieError::Precondition(format!("{}: invalid variance {}", e.id, e.var)));
        }
    }
    Ok(())
}

fn build(effects: &[Effect], weights: Vec<f64>, excluded: Vec<String>) -> AggregateEstimate {
    let mut delta_hat = 0.0;
    let mut var_hat = 0.0;
    for (e, &a) in effects.iter().zip(&weights) {
        if a != 0.0 {
            delta_hat += a * e.tau;
            var_hat += a * a * e.var;
        }
    }
    let p_value = (var_hat > 0.0).then(|| 2.0 * normal::survival(delta_hat.abs() / var_hat.sqrt()));
    AggregateEstimate {
        delta_hat,
        var_hat,
        experiment_count: weights.iter().filter(|&&a| a != 0.0).count(),
        weights,
        ids: effects.iter().map(|e| e.id.clone()).collect(),
        p_value,
        normalized: None,
        excluded,
    }
}

/// `δ_a = Σ a_j τ̂_j` with `V̂ = Σ a_j² V̂_j`.
pub fn aggregate_weighted(effects: &[Effect], weights: &[f64]) -> Result<AggregateEstimate> {
    check_effects(effects)?;
    if weights.len() != effects.len() {
        return Err(VoieError::LengthMismatch {
            estimates: effects.len(),
            weights: weights.len(),
        });
    }
    let sum: f64 = weights.iter().sum();
    if !sum.is_finite() || (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(VoieError::WeightSum(sum));
    }
    Ok(build(effects, weights.to_vec(), Vec::new()))
}

/// Weights proportional to `1/V̂_j`. Zero-variance estimates are dropped
/// with a warning instead of receiving unbounded weight.
pub fn aggregate_inverse_variance(effects: &[Effect]) -> Result<AggregateEstimate> {
    check_effects(effects)?;
    let mut excluded = Vec::new();
    let precision: Vec<f64> = effects
        .iter()
        .map(|e| {
            if e.var == 0.0 {
                log::warn!("excluding {} from inverse-variance weights: zero variance", e.id);
                excluded.push(e.id.clone());
                0.0
            } else {
                1.0 / e.var
            }
        })
        .collect();
    if excluded.len() == effects.len() {
        return Err(VoieError::ZeroVariance);
    }
    let total: f64 = precision.iter().sum();
    if total == 0.0 {
        return Err(VoieError::AllInfiniteVariance);
    }
    let weights = precision.iter().map(|w| w / total).collect();
    Ok(build(effects, weights, excluded))
}

/// Two-sided p-value for `H0: δ = 0`. Normal reference by default; `df`
/// switches to a Student-t reference.
pub fn test_zero(aggregate: &AggregateEstimate, df: Option<f64>) -> Result<f64> {
    if aggregate.var_hat.is_nan() || aggregate.var_hat <= 0.0 {
        return Err(VoieError::ZeroVariance);
    }
    let z = aggregate.delta_hat.abs() / aggregate.var_hat.sqrt();
    let p = match df {
        None => 2.0 * normal::survival(z),
        Some(df) => {
            let t = StudentsT::new(0.0, 1.0, df)
                .map_err(|e| VoieError::Precondition(format!("degrees of freedom {df}: {e}")))?;
            2.0 * t.sf(z)
        }
    };
    Ok(p.clamp(0.0, 1.0))
}

/// `x / (y_curr − y_prev)`: the effect as a share of the baseline change.
pub fn normalize(delta_hat: f64, baseline_prev: f64, baseline_curr: f64) -> Result<f64> {
    let denom = baseline_curr - baseline_prev;
    if denom == 0.0 || !denom.is_finite() {
        return Err(VoieError::ZeroDenominator);
    }
    Ok(delta_hat / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(v2: f64) -> Vec<Effect> {
        vec![Effect::new("a", 1.0, 1.0), Effect::new("b", 3.0, v2)]
    }

    #[test]
    fn fixed_weights() {
        let agg = aggregate_weighted(&pair(1.0), &[0.5, 0.5]).unwrap();
        assert_eq!((agg.delta_hat, agg.var_hat), (2.0, 0.5));
        let agg = aggregate_weighted(&pair(1.0), &[0.25, 0.75]).unwrap();
        assert_eq!((agg.delta_hat, agg.var_hat), (2.5, 0.625));
        assert!(matches!(
            aggregate_weighted(&pair(1.0), &[0.5, 0.6]),
            Err(VoieError::WeightSum(_))
        ));
        assert!(matches!(
            aggregate_weighted(&pair(1.0), &[1.0]),
            Err(VoieError::LengthMismatch { .. })
        ));
        assert!(matches!(aggregate_weighted(&[], &[]), Err(VoieError::EmptyInput)));
    }

    #[test]
    fn inverse_variance_weights() {
        let agg = aggregate_inverse_variance(&pair(1.0)).unwrap();
        assert_eq!(agg.weights, vec![0.5, 0.5]);
        let agg = aggregate_inverse_variance(&pair(3.0)).unwrap();
        assert!((agg.weights[0] - 0.75).abs() < 1e-15);
        assert!((agg.delta_hat - 1.5).abs() < 1e-15);
        assert!((agg.var_hat - 0.75).abs() < 1e-15);
    }

    #[test]
    fn zero_and_infinite_variances() {
        let effects = vec![Effect::new("a", 1.0, 0.0), Effect::new("b", 3.0, 2.0)];
        let agg = aggregate_inverse_variance(&effects).unwrap();
        assert_eq!(agg.weights, vec![0.0, 1.0]);
        assert_eq!(agg.excluded, vec!["a".to_string()]);
        assert_eq!(agg.experiment_count, 1);

        let inf = vec![Effect::new("a", 1.0, f64::INFINITY)];
        assert!(matches!(aggregate_inverse_variance(&inf), Err(VoieError::AllInfiniteVariance)));
        let zero = vec![Effect::new("a", 1.0, 0.0)];
        assert!(matches!(aggregate_inverse_variance(&zero), Err(VoieError::ZeroVariance)));
    }

    #[test]
    fn single_estimate_passes_through() {
        let one = vec![Effect::new("a", 0.7, 0.2)];
        for agg in [aggregate_inverse_variance(&one).unwrap(), aggregate_weighted(&one, &[1.0]).unwrap()] {
            assert_eq!((agg.delta_hat, agg.var_hat, agg.weights.clone()), (0.7, 0.2, vec![1.0]));
        }
    }

    #[test]
    fn zero_test() {
        let agg = aggregate_weighted(&[Effect::new("a", 0.0, 1.0)], &[1.0]).unwrap();
        assert_eq!(test_zero(&agg, None).unwrap(), 1.0);
        let agg = aggregate_weighted(&[Effect::new("a", 1.959964, 1.0)], &[1.0]).unwrap();
        assert!((test_zero(&agg, None).unwrap() - 0.05).abs() < 1e-4);
        assert!((agg.p_value.unwrap() - 0.05).abs() < 1e-4);
        // t with 10 df is heavier tailed than the normal
        assert!(test_zero(&agg, Some(10.0)).unwrap() > 0.07);
        let flat = aggregate_weighted(&[Effect::new("a", 1.0, 0.0)], &[1.0]).unwrap();
        assert!(matches!(test_zero(&flat, None), Err(VoieError::ZeroVariance)));
        assert!(flat.p_value.is_none());
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize(0.5, 10.0, 12.0).unwrap(), 0.25);
        assert!(matches!(normalize(0.5, 3.0, 3.0), Err(VoieError::ZeroDenominator)));
        let agg = aggregate_weighted(&pair(1.0), &[0.5, 0.5]).unwrap();
        assert_eq!(agg.with_normalization(0.0, 4.0).unwrap().normalized, Some(0.5));
    }
}
