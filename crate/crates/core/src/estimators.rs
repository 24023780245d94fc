//! Plug-in VOIE estimators, conservative variance estimates and Wald
//! intervals.
//!
//! Every estimator is a signed, weighted sum of bucket means over disjoint
//! buckets, so all of them reduce to [`combine`] over [`BucketSummary`]
//! values; unit-level entry points only summarize buckets first. The
//! variance estimate `Σ w² s²/N` omits the `−S²_τ/N` term, which involves
//! outcomes of the same unit under different paths and is not estimable.

use std::fmt;
use std::str::FromStr;

use crate::design::{Path, Split};
use crate::error::{Result, VoieError};
use crate::normal;
use crate::population::ObservedData;
use crate::scalar::{mean, sample_variance, Real, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimandKind {
    Progressive,
    RepeatedMaxPower,
    Deramp,
    MultiVariant,
    Collapsed,
}

impl fmt::Display for EstimandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimandKind::Progressive => "progressive",
            EstimandKind::RepeatedMaxPower => "repeated-max-power",
            EstimandKind::Deramp => "de-ramp",
            EstimandKind::MultiVariant => "multi-variant",
            EstimandKind::Collapsed => "collapsed",
        })
    }
}

impl FromStr for EstimandKind {
    type Err = VoieError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "progressive" => Ok(EstimandKind::Progressive),
            "repeated-max-power" | "repeated-mp" | "repeated" => Ok(EstimandKind::RepeatedMaxPower),
            "de-ramp" | "deramp" => Ok(EstimandKind::Deramp),
            "multi-variant" | "multivariant" => Ok(EstimandKind::MultiVariant),
            "collapsed" => Ok(EstimandKind::Collapsed),
            other => Err(VoieError::Precondition(format!("unknown estimator kind `{other}`"))),
        }
    }
}

/// Whether a bucket of size one is an error or only drops the variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceMode {
    #[default]
    Required,
    /// Point estimate only when some bucket is a singleton.
    Optional,
}

/// Which bucket a summary describes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BucketRole {
    /// `Y1` over units treated in the first iteration (one variant).
    FirstTreated(String),
    /// `Y1` over first-iteration controls.
    FirstControl,
    /// `Y2` over path `(c, v2)`.
    NewlyTreated,
    /// `Y2 − Y1` over path `(c, c)`.
    ControlDrift,
    /// `Y2 − Y1` over path `(v1, v2)`.
    TreatedChange,
    /// Bucket `ξ = k` of the collapsed three-arm view.
    Collapsed(u8),
}

impl fmt::Display for BucketRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BucketRole::FirstTreated(v) if v == "v1" => f.write_str("(v1,·)"),
            BucketRole::FirstTreated(v) => write!(f, "(v1[{v}],·)"),
            BucketRole::FirstControl => f.write_str("(c,·) iteration 1"),
            BucketRole::NewlyTreated => f.write_str("(c,v2)"),
            BucketRole::ControlDrift => f.write_str("(c,c)"),
            BucketRole::TreatedChange => f.write_str("(v1,v2)"),
            BucketRole::Collapsed(k) => write!(f, "xi={k}"),
        }
    }
}

/// Count, mean and sample variance (divisor `count − 1`) of one bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketSummary<T> {
    pub count: usize,
    pub mean: T,
    pub sample_variance: Option<T>,
}

impl<T: Scalar> BucketSummary<T> {
    pub fn new(count: usize, mean: T, sample_variance: Option<T>) -> Result<Self> {
        if count == 0 {
            return Err(VoieError::Precondition("bucket summary with zero count".into()));
        }
        if let Some(v) = &sample_variance {
            if count < 2 {
                return Err(VoieError::Precondition(
                    "sample variance reported for a bucket of one".into(),
                ));
            }
            if *v < T::zero() || !v.is_finite_value() {
                return Err(VoieError::Precondition(format!("invalid sample variance {v:?}")));
            }
        }
        if !mean.is_finite_value() {
            return Err(VoieError::Precondition("non-finite bucket mean".into()));
        }
        Ok(BucketSummary {
            count,
            mean,
            sample_variance,
        })
    }

    /// Summarizes raw values; `None` for an empty bucket.
    pub fn from_values(values: &[T]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let m = mean(values);
        let v = sample_variance(values, &m);
        Some(BucketSummary {
            count: values.len(),
            mean: m,
            sample_variance: v,
        })
    }
}

/// One signed term `weight · mean(bucket)` of an estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct Term<T> {
    pub role: BucketRole,
    pub weight: T,
    pub summary: BucketSummary<T>,
}

impl<T: Scalar> Term<T> {
    pub fn new(role: BucketRole, weight: T, summary: BucketSummary<T>) -> Self {
        Term { role, weight, summary }
    }
}

/// Point estimate and (when estimable) its conservative variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate<T> {
    pub kind: EstimandKind,
    pub tau_hat: T,
    pub var_upper_hat: Option<T>,
    pub terms: Vec<Term<T>>,
}

/// `τ̂ = Σ w·mean` and `V̂ = Σ w²·s²/N`, accumulated in term order.
pub fn combine<T: Scalar>(kind: EstimandKind, terms: Vec<Term<T>>, mode: VarianceMode) -> Result<PointEstimate<T>> {
    let mut tau = T::zero();
    let mut var = Some(T::zero());
    for term in &terms {
        let s = &term.summary;
        tau = tau + term.weight.clone() * s.mean.clone();
        match (&s.sample_variance, mode) {
            (Some(v), _) => {
                var = var.map(|acc| {
                    acc + term.weight.clone() * term.weight.clone() * v.clone() / T::from_count(s.count)
                })
            }
            (None, VarianceMode::Optional) => var = None,
            (None, VarianceMode::Required) => {
                return Err(VoieError::InsufficientBucket {
                    bucket: term.role.to_string(),
                    count: s.count,
                    required: 2,
                })
            }
        }
    }
    Ok(PointEstimate {
        kind,
        tau_hat: tau,
        var_upper_hat: var,
        terms,
    })
}

/// Estimate with its Wald interval.
#[derive(Debug, Clone, PartialEq)]
pub struct VoieEstimate<T> {
    pub point: PointEstimate<T>,
    pub alpha: f64,
    /// Absent exactly when the variance is.
    pub ci: Option<(T, T)>,
}

impl<T: Real> VoieEstimate<T> {
    pub fn from_point(point: PointEstimate<T>, alpha: f64) -> Result<Self> {
        normal::critical_value(alpha)?;
        let ci = match point.var_upper_hat {
            Some(v) => Some(wald_interval(point.tau_hat, v, alpha)?),
            None => None,
        };
        Ok(VoieEstimate { point, alpha, ci })
    }

    pub fn kind(&self) -> EstimandKind {
        self.point.kind
    }

    pub fn tau_hat(&self) -> T {
        self.point.tau_hat
    }

    pub fn var_upper_hat(&self) -> Option<T> {
        self.point.var_upper_hat
    }
}

/// `(τ̂ − z_{α/2}√V̂, τ̂ + z_{α/2}√V̂)`.
pub fn wald_interval<T: Real>(tau_hat: T, var_upper_hat: T, alpha: f64) -> Result<(T, T)> {
    let z = normal::critical_value(alpha)?;
    if var_upper_hat < T::zero() || !var_upper_hat.is_finite() {
        return Err(VoieError::Precondition(format!(
            "variance must be finite and non-negative, got {var_upper_hat:?}"
        )));
    }
    let half = T::from_real(z) * var_upper_hat.sqrt();
    Ok((tau_hat - half, tau_hat + half))
}

fn summarize<T: Scalar>(role: BucketRole, values: &[T]) -> Result<BucketSummary<T>> {
    BucketSummary::from_values(values).ok_or_else(|| VoieError::InsufficientBucket {
        bucket: role.to_string(),
        count: 0,
        required: 2,
    })
}

fn require_second_iteration<T: Scalar>(obs: &ObservedData<T>) -> Result<&[T]> {
    obs.y2_obs()
        .ok_or_else(|| VoieError::Precondition("observed data stops after the first iteration".into()))
}

fn collect<T: Scalar>(obs: &ObservedData<T>, pick: impl Fn(usize, Path) -> Option<T>) -> Vec<T> {
    obs.paths()
        .iter()
        .enumerate()
        .filter_map(|(i, &p)| pick(i, p))
        .collect()
}

fn drift_values<T: Scalar>(obs: &ObservedData<T>) -> Vec<T> {
    obs.delta().iter().flatten().cloned().collect()
}

fn reject_deramped<T: Scalar>(obs: &ObservedData<T>) -> Result<()> {
    if obs.paths().iter().any(|p| matches!(p, Path::TreatedControl(_))) {
        return Err(VoieError::Precondition(
            "observed data is de-ramped; use the de-ramp estimator".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// summary-level estimators
// ---------------------------------------------------------------------------

/// `mean Y2(c,v2) − mean Y1(v1) − mean Δ(c,c)`.
pub fn progressive_from_summaries<T: Scalar>(
    newly_treated: BucketSummary<T>,
    first_treated: BucketSummary<T>,
    control_drift: BucketSummary<T>,
    mode: VarianceMode,
) -> Result<PointEstimate<T>> {
    combine(
        EstimandKind::Progressive,
        vec![
            Term::new(BucketRole::NewlyTreated, T::one(), newly_treated),
            Term::new(BucketRole::FirstTreated("v1".into()), -T::one(), first_treated),
            Term::new(BucketRole::ControlDrift, -T::one(), control_drift),
        ],
        mode,
    )
}

/// `mean (Y2 − Y1)(v1,v2) − mean (Y2 − Y1)(c,c)`.
pub fn repeated_from_summaries<T: Scalar>(
    treated_change: BucketSummary<T>,
    control_drift: BucketSummary<T>,
    mode: VarianceMode,
) -> Result<PointEstimate<T>> {
    combine(
        EstimandKind::RepeatedMaxPower,
        vec![
            Term::new(BucketRole::TreatedChange, T::one(), treated_change),
            Term::new(BucketRole::ControlDrift, -T::one(), control_drift),
        ],
        mode,
    )
}

/// `−(mean Y1(treated) − mean Y1(control))`.
pub fn deramp_from_summaries<T: Scalar>(
    first_treated: BucketSummary<T>,
    first_control: BucketSummary<T>,
    mode: VarianceMode,
) -> Result<PointEstimate<T>> {
    combine(
        EstimandKind::Deramp,
        vec![
            Term::new(BucketRole::FirstTreated("v1".into()), -T::one(), first_treated),
            Term::new(BucketRole::FirstControl, T::one(), first_control),
        ],
        mode,
    )
}

/// `mean Y2(c,v2) − Σ_j w_j mean Y1(v^(j)) − mean Δ(c,c)` with mixture
/// weights `w_j = p_{1j} / p1`.
pub fn multivariant_from_summaries<T: Scalar>(
    newly_treated: BucketSummary<T>,
    variants: Vec<(String, T, BucketSummary<T>)>,
    control_drift: BucketSummary<T>,
    mode: VarianceMode,
) -> Result<PointEstimate<T>> {
    let mut terms = vec![Term::new(BucketRole::NewlyTreated, T::one(), newly_treated)];
    for (label, weight, summary) in variants {
        terms.push(Term::new(BucketRole::FirstTreated(label), -weight, summary));
    }
    terms.push(Term::new(BucketRole::ControlDrift, -T::one(), control_drift));
    combine(EstimandKind::MultiVariant, terms, mode)
}

/// Mixture weights `p_{1j}/p1` in the scalar type.
pub fn mixture_weights<T: Scalar>(split: &Split) -> Vec<T> {
    let shares: Vec<T> = split.shares().iter().map(|(_, s)| T::from_real(*s)).collect();
    let total = shares.iter().fold(T::zero(), |a, s| a + s.clone());
    shares.into_iter().map(|s| s / total.clone()).collect()
}

// ---------------------------------------------------------------------------
// unit-level point estimates (generic)
// ---------------------------------------------------------------------------

pub fn point_progressive<T: Scalar>(obs: &ObservedData<T>, mode: VarianceMode) -> Result<PointEstimate<T>> {
    let y2 = require_second_iteration(obs)?;
    reject_deramped(obs)?;
    if obs.variants().len() > 1 {
        return Err(VoieError::Precondition(
            "observed data has several first-iteration variants; use the multi-variant estimator".into(),
        ));
    }
    let y1 = obs.y1_obs();
    let newly = collect(obs, |i, p| (p == Path::ControlImproved).then(|| y2[i].clone()));
    let treated = collect(obs, |i, p| p.is_first_treated().then(|| y1[i].clone()));
    let drift = drift_values(obs);
    progressive_from_summaries(
        summarize(BucketRole::NewlyTreated, &newly)?,
        summarize(BucketRole::FirstTreated("v1".into()), &treated)?,
        summarize(BucketRole::ControlDrift, &drift)?,
        mode,
    )
}

pub fn point_repeated_mp<T: Scalar>(obs: &ObservedData<T>, mode: VarianceMode) -> Result<PointEstimate<T>> {
    let y2 = require_second_iteration(obs)?;
    reject_deramped(obs)?;
    if obs.paths().contains(&Path::ControlImproved) {
        return Err(VoieError::Precondition(
            "repeated max-power data cannot contain path (c,v2)".into(),
        ));
    }
    let y1 = obs.y1_obs();
    let change = collect(obs, |i, p| p.is_first_treated().then(|| y2[i].clone() - y1[i].clone()));
    let drift = drift_values(obs);
    repeated_from_summaries(
        summarize(BucketRole::TreatedChange, &change)?,
        summarize(BucketRole::ControlDrift, &drift)?,
        mode,
    )
}

/// Uses first-iteration outcomes only.
pub fn point_deramp<T: Scalar>(obs: &ObservedData<T>, mode: VarianceMode) -> Result<PointEstimate<T>> {
    let y1 = obs.y1_obs();
    let treated = collect(obs, |i, p| p.is_first_treated().then(|| y1[i].clone()));
    let control = collect(obs, |i, p| (!p.is_first_treated()).then(|| y1[i].clone()));
    deramp_from_summaries(
        summarize(BucketRole::FirstTreated("v1".into()), &treated)?,
        summarize(BucketRole::FirstControl, &control)?,
        mode,
    )
}

pub fn point_multivariant<T: Scalar>(
    obs: &ObservedData<T>,
    split: &Split,
    winner: &str,
    mode: VarianceMode,
) -> Result<PointEstimate<T>> {
    split.index_of(winner)?;
    let y2 = require_second_iteration(obs)?;
    reject_deramped(obs)?;
    let y1 = obs.y1_obs();
    let weights = mixture_weights::<T>(split);
    let mut variants = Vec::with_capacity(split.len());
    for ((label, _), w) in split.shares().iter().zip(weights) {
        let j = obs
            .variants()
            .iter()
            .position(|v| v == label)
            .ok_or_else(|| VoieError::UnknownVariant(label.clone()))?;
        let values = collect(obs, |i, p| (p.first_variant() == Some(j)).then(|| y1[i].clone()));
        let role = BucketRole::FirstTreated(label.clone());
        variants.push((label.clone(), w, summarize(role, &values)?));
    }
    let newly = collect(obs, |i, p| (p == Path::ControlImproved).then(|| y2[i].clone()));
    let drift = drift_values(obs);
    multivariant_from_summaries(
        summarize(BucketRole::NewlyTreated, &newly)?,
        variants,
        summarize(BucketRole::ControlDrift, &drift)?,
        mode,
    )
}

/// Three-arm re-indexing of a progressive experiment: `ξ = 1` for units
/// treated in the first iteration (outcome `Y1`), `ξ = 2` for `(c, v2)`
/// (outcome `Y2`), `ξ = 3` for `(c, c)` (outcome `Δ`).
#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedView<T> {
    pub labels: Vec<u8>,
    pub outcomes: Vec<T>,
}

impl<T: Scalar> CollapsedView<T> {
    pub fn from_observed(obs: &ObservedData<T>) -> Result<Self> {
        let y2 = require_second_iteration(obs)?;
        reject_deramped(obs)?;
        let y1 = obs.y1_obs();
        let (labels, outcomes) = obs
            .paths()
            .iter()
            .enumerate()
            .map(|(i, &p)| match p {
                Path::ControlImproved => (2, y2[i].clone()),
                Path::ControlControl => (3, y2[i].clone() - y1[i].clone()),
                _ => (1, y1[i].clone()),
            })
            .unzip();
        Ok(CollapsedView { labels, outcomes })
    }

    pub fn bucket(&self, k: u8) -> Vec<T> {
        self.labels
            .iter()
            .zip(&self.outcomes)
            .filter(|(l, _)| **l == k)
            .map(|(_, y)| y.clone())
            .collect()
    }
}

/// Sign `(−1)^{|2−k|}` of collapsed bucket `k`.
pub fn collapsed_sign<T: Scalar>(k: u8) -> T {
    if k == 2 {
        T::one()
    } else {
        -T::one()
    }
}

pub fn point_collapsed<T: Scalar>(obs: &ObservedData<T>, mode: VarianceMode) -> Result<PointEstimate<T>> {
    let view = CollapsedView::from_observed(obs)?;
    let terms = (1..=3u8)
        .map(|k| {
            let role = BucketRole::Collapsed(k);
            let summary = summarize(role.clone(), &view.bucket(k))?;
            Ok(Term::new(role, collapsed_sign(k), summary))
        })
        .collect::<Result<Vec<_>>>()?;
    combine(EstimandKind::Collapsed, terms, mode)
}

// ---------------------------------------------------------------------------
// interval-bearing entry points
// ---------------------------------------------------------------------------

pub fn estimate_progressive<T: Real>(obs: &ObservedData<T>, alpha: f64) -> Result<VoieEstimate<T>> {
    VoieEstimate::from_point(point_progressive(obs, VarianceMode::Required)?, alpha)
}

pub fn estimate_repeated_mp<T: Real>(obs: &ObservedData<T>, alpha: f64) -> Result<VoieEstimate<T>> {
    VoieEstimate::from_point(point_repeated_mp(obs, VarianceMode::Required)?, alpha)
}

pub fn estimate_deramp<T: Real>(obs: &ObservedData<T>, alpha: f64) -> Result<VoieEstimate<T>> {
    VoieEstimate::from_point(point_deramp(obs, VarianceMode::Required)?, alpha)
}

pub fn estimate_multivariant<T: Real>(
    obs: &ObservedData<T>,
    split: &Split,
    winner: &str,
    alpha: f64,
) -> Result<VoieEstimate<T>> {
    VoieEstimate::from_point(point_multivariant(obs, split, winner, VarianceMode::Required)?, alpha)
}

pub fn estimate_collapsed<T: Real>(obs: &ObservedData<T>, alpha: f64) -> Result<VoieEstimate<T>> {
    VoieEstimate::from_point(point_collapsed(obs, VarianceMode::Required)?, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{assign_progressive, assign_repeated_mp, Assignment, Design, DesignKind};
    use crate::population::{observe, observe_first_iteration, reference_table_p4, PotentialOutcomeTable};

    fn p4_progressive_example() -> ObservedData<f64> {
        let a = Assignment::from_paths(
            vec![
                Path::TreatedImproved(0),
                Path::ControlImproved,
                Path::ControlControl,
                Path::ControlControl,
            ],
            DesignKind::Progressive,
            vec![],
        )
        .unwrap();
        observe(&reference_table_p4(), &a).unwrap()
    }

    fn p4_half_split(kind: DesignKind) -> Assignment {
        Assignment::from_paths(
            vec![
                Path::TreatedImproved(0),
                Path::TreatedImproved(0),
                Path::ControlControl,
                Path::ControlControl,
            ],
            kind,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn progressive_hand_value_on_reference_table() {
        let obs = p4_progressive_example();
        let point = point_progressive(&obs, VarianceMode::Optional).unwrap();
        assert_eq!(point.tau_hat, 12.0);
        assert_eq!(point.var_upper_hat, None);
        match estimate_progressive(&obs, 0.05) {
            Err(VoieError::InsufficientBucket { bucket, count, .. }) => {
                assert_eq!(bucket, "(c,v2)");
                assert_eq!(count, 1);
            }
            other => panic!("expected insufficient bucket, got {other:?}"),
        }
    }

    #[test]
    fn constant_table_gives_degenerate_interval() {
        let t = PotentialOutcomeTable::constant(20, 5.0).unwrap();
        let d = Design::progressive(20, 0.25, 0.5).unwrap();
        let obs = observe(&t, &assign_progressive(&d, 3).unwrap()).unwrap();
        let est = estimate_progressive(&obs, 0.05).unwrap();
        assert_eq!(est.tau_hat(), 0.0);
        assert_eq!(est.var_upper_hat(), Some(0.0));
        assert_eq!(est.ci, Some((0.0, 0.0)));

        let r = Design::repeated_max_power(20).unwrap();
        let obs = observe(&t, &assign_repeated_mp(&r, 3).unwrap()).unwrap();
        let est = estimate_repeated_mp(&obs, 0.05).unwrap();
        assert_eq!((est.tau_hat(), est.ci), (0.0, Some((0.0, 0.0))));
        assert_eq!(estimate_deramp(&obs, 0.05).unwrap().tau_hat(), 0.0);
        assert_eq!(estimate_collapsed(&observe(&t, &assign_progressive(&d, 8).unwrap()).unwrap(), 0.05).unwrap().tau_hat(), 0.0);
    }

    #[test]
    fn empty_newly_treated_bucket() {
        let obs = observe(&reference_table_p4(), &p4_half_split(DesignKind::Progressive)).unwrap();
        assert!(matches!(
            point_progressive(&obs, VarianceMode::Optional),
            Err(VoieError::InsufficientBucket { count: 0, .. })
        ));
    }

    #[test]
    fn repeated_hand_value_on_reference_table() {
        let obs = observe(&reference_table_p4(), &p4_half_split(DesignKind::RepeatedMaxPower)).unwrap();
        let est = estimate_repeated_mp(&obs, 0.05).unwrap();
        assert_eq!(est.tau_hat(), 2.0);
        // s² of {1, 3} is 2, s² of {0, 0} is 0
        assert_eq!(est.var_upper_hat(), Some(1.0));
    }

    #[test]
    fn deramp_hand_value_on_reference_table() {
        let a = p4_half_split(DesignKind::Progressive).deramped();
        let obs = observe_first_iteration(&reference_table_p4(), &a).unwrap();
        let est = estimate_deramp(&obs, 0.05).unwrap();
        assert_eq!(est.tau_hat(), 18.5);
        assert_eq!(est.kind(), EstimandKind::Deramp);

        let single = Assignment::from_paths(
            vec![
                Path::TreatedControl(0),
                Path::ControlControl,
                Path::ControlControl,
                Path::ControlControl,
            ],
            DesignKind::Progressive,
            vec![],
        )
        .unwrap();
        let obs = observe_first_iteration(&reference_table_p4(), &single).unwrap();
        assert!(matches!(
            estimate_deramp(&obs, 0.05),
            Err(VoieError::InsufficientBucket { count: 1, .. })
        ));
    }

    #[test]
    fn collapsed_matches_progressive_on_example() {
        let obs = p4_progressive_example();
        let c = point_collapsed(&obs, VarianceMode::Optional).unwrap();
        assert_eq!(c.tau_hat, 12.0);
        assert_eq!(c.kind, EstimandKind::Collapsed);
        let view = CollapsedView::from_observed(&obs).unwrap();
        assert_eq!(view.labels, vec![1, 2, 3, 3]);
        assert_eq!(view.outcomes, vec![12.0, 24.0, 0.0, 0.0]);
    }

    #[test]
    fn multivariant_with_one_variant_is_progressive() {
        let t = crate::oracle::SyntheticPopulation::default().with_n(60).generate(5).unwrap();
        let d = Design::progressive(60, 0.25, 0.5).unwrap();
        let split: Split = "v1=0.25".parse().unwrap();
        for seed in 0..20 {
            let obs = observe(&t, &assign_progressive(&d, seed).unwrap()).unwrap();
            let p = estimate_progressive(&obs, 0.05).unwrap();
            let m = estimate_multivariant(&obs, &split, "v1", 0.05).unwrap();
            assert_eq!(p.tau_hat().to_bits(), m.tau_hat().to_bits());
            assert_eq!(p.var_upper_hat().unwrap().to_bits(), m.var_upper_hat().unwrap().to_bits());
            assert_eq!(p.ci, m.ci);
        }
    }

    #[test]
    fn wald_interval_values() {
        let (lo, hi) = wald_interval(0.0_f64, 1.0, 0.05).unwrap();
        assert!((hi - 1.959_96).abs() < 5e-6 && (lo + 1.959_96).abs() < 5e-6);
        assert_eq!(wald_interval(3.0, 0.0, 0.05).unwrap(), (3.0, 3.0));
        assert!(matches!(wald_interval(0.0, 1.0, 1.5), Err(VoieError::AlphaDomain(_))));
        assert!(wald_interval(0.0, -1.0, 0.05).is_err());
    }

    #[test]
    fn summary_validation() {
        assert!(BucketSummary::new(1, 2.0, Some(1.0)).is_err());
        assert!(BucketSummary::new(3, 2.0, Some(-1.0)).is_err());
        assert!(BucketSummary::new(0, 2.0, None).is_err());
        assert!(BucketSummary::new(1, 2.0, None).is_ok());
    }

    #[test]
    fn f32_estimates() {
        let obs32 = p4_progressive_example().map_outcomes(|v| *v).unwrap();
        let p = point_progressive(&obs32, VarianceMode::Optional).unwrap();
        assert_eq!(p.tau_hat, 12.0);
        let t: PotentialOutcomeTable<f32> = reference_table_p4().map_outcomes(|v| *v as f32);
        let obs = observe(&t, &p4_half_split(DesignKind::RepeatedMaxPower)).unwrap();
        assert_eq!(estimate_repeated_mp(&obs, 0.05).unwrap().tau_hat(), 2.0f32);
    }
}
