//! Randomization ground truth.
//!
//! [`exact_moments`] evaluates the estimator on every admissible assignment
//! and compares the resulting mean and variance with the closed-form
//! finite-population expressions. [`monte_carlo_coverage`] samples
//! assignments to measure Wald interval coverage when enumeration is out of
//! reach.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::design::{assign, enumerate_assignments_capped, Design, DesignKind, DEFAULT_ENUMERATION_CAP};
use crate::error::{Result, VoieError};
use crate::estimators::{
    point_collapsed, EstimandKind, point_progressive, point_repeated_mp, wald_interval, PointEstimate, VarianceMode,
};
use crate::ingest::{record_from_observed, ExperimentRecord, Month, ALLOCATION_BANDS};
use crate::population::{
    check_time_invariance, observe, observe_first_iteration, true_voie_deramp, progressive_target, repeated_target, true_voie, Column, ObservedData,
    PotentialOutcomeTable, TableBuilder, DEFAULT_ASSUMPTION_TOLERANCE,
};
use crate::scalar::{mean, population_variance, Scalar};

/// Finite-population variance components (divisor `N − 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceTerms<T> {
    /// `S²_{c,v2}` (progressive) or `S²_{v1,v2}` of the treated change
    /// (repeated max-power).
    pub second: T,
    /// `S²_{v1}`; absent for repeated max-power designs.
    pub first: Option<T>,
    /// `S²_Δ`.
    pub drift: T,
    /// `S²_τ` of the per-unit contrast.
    pub tau: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleMoments<T> {
    pub exact_mean: T,
    /// Variance of `τ̂` over the uniform assignment distribution.
    pub exact_variance: T,
    /// Closed form including the `−S²_τ/N` term.
    pub theoretical_variance: T,
    pub s_terms: VarianceTerms<T>,
    pub assignment_count: u128,
    /// Population mean of the per-unit contrast the estimator targets.
    pub target: T,
    /// Enumeration average of `V̂`, when every assignment has buckets of
    /// at least two units.
    pub mean_var_upper_hat: Option<T>,
}

fn check_supported(design: &Design) -> Result<()> {
    if design.is_multivariant() {
        return Err(VoieError::Precondition(
            "randomization oracle covers single-variant designs only".into(),
        ));
    }
    Ok(())
}

fn point_for<T: Scalar>(design: &Design, obs: &ObservedData<T>, mode: VarianceMode) -> Result<PointEstimate<T>> {
    match design.kind {
        DesignKind::Progressive => point_progressive(obs, mode),
        DesignKind::RepeatedMaxPower => point_repeated_mp(obs, mode),
    }
}

/// The estimand the design's estimator is unbiased for, with per-unit terms.
pub fn design_target<T: Scalar>(table: &PotentialOutcomeTable<T>, design: &Design) -> Result<(T, Vec<T>)> {
    let e = match design.kind {
        DesignKind::Progressive => progressive_target(table)?,
        DesignKind::RepeatedMaxPower => repeated_target(table)?,
    };
    Ok((e.value, e.per_unit))
}

/// Closed-form components for the design in use.
pub fn variance_terms<T: Scalar>(table: &PotentialOutcomeTable<T>, design: &Design) -> Result<VarianceTerms<T>> {
    check_supported(design)?;
    let drift = table.control_drift();
    let v1 = table.column(&Column::Y1Variant(0))?;
    let (_, contrast) = design_target(table, design)?;
    let second: Vec<T> = match design.kind {
        DesignKind::Progressive => table.column(&Column::Y2ControlImproved)?.to_vec(),
        DesignKind::RepeatedMaxPower => table
            .column(&Column::Y2TreatedImproved)?
            .iter()
            .zip(v1)
            .map(|(a, b)| a.clone() - b.clone())
            .collect(),
    };
    Ok(VarianceTerms {
        second: population_variance(&second),
        first: (design.kind == DesignKind::Progressive).then(|| population_variance(v1)),
        drift: population_variance(&drift),
        tau: population_variance(&contrast),
    })
}

/// `Σ S²_k / N_k − S²_τ / N` at the design's bucket sizes.
pub fn theoretical_variance<T: Scalar>(table: &PotentialOutcomeTable<T>, design: &Design) -> Result<T> {
    let terms = variance_terms(table, design)?;
    let targets = design.targets()?;
    let n = |k: usize| T::from_count(k);
    let mut v = match design.kind {
        DesignKind::Progressive => {
            terms.second.clone() / n(targets.newly_treated)
                + terms.first.clone().unwrap_or_else(T::zero) / n(targets.total_treated())
        }
        DesignKind::RepeatedMaxPower => terms.second.clone() / n(targets.total_treated()),
    };
    v = v + terms.drift.clone() / n(targets.control);
    Ok(v - terms.tau / n(table.n()))
}

pub fn exact_moments<T: Scalar>(table: &PotentialOutcomeTable<T>, design: &Design) -> Result<OracleMoments<T>> {
    exact_moments_capped(table, design, DEFAULT_ENUMERATION_CAP)
}

pub fn exact_moments_capped<T: Scalar>(
    table: &PotentialOutcomeTable<T>,
    design: &Design,
    cap: u128,
) -> Result<OracleMoments<T>> {
    check_supported(design)?;
    check_population(table, design)?;
    let assignments = enumerate_assignments_capped(design, cap)?;
    let points = assignments
        .iter()
        .map(|a| point_for(design, &observe(table, a)?, VarianceMode::Optional))
        .collect::<Result<Vec<_>>>()?;
    moments_from_points(table, design, &points, theoretical_variance(table, design)?)
}

fn check_population<T: Scalar>(table: &PotentialOutcomeTable<T>, design: &Design) -> Result<()> {
    if table.n() != design.n {
        return Err(VoieError::Precondition(format!(
            "design has n={} but the table has {} units",
            design.n,
            table.n()
        )));
    }
    Ok(())
}

fn moments_from_points<T: Scalar>(
    table: &PotentialOutcomeTable<T>,
    design: &Design,
    points: &[PointEstimate<T>],
    theoretical: T,
) -> Result<OracleMoments<T>> {
    let taus: Vec<T> = points.iter().map(|p| p.tau_hat.clone()).collect();
    let exact_mean = mean(&taus);
    let ss = taus.iter().fold(T::zero(), |acc, t| {
        let d = t.clone() - exact_mean.clone();
        acc + d.clone() * d
    });
    let exact_variance = ss / T::from_count(taus.len());
    let mean_var_upper_hat = points
        .iter()
        .map(|p| p.var_upper_hat.clone())
        .collect::<Option<Vec<T>>>()
        .map(|v| mean(&v));
    Ok(OracleMoments {
        exact_mean,
        exact_variance,
        theoretical_variance: theoretical,
        s_terms: variance_terms(table, design)?,
        assignment_count: points.len() as u128,
        target: design_target(table, design)?.0,
        mean_var_upper_hat,
    })
}

/// Variance of the three-arm collapsed view: `Σ_k S²_k/N_k − S²_τ/N` with
/// arm outcomes `Y1(v1)`, `Y2(c,v2)` and `Δ`.
pub fn collapsed_theoretical_variance<T: Scalar>(table: &PotentialOutcomeTable<T>, design: &Design) -> Result<T> {
    if design.kind != DesignKind::Progressive {
        return Err(VoieError::Precondition("collapsed view requires a progressive design".into()));
    }
    check_supported(design)?;
    let arm1 = table.column(&Column::Y1Variant(0))?.to_vec();
    let arm2 = table.column(&Column::Y2ControlImproved)?.to_vec();
    let arm3 = table.control_drift();
    let contrast: Vec<T> = (0..table.n())
        .map(|i| arm2[i].clone() - arm1[i].clone() - arm3[i].clone())
        .collect();
    let t = design.targets()?;
    let sizes = [t.total_treated(), t.newly_treated, t.control];
    let v = [arm1, arm2, arm3]
        .iter()
        .zip(sizes)
        .fold(T::zero(), |acc, (arm, size)| acc + population_variance(arm) / T::from_count(size));
    Ok(v - population_variance(&contrast) / T::from_count(table.n()))
}

/// [`exact_moments`] computed through the collapsed bookkeeping: the
/// collapsed estimator on every assignment, checked against the collapsed
/// closed form.
pub fn exact_moments_collapsed<T: Scalar>(
    table: &PotentialOutcomeTable<T>,
    design: &Design,
) -> Result<OracleMoments<T>> {
    check_population(table, design)?;
    let theoretical = collapsed_theoretical_variance(table, design)?;
    let assignments = enumerate_assignments_capped(design, DEFAULT_ENUMERATION_CAP)?;
    let points = assignments
        .iter()
        .map(|a| point_collapsed(&observe(table, a)?, VarianceMode::Optional))
        .collect::<Result<Vec<_>>>()?;
    moments_from_points(table, design, &points, theoretical)
}

// ---------------------------------------------------------------------------
// Monte Carlo coverage
// ---------------------------------------------------------------------------

pub const MIN_COVERAGE_REPS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub reps: usize,
    pub alpha: f64,
    /// Estimand the intervals are scored against (always identified).
    pub target: f64,
    pub covered: usize,
    pub coverage: f64,
    /// Binomial standard error `√(c(1−c)/reps)`.
    pub standard_error: f64,
    /// `τ1` itself, scored only when time invariance holds.
    pub tau1: Option<f64>,
    pub covered_tau1: Option<usize>,
    pub mean_tau_hat: f64,
    pub empirical_variance: f64,
    pub mean_var_upper_hat: f64,
    pub mean_half_width: f64,
}

impl CoverageReport {
    pub fn coverage_tau1(&self) -> Option<f64> {
        self.covered_tau1.map(|c| c as f64 / self.reps as f64)
    }
}

/// Seed of replication `rep`, derived by counter so results do not depend
/// on how reps are scheduled.
pub fn rep_seed(seed: u64, rep: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ rep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn monte_carlo_coverage(
    table: &PotentialOutcomeTable<f64>,
    design: &Design,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<CoverageReport> {
    if reps < MIN_COVERAGE_REPS {
        return Err(VoieError::Precondition(format!(
            "coverage study needs at least {MIN_COVERAGE_REPS} reps, got {reps}"
        )));
    }
    check_supported(design)?;
    check_population(table, design)?;
    crate::normal::critical_value(alpha)?;
    let (target, _) = design_target(table, design)?;
    let tau1 = match true_voie(table) {
        Ok(e) if check_time_invariance(table, DEFAULT_ASSUMPTION_TOLERANCE).holds => Some(e.value),
        _ => None,
    };

    let draws = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let a = assign(design, rep_seed(seed, rep))?;
            let point = point_for(design, &observe(table, &a)?, VarianceMode::Required)?;
            let var = point.var_upper_hat.unwrap_or(0.0);
            let ci = wald_interval(point.tau_hat, var, alpha)?;
            Ok((point.tau_hat, var, ci))
        })
        .collect::<Result<Vec<_>>>()?;

    let inside = |x: f64, (lo, hi): (f64, f64)| lo <= x && x <= hi;
    let covered = draws.iter().filter(|(_, _, ci)| inside(target, *ci)).count();
    let covered_tau1 = tau1.map(|t| draws.iter().filter(|(_, _, ci)| inside(t, *ci)).count());
    let taus: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let mean_tau_hat = mean(&taus);
    let empirical_variance =
        taus.iter().map(|t| (t - mean_tau_hat).powi(2)).sum::<f64>() / reps as f64;
    let coverage = covered as f64 / reps as f64;
    Ok(CoverageReport {
        reps,
        alpha,
        target,
        covered,
        coverage,
        standard_error: (coverage * (1.0 - coverage) / reps as f64).sqrt(),
        tau1,
        covered_tau1,
        mean_tau_hat,
        empirical_variance,
        mean_var_upper_hat: draws.iter().map(|d| d.1).sum::<f64>() / reps as f64,
        mean_half_width: draws.iter().map(|d| (d.2 .1 - d.2 .0) / 2.0).sum::<f64>() / reps as f64,
    })
}

// ---------------------------------------------------------------------------
// synthetic populations
// ---------------------------------------------------------------------------

/// Bounded synthetic population: per-unit baselines drawn once, additive
/// unit-level effects, optional violations of time invariance and of
/// no-carryover. Every range is a closed interval `(lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPopulation {
    pub n: usize,
    pub baseline: (f64, f64),
    /// Effect of the original version, `Y1(v1) − Y1(c)`.
    pub effect_v1: (f64, f64),
    /// Effect of the improved version, `Y1(v2) − Y1(c)`.
    pub effect_v2: (f64, f64),
    /// Control drift `Δ_i`.
    pub drift: (f64, f64),
    /// Extra noise on `Y2(c,v2)`, breaking time invariance when nonzero.
    pub time_variation: (f64, f64),
    /// Extra shift of `Y2(v1,v2)` over `Y2(c,v2)`.
    pub carryover: (f64, f64),
    /// Round every draw to an integer.
    pub integer_valued: bool,
}

impl Default for SyntheticPopulation {
    fn default() -> Self {
        SyntheticPopulation {
            n: 1000,
            baseline: (0.0, 10.0),
            effect_v1: (-1.0, 1.0),
            effect_v2: (0.0, 2.0),
            drift: (-0.5, 0.5),
            time_variation: (0.0, 0.0),
            carryover: (0.0, 0.0),
            integer_valued: false,
        }
    }
}

impl SyntheticPopulation {
    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn generate(&self, seed: u64) -> Result<PotentialOutcomeTable<f64>> {
        for (name, (lo, hi)) in self.ranges() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(VoieError::Precondition(format!("bad range for {name}: {lo}:{hi}")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |(lo, hi): (f64, f64)| {
            let x = lo + (hi - lo) * rng.random::<f64>();
            if self.integer_valued {
                x.round()
            } else {
                x
            }
        };
        let n = self.n;
        let mut cols: [Vec<f64>; 8] = Default::default();
        for _ in 0..n {
            let b = draw(self.baseline);
            let e1 = draw(self.effect_v1);
            let e2 = draw(self.effect_v2);
            let d = draw(self.drift);
            let tv = draw(self.time_variation);
            let co = draw(self.carryover);
            let row = [b, b + e1, b + e2, b + d, b + d + e2 + tv, b + d + e2 + tv + co, b + d, b + d + e1];
            for (c, v) in cols.iter_mut().zip(row) {
                c.push(v);
            }
        }
        let [y1_c, y1_v1, y1_v2, y2_cc, y2_cv2, y2_v1v2, y2_v1c, y2_cv1] = cols;
        TableBuilder::new(y1_c, y2_cc)
            .variant("v1", y1_v1)
            .improved(y1_v2)
            .control_improved(y2_cv2)
            .treated_improved(y2_v1v2)
            .deramp_branch(y2_v1c)
            .control_variant(y2_cv1)
            .build()
    }

    fn ranges(&self) -> [(&'static str, (f64, f64)); 6] {
        [
            ("baseline", self.baseline),
            ("effect1", self.effect_v1),
            ("effect2", self.effect_v2),
            ("drift", self.drift),
            ("time", self.time_variation),
            ("carryover", self.carryover),
        ]
    }
}

impl FromStr for SyntheticPopulation {
    type Err = VoieError;

    /// Parses `n=1000,baseline=0:10,effect1=-1:1,effect2=0:2,drift=-0.5:0.5,
    /// time=0:0,carryover=0:0,integer=false`; omitted keys keep defaults.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| VoieError::Precondition(format!("generator settings: {msg}"));
        let mut g = SyntheticPopulation::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part.split_once('=').ok_or_else(|| bad(format!("`{part}` is not key=value")))?;
            let range = || -> Result<(f64, f64)> {
                let (lo, hi) = value.split_once(':').unwrap_or((value, value));
                let lo = lo.trim().parse().map_err(|_| bad(format!("bad number in `{part}`")))?;
                let hi = hi.trim().parse().map_err(|_| bad(format!("bad number in `{part}`")))?;
                Ok((lo, hi))
            };
            match key.trim() {
                "n" => g.n = value.trim().parse().map_err(|_| bad(format!("bad n `{value}`")))?,
                "baseline" => g.baseline = range()?,
                "effect1" => g.effect_v1 = range()?,
                "effect2" => g.effect_v2 = range()?,
                "drift" => g.drift = range()?,
                "time" => g.time_variation = range()?,
                "carryover" => g.carryover = range()?,
                "integer" => g.integer_valued = value.trim().parse().map_err(|_| bad(format!("bad flag `{value}`")))?,
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        Ok(g)
    }
}

// ---------------------------------------------------------------------------
// synthetic experiment corpora
// ---------------------------------------------------------------------------

/// A simulated finished experiment and the value its estimator targets.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusExperiment {
    pub record: ExperimentRecord,
    pub truth: f64,
}

/// Corpus of independently simulated experiments, each summarized into an
/// [`ExperimentRecord`] as a platform would log it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub experiments: usize,
    /// Units per experiment, drawn uniformly.
    pub units: (usize, usize),
    pub start: Month,
    pub months: u32,
    pub teams: Vec<String>,
    /// Share of repeated max-power and de-ramp experiments (each).
    pub other_kind_share: f64,
    /// Range the per-experiment mean improvement is drawn from.
    pub effect_center: (f64, f64),
}

impl Default for SyntheticCorpus {
    fn default() -> Self {
        SyntheticCorpus {
            experiments: 200,
            units: (12_000, 20_000),
            start: Month { year: 2019, month: 1 },
            months: 12,
            teams: ["feed", "search", "ads", "growth"].map(String::from).to_vec(),
            other_kind_share: 0.15,
            effect_center: (-0.2, 0.6),
        }
    }
}

impl SyntheticCorpus {
    pub fn generate(&self, seed: u64) -> Result<Vec<CorpusExperiment>> {
        if self.experiments == 0 || self.months == 0 || self.units.0 > self.units.1 {
            return Err(VoieError::Precondition("empty corpus settings".into()));
        }
        (0..self.experiments as u64)
            .into_par_iter()
            .map(|j| self.experiment(j as usize, rep_seed(seed, j)))
            .collect()
    }

    fn experiment(&self, index: usize, seed: u64) -> Result<CorpusExperiment> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(self.units.0..=self.units.1);
        let center = rng.random_range(self.effect_center.0..=self.effect_center.1);
        let spread = rng.random_range(0.5..2.0);
        let population = SyntheticPopulation {
            n,
            baseline: (0.0, rng.random_range(5.0..20.0)),
            effect_v1: (-spread, spread),
            effect_v2: (center - spread, center + spread),
            drift: (-0.5, rng.random_range(-0.5..1.0)),
            ..SyntheticPopulation::default()
        };
        let table = population.generate(rng.random())?;
        let u = rng.random::<f64>();
        let kind = if u < self.other_kind_share {
            EstimandKind::RepeatedMaxPower
        } else if u < 2.0 * self.other_kind_share {
            EstimandKind::Deramp
        } else {
            EstimandKind::Progressive
        };
        let lu_alloc = match kind {
            EstimandKind::RepeatedMaxPower => 0.5,
            _ => ALLOCATION_BANDS[rng.random_range(0..ALLOCATION_BANDS.len())],
        };
        let design = match kind {
            EstimandKind::RepeatedMaxPower => Design::repeated_max_power(n)?,
            _ => Design::progressive(n, lu_alloc, 0.5)?,
        };
        let assignment = assign(&design, rng.random())?;
        let (obs, truth) = match kind {
            EstimandKind::Deramp => {
                let a = assignment.deramped();
                (observe_first_iteration(&table, &a)?, true_voie_deramp(&table)?.value)
            }
            _ => (observe(&table, &assignment)?, design_target(&table, &design)?.0),
        };
        let durations = (rng.random_range(3..=21), rng.random_range(3..=21));
        let mut month = self.start;
        for _ in 0..rng.random_range(0..self.months) {
            month = month.succ();
        }
        let mut record = record_from_observed(format!("exp{index:04}"), month, kind, lu_alloc, durations, &obs, None)?;
        record.team = Some(self.teams[rng.random_range(0..self.teams.len())].clone());
        let days = durations.0.max(durations.1) as usize;
        record.daily_effects = (0..days).map(|_| Some(truth + rng.random_range(-0.5..0.5))).collect();
        Ok(CorpusExperiment { record, truth })
    }
}
