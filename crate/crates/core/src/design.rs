//! Two-iteration stepped-wedge assignment.
//!
//! Every design here is completely randomized at each step: a fixed number
//! of units is drawn into each bucket, and units treated in the first
//! iteration stay treated in the second.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, VoieError};

/// Ramp fractions offered by the usual platform policy.
pub const STANDARD_RAMPS: [f64; 5] = [0.01, 0.05, 0.10, 0.25, 0.50];

/// Default ceiling on the number of assignments [`enumerate_assignments`]
/// will materialize.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

const SHARE_TOLERANCE: f64 = 1e-9;

/// A unit's treatment path over the two iterations.
///
/// The `usize` on treated paths indexes the first-iteration variant
/// (always `0` for single-variant designs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Path {
    /// `(c, c)`: never treated.
    ControlControl,
    /// `(c, v2)`: newly treated in the second iteration.
    ControlImproved,
    /// `(v1, v2)`: treated from the first iteration on.
    TreatedImproved(usize),
    /// `(v1, c)`: de-ramped after the first iteration.
    TreatedControl(usize),
}

impl Path {
    /// Variant index of the first-iteration exposure, `None` for control.
    pub fn first_variant(self) -> Option<usize> {
        match self {
            Path::TreatedImproved(j) | Path::TreatedControl(j) => Some(j),
            Path::ControlControl | Path::ControlImproved => None,
        }
    }

    pub fn is_first_treated(self) -> bool {
        self.first_variant().is_some()
    }

    /// Short code used in delimited files: `cc`, `cv2`, `v1v2`, `v1c`.
    pub fn code(self) -> &'static str {
        match self {
            Path::ControlControl => "cc",
            Path::ControlImproved => "cv2",
            Path::TreatedImproved(_) => "v1v2",
            Path::TreatedControl(_) => "v1c",
        }
    }

    /// Inverse of [`Path::code`]; `variant` fills treated paths.
    pub fn from_code(code: &str, variant: usize) -> Result<Path> {
        match code {
            "cc" => Ok(Path::ControlControl),
            "cv2" => Ok(Path::ControlImproved),
            "v1v2" => Ok(Path::TreatedImproved(variant)),
            "v1c" => Ok(Path::TreatedControl(variant)),
            other => Err(VoieError::Precondition(format!("unknown path code `{other}`"))),
        }
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Path::ControlControl => write!(f, "(c,c)"),
            Path::ControlImproved => write!(f, "(c,v2)"),
            Path::TreatedImproved(0) => write!(f, "(v1,v2)"),
            Path::TreatedImproved(j) => write!(f, "(v1[{j}],v2)"),
            Path::TreatedControl(0) => write!(f, "(v1,c)"),
            Path::TreatedControl(j) => write!(f, "(v1[{j}],c)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    /// `p1 < p2`: a small first ramp followed by the max-power ramp.
    Progressive,
    /// `p1 = p2 = 0.5`: the max-power iteration is repeated.
    RepeatedMaxPower,
}

impl FromStr for DesignKind {
    type Err = VoieError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "progressive" => Ok(DesignKind::Progressive),
            "repeated-max-power" | "repeated-mp" | "repeated" => Ok(DesignKind::RepeatedMaxPower),
            other => Err(VoieError::InvalidDesign(format!("unknown design kind `{other}`"))),
        }
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DesignKind::Progressive => "progressive",
            DesignKind::RepeatedMaxPower => "repeated-max-power",
        })
    }
}

/// First-iteration shares of each variant; they must add up to `p1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    shares: Vec<(String, f64)>,
}

impl Split {
    pub fn new(shares: Vec<(String, f64)>) -> Result<Self> {
        if shares.is_empty() {
            return Err(VoieError::InvalidDesign("split has no variants".into()));
        }
        for (i, (label, share)) in shares.iter().enumerate() {
            if !(share.is_finite() && *share > 0.0) {
                return Err(VoieError::InvalidDesign(format!(
                    "share of `{label}` must be positive, got {share}"
                )));
            }
            if shares[..i].iter().any(|(l, _)| l == label) {
                return Err(VoieError::InvalidDesign(format!("duplicate variant `{label}`")));
            }
        }
        Ok(Split { shares })
    }

    pub fn shares(&self) -> &[(String, f64)] {
        &self.shares
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.shares.iter().map(|(l, _)| l.as_str())
    }

    pub fn total(&self) -> f64 {
        self.shares.iter().map(|(_, s)| s).sum()
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.shares
            .iter()
            .position(|(l, _)| l == label)
            .ok_or_else(|| VoieError::UnknownVariant(label.to_string()))
    }

    /// Checks that the shares add up to `p1`.
    pub fn check_total(&self, p1: f64) -> Result<()> {
        let total = self.total();
        if (total - p1).abs() > SHARE_TOLERANCE * p1.max(1.0) {
            return Err(VoieError::ShareSum {
                actual: total,
                expected: p1,
            });
        }
        Ok(())
    }

    /// Mixture weights `p_{1j} / p1`.
    pub fn weights(&self) -> Vec<f64> {
        let total = self.total();
        self.shares.iter().map(|(_, s)| s / total).collect()
    }
}

impl FromStr for Split {
    type Err = VoieError;

    /// Parses `A=0.05,B=0.05`.
    fn from_str(s: &str) -> Result<Self> {
        let mut shares = Vec::new();
        for part in s.split([',', ';']).map(str::trim).filter(|p| !p.is_empty()) {
            let (label, share) = part
                .split_once('=')
                .ok_or_else(|| VoieError::InvalidDesign(format!("bad split entry `{part}`")))?;
            let share: f64 = share
                .trim()
                .parse()
                .map_err(|_| VoieError::InvalidDesign(format!("bad share in `{part}`")))?;
            shares.push((label.trim().to_string(), share));
        }
        Split::new(shares)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (label, share)) in self.shares.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{label}={share}")?;
        }
        Ok(())
    }
}

/// Round half up, with a small guard against representation error such as
/// `0.145 * 100 = 14.4999…`.
pub fn round_count(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    (x + 0.5 + 1e-9 * x.abs().max(1.0)).floor().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub n: usize,
    pub p1: f64,
    pub p2: f64,
    pub kind: DesignKind,
    pub split: Option<Split>,
    /// Size the second-iteration bucket as `(1 - p1) p2 N` instead of
    /// `(p2 - p1) N`.
    pub appendix_sizes: bool,
    /// Permit a progressive design whose second ramp is not 50%.
    pub allow_nonstandard_p2: bool,
}

/// Integer bucket sizes implied by a design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketTargets {
    /// First-iteration treated count per variant.
    pub treated: Vec<usize>,
    /// `(c, v2)` count; zero for repeated max-power designs.
    pub newly_treated: usize,
    /// `(c, c)` count, absorbing the rounding residual.
    pub control: usize,
}

impl BucketTargets {
    pub fn total_treated(&self) -> usize {
        self.treated.iter().sum()
    }
}

impl Design {
    pub fn progressive(n: usize, p1: f64, p2: f64) -> Result<Self> {
        let design = Design {
            n,
            p1,
            p2,
            kind: DesignKind::Progressive,
            split: None,
            appendix_sizes: false,
            allow_nonstandard_p2: false,
        };
        design.targets()?;
        Ok(design)
    }

    pub fn repeated_max_power(n: usize) -> Result<Self> {
        let design = Design {
            n,
            p1: 0.5,
            p2: 0.5,
            kind: DesignKind::RepeatedMaxPower,
            split: None,
            appendix_sizes: false,
            allow_nonstandard_p2: false,
        };
        design.targets()?;
        Ok(design)
    }

    pub fn multivariant(n: usize, p1: f64, p2: f64, split: Split) -> Result<Self> {
        let design = Design {
            split: Some(split),
            ..Design::progressive_unchecked(n, p1, p2)
        };
        design.targets()?;
        Ok(design)
    }

    fn progressive_unchecked(n: usize, p1: f64, p2: f64) -> Self {
        Design {
            n,
            p1,
            p2,
            kind: DesignKind::Progressive,
            split: None,
            appendix_sizes: false,
            allow_nonstandard_p2: false,
        }
    }

    /// Progressive design with an arbitrary `p2`; flagged via
    /// [`Design::is_nonstandard`].
    pub fn progressive_nonstandard(n: usize, p1: f64, p2: f64) -> Result<Self> {
        let design = Design {
            allow_nonstandard_p2: true,
            ..Design::progressive_unchecked(n, p1, p2)
        };
        design.targets()?;
        Ok(design)
    }

    pub fn with_appendix_sizes(mut self, on: bool) -> Result<Self> {
        self.appendix_sizes = on;
        self.targets()?;
        Ok(self)
    }

    pub fn is_nonstandard(&self) -> bool {
        self.kind == DesignKind::Progressive && self.p2 != 0.5
    }

    pub fn is_multivariant(&self) -> bool {
        self.split.is_some()
    }

    /// Number of first-iteration variants.
    pub fn variant_count(&self) -> usize {
        self.split.as_ref().map_or(1, Split::len)
    }

    /// Validates the design and resolves its integer bucket sizes.
    pub fn targets(&self) -> Result<BucketTargets> {
        let invalid = |msg: String| Err(VoieError::InvalidDesign(msg));
        if self.n < 2 {
            return invalid(format!("population size must be at least 2, got {}", self.n));
        }
        for (name, p) in [("p1", self.p1), ("p2", self.p2)] {
            if !(p > 0.0 && p <= 1.0) {
                return invalid(format!("{name} must lie in (0, 1], got {p}"));
            }
        }
        match self.kind {
            DesignKind::Progressive => {
                if self.p1 >= self.p2 {
                    return invalid(format!(
                        "progressive design needs p1 < p2, got p1={} p2={}",
                        self.p1, self.p2
                    ));
                }
                if self.p2 != 0.5 && !self.allow_nonstandard_p2 {
                    return invalid(format!(
                        "progressive design ends at the 50% ramp, got p2={}",
                        self.p2
                    ));
                }
            }
            DesignKind::RepeatedMaxPower => {
                if self.p1 != 0.5 || self.p2 != 0.5 {
                    return invalid(format!(
                        "repeated max-power design needs p1 = p2 = 0.5, got p1={} p2={}",
                        self.p1, self.p2
                    ));
                }
                if self.split.is_some() {
                    return invalid("repeated max-power design takes no split".into());
                }
            }
        }

        let total_treated = round_count(self.p1, self.n);
        let treated = match &self.split {
            None => vec![total_treated],
            Some(split) => {
                split.check_total(self.p1)?;
                let sizes = largest_remainder(split, self.n, total_treated);
                if let Some(j) = sizes.iter().position(|&s| s == 0) {
                    return Err(VoieError::EmptyVariantGroup(split.shares()[j].0.clone()));
                }
                sizes
            }
        };
        let newly_treated = match self.kind {
            DesignKind::RepeatedMaxPower => 0,
            DesignKind::Progressive if self.appendix_sizes => {
                round_count((1.0 - self.p1) * self.p2, self.n)
            }
            DesignKind::Progressive => round_count(self.p2, self.n).saturating_sub(total_treated),
        };
        let assigned = total_treated + newly_treated;
        if assigned > self.n {
            return invalid(format!("bucket targets exceed n={}", self.n));
        }
        let targets = BucketTargets {
            treated,
            newly_treated,
            control: self.n - assigned,
        };
        if targets.total_treated() == 0 {
            return invalid("first-iteration treated bucket is empty".into());
        }
        if self.kind == DesignKind::Progressive && targets.newly_treated == 0 {
            return invalid("bucket (c,v2) is empty".into());
        }
        if targets.control == 0 {
            return invalid("bucket (c,c) is empty".into());
        }
        Ok(targets)
    }

    /// Ordered `(path, size)` groups; sampling fills them in this order.
    fn groups(&self) -> Result<Vec<(Path, usize)>> {
        let t = self.targets()?;
        let mut groups: Vec<(Path, usize)> = t
            .treated
            .iter()
            .enumerate()
            .map(|(j, &s)| (Path::TreatedImproved(j), s))
            .collect();
        if t.newly_treated > 0 {
            groups.push((Path::ControlImproved, t.newly_treated));
        }
        groups.push((Path::ControlControl, t.control));
        Ok(groups)
    }
}

/// Variant group sizes: floor of each exact share, then the largest
/// fractional remainders receive the units needed to reach `total`.
fn largest_remainder(split: &Split, n: usize, total: usize) -> Vec<usize> {
    let exact: Vec<f64> = split.shares().iter().map(|(_, s)| s * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - sizes[a] as f64;
        let rb = exact[b] - sizes[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut assigned: usize = sizes.iter().sum();
    let mut k = 0;
    while assigned < total {
        sizes[order[k % order.len()]] += 1;
        assigned += 1;
        k += 1;
    }
    while assigned > total {
        let j = order[order.len() - 1 - (k % order.len())];
        if sizes[j] > 0 {
            sizes[j] -= 1;
            assigned -= 1;
        }
        k += 1;
    }
    sizes
}

/// Realized bucket sizes of an assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketCounts {
    /// Units treated in the first iteration, per variant.
    pub treated: Vec<usize>,
    /// `(c, v2)`.
    pub newly_treated: usize,
    /// `(c, c)`.
    pub control: usize,
    /// `(v1, c)`; nonzero only for de-ramped assignments.
    pub deramped: usize,
}

impl BucketCounts {
    pub fn from_paths(paths: &[Path], variants: usize) -> Self {
        let mut counts = BucketCounts {
            treated: vec![0; variants.max(1)],
            newly_treated: 0,
            control: 0,
            deramped: 0,
        };
        for path in paths {
            match *path {
                Path::ControlControl => counts.control += 1,
                Path::ControlImproved => counts.newly_treated += 1,
                Path::TreatedImproved(j) => {
                    if j >= counts.treated.len() {
                        counts.treated.resize(j + 1, 0);
                    }
                    counts.treated[j] += 1;
                }
                Path::TreatedControl(j) => {
                    if j >= counts.treated.len() {
                        counts.treated.resize(j + 1, 0);
                    }
                    counts.treated[j] += 1;
                    counts.deramped += 1;
                }
            }
        }
        counts
    }

    pub fn total_treated(&self) -> usize {
        self.treated.iter().sum()
    }

    pub fn total(&self) -> usize {
        self.total_treated() + self.newly_treated + self.control
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    paths: Vec<Path>,
    counts: BucketCounts,
    kind: DesignKind,
    variant_labels: Vec<String>,
    /// Treated and control groups differ in size (odd `n` under a 50/50
    /// split).
    pub unbalanced: bool,
}

impl Assignment {
    /// Builds an assignment from explicit paths, checking the no-going-back
    /// rule: either no unit reverts to control, or every treated unit does.
    pub fn from_paths(paths: Vec<Path>, kind: DesignKind, variant_labels: Vec<String>) -> Result<Self> {
        let variants = variant_labels.len().max(1);
        if let Some(p) = paths.iter().find(|p| p.first_variant().is_some_and(|j| j >= variants)) {
            return Err(VoieError::InvalidDesign(format!("path {p} names an unknown variant")));
        }
        let counts = BucketCounts::from_paths(&paths, variants);
        if counts.deramped > 0 && counts.deramped != counts.total_treated() {
            return Err(VoieError::InvalidDesign(
                "no-going-back violated: only part of the treated group reverts to control".into(),
            ));
        }
        if kind == DesignKind::RepeatedMaxPower && counts.newly_treated > 0 {
            return Err(VoieError::InvalidDesign(
                "repeated max-power assignment cannot contain path (c,v2)".into(),
            ));
        }
        let unbalanced = kind == DesignKind::RepeatedMaxPower && counts.total_treated() != counts.control;
        let variant_labels = if variant_labels.is_empty() {
            vec!["v1".to_string()]
        } else {
            variant_labels
        };
        Ok(Assignment {
            paths,
            counts,
            kind,
            variant_labels,
            unbalanced,
        })
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn counts(&self) -> &BucketCounts {
        &self.counts
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.paths.len()
    }

    pub fn variant_labels(&self) -> &[String] {
        &self.variant_labels
    }

    pub fn is_deramped(&self) -> bool {
        self.counts.deramped > 0
    }

    /// The same first iteration with every treated unit reverted to control.
    pub fn deramped(&self) -> Assignment {
        let paths: Vec<Path> = self
            .paths
            .iter()
            .map(|p| match *p {
                Path::TreatedImproved(j) => Path::TreatedControl(j),
                Path::ControlImproved => Path::ControlControl,
                other => other,
            })
            .collect();
        let counts = BucketCounts::from_paths(&paths, self.variant_labels.len());
        Assignment {
            paths,
            counts,
            kind: self.kind,
            variant_labels: self.variant_labels.clone(),
            unbalanced: self.unbalanced,
        }
    }
}

fn variant_labels(design: &Design) -> Vec<String> {
    match &design.split {
        Some(split) => split.labels().map(str::to_string).collect(),
        None => vec!["v1".to_string()],
    }
}

fn sample(design: &Design, seed: u64) -> Result<Assignment> {
    let groups = design.groups()?;
    let mut order: Vec<usize> = (0..design.n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut paths = vec![Path::ControlControl; design.n];
    let mut cursor = 0;
    for (path, size) in groups {
        for &unit in &order[cursor..cursor + size] {
            paths[unit] = path;
        }
        cursor += size;
    }
    Assignment::from_paths(paths, design.kind, variant_labels(design))
}

pub fn assign_progressive(design: &Design, seed: u64) -> Result<Assignment> {
    if design.kind != DesignKind::Progressive {
        return Err(VoieError::InvalidDesign(format!("expected a progressive design, got {}", design.kind)));
    }
    if design.is_multivariant() {
        return Err(VoieError::InvalidDesign("design has a variant split; use assign_multivariant".into()));
    }
    sample(design, seed)
}

pub fn assign_repeated_mp(design: &Design, seed: u64) -> Result<Assignment> {
    if design.kind != DesignKind::RepeatedMaxPower {
        return Err(VoieError::InvalidDesign(format!(
            "expected a repeated max-power design, got {}",
            design.kind
        )));
    }
    sample(design, seed)
}

pub fn assign_multivariant(design: &Design, seed: u64) -> Result<Assignment> {
    if design.split.is_none() {
        return Err(VoieError::InvalidDesign("multi-variant assignment needs a split".into()));
    }
    sample(design, seed)
}

/// Draws an assignment with whichever routine matches the design.
pub fn assign(design: &Design, seed: u64) -> Result<Assignment> {
    match (design.kind, design.is_multivariant()) {
        (DesignKind::RepeatedMaxPower, _) => assign_repeated_mp(design, seed),
        (DesignKind::Progressive, true) => assign_multivariant(design, seed),
        (DesignKind::Progressive, false) => assign_progressive(design, seed),
    }
}

fn binomial(n: usize, k: usize) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Size of the assignment space: the multinomial coefficient over the
/// design's buckets. Saturates at `u128::MAX`.
pub fn assignment_count(design: &Design) -> Result<u128> {
    let groups = design.groups()?;
    let mut remaining = design.n;
    let mut total: u128 = 1;
    for (_, size) in groups {
        let c = match binomial(remaining, size) {
            Some(c) => c,
            None => return Ok(u128::MAX),
        };
        total = match total.checked_mul(c) {
            Some(t) => t,
            None => return Ok(u128::MAX),
        };
        remaining -= size;
    }
    Ok(total)
}

pub fn enumerate_assignments(design: &Design) -> Result<Vec<Assignment>> {
    enumerate_assignments_capped(design, DEFAULT_ENUMERATION_CAP)
}

/// Every admissible assignment exactly once, in lexicographic order of the
/// chosen unit subsets.
pub fn enumerate_assignments_capped(design: &Design, cap: u128) -> Result<Vec<Assignment>> {
    let count = assignment_count(design)?;
    if count > cap {
        return Err(VoieError::CapExceeded { count, cap });
    }
    let groups = design.groups()?;
    let labels = variant_labels(design);
    let mut out = Vec::with_capacity(count as usize);
    let mut paths = vec![Path::ControlControl; design.n];
    let free: Vec<usize> = (0..design.n).collect();
    fill(&groups, &free, &mut paths, &mut |p: &[Path]| {
        out.push(p.to_vec());
    });
    out.into_iter()
        .map(|p| Assignment::from_paths(p, design.kind, labels.clone()))
        .collect()
}

fn fill(groups: &[(Path, usize)], free: &[usize], paths: &mut Vec<Path>, emit: &mut dyn FnMut(&[Path])) {
    let Some(((path, size), rest)) = groups.split_first() else {
        emit(paths);
        return;
    };
    if rest.is_empty() {
        for &u in free {
            paths[u] = *path;
        }
        emit(paths);
        return;
    }
    for chosen in Combinations::new(free.len(), *size) {
        let mut remaining = Vec::with_capacity(free.len() - size);
        let mut next = chosen.iter().peekable();
        for (pos, &u) in free.iter().enumerate() {
            if next.peek() == Some(&&pos) {
                paths[u] = *path;
                next.next();
            } else {
                remaining.push(u);
            }
        }
        fill(rest, &remaining, paths, emit);
    }
}

/// k-subsets of `0..n` in lexicographic order.
struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        let current = (k <= n).then(|| (0..k).collect());
        Combinations { n, current }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn progressive_counts_and_space() {
        let d = Design::progressive(4, 0.25, 0.5).unwrap();
        let a = assign_progressive(&d, 1).unwrap();
        assert_eq!(a.counts().total_treated(), 1);
        assert_eq!(a.counts().newly_treated, 1);
        assert_eq!(a.counts().control, 2);
        assert_eq!(assignment_count(&d).unwrap(), 12);
        let all = enumerate_assignments(&d).unwrap();
        assert_eq!(all.len(), 12);
        let distinct: HashSet<Vec<Path>> = all.iter().map(|a| a.paths().to_vec()).collect();
        assert_eq!(distinct.len(), 12);
    }

    #[test]
    fn progressive_requires_increasing_ramp() {
        assert!(matches!(
            Design::progressive(10, 0.5, 0.5),
            Err(VoieError::InvalidDesign(_))
        ));
        assert!(Design::progressive(10, 0.1, 0.6).is_err());
        let d = Design::progressive_nonstandard(10, 0.1, 0.6).unwrap();
        assert!(d.is_nonstandard());
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let d = Design::progressive(50, 0.1, 0.5).unwrap();
        assert_eq!(assign_progressive(&d, 9).unwrap(), assign_progressive(&d, 9).unwrap());
        assert_ne!(
            assign_progressive(&d, 9).unwrap().paths(),
            assign_progressive(&d, 10).unwrap().paths()
        );
        let r = Design::repeated_max_power(50).unwrap();
        assert_eq!(assign_repeated_mp(&r, 3).unwrap(), assign_repeated_mp(&r, 3).unwrap());
    }

    #[test]
    fn repeated_max_power_counts() {
        let d = Design::repeated_max_power(4).unwrap();
        let a = assign_repeated_mp(&d, 0).unwrap();
        assert_eq!((a.counts().total_treated(), a.counts().control), (2, 2));
        assert!(!a.unbalanced);
        assert_eq!(enumerate_assignments(&d).unwrap().len(), 6);

        let d3 = Design::repeated_max_power(3).unwrap();
        let a3 = assign_repeated_mp(&d3, 0).unwrap();
        assert_eq!((a3.counts().total_treated(), a3.counts().control), (2, 1));
        assert!(a3.unbalanced);
    }

    #[test]
    fn multivariant_group_sizes() {
        let split: Split = "A=0.05,B=0.05".parse().unwrap();
        let d = Design::multivariant(100, 0.1, 0.5, split).unwrap();
        assert_eq!(d.targets().unwrap().treated, vec![5, 5]);
        let a = assign_multivariant(&d, 4).unwrap();
        assert_eq!(a.counts().treated, vec![5, 5]);
        assert_eq!(a.counts().newly_treated, 40);

        let split: Split = "A=0.04,B=0.04,C=0.02".parse().unwrap();
        let d = Design::multivariant(100, 0.1, 0.5, split).unwrap();
        assert_eq!(d.targets().unwrap().treated, vec![4, 4, 2]);

        let split: Split = "A=0.05,B=0.04".parse().unwrap();
        assert!(matches!(
            Design::multivariant(100, 0.1, 0.5, split),
            Err(VoieError::ShareSum { .. })
        ));
    }

    #[test]
    fn largest_remainder_hits_treated_total() {
        // 0.1 * 35 = 3.5 -> 4 treated; thirds of 3.5 floor to 1 each.
        let split: Split = "A=0.0333333333333,B=0.0333333333333,C=0.0333333333334".parse().unwrap();
        let d = Design::multivariant(35, 0.1, 0.5, split).unwrap();
        let t = d.targets().unwrap();
        assert_eq!(t.total_treated(), 4);
        assert_eq!(t.treated, vec![1, 1, 2]);
    }

    #[test]
    fn empty_variant_group_is_rejected() {
        let split: Split = "A=0.09,B=0.01".parse().unwrap();
        assert!(matches!(
            Design::multivariant(20, 0.1, 0.5, split),
            Err(VoieError::EmptyVariantGroup(label)) if label == "B"
        ));
    }

    #[test]
    fn enumeration_cap() {
        let d = Design::progressive(40, 0.25, 0.5).unwrap();
        match enumerate_assignments(&d) {
            Err(VoieError::CapExceeded { count, .. }) => {
                assert_eq!(count, 847_660_528u128 * 30_045_015u128);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn appendix_sizes_switch() {
        let d = Design::progressive(20, 0.2, 0.5).unwrap();
        assert_eq!(d.targets().unwrap().newly_treated, 6);
        let d = d.with_appendix_sizes(true).unwrap();
        assert_eq!(d.targets().unwrap().newly_treated, 8);
        assert_eq!(d.targets().unwrap().control, 8);
    }

    #[test]
    fn deramp_reverts_every_treated_unit() {
        let d = Design::progressive(10, 0.2, 0.5).unwrap();
        let a = assign_progressive(&d, 2).unwrap().deramped();
        assert!(a.is_deramped());
        assert_eq!(a.counts().deramped, 2);
        assert!(a.paths().iter().all(|p| !matches!(p, Path::TreatedImproved(_) | Path::ControlImproved)));
    }

    #[test]
    fn partial_revert_violates_no_going_back() {
        let paths = vec![
            Path::TreatedControl(0),
            Path::TreatedImproved(0),
            Path::ControlControl,
        ];
        assert!(Assignment::from_paths(paths, DesignKind::Progressive, vec![]).is_err());
    }

    #[test]
    fn split_round_trips_through_text() {
        let split: Split = "A=0.05, B=0.05".parse().unwrap();
        assert_eq!(split.to_string().parse::<Split>().unwrap(), split);
        assert!("A".parse::<Split>().is_err());
        assert!("A=0.1,A=0.2".parse::<Split>().is_err());
    }
}
