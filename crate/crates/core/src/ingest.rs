//! Finished-experiment logs: loading, eligibility filtering, per-experiment
//! VOIE and grouped platform reports.
//!
//! A log starts with the line `# voie-log/v1`. Each record carries the
//! largest unchanged iteration (LU) and, except for de-ramps, the last most
//! powerful iteration (LMP) as bucket summaries. Within an iteration the
//! `t` and `c` buckets are the two arms and `delta` is a within-unit change
//! `Y2 − Y1`:
//!
//! | kind               | LU buckets                     | LMP buckets              |
//! |--------------------|--------------------------------|--------------------------|
//! | progressive        | `t` = `Y1(v1)`                 | `t` = `Y2(c,v2)`, `delta` = `Δ(c,c)` |
//! | repeated-max-power | `delta` = change over `(v1,v2)`| `delta` = `Δ(c,c)`       |
//! | de-ramp            | `t` = `Y1(v1)`, `c` = `Y1(c)`  | absent                   |
//! | multi-variant      | `lu_variants`                  | as progressive           |
//!
//! Unlisted buckets are optional. An iteration's sample size is its
//! `lu_n`/`lmp_n` unit count when logged, else `n_t + n_c` (`n_delta`
//! standing in for a missing control arm).

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::ops::RangeInclusive;
use std::path::Path as FsPath;
use std::str::FromStr;

use rayon::prelude::*;

use crate::aggregation::{aggregate_inverse_variance, AggregateEstimate, Effect};
use crate::design::{Path, Split};
use crate::error::{Result, VoieError};
use crate::estimators::{
    deramp_from_summaries, mixture_weights, multivariant_from_summaries, progressive_from_summaries,
    repeated_from_summaries, BucketSummary, EstimandKind, VarianceMode, VoieEstimate,
};
use crate::population::ObservedData;

pub const SCHEMA_HEADER: &str = "# voie-log/v1";
pub const DEFAULT_MIN_SAMPLES: usize = 10_000;
pub const DEFAULT_MIN_DAYS: u32 = 3;
pub const DEFAULT_MAX_DAYS: u32 = 14;
/// Lower edges of the LU allocation bands.
pub const ALLOCATION_BANDS: [f64; 4] = [0.01, 0.05, 0.10, 0.25];
pub const DEFAULT_QUANTILES: [f64; 2] = [0.025, 0.975];
const LMP_ALLOCATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    pub year: i32,
    pub month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(VoieError::Precondition(format!("month {month} out of range")));
        }
        Ok(Month { year, month })
    }

    pub fn succ(self) -> Month {
        if self.month == 12 {
            Month { year: self.year + 1, month: 1 }
        } else {
            Month { month: self.month + 1, ..self }
        }
    }
}

impl FromStr for Month {
    type Err = VoieError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || VoieError::Precondition(format!("`{s}` is not a YYYY-MM month"));
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(bad());
        }
        Month::new(y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?)
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// Comma-separated, one record per row.
    Delimited,
    /// `key = value` lines, records separated by blank lines.
    StructuredText,
}

impl FromStr for Format {
    type Err = VoieError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delimited" | "csv" => Ok(Format::Delimited),
            "structured-text" | "text" => Ok(Format::StructuredText),
            other => Err(VoieError::Precondition(format!("unknown log format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationSummary {
    pub allocation: f64,
    pub duration_days: u32,
    /// Units exposed in the iteration, when logged.
    pub units: Option<usize>,
    pub treated: Option<BucketSummary<f64>>,
    pub control: Option<BucketSummary<f64>>,
    pub delta: Option<BucketSummary<f64>>,
}

impl IterationSummary {
    pub fn new(allocation: f64, duration_days: u32) -> Self {
        IterationSummary {
            allocation,
            duration_days,
            units: None,
            treated: None,
            control: None,
            delta: None,
        }
    }

    /// The logged unit count; otherwise the units in the two arms, with the
    /// `delta` bucket standing in for a missing control arm.
    pub fn sample_size(&self) -> usize {
        let count = |b: Option<&BucketSummary<f64>>| b.map_or(0, |b| b.count);
        self.units
            .unwrap_or_else(|| count(self.treated.as_ref()) + count(self.control.as_ref().or(self.delta.as_ref())))
    }

    fn buckets(&self) -> [(&'static str, &Option<BucketSummary<f64>>); 3] {
        [("t", &self.treated), ("c", &self.control), ("delta", &self.delta)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub id: String,
    pub team: Option<String>,
    pub end_month: Month,
    pub kind: EstimandKind,
    pub lu: IterationSummary,
    pub lmp: Option<IterationSummary>,
    pub split: Option<Split>,
    pub winner: Option<String>,
    /// First-iteration `Y1` summary per variant, for multi-variant records.
    pub lu_variants: Vec<(String, BucketSummary<f64>)>,
    /// Estimated effect on day `T` at index `T − 1`.
    pub daily_effects: Vec<Option<f64>>,
    /// Set by [`filter_experiments`] when an iteration ran past the day cap.
    pub exceeds_max_days: bool,
}

impl ExperimentRecord {
    pub fn new(id: impl Into<String>, end_month: Month, kind: EstimandKind, lu: IterationSummary) -> Self {
        ExperimentRecord {
            id: id.into(),
            team: None,
            end_month,
            kind,
            lu,
            lmp: None,
            split: None,
            winner: None,
            lu_variants: Vec::new(),
            daily_effects: Vec::new(),
            exceeds_max_days: false,
        }
    }

    pub fn iterations(&self) -> impl Iterator<Item = &IterationSummary> {
        std::iter::once(&self.lu).chain(self.lmp.as_ref())
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.kind == EstimandKind::Collapsed {
            return Err("`collapsed` is an estimator, not a record kind".into());
        }
        if !(self.lu.allocation > 0.0 && self.lu.allocation <= LMP_ALLOCATION) {
            return Err(format!("lu_alloc = {} must lie in (0, 0.5]", self.lu.allocation));
        }
        if let Some(lmp) = &self.lmp {
            if (lmp.allocation - LMP_ALLOCATION).abs() > 1e-9 {
                return Err(format!("lmp_alloc = {} must be 0.5", lmp.allocation));
            }
        }
        for (name, it) in [("lu", Some(&self.lu)), ("lmp", self.lmp.as_ref())] {
            let Some(it) = it else { continue };
            if it.duration_days < 1 {
                return Err(format!("{name}_days = {}: duration_days must be at least 1", it.duration_days));
            }
            for (arm, b) in it.buckets() {
                if let Some(b) = b {
                    if b.count < 2 {
                        return Err(format!("{name}_n{arm} = {}: buckets need at least 2 units", b.count));
                    }
                }
            }
        }
        for (label, b) in &self.lu_variants {
            if b.count < 2 {
                return Err(format!("variant {label}: buckets need at least 2 units"));
            }
        }
        if let (Some(split), Some(winner)) = (&self.split, &self.winner) {
            split.index_of(winner).map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// loading
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub records: Vec<ExperimentRecord>,
    pub rejects: Vec<Reject>,
}

const REQUIRED_COLUMNS: [&str; 5] = ["id", "end_month", "kind", "lu_alloc", "lu_days"];

pub fn load_experiments(path: impl AsRef<FsPath>, format: Format) -> Result<LoadReport> {
    let file = std::fs::File::open(path)?;
    read_experiments(BufReader::new(file), format)
}

pub fn read_experiments<R: Read>(reader: R, format: Format) -> Result<LoadReport> {
    let mut text = String::new();
    BufReader::new(reader).read_to_string(&mut text)?;
    let (header_line, body) = split_schema_header(&text)?;
    let rows = match format {
        Format::Delimited => delimited_rows(body, header_line)?,
        Format::StructuredText => text_rows(body, header_line)?,
    };
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    for (line, fields) in rows {
        match parse_record(&fields) {
            Ok(r) => records.push(r),
            Err(reason) => {
                let id = field(&fields, "id").map(str::to_owned);
                log::debug!("rejecting line {line}: {reason}");
                rejects.push(Reject { line, id, reason });
            }
        }
    }
    Ok(LoadReport { records, rejects })
}

/// Returns the header's line number and the text after it.
fn split_schema_header(text: &str) -> Result<(usize, &str)> {
    let mut offset = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        offset += line.len();
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed != SCHEMA_HEADER {
            return Err(VoieError::SchemaVersion {
                expected: SCHEMA_HEADER.into(),
                found: trimmed.into(),
            });
        }
        return Ok((i + 1, &text[offset..]));
    }
    Err(VoieError::SchemaVersion {
        expected: SCHEMA_HEADER.into(),
        found: String::new(),
    })
}

type Row = (usize, HashMap<String, String>);

fn delimited_rows(body: &str, header_line: usize) -> Result<Vec<Row>> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let line_of = |pos: Option<&csv::Position>| header_line + pos.map_or(1, |p| p.line() as usize);
    let headers = rdr.headers().map_err(|e| VoieError::Parse {
        line: line_of(e.position()),
        message: e.to_string(),
    })?;
    let headers: Vec<String> = headers.iter().map(str::to_owned).collect();
    for col in REQUIRED_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(VoieError::MissingColumn(col.into()));
        }
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| VoieError::Parse {
            line: line_of(e.position()),
            message: e.to_string(),
        })?;
        let line = line_of(rec.position());
        let mut fields: HashMap<String, String> =
            headers.iter().cloned().zip(rec.iter().map(str::to_owned)).collect();
        if rec.len() != headers.len() {
            // keep what parsed so the reject can name the record
            fields.insert(
                FIELD_COUNT_KEY.into(),
                format!("{} fields, header has {}", rec.len(), headers.len()),
            );
        }
        rows.push((line, fields));
    }
    Ok(rows)
}

const FIELD_COUNT_KEY: &str = "\u{0}field-count";

fn text_rows(body: &str, header_line: usize) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    let mut current: Option<Row> = None;
    for (i, raw) in body.lines().enumerate() {
        let line = header_line + 1 + i;
        let trimmed = raw.trim();
        if trimmed.starts_with('#') {
            continue;
        }
        if trimmed.is_empty() {
            rows.extend(current.take());
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| VoieError::Parse {
            line,
            message: format!("expected `key = value`, got `{trimmed}`"),
        })?;
        let (_, fields) = current.get_or_insert_with(|| (line, HashMap::new()));
        if fields.insert(key.trim().to_owned(), value.trim().to_owned()).is_some() {
            return Err(VoieError::Parse {
                line,
                message: format!("duplicate key `{}`", key.trim()),
            });
        }
    }
    rows.extend(current);
    Ok(rows)
}

fn field<'a>(fields: &'a HashMap<String, String>, key: &str) -> Option<&'a str> {
    fields.get(key).map(|s| s.trim()).filter(|s| !s.is_empty())
}

fn number<T: FromStr>(fields: &HashMap<String, String>, key: &str) -> std::result::Result<Option<T>, String> {
    field(fields, key)
        .map(|s| s.parse().map_err(|_| format!("{key} = `{s}` is not a valid number")))
        .transpose()
}

fn required<'a>(fields: &'a HashMap<String, String>, key: &str) -> std::result::Result<&'a str, String> {
    field(fields, key).ok_or_else(|| format!("missing {key}"))
}

fn bucket(
    fields: &HashMap<String, String>,
    prefix: &str,
    arm: &str,
) -> std::result::Result<Option<BucketSummary<f64>>, String> {
    let n: Option<usize> = number(fields, &format!("{prefix}_n{arm}"))?;
    let m: Option<f64> = number(fields, &format!("{prefix}_m{arm}"))?;
    let v: Option<f64> = number(fields, &format!("{prefix}_v{arm}"))?;
    match (n, m, v) {
        (None, None, None) => Ok(None),
        (Some(n), Some(m), Some(v)) => {
            if n < 2 {
                return Err(format!("{prefix}_n{arm} = {n}: buckets need at least 2 units"));
            }
            BucketSummary::new(n, m, Some(v)).map(Some).map_err(|e| e.to_string())
        }
        _ => Err(format!("{prefix}_{arm} bucket needs count, mean and variance together")),
    }
}

fn iteration(fields: &HashMap<String, String>, prefix: &str) -> std::result::Result<Option<IterationSummary>, String> {
    let allocation: Option<f64> = number(fields, &format!("{prefix}_alloc"))?;
    let days: Option<u32> = number(fields, &format!("{prefix}_days"))?;
    let units: Option<usize> = number(fields, &format!("{prefix}_n"))?;
    let treated = bucket(fields, prefix, "t")?;
    let control = bucket(fields, prefix, "c")?;
    let delta = bucket(fields, prefix, "delta")?;
    if allocation.is_none() && days.is_none() && units.is_none() && [&treated, &control, &delta].iter().all(|b| b.is_none()) {
        return Ok(None);
    }
    Ok(Some(IterationSummary {
        allocation: allocation.ok_or_else(|| format!("missing {prefix}_alloc"))?,
        duration_days: days.ok_or_else(|| format!("missing {prefix}_days"))?,
        units,
        treated,
        control,
        delta,
    }))
}

/// `A:n:mean:var|B:n:mean:var`.
fn parse_variants(s: &str) -> std::result::Result<Vec<(String, BucketSummary<f64>)>, String> {
    s.split('|')
        .map(|part| {
            let bad = || format!("lu_variants entry `{part}` is not label:n:mean:var");
            let items: Vec<&str> = part.split(':').map(str::trim).collect();
            let [label, n, m, v] = items[..] else { return Err(bad()) };
            let n: usize = n.parse().map_err(|_| bad())?;
            if n < 2 {
                return Err(format!("variant {label}: buckets need at least 2 units"));
            }
            let summary = BucketSummary::new(n, m.parse().map_err(|_| bad())?, Some(v.parse().map_err(|_| bad())?))
                .map_err(|e| e.to_string())?;
            Ok((label.to_owned(), summary))
        })
        .collect()
}

fn format_variants(variants: &[(String, BucketSummary<f64>)]) -> String {
    variants
        .iter()
        .map(|(l, b)| format!("{l}:{}:{}:{}", b.count, b.mean, b.sample_variance.unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join("|")
}

fn parse_record(fields: &HashMap<String, String>) -> std::result::Result<ExperimentRecord, String> {
    if let Some(msg) = fields.get(FIELD_COUNT_KEY) {
        return Err(format!("malformed row: {msg}"));
    }
    let id = required(fields, "id")?.to_owned();
    let end_month = required(fields, "end_month")?.parse::<Month>().map_err(|e| e.to_string())?;
    let kind = required(fields, "kind")?.parse::<EstimandKind>().map_err(|e| e.to_string())?;
    let lu = iteration(fields, "lu")?.ok_or("missing lu_alloc")?;
    let mut daily: BTreeMap<usize, f64> = BTreeMap::new();
    for (key, _) in fields.iter().filter(|(k, _)| k.starts_with("day_")) {
        let day: usize = key["day_".len()..]
            .parse()
            .ok()
            .filter(|&d| d >= 1)
            .ok_or_else(|| format!("bad day column `{key}`"))?;
        if let Some(v) = number::<f64>(fields, key)? {
            daily.insert(day, v);
        }
    }
    let last_day = daily.keys().next_back().copied().unwrap_or(0);
    let record = ExperimentRecord {
        id,
        team: field(fields, "team").map(str::to_owned),
        end_month,
        kind,
        lu,
        lmp: iteration(fields, "lmp")?,
        split: field(fields, "split")
            .map(|s| s.parse::<Split>().map_err(|e| e.to_string()))
            .transpose()?,
        winner: field(fields, "winner").map(str::to_owned),
        lu_variants: field(fields, "lu_variants").map(parse_variants).transpose()?.unwrap_or_default(),
        daily_effects: (1..=last_day).map(|d| daily.get(&d).copied()).collect(),
        exceeds_max_days: false,
    };
    record.validate()?;
    Ok(record)
}

/// Writes records in the delimited format, schema header included.
pub fn write_experiments<W: Write>(records: &[ExperimentRecord], mut writer: W) -> Result<()> {
    writeln!(writer, "{SCHEMA_HEADER}")?;
    let days = records.iter().map(|r| r.daily_effects.len()).max().unwrap_or(0);
    let mut header: Vec<String> = ["id", "team", "end_month", "kind"].map(String::from).to_vec();
    for prefix in ["lu", "lmp"] {
        header.push(format!("{prefix}_alloc"));
        header.push(format!("{prefix}_days"));
        header.push(format!("{prefix}_n"));
        for arm in ["t", "c", "delta"] {
            for stat in ["n", "m", "v"] {
                header.push(format!("{prefix}_{stat}{arm}"));
            }
        }
    }
    header.extend(["split", "winner", "lu_variants"].map(String::from));
    header.extend((1..=days).map(|d| format!("day_{d}")));

    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.id.clone(),
            r.team.clone().unwrap_or_default(),
            r.end_month.to_string(),
            r.kind.to_string(),
        ];
        for it in [Some(&r.lu), r.lmp.as_ref()] {
            match it {
                Some(it) => {
                    row.push(it.allocation.to_string());
                    row.push(it.duration_days.to_string());
                    row.push(it.units.map(|u| u.to_string()).unwrap_or_default());
                    for (_, b) in it.buckets() {
                        match b {
                            Some(b) => {
                                row.push(b.count.to_string());
                                row.push(b.mean.to_string());
                                row.push(b.sample_variance.map(|v| v.to_string()).unwrap_or_default());
                            }
                            None => row.extend(std::iter::repeat_n(String::new(), 3)),
                        }
                    }
                }
                None => row.extend(std::iter::repeat_n(String::new(), 12)),
            }
        }
        row.push(r.split.as_ref().map(|s| s.to_string()).unwrap_or_default());
        row.push(r.winner.clone().unwrap_or_default());
        row.push(format_variants(&r.lu_variants));
        for d in 0..days {
            row.push(r.daily_effects.get(d).copied().flatten().map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// eligibility
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub min_samples: usize,
    pub min_days: u32,
    /// Days of results used; longer iterations are flagged and their
    /// per-day series truncated.
    pub max_days: u32,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_samples: DEFAULT_MIN_SAMPLES,
            min_days: DEFAULT_MIN_DAYS,
            max_days: DEFAULT_MAX_DAYS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub retained: Vec<ExperimentRecord>,
    /// `(id, reason)` per excluded record.
    pub excluded: Vec<(String, String)>,
}

/// Keeps records whose every present iteration has at least `min_samples`
/// units and lasted at least `min_days`.
pub fn filter_experiments(records: Vec<ExperimentRecord>, config: &FilterConfig) -> Result<FilterReport> {
    if config.min_samples == 0 || config.min_days == 0 || config.max_days == 0 {
        return Err(VoieError::Precondition("filter thresholds must be positive".into()));
    }
    let mut retained = Vec::new();
    let mut excluded = Vec::new();
    for mut r in records {
        let failure = [("lu", Some(&r.lu)), ("lmp", r.lmp.as_ref())]
            .into_iter()
            .filter_map(|(name, it)| it.map(|it| (name, it)))
            .find_map(|(name, it)| {
                if it.sample_size() < config.min_samples {
                    Some(format!("{name} has {} samples, fewer than {}", it.sample_size(), config.min_samples))
                } else if it.duration_days < config.min_days {
                    Some(format!("{name} lasted {} days, fewer than {}", it.duration_days, config.min_days))
                } else {
                    None
                }
            });
        match failure {
            Some(reason) => excluded.push((r.id.clone(), reason)),
            None => {
                let long = r.iterations().any(|it| it.duration_days > config.max_days);
                r.exceeds_max_days = long;
                r.daily_effects.truncate(config.max_days as usize);
                retained.push(r);
            }
        }
    }
    Ok(FilterReport { retained, excluded })
}

// ---------------------------------------------------------------------------
// per-experiment estimates
// ---------------------------------------------------------------------------

fn need(
    record: &ExperimentRecord,
    bucket: Option<&BucketSummary<f64>>,
    what: &str,
) -> Result<BucketSummary<f64>> {
    bucket.cloned().ok_or_else(|| VoieError::KindMismatch {
        id: record.id.clone(),
        message: format!("{} record lacks the {what} summary", record.kind),
    })
}

/// Estimate for one record, dispatched on its kind: LU supplies the
/// first-iteration terms and LMP the second.
pub fn per_experiment_voie(record: &ExperimentRecord, alpha: f64, mode: VarianceMode) -> Result<VoieEstimate<f64>> {
    let lmp = record.lmp.as_ref();
    let lmp_t = || need(record, lmp.and_then(|l| l.treated.as_ref()), "lmp_t (c,v2)");
    let drift = || need(record, lmp.and_then(|l| l.delta.as_ref()), "lmp_delta (c,c)");
    let point = match record.kind {
        EstimandKind::Progressive => progressive_from_summaries(
            lmp_t()?,
            need(record, record.lu.treated.as_ref(), "lu_t")?,
            drift()?,
            mode,
        )?,
        EstimandKind::RepeatedMaxPower => {
            repeated_from_summaries(need(record, record.lu.delta.as_ref(), "lu_delta (v1,v2)")?, drift()?, mode)?
        }
        EstimandKind::Deramp => deramp_from_summaries(
            need(record, record.lu.treated.as_ref(), "lu_t")?,
            need(record, record.lu.control.as_ref(), "lu_c")?,
            mode,
        )?,
        EstimandKind::MultiVariant => {
            let split = record.split.as_ref().ok_or_else(|| VoieError::KindMismatch {
                id: record.id.clone(),
                message: "multi-variant record lacks a split".into(),
            })?;
            let weights = mixture_weights::<f64>(split);
            let variants = split
                .labels()
                .zip(weights)
                .map(|(label, w)| {
                    let found = record.lu_variants.iter().find(|(l, _)| l == label).map(|(_, b)| b);
                    Ok((label.to_owned(), w, need(record, found, &format!("lu_variants {label}"))?))
                })
                .collect::<Result<Vec<_>>>()?;
            multivariant_from_summaries(lmp_t()?, variants, drift()?, mode)?
        }
        EstimandKind::Collapsed => {
            return Err(VoieError::KindMismatch {
                id: record.id.clone(),
                message: "collapsed is not a record kind".into(),
            })
        }
    };
    VoieEstimate::from_point(point, alpha)
}

/// Summarizes unit-level observations into a record, for replaying
/// simulated experiments through the summary pipeline.
pub fn record_from_observed(
    id: impl Into<String>,
    end_month: Month,
    kind: EstimandKind,
    lu_allocation: f64,
    durations: (u32, u32),
    obs: &ObservedData<f64>,
    split: Option<&Split>,
) -> Result<ExperimentRecord> {
    let y1 = obs.y1_obs();
    let pick = |f: &dyn Fn(Path) -> bool, values: &dyn Fn(usize) -> f64| -> Option<BucketSummary<f64>> {
        let v: Vec<f64> = obs.paths().iter().enumerate().filter(|(_, p)| f(**p)).map(|(i, _)| values(i)).collect();
        BucketSummary::from_values(&v)
    };
    let first = |i: usize| y1[i];
    let mut lu = IterationSummary::new(lu_allocation, durations.0);
    lu.units = Some(obs.n());
    lu.treated = pick(&|p| p.is_first_treated(), &first);
    lu.control = pick(&|p| !p.is_first_treated(), &first);

    let mut record = ExperimentRecord::new(id, end_month, kind, lu);
    if kind == EstimandKind::MultiVariant {
        let split = split.ok_or_else(|| VoieError::Precondition("multi-variant replay needs a split".into()))?;
        record.split = Some(split.clone());
        for label in split.labels() {
            let j = obs
                .variants()
                .iter()
                .position(|v| v == label)
                .ok_or_else(|| VoieError::UnknownVariant(label.into()))?;
            let b = pick(&|p| p.first_variant() == Some(j), &first)
                .ok_or_else(|| VoieError::EmptyVariantGroup(label.into()))?;
            record.lu_variants.push((label.to_owned(), b));
        }
    }
    if kind == EstimandKind::Deramp {
        return Ok(record);
    }
    let y2 = obs
        .y2_obs()
        .ok_or_else(|| VoieError::Precondition("second-iteration outcomes are missing".into()))?;
    let second = |i: usize| y2[i];
    let change = |i: usize| y2[i] - y1[i];
    if kind == EstimandKind::RepeatedMaxPower {
        record.lu.delta = pick(&|p| matches!(p, Path::TreatedImproved(_)), &change);
    }
    let mut lmp = IterationSummary::new(LMP_ALLOCATION, durations.1);
    lmp.units = Some(obs.n());
    lmp.treated = match kind {
        EstimandKind::RepeatedMaxPower => pick(&|p| matches!(p, Path::TreatedImproved(_)), &second),
        _ => pick(&|p| p == Path::ControlImproved, &second),
    };
    lmp.control = pick(&|p| p == Path::ControlControl, &second);
    lmp.delta = pick(&|p| p == Path::ControlControl, &change);
    record.lmp = Some(lmp);
    Ok(record)
}

// ---------------------------------------------------------------------------
// grouped reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Month,
    Allocation,
    Team,
}

impl FromStr for GroupKey {
    type Err = VoieError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "month" => Ok(GroupKey::Month),
            "allocation" => Ok(GroupKey::Allocation),
            "team" => Ok(GroupKey::Team),
            other => Err(VoieError::UnknownGroupKey(other.into())),
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupKey::Month => "month",
            GroupKey::Allocation => "allocation",
            GroupKey::Team => "team",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub alpha: f64,
    /// `(baseline_prev, baseline_curr)` for normalized effects.
    pub normalization: Option<(f64, f64)>,
    pub bands: Vec<f64>,
    pub mode: VarianceMode,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            alpha: 0.05,
            normalization: None,
            bands: ALLOCATION_BANDS.to_vec(),
            mode: VarianceMode::Required,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub group: String,
    pub experiments: usize,
    /// `None` for groups without a usable aggregate.
    pub aggregate: Option<AggregateEstimate>,
    pub ci: Option<(f64, f64)>,
    pub significant_05: bool,
    pub significant_01: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub key: GroupKey,
    pub alpha: f64,
    pub rows: Vec<ReportRow>,
    /// Inverse-variance aggregate over the whole corpus.
    pub overall: ReportRow,
}

/// Band index for an LU allocation: the largest lower edge not above it,
/// with allocations below the first edge joining the first band. Bands
/// are labeled `lo-hi`, half-open except the last, which runs to 50%.
pub fn allocation_band(allocation: f64, bands: &[f64]) -> usize {
    bands.iter().rposition(|&b| allocation + 1e-12 >= b).unwrap_or(0)
}

fn band_label(bands: &[f64], i: usize) -> String {
    let pct = |x: f64| format!("{}%", (x * 1e4).round() / 1e2);
    let hi = bands.get(i + 1).copied().unwrap_or(LMP_ALLOCATION);
    format!("{}-{}", pct(bands[i]), pct(hi))
}

fn summarize_group(group: String, effects: &[Effect], options: &ReportOptions) -> Result<ReportRow> {
    let aggregate = if effects.is_empty() {
        None
    } else {
        match aggregate_inverse_variance(effects) {
            Ok(a) => Some(match options.normalization {
                Some((prev, curr)) => a.with_normalization(prev, curr)?,
                None => a,
            }),
            Err(e @ (VoieError::ZeroVariance | VoieError::AllInfiniteVariance)) => {
                log::warn!("group {group}: no aggregate ({e})");
                None
            }
            Err(e) => return Err(e),
        }
    };
    let ci = aggregate.as_ref().map(|a| a.interval(options.alpha)).transpose()?;
    Ok(ReportRow {
        significant_05: aggregate.as_ref().is_some_and(|a| a.significant_at(0.05)),
        significant_01: aggregate.as_ref().is_some_and(|a| a.significant_at(0.01)),
        group,
        experiments: effects.len(),
        aggregate,
        ci,
    })
}

pub fn group_and_report(records: &[ExperimentRecord], key: GroupKey, options: &ReportOptions) -> Result<ReportTable> {
    if records.is_empty() {
        return Err(VoieError::EmptyInput);
    }
    if options.bands.is_empty() || options.bands.windows(2).any(|w| w[0] >= w[1]) {
        return Err(VoieError::Precondition("allocation bands must be increasing".into()));
    }
    let effects = records
        .par_iter()
        .map(|r| Effect::from_estimate(r.id.clone(), &per_experiment_voie(r, options.alpha, options.mode)?))
        .collect::<Result<Vec<_>>>()?;

    let mut groups: BTreeMap<String, Vec<Effect>> = BTreeMap::new();
    match key {
        GroupKey::Month => {
            let first = records.iter().map(|r| r.end_month).min().expect("nonempty");
            let last = records.iter().map(|r| r.end_month).max().expect("nonempty");
            let mut m = first;
            while m <= last {
                groups.insert(m.to_string(), Vec::new());
                m = m.succ();
            }
        }
        GroupKey::Allocation => {
            for i in 0..options.bands.len() {
                groups.insert(band_label(&options.bands, i), Vec::new());
            }
        }
        GroupKey::Team => {}
    }
    for (r, e) in records.iter().zip(&effects) {
        let label = match key {
            GroupKey::Month => r.end_month.to_string(),
            GroupKey::Allocation => band_label(&options.bands, allocation_band(r.lu.allocation, &options.bands)),
            GroupKey::Team => r.team.clone().unwrap_or_else(|| "(none)".into()),
        };
        groups.entry(label).or_default().push(e.clone());
    }
    // band labels sort lexically; keep them in band order
    let mut ordered: Vec<(String, Vec<Effect>)> = groups.into_iter().collect();
    if key == GroupKey::Allocation {
        ordered.sort_by_key(|(label, _)| {
            (0..options.bands.len()).position(|i| band_label(&options.bands, i) == *label)
        });
    }
    let rows = ordered
        .into_iter()
        .map(|(group, effects)| summarize_group(group, &effects, options))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReportTable {
        key,
        alpha: options.alpha,
        rows,
        overall: summarize_group("all".into(), &effects, options)?,
    })
}

/// Shortest round-trip decimal, switching to exponent form outside
/// `[1e-4, 1e15)`.
pub fn format_real(x: f64) -> String {
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&x.abs()) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_real).unwrap_or_default()
}

const REPORT_HEADER: [&str; 12] = [
    "group_by", "group", "experiments", "delta_hat", "var_hat", "std_error", "ci_lo", "ci_hi", "p_value", "sig_05",
    "sig_01", "normalized",
];

/// Plot-ready delimited table: one row per group, then the overall row.
pub fn write_report<W: Write>(table: &ReportTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPORT_HEADER)?;
    let group_by = table.key.to_string();
    for (kind, row) in table.rows.iter().map(|r| (group_by.as_str(), r)).chain([("overall", &table.overall)]) {
        let a = row.aggregate.as_ref();
        w.write_record([
            kind.to_string(),
            row.group.clone(),
            row.experiments.to_string(),
            opt(a.map(|a| a.delta_hat)),
            opt(a.map(|a| a.var_hat)),
            opt(a.map(|a| a.standard_error())),
            opt(row.ci.map(|c| c.0)),
            opt(row.ci.map(|c| c.1)),
            opt(a.and_then(|a| a.p_value)),
            row.significant_05.to_string(),
            row.significant_01.to_string(),
            opt(a.and_then(|a| a.normalized)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// per-day effect quantiles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct DayQuantiles {
    pub day: usize,
    /// Experiments with an estimate on this day.
    pub count: usize,
    /// One per requested level; `None` when no experiment reached the day.
    pub quantiles: Option<Vec<f64>>,
}

/// Linear interpolation between order statistics (`h = (n − 1) q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn daily_effect_quantiles(
    records: &[ExperimentRecord],
    days: RangeInclusive<usize>,
    q_levels: &[f64],
) -> Result<Vec<DayQuantiles>> {
    if let Some(q) = q_levels.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(VoieError::Precondition(format!("quantile level {q} outside (0, 1)")));
    }
    if *days.start() == 0 {
        return Err(VoieError::Precondition("days are numbered from 1".into()));
    }
    if records.iter().all(|r| r.daily_effects.iter().all(Option::is_none)) {
        return Err(VoieError::NoSeries);
    }
    Ok(days
        .map(|day| {
            let mut values: Vec<f64> =
                records.iter().filter_map(|r| r.daily_effects.get(day - 1).copied().flatten()).collect();
            values.sort_by(f64::total_cmp);
            DayQuantiles {
                day,
                count: values.len(),
                quantiles: (!values.is_empty()).then(|| q_levels.iter().map(|&q| quantile_sorted(&values, q)).collect()),
            }
        })
        .collect())
}

pub fn write_quantiles<W: Write>(rows: &[DayQuantiles], q_levels: &[f64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["day".to_string(), "experiments".to_string()];
    header.extend(q_levels.iter().map(|q| format!("q{q}")));
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![r.day.to_string(), r.count.to_string()];
        match &r.quantiles {
            Some(qs) => row.extend(qs.iter().map(|&q| format_real(q))),
            None => row.extend(q_levels.iter().map(|_| String::new())),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads any [`BufRead`] line by line looking only for the schema header.
pub fn has_schema_header<R: BufRead>(reader: R) -> Result<bool> {
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            return Ok(line.trim() == SCHEMA_HEADER);
        }
    }
    Ok(false)
}
