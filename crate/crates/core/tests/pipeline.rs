use std::collections::HashMap;
use std::path::PathBuf;

use voie::ingest::{
    allocation_band, daily_effect_quantiles, filter_experiments, group_and_report, load_experiments,
    per_experiment_voie, record_from_observed, write_experiments, write_report, FilterConfig, Format, GroupKey,
    Month, ReportOptions, ALLOCATION_BANDS,
};
use voie::oracle::{SyntheticCorpus, SyntheticPopulation};
use voie::{
    aggregate_inverse_variance, assign, observe, point_progressive, Design, Effect, EstimandKind, VarianceMode,
};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn report_text(key: GroupKey) -> String {
    let loaded = load_experiments(fixture("filter_rules.csv"), Format::Delimited).unwrap();
    let kept = filter_experiments(loaded.records, &FilterConfig::default()).unwrap();
    let table = group_and_report(&kept.retained, key, &ReportOptions::default()).unwrap();
    let mut out = Vec::new();
    write_report(&table, &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn filter_rules_fixture() {
    let loaded = load_experiments(fixture("filter_rules.csv"), Format::Delimited).unwrap();
    assert_eq!(loaded.records.len(), 11);
    assert_eq!(loaded.rejects.len(), 1);
    assert_eq!(loaded.rejects[0].id.as_deref(), Some("zero_days"));

    let kept = filter_experiments(loaded.records, &FilterConfig::default()).unwrap();
    let mut excluded: Vec<&str> = kept.excluded.iter().map(|(id, _)| id.as_str()).collect();
    excluded.sort();
    assert_eq!(excluded, ["below_sample_floor", "lmp_below_floor", "lmp_too_short", "lu_too_short"]);
    let flagged: Vec<&str> = kept.retained.iter().filter(|r| r.exceeds_max_days).map(|r| r.id.as_str()).collect();
    assert_eq!(flagged, ["runs_past_cap"]);
}

#[test]
fn reports_match_golden_files() {
    for (key, file) in [
        (GroupKey::Month, "filter_rules.month.golden.csv"),
        (GroupKey::Allocation, "filter_rules.allocation.golden.csv"),
        (GroupKey::Team, "filter_rules.team.golden.csv"),
    ] {
        let golden = std::fs::read_to_string(fixture(file)).unwrap();
        assert_eq!(report_text(key), golden, "{file}");
    }
}

#[test]
fn single_group_report_equals_corpus_aggregate() {
    let loaded = load_experiments(fixture("filter_rules.csv"), Format::Delimited).unwrap();
    let mut records = filter_experiments(loaded.records, &FilterConfig::default()).unwrap().retained;
    for r in &mut records {
        r.end_month = Month::new(2020, 6).unwrap();
    }
    let table = group_and_report(&records, GroupKey::Month, &ReportOptions::default()).unwrap();
    assert_eq!(table.rows.len(), 1);
    let effects: Vec<Effect> = records
        .iter()
        .map(|r| Effect::from_estimate(r.id.clone(), &per_experiment_voie(r, 0.05, VarianceMode::Required).unwrap()).unwrap())
        .collect();
    let direct = aggregate_inverse_variance(&effects).unwrap();
    assert_eq!(table.rows[0].aggregate.as_ref(), Some(&direct));
    assert_eq!(table.overall.aggregate.as_ref(), Some(&direct));
}

#[test]
fn significance_flags_separate_groups() {
    let corpus = SyntheticCorpus {
        experiments: 20,
        units: (12_000, 12_000),
        other_kind_share: 0.0,
        ..SyntheticCorpus::default()
    }
    .generate(5)
    .unwrap();
    let mut records: Vec<_> = corpus.into_iter().map(|c| c.record).collect();
    // group A: effect +1 with tiny variance; group B: effect 0
    for (i, r) in records.iter_mut().enumerate() {
        let lmp = r.lmp.as_mut().unwrap();
        let t = lmp.treated.as_mut().unwrap();
        t.mean = r.lu.treated.as_ref().unwrap().mean + lmp.delta.as_ref().unwrap().mean + if i < 10 { 1.0 } else { 0.0 };
        r.team = Some(if i < 10 { "A" } else { "B" }.into());
    }
    let table = group_and_report(&records, GroupKey::Team, &ReportOptions::default()).unwrap();
    assert!(table.rows[0].significant_01);
    assert!(!table.rows[1].significant_05);
}

#[test]
fn unit_level_and_summary_paths_agree() {
    let t = SyntheticPopulation::default().with_n(2000).generate(8).unwrap();
    let d = Design::progressive(2000, 0.1, 0.5).unwrap();
    let obs = observe(&t, &assign(&d, 8).unwrap()).unwrap();
    let direct = point_progressive(&obs, VarianceMode::Required).unwrap();
    let month = Month::new(2019, 7).unwrap();
    let record = record_from_observed("x", month, EstimandKind::Progressive, 0.1, (7, 7), &obs, None).unwrap();
    let via = per_experiment_voie(&record, 0.05, VarianceMode::Required).unwrap();
    assert!((direct.tau_hat - via.tau_hat()).abs() < 1e-10);
    assert!((direct.var_upper_hat.unwrap() - via.var_upper_hat().unwrap()).abs() < 1e-10);
}

#[test]
fn generated_corpus_round_trips_through_the_log_format() {
    let corpus = SyntheticCorpus {
        experiments: 40,
        ..SyntheticCorpus::default()
    }
    .generate(1)
    .unwrap();
    let records: Vec<_> = corpus.iter().map(|c| c.record.clone()).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    write_experiments(&records, std::fs::File::create(&path).unwrap()).unwrap();
    let loaded = load_experiments(&path, Format::Delimited).unwrap();
    assert!(loaded.rejects.is_empty());
    assert_eq!(loaded.records.len(), records.len());
    for (a, b) in loaded.records.iter().zip(&records) {
        let ea = per_experiment_voie(a, 0.05, VarianceMode::Required).unwrap();
        let eb = per_experiment_voie(b, 0.05, VarianceMode::Required).unwrap();
        assert_eq!(ea.tau_hat(), eb.tau_hat());
    }

    let kept = filter_experiments(loaded.records, &FilterConfig::default()).unwrap().retained;
    let table = group_and_report(&kept, GroupKey::Allocation, &ReportOptions::default()).unwrap();
    let mut expected: HashMap<String, usize> = HashMap::new();
    for r in &kept {
        let band = allocation_band(r.lu.allocation, &ALLOCATION_BANDS);
        *expected.entry(table.rows[band].group.clone()).or_default() += 1;
    }
    for row in &table.rows {
        assert_eq!(row.experiments, expected.get(&row.group).copied().unwrap_or(0), "{}", row.group);
    }

    let q = daily_effect_quantiles(&kept, 1..=14, &[0.025, 0.5, 0.975]).unwrap();
    assert_eq!(q.len(), 14);
    assert!(q.iter().all(|d| d.quantiles.as_ref().is_none_or(|v| v[0] <= v[1] && v[1] <= v[2])));
}
