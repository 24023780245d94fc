use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use voie::ingest::{
    filter_experiments, group_and_report, load_experiments, per_experiment_voie, write_experiments, write_report,
    FilterConfig, Format, GroupKey, ReportOptions, SCHEMA_HEADER,
};
use voie::oracle::{exact_moments, monte_carlo_coverage, SyntheticCorpus, SyntheticPopulation};
use voie::population::DEFAULT_ASSUMPTION_TOLERANCE;
use voie::{
    aggregate_inverse_variance, aggregate_weighted, assign, check_time_invariance, observe, point_collapsed,
    point_progressive, reference_table_p4, true_voie, BigRational, Design, Effect, Scalar, Table, VarianceMode,
};

type Outcome = Result<String, String>;

// relative error, with unit scale as the floor for targets near zero
fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn strict_rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

// n ≤ 8 tables; every third one drifts between iterations so τ1 is not identified
fn random_tables() -> Vec<Table> {
    let mut tables = vec![reference_table_p4()];
    for seed in 0..24u64 {
        let g = SyntheticPopulation {
            n: 4 + (seed % 5) as usize,
            time_variation: if seed % 3 == 2 { (-1.5, 1.5) } else { (0.0, 0.0) },
            ..SyntheticPopulation::default()
        };
        tables.push(g.generate(seed).unwrap());
    }
    tables
}

fn integer_tables(count: u64) -> Vec<voie::ExactTable> {
    (0..count)
        .map(|seed| {
            let g = SyntheticPopulation {
                n: 5 + (seed % 4) as usize,
                baseline: (0.0, 20.0),
                effect_v1: (-3.0, 3.0),
                effect_v2: (-1.0, 5.0),
                drift: (-2.0, 2.0),
                integer_valued: true,
                ..SyntheticPopulation::default()
            };
            g.generate(100 + seed).unwrap().map_outcomes(|v| BigRational::from_real(*v))
        })
        .collect()
}

fn progressive_design(n: usize) -> Design {
    Design::progressive_nonstandard(n, 0.25, 0.5).unwrap()
}

#[derive(Default)]
struct Tally {
    tables: usize,
    tau1_checked: usize,
    max_target_err: f64,
    max_tau1_err: f64,
    max_var_err: f64,
    bound_checked: usize,
    bound_failures: Vec<String>,
}

fn unbiasedness(design_for: impl Fn(usize) -> Design, tally: &mut Tally) -> Result<(), String> {
    for (i, t) in random_tables().iter().enumerate() {
        let d = design_for(t.n());
        let m = exact_moments(t, &d).map_err(|e| format!("table {i}: {e}"))?;
        tally.tables += 1;
        tally.max_target_err = tally.max_target_err.max(rel(m.exact_mean, m.target));
        if check_time_invariance(t, DEFAULT_ASSUMPTION_TOLERANCE).holds {
            let tau1 = true_voie(t).unwrap().value;
            tally.tau1_checked += 1;
            tally.max_tau1_err = tally.max_tau1_err.max(rel(m.exact_mean, tau1));
        }
        tally.max_var_err = tally.max_var_err.max(strict_rel(m.exact_variance, m.theoretical_variance));
        if let Some(v) = m.mean_var_upper_hat {
            tally.bound_checked += 1;
            let ok = if m.s_terms.tau > 0.0 {
                v > m.exact_variance
            } else {
                v >= m.exact_variance - 1e-12
            };
            if !ok {
                tally.bound_failures.push(format!("table {i}: mean V̂ {v} vs {}", m.exact_variance));
            }
        }
    }
    for (i, t) in integer_tables(8).iter().enumerate() {
        let d = design_for(t.n());
        let m = exact_moments(t, &d).map_err(|e| format!("rational table {i}: {e}"))?;
        if m.exact_mean != m.target || m.exact_variance != m.theoretical_variance {
            return Err(format!("rational table {i}: exact identity broken"));
        }
    }
    Ok(())
}

fn summarize(t: &Tally) -> Outcome {
    if t.tables < 21 {
        return Err(format!("only {} tables", t.tables));
    }
    if t.max_target_err > 1e-12 || t.max_tau1_err > 1e-12 {
        return Err(format!("target err {:.2e}, tau1 err {:.2e}", t.max_target_err, t.max_tau1_err));
    }
    Ok(format!(
        "{} tables + 8 rational, max rel err {:.1e} vs target, {:.1e} vs tau1 on {} time-invariant tables",
        t.tables, t.max_target_err, t.max_tau1_err, t.tau1_checked
    ))
}

fn c1(tally: &mut Tally) -> Outcome {
    unbiasedness(progressive_design, tally)?;
    summarize(tally)
}

fn c2(tally: &mut Tally) -> Outcome {
    unbiasedness(|n| Design::repeated_max_power(n).unwrap(), tally)?;
    summarize(tally)
}

fn c3(tallies: [&Tally; 2]) -> Outcome {
    let var_err = tallies.iter().map(|t| t.max_var_err).fold(0.0, f64::max);
    let failures: Vec<&String> = tallies.iter().flat_map(|t| &t.bound_failures).collect();
    let checked: usize = tallies.iter().map(|t| t.bound_checked).sum();
    let total: usize = tallies.iter().map(|t| t.tables).sum();
    if var_err > 1e-10 {
        return Err(format!("variance identity rel err {var_err:.2e}"));
    }
    if !failures.is_empty() {
        return Err(format!("{} bound failures, first: {}", failures.len(), failures[0]));
    }
    Ok(format!(
        "max rel err {var_err:.1e} on {total} tables; mean V̂ ≥ exact on {checked} (rest have singleton buckets)"
    ))
}

fn c4() -> Outcome {
    let t = SyntheticPopulation::default().with_n(1000).generate(0).unwrap();
    let d = Design::progressive(1000, 0.1, 0.5).unwrap();
    let r = monte_carlo_coverage(&t, &d, 0.05, 10_000, 0).map_err(|e| e.to_string())?;
    let msg = format!(
        "coverage {:.4} ± {:.4} over {} reps ({} 0.95); empirical var {:.5}, theory {:.5}, mean V̂ {:.5}",
        r.coverage,
        r.standard_error,
        r.reps,
        if r.coverage > 0.95 { "above" } else { "not above" },
        r.empirical_variance,
        voie::theoretical_variance(&t, &d).unwrap(),
        r.mean_var_upper_hat
    );
    if r.coverage >= 0.945 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c5() -> Outcome {
    let mut compared = 0;
    for k in 0..5u64 {
        let t = SyntheticPopulation::default().with_n(200).generate(k).unwrap();
        let d = Design::progressive(200, 0.1, 0.5).unwrap();
        for seed in 0..100u64 {
            let obs = observe(&t, &assign(&d, seed).unwrap()).unwrap();
            let p = point_progressive(&obs, VarianceMode::Required).unwrap();
            let c = point_collapsed(&obs, VarianceMode::Required).unwrap();
            let diff = p.tau_hat - c.tau_hat;
            if diff != 0.0 || p.var_upper_hat != c.var_upper_hat {
                return Err(format!("table {k} seed {seed}: difference {diff:e}"));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} assignments, difference 0.0 on all"))
}

fn c6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let effects: Vec<Effect> = (0..50)
        .map(|j| Effect::new(format!("e{j}"), rng.random_range(-1.0..1.0), rng.random_range(0.001..0.5)))
        .collect();
    let inv = aggregate_inverse_variance(&effects).map_err(|e| e.to_string())?;
    let at_inv = aggregate_weighted(&effects, &inv.weights).map_err(|e| e.to_string())?;
    if rel(at_inv.var_hat, inv.var_hat) > 1e-12 {
        return Err("inverse weights passed explicitly disagree".into());
    }
    let mut min_gap = f64::INFINITY;
    for trial in 0..1000 {
        let raw: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let a: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let agg = aggregate_weighted(&effects, &a).map_err(|e| e.to_string())?;
        let gap = agg.var_hat - inv.var_hat;
        let distance = a.iter().zip(&inv.weights).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if gap < -1e-12 * inv.var_hat || (gap.abs() <= 1e-12 * inv.var_hat && distance > 1e-9) {
            return Err(format!("trial {trial}: gap {gap:e} at weight distance {distance:e}"));
        }
        min_gap = min_gap.min(gap / inv.var_hat);
    }
    Ok(format!("var_hat(inv) = {:.6e}; smallest relative excess over 1000 vectors {min_gap:.3e}", inv.var_hat))
}

fn c7() -> Outcome {
    let corpus = SyntheticCorpus::default().generate(0).map_err(|e| e.to_string())?;
    let truth: HashMap<String, f64> = corpus.iter().map(|c| (c.record.id.clone(), c.truth)).collect();
    let records: Vec<_> = corpus.into_iter().map(|c| c.record).collect();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("corpus.csv");
    write_experiments(&records, std::fs::File::create(&path).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;

    let loaded = load_experiments(&path, Format::Delimited).map_err(|e| e.to_string())?;
    if !loaded.rejects.is_empty() || loaded.records.len() != 200 {
        return Err(format!("{} loaded, {} rejected", loaded.records.len(), loaded.rejects.len()));
    }
    let kept = filter_experiments(loaded.records, &FilterConfig::default()).map_err(|e| e.to_string())?.retained;
    for r in &kept {
        per_experiment_voie(r, 0.05, VarianceMode::Required).map_err(|e| format!("{}: {e}", r.id))?;
    }
    let options = ReportOptions::default();
    let mut overall = None;
    for key in [GroupKey::Month, GroupKey::Allocation] {
        let table = group_and_report(&kept, key, &options).map_err(|e| e.to_string())?;
        let counted: usize = table.rows.iter().map(|r| r.experiments).sum();
        if counted != kept.len() {
            return Err(format!("{key} rows hold {counted} of {} experiments", kept.len()));
        }
        overall = table.overall.aggregate;
    }
    let agg = overall.ok_or("overall aggregate missing")?;
    let target: f64 = agg.ids.iter().zip(&agg.weights).map(|(id, w)| w * truth[id]).sum();
    let z = (agg.delta_hat - target) / agg.standard_error();
    let msg = format!(
        "{} retained; δ̂ {:.5} vs weighted truth {:.5} ({z:+.2} SE); month and allocation rows partition the corpus",
        kept.len(),
        agg.delta_hat,
        target
    );
    if z.abs() <= 3.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn c8() -> Outcome {
    let text = std::fs::read_to_string(fixture("filter_rules.csv")).map_err(|e| e.to_string())?;
    if !text.starts_with(SCHEMA_HEADER) {
        return Err("fixture lacks the schema header".into());
    }
    let loaded = load_experiments(fixture("filter_rules.csv"), Format::Delimited).map_err(|e| e.to_string())?;
    let filtered = filter_experiments(loaded.records, &FilterConfig::default()).map_err(|e| e.to_string())?;
    let mut excluded: Vec<&str> = filtered.excluded.iter().map(|(id, _)| id.as_str()).collect();
    excluded.sort_unstable();
    if excluded != ["below_sample_floor", "lmp_below_floor", "lmp_too_short", "lu_too_short"] {
        return Err(format!("excluded {excluded:?}"));
    }
    for key in [GroupKey::Month, GroupKey::Allocation, GroupKey::Team] {
        let table = group_and_report(&filtered.retained, key, &ReportOptions::default()).map_err(|e| e.to_string())?;
        let mut out = Vec::new();
        write_report(&table, &mut out).map_err(|e| e.to_string())?;
        let golden = std::fs::read_to_string(fixture(&format!("filter_rules.{key}.golden.csv")))
            .map_err(|e| e.to_string())?;
        if String::from_utf8(out).unwrap() != golden {
            return Err(format!("{key} report differs from golden file"));
        }
    }
    Ok(format!(
        "{} excluded, {} retained, {} rejected; month/allocation/team reports match golden files",
        excluded.len(),
        filtered.retained.len(),
        loaded.rejects.len()
    ))
}

fn main() -> ExitCode {
    let mut progressive = Tally::default();
    let mut repeated = Tally::default();
    let mut failed = 0;
    let mut run = |id: u8, budget: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let (verdict, detail) = match result {
            Ok(d) if elapsed <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over the {budget:?} budget")),
            Err(d) => ("FAIL", d),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!("{verdict} criterion {id}: {detail} [{:.2}s]", elapsed.as_secs_f64());
    };
    run(1, Duration::from_secs(10), &mut || c1(&mut progressive));
    run(2, Duration::from_secs(10), &mut || c2(&mut repeated));
    run(3, Duration::from_secs(10), &mut || c3([&progressive, &repeated]));
    run(4, Duration::from_secs(120), &mut c4);
    run(5, Duration::from_secs(60), &mut c5);
    run(6, Duration::from_secs(60), &mut c6);
    run(7, Duration::from_secs(60), &mut c7);
    run(8, Duration::from_secs(60), &mut c8);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
