use std::fs::File;

use voie::oracle::{exact_moments, monte_carlo_coverage, OracleMoments, SyntheticPopulation};
use voie::population::read_table;
use voie::{check_time_invariance, true_voie, BigRational, Design, DesignKind, Scalar, Table};

use crate::{cell, CliResult, SimMode, SimulateArgs};

fn load_table(args: &SimulateArgs) -> CliResult<Table> {
    if let Some(path) = &args.table {
        return Ok(read_table(File::open(path)?)?);
    }
    let mut generator: SyntheticPopulation = args.generator.as_deref().unwrap_or_default().parse()?;
    if let Some(n) = args.n {
        generator.n = n;
    }
    Ok(generator.generate(args.seed)?)
}

fn design(args: &SimulateArgs, n: usize) -> CliResult<Design> {
    let design = match args.kind.parse::<DesignKind>()? {
        DesignKind::RepeatedMaxPower => Design::repeated_max_power(n)?,
        DesignKind::Progressive if args.allow_nonstandard => Design::progressive_nonstandard(n, args.p1, args.p2)?,
        DesignKind::Progressive => Design::progressive(n, args.p1, args.p2)?,
    };
    Ok(design.with_appendix_sizes(args.appendix_sizes)?)
}

pub fn run(args: &SimulateArgs) -> CliResult {
    let table = load_table(args)?;
    let design = design(args, table.n())?;
    let mut out = csv::Writer::from_writer(std::io::stdout());
    let tau1 = true_voie(&table).ok().map(|e| e.value);
    let invariant = check_time_invariance(&table, voie::population::DEFAULT_ASSUMPTION_TOLERANCE).holds;

    match args.mode {
        SimMode::Enumerate => {
            let row = if args.exact {
                let exact = table.map_outcomes(|v| BigRational::from_real(*v));
                moments_row(&exact_moments(&exact, &design)?)
            } else {
                moments_row(&exact_moments(&table, &design)?)
            };
            out.write_record([
                "mode", "kind", "n", "assignments", "target", "exact_mean", "exact_variance",
                "theoretical_variance", "mean_var_upper_hat", "s2_second", "s2_first", "s2_drift", "s2_tau",
                "tau1", "time_invariant",
            ])?;
            let mut record = vec!["enumerate".to_string(), design.kind.to_string(), table.n().to_string()];
            record.extend(row);
            record.push(cell(tau1));
            record.push(invariant.to_string());
            out.write_record(&record)?;
        }
        SimMode::Mc => {
            let r = monte_carlo_coverage(&table, &design, args.alpha, args.reps, args.seed)?;
            out.write_record([
                "mode", "kind", "n", "reps", "alpha", "target", "coverage", "standard_error", "tau1",
                "coverage_tau1", "mean_tau_hat", "empirical_variance", "mean_var_upper_hat", "mean_half_width",
            ])?;
            out.write_record([
                "mc".to_string(),
                design.kind.to_string(),
                table.n().to_string(),
                r.reps.to_string(),
                r.alpha.to_string(),
                r.target.to_string(),
                r.coverage.to_string(),
                r.standard_error.to_string(),
                cell(r.tau1),
                cell(r.coverage_tau1()),
                r.mean_tau_hat.to_string(),
                r.empirical_variance.to_string(),
                r.mean_var_upper_hat.to_string(),
                r.mean_half_width.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

fn moments_row<T: Scalar + std::fmt::Display>(m: &OracleMoments<T>) -> Vec<String> {
    vec![
        m.assignment_count.to_string(),
        m.target.to_string(),
        m.exact_mean.to_string(),
        m.exact_variance.to_string(),
        m.theoretical_variance.to_string(),
        cell(m.mean_var_upper_hat.as_ref()),
        m.s_terms.second.to_string(),
        cell(m.s_terms.first.as_ref()),
        m.s_terms.drift.to_string(),
        m.s_terms.tau.to_string(),
    ]
}
