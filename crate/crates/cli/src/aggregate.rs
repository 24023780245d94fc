use std::fs::File;

use voie::{aggregate_inverse_variance, aggregate_weighted, test_zero, Effect};

use crate::{cell, AggregateArgs, CliResult, WeightSource};

pub fn run(args: &AggregateArgs) -> CliResult {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(File::open(&args.input)?);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (id, tau, var) = match (col("id"), col("tau_hat"), col("var_upper_hat")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err("input needs id, tau_hat and var_upper_hat columns".into()),
    };
    let weight_col = col("weight");

    let mut effects = Vec::new();
    let mut weights = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |k: usize, what: &str| -> CliResult<f64> {
            rec.get(k)
                .unwrap_or("")
                .parse()
                .map_err(|_| format!("row {line}: bad {what} `{}`", rec.get(k).unwrap_or("")).into())
        };
        effects.push(Effect::new(rec.get(id).unwrap_or(""), num(tau, "tau_hat")?, num(var, "var_upper_hat")?));
        if args.weights == WeightSource::File {
            let k = weight_col.ok_or("--weights file needs a weight column")?;
            weights.push(num(k, "weight")?);
        }
    }

    let mut agg = match args.weights {
        WeightSource::Inverse => aggregate_inverse_variance(&effects)?,
        WeightSource::File => aggregate_weighted(&effects, &weights)?,
    };
    if let Some((prev, curr)) = args.baselines.pair() {
        agg = agg.with_normalization(prev, curr)?;
    }
    let p_value = if agg.var_hat > 0.0 {
        Some(test_zero(&agg, args.df)?)
    } else {
        None
    };
    let (lo, hi) = agg.interval(args.alpha)?;

    let mut out = csv::Writer::from_writer(std::io::stdout());
    out.write_record([
        "experiments", "delta_hat", "var_hat", "std_error", "ci_lo", "ci_hi", "p_value", "normalized", "excluded",
    ])?;
    out.write_record([
        agg.experiment_count.to_string(),
        agg.delta_hat.to_string(),
        agg.var_hat.to_string(),
        agg.standard_error().to_string(),
        lo.to_string(),
        hi.to_string(),
        cell(p_value),
        cell(agg.normalized),
        agg.excluded.join(";"),
    ])?;
    out.flush()?;
    Ok(())
}
