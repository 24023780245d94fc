use std::fs::File;
use std::io::{BufWriter, Write};

use voie::ingest::{
    daily_effect_quantiles, filter_experiments, group_and_report, load_experiments, write_quantiles, write_report,
    FilterConfig, Format, GroupKey, ReportOptions, DEFAULT_QUANTILES,
};
use voie::VoieError;

use crate::{CliResult, ReportArgs};

pub fn run(args: &ReportArgs) -> CliResult {
    let format: Format = args.format.parse()?;
    let key: GroupKey = args.group_by.parse()?;
    let loaded = load_experiments(&args.input, format)?;
    for r in &loaded.rejects {
        eprintln!("rejected line {} ({}): {}", r.line, r.id.as_deref().unwrap_or("?"), r.reason);
    }
    let config = FilterConfig {
        min_samples: args.min_samples,
        min_days: args.min_days,
        max_days: args.max_days,
    };
    let filtered = filter_experiments(loaded.records, &config)?;
    for (id, reason) in &filtered.excluded {
        eprintln!("excluded {id}: {reason}");
    }
    eprintln!(
        "{} loaded, {} rejected, {} excluded, {} retained",
        filtered.retained.len() + filtered.excluded.len(),
        loaded.rejects.len(),
        filtered.excluded.len(),
        filtered.retained.len()
    );

    let options = ReportOptions {
        alpha: args.alpha,
        normalization: args.baselines.pair(),
        ..ReportOptions::default()
    };
    let table = group_and_report(&filtered.retained, key, &options)?;
    match &args.out {
        Some(path) => write_report(&table, BufWriter::new(File::create(path)?))?,
        None => write_report(&table, std::io::stdout().lock())?,
    }

    if let Some(path) = &args.quantiles_out {
        let days = 1..=args.max_days as usize;
        match daily_effect_quantiles(&filtered.retained, days, &DEFAULT_QUANTILES) {
            Ok(rows) => {
                let mut w = BufWriter::new(File::create(path)?);
                write_quantiles(&rows, &DEFAULT_QUANTILES, &mut w)?;
                w.flush()?;
            }
            Err(VoieError::NoSeries) => eprintln!("no per-day effect series; {} not written", path.display()),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}
