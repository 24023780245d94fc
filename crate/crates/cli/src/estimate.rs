use std::collections::HashMap;
use std::fs::File;

use voie::estimators::{
    deramp_from_summaries, mixture_weights, multivariant_from_summaries, progressive_from_summaries,
    repeated_from_summaries,
};
use voie::{
    point_collapsed, point_deramp, point_multivariant, point_progressive, point_repeated_mp, BucketSummary,
    EstimandKind, Observed, Path, PointEstimate, Split, VarianceMode, VoieEstimate,
};

use crate::{cell, CliResult, EstimateArgs};

pub fn run(args: &EstimateArgs) -> CliResult {
    let kind: EstimandKind = args.kind.parse()?;
    let mode = if args.allow_missing_variance {
        VarianceMode::Optional
    } else {
        VarianceMode::Required
    };
    let split = args.split.as_deref().map(str::parse::<Split>).transpose()?;
    if kind == EstimandKind::MultiVariant && split.is_none() {
        return Err("multi-variant estimation needs --split".into());
    }

    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(File::open(&args.input)?);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let rows: Vec<HashMap<String, String>> = rdr
        .records()
        .map(|r| r.map(|r| headers.iter().cloned().zip(r.iter().map(str::to_owned)).collect()))
        .collect::<Result<_, _>>()?;

    let point = if headers.iter().any(|h| h == "bucket") {
        from_buckets(kind, &rows, split.as_ref(), mode)?
    } else if headers.iter().any(|h| h == "path") {
        from_units(kind, &rows, split.as_ref(), args.winner.as_deref(), mode)?
    } else {
        return Err("input needs a `path` column (unit rows) or a `bucket` column (summaries)".into());
    };
    let estimate = VoieEstimate::from_point(point, args.alpha)?;
    if args.header {
        println!("kind,tau_hat,var_upper_hat,ci_lo,ci_hi,alpha");
    }
    println!(
        "{},{},{},{},{},{}",
        estimate.kind(),
        estimate.tau_hat(),
        cell(estimate.var_upper_hat()),
        cell(estimate.ci.map(|c| c.0)),
        cell(estimate.ci.map(|c| c.1)),
        estimate.alpha
    );
    Ok(())
}

fn get<'a>(row: &'a HashMap<String, String>, key: &str) -> Option<&'a str> {
    row.get(key).map(String::as_str).filter(|s| !s.is_empty())
}

fn number(row: &HashMap<String, String>, key: &str, line: usize) -> CliResult<Option<f64>> {
    get(row, key)
        .map(|s| s.parse::<f64>().map_err(|_| format!("row {line}: {key} `{s}` is not a number").into()))
        .transpose()
}

fn from_units(
    kind: EstimandKind,
    rows: &[HashMap<String, String>],
    split: Option<&Split>,
    winner: Option<&str>,
    mode: VarianceMode,
) -> CliResult<PointEstimate<f64>> {
    let mut variants: Vec<String> = split.map(|s| s.labels().map(str::to_owned).collect()).unwrap_or_default();
    let mut paths = Vec::with_capacity(rows.len());
    let mut y1 = Vec::with_capacity(rows.len());
    let mut y2 = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2;
        let code = get(row, "path").ok_or_else(|| format!("row {line}: missing path"))?;
        let label = get(row, "variant").unwrap_or("v1");
        let j = match variants.iter().position(|v| v == label) {
            Some(j) => j,
            None if split.is_some() && code.starts_with("v1") => {
                return Err(format!("row {line}: variant `{label}` is not in the split").into())
            }
            None if code.starts_with("v1") => {
                variants.push(label.to_owned());
                variants.len() - 1
            }
            None => 0,
        };
        paths.push(Path::from_code(code, j)?);
        y1.push(number(row, "y1", line)?.ok_or_else(|| format!("row {line}: missing y1"))?);
        y2.push(number(row, "y2", line)?);
    }
    let y2 = if y2.iter().all(Option::is_none) {
        None
    } else {
        Some(y2.into_iter().collect::<Option<Vec<f64>>>().ok_or("y2 must be given for every row or none")?)
    };
    let obs = Observed::new(paths, y1, y2, variants)?;
    Ok(match kind {
        EstimandKind::Progressive => point_progressive(&obs, mode)?,
        EstimandKind::RepeatedMaxPower => point_repeated_mp(&obs, mode)?,
        EstimandKind::Deramp => point_deramp(&obs, mode)?,
        EstimandKind::Collapsed => point_collapsed(&obs, mode)?,
        EstimandKind::MultiVariant => {
            let split = split.expect("checked by caller");
            let winner = winner.or_else(|| split.labels().next()).expect("split is nonempty");
            point_multivariant(&obs, split, winner, mode)?
        }
    })
}

fn from_buckets(
    kind: EstimandKind,
    rows: &[HashMap<String, String>],
    split: Option<&Split>,
    mode: VarianceMode,
) -> CliResult<PointEstimate<f64>> {
    let mut buckets: HashMap<String, BucketSummary<f64>> = HashMap::new();
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2;
        let name = get(row, "bucket").ok_or_else(|| format!("row {line}: missing bucket"))?;
        let count: usize = get(row, "count")
            .ok_or_else(|| format!("row {line}: missing count"))?
            .parse()
            .map_err(|_| format!("row {line}: bad count"))?;
        let mean = number(row, "mean", line)?.ok_or_else(|| format!("row {line}: missing mean"))?;
        let var = number(row, "variance", line)?;
        if buckets.insert(name.to_owned(), BucketSummary::new(count, mean, var)?).is_some() {
            return Err(format!("row {line}: bucket `{name}` given twice").into());
        }
    }
    let take = |name: &str| -> CliResult<BucketSummary<f64>> {
        buckets
            .get(name)
            .cloned()
            .ok_or_else(|| format!("{kind} estimate needs a `{name}` bucket").into())
    };
    Ok(match kind {
        EstimandKind::Progressive | EstimandKind::Collapsed => {
            let mut p = progressive_from_summaries(take("cv2")?, take("v1")?, take("cc")?, mode)?;
            p.kind = kind;
            p
        }
        EstimandKind::RepeatedMaxPower => repeated_from_summaries(take("v1v2")?, take("cc")?, mode)?,
        EstimandKind::Deramp => deramp_from_summaries(take("v1")?, take("c")?, mode)?,
        EstimandKind::MultiVariant => {
            let split = split.expect("checked by caller");
            let variants = split
                .labels()
                .zip(mixture_weights::<f64>(split))
                .map(|(label, w)| Ok((label.to_owned(), w, take(&format!("v1:{label}"))?)))
                .collect::<CliResult<Vec<_>>>()?;
            multivariant_from_summaries(take("cv2")?, variants, take("cc")?, mode)?
        }
    })
}
