//! Tidy result rows and their per-(method, n, metric) aggregates.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const RECORD_HEADER: [&str; 7] = ["experiment", "method", "n", "n_q", "seed", "metric", "value"];
pub const AGGREGATE_HEADER: [&str; 8] = ["experiment", "method", "n", "n_q", "metric", "count", "mean", "se"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub method: String,
    pub n: usize,
    pub n_q: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// A repetition that could not be completed. Kept out of the record table so
/// every metric value there stays finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub experiment: String,
    pub method: String,
    pub n: usize,
    pub n_q: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub experiment: String,
    pub method: String,
    pub n: usize,
    pub n_q: usize,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(count)`; zero for a single value.
    pub se: f64,
}

pub fn write_records<W: Write>(records: &[RunRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(RECORD_HEADER)?;
    for r in records {
        if !r.value.is_finite() {
            return Err(HarnessError::Config(format!(
                "non-finite {} for {} (n = {}, seed = {})",
                r.metric, r.method, r.n, r.seed
            )));
        }
        wtr.serialize((&r.experiment, &r.method, r.n, r.n_q, r.seed, &r.metric, r.value))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    if rdr.headers()?.iter().ne(RECORD_HEADER) {
        return Err(HarnessError::Config(format!(
            "record header must be {}",
            RECORD_HEADER.join(",")
        )));
    }
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_failures<W: Write>(failures: &[RunFailure], w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(["experiment", "method", "n", "n_q", "seed", "message"])?;
    for f in failures {
        wtr.serialize(f)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Mean and standard error per `(experiment, method, n, n_q, metric)`, in
/// key order.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(&str, &str, usize, usize, &str), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((&r.experiment, &r.method, r.n, r.n_q, &r.metric))
            .or_default()
            .push(r.value);
    }
    groups
        .into_iter()
        .map(|((experiment, method, n, n_q, metric), values)| {
            let (mean, se) = mean_se(&values);
            AggregateRow {
                experiment: experiment.into(),
                method: method.into(),
                n,
                n_q,
                metric: metric.into(),
                count: values.len(),
                mean,
                se,
            }
        })
        .collect()
}

pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn write_aggregates<W: Write>(rows: &[AggregateRow], w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_aggregates<R: Read>(r: R) -> Result<Vec<AggregateRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Recomputes the aggregates from the serialized records and checks that
/// they reproduce the serialized aggregate table exactly.
pub fn verify_aggregates(records_csv: &[u8], aggregate_csv: &[u8]) -> Result<()> {
    let records = read_records(records_csv)?;
    let mut expected = Vec::new();
    write_aggregates(&aggregate(&records), &mut expected)?;
    if expected != aggregate_csv {
        let want = read_aggregates(expected.as_slice())?;
        let got = read_aggregates(aggregate_csv)?;
        let detail = match want.iter().zip(&got).find(|(a, b)| a != b) {
            Some((a, b)) => format!("expected {a:?}, found {b:?}"),
            None => format!("{} rows expected, {} found", want.len(), got.len()),
        };
        return Err(HarnessError::AggregateMismatch(detail));
    }
    Ok(())
}

/// Values of one `(method, n, metric)` group, in record order.
pub fn values(records: &[RunRecord], method: &str, n: usize, metric: &str) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.method == method && r.n == n && r.metric == metric)
        .map(|r| r.value)
        .collect()
}
