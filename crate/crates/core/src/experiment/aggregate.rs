//! Merges the return curves of one or more run directories into a
//! median-and-quartiles CSV.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::run::{csv_err, RunError, RETURNS_FILE};
use crate::stats;

#[derive(Debug, thiserror::Error)]
pub enum AggregateError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("no runs to aggregate")]
    Empty,
    #[error("{path}: seed {seed} has non-contiguous episode numbers")]
    Gaps { path: PathBuf, seed: u64 },
    #[error("episode counts differ: {}", .0.join(", "))]
    Mismatch(Vec<String>),
}

#[derive(Debug, Deserialize)]
struct Row {
    seed: u64,
    episode: usize,
    #[serde(rename = "return")]
    ret: f64,
}

/// One seed's curve and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub source: PathBuf,
    pub seed: u64,
    pub returns: Vec<f64>,
}

/// Reads every seed curve in `dir/returns.csv`.
pub fn read_curves(dir: &Path) -> Result<Vec<Curve>, AggregateError> {
    let path = dir.join(RETURNS_FILE);
    let mut reader = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let mut by_seed: BTreeMap<u64, Vec<(usize, f64)>> = BTreeMap::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| csv_err(&path, e))?;
        by_seed
            .entry(row.seed)
            .or_default()
            .push((row.episode, row.ret));
    }
    by_seed
        .into_iter()
        .map(|(seed, mut rows)| {
            rows.sort_by_key(|r| r.0);
            if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
                return Err(AggregateError::Gaps {
                    path: path.clone(),
                    seed,
                });
            }
            Ok(Curve {
                source: dir.to_path_buf(),
                seed,
                returns: rows.into_iter().map(|r| r.1).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub episode: usize,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub n_seeds: usize,
}

/// Per-episode quartiles. `smooth` applies a trailing moving average of that
/// many episodes to each statistic (`None` or `Some(1)` leaves them raw).
pub fn aggregate_curves(
    curves: &[Curve],
    smooth: Option<usize>,
) -> Result<Vec<AggregateRow>, AggregateError> {
    let first = curves.first().ok_or(AggregateError::Empty)?;
    let len = first.returns.len();
    if curves.iter().any(|c| c.returns.len() != len) {
        let offenders = curves
            .iter()
            .map(|c| {
                format!(
                    "{} seed {} ({} episodes)",
                    c.source.display(),
                    c.seed,
                    c.returns.len()
                )
            })
            .collect();
        return Err(AggregateError::Mismatch(offenders));
    }
    let mut q25 = Vec::with_capacity(len);
    let mut median = Vec::with_capacity(len);
    let mut q75 = Vec::with_capacity(len);
    for e in 0..len {
        let column: Vec<f64> = curves.iter().map(|c| c.returns[e]).collect();
        q25.push(stats::quantile(&column, 0.25).expect("non-empty"));
        median.push(stats::median(&column).expect("non-empty"));
        q75.push(stats::quantile(&column, 0.75).expect("non-empty"));
    }
    if let Some(w) = smooth.filter(|&w| w > 1) {
        q25 = stats::moving_average(&q25, w);
        median = stats::moving_average(&median, w);
        q75 = stats::moving_average(&q75, w);
    }
    Ok((0..len)
        .map(|e| AggregateRow {
            episode: e,
            q25: q25[e],
            median: median[e],
            q75: q75[e],
            n_seeds: curves.len(),
        })
        .collect())
}

/// Reads every run directory and writes `episode,q25,median,q75,n_seeds`.
pub fn aggregate(
    runs: &[PathBuf],
    out: &Path,
    smooth: Option<usize>,
) -> Result<Vec<AggregateRow>, AggregateError> {
    let mut curves = Vec::new();
    for dir in runs {
        curves.extend(read_curves(dir)?);
    }
    let rows = aggregate_curves(&curves, smooth)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(out)
        .map_err(|e| csv_err(out, e))?;
    w.write_record(["episode", "q25", "median", "q75", "n_seeds"])
        .map_err(|e| csv_err(out, e))?;
    for r in &rows {
        w.write_record([
            r.episode.to_string(),
            r.q25.to_string(),
            r.median.to_string(),
            r.q75.to_string(),
            r.n_seeds.to_string(),
        ])
        .map_err(|e| csv_err(out, e))?;
    }
    w.flush().map_err(|source| RunError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    Ok(rows)
}
