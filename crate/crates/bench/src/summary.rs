//! Per-experiment aggregate rows and the `summary.tsv` table.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gnn_es::objectives::ObjectiveKind;

use crate::experiment::{read_run_log, scan_run_logs, Algorithm};
use crate::{io_err, BenchError, Result};

pub const SUMMARY_FILE: &str = "summary.tsv";
const HEADER: &str = "objective\tdim\talgorithm\tmean_best_f\tstd_error\tseeds\tevaluations";

/// Mean final best value over seeds, with its standard error.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub objective: ObjectiveKind,
    pub dim: usize,
    pub algorithm: Algorithm,
    pub mean_best_f: f64,
    /// Sample standard deviation over `√seeds`; zero for a single seed.
    pub std_error: f64,
    pub seeds: usize,
    /// Largest evaluation count used by any seed.
    pub evaluations: u64,
}

impl SummaryRow {
    /// Aggregates `(final best f, evaluations used)` pairs, one per seed.
    pub fn from_runs(
        objective: ObjectiveKind,
        dim: usize,
        algorithm: Algorithm,
        runs: impl IntoIterator<Item = (f64, u64)>,
    ) -> Self {
        let (values, evals): (Vec<f64>, Vec<u64>) = runs.into_iter().unzip();
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            objective,
            dim,
            algorithm,
            mean_best_f: mean,
            std_error,
            seeds: n,
            evaluations: evals.into_iter().max().unwrap_or(0),
        }
    }

    fn key(&self) -> (ObjectiveKind, usize, Algorithm) {
        (self.objective, self.dim, self.algorithm)
    }

    pub fn to_tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:e}\t{:e}\t{}\t{}",
            self.objective, self.dim, self.algorithm, self.mean_best_f, self.std_error, self.seeds, self.evaluations
        )
    }

    pub fn parse_tsv_line(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return None;
        }
        Some(Self {
            objective: f[0].parse().ok()?,
            dim: f[1].parse().ok()?,
            algorithm: f[2].parse().ok()?,
            mean_best_f: f[3].parse().ok()?,
            std_error: f[4].parse().ok()?,
            seeds: f[5].parse().ok()?,
            evaluations: f[6].parse().ok()?,
        })
    }
}

/// Renders rows sorted by (objective, dim, algorithm) under a header line.
pub fn render(rows: &[SummaryRow]) -> String {
    let mut sorted: Vec<&SummaryRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.key());
    let mut out = String::from(HEADER);
    out.push('\n');
    for row in sorted {
        out.push_str(&row.to_tsv_line());
        out.push('\n');
    }
    out
}

pub fn parse(text: &str) -> std::result::Result<Vec<SummaryRow>, String> {
    text.lines()
        .skip_while(|l| *l == HEADER)
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| SummaryRow::parse_tsv_line(l).ok_or_else(|| format!("malformed summary row {}: {l}", i + 1)))
        .collect()
}

/// Replaces rows with the same (objective, dim, algorithm) and keeps the rest.
pub fn merge_into_file(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut table: BTreeMap<_, SummaryRow> = BTreeMap::new();
    if path.exists() {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let existing = parse(&text).map_err(|msg| BenchError::Usage(format!("{}: {msg}", path.display())))?;
        table.extend(existing.into_iter().map(|r| (r.key(), r)));
    }
    table.extend(rows.iter().map(|r| (r.key(), r.clone())));
    let rows: Vec<SummaryRow> = table.into_values().collect();
    fs::write(path, render(&rows)).map_err(io_err(path))
}

/// Rebuilds the summary table of `dir` from its trajectory logs, using the
/// last logged generation of each run.
pub fn summarize_dir(dir: &Path) -> Result<Vec<SummaryRow>> {
    let mut groups: BTreeMap<(ObjectiveKind, usize, Algorithm), Vec<(f64, u64)>> = BTreeMap::new();
    for (path, (objective, dim, algorithm, _)) in scan_run_logs(dir)? {
        let rows = read_run_log(&path)?;
        let last = rows
            .last()
            .ok_or_else(|| BenchError::Usage(format!("{}: empty trajectory log", path.display())))?;
        groups.entry((objective, dim, algorithm)).or_default().push((last.best_f, last.evaluations));
    }
    let rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((o, d, a), runs)| SummaryRow::from_runs(o, d, a, runs))
        .collect();
    let path = dir.join(SUMMARY_FILE);
    fs::write(&path, render(&rows)).map_err(io_err(&path))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_standard_error() {
        let row = SummaryRow::from_runs(ObjectiveKind::Sphere, 2, Algorithm::Xnes, [(1.0, 10), (3.0, 20)]);
        assert_eq!(row.mean_best_f, 2.0);
        // sd = √2, se = √2/√2
        assert!((row.std_error - 1.0).abs() < 1e-15);
        assert_eq!(row.seeds, 2);
        assert_eq!(row.evaluations, 20);
    }

    #[test]
    fn single_seed_has_zero_error() {
        let row = SummaryRow::from_runs(ObjectiveKind::Sphere, 2, Algorithm::Pges, [(0.5, 7)]);
        assert_eq!(row.std_error, 0.0);
    }

    #[test]
    fn tsv_round_trip() {
        let row = SummaryRow::from_runs(ObjectiveKind::Styblinski, 4, Algorithm::GnnXnes, [(-150.1, 100), (-136.3, 90)]);
        let rows = parse(&render(&[row.clone()])).unwrap();
        assert_eq!(rows, vec![row]);
    }

    #[test]
    fn merge_replaces_matching_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(SUMMARY_FILE);
        let a = SummaryRow::from_runs(ObjectiveKind::Sphere, 2, Algorithm::Xnes, [(1.0, 10)]);
        let b = SummaryRow::from_runs(ObjectiveKind::Sphere, 2, Algorithm::Pges, [(2.0, 10)]);
        merge_into_file(&path, &[a, b.clone()]).unwrap();
        let a2 = SummaryRow::from_runs(ObjectiveKind::Sphere, 2, Algorithm::Xnes, [(0.25, 10)]);
        merge_into_file(&path, &[a2.clone()]).unwrap();
        let rows = parse(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(rows, vec![a2, b]);
    }
}
