//! Median and quartile best-so-far curves across seeds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use std::fs;
use std::path::Path;

use gnn_es::objectives::ObjectiveKind;

use crate::experiment::{read_run_log, scan_run_logs, Algorithm};
use crate::{io_err, Result};

pub const CURVES_FILE: &str = "curves.tsv";
const HEADER: &str = "objective\tdim\talgorithm\tevaluations\tq25\tmedian\tq75\truns";

/// Best-so-far trace of one run: `(evaluations, best f)` pairs in increasing
/// evaluation order.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub objective: ObjectiveKind,
    pub dim: usize,
    pub algorithm: Algorithm,
    pub points: Vec<(u64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub evaluations: u64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub objective: ObjectiveKind,
    pub dim: usize,
    pub algorithm: Algorithm,
    pub runs: usize,
    pub points: Vec<CurvePoint>,
}

impl Trace {
    /// Best value seen after `evals` evaluations. Before the first logged
    /// generation nothing is known, hence `+inf`; after the last one the final
    /// value is carried forward.
    pub fn best_at(&self, evals: u64) -> f64 {
        let idx = self.points.partition_point(|&(e, _)| e <= evals);
        self.points[..idx].iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
    }
}

/// Quantile by linear interpolation between order statistics. `sorted` must
/// be ascending and non-empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let (a, b) = (sorted[lo], sorted[hi]);
    if lo == hi || a == b {
        return a;
    }
    if b.is_infinite() {
        return b;
    }
    a + (pos - lo as f64) * (b - a)
}

/// Groups traces by (objective, dim, algorithm). Within each objective and
/// dimension every algorithm shares one grid, the union of all logged
/// evaluation counts of that group.
pub fn build_curves(traces: &[Trace]) -> Vec<Curve> {
    let mut grids: BTreeMap<(ObjectiveKind, usize), BTreeSet<u64>> = BTreeMap::new();
    let mut groups: BTreeMap<(ObjectiveKind, usize, Algorithm), Vec<&Trace>> = BTreeMap::new();
    for t in traces {
        grids.entry((t.objective, t.dim)).or_default().extend(t.points.iter().map(|p| p.0));
        groups.entry((t.objective, t.dim, t.algorithm)).or_default().push(t);
    }
    groups
        .into_iter()
        .map(|((objective, dim, algorithm), runs)| {
            let points = grids[&(objective, dim)]
                .iter()
                .map(|&evaluations| {
                    let mut values: Vec<f64> = runs.iter().map(|t| t.best_at(evaluations)).collect();
                    values.sort_by(f64::total_cmp);
                    CurvePoint {
                        evaluations,
                        q25: quantile(&values, 0.25),
                        median: quantile(&values, 0.5),
                        q75: quantile(&values, 0.75),
                    }
                })
                .collect();
            Curve { objective, dim, algorithm, runs: runs.len(), points }
        })
        .collect()
}

/// Reads every trajectory log in `dir`.
pub fn load_traces(dir: &Path) -> Result<Vec<Trace>> {
    scan_run_logs(dir)?
        .into_iter()
        .map(|(path, (objective, dim, algorithm, _))| {
            let rows = read_run_log(&path)?;
            Ok(Trace { objective, dim, algorithm, points: rows.iter().map(|r| (r.evaluations, r.best_f)).collect() })
        })
        .collect()
}

/// Builds curves from the logs in `dir` and writes them to `<dir>/curves.tsv`
/// unless another output path is given.
pub fn emit_curves(dir: &Path, out: Option<&Path>) -> Result<Vec<Curve>> {
    let curves = build_curves(&load_traces(dir)?);
    let default = dir.join(CURVES_FILE);
    let out = out.unwrap_or(&default);
    fs::write(out, render(&curves)).map_err(io_err(out))?;
    Ok(curves)
}

pub fn render(curves: &[Curve]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for c in curves {
        for p in &c.points {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:e}\t{:e}\t{:e}\t{}",
                c.objective, c.dim, c.algorithm, p.evaluations, p.q25, p.median, p.q75, c.runs
            )
            .expect("writing to a String cannot fail");
        }
    }
    out
}
