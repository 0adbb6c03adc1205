use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{csv_err, io, BenchError, Result};
use crate::run::{read_summary, summary_path, SummaryRow};
use crate::suite::Method;

/// Gap marker for cells without data.
pub const NA: &str = "NA";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestConfigRow {
    pub instance: String,
    pub n_objects: usize,
    pub n_knapsacks: usize,
    pub search_space: f64,
    pub method: Method,
    pub selection: String,
    pub chi: usize,
    pub n_epochs: usize,
    pub alpha: f64,
    pub beta: f64,
    pub runs: usize,
    pub v: f64,
    pub r: String,
    pub mean_n_f: f64,
    /// `mean_n_f / M^N`.
    pub exploration_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapRow {
    pub method: Method,
    pub chi: usize,
    pub n_epochs: usize,
    pub instances: usize,
    pub mean_valid: String,
    pub mean_r: String,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io(path))
}

/// `best / optimal` for a valid run with a known, nonzero optimum.
pub fn ratio(row: &SummaryRow) -> Option<f64> {
    match (row.valid, row.best_cost, row.optimal_cost) {
        (true, Some(c), Some(opt)) if opt != 0.0 => Some(c / opt),
        _ => None,
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn fmt(x: Option<f64>) -> String {
    x.map_or_else(|| NA.to_string(), |v| v.to_string())
}

fn same_cell(a: &SummaryRow, b: &SummaryRow) -> bool {
    a.selection == b.selection
        && a.chi == b.chi
        && a.n_epochs == b.n_epochs
        && a.alpha.to_bits() == b.alpha.to_bits()
        && a.beta.to_bits() == b.beta.to_bits()
}

/// Per (instance, method): the cell with the most valid runs, ties broken by the higher
/// mean ratio, then by the earlier cell.
pub fn best_configs(rows: &[SummaryRow]) -> Vec<BestConfigRow> {
    let keys: BTreeSet<(String, Method)> = rows.iter().map(|r| (r.instance.clone(), r.method)).collect();
    let mut out = Vec::new();
    for (instance, method) in keys {
        let mine: Vec<&SummaryRow> = rows.iter().filter(|r| r.instance == instance && r.method == method).collect();
        let mut cells: Vec<Vec<&SummaryRow>> = Vec::new();
        for r in mine {
            match cells.iter_mut().find(|c| same_cell(c[0], r)) {
                Some(c) => c.push(r),
                None => cells.push(vec![r]),
            }
        }
        let scored = cells.iter().map(|c| {
            let valid = c.iter().filter(|r| r.valid).count();
            (c, valid, mean(c.iter().filter_map(|r| ratio(r))))
        });
        let mut best: Option<(&Vec<&SummaryRow>, usize, Option<f64>)> = None;
        for (c, valid, r) in scored {
            let better = match &best {
                None => true,
                Some((bc, bv, br)) => {
                    let (fv, bfv) = (valid as f64 / c.len() as f64, *bv as f64 / bc.len() as f64);
                    fv > bfv || (fv == bfv && r.unwrap_or(f64::NEG_INFINITY) > br.unwrap_or(f64::NEG_INFINITY))
                }
            };
            if better {
                best = Some((c, valid, r));
            }
        }
        let (c, valid, r) = best.expect("non-empty group");
        let first = c[0];
        let mean_n_f = mean(c.iter().map(|r| r.n_f as f64)).unwrap_or(0.0);
        out.push(BestConfigRow {
            instance,
            n_objects: first.n_objects,
            n_knapsacks: first.n_knapsacks,
            search_space: first.search_space,
            method,
            selection: first.selection.clone(),
            chi: first.chi,
            n_epochs: first.n_epochs,
            alpha: first.alpha,
            beta: first.beta,
            runs: c.len(),
            v: valid as f64 / c.len() as f64,
            r: fmt(r),
            mean_n_f,
            exploration_ratio: mean_n_f / first.search_space,
        });
    }
    out
}

/// `(chi x n_epochs)` grids per GEO encoding: per-instance means (other hyperparameters
/// pooled), then averaged over instances. Missing cells are written as [`NA`].
pub fn heatmap(rows: &[SummaryRow]) -> Vec<HeatmapRow> {
    let geo: Vec<&SummaryRow> = rows.iter().filter(|r| r.method.is_geo()).collect();
    let chis: BTreeSet<usize> = geo.iter().map(|r| r.chi).collect();
    let epochs: BTreeSet<usize> = geo.iter().map(|r| r.n_epochs).collect();
    let instances: BTreeSet<&str> = geo.iter().map(|r| r.instance.as_str()).collect();
    let mut out = Vec::new();
    for method in [Method::GeoBinary, Method::GeoInteger] {
        for &chi in &chis {
            for &n_epochs in &epochs {
                let (mut valids, mut ratios) = (Vec::new(), Vec::new());
                for inst in &instances {
                    let cell: Vec<&&SummaryRow> = geo
                        .iter()
                        .filter(|r| r.method == method && r.chi == chi && r.n_epochs == n_epochs && r.instance == *inst)
                        .collect();
                    if cell.is_empty() {
                        continue;
                    }
                    valids.push(cell.iter().filter(|r| r.valid).count() as f64 / cell.len() as f64);
                    if let Some(r) = mean(cell.iter().filter_map(|r| ratio(r))) {
                        ratios.push(r);
                    }
                }
                out.push(HeatmapRow {
                    method,
                    chi,
                    n_epochs,
                    instances: valids.len(),
                    mean_valid: fmt(mean(valids)),
                    mean_r: fmt(mean(ratios)),
                });
            }
        }
    }
    out
}

/// Reads `summary.csv` under `results` and writes `best_configs.csv` and `heatmap.csv` to
/// `out`. With no results the tables are written empty and an error is returned.
pub fn cmd_report(results: &Path, out: &Path) -> Result<(Vec<BestConfigRow>, Vec<HeatmapRow>)> {
    let path = summary_path(results);
    let rows = if path.exists() { read_summary(&path)? } else { Vec::new() };
    let best = best_configs(&rows);
    let heat = heatmap(&rows);
    fs::create_dir_all(out).map_err(io(out))?;
    write_with_header::<BestConfigRow>(&out.join("best_configs.csv"), &best, BEST_HEADER)?;
    write_with_header::<HeatmapRow>(&out.join("heatmap.csv"), &heat, HEATMAP_HEADER)?;
    if rows.is_empty() {
        return Err(BenchError::NoResults(results.to_path_buf()));
    }
    Ok((best, heat))
}

const BEST_HEADER: &[&str] = &[
    "instance", "n_objects", "n_knapsacks", "search_space", "method", "selection", "chi", "n_epochs", "alpha", "beta",
    "runs", "v", "r", "mean_n_f", "exploration_ratio",
];
const HEATMAP_HEADER: &[&str] = &["method", "chi", "n_epochs", "instances", "mean_valid", "mean_r"];

/// Like [`write_csv`], but an empty table still gets its header line.
fn write_with_header<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    if !rows.is_empty() {
        return write_csv(path, rows);
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    w.flush().map_err(io(path))
}
