//! Text tables and figures rendered from metric summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::RunDir;
use crate::error::{Error, Result};
use crate::heatmap::grid_to_pgm;
use crate::metrics::{LocationGrids, MetricsReport, Summary};

/// One row group of the accuracy table.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceSummary {
    pub label: String,
    pub overall: Summary,
    pub by_probe: BTreeMap<String, Summary>,
}

impl FaceSummary {
    pub fn from_report(label: String, report: &MetricsReport) -> Self {
        FaceSummary {
            label,
            overall: report.summary.clone(),
            by_probe: report.by_probe.clone(),
        }
    }
}

fn fmt_opt(v: f64, digits: usize) -> String {
    if v.is_finite() {
        format!("{v:.digits$}")
    } else {
        "-".into()
    }
}

fn contact_cells(s: &Summary) -> [String; 3] {
    let ex = s.e_loc_x.map_or(f64::NAN, |s| s.mean);
    let ey = s.e_loc_y.map_or(f64::NAN, |s| s.mean);
    [
        fmt_opt(s.mean_a_sim(), 4),
        format!(
            "{} ({}, {})",
            fmt_opt(s.mean_e_loc(), 3),
            fmt_opt(ex, 3),
            fmt_opt(ey, 3)
        ),
        if s.e_f_percent.is_some() {
            format!("{:.2}% ({:.3} N)", s.mean_e_f_percent(), s.mean_e_f_newtons())
        } else {
            "-".into()
        },
    ]
}

/// Accuracy table with one block per run and one row per probe kind plus an
/// `all` row carrying the non-contact accuracy.
pub fn table1_text(rows: &[FaceSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:<7} {:>10}  {:<24} {:<20} {:>6}",
        "run", "probe", "Avg. A_sim", "Avg. E_loc (x, y)", "Avg. E_f", "A_non"
    );
    for row in rows {
        let probes = ["single", "dual", "triple"];
        for p in probes {
            if let Some(s) = row.by_probe.get(p) {
                let [a, l, f] = contact_cells(s);
                let _ = writeln!(out, "{:<24} {:<7} {:>10}  {:<24} {:<20} {:>6}", row.label, p, a, l, f, "");
            }
        }
        let [a, l, f] = contact_cells(&row.overall);
        let non = row.overall.a_non.map_or("-".into(), |v| format!("{v:.3}"));
        let _ = writeln!(out, "{:<24} {:<7} {:>10}  {:<24} {:<20} {:>6}", row.label, "all", a, l, f, non);
    }
    out
}

fn finite_max(v: &[f64]) -> f64 {
    v.iter().copied().filter(|x| x.is_finite()).fold(0.0, f64::max)
}

/// P2 renderings of the per-location grids. Accuracy maps are bright where
/// accurate; error maps are bright where the error is largest.
pub fn location_figures(grids: &LocationGrids) -> Vec<(String, String)> {
    let g = grids.grid;
    let mut out = vec![(
        "location_a_sim".to_string(),
        grid_to_pgm(&grids.a_sim, g, "per-location mean A_sim, 0..1", 0.0, 1.0),
    )];
    for (name, values) in [
        ("location_e_loc", &grids.e_loc),
        ("location_e_f_percent", &grids.e_f_percent),
    ] {
        let hi = finite_max(values);
        out.push((
            name.to_string(),
            grid_to_pgm(values, g, &format!("per-location mean {}, 0..{hi:.6}", &name[9..]), 0.0, hi),
        ));
    }
    out
}

/// What `write_report` needs from a `summary.json`.
#[derive(Deserialize)]
struct SummaryFile {
    summary: Summary,
    by_probe: BTreeMap<String, Summary>,
    locations: serde_json::Value,
}

fn grids_from_json(v: &serde_json::Value) -> Option<LocationGrids> {
    let grid = v.get("grid")?.as_u64()? as usize;
    let col = |k: &str| -> Option<Vec<f64>> {
        v.get(k)?
            .as_array()?
            .iter()
            .map(|x| Some(x.as_f64().unwrap_or(f64::NAN)))
            .collect()
    };
    Some(LocationGrids {
        grid,
        a_sim: col("a_sim")?,
        e_loc: col("e_loc")?,
        e_f_percent: col("e_f_percent")?,
        e_f_newtons: col("e_f_newtons")?,
    })
}

fn find_summaries(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            // never descend into a previous report
            if p.file_name().is_some_and(|n| n == "report") && dir == root {
                continue;
            }
            find_summaries(root, &p, out)?;
        } else if p.file_name().is_some_and(|n| n == "summary.json") {
            out.push(p);
        }
    }
    Ok(())
}

/// Render every `summary.json` under `run` into `out`: `table1.txt` plus the
/// per-location P2 figures of each summary. Returns the number of runs found.
pub fn write_report(run: &Path, out: &Path) -> Result<usize> {
    let mut found = Vec::new();
    find_summaries(run, run, &mut found)?;
    if found.is_empty() {
        return Err(Error::Usage(format!("no summary.json under {}", run.display())));
    }
    let mut dir = RunDir::create(out)?;
    let mut rows = Vec::new();
    for path in &found {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SummaryFile = serde_json::from_str(&text)?;
        let label = path
            .parent()
            .and_then(|p| p.strip_prefix(run).ok())
            .map(|p| p.to_string_lossy().replace('\\', "/"))
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| ".".into());
        if let Some(grids) = grids_from_json(&file.locations) {
            for (name, pgm) in location_figures(&grids) {
                dir.write(&format!("{}_{name}.pgm", label.replace('/', "_")), pgm)?;
            }
        }
        rows.push(FaceSummary {
            label,
            overall: file.summary,
            by_probe: file.by_probe,
        });
    }
    dir.write("table1.txt", table1_text(&rows))?;
    dir.finish()?;
    Ok(rows.len())
}
