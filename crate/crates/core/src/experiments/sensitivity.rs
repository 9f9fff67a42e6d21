//! Location-wise force sensitivity and its relation to accuracy.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FaceRun, RunDir, StudyConfig};
use crate::datagen::{Dataset, ProbeKind};
use crate::error::{Error, Result};
use crate::heatmap::grid_to_pgm;
use crate::metrics::hull::HullOptions;
use crate::metrics::{force_sensitivity, spearman};
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityParams {
    pub hull: HullOptions,
}

impl Default for SensitivityParams {
    /// Looser stopping rule than the estimator default: the map only needs
    /// ranks.
    fn default() -> Self {
        SensitivityParams {
            hull: HullOptions {
                rel_tol: 0.03,
                min_rays: 500,
                max_rays: 20_000,
                ..HullOptions::default()
            },
        }
    }
}

/// Force sensitivity of every pixel from its single-contact records, row
/// major; NaN where a pixel has fewer than ten records.
pub fn sensitivity_map(dataset: &Dataset, grid: usize, opts: &HullOptions) -> Result<Vec<f64>> {
    let mut by_loc: Vec<(Vec<Vec<f64>>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); grid * grid];
    for r in dataset.records.iter().filter(|r| r.kind() == ProbeKind::Single) {
        let c = r.anchor().expect("single-contact records have an anchor");
        if !c.is_valid(grid) {
            return Err(Error::Usage(format!("record {} lies off the {grid}x{grid} grid", r.case_id)));
        }
        let slot = &mut by_loc[c.index(grid)];
        slot.0.push(r.hall.values.to_vec());
        slot.1.push(r.total_force());
    }
    by_loc
        .par_iter()
        .enumerate()
        .map(|(i, (signals, forces))| {
            if signals.len() < 10 {
                return Ok(f64::NAN);
            }
            let opts = HullOptions {
                seed: derive_seed(opts.seed, &format!("location/{i}")),
                ..opts.clone()
            };
            Ok(force_sensitivity(signals, forces, &opts)?.delta)
        })
        .collect()
}

/// Largest relative difference between a pixel and its mirror image across
/// the vertical centre line, `|a - b| / mean(a, b)`.
pub fn symmetry_error(delta: &[f64], grid: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for y in 0..grid {
        for x in 0..grid / 2 {
            let a = delta[y * grid + x];
            let b = delta[y * grid + (grid - 1 - x)];
            if a.is_finite() && b.is_finite() && a + b > 0.0 {
                worst = worst.max((a - b).abs() / (0.5 * (a + b)));
            }
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub face: u8,
    pub grid: usize,
    pub delta: Vec<f64>,
    /// Spearman rank correlation of delta with each per-location test metric.
    pub spearman: BTreeMap<String, f64>,
    pub symmetry_error: f64,
}

impl SensitivityResult {
    pub fn write(&self, dir: &mut RunDir) -> Result<()> {
        let prefix = format!("sensitivity/face{}", self.face);
        dir.write(&format!("{prefix}/summary.json"), serde_json::to_string_pretty(self)? + "\n")?;
        let hi = self.delta.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
        dir.write(
            &format!("{prefix}/delta.pgm"),
            grid_to_pgm(&self.delta, self.grid, &format!("force sensitivity, 0..{hi:.6e}"), 0.0, hi),
        )
    }
}

fn paired(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    a.iter()
        .zip(b)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(x, y)| (*x, *y))
        .unzip()
}

/// Sensitivity map of `run`'s dataset, correlated with its test metrics.
pub fn run_sensitivity(cfg: &StudyConfig, run: &FaceRun, params: &SensitivityParams) -> Result<SensitivityResult> {
    let grid = cfg.twin.object.pixel_grid;
    let opts = HullOptions {
        seed: derive_seed(cfg.seed, &format!("sensitivity/face{}", run.face)),
        ..params.hull.clone()
    };
    let delta = sensitivity_map(&run.dataset, grid, &opts)?;
    let loc = &run.test.locations;
    let mut rho = BTreeMap::new();
    for (name, metric) in [("a_sim", &loc.a_sim), ("e_loc", &loc.e_loc), ("e_f_percent", &loc.e_f_percent)] {
        let (d, m) = paired(&delta, metric);
        rho.insert(name.to_string(), spearman(&d, &m).unwrap_or(f64::NAN));
    }
    Ok(SensitivityResult {
        face: run.face,
        grid,
        symmetry_error: symmetry_error(&delta, grid),
        delta,
        spearman: rho,
    })
}
