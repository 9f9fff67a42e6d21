//! Retraining on ever smaller shares of the training split.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{evaluate, run_face, select, train_face, write_report_files, write_trained, FaceRun, RunDir, StudyConfig, TrainedFace};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationParams {
    /// Exponents `k` of the downsampling factors `2^k`.
    pub factors: Vec<u32>,
}

impl Default for AblationParams {
    fn default() -> Self {
        AblationParams {
            factors: (0..=10).collect(),
        }
    }
}

/// The first `ceil(n / 2^k)` training indices in a fixed random order, so
/// that smaller subsets are nested in larger ones. `k = 0` returns `train`
/// unchanged.
pub fn downsample(train: &[usize], k: u32, seed: u64) -> Result<Vec<usize>> {
    let factor = 1usize.checked_shl(k).filter(|&f| f <= train.len()).ok_or_else(|| {
        Error::Usage(format!(
            "downsampling factor 2^{k} exceeds the {} training samples",
            train.len()
        ))
    })?;
    if k == 0 {
        return Ok(train.to_vec());
    }
    let keep = train.len().div_ceil(factor);
    let mut order = train.to_vec();
    order.shuffle(&mut crate::seed::stream(seed, "ablation/order"));
    let mut out = order[..keep].to_vec();
    out.sort_unstable();
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct FactorRun {
    pub k: u32,
    pub train_samples: usize,
    pub trained: TrainedFace,
    pub test: MetricsReport,
}

#[derive(Clone, Debug)]
pub struct AblationResult {
    pub face: u8,
    pub runs: Vec<FactorRun>,
}

impl AblationResult {
    pub fn write(&self, dir: &mut RunDir) -> Result<()> {
        let mut rows = Vec::new();
        let mut counts = String::from("k,factor,train_samples,checkpoint_sha256\n");
        for r in &self.runs {
            let prefix = format!("ablation/face{}/k{:02}", self.face, r.k);
            write_trained(dir, &prefix, &r.trained)?;
            write_report_files(dir, &prefix, &r.test)?;
            rows.push(super::FaceSummary::from_report(format!("2^{}", r.k), &r.test));
            counts.push_str(&format!(
                "{},{},{},{}\n",
                r.k,
                1u64 << r.k,
                r.train_samples,
                r.trained.checkpoint.parameter_sha256()
            ));
        }
        dir.write(&format!("ablation/face{}/factors.csv", self.face), counts)?;
        dir.write(&format!("ablation/face{}/table.txt", self.face), super::table1_text(&rows))
    }
}

/// Retrain `face` once per factor. Validation and test parts stay fixed. A
/// `baseline` run of the same face and config stands in for `k = 0`.
pub fn run_ablation(
    cfg: &StudyConfig,
    face: u8,
    params: &AblationParams,
    baseline: Option<&FaceRun>,
) -> Result<AblationResult> {
    cfg.validate()?;
    let owned;
    let base = match baseline {
        Some(b) if b.face == face => b,
        Some(b) => {
            return Err(Error::Usage(format!(
                "baseline is for face {} but the ablation is on face {face}",
                b.face
            )))
        }
        None => {
            owned = run_face(cfg, face)?;
            &owned
        }
    };
    let ranges = cfg.twin.force_ranges()?;
    let order_seed = crate::seed::derive_seed(cfg.seed, &format!("ablation/face{face}"));
    let mut runs = Vec::new();
    for &k in &params.factors {
        let idx = downsample(&base.split.train, k, order_seed)?;
        let (trained, test) = if k == 0 {
            (base.trained.clone(), base.test.clone())
        } else {
            log::info!("face {face}: ablation 2^{k} on {} samples", idx.len());
            let t = train_face(&base.dataset, &idx, &base.split.validation, &cfg.model, cfg.face_seed(face))?;
            let m = evaluate(
                &t.checkpoint,
                select(&base.dataset, &base.split.test),
                &ranges,
                cfg.model.match_mode,
            )?;
            let report = MetricsReport::new(m, ranges.grid)?;
            (t, report)
        };
        runs.push(FactorRun {
            k,
            train_samples: idx.len(),
            trained,
            test,
        });
    }
    Ok(AblationResult { face, runs })
}
