//! Calibration on a coarse lattice of locations, tested on the rest.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{evaluate, select, split, train_face, write_report_files, write_trained, RunDir, StudyConfig, TrainedFace};
use crate::datagen::{generate_face_dataset, Dataset, DatasetRecord, ProbeKind};
use crate::error::{Error, Result};
use crate::geometry::GridCoord;
use crate::metrics::MetricsReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnseenParams {
    /// Seen columns and rows; the seen set is their product.
    pub seen: Vec<u8>,
    /// Share of the non-contact records kept for calibration.
    pub non_contact_fraction: f64,
}

impl Default for UnseenParams {
    fn default() -> Self {
        UnseenParams {
            seen: vec![1, 3, 5, 7, 9],
            non_contact_fraction: 1.0 / 3.0,
        }
    }
}

impl UnseenParams {
    pub fn is_seen(&self, c: GridCoord) -> bool {
        self.seen.contains(&c.x) && self.seen.contains(&c.y)
    }
}

#[derive(Clone, Debug)]
pub struct UnseenResult {
    pub face: u8,
    pub calibration_records: usize,
    pub trained: TrainedFace,
    /// Test split of the seen-location calibration set.
    pub seen: MetricsReport,
    /// Every single-contact record at an unseen location.
    pub unseen: MetricsReport,
}

impl UnseenResult {
    /// Per-location mean E_loc at the unseen locations that have records.
    pub fn unseen_location_e_loc(&self) -> Vec<f64> {
        self.unseen.locations.e_loc.iter().copied().filter(|v| v.is_finite()).collect()
    }

    /// Share of unseen locations whose mean E_loc is at most `limit` pixels.
    pub fn unseen_within(&self, limit: f64) -> f64 {
        let v = self.unseen_location_e_loc();
        if v.is_empty() {
            return f64::NAN;
        }
        v.iter().filter(|&&e| e <= limit).count() as f64 / v.len() as f64
    }

    pub fn write(&self, dir: &mut RunDir) -> Result<()> {
        let prefix = format!("unseen/face{}", self.face);
        write_trained(dir, &prefix, &self.trained)?;
        write_report_files(dir, &format!("{prefix}/seen"), &self.seen)?;
        write_report_files(dir, &format!("{prefix}/unseen"), &self.unseen)?;
        let rows = vec![
            super::FaceSummary::from_report(format!("face{} seen", self.face), &self.seen),
            super::FaceSummary::from_report(format!("face{} unseen", self.face), &self.unseen),
        ];
        dir.write(&format!("{prefix}/table.txt"), super::table1_text(&rows))?;
        dir.write(
            &format!("{prefix}/unseen_within_sqrt2.txt"),
            format!("{:.6}\n", self.unseen_within(std::f64::consts::SQRT_2)),
        )
    }
}

/// Seen singles plus a random share of the non-contact records.
fn calibration_set(dataset: &Dataset, params: &UnseenParams, seed: u64) -> Dataset {
    let mut nc: Vec<&DatasetRecord> = dataset.non_contact().collect();
    let keep = (params.non_contact_fraction * nc.len() as f64).round() as usize;
    nc.shuffle(&mut crate::seed::stream(seed, "unseen/non-contact"));
    let seen = dataset
        .records
        .iter()
        .filter(|r| r.kind() == ProbeKind::Single && r.anchor().is_some_and(|c| params.is_seen(c)));
    Dataset::new(seen.chain(nc.into_iter().take(keep)).cloned().collect())
}

pub fn run_unseen(cfg: &StudyConfig, face: u8, params: &UnseenParams) -> Result<UnseenResult> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&params.non_contact_fraction) || params.seen.is_empty() {
        return Err(Error::Config("unseen study needs seen coordinates and a fraction in [0, 1]".into()));
    }
    let full = generate_face_dataset(face, cfg.scale, &cfg.twin, cfg.seed)?;
    let calib = calibration_set(&full, params, cfg.seed);
    let parts = split(&calib, &cfg.split)?;
    let trained = train_face(
        &calib,
        &parts.train,
        &parts.validation,
        &cfg.model,
        crate::seed::derive_seed(cfg.face_seed(face), "unseen"),
    )?;
    let ranges = cfg.twin.force_ranges()?;
    let mode = cfg.model.match_mode;
    let seen_m = evaluate(&trained.checkpoint, select(&calib, &parts.test), &ranges, mode)?;
    let unseen_recs = full
        .records
        .iter()
        .filter(|r| r.kind() == ProbeKind::Single && r.anchor().is_some_and(|c| !params.is_seen(c)));
    let unseen_m = evaluate(&trained.checkpoint, unseen_recs, &ranges, mode)?;
    if unseen_m.is_empty() {
        return Err(Error::Config("every location is seen; nothing to test".into()));
    }
    Ok(UnseenResult {
        face,
        calibration_records: calib.len(),
        trained,
        seen: MetricsReport::new(seen_m, ranges.grid)?,
        unseen: MetricsReport::new(unseen_m, ranges.grid)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::TwinConfig;

    #[test]
    fn calibration_set_has_seen_singles_and_a_third_of_rest() {
        let twin = TwinConfig::default();
        let ds = generate_face_dataset(4, 0.005, &twin, 1).unwrap();
        let p = UnseenParams::default();
        let c = calibration_set(&ds, &p, 1);
        let singles: Vec<_> = c.records.iter().filter(|r| r.kind() == ProbeKind::Single).collect();
        assert_eq!(singles.len(), 25 * 5);
        assert!(singles.iter().all(|r| p.is_seen(r.anchor().unwrap())));
        let nc = ds.non_contact().count();
        assert_eq!(c.count_kind(ProbeKind::NonContact), (nc as f64 / 3.0).round() as usize);
        assert_eq!(c.count_kind(ProbeKind::Dual) + c.count_kind(ProbeKind::Triple), 0);
        assert_eq!(calibration_set(&ds, &p, 1), c);
    }
}
