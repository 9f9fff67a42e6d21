//! Per-face accuracy with single, dual and triple contacts.

use rayon::prelude::*;

use super::{run_face, FaceRun, RunDir, StudyConfig};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct Table1Result {
    pub faces: Vec<FaceRun>,
}

impl Table1Result {
    pub fn face(&self, face: u8) -> Option<&FaceRun> {
        self.faces.iter().find(|r| r.face == face)
    }

    pub fn write(&self, dir: &mut RunDir) -> Result<()> {
        for run in &self.faces {
            run.write(dir, &format!("face{}", run.face))?;
        }
        let rows: Vec<_> = self
            .faces
            .iter()
            .map(|r| super::FaceSummary::from_report(format!("face{}", r.face), &r.test))
            .collect();
        dir.write("table1.txt", super::table1_text(&rows))
    }
}

/// Generate, train and test every face of `cfg.faces`. Faces are
/// independent, so they run concurrently; results keep the input order.
pub fn run_table1(cfg: &StudyConfig) -> Result<Table1Result> {
    cfg.validate()?;
    let faces = cfg
        .faces
        .par_iter()
        .map(|&f| run_face(cfg, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(Table1Result { faces })
}
