//! Force heatmaps, model input/output normalisation and the non-contact rule.

use serde::{Deserialize, Serialize};

use crate::datagen::DatasetRecord;
use crate::error::{Error, Result};
use crate::geometry::GridCoord;
use crate::magnetics::{HallFrame, FRAME_LEN};

/// Per-pixel normal force on an `M x M` face grid, row-major with rows
/// indexed by `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub face: u8,
    pub grid: usize,
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(face: u8, grid: usize) -> Self {
        Heatmap {
            face,
            grid,
            values: vec![0.0; grid * grid],
        }
    }

    pub fn from_values(face: u8, grid: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid * grid {
            return Err(Error::Shape(format!(
                "heatmap needs {} values, got {}",
                grid * grid,
                values.len()
            )));
        }
        Ok(Heatmap { face, grid, values })
    }

    pub fn at(&self, coord: GridCoord) -> f64 {
        self.values[coord.index(self.grid)]
    }

    /// Value at zero-based `(column, row)`.
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.grid + col]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Heatmap {
        Heatmap {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Pixels holding a positive force.
    pub fn positive_pixels(&self) -> Vec<GridCoord> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, _)| GridCoord::from_index(i, self.grid))
            .collect()
    }
}

/// Ground-truth heatmap: each contact's force at its pixel, zero elsewhere.
pub fn encode(face: u8, contacts: &[(GridCoord, f64)], grid: usize) -> Result<Heatmap> {
    let mut h = Heatmap::zeros(face, grid);
    for (i, (coord, force)) in contacts.iter().enumerate() {
        if !coord.is_valid(grid) {
            return Err(Error::Usage(format!("contact pixel {coord} off the grid")));
        }
        if contacts[..i].iter().any(|(c, _)| c == coord) {
            return Err(Error::Usage(format!("duplicate contact pixel {coord}")));
        }
        h.values[coord.index(grid)] = *force;
    }
    Ok(h)
}

pub fn encode_record(record: &DatasetRecord, grid: usize) -> Result<Heatmap> {
    encode(record.face, &record.contacts, grid)
}

/// Training-split statistics used to map signals and forces into [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub input_min: [f64; FRAME_LEN],
    pub input_max: [f64; FRAME_LEN],
    /// Largest training force (N); outputs are divided by it.
    pub force_max: f64,
    /// Channels that were constant in training and got a widened range.
    pub degenerate_channels: Vec<usize>,
}

/// Half-width (uT) given to channels that are constant over the training data.
pub const DEGENERATE_HALF_RANGE: f64 = 1.0;

pub fn fit_norm_stats<'a>(records: impl IntoIterator<Item = &'a DatasetRecord>) -> Result<NormStats> {
    let mut lo = [f64::INFINITY; FRAME_LEN];
    let mut hi = [f64::NEG_INFINITY; FRAME_LEN];
    let mut force_max: f64 = 0.0;
    let mut n = 0usize;
    for r in records {
        n += 1;
        for k in 0..FRAME_LEN {
            lo[k] = lo[k].min(r.hall.values[k]);
            hi[k] = hi[k].max(r.hall.values[k]);
        }
        for &(_, f) in &r.contacts {
            force_max = force_max.max(f);
        }
    }
    if n == 0 {
        return Err(Error::Usage("cannot fit normalisation on an empty dataset".into()));
    }
    if !(force_max > 0.0) {
        return Err(Error::Usage("training data holds no positive contact force".into()));
    }
    let mut degenerate = Vec::new();
    for k in 0..FRAME_LEN {
        if !(hi[k] > lo[k]) {
            degenerate.push(k);
            let mid = lo[k];
            lo[k] = mid - DEGENERATE_HALF_RANGE;
            hi[k] = mid + DEGENERATE_HALF_RANGE;
        }
    }
    Ok(NormStats {
        input_min: lo,
        input_max: hi,
        force_max,
        degenerate_channels: degenerate,
    })
}

impl NormStats {
    pub fn normalize_frame(&self, frame: &HallFrame) -> [f64; FRAME_LEN] {
        std::array::from_fn(|k| {
            (frame.values[k] - self.input_min[k]) / (self.input_max[k] - self.input_min[k])
        })
    }

    pub fn denormalize_frame(&self, face: u8, values: &[f64; FRAME_LEN]) -> HallFrame {
        HallFrame {
            face,
            values: std::array::from_fn(|k| {
                self.input_min[k] + values[k] * (self.input_max[k] - self.input_min[k])
            }),
        }
    }

    pub fn normalize_heatmap(&self, h: &Heatmap) -> Heatmap {
        h.scaled(1.0 / self.force_max)
    }

    pub fn denormalize_heatmap(&self, h: &Heatmap) -> Heatmap {
        h.scaled(self.force_max)
    }
}

/// Clamp a normalised model output into [0, 1].
pub fn clamp_unit(h: &mut Heatmap) {
    h.values.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

/// Non-contact threshold: 90 % of the smallest positive contact force among
/// `records` (the training split in the study drivers).
pub fn non_contact_threshold<'a>(records: impl IntoIterator<Item = &'a DatasetRecord>) -> Result<f64> {
    let min = records
        .into_iter()
        .flat_map(|r| r.contacts.iter().map(|c| c.1))
        .filter(|&f| f > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::Usage("no contact records to derive a non-contact threshold".into()));
    }
    Ok(0.9 * min)
}

/// `true` when every pixel is strictly below `threshold`.
pub fn classify_non_contact(heatmap: &Heatmap, threshold: f64) -> bool {
    heatmap.values.iter().all(|&v| v < threshold)
}

/// ASCII PGM (P2) rendering of a grid; values are mapped linearly from
/// `[lo, hi]` onto `0..=255`. Row 1 of the grid is the first image row.
pub fn grid_to_pgm(values: &[f64], grid: usize, comment: &str, lo: f64, hi: f64) -> String {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P2\n# {comment}\n{grid} {grid}\n255\n");
    for row in values.chunks(grid) {
        let line: Vec<String> = row
            .iter()
            .map(|v| {
                let g = if v.is_finite() {
                    (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8
                } else {
                    0
                };
                g.to_string()
            })
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// P2 export of a force heatmap with `force_scale` newtons mapped to white.
pub fn heatmap_to_pgm(h: &Heatmap, force_scale: f64) -> String {
    grid_to_pgm(
        &h.values,
        h.grid,
        &format!("face {} force_scale {:.6} N", h.face, force_scale),
        0.0,
        force_scale,
    )
}
