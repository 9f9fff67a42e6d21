//! Synthetic data-collection campaign.
//!
//! Each face is probed with single, dual and triple contact probes. A case is
//! one probe placement; during a case the probe indents the shell along a
//! triangle wave and the face's Hall frame is sampled together with the
//! force a load cell would report. A block of non-contact frames is recorded
//! at rest.

mod io;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deformation::{displace_by_depth, force_from_depth, DeformationParams, DepthRange, Indentation};
use crate::error::{Error, Result};
use crate::geometry::{default_config, GridCoord, ObjectConfig};
use crate::magnetics::{read_frame, DipoleSet, FieldScope, HallFrame, SensorModel, FRAME_LEN};
use crate::seed;

pub use io::{read_dataset, read_dataset_str, write_dataset, write_dataset_string, CSV_HEADER};

/// Samples per case at scale 1.
pub const SAMPLES_PER_CASE: usize = 1000;
/// Non-contact samples per face at scale 1.
pub const NON_CONTACT_SAMPLES: usize = 3060;
/// Resolution of the simulated load cell label (N); rounding error is at most half of it.
pub const FORCE_QUANTUM: f64 = 0.24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProbeKind {
    NonContact,
    Single,
    Dual,
    Triple,
}

impl ProbeKind {
    pub fn contact_count(self) -> usize {
        match self {
            ProbeKind::NonContact => 0,
            ProbeKind::Single => 1,
            ProbeKind::Dual => 2,
            ProbeKind::Triple => 3,
        }
    }

    pub fn from_count(n: usize) -> Option<Self> {
        Some(match n {
            0 => ProbeKind::NonContact,
            1 => ProbeKind::Single,
            2 => ProbeKind::Dual,
            3 => ProbeKind::Triple,
            _ => return None,
        })
    }

    fn prefix(self) -> &'static str {
        match self {
            ProbeKind::NonContact => "nc",
            ProbeKind::Single => "p1",
            ProbeKind::Dual => "p2",
            ProbeKind::Triple => "p3",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProbeKind::NonContact => "none",
            ProbeKind::Single => "single",
            ProbeKind::Dual => "dual",
            ProbeKind::Triple => "triple",
        }
    }
}

/// A rigid probe with one to three tips.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub kind: ProbeKind,
    /// Tip offsets from the anchor pixel, in pixels.
    pub offsets: Vec<(i32, i32)>,
}

impl Probe {
    pub fn single() -> Self {
        Probe {
            kind: ProbeKind::Single,
            offsets: vec![(0, 0)],
        }
    }

    pub fn dual() -> Self {
        Probe {
            kind: ProbeKind::Dual,
            offsets: vec![(0, 0), (0, 2)],
        }
    }

    pub fn triple() -> Self {
        Probe {
            kind: ProbeKind::Triple,
            offsets: vec![(0, 0), (2, 0), (0, 2)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.kind.contact_count();
        if n == 0 || self.offsets.len() != n {
            return Err(Error::Config(format!(
                "{} probe needs {n} offsets, has {}",
                self.kind.name(),
                self.offsets.len()
            )));
        }
        for (i, a) in self.offsets.iter().enumerate() {
            if self.offsets[..i].contains(a) {
                return Err(Error::Config("probe offsets must be distinct".into()));
            }
        }
        Ok(())
    }
}

/// Anchor pixels for the multi-contact probes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageSpec {
    pub dual_anchors: Vec<GridCoord>,
    pub triple_anchors: Vec<GridCoord>,
}

impl CoverageSpec {
    /// 26 dual and 14 triple placements.
    ///
    /// Dual anchors: odd columns on rows 1, 3, 5, 7, plus columns 2, 5, 8 on
    /// rows 2 and 6. Triple anchors: columns 1, 3, 5, 7 on rows 1, 4, 7, plus
    /// (8,2) and (8,8).
    pub fn standard() -> Self {
        let mut dual = Vec::new();
        for y in [1, 3, 5, 7] {
            for x in [1, 3, 5, 7, 9] {
                dual.push(GridCoord::new(x, y));
            }
        }
        for y in [2, 6] {
            for x in [2, 5, 8] {
                dual.push(GridCoord::new(x, y));
            }
        }
        let mut triple = Vec::new();
        for y in [1, 4, 7] {
            for x in [1, 3, 5, 7] {
                triple.push(GridCoord::new(x, y));
            }
        }
        triple.push(GridCoord::new(8, 2));
        triple.push(GridCoord::new(8, 8));
        CoverageSpec {
            dual_anchors: dual,
            triple_anchors: triple,
        }
    }

    fn anchors(&self, kind: ProbeKind) -> &[GridCoord] {
        match kind {
            ProbeKind::Dual => &self.dual_anchors,
            ProbeKind::Triple => &self.triple_anchors,
            _ => &[],
        }
    }
}

/// One probe placement on one face.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseDescriptor {
    pub case_id: String,
    pub face: u8,
    pub kind: ProbeKind,
    pub coords: Vec<GridCoord>,
}

impl CaseDescriptor {
    pub fn non_contact(face: u8) -> Self {
        CaseDescriptor {
            case_id: "nc-00".into(),
            face,
            kind: ProbeKind::NonContact,
            coords: Vec::new(),
        }
    }

    fn contact(face: u8, kind: ProbeKind, anchor: GridCoord, coords: Vec<GridCoord>) -> Self {
        CaseDescriptor {
            case_id: format!("{}-x{:02}-y{:02}", kind.prefix(), anchor.x, anchor.y),
            face,
            kind,
            coords,
        }
    }
}

/// Probe placements on `face`; multi-contact placements with a tip off the
/// grid are dropped.
pub fn enumerate_cases(
    face: u8,
    probe: &Probe,
    coverage: &CoverageSpec,
    grid: usize,
) -> Result<Vec<CaseDescriptor>> {
    probe.validate()?;
    let anchors: Vec<GridCoord> = match probe.kind {
        ProbeKind::Single => GridCoord::all(grid).collect(),
        kind => {
            let a = coverage.anchors(kind);
            if a.is_empty() {
                return Err(Error::Config(format!(
                    "no coverage anchors for the {} probe",
                    kind.name()
                )));
            }
            a.to_vec()
        }
    };
    Ok(anchors
        .into_iter()
        .filter_map(|anchor| {
            let coords = probe
                .offsets
                .iter()
                .map(|&(dx, dy)| anchor.offset(dx, dy, grid))
                .collect::<Option<Vec<_>>>()?;
            Some(CaseDescriptor::contact(face, probe.kind, anchor, coords))
        })
        .collect())
}

/// All contact cases of a face: single, then dual, then triple.
pub fn all_contact_cases(face: u8, coverage: &CoverageSpec, grid: usize) -> Result<Vec<CaseDescriptor>> {
    let mut out = Vec::new();
    for probe in [Probe::single(), Probe::dual(), Probe::triple()] {
        out.extend(enumerate_cases(face, &probe, coverage, grid)?);
    }
    Ok(out)
}

/// Loading schedule of one case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepProtocol {
    pub samples_per_case: usize,
    pub depth: DepthRange,
    /// Full load/unload cycles per case.
    pub cycles: usize,
    /// Sample instants are jittered by up to half a sampling period.
    pub time_jitter: bool,
    /// Round the load-cell total to multiples of this many newtons.
    pub force_quantum: Option<f64>,
}

impl Default for SweepProtocol {
    fn default() -> Self {
        SweepProtocol {
            samples_per_case: SAMPLES_PER_CASE,
            depth: DepthRange::default(),
            cycles: 5,
            time_jitter: true,
            force_quantum: Some(FORCE_QUANTUM),
        }
    }
}

impl SweepProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_case < 1 || self.cycles < 1 {
            return Err(Error::Config("sweep needs at least one sample and one cycle".into()));
        }
        if !(self.depth.min >= 0.0 && self.depth.min < self.depth.max) {
            return Err(Error::Config(format!(
                "sweep depth range [{}, {}] is empty",
                self.depth.min, self.depth.max
            )));
        }
        Ok(())
    }

    /// Indentation depth at normalised time `t` in [0, 1).
    pub fn depth_at(&self, t: f64) -> f64 {
        let phase = (t * self.cycles as f64).rem_euclid(1.0);
        self.depth.min + (self.depth.max - self.depth.min) * triangle(phase)
    }
}

/// Unit triangle wave: 0 at phase 0, 1 at phase 1/2.
pub fn triangle(phase: f64) -> f64 {
    let p = phase.rem_euclid(1.0);
    if p < 0.5 {
        2.0 * p
    } else {
        2.0 - 2.0 * p
    }
}

/// Everything the simulator needs, serialisable as one JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwinConfig {
    pub object: ObjectConfig,
    pub deformation: DeformationParams,
    pub sensor: SensorModel,
    pub sweep: SweepProtocol,
    pub coverage: CoverageSpec,
    pub non_contact_samples: usize,
}

impl Default for TwinConfig {
    fn default() -> Self {
        let object = default_config();
        let deformation = DeformationParams::default_for(&object);
        TwinConfig {
            object,
            deformation,
            sensor: SensorModel::default(),
            sweep: SweepProtocol::default(),
            coverage: CoverageSpec::standard(),
            non_contact_samples: NON_CONTACT_SAMPLES,
        }
    }
}

impl TwinConfig {
    pub fn validate(&self) -> Result<()> {
        let v = crate::geometry::validate(&self.object);
        if !v.is_empty() {
            let msgs: Vec<String> = v.iter().map(|v| v.to_string()).collect();
            return Err(Error::Config(msgs.join("; ")));
        }
        self.deformation.validate(&self.object)?;
        self.sweep.validate()?;
        if self.sweep.depth.max > self.deformation.max_depth {
            return Err(Error::Config("sweep depth exceeds max_depth".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TwinConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn force_ranges(&self) -> Result<crate::deformation::ForceRangeMap> {
        crate::deformation::ForceRangeMap::compute(&self.object, &self.deformation, self.sweep.depth)
    }
}

/// One synchronised (Hall frame, force label) sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub face: u8,
    pub case_id: String,
    pub sample: usize,
    /// Up to three `(pixel, force N)` labels.
    pub contacts: Vec<(GridCoord, f64)>,
    pub hall: HallFrame,
}

impl DatasetRecord {
    pub fn kind(&self) -> ProbeKind {
        ProbeKind::from_count(self.contacts.len()).expect("at most three contacts per record")
    }

    pub fn is_non_contact(&self) -> bool {
        self.contacts.is_empty()
    }

    /// Pixel used to bin the record in location-wise summaries.
    pub fn anchor(&self) -> Option<GridCoord> {
        self.contacts.first().map(|c| c.0)
    }

    pub fn total_force(&self) -> f64 {
        self.contacts.iter().map(|c| c.1).sum()
    }
}

/// Records of one or more cases, ordered by `(case_id, sample)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn new(mut records: Vec<DatasetRecord>) -> Self {
        records.sort_by(|a, b| (&a.case_id, a.sample).cmp(&(&b.case_id, b.sample)));
        Dataset { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count_kind(&self, kind: ProbeKind) -> usize {
        self.records.iter().filter(|r| r.kind() == kind).count()
    }

    pub fn non_contact(&self) -> impl Iterator<Item = &DatasetRecord> {
        self.records.iter().filter(|r| r.is_non_contact())
    }

    /// Per-channel `max - min` over all records.
    pub fn channel_ranges(&self) -> [f64; FRAME_LEN] {
        let mut lo = [f64::INFINITY; FRAME_LEN];
        let mut hi = [f64::NEG_INFINITY; FRAME_LEN];
        for r in &self.records {
            for k in 0..FRAME_LEN {
                lo[k] = lo[k].min(r.hall.values[k]);
                hi[k] = hi[k].max(r.hall.values[k]);
            }
        }
        std::array::from_fn(|k| if self.is_empty() { 0.0 } else { hi[k] - lo[k] })
    }

    /// Channel-wise mean of the non-contact frames.
    pub fn rest_frame(&self) -> Option<HallFrame> {
        let rest: Vec<&DatasetRecord> = self.non_contact().collect();
        let first = rest.first()?;
        let mut sum = [0.0; FRAME_LEN];
        for r in &rest {
            for (s, v) in sum.iter_mut().zip(&r.hall.values) {
                *s += v;
            }
        }
        Some(HallFrame {
            face: first.face,
            values: sum.map(|s| s / rest.len() as f64),
        })
    }

    /// Canonical CSV hash of the dataset.
    pub fn sha256(&self) -> String {
        seed::sha256_hex(write_dataset_string(self).as_bytes())
    }
}

/// Round to the 6 decimals kept by the dataset file so that in-memory
/// records survive a write/read cycle unchanged.
pub(crate) fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn round_frame(frame: HallFrame) -> HallFrame {
    HallFrame {
        face: frame.face,
        values: frame.values.map(round6),
    }
}

/// Samples per case after scaling; never below one.
pub fn scaled_count(full_count: usize, scale: f64) -> usize {
    ((full_count as f64 * scale).round() as usize).max(1)
}

/// Load-cell label for a probe: total tip force, optionally quantised, split
/// evenly over the tips.
pub fn split_probe_force(tip_forces: &[f64], quantum: Option<f64>) -> f64 {
    let total: f64 = tip_forces.iter().sum();
    let measured = match quantum {
        Some(q) if q > 0.0 => ((total / q).round() * q).max(0.0),
        _ => total,
    };
    measured / tip_forces.len() as f64
}

/// Records for one case. Noise and timing jitter come from a stream derived
/// from `(seed, face, case_id)`.
pub fn generate_case(
    case: &CaseDescriptor,
    samples: usize,
    twin: &TwinConfig,
    seed: u64,
) -> Result<Vec<DatasetRecord>> {
    let mut rng = seed::stream(seed, &format!("case/{}/{}", case.face, case.case_id));
    let config = &twin.object;
    let rest = DipoleSet::rest(config);
    let mut out = Vec::with_capacity(samples);
    for i in 0..samples {
        let jitter = if twin.sweep.time_jitter {
            rng.random::<f64>() - 0.5
        } else {
            0.0
        };
        let (dipoles, contacts) = if case.kind == ProbeKind::NonContact {
            (None, Vec::new())
        } else {
            let t = (i as f64 + jitter) / samples as f64;
            let depth = twin.sweep.depth_at(t);
            let indentations: Vec<Indentation> = case
                .coords
                .iter()
                .map(|&coord| Indentation {
                    face: case.face,
                    coord,
                    depth,
                })
                .collect();
            let tips = case
                .coords
                .iter()
                .map(|&c| force_from_depth(depth, case.face, c, &twin.deformation))
                .collect::<Result<Vec<_>>>()?;
            let label = round6(split_probe_force(&tips, twin.sweep.force_quantum));
            let contacts = case.coords.iter().map(|&c| (c, label)).collect();
            (
                Some(displace_by_depth(config, &twin.deformation, &indentations)?),
                contacts,
            )
        };
        let frame = read_frame(
            config,
            dipoles.as_ref().unwrap_or(&rest),
            case.face,
            FieldScope::AllFaces,
            &twin.sensor,
            &mut rng,
        )?;
        out.push(DatasetRecord {
            face: case.face,
            case_id: case.case_id.clone(),
            sample: i,
            contacts,
            hall: round_frame(frame),
        });
    }
    Ok(out)
}

/// Case list of a full face campaign with per-case sample counts.
pub fn face_campaign(face: u8, scale: f64, twin: &TwinConfig) -> Result<Vec<(CaseDescriptor, usize)>> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::Usage(format!("scale factor {scale} must lie in (0, 1]")));
    }
    twin.object.face(face)?;
    let per_case = scaled_count(twin.sweep.samples_per_case, scale);
    let mut cases: Vec<(CaseDescriptor, usize)> =
        all_contact_cases(face, &twin.coverage, twin.object.pixel_grid)?
            .into_iter()
            .map(|c| (c, per_case))
            .collect();
    cases.push((
        CaseDescriptor::non_contact(face),
        scaled_count(twin.non_contact_samples, scale),
    ));
    Ok(cases)
}

/// Generate the listed cases in parallel; output order is independent of
/// scheduling.
pub fn generate_cases(cases: &[(CaseDescriptor, usize)], twin: &TwinConfig, seed: u64) -> Result<Dataset> {
    let chunks = cases
        .par_iter()
        .map(|(case, n)| generate_case(case, *n, twin, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(chunks.into_iter().flatten().collect()))
}

/// Full campaign for one face, sample counts scaled by `scale`.
pub fn generate_face_dataset(face: u8, scale: f64, twin: &TwinConfig, seed: u64) -> Result<Dataset> {
    twin.validate()?;
    let cases = face_campaign(face, scale, twin)?;
    generate_cases(&cases, twin, seed)
}

/// Add a constant offset (uT) to every frame, emulating core/shell slip.
pub fn inject_core_shift(dataset: &Dataset, offset: &[f64; FRAME_LEN]) -> Dataset {
    Dataset {
        records: dataset
            .records
            .iter()
            .map(|r| DatasetRecord {
                hall: r.hall.add(offset),
                ..r.clone()
            })
            .collect(),
    }
}

/// `frame - reference_rest + calib_rest`.
pub fn offset_compensate(frame: &HallFrame, reference_rest: &HallFrame, calib_rest: &HallFrame) -> Result<HallFrame> {
    if frame.face != reference_rest.face || frame.face != calib_rest.face {
        return Err(Error::Usage(format!(
            "offset compensation mixes faces {}, {} and {}",
            frame.face, reference_rest.face, calib_rest.face
        )));
    }
    Ok(frame.sub(&reference_rest.values).add(&calib_rest.values))
}
