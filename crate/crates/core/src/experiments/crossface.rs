//! Parallel-jaw grasp emulation: two opposite faces loaded at once, every
//! face read through its own single-face model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{evaluate, write_report_files, RunDir, StudyConfig, Table1Result};
use crate::datagen::{
    enumerate_cases, offset_compensate, round6, split_probe_force, CaseDescriptor, CoverageSpec, DatasetRecord,
    Probe, TwinConfig,
};
use crate::deformation::{depth_for_force, displace_by_depth, force_from_depth, location_force_range, Indentation};
use crate::error::{Error, Result};
use crate::geometry::{GridCoord, Vec3};
use crate::magnetics::{ideal_frame, read_frame, DipoleSet, FieldScope, HallFrame, FRAME_LEN};
use crate::metrics::{MetricsReport, SampleMetrics, Summary};
use crate::model::Checkpoint;

/// Opposite-face load of the reference cells: no force at all.
pub const BASELINE_BIN: f64 = 0.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadVariant {
    /// Every magnet of every face contributes.
    Full,
    /// Each face's sensors see only its own magnets move; the other faces
    /// contribute their constant rest field, as in calibration.
    Isolated,
    /// Full reads plus a constant core-shift offset.
    Shifted,
    /// Shifted reads after rest-frame offset compensation.
    Compensated,
}

impl ReadVariant {
    pub fn name(self) -> &'static str {
        match self {
            ReadVariant::Full => "full",
            ReadVariant::Isolated => "isolated",
            ReadVariant::Shifted => "shifted",
            ReadVariant::Compensated => "compensated",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossfaceParams {
    /// The two gripped faces; each takes a turn as the contact face.
    pub grasp_faces: [u8; 2],
    /// Opposite-face load as a share of each tip's maximum sweep force.
    pub bins: Vec<f64>,
    pub samples_per_layout: usize,
    pub single_anchors: Vec<GridCoord>,
    pub dual_anchors: Vec<GridCoord>,
    pub triple_anchors: Vec<GridCoord>,
    /// Rigid core displacement (mm, world frame); `None` skips the shifted
    /// variants.
    pub core_shift_mm: Option<[f64; 3]>,
    /// Rest reads averaged into the post-shift reference frame.
    pub rest_reads: usize,
    /// Localisation errors below this count as correct in the flag rate.
    pub e_loc_flag: f64,
}

impl Default for CrossfaceParams {
    /// Five single, three dual and two triple placements spread over the
    /// face; bins 0.3 to 1.0 in steps of 0.1.
    fn default() -> Self {
        let g = |v: &[(u8, u8)]| v.iter().map(|&(x, y)| GridCoord::new(x, y)).collect();
        CrossfaceParams {
            grasp_faces: [3, 5],
            bins: (3..=10).map(|k| k as f64 / 10.0).collect(),
            samples_per_layout: 20,
            single_anchors: g(&[(2, 2), (9, 2), (5, 5), (2, 9), (9, 9)]),
            // placements that also occur in the calibration campaign
            dual_anchors: g(&[(3, 3), (7, 5), (5, 7)]),
            triple_anchors: g(&[(3, 4), (7, 1)]),
            core_shift_mm: Some([0.2, 0.2, 0.2]),
            rest_reads: 32,
            e_loc_flag: 2.8,
        }
    }
}

/// The grasp placements on `face`, single then dual then triple.
pub fn grasp_layouts(face: u8, params: &CrossfaceParams, grid: usize) -> Result<Vec<CaseDescriptor>> {
    let cov = CoverageSpec {
        dual_anchors: params.dual_anchors.clone(),
        triple_anchors: params.triple_anchors.clone(),
    };
    let mut out: Vec<CaseDescriptor> = enumerate_cases(face, &Probe::single(), &cov, grid)?
        .into_iter()
        .filter(|c| params.single_anchors.contains(&c.coords[0]))
        .collect();
    if out.len() != params.single_anchors.len() {
        return Err(Error::Config("a single-contact grasp anchor is off the grid".into()));
    }
    for (probe, n) in [
        (Probe::dual(), params.dual_anchors.len()),
        (Probe::triple(), params.triple_anchors.len()),
    ] {
        if n == 0 {
            continue;
        }
        let cases = enumerate_cases(face, &probe, &cov, grid)?;
        if cases.len() != n {
            return Err(Error::Config(format!("a {} grasp placement is off the grid", probe.kind.name())));
        }
        out.extend(cases);
    }
    Ok(out)
}

/// Summary of one (variant, contact face, bin) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossfaceCell {
    pub variant: ReadVariant,
    pub contact_face: u8,
    pub bin: f64,
    pub contact: Summary,
    /// Share of contact samples with E_loc below the flag tolerance.
    pub e_loc_flag_rate: f64,
    /// Non-contact accuracy of each face without contact.
    pub a_non: BTreeMap<u8, f64>,
}

#[derive(Clone, Debug)]
pub struct CrossfaceResult {
    pub cells: Vec<CrossfaceCell>,
    /// Per-sample metrics of every face, per (variant, contact face), with
    /// the bin in the tag.
    pub records: BTreeMap<(ReadVariant, u8), Vec<SampleMetrics>>,
    pub grid: usize,
}

impl CrossfaceResult {
    pub fn cell(&self, variant: ReadVariant, contact_face: u8, bin: f64) -> Option<&CrossfaceCell> {
        self.cells
            .iter()
            .find(|c| c.variant == variant && c.contact_face == contact_face && c.bin == bin)
    }

    /// Mean contact-face E_f (%) over the bins, in bin order.
    pub fn e_f_series(&self, variant: ReadVariant, contact_face: u8) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = self
            .cells
            .iter()
            .filter(|c| c.variant == variant && c.contact_face == contact_face && c.bin != BASELINE_BIN)
            .map(|c| (c.bin, c.contact.mean_e_f_percent()))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    }

    pub fn write(&self, dir: &mut RunDir) -> Result<()> {
        dir.write("crossface/cells.json", serde_json::to_string_pretty(&self.cells)? + "\n")?;
        let mut table = String::from("variant,contact_face,bin,a_sim,e_loc,e_f_percent,e_f_newtons,e_loc_flag_rate,a_non\n");
        for c in &self.cells {
            let a_non: Vec<String> = c.a_non.iter().map(|(f, v)| format!("{f}:{v:.4}")).collect();
            table.push_str(&format!(
                "{},{},{:.2},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
                c.variant.name(),
                c.contact_face,
                c.bin,
                c.contact.mean_a_sim(),
                c.contact.mean_e_loc(),
                c.contact.mean_e_f_percent(),
                c.contact.mean_e_f_newtons(),
                c.e_loc_flag_rate,
                a_non.join(" ")
            ));
        }
        dir.write("crossface/cells.csv", table)?;
        for ((variant, face), recs) in &self.records {
            let contact: Vec<SampleMetrics> = recs.iter().filter(|r| r.face == *face).cloned().collect();
            let report = MetricsReport::new(contact, self.grid)?;
            write_report_files(dir, &format!("crossface/{}/face{face}", variant.name()), &report)?;
            dir.write(
                &format!("crossface/{}/face{face}/all_faces.csv", variant.name()),
                crate::metrics::records_csv(recs),
            )?;
        }
        Ok(())
    }
}

/// Rest field of every other face at `face`'s sensors.
fn foreign_rest_field(twin: &TwinConfig, face: u8) -> Result<[f64; FRAME_LEN]> {
    let rest = DipoleSet::rest(&twin.object);
    let all = ideal_frame(&twin.object, &rest, face, FieldScope::AllFaces)?;
    let own = ideal_frame(&twin.object, &rest, face, FieldScope::OwnFace)?;
    Ok(std::array::from_fn(|k| all.values[k] - own.values[k]))
}

/// Constant per-face offset produced by moving every magnet by `shift` mm.
fn core_shift_offset(twin: &TwinConfig, face: u8, shift: [f64; 3]) -> Result<[f64; FRAME_LEN]> {
    let rest = DipoleSet::rest(&twin.object);
    let mut moved = rest.clone();
    let s = Vec3::new(shift[0], shift[1], shift[2]);
    for f in &mut moved.faces {
        for d in &mut f.dipoles {
            d.position += s;
        }
    }
    let a = ideal_frame(&twin.object, &rest, face, FieldScope::AllFaces)?;
    let b = ideal_frame(&twin.object, &moved, face, FieldScope::AllFaces)?;
    Ok(std::array::from_fn(|k| b.values[k] - a.values[k]))
}

fn rounded(frame: HallFrame) -> HallFrame {
    HallFrame {
        face: frame.face,
        values: frame.values.map(round6),
    }
}

/// One emulated grasp sample: the contact-face label and the frames of every
/// read face under the full and isolated physics.
struct Grasp {
    sample: usize,
    label: f64,
    full: BTreeMap<u8, HallFrame>,
    isolated: BTreeMap<u8, HallFrame>,
}

#[allow(clippy::too_many_arguments)]
fn emulate(
    twin: &TwinConfig,
    layout: &CaseDescriptor,
    opposite: u8,
    bin: f64,
    read_faces: &[u8],
    n: usize,
    seed: u64,
) -> Result<Vec<Grasp>> {
    let c = layout.face;
    let foreign = read_faces
        .iter()
        .map(|&f| Ok((f, foreign_rest_field(twin, f)?)))
        .collect::<Result<BTreeMap<u8, _>>>()?;
    let mut out = Vec::with_capacity(n);
    let opposite_depths = layout
        .coords
        .iter()
        .map(|&coord| {
            let (_, f_max) = location_force_range(opposite, coord, &twin.deformation, twin.sweep.depth)?;
            depth_for_force(bin * f_max, opposite, coord, &twin.deformation)
        })
        .collect::<Result<Vec<f64>>>()?;
    for i in 0..n {
        let depth = twin.sweep.depth_at((i as f64 + 0.5) / n as f64);
        let own: Vec<Indentation> = layout
            .coords
            .iter()
            .map(|&coord| Indentation { face: c, coord, depth })
            .collect();
        let tips = layout
            .coords
            .iter()
            .map(|&coord| force_from_depth(depth, c, coord, &twin.deformation))
            .collect::<Result<Vec<_>>>()?;
        let label = round6(split_probe_force(&tips, twin.sweep.force_quantum));
        let mut both = own.clone();
        if bin > 0.0 {
            both.extend(layout.coords.iter().zip(&opposite_depths).map(|(&coord, &depth)| Indentation {
                face: opposite,
                coord,
                depth,
            }));
        }
        let full_set = displace_by_depth(&twin.object, &twin.deformation, &both)?;
        let mut full = BTreeMap::new();
        let mut isolated = BTreeMap::new();
        for &f in read_faces {
            // the same noise draw for every bin and variant
            let label_rng = format!("crossface/{c}/{}/{i}/{f}", layout.case_id);
            let mut rng = crate::seed::stream(seed, &label_rng);
            full.insert(f, rounded(read_frame(&twin.object, &full_set, f, FieldScope::AllFaces, &twin.sensor, &mut rng)?));
            let mut rng = crate::seed::stream(seed, &label_rng);
            let own_only = read_frame(&twin.object, &full_set, f, FieldScope::OwnFace, &twin.sensor, &mut rng)?;
            isolated.insert(f, rounded(own_only.add(&foreign[&f])));
        }
        out.push(Grasp {
            sample: i,
            label,
            full,
            isolated,
        });
    }
    Ok(out)
}

/// Run every (variant, contact face, bin) cell with the per-face models.
pub fn run_crossface(cfg: &StudyConfig, table1: &Table1Result, params: &CrossfaceParams) -> Result<CrossfaceResult> {
    cfg.validate()?;
    let [fa, fb] = params.grasp_faces;
    if fa == fb {
        return Err(Error::Config("the grasp needs two different faces".into()));
    }
    if params.bins.iter().any(|b| !(*b > 0.0 && *b <= 1.0)) || params.samples_per_layout == 0 {
        return Err(Error::Config("crossface bins must lie in (0, 1] and samples must be positive".into()));
    }
    let models: BTreeMap<u8, &Checkpoint> = table1.faces.iter().map(|r| (r.face, r.checkpoint())).collect();
    for f in [fa, fb] {
        if !models.contains_key(&f) {
            return Err(Error::Usage(format!("no trained model for grasp face {f}")));
        }
    }
    let twin = &cfg.twin;
    let ranges = twin.force_ranges()?;
    let mode = cfg.model.match_mode;
    let grid = twin.object.pixel_grid;

    // offsets and compensation frames per face
    let mut shift: BTreeMap<u8, ([f64; FRAME_LEN], HallFrame, HallFrame)> = BTreeMap::new();
    if let Some(s) = params.core_shift_mm {
        for run in &table1.faces {
            let f = run.face;
            let offset = core_shift_offset(twin, f, s)?;
            let calib = run
                .training_rest_frame()
                .ok_or_else(|| Error::Usage(format!("face {f} has no non-contact training records")))?;
            let rest = DipoleSet::rest(&twin.object);
            let mut sum = [0.0; FRAME_LEN];
            for j in 0..params.rest_reads.max(1) {
                let mut rng = crate::seed::stream(cfg.seed, &format!("crossface/rest/{f}/{j}"));
                let r = read_frame(&twin.object, &rest, f, FieldScope::AllFaces, &twin.sensor, &mut rng)?.add(&offset);
                for (s, v) in sum.iter_mut().zip(r.values) {
                    *s += v;
                }
            }
            let reference = HallFrame {
                face: f,
                values: sum.map(|v| v / params.rest_reads.max(1) as f64),
            };
            shift.insert(f, (offset, reference, calib));
        }
    }

    let mut variants = vec![ReadVariant::Full, ReadVariant::Isolated];
    if params.core_shift_mm.is_some() {
        variants.extend([ReadVariant::Shifted, ReadVariant::Compensated]);
    }
    let mut bins = vec![BASELINE_BIN];
    bins.extend(&params.bins);

    let mut cells = Vec::new();
    let mut records: BTreeMap<(ReadVariant, u8), Vec<SampleMetrics>> = BTreeMap::new();
    for (c, o) in [(fa, fb), (fb, fa)] {
        let idle: Vec<u8> = models.keys().copied().filter(|&f| f != c && f != o).collect();
        let mut read_faces = vec![c];
        read_faces.extend(&idle);
        let layouts = grasp_layouts(c, params, grid)?;
        for &bin in &bins {
            let mut grasps = Vec::new();
            for layout in &layouts {
                let seed = crate::seed::derive_seed(cfg.seed, "crossface");
                grasps.push((layout, emulate(twin, layout, o, bin, &read_faces, params.samples_per_layout, seed)?));
            }
            for &variant in &variants {
                let frame_of = |g: &Grasp, f: u8| -> Result<HallFrame> {
                    let base = match variant {
                        ReadVariant::Isolated => g.isolated[&f],
                        _ => g.full[&f],
                    };
                    match variant {
                        ReadVariant::Full | ReadVariant::Isolated => Ok(base),
                        ReadVariant::Shifted | ReadVariant::Compensated => {
                            let (offset, reference, calib) = &shift[&f];
                            let shifted = base.add(offset);
                            if variant == ReadVariant::Shifted {
                                Ok(shifted)
                            } else {
                                offset_compensate(&shifted, reference, calib)
                            }
                        }
                    }
                };
                let tag = format!("bin{bin:.2}");
                let mut contact_recs = Vec::new();
                let mut idle_recs: BTreeMap<u8, Vec<DatasetRecord>> = BTreeMap::new();
                for (layout, gs) in &grasps {
                    for g in gs {
                        contact_recs.push(DatasetRecord {
                            face: c,
                            case_id: layout.case_id.clone(),
                            sample: g.sample,
                            contacts: layout.coords.iter().map(|&p| (p, g.label)).collect(),
                            hall: frame_of(g, c)?,
                        });
                        for &f in &idle {
                            idle_recs.entry(f).or_default().push(DatasetRecord {
                                face: f,
                                case_id: format!("idle-{}", layout.case_id),
                                sample: g.sample,
                                contacts: Vec::new(),
                                hall: frame_of(g, f)?,
                            });
                        }
                    }
                }
                let mut contact_m = evaluate(models[&c], &contact_recs, &ranges, mode)?;
                contact_m.iter_mut().for_each(|m| m.tag = tag.clone());
                let mut a_non = BTreeMap::new();
                let mut all = contact_m.clone();
                for (f, recs) in &idle_recs {
                    let mut m = evaluate(models[f], recs, &ranges, mode)?;
                    m.iter_mut().for_each(|m| m.tag = tag.clone());
                    a_non.insert(*f, Summary::of(&m).a_non.unwrap_or(f64::NAN));
                    all.extend(m);
                }
                let flagged = contact_m
                    .iter()
                    .filter(|m| m.matched.is_some_and(|r| r.e_loc < params.e_loc_flag))
                    .count();
                cells.push(CrossfaceCell {
                    variant,
                    contact_face: c,
                    bin,
                    contact: Summary::of(&contact_m),
                    e_loc_flag_rate: flagged as f64 / contact_m.len().max(1) as f64,
                    a_non,
                });
                records.entry((variant, c)).or_default().extend(all);
            }
        }
    }
    Ok(CrossfaceResult { cells, records, grid })
}
