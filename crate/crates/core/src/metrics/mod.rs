//! Evaluation metrics: ZNCC template matching (similarity and localisation
//! error), force error, non-contact accuracy, hull-based force sensitivity,
//! and grouped aggregation.

pub mod hull;
mod lp;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datagen::ProbeKind;
use crate::deformation::ForceRangeMap;
use crate::error::{Error, Result};
use crate::geometry::GridCoord;
use crate::heatmap::{classify_non_contact, Heatmap};
use hull::{hull_volume, HullEstimate, HullOptions};

/// Fewest overlapping pixels for a displacement to be scored.
pub const MIN_OVERLAP: usize = 4;
/// ZNCC values closer than this count as tied.
pub const TIE_TOL: f64 = 1e-12;

/// Where the ZNCC statistics come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Means and variances of the overlap region only. Scale invariance
    /// lets a faint stray bump in a small overlap score as a perfect match.
    Overlap,
    /// Each map is centred and normalised over its whole grid once, then
    /// correlated with zero padding. A shifted score can only reach 1 when
    /// the shift loses no signal.
    #[default]
    Global,
}

/// ZNCC of `gt` against `pred` displaced by `(dx, dy)`: pixel `(x, y)` of
/// `gt` is compared with pixel `(x + dx, y + dy)` of `pred`. `None` when
/// either side is constant or the overlap is below [`MIN_OVERLAP`].
pub fn zncc_at(pred: &Heatmap, gt: &Heatmap, dx: i32, dy: i32, mode: MatchMode) -> Option<f64> {
    let m = gt.grid as i32;
    assert_eq!(pred.grid, gt.grid, "heatmaps on different grids");
    let overlap = ((m - dx.abs()).max(0) * (m - dy.abs()).max(0)) as usize;
    if overlap < MIN_OVERLAP {
        return None;
    }
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(overlap);
    for y in 0..m {
        for x in 0..m {
            let (px, py) = (x + dx, y + dy);
            if (0..m).contains(&px) && (0..m).contains(&py) {
                pairs.push((pred.values[(py * m + px) as usize], gt.values[(y * m + x) as usize]));
            }
        }
    }
    match mode {
        MatchMode::Overlap => zncc(&pairs),
        MatchMode::Global => {
            let (mp, np) = centred_norm(&pred.values)?;
            let (mg, ng) = centred_norm(&gt.values)?;
            let spg: f64 = pairs.iter().map(|&(p, g)| (p - mp) * (g - mg)).sum();
            Some((spg / (np * ng)).clamp(-1.0, 1.0))
        }
    }
}

/// Mean and centred Euclidean norm; `None` for a numerically constant map.
fn centred_norm(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if ss <= (1e-12 * scale).powi(2) * n {
        return None;
    }
    Some((mean, ss.sqrt()))
}

fn zncc(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    let (mp, mg) = pairs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mp, mg) = (mp / n, mg / n);
    let (mut spp, mut sgg, mut spg) = (0.0, 0.0, 0.0);
    for &(p, g) in pairs {
        let (a, b) = (p - mp, g - mg);
        spp += a * a;
        sgg += b * b;
        spg += a * b;
    }
    // variance floors relative to the signal scale
    let scale_p = pairs.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    let scale_g = pairs.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    if spp <= (1e-12 * scale_p).powi(2) * n || sgg <= (1e-12 * scale_g).powi(2) * n {
        return None;
    }
    Some((spg / (spp.sqrt() * sgg.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub a_sim: f64,
    pub dx: i32,
    pub dy: i32,
    pub e_loc_x: f64,
    pub e_loc_y: f64,
    pub e_loc: f64,
}

/// Best ZNCC over displacements in `[-(M-1), M-1]^2`. Ties go to the smaller
/// Euclidean displacement, then to the lexicographically smaller `(dx, dy)`.
pub fn match_heatmaps(pred: &Heatmap, gt: &Heatmap, mode: MatchMode) -> Result<MatchResult> {
    if pred.grid != gt.grid {
        return Err(Error::Shape(format!("heatmap grids {} and {} differ", pred.grid, gt.grid)));
    }
    if !gt.values.iter().any(|&v| v > 0.0) {
        return Err(Error::Usage("ground truth has no contact pixel".into()));
    }
    let r = gt.grid as i32 - 1;
    let mut scores = Vec::new();
    for dx in -r..=r {
        for dy in -r..=r {
            if let Some(z) = zncc_at(pred, gt, dx, dy, mode) {
                scores.push((z, dx, dy));
            }
        }
    }
    let best = scores.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let pick = scores
        .iter()
        .filter(|s| s.0 >= best - TIE_TOL)
        .min_by_key(|s| (s.1 * s.1 + s.2 * s.2, s.1, s.2));
    Ok(match pick {
        Some(&(z, dx, dy)) => MatchResult {
            a_sim: z,
            dx,
            dy,
            e_loc_x: dx.abs() as f64,
            e_loc_y: dy.abs() as f64,
            e_loc: ((dx * dx + dy * dy) as f64).sqrt(),
        },
        // constant prediction: penalised with the largest displacement
        None => MatchResult {
            a_sim: 0.0,
            dx: r,
            dy: r,
            e_loc_x: r as f64,
            e_loc_y: r as f64,
            e_loc: (2.0 * (r * r) as f64).sqrt(),
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForceError {
    pub percent: f64,
    pub newtons: f64,
}

/// Mean absolute force error over the ground-truth contact pixels, in
/// newtons and as a percentage of each pixel's force range.
pub fn force_error(pred: &Heatmap, gt: &Heatmap, ranges: &ForceRangeMap) -> Result<ForceError> {
    let pixels = gt.positive_pixels();
    if pixels.is_empty() {
        return Err(Error::Usage("ground truth has no contact pixel".into()));
    }
    let (mut pct, mut n) = (0.0, 0.0);
    for p in &pixels {
        let (lo, hi) = ranges.range(gt.face, *p)?;
        if !(hi > lo) {
            return Err(Error::Config(format!("empty force range at face {} pixel {p}", gt.face)));
        }
        let err = (pred.at(*p) - gt.at(*p)).abs();
        n += err;
        pct += err / (hi - lo) * 100.0;
    }
    let k = pixels.len() as f64;
    Ok(ForceError {
        percent: pct / k,
        newtons: n / k,
    })
}

/// Fraction of predictions classified as non-contact.
pub fn non_contact_accuracy(preds: &[Heatmap], threshold: f64) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Usage("no non-contact predictions to score".into()));
    }
    let ok = preds.iter().filter(|h| classify_non_contact(h, threshold)).count();
    Ok(ok as f64 / preds.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub delta: f64,
    pub hull: HullEstimate,
    pub force_range: f64,
}

/// Force sensitivity: hull volume of the signal cloud per newton of force
/// range.
pub fn force_sensitivity(signals: &[Vec<f64>], forces: &[f64], opts: &HullOptions) -> Result<Sensitivity> {
    if signals.len() != forces.len() {
        return Err(Error::Shape(format!("{} signal rows but {} forces", signals.len(), forces.len())));
    }
    if signals.len() < 10 {
        return Err(Error::Usage(format!("force sensitivity needs at least 10 samples, got {}", signals.len())));
    }
    let lo = forces.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = forces.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Usage("force range is empty".into()));
    }
    let hull = hull_volume(signals, opts)?;
    Ok(Sensitivity {
        delta: hull.volume / (hi - lo),
        hull,
        force_range: hi - lo,
    })
}

/// Per-sample evaluation record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub face: u8,
    pub case_id: String,
    pub sample: usize,
    pub kind: ProbeKind,
    /// First contact pixel, if any.
    pub location: Option<GridCoord>,
    /// Free-form label for study-specific grouping (factor, force bin, ...).
    pub tag: String,
    pub matched: Option<MatchResult>,
    pub force: Option<ForceError>,
    /// For non-contact ground truth: whether the prediction stayed below the
    /// threshold.
    pub non_contact_ok: Option<bool>,
    /// Largest predicted pixel force (N).
    pub pred_max: f64,
}

impl SampleMetrics {
    /// Score one prediction (both heatmaps in newtons).
    pub fn evaluate(
        case_id: &str,
        sample: usize,
        pred: &Heatmap,
        gt: &Heatmap,
        ranges: &ForceRangeMap,
        threshold: f64,
        mode: MatchMode,
    ) -> Result<Self> {
        let contacts = gt.positive_pixels();
        let kind = ProbeKind::from_count(contacts.len())
            .ok_or_else(|| Error::Usage(format!("{} contacts in one heatmap", contacts.len())))?;
        let mut m = SampleMetrics {
            face: gt.face,
            case_id: case_id.to_string(),
            sample,
            kind,
            location: contacts.first().copied(),
            tag: String::new(),
            matched: None,
            force: None,
            non_contact_ok: None,
            pred_max: pred.max(),
        };
        if contacts.is_empty() {
            m.non_contact_ok = Some(classify_non_contact(pred, threshold));
        } else {
            m.matched = Some(match_heatmaps(pred, gt, mode)?);
            m.force = Some(force_error(pred, gt, ranges)?);
        }
        Ok(m)
    }
}

/// Mean and the 10th/50th/90th percentiles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Stat {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            p10: quantile_sorted(&s, 0.1),
            p50: quantile_sorted(&s, 0.5),
            p90: quantile_sorted(&s, 0.9),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub contact_count: usize,
    pub non_contact_count: usize,
    pub a_sim: Option<Stat>,
    pub e_loc: Option<Stat>,
    pub e_loc_x: Option<Stat>,
    pub e_loc_y: Option<Stat>,
    pub e_f_percent: Option<Stat>,
    pub e_f_newtons: Option<Stat>,
    pub a_non: Option<f64>,
}

impl Summary {
    pub fn of<'a>(records: impl IntoIterator<Item = &'a SampleMetrics>) -> Summary {
        let mut cols: [Vec<f64>; 6] = Default::default();
        let (mut count, mut nc, mut nc_ok) = (0, 0, 0);
        for r in records {
            count += 1;
            if let Some(m) = r.matched {
                cols[0].push(m.a_sim);
                cols[1].push(m.e_loc);
                cols[2].push(m.e_loc_x);
                cols[3].push(m.e_loc_y);
            }
            if let Some(f) = r.force {
                cols[4].push(f.percent);
                cols[5].push(f.newtons);
            }
            if let Some(ok) = r.non_contact_ok {
                nc += 1;
                nc_ok += ok as usize;
            }
        }
        Summary {
            count,
            contact_count: cols[0].len(),
            non_contact_count: nc,
            a_sim: Stat::of(&cols[0]),
            e_loc: Stat::of(&cols[1]),
            e_loc_x: Stat::of(&cols[2]),
            e_loc_y: Stat::of(&cols[3]),
            e_f_percent: Stat::of(&cols[4]),
            e_f_newtons: Stat::of(&cols[5]),
            a_non: (nc > 0).then(|| nc_ok as f64 / nc as f64),
        }
    }

    pub fn mean_a_sim(&self) -> f64 {
        self.a_sim.map_or(f64::NAN, |s| s.mean)
    }

    pub fn mean_e_loc(&self) -> f64 {
        self.e_loc.map_or(f64::NAN, |s| s.mean)
    }

    pub fn mean_e_f_percent(&self) -> f64 {
        self.e_f_percent.map_or(f64::NAN, |s| s.mean)
    }

    pub fn mean_e_f_newtons(&self) -> f64 {
        self.e_f_newtons.map_or(f64::NAN, |s| s.mean)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKey {
    Face,
    Location,
    Probe,
    Tag,
}

impl std::str::FromStr for GroupKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "face" => Ok(GroupKey::Face),
            "location" => Ok(GroupKey::Location),
            "probe" => Ok(GroupKey::Probe),
            "tag" | "factor" | "bin" => Ok(GroupKey::Tag),
            other => Err(Error::Usage(format!("unknown group key {other:?}"))),
        }
    }
}

impl GroupKey {
    fn label(self, r: &SampleMetrics) -> String {
        match self {
            GroupKey::Face => r.face.to_string(),
            GroupKey::Location => r.location.map_or_else(|| "none".into(), |c| format!("{:02}-{:02}", c.x, c.y)),
            GroupKey::Probe => r.kind.name().to_string(),
            GroupKey::Tag => r.tag.clone(),
        }
    }
}

/// Summaries per group label, in label order.
pub fn aggregate(records: &[SampleMetrics], key: GroupKey) -> Result<BTreeMap<String, Summary>> {
    if records.is_empty() {
        return Err(Error::Usage("nothing to aggregate".into()));
    }
    let mut groups: BTreeMap<String, Vec<&SampleMetrics>> = BTreeMap::new();
    for r in records {
        groups.entry(key.label(r)).or_default().push(r);
    }
    Ok(groups.into_iter().map(|(k, v)| (k, Summary::of(v))).collect())
}

/// Per-location means on the `M x M` grid (NaN where no record falls),
/// computed from single-contact records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationGrids {
    pub grid: usize,
    pub a_sim: Vec<f64>,
    pub e_loc: Vec<f64>,
    pub e_f_percent: Vec<f64>,
    pub e_f_newtons: Vec<f64>,
}

impl LocationGrids {
    pub fn of(records: &[SampleMetrics], grid: usize) -> Self {
        let mut acc = vec![[0.0f64; 5]; grid * grid];
        for r in records.iter().filter(|r| r.kind == ProbeKind::Single) {
            let (Some(loc), Some(m), Some(f)) = (r.location, r.matched, r.force) else { continue };
            let a = &mut acc[loc.index(grid)];
            a[0] += m.a_sim;
            a[1] += m.e_loc;
            a[2] += f.percent;
            a[3] += f.newtons;
            a[4] += 1.0;
        }
        let col = |k: usize| acc.iter().map(|a| if a[4] > 0.0 { a[k] / a[4] } else { f64::NAN }).collect();
        LocationGrids {
            grid,
            a_sim: col(0),
            e_loc: col(1),
            e_f_percent: col(2),
            e_f_newtons: col(3),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub summary: Summary,
    pub by_probe: BTreeMap<String, Summary>,
    pub locations: LocationGrids,
    #[serde(skip)]
    pub records: Vec<SampleMetrics>,
}

impl MetricsReport {
    pub fn new(records: Vec<SampleMetrics>, grid: usize) -> Result<Self> {
        Ok(MetricsReport {
            summary: Summary::of(&records),
            by_probe: aggregate(&records, GroupKey::Probe)?,
            locations: LocationGrids::of(&records, grid),
            records,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn records_csv(&self) -> String {
        records_csv(&self.records)
    }
}

pub const RECORDS_HEADER: &str =
    "face,case_id,sample,probe,x,y,tag,a_sim,dx,dy,e_loc_x,e_loc_y,e_loc,e_f_percent,e_f_newtons,non_contact_ok,pred_max";

pub fn records_csv(records: &[SampleMetrics]) -> String {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.9}"));
    for r in records {
        let (x, y) = r.location.map_or((String::new(), String::new()), |c| (c.x.to_string(), c.y.to_string()));
        let m = r.matched;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.9}",
            r.face,
            r.case_id,
            r.sample,
            r.kind.name(),
            x,
            y,
            r.tag,
            opt(m.map(|m| m.a_sim)),
            m.map_or_else(String::new, |m| m.dx.to_string()),
            m.map_or_else(String::new, |m| m.dy.to_string()),
            opt(m.map(|m| m.e_loc_x)),
            opt(m.map(|m| m.e_loc_y)),
            opt(m.map(|m| m.e_loc)),
            opt(r.force.map(|f| f.percent)),
            opt(r.force.map(|f| f.newtons)),
            r.non_contact_ok.map_or_else(String::new, |b| b.to_string()),
            r.pred_max,
        );
    }
    out
}

/// Average ranks (1-based), ties sharing the mean rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Usage("correlation needs two equally long series of length >= 2".into()));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Undefined("correlation of a constant series"));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Spearman rank correlation over the pairs where both values are finite.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) =
        a.iter().zip(b).filter(|(u, v)| u.is_finite() && v.is_finite()).map(|(u, v)| (*u, *v)).unzip();
    pearson(&ranks(&x), &ranks(&y))
}
