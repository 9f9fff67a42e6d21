//! Study orchestration: splitting, per-face training and evaluation, and the
//! individual studies built on top of them.

mod ablation;
mod crossface;
mod report;
mod rundir;
mod sensitivity;
mod table1;
mod unseen;

pub use ablation::{downsample, run_ablation, AblationParams, AblationResult, FactorRun};
pub use crossface::{
    grasp_layouts, run_crossface, CrossfaceCell, CrossfaceParams, CrossfaceResult, ReadVariant, BASELINE_BIN,
};
pub use report::{table1_text, write_report, FaceSummary};
pub use rundir::RunDir;
pub use sensitivity::{run_sensitivity, sensitivity_map, symmetry_error, SensitivityParams, SensitivityResult};
pub use table1::{run_table1, Table1Result};
pub use unseen::{run_unseen, UnseenParams, UnseenResult};

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate_face_dataset, Dataset, DatasetRecord, TwinConfig};
use crate::deformation::ForceRangeMap;
use crate::error::{Error, Result};
use crate::heatmap::{encode_record, fit_norm_stats, non_contact_threshold, Heatmap};
use crate::magnetics::FRAME_LEN;
use crate::metrics::{MatchMode, MetricsReport, SampleMetrics};
use crate::model::{train, Checkpoint, EpochLog, LrSchedule, Mlp, Provenance, TrainConfig, TrainData, FULL_LAYERS, SMALL_LAYERS};
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
            seed: 0,
        }
    }
}

/// Smallest case that is split on its own.
pub const MIN_STRATUM: usize = 5;

/// Record indices of each part, ascending.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    /// Cases too small to stratify; their records were split as one pool.
    pub pooled_cases: Vec<String>,
}

fn cut(idx: &mut [usize], spec: &SplitSpec, out: &mut Split) {
    let n = idx.len();
    let n_train = (spec.train * n as f64).round() as usize;
    let n_val = ((spec.validation * n as f64).round() as usize).min(n - n_train);
    out.train.extend_from_slice(&idx[..n_train]);
    out.validation.extend_from_slice(&idx[n_train..n_train + n_val]);
    out.test.extend_from_slice(&idx[n_train + n_val..]);
}

/// Random partition stratified per case id.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Split> {
    let fr = [spec.train, spec.validation, spec.test];
    if fr.iter().any(|f| !(*f >= 0.0)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fr:?} must be non-negative and sum to 1")));
    }
    if dataset.is_empty() {
        return Err(Error::Usage("cannot split an empty dataset".into()));
    }
    let mut cases: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in dataset.records.iter().enumerate() {
        cases.entry(&r.case_id).or_default().push(i);
    }
    let mut out = Split::default();
    let mut pool = Vec::new();
    for (case, mut idx) in cases {
        if idx.len() < MIN_STRATUM {
            out.pooled_cases.push(case.to_string());
            pool.extend(idx);
            continue;
        }
        idx.shuffle(&mut crate::seed::stream(spec.seed, &format!("split/{case}")));
        cut(&mut idx, spec, &mut out);
    }
    if !pool.is_empty() {
        log::warn!(
            "{} case(s) have fewer than {MIN_STRATUM} samples; splitting them as one pool",
            out.pooled_cases.len()
        );
        pool.shuffle(&mut crate::seed::stream(spec.seed, "split/pooled"));
        cut(&mut pool, spec, &mut out);
    }
    out.train.sort_unstable();
    out.validation.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

/// Network shape and training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<usize>,
    pub train: TrainConfig,
    pub match_mode: MatchMode,
}

impl ModelSpec {
    pub fn full() -> Self {
        ModelSpec {
            layers: FULL_LAYERS.to_vec(),
            train: TrainConfig::default(),
            match_mode: MatchMode::default(),
        }
    }

    /// Surrogate network. Small batches, cosine decay and more epochs make
    /// up for the reduced width.
    pub fn small() -> Self {
        ModelSpec {
            layers: SMALL_LAYERS.to_vec(),
            train: TrainConfig {
                learning_rate: 1e-3,
                batch_size: 64,
                max_epochs: 450,
                schedule: LrSchedule::Cosine { floor: 0.01 },
                ..TrainConfig::default()
            },
            match_mode: MatchMode::default(),
        }
    }
}

/// Shared settings of a study run. The study-specific part lives in `study`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study: Study,
    pub faces: Vec<u8>,
    pub scale: f64,
    pub seed: u64,
    pub split: SplitSpec,
    pub twin: TwinConfig,
    pub model: ModelSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Study {
    Table1,
    Unseen(UnseenParams),
    Ablation(AblationParams),
    Crossface(CrossfaceParams),
    Sensitivity(SensitivityParams),
}

impl Study {
    pub fn name(&self) -> &'static str {
        match self {
            Study::Table1 => "table1",
            Study::Unseen(_) => "unseen",
            Study::Ablation(_) => "ablation",
            Study::Crossface(_) => "crossface",
            Study::Sensitivity(_) => "sensitivity",
        }
    }
}

impl StudyConfig {
    /// Default twin and split; the split seed is derived from `seed`.
    pub fn new(study: Study, faces: Vec<u8>, scale: f64, seed: u64, model: ModelSpec) -> Self {
        StudyConfig {
            study,
            faces,
            scale,
            seed,
            split: SplitSpec {
                seed: derive_seed(seed, "split"),
                ..SplitSpec::default()
            },
            twin: TwinConfig::default(),
            model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(Error::Config(format!("scale factor {} must lie in (0, 1]", self.scale)));
        }
        if self.faces.is_empty() {
            return Err(Error::Config("a study needs at least one face".into()));
        }
        for &f in &self.faces {
            self.twin.object.face(f)?;
        }
        self.twin.validate()?;
        self.model.train.validate()
    }

    /// Training seed of `face`; every study trains a face from the same one
    /// so that identical data gives identical checkpoints.
    pub fn face_seed(&self, face: u8) -> u64 {
        derive_seed(self.seed, &format!("train/face{face}"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: StudyConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn select<'a>(dataset: &'a Dataset, idx: &'a [usize]) -> impl Iterator<Item = &'a DatasetRecord> + Clone {
    idx.iter().map(move |&i| &dataset.records[i])
}

/// Hash of the given records in canonical order.
pub fn records_sha256<'a>(records: impl IntoIterator<Item = &'a DatasetRecord>) -> String {
    let ds = Dataset::new(records.into_iter().cloned().collect());
    ds.sha256()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedFace {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// Fit normalisation and the non-contact threshold on `train_idx`, train,
/// and package a checkpoint.
pub fn train_face(
    dataset: &Dataset,
    train_idx: &[usize],
    val_idx: &[usize],
    spec: &ModelSpec,
    seed: u64,
) -> Result<TrainedFace> {
    let face = dataset
        .records
        .first()
        .map(|r| r.face)
        .ok_or_else(|| Error::Usage("empty dataset".into()))?;
    let grid = (*spec.layers.last().unwrap_or(&0) as f64).sqrt() as usize;
    if grid * grid != *spec.layers.last().unwrap_or(&0) || spec.layers.first() != Some(&FRAME_LEN) {
        return Err(Error::Shape(format!(
            "layers {:?} must map {FRAME_LEN} signals to a square heatmap",
            spec.layers
        )));
    }
    let norm = fit_norm_stats(select(dataset, train_idx))?;
    let threshold = non_contact_threshold(select(dataset, train_idx))?;
    let tr = TrainData::from_records(select(dataset, train_idx), &norm, grid)?;
    let va = TrainData::from_records(select(dataset, val_idx), &norm, grid)?;
    let mut cfg = spec.train.clone();
    cfg.seed = derive_seed(seed, "train");
    let mut init = Mlp::init(&spec.layers, derive_seed(seed, "init"))?;
    init.anchor_first_layer(tr.x.view(), derive_seed(seed, "init/anchor"))?;
    let outcome = train(init, &tr, &va, &cfg)?;
    let checkpoint = Checkpoint {
        face,
        model: outcome.model,
        norm,
        non_contact_threshold: threshold,
        provenance: Provenance {
            seed,
            data_sha256: records_sha256(select(dataset, train_idx)),
            epochs_run: outcome.log.len(),
            best_epoch: outcome.best_epoch,
            train_config: cfg,
        },
    };
    Ok(TrainedFace {
        checkpoint,
        log: outcome.log,
    })
}

/// Predicted heatmaps in newtons, clamped at inference.
pub fn predict(checkpoint: &Checkpoint, frames: &[[f64; FRAME_LEN]], face: u8) -> Result<Vec<Heatmap>> {
    let grid = (checkpoint.model.output_len() as f64).sqrt() as usize;
    let mut x = Array2::zeros((frames.len(), FRAME_LEN));
    for (i, f) in frames.iter().enumerate() {
        let h = crate::magnetics::HallFrame { face, values: *f };
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&checkpoint.norm.normalize_frame(&h)));
    }
    let y = checkpoint.model.predict(x.view())?;
    y.rows()
        .into_iter()
        .map(|row| Heatmap::from_values(face, grid, row.iter().map(|v| v * checkpoint.norm.force_max).collect()))
        .collect()
}

/// Score `checkpoint` on the given records.
pub fn evaluate<'a>(
    checkpoint: &Checkpoint,
    records: impl IntoIterator<Item = &'a DatasetRecord>,
    ranges: &ForceRangeMap,
    mode: MatchMode,
) -> Result<Vec<SampleMetrics>> {
    let recs: Vec<&DatasetRecord> = records.into_iter().collect();
    if let Some(r) = recs.iter().find(|r| r.face != checkpoint.face) {
        return Err(Error::Usage(format!(
            "face mismatch: checkpoint is for face {} but record {} is from face {}",
            checkpoint.face, r.case_id, r.face
        )));
    }
    let frames: Vec<[f64; FRAME_LEN]> = recs.iter().map(|r| r.hall.values).collect();
    let preds = predict(checkpoint, &frames, checkpoint.face)?;
    let grid = ranges.grid;
    recs.iter()
        .zip(&preds)
        .map(|(r, p)| {
            let gt = encode_record(r, grid)?;
            SampleMetrics::evaluate(&r.case_id, r.sample, p, &gt, ranges, checkpoint.non_contact_threshold, mode)
        })
        .collect()
}

/// Everything produced by one generate/split/train/evaluate pass.
#[derive(Clone, Debug)]
pub struct FaceRun {
    pub face: u8,
    pub dataset: Dataset,
    pub split: Split,
    pub trained: TrainedFace,
    pub test: MetricsReport,
}

impl FaceRun {
    pub fn checkpoint(&self) -> &Checkpoint {
        &self.trained.checkpoint
    }

    /// Mean non-contact frame of the training split.
    pub fn training_rest_frame(&self) -> Option<crate::magnetics::HallFrame> {
        Dataset::new(select(&self.dataset, &self.split.train).cloned().collect()).rest_frame()
    }

    /// Write checkpoint, logs, per-sample metrics, summary and figures under
    /// `prefix`.
    pub fn write(&self, dir: &mut RunDir, prefix: &str) -> Result<()> {
        let hashes = DataHashes::of(&self.dataset, &self.split);
        dir.write(&format!("{prefix}/dataset.json"), serde_json::to_string_pretty(&hashes)? + "\n")?;
        write_trained(dir, prefix, &self.trained)?;
        write_report_files(dir, prefix, &self.test)?;
        let examples = example_heatmaps(self.checkpoint(), &self.dataset, &self.split.test)?;
        for (name, h, scale) in examples {
            dir.write(&format!("{prefix}/figures/{name}.pgm"), crate::heatmap::heatmap_to_pgm(&h, scale))?;
        }
        Ok(())
    }
}

/// Content hashes of a dataset and its split parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataHashes {
    pub records: usize,
    pub dataset_sha256: String,
    pub train: (usize, String),
    pub validation: (usize, String),
    pub test: (usize, String),
}

impl DataHashes {
    pub fn of(dataset: &Dataset, split: &Split) -> Self {
        let part = |idx: &[usize]| (idx.len(), records_sha256(select(dataset, idx)));
        DataHashes {
            records: dataset.len(),
            dataset_sha256: dataset.sha256(),
            train: part(&split.train),
            validation: part(&split.validation),
            test: part(&split.test),
        }
    }
}

fn write_trained(dir: &mut RunDir, prefix: &str, trained: &TrainedFace) -> Result<()> {
    dir.save_checkpoint(&format!("{prefix}/checkpoint.json"), &trained.checkpoint)?;
    let mut log = String::from("epoch,train_loss,val_loss\n");
    for e in &trained.log {
        log.push_str(&format!("{},{:.9e},{:.9e}\n", e.epoch, e.train_loss, e.val_loss));
    }
    dir.write(&format!("{prefix}/train_log.csv"), log)
}

/// `records.csv`, `summary.json` and per-location grid figures.
fn write_report_files(dir: &mut RunDir, prefix: &str, report: &MetricsReport) -> Result<()> {
    dir.write(&format!("{prefix}/records.csv"), report.records_csv())?;
    dir.write(&format!("{prefix}/summary.json"), report.to_json()?)?;
    for (name, pgm) in report::location_figures(&report.locations) {
        dir.write(&format!("{prefix}/figures/{name}.pgm"), pgm)?;
    }
    Ok(())
}

/// Predicted and true heatmaps for the first test record of each probe kind.
fn example_heatmaps(
    checkpoint: &Checkpoint,
    dataset: &Dataset,
    test_idx: &[usize],
) -> Result<Vec<(String, Heatmap, f64)>> {
    let mut picked: BTreeMap<&'static str, &DatasetRecord> = BTreeMap::new();
    for r in select(dataset, test_idx) {
        picked.entry(r.kind().name()).or_insert(r);
    }
    let grid = (checkpoint.model.output_len() as f64).sqrt() as usize;
    let scale = checkpoint.norm.force_max;
    let mut out = Vec::new();
    for (kind, r) in picked {
        let pred = predict(checkpoint, &[r.hall.values], r.face)?.remove(0);
        let gt = encode_record(r, grid)?;
        out.push((format!("example_{kind}_pred"), pred, scale));
        out.push((format!("example_{kind}_true"), gt, scale));
    }
    Ok(out)
}

/// Generate, split, train and evaluate one face.
pub fn run_face(cfg: &StudyConfig, face: u8) -> Result<FaceRun> {
    let dataset = generate_face_dataset(face, cfg.scale, &cfg.twin, cfg.seed)?;
    run_face_on(cfg, dataset)
}

/// Split, train and evaluate an existing single-face dataset.
pub fn run_face_on(cfg: &StudyConfig, dataset: Dataset) -> Result<FaceRun> {
    let face = dataset
        .records
        .first()
        .map(|r| r.face)
        .ok_or_else(|| Error::Usage("empty dataset".into()))?;
    if dataset.records.iter().any(|r| r.face != face) {
        return Err(Error::Usage("dataset mixes faces".into()));
    }
    let split = split(&dataset, &cfg.split)?;
    log::info!(
        "face {face}: {} train / {} validation / {} test records",
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    let trained = train_face(&dataset, &split.train, &split.validation, &cfg.model, cfg.face_seed(face))?;
    let ranges = cfg.twin.force_ranges()?;
    let records = evaluate(&trained.checkpoint, select(&dataset, &split.test), &ranges, cfg.model.match_mode)?;
    let test = MetricsReport::new(records, ranges.grid)?;
    Ok(FaceRun {
        face,
        dataset,
        split,
        trained,
        test,
    })
}

/// Run the configured study and write its run directory under `out`.
pub fn execute(cfg: &StudyConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let mut dir = RunDir::create(out)?;
    dir.write("config.json", cfg.to_json()?)?;
    match &cfg.study {
        Study::Table1 => run_table1(cfg)?.write(&mut dir)?,
        Study::Unseen(p) => run_unseen(cfg, cfg.faces[0], p)?.write(&mut dir)?,
        Study::Ablation(p) => run_ablation(cfg, cfg.faces[0], p, None)?.write(&mut dir)?,
        Study::Crossface(p) => {
            let t1 = run_table1(cfg)?;
            t1.write(&mut dir)?;
            run_crossface(cfg, &t1, p)?.write(&mut dir)?;
        }
        Study::Sensitivity(p) => {
            let t1 = run_table1(cfg)?;
            t1.write(&mut dir)?;
            for run in &t1.faces {
                run_sensitivity(cfg, run, p)?.write(&mut dir)?;
            }
        }
    }
    dir.finish()?;
    Ok(())
}
