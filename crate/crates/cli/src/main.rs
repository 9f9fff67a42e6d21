//! `tactile-twin`: dataset generation, training, evaluation and the studies.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tactile_twin::datagen::{generate_face_dataset, read_dataset, write_dataset, TwinConfig};
use tactile_twin::experiments::{
    self, evaluate, split, train_face, AblationParams, CrossfaceParams, DataHashes, ModelSpec, RunDir,
    SensitivityParams, Study, StudyConfig, UnseenParams,
};
use tactile_twin::metrics::MetricsReport;
use tactile_twin::model::Checkpoint;

/// Output root used when `-o` is absent.
const OUT_ENV: &str = "TACTILE_TWIN_OUT";

#[derive(Parser, Debug)]
#[command(name = "tactile-twin", version, about = "Synthetic magnetic tactile twin: data, models and studies")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Master seed; every stage derives its own stream from it
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Worker threads for generation and evaluation (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Use the small surrogate network instead of the full-size network
    #[arg(long, global = true)]
    small: bool,
    /// Share of the full per-case sample counts, in (0, 1]
    #[arg(long, global = true, default_value_t = 0.05)]
    scale: f64,
    /// Override the number of training epochs
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Twin configuration (JSON); defaults to the built-in geometry
    #[arg(long, global = true, value_name = "FILE")]
    twin_config: Option<PathBuf>,
    /// Output directory [default: $TACTILE_TWIN_OUT/<command> or runs/<command>]
    #[arg(short = 'o', long = "out", global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate one face's dataset as CSV
    Gen {
        /// Face index, 1 to 5
        #[arg(long)]
        face: u8,
    },
    /// Split a dataset, train a model and save its checkpoint
    Train {
        /// Dataset CSV written by `gen`
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        /// Model specification (JSON); defaults follow --small
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset
    Eval {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        /// Face the data is expected to come from
        #[arg(long)]
        face: Option<u8>,
        /// Score every record instead of the test split
        #[arg(long)]
        all: bool,
    },
    /// Per-face accuracy with single, dual and triple contacts
    Table1 {
        /// Faces to train and evaluate, comma separated
        #[arg(long, value_delimiter = ',', default_values_t = [1u8, 2, 3, 4, 5])]
        faces: Vec<u8>,
    },
    /// Calibrate on a 5x5 lattice and test on the remaining locations
    Unseen {
        /// Face index, 1 to 5
        #[arg(long, default_value_t = 1)]
        face: u8,
    },
    /// Retrain on training splits downsampled by 2^k
    Ablate {
        /// Face index, 1 to 5
        #[arg(long, default_value_t = 1)]
        face: u8,
        /// Exponents k, as an inclusive range `a..b` or a comma list
        #[arg(long, default_value = "0..10", value_parser = parse_factors)]
        factors: Factors,
    },
    /// Emulated two-face grasps with the opposite face loaded
    Crossface {
        /// Samples per grasp placement and force bin
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Skip the core-shift and compensation variants
        #[arg(long)]
        no_shift: bool,
    },
    /// Location-wise force sensitivity and its correlation with accuracy
    Sensitivity {
        /// Face index, 1 to 5
        #[arg(long, default_value_t = 1)]
        face: u8,
    },
    /// Render a run directory as a per-face accuracy table and P2 figures
    Report {
        /// Run directory to read
        #[arg(long, value_name = "DIR")]
        run: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq)]
struct Factors(Vec<u32>);

fn parse_factors(s: &str) -> std::result::Result<Factors, String> {
    let bad = || format!("expected `a..b` or a comma list of exponents, got {s:?}");
    let v: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect::<std::result::Result<_, _>>()?
    };
    if v.is_empty() || v.iter().any(|&k| k > 30) {
        return Err(bad());
    }
    Ok(Factors(v))
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gen { .. } => "gen",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Table1 { .. } => "table1",
            Command::Unseen { .. } => "unseen",
            Command::Ablate { .. } => "ablate",
            Command::Crossface { .. } => "crossface",
            Command::Sensitivity { .. } => "sensitivity",
            Command::Report { .. } => "report",
        }
    }
}

fn out_dir(g: &Global, command: &str, fallback: Option<PathBuf>) -> PathBuf {
    if let Some(o) = &g.out {
        return o.clone();
    }
    if let Some(f) = fallback {
        return f;
    }
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    root.join(command)
}

fn twin(g: &Global) -> Result<TwinConfig> {
    match &g.twin_config {
        Some(p) => TwinConfig::load(p).with_context(|| format!("loading twin config {}", p.display())),
        None => Ok(TwinConfig::default()),
    }
}

fn model_spec(g: &Global, path: Option<&Path>) -> Result<ModelSpec> {
    let mut spec = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading model config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing model config {}", p.display()))?
        }
        None if g.small => ModelSpec::small(),
        None => ModelSpec::full(),
    };
    if let Some(e) = g.epochs {
        spec.train.max_epochs = e;
    }
    Ok(spec)
}

fn study(g: &Global, kind: Study, faces: Vec<u8>) -> Result<StudyConfig> {
    let mut cfg = StudyConfig::new(kind, faces, g.scale, g.seed, model_spec(g, None)?);
    cfg.twin = twin(g)?;
    cfg.validate().context("validating the study configuration")?;
    Ok(cfg)
}

fn single_face(data: &Path) -> Result<(tactile_twin::datagen::Dataset, u8)> {
    let ds = read_dataset(data).with_context(|| format!("reading dataset {}", data.display()))?;
    let face = ds.records.first().map(|r| r.face).context("the dataset is empty")?;
    if ds.records.iter().any(|r| r.face != face) {
        bail!("dataset {} mixes faces", data.display());
    }
    Ok((ds, face))
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(j) = g.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    let name = cli.command.name();
    match &cli.command {
        Command::Gen { face } => {
            let twin = twin(g)?;
            let ds = generate_face_dataset(*face, g.scale, &twin, g.seed).context("generating the dataset")?;
            let out = out_dir(g, name, None);
            let mut dir = RunDir::create(&out)?;
            dir.write("twin.json", twin.to_json()? + "\n")?;
            let path = out.join(format!("face{face}.csv"));
            write_dataset(&ds, &path).context("writing the dataset")?;
            println!("{} records -> {}", ds.len(), path.display());
        }
        Command::Train { data, config } => {
            let (ds, face) = single_face(data)?;
            let spec = model_spec(g, config.as_deref())?;
            let cfg = StudyConfig::new(Study::Table1, vec![face], g.scale, g.seed, spec.clone());
            let parts = split(&ds, &cfg.split).context("splitting the dataset")?;
            let trained = train_face(&ds, &parts.train, &parts.validation, &spec, cfg.face_seed(face))
                .context("training")?;
            let out = out_dir(g, name, None);
            let mut dir = RunDir::create(&out)?;
            dir.write("model.json", serde_json::to_string_pretty(&spec)? + "\n")?;
            dir.write("dataset.json", serde_json::to_string_pretty(&DataHashes::of(&ds, &parts))? + "\n")?;
            dir.save_checkpoint("checkpoint.json", &trained.checkpoint)?;
            let mut log = String::from("epoch,train_loss,val_loss\n");
            for e in &trained.log {
                log.push_str(&format!("{},{:.9e},{:.9e}\n", e.epoch, e.train_loss, e.val_loss));
            }
            dir.write("train_log.csv", log)?;
            dir.finish()?;
            println!(
                "face {face}: best epoch {} of {} -> {}",
                trained.checkpoint.provenance.best_epoch,
                trained.log.len(),
                out.join("checkpoint.json").display()
            );
        }
        Command::Eval {
            checkpoint,
            data,
            face,
            all,
        } => {
            let ckpt = Checkpoint::load(checkpoint)
                .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
            let (ds, data_face) = single_face(data)?;
            let expected = face.unwrap_or(data_face);
            if ckpt.face != expected || ckpt.face != data_face {
                bail!(
                    "face mismatch: checkpoint {} is for face {} but the data is from face {data_face}{}",
                    checkpoint.display(),
                    ckpt.face,
                    face.map_or(String::new(), |f| format!(" (requested face {f})"))
                );
            }
            let twin = twin(g)?;
            let ranges = twin.force_ranges()?;
            let spec = StudyConfig::new(Study::Table1, vec![data_face], g.scale, g.seed, ModelSpec::small());
            let idx: Vec<usize> = if *all {
                (0..ds.len()).collect()
            } else {
                split(&ds, &spec.split).context("splitting the dataset")?.test
            };
            let records = evaluate(&ckpt, idx.iter().map(|&i| &ds.records[i]), &ranges, Default::default())
                .context("evaluating")?;
            let report = MetricsReport::new(records, ranges.grid)?;
            let out = out_dir(g, name, None);
            let mut dir = RunDir::create(&out)?;
            dir.write("records.csv", report.records_csv())?;
            dir.write("summary.json", report.to_json()?)?;
            dir.finish()?;
            print!("{}", experiments::table1_text(&[experiments::FaceSummary::from_report(format!("face{data_face}"), &report)]));
        }
        Command::Table1 { faces } => {
            let cfg = study(g, Study::Table1, faces.clone())?;
            let out = out_dir(g, name, None);
            experiments::execute(&cfg, &out).context("running the table1 study")?;
            print!("{}", std::fs::read_to_string(out.join("table1.txt"))?);
        }
        Command::Unseen { face } => {
            let cfg = study(g, Study::Unseen(UnseenParams::default()), vec![*face])?;
            let out = out_dir(g, name, None);
            experiments::execute(&cfg, &out).context("running the unseen study")?;
            print!("{}", std::fs::read_to_string(out.join(format!("unseen/face{face}/table.txt")))?);
        }
        Command::Ablate { face, factors } => {
            let cfg = study(g, Study::Ablation(AblationParams { factors: factors.0.clone() }), vec![*face])?;
            let out = out_dir(g, name, None);
            experiments::execute(&cfg, &out).context("running the ablation study")?;
            print!("{}", std::fs::read_to_string(out.join(format!("ablation/face{face}/table.txt")))?);
        }
        Command::Crossface { samples, no_shift } => {
            let mut p = CrossfaceParams {
                samples_per_layout: *samples,
                ..CrossfaceParams::default()
            };
            if *no_shift {
                p.core_shift_mm = None;
            }
            let cfg = study(g, Study::Crossface(p), vec![1, 2, 3, 4, 5])?;
            let out = out_dir(g, name, None);
            experiments::execute(&cfg, &out).context("running the crossface study")?;
            print!("{}", std::fs::read_to_string(out.join("crossface/cells.csv"))?);
        }
        Command::Sensitivity { face } => {
            let cfg = study(g, Study::Sensitivity(SensitivityParams::default()), vec![*face])?;
            let out = out_dir(g, name, None);
            experiments::execute(&cfg, &out).context("running the sensitivity study")?;
            print!("{}", std::fs::read_to_string(out.join(format!("sensitivity/face{face}/summary.json")))?);
        }
        Command::Report { run } => {
            let out = out_dir(g, name, Some(run.join("report")));
            let n = experiments::write_report(run, &out).context("writing the report")?;
            println!("{n} summaries -> {}", out.display());
            print!("{}", std::fs::read_to_string(out.join("table1.txt"))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {name}: {e:#}");
            ExitCode::from(1)
        }
    }
}
