use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cdfa_core::augment::{
    apply_forgery_augmentation, realize_op, AugContext, AugOp, AugPolicy, OpSet,
};
use cdfa_core::data::{generate_synthetic_corpus, load_corpus, SourceLabel, Split};
use cdfa_core::metrics::{evaluate, write_scores_csv};
use cdfa_core::nets::{Checkpoint, Networks};
use cdfa_core::trainer::{
    read_epoch_csv, score_split, train_cdfa, write_epoch_row, EpochLog, TrainObserver,
    EPOCH_CSV_HEADER,
};
use cdfa_core::CdfaError;
use image::{GrayImage, RgbImage};
use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{resolve_seed, RunConfigFile};
use crate::svg::{LineChart, Series};

pub const EPOCHS_CSV: &str = "epochs.csv";
pub const LAST_CKPT: &str = "last.ckpt";
pub const FINAL_CKPT: &str = "final.ckpt";
pub const CONFIG_SNAPSHOT: &str = "config.toml";

fn log_resolved(cfg: &RunConfigFile) {
    info!("resolved config:\n{}", cfg.to_toml());
}

fn io_err(path: &Path, source: std::io::Error) -> CdfaError {
    CdfaError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn is_empty_dir(path: &Path) -> Result<bool> {
    if !path.exists() {
        return Ok(true);
    }
    Ok(fs::read_dir(path)
        .map_err(|e| io_err(path, e))?
        .next()
        .is_none())
}

pub fn gen_data(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfigFile::load(config)?;
    resolve_seed(&mut cfg.synth.seed, seed)?;
    cfg.synth.validate()?;
    log_resolved(&cfg);
    if !is_empty_dir(out)? {
        return Err(
            CdfaError::Usage(format!("output directory {} is not empty", out.display())).into(),
        );
    }

    // Build next to the destination and move into place only when complete.
    let name = out
        .file_name()
        .with_context(|| format!("output path {} has no file name", out.display()))?
        .to_string_lossy();
    let staging = out.with_file_name(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| io_err(&staging, e))?;
    }
    let built = generate_synthetic_corpus(&cfg.synth).and_then(|corpus| {
        corpus.write(&staging)?;
        Ok(corpus)
    });
    let corpus = match built {
        Ok(c) => c,
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            return Err(e.into());
        }
    };
    if out.exists() {
        fs::remove_dir(out).map_err(|e| io_err(out, e))?;
    }
    if let Err(e) = fs::rename(&staging, out) {
        let _ = fs::remove_dir_all(&staging);
        return Err(io_err(out, e).into());
    }
    info!(
        "wrote {} clips ({} frames each) to {}",
        corpus.clips.len(),
        cfg.synth.frames_per_video,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PreviewOp {
    Bi,
    Sbi,
    Ssbi,
    /// Sample the operator from the policy network (uniform without a checkpoint).
    Policy,
}

pub struct AugmentArgs<'a> {
    pub config: Option<&'a Path>,
    pub corpus: &'a Path,
    pub video: &'a str,
    pub frames: Option<&'a [usize]>,
    pub op: PreviewOp,
    pub checkpoint: Option<&'a Path>,
    pub seed: Option<u64>,
    pub out: &'a Path,
}

fn save_rgb(path: &Path, img: &cdfa_core::grid::Image) -> Result<()> {
    let buf = RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_rgb8())
        .expect("buffer matches dimensions");
    buf.save(path)
        .with_context(|| format!("writing {}", path.display()))
}

fn save_gray(path: &Path, mask: &cdfa_core::grid::MaskImage) -> Result<()> {
    let buf = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, mask.to_gray8())
        .expect("buffer matches dimensions");
    buf.save(path)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn augment(args: AugmentArgs<'_>) -> Result<()> {
    let mut cfg = RunConfigFile::load(args.config)?;
    let mut seed = 0;
    resolve_seed(&mut seed, args.seed)?;
    cfg.train.seed = seed;
    cfg.train.augment.validate()?;
    log_resolved(&cfg);

    let corpus = load_corpus(args.corpus)?.load_all()?;
    let clip = corpus.clip(args.video).ok_or_else(|| {
        CdfaError::InsufficientData(format!("video `{}` is not in the corpus", args.video))
    })?;
    let indices: Vec<usize> = match args.frames {
        Some(f) => f.to_vec(),
        None => (0..clip.frames.len()).collect(),
    };
    if let Some(&bad) = indices.iter().find(|&&i| i >= clip.frames.len()) {
        return Err(CdfaError::InsufficientFrames {
            video_id: args.video.to_string(),
            len: clip.frames.len(),
        })
        .with_context(|| format!("frame {bad} requested"));
    }
    let nets: Option<Networks> = match (args.op, args.checkpoint) {
        (PreviewOp::Policy, Some(p)) => Some(Checkpoint::load(p)?.nets),
        (_, Some(_)) => bail!(CdfaError::Usage(
            "--checkpoint only applies to --op policy".into()
        )),
        _ => None,
    };

    let ctx = AugContext::new(
        corpus
            .clips
            .iter()
            .filter(|c| c.source_label == SourceLabel::Real)
            .flat_map(|c| c.frames.iter()),
        corpus.clips.iter().map(|c| c.frames.as_slice()),
        cfg.train.augment.clone(),
    );
    fs::create_dir_all(args.out).map_err(|e| io_err(args.out, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in indices {
        let frame = &clip.frames[i];
        let (pf, tag) = match args.op {
            PreviewOp::Bi => (
                realize_op(AugOp::Bi, frame, &ctx, &mut rng)?,
                "bi".to_string(),
            ),
            PreviewOp::Sbi => (
                realize_op(AugOp::Sbi, frame, &ctx, &mut rng)?,
                "sbi".to_string(),
            ),
            PreviewOp::Ssbi => (
                realize_op(AugOp::Ssbi, frame, &ctx, &mut rng)?,
                "ssbi".to_string(),
            ),
            PreviewOp::Policy => {
                let policy = match &nets {
                    Some(n) => n.policy(&frame.image, OpSet::all())?,
                    None => AugPolicy::uniform(),
                };
                debug!("frame {i}: policy {:?}", policy.probs());
                let pf = apply_forgery_augmentation(frame, &policy, &ctx, &mut rng)?;
                let tag = format!("policy-{}", pf.chosen_op.name().to_lowercase());
                (pf, tag)
            }
        };
        let stem = format!("{}_f{i:04}_{tag}", args.video);
        save_rgb(&args.out.join(format!("{stem}.png")), &pf.image)?;
        save_gray(&args.out.join(format!("{stem}_mask.png")), &pf.mask)?;
        info!("frame {i}: {} -> {stem}.png", pf.chosen_op);
    }
    Ok(())
}

pub struct TrainArgs<'a> {
    pub config: Option<&'a Path>,
    pub corpus: &'a Path,
    pub out: &'a Path,
    pub preset: Option<&'a str>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub checkpoint_every: usize,
}

/// Persists every epoch: checkpoint first, then the CSV row, so each logged
/// epoch always has its checkpoint on disk.
struct RunWriter {
    dir: PathBuf,
    csv: csv::Writer<BufWriter<File>>,
    every: usize,
}

impl RunWriter {
    fn csv_err(&self, e: csv::Error) -> CdfaError {
        io_err(&self.dir.join(EPOCHS_CSV), std::io::Error::other(e))
    }
}

impl TrainObserver for RunWriter {
    fn on_epoch_end(&mut self, log: &EpochLog, nets: &Networks) -> cdfa_core::Result<()> {
        let ck = Checkpoint {
            epoch: log.epoch + 1,
            nets: nets.clone(),
        };
        ck.save(&self.dir.join(LAST_CKPT))?;
        if self.every > 0 && (log.epoch + 1).is_multiple_of(self.every) {
            ck.save(&self.dir.join(format!("epoch_{:04}.ckpt", log.epoch + 1)))?;
        }
        write_epoch_row(&mut self.csv, log).map_err(|e| self.csv_err(e))?;
        self.csv
            .flush()
            .map_err(|e| io_err(&self.dir.join(EPOCHS_CSV), e))?;
        info!(
            "epoch {:>3}: train {:.4}  val {:.4}  policy [{:.3} {:.3} {:.3}]  n_of {} n_pf {}  updates {}",
            log.epoch,
            log.train_loss,
            log.val_loss,
            log.mean_policy[0],
            log.mean_policy[1],
            log.mean_policy[2],
            log.n_of,
            log.n_pf,
            log.policy_updates
        );
        Ok(())
    }
}

pub fn train(args: TrainArgs<'_>) -> Result<()> {
    let mut cfg = RunConfigFile::load(args.config)?;
    if let Some(p) = args.preset {
        info!("preset overridden by --preset: {p}");
        cfg.preset = Some(p.to_string());
    }
    if let Some(p) = &cfg.preset {
        cfg.train = cfg.train.clone().with_preset(p)?;
    }
    resolve_seed(&mut cfg.train.seed, args.seed)?;
    if let Some(t) = args.epochs {
        info!("total_epochs overridden by --epochs: {t}");
        cfg.train.total_epochs = t;
    }
    cfg.train.validate()?;
    log_resolved(&cfg);

    let corpus = load_corpus(args.corpus)?.load_all()?;
    if !is_empty_dir(args.out)? {
        return Err(
            CdfaError::Usage(format!("run directory {} is not empty", args.out.display())).into(),
        );
    }
    fs::create_dir_all(args.out).map_err(|e| io_err(args.out, e))?;
    let snapshot = args.out.join(CONFIG_SNAPSHOT);
    fs::write(&snapshot, cfg.to_toml()).map_err(|e| io_err(&snapshot, e))?;

    let csv_path = args.out.join(EPOCHS_CSV);
    let file = File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    let mut csv = csv::Writer::from_writer(BufWriter::new(file));
    csv.write_record(EPOCH_CSV_HEADER)
        .and_then(|_| csv.flush().map_err(Into::into))
        .map_err(|e| io_err(&csv_path, std::io::Error::other(e)))?;
    let mut writer = RunWriter {
        dir: args.out.to_path_buf(),
        csv,
        every: args.checkpoint_every,
    };

    let outcome = train_cdfa(&cfg.train, &corpus, &mut writer)?;
    let last = outcome.logs.last().expect("at least one epoch");
    Checkpoint {
        epoch: outcome.logs.len(),
        nets: outcome.nets,
    }
    .save(&args.out.join(FINAL_CKPT))?;
    info!(
        "finished {} epochs, {} policy updates, final val loss {:.4}; run in {}",
        outcome.logs.len(),
        outcome.policy_updates,
        last.val_loss,
        args.out.display()
    );
    Ok(())
}

pub struct EvalArgs<'a> {
    pub checkpoint: &'a Path,
    pub corpus: &'a Path,
    pub split: Split,
    pub tags: Option<&'a [String]>,
    pub out: Option<&'a Path>,
}

pub fn eval(args: EvalArgs<'_>) -> Result<()> {
    let ck = Checkpoint::load(args.checkpoint)?;
    let corpus = load_corpus(args.corpus)?.load_all()?;
    if let Some(tags) = args.tags {
        let known = corpus.manifest.tags();
        if let Some(t) = tags.iter().find(|t| !known.contains(*t)) {
            return Err(CdfaError::InsufficientData(format!(
                "manipulation tag `{t}` is not in the corpus"
            ))
            .into());
        }
    }
    info!(
        "evaluating {} (epoch {}) on split {} with tags {:?}",
        args.checkpoint.display(),
        ck.epoch,
        args.split,
        args.tags
            .map_or_else(|| vec!["<all>".to_string()], <[String]>::to_vec)
    );
    let items = score_split(&ck.nets, &corpus, args.split, args.tags)?;
    let report = evaluate(&items)?;
    if let Some(path) = args.out {
        let f = File::create(path).map_err(|e| io_err(path, e))?;
        write_scores_csv(BufWriter::new(f), &items)?;
        info!("wrote {} scores to {}", items.len(), path.display());
    }
    println!("frames\t{}", report.n_frames);
    println!("videos\t{}", report.n_videos);
    println!("frame_auc\t{:.6}", report.frame_auc);
    println!("video_auc\t{:.6}", report.video_auc);
    Ok(())
}

pub fn plot(run_dir: &Path) -> Result<()> {
    let rows = read_epoch_csv(&run_dir.join(EPOCHS_CSV))?;
    if rows.is_empty() {
        return Err(CdfaError::InsufficientData(format!(
            "{} has no epoch rows",
            run_dir.join(EPOCHS_CSV).display()
        ))
        .into());
    }
    let x: Vec<f64> = rows.iter().map(|r| r.epoch as f64).collect();
    let loss = LineChart {
        title: "Training and validation loss",
        x_label: "epoch",
        y_label: "BCE loss",
        x: x.clone(),
        series: vec![
            Series {
                name: "train",
                values: rows.iter().map(|r| r.train_loss).collect(),
            },
            Series {
                name: "validation",
                values: rows.iter().map(|r| r.val_loss).collect(),
            },
        ],
        y_range: None,
    };
    let policy = LineChart {
        title: "Mean augmentation policy",
        x_label: "epoch",
        y_label: "probability",
        x,
        series: AugOp::ALL
            .iter()
            .map(|op| Series {
                name: op.name(),
                values: rows.iter().map(|r| r.policy[op.index()]).collect(),
            })
            .collect(),
        y_range: Some((0.0, 1.0)),
    };
    for (name, chart) in [("loss.svg", loss), ("policy.svg", policy)] {
        let path = run_dir.join(name);
        let mut f = File::create(&path).map_err(|e| io_err(&path, e))?;
        f.write_all(chart.render().as_bytes())
            .map_err(|e| io_err(&path, e))?;
        info!("wrote {}", path.display());
    }
    Ok(())
}
