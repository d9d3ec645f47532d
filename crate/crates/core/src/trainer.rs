//! The alternating detector / policy optimization loop and its ablation
//! presets.

use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{AugContext, AugOp, AugParams, AugPolicy, FaceFrame, OpSet};
use crate::curriculum::{
    compose_batch, plan_batch, BatchPlan, CurriculumSchedule, Label, PolicySource, Provenance,
    TrainingBatch,
};
use crate::data::{Corpus, FrameFilter, SourceLabel, Split};
use crate::error::{CdfaError, Result};
use crate::metrics::{mean_policy, ScoredItem};
use crate::nets::{
    adam_step, backward_detector, backward_policy, bce_loss, build_search_batch, cosine_lr,
    AdamState, NetConfig, Networks,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub total_epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub search_frequency: usize,
    pub lr0: f64,
    pub seed: u64,
    pub use_mc: bool,
    pub use_dfs: bool,
    pub enabled_ops: Vec<AugOp>,
    pub use_ofake: bool,
    /// Share of the fake half given to p-fakes when the curriculum is off
    /// and o-fakes are used.
    pub pfake_fraction: f64,
    /// Size of each part (reals, o-fakes) of the fixed validation loss set;
    /// the realized size may be smaller on tiny corpora.
    pub val_loss_frames: usize,
    pub net: NetConfig,
    pub augment: AugParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_epochs: 50,
            warmup_epochs: 5,
            batch_size: 64,
            search_frequency: 10,
            lr0: 1e-4,
            seed: 0,
            use_mc: true,
            use_dfs: true,
            enabled_ops: AugOp::ALL.to_vec(),
            use_ofake: true,
            pfake_fraction: 0.5,
            val_loss_frames: 24,
            net: NetConfig::default(),
            augment: AugParams::default(),
        }
    }
}

impl TrainConfig {
    /// Settings that train the default network on a 32-pixel synthetic
    /// corpus in well under a minute per run on one core.
    pub fn desk_scale() -> Self {
        TrainConfig {
            total_epochs: 80,
            batch_size: 16,
            lr0: 3e-3,
            ..TrainConfig::default()
        }
    }
}

/// Names accepted by [`TrainConfig::preset`].
pub const PRESETS: [&str; 13] = [
    "variant1",
    "variant2",
    "variant3",
    "variant4",
    "variant5",
    "variant6",
    "variant7",
    "variant8",
    "variant9",
    "variant10",
    "variant11",
    "cdfa",
    "baseline",
];

impl TrainConfig {
    /// Applies an ablation preset's switches on top of `self`.
    pub fn with_preset(mut self, name: &str) -> Result<Self> {
        use AugOp::*;
        let all = AugOp::ALL.to_vec();
        // (use_ofake, ops, use_mc, use_dfs)
        let (ofake, ops, mc, dfs) = match name {
            "variant1" => (false, vec![Bi], false, false),
            "variant2" => (false, vec![Sbi], false, false),
            "variant3" => (false, vec![Ssbi], false, false),
            "variant4" => (false, all, false, false),
            "variant5" => (false, all, false, true),
            "variant6" => (true, vec![Bi], true, false),
            "variant7" => (true, vec![Sbi], true, false),
            "variant8" => (true, vec![Ssbi], true, false),
            "variant9" => (true, all, true, false),
            "variant10" => (true, all, false, false),
            "variant11" => (true, all, false, true),
            "cdfa" => (true, all, true, true),
            "baseline" => {
                self.use_ofake = true;
                self.use_mc = false;
                self.use_dfs = false;
                self.pfake_fraction = 0.0;
                self.enabled_ops = AugOp::ALL.to_vec();
                return Ok(self);
            }
            other => {
                return Err(CdfaError::Config(format!(
                    "unknown preset `{other}` (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        self.use_ofake = ofake;
        self.enabled_ops = ops;
        self.use_mc = mc;
        self.use_dfs = dfs;
        self.pfake_fraction = if ofake { 0.5 } else { 1.0 };
        Ok(self)
    }

    pub fn preset(name: &str) -> Result<Self> {
        TrainConfig::default().with_preset(name)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CdfaError::Config(m.to_string()));
        if self.total_epochs == 0 {
            return bad("total_epochs must be positive");
        }
        if self.warmup_epochs >= self.total_epochs {
            return bad("warmup_epochs must be smaller than total_epochs");
        }
        if self.search_frequency == 0 {
            return bad("search_frequency must be at least 1");
        }
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return bad("batch_size must be even and at least 2");
        }
        if self.enabled_ops.is_empty() {
            return bad("enabled_ops must not be empty");
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return bad("lr0 must be positive");
        }
        if !(0.0..=1.0).contains(&self.pfake_fraction) {
            return bad("pfake_fraction must lie in [0, 1]");
        }
        if self.use_mc && !self.use_ofake {
            return bad("the curriculum needs o-fakes (use_mc requires use_ofake)");
        }
        self.net.validate()?;
        self.augment.validate()
    }

    pub fn op_set(&self) -> OpSet {
        OpSet::from_ops(&self.enabled_ops)
    }

    fn plan(&self, epoch: usize, schedule: &CurriculumSchedule) -> Result<BatchPlan> {
        if self.use_mc {
            plan_batch(epoch, self.batch_size, schedule)
        } else if !self.use_ofake {
            BatchPlan::with_pfake_fraction(self.batch_size, 1.0)
        } else {
            BatchPlan::with_pfake_fraction(self.batch_size, self.pfake_fraction)
        }
    }
}

/// Per-epoch summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Mean of every augmentation policy computed during the epoch.
    pub mean_policy: [f64; AugOp::COUNT],
    /// Planned per-batch composition.
    pub n_of: usize,
    pub n_pf: usize,
    /// Realized totals over the epoch.
    pub total_ofake: usize,
    pub total_pfake: usize,
    pub steps: usize,
    pub policy_updates: usize,
    pub lr: f64,
}

pub const EPOCH_CSV_HEADER: [&str; 8] = [
    "epoch",
    "train_loss",
    "val_loss",
    "p_BI",
    "p_SBI",
    "p_SSBI",
    "n_of",
    "n_pf",
];

pub fn write_epoch_csv<W: Write>(out: W, logs: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| CdfaError::Usage(format!("writing epoch log: {e}"));
    w.write_record(EPOCH_CSV_HEADER).map_err(err)?;
    for l in logs {
        write_epoch_row(&mut w, l).map_err(err)?;
    }
    w.flush()
        .map_err(|e| CdfaError::Usage(format!("writing epoch log: {e}")))
}

pub fn write_epoch_row<W: Write>(w: &mut csv::Writer<W>, l: &EpochLog) -> csv::Result<()> {
    let p = l.mean_policy;
    w.write_record([
        l.epoch.to_string(),
        l.train_loss.to_string(),
        l.val_loss.to_string(),
        p[0].to_string(),
        p[1].to_string(),
        p[2].to_string(),
        l.n_of.to_string(),
        l.n_pf.to_string(),
    ])
}

/// One parsed row of an epoch CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub policy: [f64; AugOp::COUNT],
    pub n_of: usize,
    pub n_pf: usize,
}

pub fn read_epoch_csv(path: &Path) -> Result<Vec<EpochRow>> {
    let bad = |m: String| CdfaError::format(path, m);
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => CdfaError::io(path, io),
        other => bad(format!("{other:?}")),
    })?;
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(EPOCH_CSV_HEADER) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let float = |i: usize| {
            field(i)
                .parse::<f64>()
                .map_err(|_| bad(format!("row {}: `{}` is not a number", line + 1, field(i))))
        };
        let count = |i: usize| {
            field(i)
                .parse::<usize>()
                .map_err(|_| bad(format!("row {}: `{}` is not a count", line + 1, field(i))))
        };
        rows.push(EpochRow {
            epoch: count(0)?,
            train_loss: float(1)?,
            val_loss: float(2)?,
            policy: [float(3)?, float(4)?, float(5)?],
            n_of: count(6)?,
            n_pf: count(7)?,
        });
    }
    Ok(rows)
}

/// Policies for p-fake sources from `softmax(h_γ(f_α(x)))`.
#[derive(Debug, Clone, Copy)]
pub struct NetworkPolicy<'n> {
    pub nets: &'n Networks,
    pub enabled: OpSet,
}

impl PolicySource for NetworkPolicy<'_> {
    fn policies(&self, frames: &[&FaceFrame]) -> Result<Vec<AugPolicy>> {
        frames
            .par_iter()
            .map(|f| self.nets.policy(&f.image, self.enabled))
            .collect()
    }
}

/// Which parameters a step changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Detector,
    Policy,
}

/// Callbacks from inside [`train_cdfa`].
pub trait TrainObserver {
    fn on_start(&mut self, _nets: &Networks) -> Result<()> {
        Ok(())
    }

    fn on_step(
        &mut self,
        _phase: Phase,
        _epoch: usize,
        _step: usize,
        _nets: &Networks,
    ) -> Result<()> {
        Ok(())
    }

    fn on_epoch_end(&mut self, _log: &EpochLog, _nets: &Networks) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Mutable training state.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub epoch: usize,
    /// Global step counter, strictly increasing across epochs.
    pub step: u64,
    pub nets: Networks,
    pub alpha_opt: AdamState,
    pub beta_opt: AdamState,
    pub gamma_opt: AdamState,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(nets: Networks, rng: ChaCha8Rng) -> Self {
        TrainState {
            epoch: 0,
            step: 0,
            alpha_opt: AdamState::new(&nets.alpha),
            beta_opt: AdamState::new(&nets.beta),
            gamma_opt: AdamState::new(&nets.gamma),
            nets,
            rng,
        }
    }
}

/// One Adam step on α and β over the batch; γ is untouched.
pub fn detector_phase_step(state: &mut TrainState, batch: &TrainingBatch, lr: f64) -> Result<f64> {
    let items: Vec<_> = batch.items.iter().map(|it| (&it.image, it.label)).collect();
    let g = backward_detector(&state.nets, &items)?;
    adam_step(&mut state.nets.alpha, &g.alpha, &mut state.alpha_opt, lr)?;
    adam_step(&mut state.nets.beta, &g.beta, &mut state.beta_opt, lr)?;
    state.step += 1;
    Ok(g.loss)
}

/// Builds `B_sc` from `b/2` frames of `val_pool` and takes one Adam step on γ.
/// Returns the search loss and the policies computed on the batch.
pub fn policy_phase_step(
    state: &mut TrainState,
    val_pool: &[&FaceFrame],
    batch_size: usize,
    ctx: &AugContext<'_>,
    enabled: OpSet,
    lr: f64,
) -> Result<(f64, Vec<[f64; AugOp::COUNT]>)> {
    let n = batch_size / 2;
    if val_pool.len() < n || n == 0 {
        return Err(CdfaError::InsufficientData(format!(
            "policy search needs {n} validation reals, pool has {}",
            val_pool.len()
        )));
    }
    let reals: Vec<&FaceFrame> = index::sample(&mut state.rng, val_pool.len(), n)
        .into_iter()
        .map(|i| val_pool[i])
        .collect();
    let search = build_search_batch(&state.nets, &reals, ctx, enabled, &mut state.rng)?;
    let g = backward_policy(&state.nets, &search)?;
    adam_step(&mut state.nets.gamma, &g.gamma, &mut state.gamma_opt, lr)?;
    Ok((g.loss, search.mixtures.iter().map(|m| m.policy()).collect()))
}

/// Frames of one corpus arranged for training.
#[derive(Debug)]
pub struct TrainingData<'c> {
    pub train_reals: Vec<&'c FaceFrame>,
    pub train_ofakes: Vec<&'c FaceFrame>,
    /// Validation reals used by the policy search.
    pub search_reals: Vec<&'c FaceFrame>,
    /// Disjoint validation slice for loss logging.
    pub log_reals: Vec<&'c FaceFrame>,
    pub log_ofakes: Vec<&'c FaceFrame>,
    pub train_ctx: AugContext<'c>,
    pub val_ctx: AugContext<'c>,
}

impl<'c> TrainingData<'c> {
    /// Splits validation identities alternately into search and logging
    /// slices; o-fakes are limited to the non-held-out tags.
    pub fn new(corpus: &'c Corpus, augment: &AugParams) -> Result<Self> {
        let tags = corpus.manifest.training_tags();
        let train_reals = corpus.frames(FrameFilter {
            split: Split::Train,
            label: SourceLabel::Real,
            tags: None,
        });
        let train_ofakes = corpus.frames(FrameFilter {
            split: Split::Train,
            label: SourceLabel::Ofake,
            tags: Some(&tags),
        });
        let val_real_clips: Vec<_> = corpus
            .clips_in(Split::Val)
            .filter(|(e, _)| e.source_label == SourceLabel::Real)
            .collect();
        let mut search_reals = Vec::new();
        let mut log_reals = Vec::new();
        let mut log_ids = Vec::new();
        for (k, (e, clip)) in val_real_clips.iter().enumerate() {
            if k % 2 == 0 {
                search_reals.extend(clip.frames.iter());
            } else {
                log_reals.extend(clip.frames.iter());
                log_ids.push(e.video_id.clone());
            }
        }
        let log_ofakes = corpus
            .clips_in(Split::Val)
            .filter(|(e, _)| {
                e.source_label == SourceLabel::Ofake
                    && e.manipulation_tag
                        .as_ref()
                        .is_some_and(|t| tags.contains(t))
                    && e.counterpart.as_ref().is_some_and(|c| log_ids.contains(c))
            })
            .flat_map(|(_, c)| c.frames.iter())
            .collect();
        if train_reals.is_empty() {
            return Err(CdfaError::InsufficientData("no training reals".into()));
        }
        let real_clips = |split| {
            corpus
                .clips_in(split)
                .filter(|(e, _)| e.source_label == SourceLabel::Real)
                .map(|(_, c)| c.frames.as_slice())
                .collect::<Vec<_>>()
        };
        let train_ctx = AugContext::new(
            train_reals.iter().copied(),
            real_clips(Split::Train),
            augment.clone(),
        );
        let val_ctx = AugContext::new(
            train_reals
                .iter()
                .chain(&search_reals)
                .chain(&log_reals)
                .copied(),
            real_clips(Split::Val),
            augment.clone(),
        );
        Ok(TrainingData {
            train_reals,
            train_ofakes,
            search_reals,
            log_reals,
            log_ofakes,
            train_ctx,
            val_ctx,
        })
    }

    /// `|D_tr|`: training reals plus training o-fakes.
    pub fn train_size(&self) -> usize {
        self.train_reals.len() + self.train_ofakes.len()
    }
}

/// Fixed validation-loss set: held-out reals and o-fakes of the training
/// manipulations, weighted equally.
struct ValSet {
    reals: Vec<crate::grid::Image>,
    ofakes: Vec<crate::grid::Image>,
}

fn pick<'a>(pool: &[&'a FaceFrame], n: usize, rng: &mut ChaCha8Rng) -> Vec<&'a FaceFrame> {
    let n = n.min(pool.len());
    let mut idx = index::sample(rng, pool.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i]).collect()
}

fn build_val_set(data: &TrainingData<'_>, cfg: &TrainConfig) -> ValSet {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0005_eed0_f7a1);
    let images = |frames: Vec<&FaceFrame>| frames.iter().map(|f| f.image.clone()).collect();
    ValSet {
        reals: images(pick(&data.log_reals, cfg.val_loss_frames, &mut rng)),
        ofakes: images(pick(&data.log_ofakes, cfg.val_loss_frames, &mut rng)),
    }
}

fn val_loss(nets: &Networks, set: &ValSet) -> Result<Option<f64>> {
    let part = |imgs: &[crate::grid::Image], label| -> Result<Option<f64>> {
        if imgs.is_empty() {
            return Ok(None);
        }
        let losses: Vec<f64> = imgs
            .par_iter()
            .map(|x| Ok(bce_loss(&nets.predict(x)?, label)))
            .collect::<Result<_>>()?;
        Ok(Some(losses.iter().sum::<f64>() / imgs.len() as f64))
    };
    let parts = [
        part(&set.reals, Label::Real)?,
        part(&set.ofakes, Label::Fake)?,
    ];
    let known: Vec<f64> = parts.into_iter().flatten().collect();
    Ok((!known.is_empty()).then(|| known.iter().sum::<f64>() / known.len() as f64))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub nets: Networks,
    pub logs: Vec<EpochLog>,
    pub policy_updates: usize,
}

/// Runs the full loop on `corpus`. The network input size follows the corpus.
pub fn train_cdfa(
    cfg: &TrainConfig,
    corpus: &Corpus,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = TrainingData::new(corpus, &cfg.augment)?;
    let size = corpus.manifest.image_size;
    let net_cfg = NetConfig {
        input_height: size,
        input_width: size,
        ..cfg.net.clone()
    };
    let enabled = cfg.op_set();
    let schedule = CurriculumSchedule::new(cfg.total_epochs)?;
    let steps_per_epoch = data.train_size() / cfg.batch_size;
    if steps_per_epoch == 0 {
        return Err(CdfaError::InsufficientData(format!(
            "training set of {} frames is smaller than one batch of {}",
            data.train_size(),
            cfg.batch_size
        )));
    }
    if cfg.use_dfs && data.search_reals.len() < cfg.batch_size / 2 {
        return Err(CdfaError::InsufficientData(format!(
            "policy search needs {} validation reals, found {}",
            cfg.batch_size / 2,
            data.search_reals.len()
        )));
    }
    let uses_ofakes = (0..cfg.total_epochs)
        .map(|t| cfg.plan(t, &schedule).map(|p| p.n_ofake))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .any(|n| n > 0);
    if uses_ofakes && data.train_ofakes.is_empty() {
        return Err(CdfaError::InsufficientData("no training o-fakes".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nets = Networks::init(net_cfg, &mut rng)?;
    let mut state = TrainState::new(nets, rng);
    let val_set = build_val_set(&data, cfg);
    let fixed_uniform = AugPolicy::uniform_over(&cfg.enabled_ops)?;
    observer.on_start(&state.nets)?;

    let mut logs = Vec::with_capacity(cfg.total_epochs);
    let mut total_updates = 0;
    for t in 0..cfg.total_epochs {
        state.epoch = t;
        let lr = cosine_lr(cfg.lr0, t, cfg.total_epochs);
        let plan = cfg.plan(t, &schedule)?;
        let mut loss_sum = 0.0;
        let mut policies: Vec<[f64; AugOp::COUNT]> = Vec::new();
        let (mut tot_of, mut tot_pf, mut updates) = (0, 0, 0);

        for step in 0..steps_per_epoch {
            let batch = if cfg.use_dfs {
                let source = NetworkPolicy {
                    nets: &state.nets,
                    enabled,
                };
                compose_batch(
                    &plan,
                    &data.train_reals,
                    &data.train_ofakes,
                    &source,
                    &data.train_ctx,
                    &mut state.rng,
                )?
            } else {
                compose_batch(
                    &plan,
                    &data.train_reals,
                    &data.train_ofakes,
                    &crate::curriculum::FixedPolicy(fixed_uniform),
                    &data.train_ctx,
                    &mut state.rng,
                )?
            };
            tot_of += batch.count(Provenance::OFake);
            tot_pf += batch.count(Provenance::PFake);
            if batch.policies.is_empty() {
                // No p-fakes this step: record what the policy would pick on
                // the real half so every epoch has a policy row.
                if cfg.use_dfs {
                    let reals: Vec<_> = batch
                        .items
                        .iter()
                        .filter(|it| it.provenance == Provenance::Real)
                        .map(|it| &it.image)
                        .collect();
                    let ps = reals
                        .par_iter()
                        .map(|x| state.nets.policy(x, enabled).map(|p| p.probs()))
                        .collect::<Result<Vec<_>>>()?;
                    policies.extend(ps);
                } else {
                    policies.push(fixed_uniform.probs());
                }
            } else {
                policies.extend(batch.policies.iter().map(AugPolicy::probs));
            }

            loss_sum += detector_phase_step(&mut state, &batch, lr)?;
            observer.on_step(Phase::Detector, t, step, &state.nets)?;

            if cfg.use_dfs && t > cfg.warmup_epochs && step % cfg.search_frequency == 0 {
                policy_phase_step(
                    &mut state,
                    &data.search_reals,
                    cfg.batch_size,
                    &data.val_ctx,
                    enabled,
                    lr,
                )?;
                updates += 1;
                observer.on_step(Phase::Policy, t, step, &state.nets)?;
            }
        }
        total_updates += updates;
        let as_policies: Vec<AugPolicy> = policies
            .iter()
            .map(|p| AugPolicy::new(*p))
            .collect::<Result<_>>()?;
        let log = EpochLog {
            epoch: t,
            train_loss: loss_sum / steps_per_epoch as f64,
            val_loss: val_loss(&state.nets, &val_set)?.unwrap_or(f64::NAN),
            mean_policy: mean_policy(&as_policies).expect("at least one step per epoch"),
            n_of: plan.n_ofake,
            n_pf: plan.n_pfake,
            total_ofake: tot_of,
            total_pfake: tot_pf,
            steps: steps_per_epoch,
            policy_updates: updates,
            lr,
        };
        observer.on_epoch_end(&log, &state.nets)?;
        logs.push(log);
    }
    Ok(TrainOutcome {
        nets: state.nets,
        logs,
        policy_updates: total_updates,
    })
}

/// Expected policy updates per epoch under the warm-up and mod-`s` rule.
pub fn expected_policy_updates(cfg: &TrainConfig, epoch: usize, steps_per_epoch: usize) -> usize {
    if !cfg.use_dfs || epoch <= cfg.warmup_epochs {
        0
    } else {
        (0..steps_per_epoch)
            .filter(|s| s % cfg.search_frequency == 0)
            .count()
    }
}

/// Scores the reals of `split` and its o-fakes restricted to `tags`.
pub fn score_split(
    nets: &Networks,
    corpus: &Corpus,
    split: Split,
    tags: Option<&[String]>,
) -> Result<Vec<ScoredItem>> {
    let mut frames: Vec<(&FaceFrame, bool)> = corpus
        .frames(FrameFilter {
            split,
            label: SourceLabel::Real,
            tags: None,
        })
        .into_iter()
        .map(|f| (f, false))
        .collect();
    frames.extend(
        corpus
            .frames(FrameFilter {
                split,
                label: SourceLabel::Ofake,
                tags,
            })
            .into_iter()
            .map(|f| (f, true)),
    );
    frames
        .par_iter()
        .map(|(f, label)| {
            Ok(ScoredItem {
                score: nets.predict(&f.image)?.probability,
                label: *label,
                video_id: f.video_id.to_string(),
                frame_index: f.frame_index,
            })
        })
        .collect()
}
