//! Monotonic curriculum over the pseudo-fake share of each mini-batch.

use std::f64::consts::FRAC_PI_2;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{
    apply_forgery_augmentation, AugContext, AugOp, AugPolicy, FaceFrame, VideoId,
};
use crate::error::{CdfaError, Result};
use crate::grid::Image;

/// `q(t) = sin(t / ε)` with `ε = 2T/π`, so `q` rises from 0 to 1 over `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurriculumSchedule {
    total_epochs: usize,
    epsilon: f64,
}

impl CurriculumSchedule {
    pub fn new(total_epochs: usize) -> Result<Self> {
        if total_epochs == 0 {
            return Err(CdfaError::Config("total_epochs must be positive".into()));
        }
        Ok(CurriculumSchedule {
            total_epochs,
            epsilon: total_epochs as f64 / FRAC_PI_2,
        })
    }

    pub fn total_epochs(&self) -> usize {
        self.total_epochs
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

pub fn schedule_q(t: usize, schedule: &CurriculumSchedule) -> Result<f64> {
    if t > schedule.total_epochs {
        return Err(CdfaError::Domain(format!(
            "epoch {t} outside [0, {}]",
            schedule.total_epochs
        )));
    }
    Ok((t as f64 / schedule.epsilon).sin())
}

/// Per-batch sample counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub n_real: usize,
    pub n_ofake: usize,
    pub n_pfake: usize,
}

impl BatchPlan {
    pub fn batch_size(&self) -> usize {
        self.n_real + self.n_ofake + self.n_pfake
    }

    /// Splits the fake half by a p-fake fraction, rounding half up.
    pub fn with_pfake_fraction(batch_size: usize, fraction: f64) -> Result<Self> {
        if batch_size < 2 || !batch_size.is_multiple_of(2) {
            return Err(CdfaError::Config(format!(
                "batch size must be even and >= 2, got {batch_size}"
            )));
        }
        if !(0.0..=1.0).contains(&fraction) {
            return Err(CdfaError::Domain(format!(
                "p-fake fraction {fraction} outside [0, 1]"
            )));
        }
        let half = batch_size / 2;
        let n_pfake = ((fraction * half as f64 + 0.5).floor() as usize).min(half);
        Ok(BatchPlan {
            n_real: half,
            n_ofake: half - n_pfake,
            n_pfake,
        })
    }
}

/// `n_pf = round_half_up(q(t) · b/2)`, `n_of = b/2 − n_pf`, `n_r = b/2`.
pub fn plan_batch(t: usize, batch_size: usize, schedule: &CurriculumSchedule) -> Result<BatchPlan> {
    BatchPlan::with_pfake_fraction(batch_size, schedule_q(t, schedule)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn target(self) -> f64 {
        match self {
            Label::Real => 0.0,
            Label::Fake => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    OFake,
    PFake,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub image: Image,
    pub label: Label,
    pub provenance: Provenance,
    pub source_video: VideoId,
    pub source_frame: usize,
    /// Operator and policy used for p-fakes.
    pub chosen_op: Option<AugOp>,
    pub policy: Option<AugPolicy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub items: Vec<BatchItem>,
    /// Policies the policy source produced while assembling the batch.
    pub policies: Vec<AugPolicy>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.items
            .iter()
            .filter(|i| i.provenance == provenance)
            .count()
    }
}

/// Supplies an augmentation policy per p-fake source frame.
pub trait PolicySource: Sync {
    fn policies(&self, frames: &[&FaceFrame]) -> Result<Vec<AugPolicy>>;
}

/// The same policy for every frame.
#[derive(Debug, Clone, Copy)]
pub struct FixedPolicy(pub AugPolicy);

impl PolicySource for FixedPolicy {
    fn policies(&self, frames: &[&FaceFrame]) -> Result<Vec<AugPolicy>> {
        Ok(vec![self.0; frames.len()])
    }
}

fn sample_distinct<'a, R: Rng + ?Sized>(
    pool: &[&'a FaceFrame],
    n: usize,
    what: &str,
    rng: &mut R,
) -> Result<Vec<&'a FaceFrame>> {
    if n > pool.len() {
        return Err(CdfaError::InsufficientData(format!(
            "need {n} distinct {what} frames, pool has {}",
            pool.len()
        )));
    }
    Ok(index::sample(rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i])
        .collect())
}

/// Assembles `B_r ∪ B_of ∪ B_pf` and shuffles it.
///
/// Real and p-fake source frames are drawn jointly without replacement from
/// `real_pool`; item order depends only on `rng`.
pub fn compose_batch<R: Rng + ?Sized>(
    plan: &BatchPlan,
    real_pool: &[&FaceFrame],
    ofake_pool: &[&FaceFrame],
    policy_source: &dyn PolicySource,
    ctx: &AugContext<'_>,
    rng: &mut R,
) -> Result<TrainingBatch> {
    let reals = sample_distinct(real_pool, plan.n_real + plan.n_pfake, "real", rng)?;
    let ofakes = sample_distinct(ofake_pool, plan.n_ofake, "o-fake", rng)?;
    let (real_part, pfake_sources) = reals.split_at(plan.n_real);

    let policies = policy_source.policies(pfake_sources)?;
    let seeds: Vec<u64> = (0..pfake_sources.len()).map(|_| rng.gen()).collect();
    let pfakes: Vec<_> = pfake_sources
        .par_iter()
        .zip(policies.par_iter())
        .zip(seeds.par_iter())
        .map(|((src, policy), &seed)| {
            let mut item_rng = ChaCha8Rng::seed_from_u64(seed);
            apply_forgery_augmentation(src, policy, ctx, &mut item_rng)
        })
        .collect::<Result<_>>()?;

    let mut items = Vec::with_capacity(plan.batch_size());
    items.extend(real_part.iter().map(|f| BatchItem {
        image: f.image.clone(),
        label: Label::Real,
        provenance: Provenance::Real,
        source_video: f.video_id.clone(),
        source_frame: f.frame_index,
        chosen_op: None,
        policy: None,
    }));
    items.extend(ofakes.iter().map(|f| BatchItem {
        image: f.image.clone(),
        label: Label::Fake,
        provenance: Provenance::OFake,
        source_video: f.video_id.clone(),
        source_frame: f.frame_index,
        chosen_op: None,
        policy: None,
    }));
    for ((src, pf), policy) in pfake_sources.iter().zip(pfakes).zip(&policies) {
        items.push(BatchItem {
            image: pf.image,
            label: Label::Fake,
            provenance: Provenance::PFake,
            source_video: src.video_id.clone(),
            source_frame: src.frame_index,
            chosen_op: Some(pf.chosen_op),
            policy: Some(*policy),
        });
    }
    items.shuffle(rng);
    Ok(TrainingBatch { items, policies })
}
