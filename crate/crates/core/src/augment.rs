//! Forgery augmentation operators (BI, SBI, SSBI) and policy-controlled
//! pseudo-fake generation.

use std::collections::HashMap;
use std::fmt;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CdfaError, Result};
use crate::geometry::{convex_hull, make_blend_mask, rasterize, Landmarks, MaskParams};
use crate::grid::{Image, MaskImage};

/// Identifier of the video a frame belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VideoId(pub String);

impl VideoId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VideoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VideoId {
    fn from(s: &str) -> Self {
        VideoId(s.to_owned())
    }
}

/// One face image with its landmarks and position in its video.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFrame {
    pub image: Image,
    pub landmarks: Landmarks,
    pub video_id: VideoId,
    pub frame_index: usize,
}

impl FaceFrame {
    pub fn validate(&self) -> Result<()> {
        if self.image.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(CdfaError::DataIntegrity(format!(
                "frame {}#{} has pixel values outside [0, 1]",
                self.video_id, self.frame_index
            )));
        }
        self.landmarks
            .validate_bounds(self.image.height(), self.image.width())
    }
}

/// The three forgery augmentation operations, in policy-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AugOp {
    Bi,
    Sbi,
    Ssbi,
}

impl AugOp {
    pub const ALL: [AugOp; 3] = [AugOp::Bi, AugOp::Sbi, AugOp::Ssbi];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            AugOp::Bi => 0,
            AugOp::Sbi => 1,
            AugOp::Ssbi => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<AugOp> {
        AugOp::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            AugOp::Bi => "BI",
            AugOp::Sbi => "SBI",
            AugOp::Ssbi => "SSBI",
        }
    }
}

impl fmt::Display for AugOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AugOp {
    type Err = CdfaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BI" => Ok(AugOp::Bi),
            "SBI" => Ok(AugOp::Sbi),
            "SSBI" => Ok(AugOp::Ssbi),
            other => Err(CdfaError::Config(format!(
                "unknown augmentation op `{other}`"
            ))),
        }
    }
}

/// Probability of applying each operation; always on the 3-simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugPolicy {
    probs: [f64; AugOp::COUNT],
}

impl AugPolicy {
    const TOLERANCE: f64 = 1e-9;

    pub fn new(probs: [f64; AugOp::COUNT]) -> Result<Self> {
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(CdfaError::SimplexViolation(format!(
                "entries must lie in [0, 1]: {probs:?}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::TOLERANCE {
            return Err(CdfaError::SimplexViolation(format!(
                "entries sum to {sum}: {probs:?}"
            )));
        }
        Ok(AugPolicy { probs })
    }

    pub fn uniform() -> Self {
        AugPolicy {
            probs: [1.0 / 3.0; AugOp::COUNT],
        }
    }

    /// Uniform over `ops`, zero elsewhere.
    pub fn uniform_over(ops: &[AugOp]) -> Result<Self> {
        if ops.is_empty() {
            return Err(CdfaError::Config("operator set is empty".into()));
        }
        let mut probs = [0.0; AugOp::COUNT];
        let enabled = OpSet::from_ops(ops);
        let k = enabled.len() as f64;
        for op in enabled.iter() {
            probs[op.index()] = 1.0 / k;
        }
        Ok(AugPolicy { probs })
    }

    pub fn one_hot(op: AugOp) -> Self {
        let mut probs = [0.0; AugOp::COUNT];
        probs[op.index()] = 1.0;
        AugPolicy { probs }
    }

    pub fn probs(&self) -> [f64; AugOp::COUNT] {
        self.probs
    }

    pub fn prob(&self, op: AugOp) -> f64 {
        self.probs[op.index()]
    }

    /// Draws `j ~ p` by inverting the cumulative distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AugOp {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last_positive = AugOp::Bi;
        for op in AugOp::ALL {
            let p = self.probs[op.index()];
            if p > 0.0 {
                last_positive = op;
                acc += p;
                if u < acc {
                    return op;
                }
            }
        }
        last_positive
    }
}

/// A subset of the operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OpSet([bool; AugOp::COUNT]);

impl OpSet {
    pub fn all() -> Self {
        OpSet([true; AugOp::COUNT])
    }

    pub fn from_ops(ops: &[AugOp]) -> Self {
        let mut set = [false; AugOp::COUNT];
        for op in ops {
            set[op.index()] = true;
        }
        OpSet(set)
    }

    pub fn contains(&self, op: AugOp) -> bool {
        self.0[op.index()]
    }

    pub fn len(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = AugOp> + '_ {
        AugOp::ALL.into_iter().filter(|op| self.contains(*op))
    }

    pub fn to_vec(&self) -> Vec<AugOp> {
        self.iter().collect()
    }
}

/// A blended sample produced from a real frame; always labeled fake.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoFake {
    pub image: Image,
    pub mask: MaskImage,
    pub chosen_op: AugOp,
}

impl PseudoFake {
    pub const LABEL: u8 = 1;

    pub fn label(&self) -> u8 {
        Self::LABEL
    }
}

/// Photometric and resampling ranges of the self-blending transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SbiParams {
    /// Per-channel multiplicative brightness range.
    pub brightness: (f64, f64),
    /// Per-channel additive shift range.
    pub shift: (f64, f64),
    /// Resize-then-restore scale range.
    pub resize: (f64, f64),
}

impl Default for SbiParams {
    fn default() -> Self {
        SbiParams {
            brightness: (0.7, 1.3),
            shift: (-0.1, 0.1),
            resize: (0.95, 1.05),
        }
    }
}

impl SbiParams {
    pub fn identity() -> Self {
        SbiParams {
            brightness: (1.0, 1.0),
            shift: (0.0, 0.0),
            resize: (1.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("brightness", self.brightness),
            ("shift", self.shift),
            ("resize", self.resize),
        ] {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(CdfaError::Config(format!("sbi.{name}: empty range")));
            }
        }
        if self.resize.0 <= 0.0 {
            return Err(CdfaError::Config("sbi.resize must be positive".into()));
        }
        Ok(())
    }
}

/// Configuration shared by all operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugParams {
    pub mask: MaskParams,
    pub sbi: SbiParams,
    /// Number of donor frames scanned per BI call.
    pub bi_pool_size: usize,
    /// Match the donor's mean face color to the source before blending.
    pub bi_color_transfer: bool,
}

impl Default for AugParams {
    fn default() -> Self {
        AugParams {
            mask: MaskParams::default(),
            sbi: SbiParams::default(),
            bi_pool_size: 100,
            bi_color_transfer: false,
        }
    }
}

impl AugParams {
    pub fn validate(&self) -> Result<()> {
        self.mask.validate()?;
        self.sbi.validate()?;
        if self.bi_pool_size == 0 {
            return Err(CdfaError::Config("bi_pool_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Read-only frame access needed by the operators: BI donors and whole videos
/// for temporal shifts.
#[derive(Debug, Clone)]
pub struct AugContext<'a> {
    donors: Vec<&'a FaceFrame>,
    videos: HashMap<&'a str, &'a [FaceFrame]>,
    pub params: AugParams,
}

impl<'a> AugContext<'a> {
    pub fn new(
        donors: impl IntoIterator<Item = &'a FaceFrame>,
        videos: impl IntoIterator<Item = &'a [FaceFrame]>,
        params: AugParams,
    ) -> Self {
        let videos = videos
            .into_iter()
            .filter_map(|frames| frames.first().map(|f| (f.video_id.as_str(), frames)))
            .collect();
        AugContext {
            donors: donors.into_iter().collect(),
            videos,
            params,
        }
    }

    pub fn video(&self, id: &VideoId) -> Option<&'a [FaceFrame]> {
        self.videos.get(id.as_str()).copied()
    }

    /// A uniform sample of up to `bi_pool_size` donors from other videos.
    pub fn bi_pool<R: Rng + ?Sized>(&self, source: &FaceFrame, rng: &mut R) -> Vec<&'a FaceFrame> {
        let eligible: Vec<&'a FaceFrame> = self
            .donors
            .iter()
            .copied()
            .filter(|d| d.video_id != source.video_id)
            .collect();
        let k = self.params.bi_pool_size.min(eligible.len());
        index::sample(rng, eligible.len(), k)
            .into_iter()
            .map(|i| eligible[i])
            .collect()
    }
}

/// `target ⊙ M + source ⊙ (1 − M)`, per channel with a shared mask.
pub fn blend(source: &Image, target: &Image, mask: &MaskImage) -> Result<Image> {
    if !source.same_shape(target)
        || mask.height() != source.height()
        || mask.width() != source.width()
    {
        return Err(CdfaError::Dimension(format!(
            "blend needs equal shapes: source {}x{}, target {}x{}, mask {}x{}",
            source.height(),
            source.width(),
            target.height(),
            target.width(),
            mask.height(),
            mask.width()
        )));
    }
    let mut out = source.clone();
    let m = mask.values();
    for (px, ((o, s), t)) in out
        .data_mut()
        .chunks_exact_mut(Image::CHANNELS)
        .zip(source.data().chunks_exact(Image::CHANNELS))
        .zip(target.data().chunks_exact(Image::CHANNELS))
        .enumerate()
    {
        let w = m[px];
        for c in 0..Image::CHANNELS {
            o[c] = t[c] * w + s[c] * (1.0 - w);
        }
    }
    Ok(out)
}

/// The pool member with the smallest landmark distance to `source`; ties go
/// to the lowest index.
pub fn op_bi<'p>(source: &FaceFrame, pool: &[&'p FaceFrame]) -> Result<&'p FaceFrame> {
    let mut best: Option<(f64, &'p FaceFrame)> = None;
    for cand in pool {
        if !cand.image.same_shape(&source.image) {
            return Err(CdfaError::Dimension(format!(
                "BI candidate {}#{} has a different frame size",
                cand.video_id, cand.frame_index
            )));
        }
        let d = source.landmarks.distance(&cand.landmarks);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, cand));
        }
    }
    best.map(|(_, f)| f).ok_or_else(|| {
        CdfaError::InsufficientCandidates(format!(
            "no donor frames available for {}#{}",
            source.video_id, source.frame_index
        ))
    })
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Bilinear resampling with half-pixel centers.
pub fn resize_bilinear(img: &Image, height: usize, width: usize) -> Image {
    let (sh, sw) = (img.height(), img.width());
    if sh == height && sw == width {
        return img.clone();
    }
    let mut out = Image::new(height, width);
    let sy = sh as f64 / height as f64;
    let sx = sw as f64 / width as f64;
    for r in 0..height {
        let fy = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let ty = fy - y0 as f64;
        for c in 0..width {
            let fx = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let tx = fx - x0 as f64;
            for ch in 0..Image::CHANNELS {
                let top = img.get(y0, x0, ch) * (1.0 - tx) + img.get(y0, x1, ch) * tx;
                let bot = img.get(y1, x0, ch) * (1.0 - tx) + img.get(y1, x1, ch) * tx;
                out.set(r, c, ch, top * (1.0 - ty) + bot * ty);
            }
        }
    }
    out
}

/// The source frame with a random photometric change and a small
/// resize-then-restore; landmarks are untouched.
pub fn op_sbi<R: Rng + ?Sized>(source: &FaceFrame, rng: &mut R, params: &SbiParams) -> FaceFrame {
    let (h, w) = (source.image.height(), source.image.width());
    let scale: [f64; 3] = std::array::from_fn(|_| uniform_in(rng, params.brightness));
    let shift: [f64; 3] = std::array::from_fn(|_| uniform_in(rng, params.shift));
    let factor = uniform_in(rng, params.resize);

    let rh = ((h as f64 * factor).round() as usize).max(1);
    let rw = ((w as f64 * factor).round() as usize).max(1);
    let mut image = if rh == h && rw == w {
        source.image.clone()
    } else {
        resize_bilinear(&resize_bilinear(&source.image, rh, rw), h, w)
    };
    for px in image.data_mut().chunks_exact_mut(Image::CHANNELS) {
        for c in 0..Image::CHANNELS {
            px[c] = (px[c] * scale[c] + shift[c]).clamp(0.0, 1.0);
        }
    }
    FaceFrame {
        image,
        landmarks: source.landmarks.clone(),
        video_id: source.video_id.clone(),
        frame_index: source.frame_index,
    }
}

/// Inclusive range of the temporal offset used by SSBI.
pub const SSBI_SHIFT_RANGE: (usize, usize) = (5, 10);

/// Applies the clamp-then-step rule: shift by `±delta`, clamp into the video,
/// and if that lands on `index` itself move to the nearest other frame.
pub fn ssbi_target_index(index: usize, len: usize, delta: usize, forward: bool) -> usize {
    debug_assert!(len >= 2 && index < len);
    let shifted = if forward {
        (index + delta).min(len - 1)
    } else {
        index.saturating_sub(delta)
    };
    if shifted != index {
        shifted
    } else if index == 0 {
        1
    } else if index == len - 1 {
        len - 2
    } else if forward {
        index + 1
    } else {
        index - 1
    }
}

/// Samples `(delta, forward)` for SSBI.
pub fn sample_ssbi_shift<R: Rng + ?Sized>(rng: &mut R) -> (usize, bool) {
    let delta = rng.gen_range(SSBI_SHIFT_RANGE.0..=SSBI_SHIFT_RANGE.1);
    (delta, rng.gen_bool(0.5))
}

/// Another frame of the same video, 5–10 frames away.
pub fn op_ssbi<'v, R: Rng + ?Sized>(
    source: &FaceFrame,
    video: &'v [FaceFrame],
    rng: &mut R,
) -> Result<&'v FaceFrame> {
    if video.len() < 2 {
        return Err(CdfaError::InsufficientFrames {
            video_id: source.video_id.to_string(),
            len: video.len(),
        });
    }
    if source.frame_index >= video.len() {
        return Err(CdfaError::DataIntegrity(format!(
            "frame index {} outside video {} of length {}",
            source.frame_index,
            source.video_id,
            video.len()
        )));
    }
    let (delta, forward) = sample_ssbi_shift(rng);
    Ok(&video[ssbi_target_index(source.frame_index, video.len(), delta, forward)])
}

/// Shifts the target's mean color inside the face hull onto the source's.
fn transfer_color(source: &FaceFrame, target: &Image) -> Result<Image> {
    let hull = convex_hull(source.landmarks.points())?;
    let region = rasterize(&hull, target.height(), target.width());
    let mut sums = [[0.0; 3]; 2];
    let mut n = 0.0;
    for (px, &m) in region.values().iter().enumerate() {
        if m > 0.0 {
            n += 1.0;
            let (s, t) = (&source.image.data()[px * 3..], &target.data()[px * 3..]);
            for c in 0..3 {
                sums[0][c] += s[c];
                sums[1][c] += t[c];
            }
        }
    }
    let mut out = target.clone();
    if n > 0.0 {
        for px in out.data_mut().chunks_exact_mut(3) {
            for c in 0..3 {
                px[c] = (px[c] + (sums[0][c] - sums[1][c]) / n).clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

/// Runs one specific operator: pick the target face, build the mask from the
/// source landmarks, blend.
pub fn realize_op<R: Rng + ?Sized>(
    op: AugOp,
    source: &FaceFrame,
    ctx: &AugContext<'_>,
    rng: &mut R,
) -> Result<PseudoFake> {
    let target: Image = match op {
        AugOp::Bi => {
            let pool = ctx.bi_pool(source, rng);
            let donor = op_bi(source, &pool)?;
            if ctx.params.bi_color_transfer {
                transfer_color(source, &donor.image)?
            } else {
                donor.image.clone()
            }
        }
        AugOp::Sbi => op_sbi(source, rng, &ctx.params.sbi).image,
        AugOp::Ssbi => {
            let video =
                ctx.video(&source.video_id)
                    .ok_or_else(|| CdfaError::InsufficientFrames {
                        video_id: source.video_id.to_string(),
                        len: 0,
                    })?;
            op_ssbi(source, video, rng)?.image.clone()
        }
    };
    let (h, w) = (source.image.height(), source.image.width());
    let mask = make_blend_mask(&source.landmarks, h, w, rng, &ctx.params.mask)?.mask;
    let image = blend(&source.image, &target, &mask)?;
    Ok(PseudoFake {
        image,
        mask,
        chosen_op: op,
    })
}

/// Samples an operator from `policy` and applies it.
pub fn apply_forgery_augmentation<R: Rng + ?Sized>(
    source: &FaceFrame,
    policy: &AugPolicy,
    ctx: &AugContext<'_>,
    rng: &mut R,
) -> Result<PseudoFake> {
    let policy = AugPolicy::new(policy.probs())?;
    let op = policy.sample(rng);
    realize_op(op, source, ctx, rng)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::{Point, LANDMARK_COUNT};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn ring_landmarks(cx: f64, cy: f64, r: f64) -> Landmarks {
        Landmarks::new(
            (0..LANDMARK_COUNT)
                .map(|i| {
                    let th = i as f64 / LANDMARK_COUNT as f64 * std::f64::consts::TAU;
                    Point::new(cx + r * th.cos(), cy + r * th.sin())
                })
                .collect(),
        )
        .unwrap()
    }

    pub(crate) fn gray_frame(video: &str, index: usize, value: f64, size: usize) -> FaceFrame {
        let c = size as f64 / 2.0;
        FaceFrame {
            image: Image::filled(size, size, value),
            landmarks: ring_landmarks(c, c, size as f64 / 4.0),
            video_id: video.into(),
            frame_index: index,
        }
    }

    fn textured_video(video: &str, len: usize, size: usize) -> Vec<FaceFrame> {
        (0..len)
            .map(|i| {
                let mut f = gray_frame(video, i, 0.0, size);
                for (k, v) in f.image.data_mut().iter_mut().enumerate() {
                    *v = ((k * 7 + i * 13) % 17) as f64 / 16.0;
                }
                f
            })
            .collect()
    }

    #[test]
    fn blend_extremes_and_midpoint() {
        let src = gray_frame("a", 0, 0.2, 6);
        let tgt = Image::filled(6, 6, 0.8);
        assert_eq!(
            blend(&src.image, &tgt, &MaskImage::zeros(6, 6)).unwrap(),
            src.image
        );
        assert_eq!(
            blend(&src.image, &tgt, &MaskImage::filled(6, 6, 1.0)).unwrap(),
            tgt
        );
        let mid = blend(&src.image, &tgt, &MaskImage::filled(6, 6, 0.5)).unwrap();
        assert!(mid.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn blend_rejects_shape_mismatch() {
        let src = gray_frame("a", 0, 0.2, 6);
        let err = blend(&src.image, &Image::new(5, 6), &MaskImage::zeros(6, 6));
        assert!(matches!(err, Err(CdfaError::Dimension(_))));
        let err = blend(&src.image, &Image::new(6, 6), &MaskImage::zeros(6, 5));
        assert!(matches!(err, Err(CdfaError::Dimension(_))));
    }

    #[test]
    fn bi_picks_nearest_with_index_tie_break() {
        let src = gray_frame("src", 0, 0.5, 16);
        let mut exact = gray_frame("x", 0, 0.1, 16);
        exact.landmarks = src.landmarks.clone();
        let far = {
            let mut f = gray_frame("y", 0, 0.1, 16);
            f.landmarks = src.landmarks.translated(1.0, 0.0);
            f
        };
        assert_eq!(op_bi(&src, &[&far, &exact]).unwrap().video_id.as_str(), "x");

        let mut a = gray_frame("a", 0, 0.1, 16);
        a.landmarks = src.landmarks.translated(1.0, 0.0);
        let mut b = gray_frame("b", 0, 0.1, 16);
        b.landmarks = src.landmarks.translated(2.0, 0.0);
        assert!((src.landmarks.distance(&a.landmarks) - 68.0).abs() < 1e-9);
        assert!((src.landmarks.distance(&b.landmarks) - 136.0).abs() < 1e-9);
        assert_eq!(op_bi(&src, &[&b, &a]).unwrap().video_id.as_str(), "a");

        let mut c = gray_frame("c", 0, 0.1, 16);
        c.landmarks = src.landmarks.translated(0.0, 1.0);
        assert_eq!(op_bi(&src, &[&a, &c]).unwrap().video_id.as_str(), "a");
        assert_eq!(op_bi(&src, &[&c, &a]).unwrap().video_id.as_str(), "c");

        assert!(matches!(
            op_bi(&src, &[]),
            Err(CdfaError::InsufficientCandidates(_))
        ));
    }

    #[test]
    fn sbi_identity_forced_scale_and_determinism() {
        let src = textured_video("v", 1, 12).remove(0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            op_sbi(&src, &mut rng, &SbiParams::identity()).image,
            src.image
        );

        let gray = gray_frame("g", 0, 0.3, 8);
        let forced = SbiParams {
            brightness: (2.0, 2.0),
            ..SbiParams::identity()
        };
        let out = op_sbi(&gray, &mut rng, &forced);
        assert!(out.image.data().iter().all(|&v| (v - 0.6).abs() < 1e-15));

        let clip = op_sbi(&gray_frame("g", 0, 0.7, 8), &mut rng, &forced);
        assert!(clip.image.data().iter().all(|&v| v == 1.0));

        let p = SbiParams::default();
        let a = op_sbi(&src, &mut ChaCha8Rng::seed_from_u64(4), &p);
        let b = op_sbi(&src, &mut ChaCha8Rng::seed_from_u64(4), &p);
        assert_eq!(a, b);
        assert_eq!(a.landmarks, src.landmarks);
    }

    #[test]
    fn ssbi_index_rule() {
        assert_eq!(ssbi_target_index(0, 20, 6, false), 1);
        assert_eq!(ssbi_target_index(3, 20, 6, true), 9);
        assert_eq!(ssbi_target_index(19, 20, 5, true), 18);
        assert_eq!(ssbi_target_index(3, 20, 6, false), 0);
        assert_eq!(ssbi_target_index(0, 2, 10, true), 1);
    }

    #[test]
    fn ssbi_shift_stays_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut seen = [false; 11];
        for _ in 0..10_000 {
            let (d, _) = sample_ssbi_shift(&mut rng);
            assert!((5..=10).contains(&d));
            seen[d] = true;
        }
        assert!(seen[5..=10].iter().all(|&s| s));
    }

    #[test]
    fn ssbi_never_returns_source_and_rejects_single_frame() {
        let video = textured_video("v", 8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            for f in &video {
                let t = op_ssbi(f, &video, &mut rng).unwrap();
                assert_ne!(t.frame_index, f.frame_index);
            }
        }
        let single = &video[..1];
        assert!(matches!(
            op_ssbi(&video[0], single, &mut rng),
            Err(CdfaError::InsufficientFrames { .. })
        ));
    }

    fn small_world() -> (Vec<Vec<FaceFrame>>, AugParams) {
        let videos: Vec<Vec<FaceFrame>> = (0..4)
            .map(|v| textured_video(&format!("vid{v}"), 12, 16))
            .collect();
        (videos, AugParams::default())
    }

    #[test]
    fn degenerate_policy_always_picks_its_op() {
        let (videos, params) = small_world();
        let ctx = AugContext::new(
            videos.iter().flatten(),
            videos.iter().map(Vec::as_slice),
            params,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let policy = AugPolicy::new([1.0, 0.0, 0.0]).unwrap();
        for _ in 0..1_000 {
            let pf = apply_forgery_augmentation(&videos[0][3], &policy, &ctx, &mut rng).unwrap();
            assert_eq!(pf.chosen_op, AugOp::Bi);
            assert_eq!(pf.label(), 1);
        }
    }

    #[test]
    fn uniform_policy_frequencies_converge() {
        let policy = AugPolicy::uniform();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[policy.sample(&mut rng).index()] += 1;
        }
        for c in counts {
            assert!(
                (c as f64 / 30_000.0 - 1.0 / 3.0).abs() <= 0.02,
                "{counts:?}"
            );
        }
    }

    #[test]
    fn collapsed_mask_keeps_source_but_labels_fake() {
        let (videos, mut params) = small_world();
        params.mask = MaskParams {
            intensity_levels: vec![0.0],
            use_intensity: true,
            ..MaskParams::exact_hull()
        };
        let ctx = AugContext::new(
            videos.iter().flatten(),
            videos.iter().map(Vec::as_slice),
            params,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for op in AugOp::ALL {
            let pf = realize_op(op, &videos[1][2], &ctx, &mut rng).unwrap();
            assert_eq!(pf.image, videos[1][2].image);
            assert_eq!(pf.label(), PseudoFake::LABEL);
        }
    }

    #[test]
    fn invalid_policy_is_rejected() {
        assert!(matches!(
            AugPolicy::new([0.5, 0.6, 0.0]),
            Err(CdfaError::SimplexViolation(_))
        ));
        assert!(matches!(
            AugPolicy::new([1.2, -0.2, 0.0]),
            Err(CdfaError::SimplexViolation(_))
        ));
    }

    #[test]
    fn augmentation_does_not_mutate_inputs() {
        let (videos, params) = small_world();
        let snapshot = videos.clone();
        let ctx = AugContext::new(
            videos.iter().flatten(),
            videos.iter().map(Vec::as_slice),
            params,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for i in 0..30 {
            apply_forgery_augmentation(
                &videos[i % 4][i % 12],
                &AugPolicy::uniform(),
                &ctx,
                &mut rng,
            )
            .unwrap();
        }
        assert_eq!(videos, snapshot);
    }

    #[test]
    fn bi_pool_excludes_source_video() {
        let (videos, mut params) = small_world();
        params.bi_pool_size = 1000;
        let ctx = AugContext::new(
            videos.iter().flatten(),
            videos.iter().map(Vec::as_slice),
            params,
        );
        let pool = ctx.bi_pool(&videos[2][0], &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(pool.len(), 36);
        assert!(pool.iter().all(|f| f.video_id.as_str() != "vid2"));
    }

    proptest! {
        #[test]
        fn blend_is_elementwise_convex(
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 5 * 4;
            let s = Image::from_vec(5, 4, (0..n * 3).map(|_| rng.gen()).collect()).unwrap();
            let t = Image::from_vec(5, 4, (0..n * 3).map(|_| rng.gen()).collect()).unwrap();
            let m = MaskImage::from_vec(5, 4, (0..n).map(|_| rng.gen()).collect()).unwrap();
            let out = blend(&s, &t, &m).unwrap();
            for ((o, a), b) in out.data().iter().zip(s.data()).zip(t.data()) {
                prop_assert!(*o >= a.min(*b) - 1e-15 && *o <= a.max(*b) + 1e-15);
            }
        }

        #[test]
        fn bi_choice_is_a_minimum(offsets in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 1..8)) {
            let src = gray_frame("s", 0, 0.5, 32);
            let pool: Vec<FaceFrame> = offsets
                .iter()
                .enumerate()
                .map(|(i, &(dx, dy))| {
                    let mut f = gray_frame(&format!("p{i}"), 0, 0.5, 32);
                    f.landmarks = src.landmarks.translated(dx, dy);
                    f
                })
                .collect();
            let refs: Vec<&FaceFrame> = pool.iter().collect();
            let best = op_bi(&src, &refs).unwrap();
            let d = src.landmarks.distance(&best.landmarks);
            for f in &pool {
                prop_assert!(d <= src.landmarks.distance(&f.landmarks));
            }
        }
    }
}
