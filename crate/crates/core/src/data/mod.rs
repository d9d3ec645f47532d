//! Corpus model, on-disk format and frame sampling.
//!
//! Layout: `root/manifest.json`, `root/<video_id>/frame_%04d.png` and
//! `root/<video_id>/landmarks.json`.

mod synth;

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{FaceFrame, VideoId};
use crate::error::{CdfaError, Result};
use crate::geometry::Landmarks;
use crate::grid::Image;

pub use synth::{
    face_bounding_box, face_landmarks, generate_synthetic_corpus, render_frame, FaceAppearance,
    FaceGeometry, Manipulation, SynthConfig,
};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LANDMARKS_FILE: &str = "landmarks.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceLabel {
    Real,
    Ofake,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = CdfaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(CdfaError::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub video_id: String,
    /// Directory of the clip relative to the corpus root.
    pub path: String,
    pub source_label: SourceLabel,
    #[serde(default)]
    pub manipulation_tag: Option<String>,
    pub split: Split,
    /// For o-fake clips, the real clip of the same identity.
    #[serde(default)]
    pub counterpart: Option<String>,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub image_size: usize,
    /// Manipulation reserved for testing generalization, if any.
    #[serde(default)]
    pub held_out_tag: Option<String>,
    pub videos: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(CdfaError::DataIntegrity(format!(
                "unsupported manifest version {}",
                self.format_version
            )));
        }
        let mut seen = HashSet::new();
        for v in &self.videos {
            if !seen.insert(v.video_id.as_str()) {
                return Err(CdfaError::DataIntegrity(format!(
                    "duplicate video id {}",
                    v.video_id
                )));
            }
            if v.video_id.is_empty() || v.video_id.contains(['/', '\\']) || v.path.contains("..") {
                return Err(CdfaError::DataIntegrity(format!(
                    "unsafe video id or path for {}",
                    v.video_id
                )));
            }
            match (v.source_label, &v.manipulation_tag) {
                (SourceLabel::Real, Some(_)) => {
                    return Err(CdfaError::DataIntegrity(format!(
                        "real clip {} carries a manipulation tag",
                        v.video_id
                    )))
                }
                (SourceLabel::Ofake, None) => {
                    return Err(CdfaError::DataIntegrity(format!(
                        "o-fake clip {} has no manipulation tag",
                        v.video_id
                    )))
                }
                _ => {}
            }
        }
        for v in &self.videos {
            if let Some(c) = &v.counterpart {
                let real = self.entry(c).ok_or_else(|| {
                    CdfaError::DataIntegrity(format!("{} points to missing clip {c}", v.video_id))
                })?;
                if real.split != v.split || real.source_label != SourceLabel::Real {
                    return Err(CdfaError::DataIntegrity(format!(
                        "{} and its counterpart {c} are in different splits",
                        v.video_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn entry(&self, video_id: &str) -> Option<&ManifestEntry> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    pub fn tags(&self) -> BTreeSet<String> {
        self.videos
            .iter()
            .filter_map(|v| v.manipulation_tag.clone())
            .collect()
    }

    /// All tags except the held-out one.
    pub fn training_tags(&self) -> Vec<String> {
        self.tags()
            .into_iter()
            .filter(|t| Some(t) != self.held_out_tag.as_ref())
            .collect()
    }
}

/// An ordered clip of frames from one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub video_id: VideoId,
    pub frames: Vec<FaceFrame>,
    pub source_label: SourceLabel,
    pub manipulation_tag: Option<String>,
}

impl VideoClip {
    pub fn validate(&self) -> Result<()> {
        let first = self
            .frames
            .first()
            .ok_or_else(|| CdfaError::InsufficientFrames {
                video_id: self.video_id.to_string(),
                len: 0,
            })?;
        for (i, f) in self.frames.iter().enumerate() {
            if f.video_id != self.video_id || f.frame_index != i {
                return Err(CdfaError::DataIntegrity(format!(
                    "clip {} frame {i} has id {} / index {}",
                    self.video_id, f.video_id, f.frame_index
                )));
            }
            if !f.image.same_shape(&first.image) {
                return Err(CdfaError::DataIntegrity(format!(
                    "clip {} mixes frame sizes",
                    self.video_id
                )));
            }
            f.validate()?;
        }
        Ok(())
    }
}

/// A fully loaded corpus. `clips[i]` corresponds to `manifest.videos[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub clips: Vec<VideoClip>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameFilter<'t> {
    pub split: Split,
    pub label: SourceLabel,
    /// Restrict o-fakes to these tags; `None` accepts all.
    pub tags: Option<&'t [String]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LandmarkFile {
    video_id: String,
    frames: Vec<LandmarkRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LandmarkRecord {
    index: usize,
    points: Landmarks,
}

fn frame_file(index: usize) -> String {
    format!("frame_{index:04}.png")
}

impl Corpus {
    pub fn validate(&self) -> Result<()> {
        self.manifest.validate()?;
        if self.clips.len() != self.manifest.videos.len() {
            return Err(CdfaError::DataIntegrity(
                "clip count does not match the manifest".into(),
            ));
        }
        for (e, c) in self.manifest.videos.iter().zip(&self.clips) {
            if e.video_id != c.video_id.as_str()
                || e.source_label != c.source_label
                || e.manipulation_tag != c.manipulation_tag
                || e.frames != c.frames.len()
            {
                return Err(CdfaError::DataIntegrity(format!(
                    "clip {} disagrees with its manifest entry",
                    e.video_id
                )));
            }
            c.validate()?;
        }
        Ok(())
    }

    pub fn clip(&self, video_id: &str) -> Option<&VideoClip> {
        self.clips.iter().find(|c| c.video_id.as_str() == video_id)
    }

    /// Clips in `split`, in manifest order.
    pub fn clips_in(&self, split: Split) -> impl Iterator<Item = (&ManifestEntry, &VideoClip)> {
        self.manifest
            .videos
            .iter()
            .zip(&self.clips)
            .filter(move |(e, _)| e.split == split)
    }

    /// Every frame matching `filter`, in manifest then frame order.
    pub fn frames(&self, filter: FrameFilter<'_>) -> Vec<&FaceFrame> {
        self.clips_in(filter.split)
            .filter(|(e, _)| e.source_label == filter.label)
            .filter(|(e, _)| match (filter.tags, &e.manipulation_tag) {
                (Some(tags), Some(t)) => tags.contains(t),
                _ => true,
            })
            .flat_map(|(_, c)| c.frames.iter())
            .collect()
    }

    /// Writes the corpus under `root`, which must not exist or be empty.
    pub fn write(&self, root: &Path) -> Result<()> {
        self.manifest.validate()?;
        if root.exists()
            && fs::read_dir(root)
                .map_err(|e| CdfaError::io(root, e))?
                .next()
                .is_some()
        {
            return Err(CdfaError::Usage(format!(
                "output directory {} is not empty",
                root.display()
            )));
        }
        fs::create_dir_all(root).map_err(|e| CdfaError::io(root, e))?;
        self.manifest
            .videos
            .par_iter()
            .zip(self.clips.par_iter())
            .try_for_each(|(entry, clip)| write_clip(&root.join(&entry.path), clip))?;
        let json = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        let path = root.join(MANIFEST_FILE);
        fs::write(&path, json).map_err(|e| CdfaError::io(&path, e))
    }
}

fn write_clip(dir: &Path, clip: &VideoClip) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CdfaError::io(dir, e))?;
    for f in &clip.frames {
        let path = dir.join(frame_file(f.frame_index));
        let (h, w) = (f.image.height() as u32, f.image.width() as u32);
        image::save_buffer_with_format(
            &path,
            &f.image.to_rgb8(),
            w,
            h,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|e| CdfaError::format(&path, e.to_string()))?;
    }
    let doc = LandmarkFile {
        video_id: clip.video_id.to_string(),
        frames: clip
            .frames
            .iter()
            .map(|f| LandmarkRecord {
                index: f.frame_index,
                points: f.landmarks.clone(),
            })
            .collect(),
    };
    let path = dir.join(LANDMARKS_FILE);
    fs::write(
        &path,
        serde_json::to_vec(&doc).expect("landmarks serialize"),
    )
    .map_err(|e| CdfaError::io(&path, e))
}

/// A corpus on disk whose clips are read on demand.
#[derive(Debug, Clone)]
pub struct CorpusReader {
    root: PathBuf,
    pub manifest: CorpusManifest,
}

pub fn load_corpus(root: &Path) -> Result<CorpusReader> {
    let path = root.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| CdfaError::io(&path, e))?;
    let manifest: CorpusManifest =
        serde_json::from_slice(&bytes).map_err(|e| CdfaError::format(&path, e.to_string()))?;
    manifest.validate()?;
    Ok(CorpusReader {
        root: root.to_path_buf(),
        manifest,
    })
}

impl CorpusReader {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn load_clip(&self, entry: &ManifestEntry) -> Result<VideoClip> {
        let dir = self.root.join(&entry.path);
        let lm_path = dir.join(LANDMARKS_FILE);
        let bytes = fs::read(&lm_path).map_err(|e| CdfaError::io(&lm_path, e))?;
        let doc: LandmarkFile = serde_json::from_slice(&bytes)
            .map_err(|e| CdfaError::format(&lm_path, e.to_string()))?;
        if doc.video_id != entry.video_id || doc.frames.len() != entry.frames {
            return Err(CdfaError::format(
                &lm_path,
                format!(
                    "landmarks do not describe {} frames of {}",
                    entry.frames, entry.video_id
                ),
            ));
        }
        let video_id = VideoId::from(entry.video_id.as_str());
        let frames = doc
            .frames
            .into_iter()
            .enumerate()
            .map(|(i, rec)| {
                if rec.index != i {
                    return Err(CdfaError::format(
                        &lm_path,
                        "frame indices are not contiguous",
                    ));
                }
                let path = dir.join(frame_file(i));
                let img = image::open(&path)
                    .map_err(|e| CdfaError::format(&path, e.to_string()))?
                    .into_rgb8();
                let image =
                    Image::from_rgb8(img.height() as usize, img.width() as usize, img.as_raw())?;
                Ok(FaceFrame {
                    image,
                    landmarks: rec.points,
                    video_id: video_id.clone(),
                    frame_index: i,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let clip = VideoClip {
            video_id,
            frames,
            source_label: entry.source_label,
            manipulation_tag: entry.manipulation_tag.clone(),
        };
        clip.validate()?;
        Ok(clip)
    }

    pub fn load_all(&self) -> Result<Corpus> {
        let clips = self
            .manifest
            .videos
            .par_iter()
            .map(|e| self.load_clip(e))
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus {
            manifest: self.manifest.clone(),
            clips,
        })
    }
}

fn sample_frames<'a, R: Rng + ?Sized>(
    pool: Vec<&'a FaceFrame>,
    n: usize,
    what: &str,
    rng: &mut R,
) -> Result<Vec<&'a FaceFrame>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if pool.len() < n {
        return Err(CdfaError::InsufficientData(format!(
            "requested {n} {what} frames, {} available",
            pool.len()
        )));
    }
    Ok(index::sample(rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i])
        .collect())
}

/// `n` distinct real frames of `split`, uniformly.
pub fn sample_real<'a, R: Rng + ?Sized>(
    corpus: &'a Corpus,
    split: Split,
    n: usize,
    rng: &mut R,
) -> Result<Vec<&'a FaceFrame>> {
    let pool = corpus.frames(FrameFilter {
        split,
        label: SourceLabel::Real,
        tags: None,
    });
    sample_frames(pool, n, &format!("{split} real"), rng)
}

/// `n` distinct o-fake frames of `split`, optionally restricted to `tags`.
pub fn sample_ofake<'a, R: Rng + ?Sized>(
    corpus: &'a Corpus,
    split: Split,
    tags: Option<&[String]>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<&'a FaceFrame>> {
    let pool = corpus.frames(FrameFilter {
        split,
        label: SourceLabel::Ofake,
        tags,
    });
    sample_frames(pool, n, &format!("{split} o-fake"), rng)
}
