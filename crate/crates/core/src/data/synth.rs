//! Procedural face videos with analytic 68-point landmarks and scripted
//! face-swap manipulations.

use std::f64::consts::{PI, TAU};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    Corpus, CorpusManifest, ManifestEntry, SourceLabel, Split, VideoClip, MANIFEST_VERSION,
};
use crate::augment::{FaceFrame, VideoId};
use crate::error::{CdfaError, Result};
use crate::geometry::{gaussian_blur, Landmarks, Point, LANDMARK_COUNT};
use crate::grid::{Image, MaskImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_identities: usize,
    pub frames_per_video: usize,
    pub image_size: usize,
    /// Manipulation tags to render for every identity.
    pub manipulations: Vec<String>,
    /// Tag reserved for measuring cross-manipulation generalization.
    pub held_out: Option<String>,
    pub seed: u64,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_identities: 30,
            frames_per_video: 8,
            image_size: 64,
            manipulations: Manipulation::ALL
                .iter()
                .map(|m| m.tag().to_string())
                .collect(),
            held_out: Some(Manipulation::Blur.tag().to_string()),
            seed: 0,
            train_fraction: 0.6,
            val_fraction: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 16 {
            return Err(CdfaError::Config("image_size must be at least 16".into()));
        }
        if self.frames_per_video < 2 {
            return Err(CdfaError::Config(
                "frames_per_video must be at least 2".into(),
            ));
        }
        if self.n_identities < 3 {
            return Err(CdfaError::Config(
                "need at least 3 identities to populate train/val/test".into(),
            ));
        }
        let mut seen = Vec::new();
        for t in &self.manipulations {
            t.parse::<Manipulation>()?;
            if seen.contains(&t) {
                return Err(CdfaError::Config(format!(
                    "manipulation `{t}` listed twice"
                )));
            }
            seen.push(t);
        }
        if let Some(h) = &self.held_out {
            if !self.manipulations.contains(h) {
                return Err(CdfaError::Config(format!(
                    "held-out manipulation `{h}` is not generated"
                )));
            }
        }
        let (tr, va) = (self.train_fraction, self.val_fraction);
        if !(tr > 0.0 && va > 0.0 && tr + va < 1.0) {
            return Err(CdfaError::Config(
                "split fractions must be positive and leave room for test".into(),
            ));
        }
        Ok(())
    }

    fn split_sizes(&self) -> (usize, usize) {
        let n = self.n_identities;
        let n_train = ((n as f64 * self.train_fraction).round() as usize).clamp(1, n - 2);
        let n_val = ((n as f64 * self.val_fraction).round() as usize).clamp(1, n - 1 - n_train);
        (n_train, n_val)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Manipulation {
    /// Swapped interior rotated against the surrounding head.
    Tilt,
    /// Swapped interior whose features are shifted and rescaled against the
    /// surrounding head.
    Warp,
    /// Swapped interior that was low-pass filtered.
    Blur,
}

impl Manipulation {
    pub const ALL: [Manipulation; 3] = [Manipulation::Tilt, Manipulation::Warp, Manipulation::Blur];

    pub fn tag(self) -> &'static str {
        match self {
            Manipulation::Tilt => "tilt",
            Manipulation::Warp => "warp",
            Manipulation::Blur => "blur",
        }
    }
}

impl std::str::FromStr for Manipulation {
    type Err = CdfaError;

    fn from_str(s: &str) -> Result<Self> {
        Manipulation::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| CdfaError::Config(format!("unknown manipulation `{s}`")))
    }
}

/// Colors and textures of one identity.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceAppearance {
    pub skin: [f64; 3],
    pub iris: [f64; 3],
    pub lip: [f64; 3],
    pub brow: [f64; 3],
    pub background: [f64; 3],
    background_wave: (f64, f64, f64, f64),
    skin_texture: [(f64, f64, f64); 2],
    texture_amp: f64,
    noise: f64,
}

/// Per-identity facial proportions; combined with motion into a
/// [`FaceGeometry`] per frame.
#[derive(Debug, Clone, PartialEq)]
struct FaceShape {
    b_frac: f64,
    aspect: f64,
    eye_dx: f64,
    eye_dy: f64,
    eye_w: f64,
    eye_h: f64,
    brow_dy: f64,
    nose_len: f64,
    mouth_dy: f64,
    mouth_w: f64,
    mouth_h: f64,
    /// Phases of horizontal, vertical and zoom motion, then amplitude.
    motion: (f64, f64, f64, f64),
    /// Phases of mouth opening and blinking, then lighting flicker.
    expression: (f64, f64, f64),
}

/// Face placement in pixels for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeometry {
    pub cx: f64,
    pub cy: f64,
    /// Horizontal and vertical semi-axes of the face ellipse.
    pub a: f64,
    pub b: f64,
    pub eye_dx: f64,
    pub eye_dy: f64,
    pub eye_w: f64,
    pub eye_h: f64,
    pub brow_dy: f64,
    pub nose_len: f64,
    pub mouth_dy: f64,
    pub mouth_w: f64,
    pub mouth_h: f64,
    /// Global illumination gain on the face.
    pub light: f64,
}

fn sample_appearance<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> FaceAppearance {
    let r = rng.gen_range(0.55..0.85);
    let g = r * rng.gen_range(0.72..0.82);
    let b = g * rng.gen_range(0.78..0.90);
    let dark = rng.gen_range(0.05..0.3);
    let freq = |rng: &mut R| rng.gen_range(1.6..2.4) / scale.max(0.5);
    FaceAppearance {
        skin: [r, g, b],
        iris: [
            dark,
            dark * rng.gen_range(0.8..1.6),
            dark * rng.gen_range(0.8..2.0),
        ],
        lip: [
            (r * rng.gen_range(0.95..1.1)).min(0.95),
            g * rng.gen_range(0.55..0.7),
            b * rng.gen_range(0.6..0.75),
        ],
        brow: [dark * 0.8, dark * 0.7, dark * 0.6],
        background: [
            rng.gen_range(0.15..0.75),
            rng.gen_range(0.15..0.75),
            rng.gen_range(0.15..0.75),
        ],
        background_wave: (
            rng.gen_range(0.05..0.3) / scale,
            rng.gen_range(0.05..0.3) / scale,
            rng.gen_range(0.0..TAU),
            rng.gen_range(0.03..0.1),
        ),
        skin_texture: [
            (freq(rng), freq(rng), rng.gen_range(0.0..TAU)),
            (freq(rng), -freq(rng), rng.gen_range(0.0..TAU)),
        ],
        texture_amp: rng.gen_range(0.02..0.035),
        noise: rng.gen_range(0.02..0.03),
    }
}

fn sample_shape<R: Rng + ?Sized>(rng: &mut R) -> FaceShape {
    FaceShape {
        b_frac: rng.gen_range(0.36..0.385),
        aspect: rng.gen_range(0.72..0.82),
        eye_dx: rng.gen_range(0.36..0.44),
        eye_dy: rng.gen_range(0.16..0.24),
        eye_w: rng.gen_range(0.17..0.22),
        eye_h: rng.gen_range(0.06..0.09),
        brow_dy: rng.gen_range(0.13..0.17),
        nose_len: rng.gen_range(0.3..0.38),
        mouth_dy: rng.gen_range(0.42..0.52),
        mouth_w: rng.gen_range(0.32..0.44),
        mouth_h: rng.gen_range(0.07..0.1),
        motion: (
            rng.gen_range(0.0..TAU),
            rng.gen_range(0.0..TAU),
            rng.gen_range(0.0..TAU),
            rng.gen_range(1.5..2.5),
        ),
        expression: (
            rng.gen_range(0.0..TAU),
            rng.gen_range(0.0..TAU),
            rng.gen_range(0.0..TAU),
        ),
    }
}

fn frame_geometry(shape: &FaceShape, size: usize, frame: usize) -> FaceGeometry {
    let s = size as f64;
    let f = frame as f64;
    let (px, py, ps, amp) = shape.motion;
    let (pm, pb, pl) = shape.expression;
    let unit = s / 64.0;
    let zoom = 1.0 + 0.03 * (0.5 * f + ps).sin();
    let mouth_open = 0.6 + 0.8 * (0.9 * f + pm).sin().abs();
    let blink = if (1.3 * f + pb).sin() > 0.8 {
        0.35
    } else {
        1.0
    };
    let b = shape.b_frac * s * zoom;
    let a = b * shape.aspect;
    FaceGeometry {
        cx: (s - 1.0) / 2.0 + amp * unit * (0.6 * f + px).sin(),
        cy: (s - 1.0) / 2.0 + amp * unit * (0.45 * f + py).cos(),
        a,
        b,
        eye_dx: shape.eye_dx * a,
        eye_dy: shape.eye_dy * b,
        eye_w: shape.eye_w * a,
        eye_h: shape.eye_h * b * blink,
        brow_dy: shape.brow_dy * b,
        nose_len: shape.nose_len * b,
        mouth_dy: shape.mouth_dy * b,
        mouth_w: shape.mouth_w * a,
        mouth_h: shape.mouth_h * b * mouth_open,
        light: 1.0 + 0.05 * (0.8 * f + pl).sin(),
    }
}

/// `(x_min, y_min, x_max, y_max)` of the face ellipse.
pub fn face_bounding_box(g: &FaceGeometry) -> (f64, f64, f64, f64) {
    (g.cx - g.a, g.cy - g.b, g.cx + g.a, g.cy + g.b)
}

/// The 68 landmarks in the standard iBUG order: jaw, brows, nose, eyes,
/// outer and inner lips.
pub fn face_landmarks(g: &FaceGeometry) -> Landmarks {
    let mut pts = Vec::with_capacity(LANDMARK_COUNT);
    for k in 0..17 {
        let th = PI - k as f64 * PI / 16.0;
        pts.push(Point::new(
            g.cx + 0.97 * g.a * th.cos(),
            g.cy + 0.97 * g.b * th.sin(),
        ));
    }
    let eye_y = g.cy - g.eye_dy;
    let brow_y = eye_y - g.brow_dy;
    for side in [-1.0, 1.0] {
        let ex = g.cx + side * g.eye_dx;
        for k in 0..5 {
            let u = k as f64 / 4.0;
            // Brows run outer→inner on the image-left side, inner→outer on the right.
            let t = if side < 0.0 { u } else { 1.0 - u };
            let x = ex + side * (1.0 - 2.0 * t) * 1.2 * g.eye_w;
            let y = brow_y - 0.35 * g.eye_h * (PI * t).sin();
            pts.push(Point::new(x, y));
        }
    }
    for k in 0..4 {
        pts.push(Point::new(g.cx, eye_y + g.nose_len * k as f64 / 3.0));
    }
    let base_y = eye_y + g.nose_len + 0.08 * g.b;
    for k in 0..5 {
        let u = k as f64 / 4.0 - 0.5;
        pts.push(Point::new(
            g.cx + u * 0.5 * g.a,
            base_y - 0.03 * g.b * (1.0 - 4.0 * u * u),
        ));
    }
    for side in [-1.0, 1.0] {
        let ex = g.cx + side * g.eye_dx;
        for k in 0..6 {
            let phi = PI - k as f64 * PI / 3.0;
            pts.push(Point::new(
                ex + g.eye_w * phi.cos(),
                eye_y - g.eye_h * phi.sin(),
            ));
        }
    }
    let my = g.cy + g.mouth_dy;
    for k in 0..12 {
        let phi = PI - k as f64 * TAU / 12.0;
        pts.push(Point::new(
            g.cx + g.mouth_w * phi.cos(),
            my - g.mouth_h * phi.sin(),
        ));
    }
    for k in 0..8 {
        let phi = PI - k as f64 * TAU / 8.0;
        pts.push(Point::new(
            g.cx + 0.65 * g.mouth_w * phi.cos(),
            my - 0.4 * g.mouth_h * phi.sin(),
        ));
    }
    Landmarks::new(pts).expect("68 finite points")
}

/// Coverage in `[0, 1]` of an axis-aligned ellipse with a one-pixel soft edge.
fn ellipse_cover(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> f64 {
    let d = (((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2)).sqrt();
    ((1.0 - d) * rx.min(ry) + 0.5).clamp(0.0, 1.0)
}

fn mix(dst: &mut [f64; 3], color: [f64; 3], w: f64) {
    for c in 0..3 {
        dst[c] += w * (color[c] - dst[c]);
    }
}

/// Renders `appearance` at geometry `g`, with fresh sensor noise from `rng`.
/// Values are quantized to 8 bits so the frame survives PNG storage exactly.
pub fn render_frame<R: Rng + ?Sized>(
    appearance: &FaceAppearance,
    g: &FaceGeometry,
    size: usize,
    rng: &mut R,
) -> Image {
    let mut img = Image::new(size, size);
    let (fx, fy, phase, amp) = appearance.background_wave;
    let eye_y = g.cy - g.eye_dy;
    let brow_y = eye_y - g.brow_dy;
    let my = g.cy + g.mouth_dy;
    let half_noise = appearance.noise * 3f64.sqrt();
    for row in 0..size {
        for col in 0..size {
            let (x, y) = (col as f64, row as f64);
            let wave = amp * (fx * x + fy * y + phase).sin();
            let mut px = appearance.background.map(|v| v + wave);

            let face = ellipse_cover(x, y, g.cx, g.cy, g.a, g.b);
            if face > 0.0 {
                let (u, v) = (x - g.cx, y - g.cy);
                let shade = g.light * (1.0 - 0.12 * (v / g.b) - 0.08 * (u / g.a).powi(2));
                let tex: f64 = appearance
                    .skin_texture
                    .iter()
                    .map(|(a, b, p)| (a * u + b * v + p).sin())
                    .sum::<f64>()
                    * appearance.texture_amp;
                let mut skin = appearance.skin.map(|s| s * shade + tex);

                let nose = ellipse_cover(
                    x,
                    y,
                    g.cx,
                    eye_y + 0.5 * g.nose_len,
                    0.06 * g.a + 0.5,
                    0.5 * g.nose_len,
                );
                mix(&mut skin, appearance.skin.map(|s| s * 0.82), 0.6 * nose);
                for side in [-1.0, 1.0] {
                    let ex = g.cx + side * g.eye_dx;
                    let brow = ellipse_cover(x, y, ex, brow_y, 1.2 * g.eye_w, 0.3 * g.eye_h + 0.5);
                    mix(&mut skin, appearance.brow, brow);
                    let sclera = ellipse_cover(x, y, ex, eye_y, g.eye_w, g.eye_h);
                    mix(&mut skin, [0.92, 0.9, 0.88], sclera);
                    let iris =
                        ellipse_cover(x, y, ex, eye_y, 0.8 * g.eye_h + 0.3, 0.8 * g.eye_h + 0.3);
                    mix(&mut skin, appearance.iris, iris * sclera);
                }
                let lips = ellipse_cover(x, y, g.cx, my, g.mouth_w, g.mouth_h);
                mix(&mut skin, appearance.lip, lips);
                let gap = ellipse_cover(x, y, g.cx, my, 0.65 * g.mouth_w, 0.4 * g.mouth_h);
                mix(&mut skin, appearance.lip.map(|c| c * 0.4), gap);
                mix(&mut px, skin, face);
            }
            for (c, v) in px.iter().enumerate() {
                let n = rng.gen_range(-half_noise..=half_noise);
                img.set(row, col, c, (v + n).clamp(0.0, 1.0));
            }
        }
    }
    quantized(&img)
}

fn quantized(img: &Image) -> Image {
    Image::from_rgb8(img.height(), img.width(), &img.to_rgb8()).expect("same shape")
}

/// Hard mask of the swapped face interior.
/// Feathered ellipse covering the inner face.
fn interior_mask(g: &FaceGeometry, size: usize) -> MaskImage {
    let mut m = MaskImage::zeros(size, size);
    for row in 0..size {
        for col in 0..size {
            let d = ((col as f64 - g.cx) / (0.86 * g.a)).powi(2)
                + ((row as f64 - g.cy) / (0.9 * g.b)).powi(2);
            if d <= 1.0 {
                m.set(row, col, 1.0);
            }
        }
    }
    gaussian_blur(&m, (size as f64 / 64.0).max(0.5))
}

fn blur_image(img: &Image, sigma: f64) -> Image {
    let (h, w) = (img.height(), img.width());
    let mut out = img.clone();
    for c in 0..3 {
        let plane = MaskImage::from_vec(
            h,
            w,
            img.data().iter().skip(c).step_by(3).copied().collect(),
        )
        .expect("plane shape");
        let blurred = gaussian_blur(&plane, sigma);
        for (i, v) in blurred.values().iter().enumerate() {
            out.data_mut()[i * 3 + c] = *v;
        }
    }
    out
}

/// Per-clip manipulation settings.
#[derive(Debug, Clone, Copy)]
enum Artifact {
    /// Rotation in radians.
    Tilt(f64),
    Warp {
        dx: f64,
        dy: f64,
        zoom: f64,
    },
    Blur(f64),
}

fn sample_artifact<R: Rng + ?Sized>(m: Manipulation, scale: f64, rng: &mut R) -> Artifact {
    match m {
        Manipulation::Tilt => {
            let deg: f64 = rng.gen_range(8.0..14.0);
            Artifact::Tilt(if rng.gen_bool(0.5) { deg } else { -deg }.to_radians())
        }
        Manipulation::Warp => {
            let mut offset = || {
                let v = rng.gen_range(1.0..2.0) * scale;
                if rng.gen_bool(0.5) {
                    v
                } else {
                    -v
                }
            };
            let (dx, dy) = (offset(), offset());
            let zoom = if rng.gen_bool(0.5) { 1.06 } else { 0.95 };
            Artifact::Warp { dx, dy, zoom }
        }
        Manipulation::Blur => Artifact::Blur(rng.gen_range(1.0..1.5) * scale.max(0.5)),
    }
}

/// Bilinear rotation of `img` about `(cx, cy)`, clamping at the border.
fn rotate_about(img: &Image, cx: f64, cy: f64, angle: f64) -> Image {
    let (h, w) = (img.height(), img.width());
    let (sin, cos) = angle.sin_cos();
    let mut out = img.clone();
    for row in 0..h {
        for col in 0..w {
            let (x, y) = (col as f64 - cx, row as f64 - cy);
            let sx = (cos * x + sin * y + cx).clamp(0.0, (w - 1) as f64);
            let sy = (-sin * x + cos * y + cy).clamp(0.0, (h - 1) as f64);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            for c in 0..3 {
                let top = img.get(y0, x0, c) * (1.0 - fx) + img.get(y0, x1, c) * fx;
                let bottom = img.get(y1, x0, c) * (1.0 - fx) + img.get(y1, x1, c) * fx;
                out.set(row, col, c, top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    out
}

fn warped(g: &FaceGeometry, dx: f64, dy: f64, zoom: f64) -> FaceGeometry {
    FaceGeometry {
        cx: g.cx + dx,
        cy: g.cy + dy,
        a: g.a * zoom,
        b: g.b * zoom,
        eye_dx: g.eye_dx * zoom,
        eye_dy: g.eye_dy * zoom,
        eye_w: g.eye_w * zoom,
        eye_h: g.eye_h * zoom,
        brow_dy: g.brow_dy * zoom,
        nose_len: g.nose_len * zoom,
        mouth_dy: g.mouth_dy * zoom,
        mouth_w: g.mouth_w * zoom,
        mouth_h: g.mouth_h * zoom,
        light: g.light,
    }
}

/// Pastes the donor-rendered interior onto `real` and applies the artifact.
fn manipulate(real: &Image, donor_render: &Image, g: &FaceGeometry, artifact: Artifact) -> Image {
    let size = real.height();
    let mask = interior_mask(g, size);
    let mut inner = donor_render.clone();
    match artifact {
        Artifact::Tilt(angle) => inner = rotate_about(&inner, g.cx, g.cy, angle),
        Artifact::Blur(sigma) => inner = blur_image(&inner, sigma),
        Artifact::Warp { .. } => {}
    }
    let mut out = real.clone();
    for row in 0..size {
        for col in 0..size {
            let m = mask.get(row, col);
            if m > 0.0 {
                for c in 0..3 {
                    let v = m * inner.get(row, col, c) + (1.0 - m) * real.get(row, col, c);
                    out.set(row, col, c, v);
                }
            }
        }
    }
    out.clamp_unit();
    quantized(&out)
}

struct Identity {
    appearance: FaceAppearance,
    shape: FaceShape,
    seed: u64,
}

/// Builds the full corpus in memory; deterministic in `cfg.seed`.
pub fn generate_synthetic_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let size = cfg.image_size;
    let scale = size as f64 / 64.0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let identities: Vec<Identity> = (0..cfg.n_identities)
        .map(|_| Identity {
            appearance: sample_appearance(&mut rng, scale),
            shape: sample_shape(&mut rng),
            seed: rng.gen(),
        })
        .collect();

    let mut order: Vec<usize> = (0..cfg.n_identities).collect();
    order.shuffle(&mut rng);
    let (n_train, n_val) = cfg.split_sizes();
    let mut split_of = vec![Split::Test; cfg.n_identities];
    for (rank, &id) in order.iter().enumerate() {
        split_of[id] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    // Donor: a random other identity of the same split.
    let donor_of: Vec<usize> = (0..cfg.n_identities)
        .map(|i| {
            let same: Vec<usize> = (0..cfg.n_identities)
                .filter(|&j| j != i && split_of[j] == split_of[i])
                .collect();
            match same.choose(&mut rng) {
                Some(&j) => j,
                None => (i + 1) % cfg.n_identities,
            }
        })
        .collect();

    let manipulations: Vec<Manipulation> = cfg
        .manipulations
        .iter()
        .map(|t| t.parse())
        .collect::<Result<_>>()?;

    let per_identity: Vec<Vec<(ManifestEntry, VideoClip)>> = (0..cfg.n_identities)
        .into_par_iter()
        .map(|i| {
            let id = &identities[i];
            let donor = &identities[donor_of[i]].appearance;
            let mut rng = ChaCha8Rng::seed_from_u64(id.seed);
            let real_id = format!("id{i:03}");
            let geoms: Vec<FaceGeometry> = (0..cfg.frames_per_video)
                .map(|f| frame_geometry(&id.shape, size, f))
                .collect();
            let real_images: Vec<Image> = geoms
                .iter()
                .map(|g| render_frame(&id.appearance, g, size, &mut rng))
                .collect();
            let clip = |vid: &str, images: Vec<Image>, label, tag: Option<String>| VideoClip {
                video_id: VideoId::from(vid),
                frames: images
                    .into_iter()
                    .zip(&geoms)
                    .enumerate()
                    .map(|(k, (image, g))| FaceFrame {
                        image,
                        landmarks: face_landmarks(g),
                        video_id: VideoId::from(vid),
                        frame_index: k,
                    })
                    .collect(),
                source_label: label,
                manipulation_tag: tag,
            };
            let entry = |vid: &str, label, tag: Option<String>, counterpart| ManifestEntry {
                video_id: vid.to_string(),
                path: vid.to_string(),
                source_label: label,
                manipulation_tag: tag,
                split: split_of[i],
                counterpart,
                frames: cfg.frames_per_video,
            };

            let mut out = Vec::with_capacity(1 + manipulations.len());
            for &m in &manipulations {
                let artifact = sample_artifact(m, scale, &mut rng);
                let images: Vec<Image> = geoms
                    .iter()
                    .zip(&real_images)
                    .map(|(g, real)| {
                        let donor_g = match artifact {
                            Artifact::Warp { dx, dy, zoom } => warped(g, dx, dy, zoom),
                            _ => *g,
                        };
                        let donor_render = render_frame(donor, &donor_g, size, &mut rng);
                        manipulate(real, &donor_render, g, artifact)
                    })
                    .collect();
                let vid = format!("{real_id}_{}", m.tag());
                out.push((
                    entry(
                        &vid,
                        SourceLabel::Ofake,
                        Some(m.tag().into()),
                        Some(real_id.clone()),
                    ),
                    clip(&vid, images, SourceLabel::Ofake, Some(m.tag().into())),
                ));
            }
            out.insert(
                0,
                (
                    entry(&real_id, SourceLabel::Real, None, None),
                    clip(&real_id, real_images, SourceLabel::Real, None),
                ),
            );
            out
        })
        .collect();

    let (videos, clips) = per_identity.into_iter().flatten().unzip();
    let corpus = Corpus {
        manifest: CorpusManifest {
            format_version: MANIFEST_VERSION,
            image_size: size,
            held_out_tag: cfg.held_out.clone(),
            videos,
        },
        clips,
    };
    corpus.validate()?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn landmarks_lie_inside_the_face_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for size in [16, 32, 64, 128] {
            for _ in 0..20 {
                let shape = sample_shape(&mut rng);
                for f in 0..10 {
                    let g = frame_geometry(&shape, size, f);
                    let (x0, y0, x1, y1) = face_bounding_box(&g);
                    assert!(x0 >= 0.0 && y0 >= 0.0 && x1 < size as f64 && y1 < size as f64);
                    let lm = face_landmarks(&g);
                    for p in lm.points() {
                        assert!(p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1);
                    }
                    lm.validate_bounds(size, size).unwrap();
                }
            }
        }
    }

    #[test]
    fn landmark_groups_follow_the_standard_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = frame_geometry(&sample_shape(&mut rng), 64, 0);
        let p = face_landmarks(&g);
        let p = p.points();
        // Jaw sweeps left to right through the chin.
        assert!(p[0].x < p[8].x && p[8].x < p[16].x);
        assert!(p[8].y > p[0].y && p[8].y > p[16].y);
        // Image-left eye and brow precede the right ones.
        assert!(p[36].x < p[42].x && p[17].x < p[22].x);
        // Brows above eyes above nose tip above mouth.
        assert!(p[19].y < p[37].y && p[37].y < p[33].y && p[33].y < p[51].y);
        // Nose bridge is vertical and descending.
        assert!(p[27].y < p[30].y && (p[27].x - p[30].x).abs() < 1e-12);
    }

    #[test]
    fn manipulations_leave_the_outside_untouched() {
        let cfg = SynthConfig {
            n_identities: 4,
            frames_per_video: 2,
            image_size: 32,
            seed: 5,
            ..SynthConfig::default()
        };
        let corpus = generate_synthetic_corpus(&cfg).unwrap();
        for (e, clip) in corpus.manifest.videos.iter().zip(&corpus.clips) {
            let Some(real_id) = &e.counterpart else {
                continue;
            };
            let real = corpus.clip(real_id).unwrap();
            let g = frame_geometry_for_test(&corpus, real_id);
            let mask = interior_mask(&g, 32);
            let frame = &clip.frames[0].image;
            let mut inside_diff = 0.0;
            for row in 0..32 {
                for col in 0..32 {
                    for c in 0..3 {
                        let d =
                            (frame.get(row, col, c) - real.frames[0].image.get(row, col, c)).abs();
                        if mask.get(row, col) > 0.0 {
                            inside_diff += d;
                        } else {
                            assert_eq!(d, 0.0);
                        }
                    }
                }
            }
            assert!(inside_diff > 0.0);
            assert_eq!(clip.frames[0].landmarks, real.frames[0].landmarks);
        }
    }

    fn frame_geometry_for_test(corpus: &Corpus, real_id: &str) -> FaceGeometry {
        // Recover the geometry from the jaw landmarks of frame 0.
        let lm = &corpus.clip(real_id).unwrap().frames[0].landmarks;
        let p = lm.points();
        let cx = (p[0].x + p[16].x) / 2.0;
        let cy = p[0].y;
        let a = (p[16].x - p[0].x) / 2.0 / 0.97;
        let b = (p[8].y - cy) / 0.97;
        FaceGeometry {
            cx,
            cy,
            a,
            b,
            eye_dx: 0.0,
            eye_dy: 0.0,
            eye_w: 0.0,
            eye_h: 0.0,
            brow_dy: 0.0,
            nose_len: 0.0,
            mouth_dy: 0.0,
            mouth_w: 0.0,
            mouth_h: 0.0,
            light: 1.0,
        }
    }

    #[test]
    fn blur_removes_high_frequency_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let app = sample_appearance(&mut rng, 1.0);
        let g = frame_geometry(&sample_shape(&mut rng), 64, 0);
        let img = render_frame(&app, &g, 64, &mut rng);
        let energy = |im: &Image| -> f64 {
            let mut e = 0.0;
            for row in 20..44 {
                for col in 20..43 {
                    let d = im.get(row, col + 1, 1) - im.get(row, col, 1);
                    e += d * d;
                }
            }
            e
        };
        assert!(energy(&blur_image(&img, 1.2)) < 0.5 * energy(&img));
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig::default().validate().is_ok());
        let bad = [
            SynthConfig {
                image_size: 8,
                ..SynthConfig::default()
            },
            SynthConfig {
                frames_per_video: 1,
                ..SynthConfig::default()
            },
            SynthConfig {
                manipulations: vec!["warp".into()],
                ..SynthConfig::default()
            },
            SynthConfig {
                held_out: Some("x".into()),
                ..SynthConfig::default()
            },
            SynthConfig {
                train_fraction: 0.9,
                val_fraction: 0.2,
                ..SynthConfig::default()
            },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(CdfaError::Config(_))));
        }
    }
}
