//! Seeded procedural scenes: explosions, warm light sources, explosion-shaped
//! gray structures and plain textured backgrounds.
//!
//! Every image is a dark value-noise background. Explosions add an irregular
//! blob whose boundary is warped by low-frequency noise and whose interior
//! heat follows a turbulence field, colored red through orange to yellow.
//! Structure confusers render the same blob from the same draws but replace
//! each pixel with a gray-brown tone of equal BT.601 luminance. Light sources
//! are smooth circular discs with a warm white core and an orange glow.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalkit::GroundTruthInterval;
use crate::preprocess::Frame;

pub const MIN_SIZE: usize = 16;
pub const DEFAULT_SIZE: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("image side {0} is below the minimum of {MIN_SIZE}")]
    Size(usize),
    #[error("need at least 10 images per class, got {0}")]
    TooFew(usize),
    #[error("validation fraction {0} is outside [0, 1)")]
    ValFraction(f64),
    #[error("no classes requested")]
    NoClasses,
    #[error("timeline is empty")]
    EmptyTimeline,
    #[error("fps must be finite and positive, got {0}")]
    Fps(f64),
    #[error("segment {index} has invalid duration {duration}")]
    Duration { index: usize, duration: f64 },
    #[error("unknown scene class `{0}`")]
    UnknownClass(String),
    #[error("timeline segment `{0}` is not class:seconds")]
    Segment(String),
    #[error("blob settings invalid: {0}")]
    Blob(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneClass {
    Explosion,
    LightSourceConfuser,
    StructureConfuser,
    PlainNegative,
}

impl SceneClass {
    pub const ALL: [Self; 4] = [
        Self::Explosion,
        Self::LightSourceConfuser,
        Self::StructureConfuser,
        Self::PlainNegative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Explosion => "explosion",
            Self::LightSourceConfuser => "light_source_confuser",
            Self::StructureConfuser => "structure_confuser",
            Self::PlainNegative => "plain_negative",
        }
    }

    pub fn is_positive(self) -> bool {
        self == Self::Explosion
    }

    fn tag(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for SceneClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneClass {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "explosion" => Self::Explosion,
            "light" | "light_source_confuser" => Self::LightSourceConfuser,
            "structure" | "structure_confuser" => Self::StructureConfuser,
            "plain" | "plain_negative" => Self::PlainNegative,
            _ => return Err(SynthError::UnknownClass(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundKind {
    /// Two octaves of value noise over a dark base color.
    ValueNoise,
    /// The dark base color alone.
    Flat,
}

/// Everything that determines one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecipe {
    pub class: SceneClass,
    pub seed: u64,
    pub size: usize,
    pub blob_count: usize,
    /// Blob radius bounds as fractions of the image side.
    pub radius_range: (f64, f64),
    pub background: BackgroundKind,
    /// Seconds since the start of the scene. Moves blobs and modulates their
    /// brightness; zero for still images.
    pub time_s: f64,
}

impl SceneRecipe {
    pub fn new(class: SceneClass, seed: u64, size: usize) -> Self {
        Self {
            class,
            seed,
            size,
            blob_count: 1,
            radius_range: (0.16, 0.30),
            background: BackgroundKind::ValueNoise,
            time_s: 0.0,
        }
    }

    pub fn at_time(mut self, time_s: f64) -> Self {
        self.time_s = time_s;
        self
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.size < MIN_SIZE {
            return Err(SynthError::Size(self.size));
        }
        let (lo, hi) = self.radius_range;
        if self.blob_count == 0 || self.blob_count > 8 {
            return Err(SynthError::Blob(format!("blob_count {} not in 1..=8", self.blob_count)));
        }
        if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
            return Err(SynthError::Blob(format!("radius range ({lo}, {hi})")));
        }
        if !self.time_s.is_finite() {
            return Err(SynthError::Blob("non-finite time".into()));
        }
        Ok(())
    }
}

/// Periodic value noise on a `cells x cells` lattice, smoothstep-interpolated.
struct ValueNoise {
    cells: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, cells: usize) -> Self {
        Self {
            cells,
            lattice: (0..cells * cells).map(|_| rng.gen::<f64>()).collect(),
        }
    }

    /// `u`, `v` in image units; one image side spans the lattice once.
    fn sample(&self, u: f64, v: f64) -> f64 {
        let g = self.cells as f64;
        let (x, y) = ((u * g).rem_euclid(g), (v * g).rem_euclid(g));
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (smooth(x - x0), smooth(y - y0));
        let n = self.cells;
        let (i0, j0) = (x0 as usize % n, y0 as usize % n);
        let (i1, j1) = ((i0 + 1) % n, (j0 + 1) % n);
        let at = |i: usize, j: usize| self.lattice[j * n + i];
        let top = at(i0, j0) + (at(i1, j0) - at(i0, j0)) * fx;
        let bottom = at(i0, j1) + (at(i1, j1) - at(i0, j1)) * fx;
        top + (bottom - top) * fy
    }
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 255.0) + 0.5).floor() as u8
}

fn luma_f(c: [f64; 3]) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

const BACKGROUND_BASES: [[f64; 3]; 5] = [
    [42.0, 46.0, 52.0],
    [38.0, 44.0, 32.0],
    [52.0, 44.0, 38.0],
    [34.0, 34.0, 48.0],
    [46.0, 46.0, 46.0],
];

/// Heat in [0, 1] to a red, orange, yellow ramp.
fn fire_color(h: f64) -> [f64; 3] {
    [
        255.0 * clamp01(0.55 + 0.6 * h),
        255.0 * clamp01(0.95 * h.powf(1.3)),
        255.0 * clamp01((h - 0.75) * 1.2),
    ]
}

/// Zero-luminance tint direction; red up, blue down gives a brown cast.
const BROWN_TINT: [f64; 3] = [10.0, -10.0 * (0.299 - 0.114) / 0.587, -10.0];

struct Blob {
    center: (f64, f64),
    velocity: (f64, f64),
    radius: f64,
    flicker_phase: f64,
    tint: f64,
    shape: ValueNoise,
    coarse: ValueNoise,
    fine: ValueNoise,
    drift: (f64, f64),
}

impl Blob {
    fn draw(rng: &mut ChaCha8Rng, recipe: &SceneRecipe) -> Self {
        let (lo, hi) = recipe.radius_range;
        let radius = rng.gen_range(lo..=hi);
        let margin = radius.min(0.3);
        Self {
            center: (
                rng.gen_range(margin..=1.0 - margin),
                rng.gen_range(margin..=1.0 - margin),
            ),
            velocity: (rng.gen_range(-0.03..0.03), rng.gen_range(-0.03..0.03)),
            radius,
            flicker_phase: rng.gen_range(0.0..std::f64::consts::TAU),
            tint: rng.gen_range(0.6..1.4),
            shape: ValueNoise::new(rng, 4),
            coarse: ValueNoise::new(rng, 6),
            fine: ValueNoise::new(rng, 14),
            drift: (rng.gen_range(-0.08..0.08), rng.gen_range(0.05..0.15)),
        }
    }

    fn center_at(&self, t: f64) -> (f64, f64) {
        (self.center.0 + self.velocity.0 * t, self.center.1 + self.velocity.1 * t)
    }

    fn flicker(&self, t: f64) -> f64 {
        1.0 + 0.08 * (std::f64::consts::TAU * 2.3 * t + self.flicker_phase).sin()
    }

    /// Irregular turbulent blob: coverage and heat at image point `(u, v)`.
    fn turbulent(&self, u: f64, v: f64, t: f64) -> (f64, f64) {
        let c = self.center_at(t);
        let (du, dv) = (u - c.0, v - c.1);
        let d = (du * du + dv * dv).sqrt() / self.radius;
        // noise is sampled in blob-local coordinates so the shape moves with it
        let (lu, lv) = (du + 0.5, dv + 0.5);
        let warp = 0.5 + 0.9 * self.shape.sample(lu, lv);
        let (su, sv) = (lu + self.drift.0 * t, lv - self.drift.1 * t);
        let turb = 0.6 * self.coarse.sample(su, sv) + 0.4 * self.fine.sample(su, sv);
        let d_eff = d / warp - 0.3 * (turb - 0.5);
        let alpha = smooth(clamp01((1.15 - d_eff) / 0.3));
        let heat = clamp01((1.0 - 0.6 * d_eff) * (0.35 + 0.85 * turb) * self.flicker(t));
        (alpha, heat)
    }

    /// Smooth disc: coverage and color.
    fn light(&self, u: f64, v: f64, t: f64) -> (f64, [f64; 3]) {
        let c = self.center_at(t);
        let d = ((u - c.0).powi(2) + (v - c.1).powi(2)).sqrt() / self.radius;
        let core = smooth(clamp01((1.0 - d) / 0.35));
        let glow = clamp01(1.0 - (d - 0.6) / 1.1).powi(2);
        let f = self.flicker(t);
        let core_rgb = [255.0, 215.0 * f.min(1.0), 45.0 * f.min(1.0)];
        let glow_rgb = [255.0, 115.0 * f, 5.0];
        let color = [0, 1, 2].map(|k| core * core_rgb[k] + (1.0 - core) * glow_rgb[k]);
        (core.max(0.9 * glow), color)
    }
}

/// Renders a recipe. Identical recipes give identical bytes.
pub fn gen_image(recipe: &SceneRecipe) -> Result<Frame, SynthError> {
    recipe.validate()?;
    let n = recipe.size;
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let base_idx = rng.gen_range(0..BACKGROUND_BASES.len());
    let gain = rng.gen_range(0.75..1.3);
    let base = BACKGROUND_BASES[base_idx].map(|c| c * gain);
    let bg_coarse = ValueNoise::new(&mut rng, 5);
    let bg_fine = ValueNoise::new(&mut rng, 21);
    // Blob draws come from their own stream so every class with the same
    // seed shares the background, and explosion and structure share blobs.
    let mut blob_rng = ChaCha8Rng::seed_from_u64(recipe.seed ^ 0x9e37_79b9_7f4a_7c15);
    let blobs: Vec<Blob> = (0..recipe.blob_count)
        .map(|_| Blob::draw(&mut blob_rng, recipe))
        .collect();

    let t = recipe.time_s;
    let mut data = Vec::with_capacity(n * n * 3);
    for y in 0..n {
        for x in 0..n {
            let (u, v) = ((x as f64 + 0.5) / n as f64, (y as f64 + 0.5) / n as f64);
            let texture = match recipe.background {
                BackgroundKind::ValueNoise => 0.55 + 0.6 * bg_coarse.sample(u, v) + 0.35 * (bg_fine.sample(u, v) - 0.5),
                BackgroundKind::Flat => 1.0,
            };
            let mut px = base.map(|c| c * texture);
            for blob in &blobs {
                px = match recipe.class {
                    SceneClass::PlainNegative => px,
                    SceneClass::Explosion => {
                        let (alpha, heat) = blob.turbulent(u, v, t);
                        let fire = fire_color(heat);
                        [0, 1, 2].map(|k| px[k] * (1.0 - alpha) + fire[k] * alpha)
                    }
                    SceneClass::StructureConfuser => {
                        let (alpha, heat) = blob.turbulent(u, v, t);
                        let fire = fire_color(heat);
                        let fired = [0, 1, 2].map(|k| px[k] * (1.0 - alpha) + fire[k] * alpha);
                        let y = luma_f(fired);
                        let s = alpha * blob.tint;
                        let gray = [0, 1, 2].map(|k| y + BROWN_TINT[k] * s);
                        if alpha > 0.0 {
                            gray
                        } else {
                            px
                        }
                    }
                    SceneClass::LightSourceConfuser => {
                        let (alpha, color) = blob.light(u, v, t);
                        [0, 1, 2].map(|k| px[k] * (1.0 - alpha) + color[k] * alpha)
                    }
                };
            }
            data.extend(px.map(to_byte));
        }
    }
    Ok(Frame::new(n, n, 3, data).expect("generated buffer matches its dims"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub recipe: SceneRecipe,
    pub frame: Frame,
}

impl LabeledImage {
    pub fn positive(&self) -> bool {
        self.recipe.class.is_positive()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub train: Vec<LabeledImage>,
    pub val: Vec<LabeledImage>,
}

/// Recipe seed for image `index` of `class`. Injective in `(class, index)`
/// for a fixed master seed.
pub fn recipe_seed(master: u64, class: SceneClass, index: usize) -> u64 {
    master.wrapping_mul(0x5851_f42d_4c95_7f2d) ^ (class.tag() << 40) ^ index as u64
}

/// Images `indices` of `class` under master seed `seed`.
pub fn gen_class_images(
    class: SceneClass,
    seed: u64,
    indices: std::ops::Range<usize>,
    size: usize,
) -> Result<Vec<LabeledImage>, SynthError> {
    indices
        .map(|i| {
            let recipe = SceneRecipe::new(class, recipe_seed(seed, class, i), size);
            let frame = gen_image(&recipe)?;
            Ok(LabeledImage { recipe, frame })
        })
        .collect()
}

/// `n_per_class` images of each class; the first `round(n * val_fraction)`
/// of every class form the validation split.
pub fn gen_dataset(
    n_per_class: usize,
    val_fraction: f64,
    seed: u64,
    classes: &[SceneClass],
    size: usize,
) -> Result<SynthDataset, SynthError> {
    if n_per_class < 10 {
        return Err(SynthError::TooFew(n_per_class));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(SynthError::ValFraction(val_fraction));
    }
    if classes.is_empty() {
        return Err(SynthError::NoClasses);
    }
    if size < MIN_SIZE {
        return Err(SynthError::Size(size));
    }
    let n_val = (n_per_class as f64 * val_fraction).round() as usize;
    let mut out = SynthDataset {
        train: Vec::new(),
        val: Vec::new(),
    };
    for &class in classes {
        let mut images = gen_class_images(class, seed, 0..n_per_class, size)?;
        out.train.extend(images.split_off(n_val));
        out.val.extend(images);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub class: SceneClass,
    pub duration_s: f64,
}

/// Parses `class:seconds` pairs separated by commas, e.g.
/// `plain:2,explosion:1,plain:2`.
pub fn parse_timeline(text: &str) -> Result<Vec<Segment>, SynthError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|part| {
            let (class, secs) = part
                .split_once(':')
                .ok_or_else(|| SynthError::Segment(part.to_string()))?;
            let duration_s = secs
                .trim()
                .parse::<f64>()
                .map_err(|_| SynthError::Segment(part.to_string()))?;
            Ok(Segment {
                class: class.parse()?,
                duration_s,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSequence {
    pub frames: Vec<Frame>,
    /// Class of every frame.
    pub classes: Vec<SceneClass>,
    pub truth: Vec<GroundTruthInterval>,
    pub fps: f64,
}

/// Renders a timeline. Segment `k` spans `round(duration * fps)` frames and
/// animates one scene. Consecutive explosion segments merge into one truth
/// interval whose bounds are frame boundaries divided by `fps`.
pub fn gen_sequence(timeline: &[Segment], fps: f64, seed: u64, size: usize) -> Result<SynthSequence, SynthError> {
    if timeline.is_empty() {
        return Err(SynthError::EmptyTimeline);
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(SynthError::Fps(fps));
    }
    if size < MIN_SIZE {
        return Err(SynthError::Size(size));
    }
    let mut frames = Vec::new();
    let mut classes = Vec::new();
    let mut truth: Vec<GroundTruthInterval> = Vec::new();
    let mut open: Option<usize> = None;
    for (k, seg) in timeline.iter().enumerate() {
        if !(seg.duration_s.is_finite() && seg.duration_s >= 0.0) {
            return Err(SynthError::Duration {
                index: k,
                duration: seg.duration_s,
            });
        }
        let count = (seg.duration_s * fps).round() as usize;
        let start = frames.len();
        let recipe = SceneRecipe::new(seg.class, recipe_seed(seed, seg.class, k), size);
        for f in 0..count {
            let frame = gen_image(&recipe.clone().at_time(f as f64 / fps))?;
            frames.push(frame.with_index((start + f) as u64));
            classes.push(seg.class);
        }
        match (seg.class.is_positive() && count > 0, open) {
            (true, None) => open = Some(start),
            (false, Some(s)) if count > 0 => {
                truth.push(GroundTruthInterval::new(
                    s as f64 / fps,
                    start as f64 / fps,
                    "explosion",
                ));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        truth.push(GroundTruthInterval::new(
            s as f64 / fps,
            frames.len() as f64 / fps,
            "explosion",
        ));
    }
    Ok(SynthSequence {
        frames,
        classes,
        truth,
        fps,
    })
}

/// Mean HSV saturation over pixels selected by `mask`.
pub fn mean_saturation(frame: &Frame, mask: impl Fn(usize, usize) -> bool) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            if mask(x, y) {
                let p = frame.pixel(x, y);
                let (mx, mn) = (*p.iter().max().unwrap(), *p.iter().min().unwrap());
                sum += if mx == 0 {
                    0.0
                } else {
                    f64::from(mx - mn) / f64::from(mx)
                };
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
