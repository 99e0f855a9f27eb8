//! Synthetic stereo sequences with exact ground truth.
//!
//! A level camera pair drives forward over a flat textured road toward static,
//! fronto-parallel boxes standing on it. Every pixel is ray cast from both cameras, so the
//! color texture, disparity and FREE/OBSTACLE mask agree exactly. Everything above the
//! horizon that is not a box is sky: invalid disparity, OBSTACLE in the mask.
//!
//! Two color styles share identical geometry statistics. Style A has a bright gray road,
//! style B a dark red-tinted one; boxes draw from the same palette in both.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CameraRig, GroundPlane};
use crate::imgio::{
    quantize_disparity, write_color_image, write_disparity, write_label_mask, ColorImage, DisparityImage, Label,
    LabelMask, PRECEDING_FRAMES,
};

/// Boxes must stay at least this far ahead of the camera in every frame.
pub const Z_NEAR: f64 = 1.0;

/// Frames per sequence: the preceding frames plus the annotated one.
pub const FRAMES_PER_SEQUENCE: usize = PRECEDING_FRAMES + 1;

/// Rig of the generated benchmark: 128x96 images, horizon at row 40.
pub fn benchmark_rig() -> CameraRig {
    CameraRig {
        focal: 100.0,
        baseline: 0.5,
        cx: 63.5,
        cy: 40.0,
        width: 128,
        height: 96,
    }
}

pub const BENCHMARK_CAMERA_HEIGHT: f64 = 1.5;

/// Run config matching [`benchmark_rig`], written next to the generated sequences.
pub const BENCHMARK_CONFIG: &str = "\
# camera of the generated benchmark
focal_px = 100
baseline_m = 0.5
cx = 63.5
cy = 40
camera_height_m = 1.5
";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    A,
    B,
}

impl Style {
    pub fn name(self) -> &'static str {
        match self {
            Style::A => "A",
            Style::B => "B",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSpec {
    /// Lateral center, meters.
    pub x: f64,
    /// Depth of the front face in the first frame.
    pub z: f64,
    pub width: f64,
    pub height: f64,
    pub color: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisparityNoise {
    /// Standard deviation of additive Gaussian noise, pixels.
    pub sigma: f64,
    /// Fraction of otherwise valid pixels dropped.
    pub invalid_rate: f64,
}

impl DisparityNoise {
    pub const NONE: DisparityNoise = DisparityNoise {
        sigma: 0.0,
        invalid_rate: 0.0,
    };
    pub const MILD: DisparityNoise = DisparityNoise {
        sigma: 0.3,
        invalid_rate: 0.05,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub rig: CameraRig,
    pub camera_height: f64,
    /// Forward motion per frame, meters.
    pub speed: f64,
    pub boxes: Vec<BoxSpec>,
    pub road_color: [f64; 3],
    /// Texture amplitude around the road color.
    pub road_contrast: f64,
    pub sky_color: [f64; 3],
    pub texture_seed: u64,
    /// Per-frame random-walk steps of brightness (added) and contrast (multiplied).
    pub brightness_step: f64,
    pub contrast_step: f64,
    /// Per-pixel color noise amplitude.
    pub pixel_noise: f64,
    pub noise: DisparityNoise,
    pub frames: usize,
}

impl SceneSpec {
    /// Randomized scene of a given style; depends only on `(style, seed)`.
    pub fn random(rig: CameraRig, style: Style, noise: DisparityNoise, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jitter = |base: [f64; 3], amount: f64, rng: &mut ChaCha8Rng| {
            let shift = rng.gen_range(-amount..amount);
            base.map(|c| (c + shift + rng.gen_range(-amount / 2.0..amount / 2.0)).clamp(0.0, 255.0))
        };
        let (road, road_contrast) = match style {
            Style::A => ([150.0, 150.0, 150.0], 30.0),
            Style::B => ([95.0, 45.0, 40.0], 22.0),
        };
        // obstacles look the same in both styles; only the road changes
        let box_palette = [[50.0, 70.0, 150.0], [60.0, 130.0, 60.0], [200.0, 180.0, 60.0]];
        let road_color = jitter(road, 25.0, &mut rng);
        let n_boxes = rng.gen_range(1..=3);
        let mut boxes = Vec::with_capacity(n_boxes);
        for _ in 0..n_boxes {
            let base = box_palette[rng.gen_range(0..box_palette.len())];
            boxes.push(BoxSpec {
                x: rng.gen_range(-4.0..4.0),
                z: rng.gen_range(10.0..30.0),
                width: rng.gen_range(1.0..3.0),
                height: rng.gen_range(0.8..2.5),
                color: jitter(base, 30.0, &mut rng),
            });
        }
        Self {
            rig,
            camera_height: BENCHMARK_CAMERA_HEIGHT,
            speed: 0.5,
            boxes,
            road_color,
            road_contrast,
            sky_color: [170.0, 200.0, 235.0],
            texture_seed: rng.gen(),
            brightness_step: 3.0,
            contrast_step: 0.02,
            pixel_noise: 4.0,
            noise,
            frames: FRAMES_PER_SEQUENCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rig.validate()?;
        if self.frames == 0 {
            return Err(Error::arg("scene needs at least one frame"));
        }
        if !(self.camera_height > 0.0 && self.speed >= 0.0) {
            return Err(Error::arg("camera height must be positive and speed non-negative"));
        }
        let travel = self.speed * (self.frames - 1) as f64;
        for (i, b) in self.boxes.iter().enumerate() {
            if b.z - travel <= Z_NEAR {
                return Err(Error::arg(format!(
                    "box {i} at z={} reaches the camera within {} frames",
                    b.z, self.frames
                )));
            }
            if !(b.width > 0.0 && b.height > 0.0) {
                return Err(Error::arg(format!("box {i} has a non-positive size")));
            }
        }
        if !(0.0..=1.0).contains(&self.noise.invalid_rate) || self.noise.sigma < 0.0 {
            return Err(Error::arg("invalid disparity noise"));
        }
        Ok(())
    }

    /// The ground line the scene was generated from.
    pub fn ground_plane(&self) -> GroundPlane {
        GroundPlane::from_camera_height(&self.rig, self.camera_height)
    }
}

/// One rendered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrame {
    pub left: ColorImage,
    pub right: ColorImage,
    /// Noisy disparity, as a matcher would deliver it.
    pub disparity: DisparityImage,
    pub clean_disparity: DisparityImage,
    pub gt: LabelMask,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic 64-bit mix of two values.
pub fn hash2(a: u64, b: u64) -> u64 {
    splitmix(splitmix(a) ^ b.rotate_left(32))
}

fn lattice(seed: u64, i: i64, j: i64) -> f64 {
    (hash2(hash2(seed, i as u64), j as u64) >> 11) as f64 / (1u64 << 53) as f64
}

/// Smooth value noise in `[0, 1]`, unit lattice spacing.
fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (i, j) = (fx as i64, fy as i64);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (s(x - fx), s(y - fy));
    let a = lattice(seed, i, j) * (1.0 - tx) + lattice(seed, i + 1, j) * tx;
    let b = lattice(seed, i, j + 1) * (1.0 - tx) + lattice(seed, i + 1, j + 1) * tx;
    a * (1.0 - ty) + b * ty
}

/// Two-octave texture in `[-1, 1]`.
fn texture(seed: u64, x: f64, y: f64) -> f64 {
    let t = 0.6 * value_noise(seed, x / 1.2, y / 1.2) + 0.4 * value_noise(seed ^ 0x5555, x / 0.35, y / 0.35);
    2.0 * t - 1.0
}

enum Hit {
    Ground { x: f64, z: f64 },
    Box { index: usize, x: f64, y: f64, z: f64 },
    Sky,
}

fn cast(spec: &SceneSpec, cam_x: f64, travel: f64, u: f64, v: f64) -> Hit {
    let r = &spec.rig;
    let (dx, dy) = ((u - r.cx) / r.focal, (v - r.cy) / r.focal);
    let mut best = if v > r.cy {
        let z = spec.camera_height / dy;
        Hit::Ground { x: cam_x + dx * z, z }
    } else {
        Hit::Sky
    };
    let mut best_z = match best {
        Hit::Ground { z, .. } => z,
        _ => f64::INFINITY,
    };
    for (index, b) in spec.boxes.iter().enumerate() {
        let z = b.z - travel;
        if z <= 0.0 || z > best_z {
            continue;
        }
        let x = cam_x + dx * z;
        let y = dy * z;
        if (x - b.x).abs() <= b.width / 2.0 && y <= spec.camera_height && y >= spec.camera_height - b.height {
            best = Hit::Box { index, x, y, z };
            best_z = z;
        }
    }
    best
}

fn shade(spec: &SceneSpec, hit: &Hit, travel: f64) -> [f64; 3] {
    match *hit {
        Hit::Ground { x, z } => {
            let t = texture(spec.texture_seed, x, z + travel);
            spec.road_color.map(|c| c + spec.road_contrast * t)
        }
        Hit::Box { index, x, y, .. } => {
            let t = texture(hash2(spec.texture_seed, index as u64 + 1), x * 1.5, y * 1.5);
            spec.boxes[index].color.map(|c| c + 28.0 * t)
        }
        Hit::Sky => spec.sky_color,
    }
}

fn render_frame(spec: &SceneSpec, seed: u64, frame: usize, brightness: f64, contrast: f64) -> SynthFrame {
    let r = &spec.rig;
    let (w, h) = (r.width, r.height);
    let travel = spec.speed * frame as f64;
    let plane = spec.ground_plane();
    let mut rng = ChaCha8Rng::seed_from_u64(hash2(seed, frame as u64));
    let mut left = ColorImage::filled(w, h, [0, 0, 0]);
    let mut right = ColorImage::filled(w, h, [0, 0, 0]);
    let mut clean = DisparityImage::invalid(w, h);
    let mut gt = LabelMask::filled(w, h, Label::Obstacle);

    let finish = |rgb: [f64; 3], rng: &mut ChaCha8Rng| {
        rgb.map(|c| {
            let n = if spec.pixel_noise > 0.0 {
                rng.gen_range(-spec.pixel_noise..spec.pixel_noise)
            } else {
                0.0
            };
            (128.0 + contrast * (c - 128.0) + brightness + n).round().clamp(0.0, 255.0) as u8
        })
    };
    for v in 0..h {
        for u in 0..w {
            let hit = cast(spec, 0.0, travel, u as f64, v as f64);
            let i = v * w + u;
            match hit {
                Hit::Ground { .. } => {
                    gt.set(u, v, Label::Free);
                    clean.disparity[i] = plane.ground_expect(v as f64) as f32;
                    clean.valid[i] = true;
                }
                Hit::Box { z, .. } => {
                    clean.disparity[i] = (r.focal * r.baseline / z) as f32;
                    clean.valid[i] = true;
                }
                Hit::Sky => {}
            }
            left.set_pixel(u, v, finish(shade(spec, &hit, travel), &mut rng));
            let hit_r = cast(spec, r.baseline, travel, u as f64, v as f64);
            right.set_pixel(u, v, finish(shade(spec, &hit_r, travel), &mut rng));
        }
    }

    let mut disparity = clean.clone();
    if spec.noise.sigma > 0.0 || spec.noise.invalid_rate > 0.0 {
        let normal = Normal::new(0.0, spec.noise.sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
        for i in 0..w * h {
            if !disparity.valid[i] {
                continue;
            }
            let drop = rng.gen_bool(spec.noise.invalid_rate);
            let d = disparity.disparity[i] as f64 + if spec.noise.sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            if drop || d <= 0.0 {
                disparity.disparity[i] = 0.0;
                disparity.valid[i] = false;
            } else {
                disparity.disparity[i] = d as f32;
            }
        }
    }
    SynthFrame {
        left,
        right,
        disparity,
        clean_disparity: clean,
        gt,
    }
}

/// Renders every frame of a scene; deterministic in `(spec, seed)`.
pub fn gen_sequence(spec: &SceneSpec, seed: u64) -> Result<Vec<SynthFrame>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(hash2(seed, u64::MAX));
    let mut lighting = Vec::with_capacity(spec.frames);
    let (mut b, mut c) = (0.0f64, 1.0f64);
    for _ in 0..spec.frames {
        lighting.push((b, c));
        b += rng.gen_range(-spec.brightness_step..=spec.brightness_step);
        c *= 1.0 + rng.gen_range(-spec.contrast_step..=spec.contrast_step);
    }
    Ok(lighting
        .into_par_iter()
        .enumerate()
        .map(|(k, (b, c))| render_frame(spec, seed, k, b, c))
        .collect())
}

/// Layout and noise of a generated benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkEntry {
    pub index: usize,
    pub style: Style,
    pub seed: u64,
    pub spec: SceneSpec,
}

/// Scenes of a benchmark without rendering them. Sequences before `shift_at` are style A;
/// even-numbered sequences are noiseless, odd ones get mild disparity noise.
pub fn benchmark_plan(n_sequences: usize, shift_at: usize, seed: u64) -> Vec<BenchmarkEntry> {
    (0..n_sequences)
        .map(|index| {
            let style = if index < shift_at { Style::A } else { Style::B };
            let noise = if index % 2 == 0 {
                DisparityNoise::NONE
            } else {
                DisparityNoise::MILD
            };
            let seq_seed = hash2(seed, index as u64);
            BenchmarkEntry {
                index,
                style,
                seed: seq_seed,
                spec: SceneSpec::random(benchmark_rig(), style, noise, seq_seed),
            }
        })
        .collect()
}

pub const MANIFEST_HEADER: &str =
    "sequence,style,seed,noise_sigma,invalid_rate,road_r,road_g,road_b,boxes(x:z:width:height)";

fn manifest(plan: &[BenchmarkEntry]) -> String {
    let mut out = format!("{MANIFEST_HEADER}\n");
    for e in plan {
        let boxes: Vec<String> = e
            .spec
            .boxes
            .iter()
            .map(|b| format!("{:.3}:{:.3}:{:.3}:{:.3}", b.x, b.z, b.width, b.height))
            .collect();
        let c = e.spec.road_color;
        let _ = writeln!(
            out,
            "seq{:03},{},{},{},{},{:.1},{:.1},{:.1},{}",
            e.index,
            e.style.name(),
            e.seed,
            e.spec.noise.sigma,
            e.spec.noise.invalid_rate,
            c[0],
            c[1],
            c[2],
            boxes.join(";")
        );
    }
    out
}

/// Writes `n_sequences` sequences in the dataset layout plus `manifest.csv` and
/// `benchmark.cfg`.
pub fn gen_benchmark(root: impl AsRef<Path>, n_sequences: usize, shift_at: usize, seed: u64) -> Result<Vec<BenchmarkEntry>> {
    let root = root.as_ref();
    if n_sequences < 4 {
        return Err(Error::arg(format!("need at least 4 sequences, got {n_sequences}")));
    }
    let plan = benchmark_plan(n_sequences, shift_at, seed);
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for e in &plan {
        let dir = root.join(format!("seq{:03}", e.index));
        std::fs::create_dir_all(&dir).map_err(|err| Error::io(&dir, err))?;
        let frames = gen_sequence(&e.spec, e.seed)?;
        for (k, f) in frames.iter().enumerate() {
            write_color_image(&f.left, dir.join(format!("frame_{k:02}.ppm")))?;
            write_color_image(&f.right, dir.join(format!("frame_{k:02}.right.ppm")))?;
            write_disparity(&f.disparity, dir.join(format!("frame_{k:02}.dmap.pgm")))?;
            if k == PRECEDING_FRAMES {
                write_label_mask(&f.gt, dir.join(format!("frame_{k:02}.gt.pgm")))?;
            }
        }
    }
    let path = root.join("manifest.csv");
    std::fs::write(&path, manifest(&plan)).map_err(|e| Error::io(&path, e))?;
    let path = root.join("benchmark.cfg");
    std::fs::write(&path, BENCHMARK_CONFIG).map_err(|e| Error::io(&path, e))?;
    Ok(plan)
}

/// Disparity exactly as stored on disk by [`gen_benchmark`].
pub fn stored_disparity(frame: &SynthFrame) -> DisparityImage {
    quantize_disparity(&frame.disparity)
}
