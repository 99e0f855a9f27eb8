//! Run configuration: a `key = value` text file.
//!
//! Blank lines and lines starting with `#` are skipped. Unknown keys are rejected so that
//! typos do not silently fall back to defaults. Every key is optional.
//!
//! ```text
//! focal_px = 100
//! baseline_m = 0.5
//! cx = 63.5
//! cy = 40
//! bev.cell = 0.1
//! stixel.beta_seg = 8
//! ```

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fcn::TrainConfig;
use crate::geometry::{BevGridSpec, CameraRig, FitParams, GroundPlane};
use crate::imgio::DEFAULT_DISPARITY_SCALE;
use crate::stereo::MatchParams;
use crate::stixel::StixelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub focal: f64,
    pub baseline: f64,
    /// Principal point; `None` means image center.
    pub cx: Option<f64>,
    pub cy: Option<f64>,
    /// Mounting height, used for the fallback plane when no explicit plane is given.
    pub camera_height: f64,
    /// Explicit fallback plane (`plane.alpha`, `plane.v_horizon`).
    pub plane: Option<GroundPlane>,
    pub bev: BevGridSpec,
    pub disparity_scale: f32,
    pub ransac: FitParams,
    pub stixel: StixelParams,
    pub stereo: MatchParams,
    pub train: TrainConfig,
    pub online: OnlineConfig,
}

/// Iteration budgets and learning-rate scaling for per-sequence training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineConfig {
    pub scratch_iterations: usize,
    pub tune_iterations: usize,
    pub lr_multiplier: f64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            scratch_iterations: 10_000,
            tune_iterations: 2_000,
            lr_multiplier: 1.0,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        // matches the synthetic benchmark rig
        Self {
            focal: 100.0,
            baseline: 0.5,
            cx: None,
            cy: None,
            camera_height: 1.5,
            plane: None,
            bev: BevGridSpec::default(),
            disparity_scale: DEFAULT_DISPARITY_SCALE,
            ransac: FitParams::default(),
            stixel: StixelParams::default(),
            stereo: MatchParams::default(),
            train: TrainConfig::default(),
            online: OnlineConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let mut alpha = None;
        let mut v_horizon = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "focal_px" => c.focal = parse(key, value)?,
                "baseline_m" => c.baseline = parse(key, value)?,
                "cx" => c.cx = Some(parse(key, value)?),
                "cy" => c.cy = Some(parse(key, value)?),
                "camera_height_m" => c.camera_height = parse(key, value)?,
                "plane.alpha" => alpha = Some(parse(key, value)?),
                "plane.v_horizon" => v_horizon = Some(parse(key, value)?),
                "bev.x_min" => c.bev.x_min = parse(key, value)?,
                "bev.x_max" => c.bev.x_max = parse(key, value)?,
                "bev.z_min" => c.bev.z_min = parse(key, value)?,
                "bev.z_max" => c.bev.z_max = parse(key, value)?,
                "bev.cell" => c.bev.cell = parse(key, value)?,
                "disparity.scale" => c.disparity_scale = parse(key, value)?,
                "ransac.iterations" => c.ransac.iterations = parse(key, value)?,
                "ransac.threshold" => c.ransac.inlier_threshold = parse(key, value)?,
                "ransac.min_inliers" => c.ransac.min_inliers = parse(key, value)?,
                "ransac.blend" => c.ransac.blend = parse(key, value)?,
                "ransac.seed" => c.ransac.seed = parse(key, value)?,
                "stixel.sigma" => c.stixel.sigma = parse(key, value)?,
                "stixel.kappa" => c.stixel.kappa = parse(key, value)?,
                "stixel.c_invalid" => c.stixel.c_invalid = parse(key, value)?,
                "stixel.beta_seg" => c.stixel.beta_seg = parse(key, value)?,
                "stixel.beta_base" => c.stixel.beta_base = parse(key, value)?,
                "stixel.delta_grav" => c.stixel.delta_grav = parse(key, value)?,
                "stixel.width" => c.stixel.stixel_width = parse(key, value)?,
                "stereo.window" => c.stereo.window = parse(key, value)?,
                "stereo.max_disparity" => c.stereo.max_disparity = parse(key, value)?,
                "stereo.lr_tolerance" => c.stereo.lr_tolerance = parse(key, value)?,
                "train.learning_rate" => c.train.learning_rate = parse(key, value)?,
                "train.momentum" => c.train.momentum = parse(key, value)?,
                "train.batch_size" => c.train.batch_size = parse(key, value)?,
                "train.iterations" => c.train.iterations = parse(key, value)?,
                "train.seed" => c.train.seed = parse(key, value)?,
                "train.freeze_first" => c.train.freeze_first = parse(key, value)?,
                "online.scratch_iterations" => c.online.scratch_iterations = parse(key, value)?,
                "online.tune_iterations" => c.online.tune_iterations = parse(key, value)?,
                "online.lr_multiplier" => c.online.lr_multiplier = parse(key, value)?,
                _ => return Err(Error::Config(format!("line {}: unknown key {key:?}", lineno + 1))),
            }
        }
        c.plane = match (alpha, v_horizon) {
            (Some(a), Some(v)) => Some(GroundPlane::new(a, v)),
            (None, None) => None,
            _ => return Err(Error::Config("plane.alpha and plane.v_horizon must be given together".into())),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0 && self.baseline > 0.0 && self.camera_height > 0.0) {
            return Err(Error::Config("focal_px, baseline_m and camera_height_m must be positive".into()));
        }
        if !(self.disparity_scale > 0.0) {
            return Err(Error::Config("disparity.scale must be positive".into()));
        }
        self.bev.validate()?;
        self.stixel.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// Camera for images of the given size.
    pub fn rig(&self, width: usize, height: usize) -> Result<CameraRig> {
        let rig = CameraRig {
            focal: self.focal,
            baseline: self.baseline,
            cx: self.cx.unwrap_or((width as f64 - 1.0) / 2.0),
            cy: self.cy.unwrap_or((height as f64 - 1.0) / 2.0),
            width,
            height,
        };
        rig.validate()?;
        Ok(rig)
    }

    /// Plane used when fitting fails and no earlier fit exists.
    pub fn default_plane(&self, rig: &CameraRig) -> GroundPlane {
        self.plane
            .unwrap_or_else(|| GroundPlane::from_camera_height(rig, self.camera_height))
    }
}
