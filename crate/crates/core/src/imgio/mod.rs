//! Image, disparity, label and confidence containers plus their on-disk formats.
//!
//! Every format here is a binary netpbm variant:
//!
//! | data            | magic | maxval | encoding                                   |
//! |-----------------|-------|--------|--------------------------------------------|
//! | color image     | P6    | 255    | RGB triplets                               |
//! | disparity       | P5    | 65535  | big-endian `raw`, `d = raw / scale`, 0 = invalid |
//! | label mask      | P5    | 255    | 255 FREE, 0 OBSTACLE, 128 IGNORE           |
//! | confidence map  | P5    | 65535  | big-endian `raw = round((c + 1) / 2 * 65535)` |

mod dataset;
mod model_file;
pub mod pnm;

use std::path::Path;

use crate::error::{Error, Result};

pub use dataset::{discover_sequences, Sequence, SequenceSet, SequenceWarning, PRECEDING_FRAMES};
pub use model_file::{deserialize_model, read_model, serialize_model, write_model, MODEL_MAGIC};

/// Fixed-point denominator used by most block matchers.
pub const DEFAULT_DISPARITY_SCALE: f32 = 16.0;

/// 8-bit RGB image, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::arg(format!(
                "color data has {} bytes, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn pixel(&self, u: usize, v: usize) -> [u8; 3] {
        let i = (v * self.width + u) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, u: usize, v: usize, rgb: [u8; 3]) {
        let i = (v * self.width + u) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Dense disparity with an explicit validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityImage {
    pub width: usize,
    pub height: usize,
    pub disparity: Vec<f32>,
    pub valid: Vec<bool>,
    pub scale: f32,
}

impl DisparityImage {
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            disparity: vec![0.0; width * height],
            valid: vec![false; width * height],
            scale: DEFAULT_DISPARITY_SCALE,
        }
    }

    /// Builds an image from raw values; non-positive or non-finite entries become invalid.
    pub fn from_values(width: usize, height: usize, values: &[f32]) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::arg(format!(
                "disparity has {} values, expected {}",
                values.len(),
                width * height
            )));
        }
        let mut img = Self::invalid(width, height);
        for (i, &d) in values.iter().enumerate() {
            if d.is_finite() && d > 0.0 {
                img.disparity[i] = d;
                img.valid[i] = true;
            }
        }
        Ok(img)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<f32> {
        let i = v * self.width + u;
        self.valid[i].then_some(self.disparity[i])
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Free,
    Obstacle,
    Ignore,
}

impl Label {
    pub fn to_byte(self) -> u8 {
        match self {
            Label::Free => 255,
            Label::Obstacle => 0,
            Label::Ignore => 128,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            255 => Some(Label::Free),
            0 => Some(Label::Obstacle),
            128 => Some(Label::Ignore),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    pub width: usize,
    pub height: usize,
    pub label: Vec<Label>,
}

impl LabelMask {
    pub fn filled(width: usize, height: usize, label: Label) -> Self {
        Self {
            width,
            height,
            label: vec![label; width * height],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Label {
        self.label[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, label: Label) {
        self.label[v * self.width + u] = label;
    }

    pub fn count(&self, label: Label) -> usize {
        self.label.iter().filter(|&&l| l == label).count()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Per-pixel free-space confidence in `[-1, 1]`; higher means more likely drivable.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl ConfidenceMap {
    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.values[v * self.width + u]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

pub fn read_color_image(path: impl AsRef<Path>) -> Result<ColorImage> {
    let (h, raster) = pnm::read_file(path.as_ref(), pnm::Magic::Rgb, 255)?;
    ColorImage::new(h.width, h.height, raster)
}

pub fn write_color_image(img: &ColorImage, path: impl AsRef<Path>) -> Result<()> {
    pnm::write_file(
        path.as_ref(),
        pnm::Magic::Rgb,
        img.width,
        img.height,
        255,
        &img.data,
    )
}

fn check_scale(scale: f32) -> Result<()> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::arg(format!("disparity scale must be > 0, got {scale}")));
    }
    Ok(())
}

pub fn read_disparity(path: impl AsRef<Path>, scale: f32) -> Result<DisparityImage> {
    check_scale(scale)?;
    let (h, raster) = pnm::read_file(path.as_ref(), pnm::Magic::Gray, 65535)?;
    decode_disparity(h.width, h.height, &raster, scale)
}

fn decode_disparity(width: usize, height: usize, raster: &[u8], scale: f32) -> Result<DisparityImage> {
    let mut img = DisparityImage::invalid(width, height);
    img.scale = scale;
    for (i, pair) in raster.chunks_exact(2).enumerate() {
        let raw = u16::from_be_bytes([pair[0], pair[1]]);
        if raw > 0 {
            img.disparity[i] = raw as f32 / scale;
            img.valid[i] = true;
        }
    }
    Ok(img)
}

/// Quantizes to `round(d * scale)`; valid pixels never quantize to the invalid code 0.
pub fn encode_disparity_raw(img: &DisparityImage) -> Vec<u16> {
    img.disparity
        .iter()
        .zip(&img.valid)
        .map(|(&d, &ok)| {
            if ok {
                (d * img.scale).round().clamp(1.0, 65535.0) as u16
            } else {
                0
            }
        })
        .collect()
}

pub fn write_disparity(img: &DisparityImage, path: impl AsRef<Path>) -> Result<()> {
    check_scale(img.scale)?;
    let payload: Vec<u8> = encode_disparity_raw(img)
        .into_iter()
        .flat_map(u16::to_be_bytes)
        .collect();
    pnm::write_file(
        path.as_ref(),
        pnm::Magic::Gray,
        img.width,
        img.height,
        65535,
        &payload,
    )
}

/// Round-trips a disparity image through its fixed-point file encoding.
pub fn quantize_disparity(img: &DisparityImage) -> DisparityImage {
    let raster: Vec<u8> = encode_disparity_raw(img)
        .into_iter()
        .flat_map(u16::to_be_bytes)
        .collect();
    decode_disparity(img.width, img.height, &raster, img.scale).expect("raster sized by construction")
}

pub fn read_label_mask(path: impl AsRef<Path>) -> Result<LabelMask> {
    let (h, raster) = pnm::read_file(path.as_ref(), pnm::Magic::Gray, 255)?;
    decode_label_mask(h.width, h.height, &raster)
}

pub fn decode_label_mask(width: usize, height: usize, raster: &[u8]) -> Result<LabelMask> {
    let mut label = Vec::with_capacity(raster.len());
    for (offset, &b) in raster.iter().enumerate() {
        match Label::from_byte(b) {
            Some(l) => label.push(l),
            None => {
                return Err(Error::format(
                    "payload",
                    format!("sample {b} at offset {offset} is not one of 0, 128, 255"),
                ))
            }
        }
    }
    Ok(LabelMask {
        width,
        height,
        label,
    })
}

pub fn write_label_mask(mask: &LabelMask, path: impl AsRef<Path>) -> Result<()> {
    let payload: Vec<u8> = mask.label.iter().map(|l| l.to_byte()).collect();
    pnm::write_file(
        path.as_ref(),
        pnm::Magic::Gray,
        mask.width,
        mask.height,
        255,
        &payload,
    )
}

pub fn read_confidence_map(path: impl AsRef<Path>) -> Result<ConfidenceMap> {
    let (h, raster) = pnm::read_file(path.as_ref(), pnm::Magic::Gray, 65535)?;
    let values = raster
        .chunks_exact(2)
        .map(|p| u16::from_be_bytes([p[0], p[1]]) as f32 / 65535.0 * 2.0 - 1.0)
        .collect();
    Ok(ConfidenceMap {
        width: h.width,
        height: h.height,
        values,
    })
}

pub fn write_confidence_map(map: &ConfidenceMap, path: impl AsRef<Path>) -> Result<()> {
    let payload: Vec<u8> = map
        .values
        .iter()
        .map(|&c| (((c.clamp(-1.0, 1.0) + 1.0) * 0.5 * 65535.0).round()) as u16)
        .flat_map(u16::to_be_bytes)
        .collect();
    pnm::write_file(
        path.as_ref(),
        pnm::Magic::Gray,
        map.width,
        map.height,
        65535,
        &payload,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn reads_two_pixel_ppm() {
        let dir = tmp();
        let p = dir.path().join("a.ppm");
        std::fs::write(&p, b"P6\n2 1\n255\n\xff\x00\x00\x00\xff\x00").unwrap();
        let img = read_color_image(&p).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.data, vec![255, 0, 0, 0, 255, 0]);
    }

    #[test]
    fn p5_passed_as_color_is_rejected() {
        let dir = tmp();
        let p = dir.path().join("a.pgm");
        std::fs::write(&p, b"P5\n1 1\n255\n\x00").unwrap();
        let err = read_color_image(&p).unwrap_err();
        assert!(err.to_string().contains("expected P6"), "{err}");
    }

    #[test]
    fn zero_width_is_rejected() {
        let dir = tmp();
        let p = dir.path().join("a.ppm");
        std::fs::write(&p, b"P6\n0 1\n255\n").unwrap();
        let err = read_color_image(&p).unwrap_err();
        assert!(err.to_string().contains("width"), "{err}");
    }

    #[test]
    fn color_maxval_must_be_255() {
        let dir = tmp();
        let p = dir.path().join("a.ppm");
        std::fs::write(&p, b"P6\n1 1\n100\n\x00\x00\x00").unwrap();
        let err = read_color_image(&p).unwrap_err();
        assert!(err.to_string().contains("maxval"), "{err}");
    }

    #[test]
    fn truncated_color_payload() {
        let dir = tmp();
        let p = dir.path().join("a.ppm");
        std::fs::write(&p, b"P6\n2 1\n255\n\x00\x00\x00").unwrap();
        let err = read_color_image(&p).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn disparity_fixed_point() {
        let dir = tmp();
        let p = dir.path().join("d.pgm");
        // samples 160 and 0
        std::fs::write(&p, b"P5\n2 1\n65535\n\x00\xa0\x00\x00").unwrap();
        let d = read_disparity(&p, 16.0).unwrap();
        assert_eq!(d.disparity, vec![10.0, 0.0]);
        assert_eq!(d.valid, vec![true, false]);
        assert!(matches!(read_disparity(&p, 0.0), Err(Error::Argument(_))));
    }

    #[test]
    fn disparity_maxval_must_be_65535() {
        let dir = tmp();
        let p = dir.path().join("d.pgm");
        std::fs::write(&p, b"P5\n1 1\n255\n\x00").unwrap();
        assert!(matches!(read_disparity(&p, 16.0), Err(Error::Format { .. })));
    }

    #[test]
    fn label_mask_encoding() {
        let dir = tmp();
        let p = dir.path().join("m.pgm");
        std::fs::write(&p, b"P5\n1 3\n255\n\xff\x00\x80").unwrap();
        let m = read_label_mask(&p).unwrap();
        assert_eq!(m.label, vec![Label::Free, Label::Obstacle, Label::Ignore]);
    }

    #[test]
    fn label_mask_bad_sample() {
        let dir = tmp();
        let p = dir.path().join("m.pgm");
        std::fs::write(&p, b"P5\n2 1\n255\n\x07\x00").unwrap();
        let err = read_label_mask(&p).unwrap_err();
        assert!(err.to_string().contains("offset 0"), "{err}");
    }

    #[test]
    fn confidence_extremes_survive_file() {
        let dir = tmp();
        let p = dir.path().join("c.pgm");
        let map = ConfidenceMap {
            width: 3,
            height: 1,
            values: vec![-1.0, 0.0, 1.0],
        };
        write_confidence_map(&map, &p).unwrap();
        let back = read_confidence_map(&p).unwrap();
        assert_eq!(back.values[0], -1.0);
        assert_eq!(back.values[2], 1.0);
        assert!(back.values[1].abs() < 1e-4);
    }

    fn label_strategy() -> impl Strategy<Value = Label> {
        prop_oneof![Just(Label::Free), Just(Label::Obstacle), Just(Label::Ignore)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn label_mask_round_trip(labels in proptest::collection::vec(label_strategy(), 64)) {
            let dir = tmp();
            let p = dir.path().join("m.pgm");
            let mask = LabelMask { width: 8, height: 8, label: labels };
            write_label_mask(&mask, &p).unwrap();
            prop_assert_eq!(read_label_mask(&p).unwrap(), mask);
            let first = std::fs::read(&p).unwrap();
            write_label_mask(&read_label_mask(&p).unwrap(), &p).unwrap();
            prop_assert_eq!(std::fs::read(&p).unwrap(), first);
        }

        #[test]
        fn disparity_file_round_trip(raw in proptest::collection::vec(any::<u16>(), 12)) {
            let dir = tmp();
            let p = dir.path().join("d.pgm");
            let bytes = pnm::encode(pnm::Magic::Gray, 4, 3, 65535,
                &raw.iter().flat_map(|r| r.to_be_bytes()).collect::<Vec<_>>());
            std::fs::write(&p, &bytes).unwrap();
            let img = read_disparity(&p, 16.0).unwrap();
            write_disparity(&img, &p).unwrap();
            prop_assert_eq!(std::fs::read(&p).unwrap(), bytes);
        }
    }
}
