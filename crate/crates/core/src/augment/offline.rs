//! The eighteen base augmentation conditions. Positive conditions add views
//! of the diagnostic region; negative ones destroy or remove it so that a
//! model trained on them exposes what it actually relies on.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::imagecore::{resize_bilinear, GrayImage};
use crate::seed::rng_for;

const NOISE_STREAM: u64 = 0x4e4f_4953;
const CUBE_STREAM: u64 = 0x4355_4245;

/// Rounds a non-negative row coordinate half up, tolerating the float error
/// of products like `224 * 0.525`.
pub(crate) fn round_rows(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor() as usize
}

/// Centered horizontal band holding the joint space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoiSpec {
    /// Fraction of the image height kept, centered vertically.
    pub center_fraction: f64,
}

impl Default for RoiSpec {
    fn default() -> Self {
        Self {
            center_fraction: 0.5,
        }
    }
}

impl RoiSpec {
    pub fn new(center_fraction: f64) -> Result<Self> {
        if !(center_fraction > 0.0 && center_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "ROI fraction {center_fraction} outside (0, 1)"
            )));
        }
        Ok(Self { center_fraction })
    }

    /// Band rows `[round(H(0.5 - f/2)), round(H(0.5 + f/2)))`.
    pub fn band(&self, height: usize) -> (usize, usize) {
        let h = height as f64;
        let f = self.center_fraction;
        (
            round_rows(h * (0.5 - f / 2.0)),
            round_rows(h * (0.5 + f / 2.0)).min(height),
        )
    }
}

/// Two overlapping horizontal pieces around the middle row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    /// Fraction of the height shared by both pieces.
    pub overlap: f64,
    /// Turn the bottom piece upside down.
    pub flip_second: bool,
}

impl SplitSpec {
    pub fn new(overlap: f64, flip_second: bool) -> Result<Self> {
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::InvalidParameter(format!(
                "split overlap {overlap} outside [0, 1)"
            )));
        }
        Ok(Self {
            overlap,
            flip_second,
        })
    }

    pub fn piece_height(&self, height: usize) -> usize {
        round_rows(height as f64 * (0.5 + self.overlap / 2.0)).min(height)
    }

    /// (top rows, bottom rows) as half-open ranges.
    pub fn pieces(&self, height: usize) -> ((usize, usize), (usize, usize)) {
        let p = self.piece_height(height);
        ((0, p), (height - p, height))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConditionKind {
    Positive,
    Negative,
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionKind::Positive => "positive",
            ConditionKind::Negative => "negative",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConditionName {
    Baseline,
    BaselineRotated,
    Roi,
    HSplit20,
    HSplit20Flip,
    HSplit05,
    HSplit05Flip,
    RoiSplit,
    RoiSplitFlip,
    Noise05,
    Noise10,
    Noise20,
    Noise50,
    Cube2,
    Cube3,
    Cube6,
    NoRoi,
    NoRoiSplit,
}

impl ConditionName {
    pub const ALL: [ConditionName; 18] = [
        ConditionName::Baseline,
        ConditionName::BaselineRotated,
        ConditionName::Roi,
        ConditionName::HSplit20,
        ConditionName::HSplit20Flip,
        ConditionName::HSplit05,
        ConditionName::HSplit05Flip,
        ConditionName::RoiSplit,
        ConditionName::RoiSplitFlip,
        ConditionName::Noise05,
        ConditionName::Noise10,
        ConditionName::Noise20,
        ConditionName::Noise50,
        ConditionName::Cube2,
        ConditionName::Cube3,
        ConditionName::Cube6,
        ConditionName::NoRoi,
        ConditionName::NoRoiSplit,
    ];

    pub fn as_str(self) -> &'static str {
        use ConditionName::*;
        match self {
            Baseline => "baseline",
            BaselineRotated => "baseline_rotated",
            Roi => "roi",
            HSplit20 => "hsplit20",
            HSplit20Flip => "hsplit20_flip",
            HSplit05 => "hsplit05",
            HSplit05Flip => "hsplit05_flip",
            RoiSplit => "roi_split",
            RoiSplitFlip => "roi_split_flip",
            Noise05 => "noise05",
            Noise10 => "noise10",
            Noise20 => "noise20",
            Noise50 => "noise50",
            Cube2 => "cube2",
            Cube3 => "cube3",
            Cube6 => "cube6",
            NoRoi => "no_roi",
            NoRoiSplit => "no_roi_split",
        }
    }

    pub fn kind(self) -> ConditionKind {
        use ConditionName::*;
        match self {
            Baseline | BaselineRotated | Roi | HSplit20 | HSplit20Flip | HSplit05
            | HSplit05Flip | RoiSplit | RoiSplitFlip => ConditionKind::Positive,
            _ => ConditionKind::Negative,
        }
    }

    /// Images produced per source image.
    pub fn output_count(self) -> usize {
        use ConditionName::*;
        match self {
            HSplit20 | HSplit20Flip | HSplit05 | HSplit05Flip | RoiSplit | RoiSplitFlip
            | NoRoiSplit => 2,
            _ => 1,
        }
    }

    pub fn noise_level(self) -> Option<f64> {
        use ConditionName::*;
        match self {
            Noise05 => Some(0.05),
            Noise10 => Some(0.10),
            Noise20 => Some(0.20),
            Noise50 => Some(0.50),
            _ => None,
        }
    }

    pub fn grid(self) -> Option<usize> {
        use ConditionName::*;
        match self {
            Cube2 => Some(2),
            Cube3 => Some(3),
            Cube6 => Some(6),
            _ => None,
        }
    }

    pub fn split_spec(self) -> Option<SplitSpec> {
        use ConditionName::*;
        let (overlap, flip_second) = match self {
            HSplit20 | RoiSplit => (0.20, false),
            HSplit20Flip | RoiSplitFlip => (0.20, true),
            HSplit05 => (0.05, false),
            HSplit05Flip => (0.05, true),
            _ => return None,
        };
        Some(SplitSpec {
            overlap,
            flip_second,
        })
    }
}

impl fmt::Display for ConditionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConditionName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConditionName::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| Error::UnknownCondition(s.to_string()))
    }
}

/// One base augmentation condition with its parameters and seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentationCondition {
    pub name: ConditionName,
    pub roi: RoiSpec,
    pub seed: u64,
}

impl AugmentationCondition {
    pub fn new(name: ConditionName, seed: u64) -> Self {
        Self {
            name,
            roi: RoiSpec::default(),
            seed,
        }
    }

    pub fn kind(&self) -> ConditionKind {
        self.name.kind()
    }
}

fn resize_to(img: GrayImage, dims: (usize, usize)) -> GrayImage {
    if img.dims() == dims {
        img
    } else {
        resize_bilinear(&img, dims.0, dims.1)
    }
}

pub fn baseline(img: &GrayImage) -> Vec<GrayImage> {
    vec![img.clone()]
}

/// Exact 90 degree counter-clockwise rotation: `out(W-1-c, r) = in(r, c)`.
pub fn rotate_ccw90(img: &GrayImage) -> GrayImage {
    let (w, h) = img.dims();
    // Output is h wide and w tall.
    GrayImage::from_fn(h, w, |row, col| img.get(col, w - 1 - row))
}

pub fn baseline_rotated(img: &GrayImage) -> Vec<GrayImage> {
    vec![resize_to(rotate_ccw90(img), img.dims())]
}

fn roi_band(img: &GrayImage, roi: &RoiSpec) -> Result<GrayImage> {
    let (start, end) = roi.band(img.height());
    if end <= start {
        return Err(Error::DegenerateRoi(format!(
            "empty ROI band for height {}",
            img.height()
        )));
    }
    img.crop_rows(start, end)
}

pub fn roi_crop(img: &GrayImage, roi: &RoiSpec) -> Result<Vec<GrayImage>> {
    Ok(vec![resize_to(roi_band(img, roi)?, img.dims())])
}

fn split_pieces(
    img: &GrayImage,
    spec: &SplitSpec,
    out_dims: (usize, usize),
) -> Result<Vec<GrayImage>> {
    let ((t0, t1), (b0, b1)) = spec.pieces(img.height());
    if t1 == 0 {
        return Err(Error::InvalidParameter(format!(
            "split piece of height 0 for height {}",
            img.height()
        )));
    }
    let top = img.crop_rows(t0, t1)?;
    let mut bottom = img.crop_rows(b0, b1)?;
    if spec.flip_second {
        bottom = bottom.vertical_flip();
    }
    Ok(vec![resize_to(top, out_dims), resize_to(bottom, out_dims)])
}

pub fn horizontal_split(img: &GrayImage, spec: &SplitSpec) -> Result<Vec<GrayImage>> {
    split_pieces(img, spec, img.dims())
}

pub fn roi_split(img: &GrayImage, roi: &RoiSpec, split: &SplitSpec) -> Result<Vec<GrayImage>> {
    let band = roi_band(img, roi)?;
    split_pieces(&band, split, img.dims())
}

/// Level 0 is the identity.
pub fn add_gaussian_noise(img: &GrayImage, level: f64, seed: u64) -> Result<Vec<GrayImage>> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::InvalidParameter(format!(
            "noise level {level} outside [0, 1]"
        )));
    }
    let sigma = level * 255.0;
    let mut rng = rng_for(seed, &[NOISE_STREAM]);
    let pixels = img
        .pixels()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if sigma == 0.0 {
                return p;
            }
            // Counter-based: pixel i always reads words [4i, 4i+4) of the stream.
            rng.set_word_pos(i as u128 * 4);
            let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
            let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let n = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            crate::imagecore::round_half_up(p as f64 + sigma * n).clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok(vec![GrayImage::new(img.width(), img.height(), pixels)?])
}

/// Half-open bounds of tile `i` of `grid` along an axis of length `len`;
/// the last tile absorbs the remainder.
pub(crate) fn tile_bounds(i: usize, grid: usize, len: usize) -> (usize, usize) {
    let t = len / grid;
    let end = if i + 1 == grid { len } else { (i + 1) * t };
    (i * t, end)
}

/// Shuffles the `grid x grid` tiles of the image. Tiles only trade places
/// with tiles of the same size, so the reassembled image stays rectangular.
pub fn cube_shuffle(img: &GrayImage, grid: usize, seed: u64) -> Result<Vec<GrayImage>> {
    let (w, h) = img.dims();
    if grid == 0 || grid > w.min(h) {
        return Err(Error::GridTooFine {
            grid,
            width: w,
            height: h,
        });
    }
    let tiles: Vec<((usize, usize), (usize, usize))> = (0..grid * grid)
        .map(|k| {
            (
                tile_bounds(k / grid, grid, h),
                tile_bounds(k % grid, grid, w),
            )
        })
        .collect();
    let size = |k: usize| {
        let ((r0, r1), (c0, c1)) = tiles[k];
        (r1 - r0, c1 - c0)
    };
    // Size classes in order of first appearance (row-major).
    let mut classes: Vec<((usize, usize), Vec<usize>)> = Vec::new();
    for k in 0..tiles.len() {
        match classes.iter_mut().find(|(s, _)| *s == size(k)) {
            Some((_, members)) => members.push(k),
            None => classes.push((size(k), vec![k])),
        }
    }
    let mut rng = rng_for(seed, &[CUBE_STREAM, grid as u64]);
    let mut source_of = vec![0usize; tiles.len()];
    for (_, members) in &classes {
        let mut perm = members.clone();
        perm.shuffle(&mut rng);
        for (&dst, &src) in members.iter().zip(&perm) {
            source_of[dst] = src;
        }
    }
    let mut out = img.clone();
    for (dst, &src) in source_of.iter().enumerate() {
        let ((dr0, dr1), (dc0, dc1)) = tiles[dst];
        let ((sr0, _), (sc0, _)) = tiles[src];
        for dr in 0..dr1 - dr0 {
            for dc in 0..dc1 - dc0 {
                out.set(dr0 + dr, dc0 + dc, img.get(sr0 + dr, sc0 + dc));
            }
        }
    }
    Ok(vec![out])
}

fn non_roi_parts(img: &GrayImage, roi: &RoiSpec) -> Result<(GrayImage, GrayImage)> {
    let (start, end) = roi.band(img.height());
    if start == 0 || end >= img.height() {
        return Err(Error::DegenerateRoi(format!(
            "ROI band [{start}, {end}) leaves an empty non-ROI part for height {}",
            img.height()
        )));
    }
    Ok((img.crop_rows(0, start)?, img.crop_rows(end, img.height())?))
}

/// Rows above and below the ROI band, concatenated.
pub fn no_roi(img: &GrayImage, roi: &RoiSpec) -> Result<Vec<GrayImage>> {
    let (upper, lower) = non_roi_parts(img, roi)?;
    Ok(vec![resize_to(upper.vstack(&lower)?, img.dims())])
}

/// The two non-ROI parts as separate images.
pub fn no_roi_split(img: &GrayImage, roi: &RoiSpec) -> Result<Vec<GrayImage>> {
    let (upper, lower) = non_roi_parts(img, roi)?;
    Ok(vec![
        resize_to(upper, img.dims()),
        resize_to(lower, img.dims()),
    ])
}

pub fn apply_condition(img: &GrayImage, cond: &AugmentationCondition) -> Result<Vec<GrayImage>> {
    use ConditionName::*;
    let name = cond.name;
    match name {
        Baseline => Ok(baseline(img)),
        BaselineRotated => Ok(baseline_rotated(img)),
        Roi => roi_crop(img, &cond.roi),
        HSplit20 | HSplit20Flip | HSplit05 | HSplit05Flip => {
            horizontal_split(img, &name.split_spec().expect("split condition"))
        }
        RoiSplit | RoiSplitFlip => {
            roi_split(img, &cond.roi, &name.split_spec().expect("split condition"))
        }
        Noise05 | Noise10 | Noise20 | Noise50 => {
            add_gaussian_noise(img, name.noise_level().expect("noise condition"), cond.seed)
        }
        Cube2 | Cube3 | Cube6 => cube_shuffle(img, name.grid().expect("cube condition"), cond.seed),
        NoRoi => no_roi(img, &cond.roi),
        NoRoiSplit => no_roi_split(img, &cond.roi),
    }
}
