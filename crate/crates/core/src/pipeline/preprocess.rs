//! Per-image preprocessing: right knees mirrored to left orientation,
//! negative-channel images inverted, then histogram equalization.

use std::path::Path;

use rayon::prelude::*;

use super::manifest::{Sample, Side};
use crate::error::Result;
use crate::imagecore::{
    equalize_histogram, horizontal_mirror, invert, is_negative_channel, load_image, save_image,
    GrayImage,
};

/// Returns the processed image and whether it was inverted.
pub fn preprocess_image(img: &GrayImage, side: Side) -> (GrayImage, bool) {
    let mut out = match side {
        Side::Right => horizontal_mirror(img),
        Side::Left => img.clone(),
    };
    let negative = is_negative_channel(&out);
    if negative {
        out = invert(&out);
    }
    (equalize_histogram(&out), negative)
}

/// Loads and preprocesses every sample in memory. Returns the images in
/// sample order and the number of inverted inputs.
pub fn load_preprocessed(samples: &[Sample]) -> Result<(Vec<GrayImage>, usize)> {
    let done: Vec<(GrayImage, bool)> = samples
        .par_iter()
        .map(|s| Ok(preprocess_image(&load_image(&s.image_path)?, s.side)))
        .collect::<Result<_>>()?;
    let inverted = done.iter().filter(|d| d.1).count();
    Ok((done.into_iter().map(|d| d.0).collect(), inverted))
}

/// Preprocesses every sample and writes PGM copies into `out_dir`, named
/// by knee. Returns samples pointing at the copies.
pub fn preprocess_all(samples: &[Sample], out_dir: &Path) -> Result<Vec<Sample>> {
    std::fs::create_dir_all(out_dir).map_err(|e| crate::Error::io(out_dir, e))?;
    let (images, inverted) = load_preprocessed(samples)?;
    log::info!(
        "preprocess: inverted {inverted} negative-channel images out of {}",
        samples.len()
    );
    samples
        .iter()
        .zip(&images)
        .enumerate()
        .map(|(i, (s, img))| {
            let name = format!("{:05}_{}_{}.pgm", i, sanitize(&s.patient_id), s.side);
            let path = out_dir.join(name);
            save_image(img, &path)?;
            Ok(Sample {
                image_path: path,
                ..s.clone()
            })
        })
        .collect()
}

pub(crate) fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
