//! Synthetic knee radiographs for desk-scale experiments.
//!
//! Each phantom shows a femur above and a tibia below a joint gap. Grade
//! drives the gap width, subchondral brightening and marginal osteophytes;
//! position, intensities and texture vary with a nuisance seed.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use super::manifest::{write_manifest, Sample, Side, NUM_GRADES};
use crate::error::{Error, Result};
use crate::imagecore::{horizontal_mirror, invert, save_image, GrayImage};
use crate::seed::rng_for;

pub const PHANTOM_SIZE: usize = 224;
const PHANTOM_STREAM: u64 = 0x5048_414e;
/// Share of phantoms written as negatives.
const NEGATIVE_RATE: f64 = 0.05;

/// Joint gap in pixels; `jitter` is the shared nuisance offset in [-2, 2].
pub fn gap_width(grade: u8, jitter: f64) -> f64 {
    44.0 - 9.0 * grade as f64 + jitter
}

/// Left-knee phantom of the given grade.
pub fn phantom_knee(grade: u8, nuisance_seed: u64) -> GrayImage {
    let mut rng = rng_for(nuisance_seed, &[PHANTOM_STREAM]);
    let k = grade as f64;
    let gap = gap_width(grade, rng.random_range(-2.0..=2.0));
    let cy = 112.0 + rng.random_range(-6.0..=6.0);
    let cx = 112.0 + rng.random_range(-8.0..=8.0);
    let background = rng.random_range(20.0..45.0);
    let bone = rng.random_range(150.0..185.0);
    let (top, bottom) = (cy - gap / 2.0, cy + gap / 2.0);
    let femur_hw =
        |d: f64| 62.0 - 22.0 * (1.0 - (-d / 28.0).exp()) - (10.0 - d).max(0.0).powi(2) / 8.0;
    let tibia_hw =
        |d: f64| 66.0 - 26.0 * (1.0 - (-d / 30.0).exp()) - (8.0 - d).max(0.0).powi(2) / 8.0;
    let spur_r = if grade >= 2 {
        3.0 + 3.0 * (k - 2.0)
    } else {
        0.0
    };
    let spurs = [
        (top - 2.0, cx - femur_hw(2.0)),
        (top - 2.0, cx + femur_hw(2.0)),
        (bottom + 2.0, cx - tibia_hw(2.0)),
        (bottom + 2.0, cx + tibia_hw(2.0)),
    ];
    GrayImage::from_fn(PHANTOM_SIZE, PHANTOM_SIZE, |r, c| {
        let (y, x) = (r as f64, c as f64);
        let mut v = background;
        let dist = if y < top {
            Some((top - y, femur_hw(top - y)))
        } else if y > bottom {
            Some((y - bottom, tibia_hw(y - bottom)))
        } else {
            None
        };
        if let Some((d, hw)) = dist {
            if (x - cx).abs() <= hw {
                v = bone;
                if d < 7.0 {
                    v += 14.0 * k;
                }
            }
        }
        // Fibular head on the lateral side.
        let (fy, fx) = ((y - bottom - 45.0) / 26.0, (x - cx - 62.0) / 9.0);
        if fy * fy + fx * fx <= 1.0 {
            v = v.max(bone - 30.0);
        }
        if spur_r > 0.0
            && spurs
                .iter()
                .any(|&(sy, sx)| (y - sy).powi(2) + (x - sx).powi(2) <= spur_r * spur_r)
        {
            v = v.max(bone);
        }
        (v + rng.random_range(-6.0..=6.0)).round().clamp(0.0, 255.0) as u8
    })
}

/// Writes `n_per_class` phantoms per grade under `out_dir/images` plus
/// `out_dir/manifest.csv`, and returns the manifest path.
///
/// Grades are shuffled and paired into two-knee patients; right knees are
/// stored mirrored and a few images are stored as negatives.
pub fn generate_phantom_dataset(n_per_class: usize, seed: u64, out_dir: &Path) -> Result<PathBuf> {
    if n_per_class == 0 {
        return Err(Error::InvalidParameter("n_per_class must be >= 1".into()));
    }
    let image_dir = out_dir.join("images");
    std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    let mut grades: Vec<u8> = (0..NUM_GRADES as u8)
        .flat_map(|g| std::iter::repeat_n(g, n_per_class))
        .collect();
    grades.shuffle(&mut rng_for(seed, &[PHANTOM_STREAM, 0]));
    let mut samples = Vec::with_capacity(grades.len());
    for (i, &grade) in grades.iter().enumerate() {
        let patient = i / 2;
        let side = if i % 2 == 0 { Side::Left } else { Side::Right };
        let mut img = phantom_knee(
            grade,
            crate::seed::derive_seed(seed, &[PHANTOM_STREAM, 1, i as u64]),
        );
        if side == Side::Right {
            img = horizontal_mirror(&img);
        }
        if rng_for(seed, &[PHANTOM_STREAM, 2, i as u64]).random_bool(NEGATIVE_RATE) {
            img = invert(&img);
        }
        let path = image_dir.join(format!("p{patient:05}_{side}.pgm"));
        save_image(&img, &path)?;
        samples.push(Sample {
            image_path: path,
            patient_id: format!("P{patient:05}"),
            side,
            kl_grade: grade,
        });
    }
    let manifest = out_dir.join("manifest.csv");
    write_manifest(&manifest, &samples)?;
    Ok(manifest)
}
