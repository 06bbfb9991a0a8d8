//! Random affine augmentation drawn fresh for every training sample and
//! epoch, applied as one inverse-mapped resampling pass.

use rand::Rng;

use crate::error::{Error, Result};
use crate::imagecore::{ops::sample_bilinear, ops::to_u8, GrayImage};
use crate::seed::rng_for;

const AFFINE_STREAM: u64 = 0x4146_4649;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FillMode {
    /// Out-of-bounds reads take the nearest edge pixel.
    #[default]
    NearestEdge,
}

/// Symmetric sampling bounds for each affine component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffinePolicy {
    pub max_rotation_deg: f64,
    pub max_shift_px: f64,
    /// Dimensionless horizontal shear coefficient.
    pub max_shear: f64,
    /// Zoom factor is drawn from `[1 - max_zoom, 1 + max_zoom]`.
    pub max_zoom: f64,
    pub allow_hflip: bool,
    pub fill_mode: FillMode,
}

impl Default for AffinePolicy {
    fn default() -> Self {
        Self {
            max_rotation_deg: 40.0,
            max_shift_px: 45.0,
            max_shear: 0.2,
            max_zoom: 0.20,
            allow_hflip: true,
            fill_mode: FillMode::NearestEdge,
        }
    }
}

impl AffinePolicy {
    /// Policy that always draws the identity.
    pub fn none() -> Self {
        Self {
            max_rotation_deg: 0.0,
            max_shift_px: 0.0,
            max_shear: 0.0,
            max_zoom: 0.0,
            allow_hflip: false,
            fill_mode: FillMode::NearestEdge,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.max_rotation_deg,
            self.max_shift_px,
            self.max_shear,
            self.max_zoom,
        ];
        if fields.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "affine policy magnitudes must be non-negative: {self:?}"
            )));
        }
        if self.max_zoom >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "max_zoom {} must be below 1",
                self.max_zoom
            )));
        }
        Ok(())
    }
}

/// One concrete sample of an [`AffinePolicy`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineDraw {
    pub rotation_deg: f64,
    pub shift_x_px: f64,
    pub shift_y_px: f64,
    pub shear: f64,
    pub zoom: f64,
    pub hflip: bool,
}

impl AffineDraw {
    pub const IDENTITY: AffineDraw = AffineDraw {
        rotation_deg: 0.0,
        shift_x_px: 0.0,
        shift_y_px: 0.0,
        shear: 0.0,
        zoom: 1.0,
        hflip: false,
    };

    /// Forward linear part on centered (x, y) coordinates, y pointing down:
    /// zoom * shear * rotation * flip.
    pub fn linear(&self) -> [[f64; 2]; 2] {
        let flip = if self.hflip { -1.0 } else { 1.0 };
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        // Counter-clockwise on screen with y down.
        let rot_flip = [[c * flip, s], [-s * flip, c]];
        let sheared = [
            [
                rot_flip[0][0] + self.shear * rot_flip[1][0],
                rot_flip[0][1] + self.shear * rot_flip[1][1],
            ],
            rot_flip[1],
        ];
        [
            [self.zoom * sheared[0][0], self.zoom * sheared[0][1]],
            [self.zoom * sheared[1][0], self.zoom * sheared[1][1]],
        ]
    }

    /// Maps a source (x, y) point to its output location.
    pub fn forward_point(&self, x: f64, y: f64, width: usize, height: usize) -> (f64, f64) {
        let (cx, cy) = ((width - 1) as f64 / 2.0, (height - 1) as f64 / 2.0);
        let a = self.linear();
        let (dx, dy) = (x - cx, y - cy);
        (
            a[0][0] * dx + a[0][1] * dy + cx + self.shift_x_px,
            a[1][0] * dx + a[1][1] * dy + cy + self.shift_y_px,
        )
    }
}

/// Draws uniformly within the policy bounds from a stream keyed by
/// `(seed, sample_id, epoch)`.
pub fn draw_affine(policy: &AffinePolicy, seed: u64, sample_id: u64, epoch: u32) -> AffineDraw {
    let mut rng = rng_for(seed, &[AFFINE_STREAM, sample_id, epoch as u64]);
    let mut sym = |m: f64| {
        if m > 0.0 {
            rng.random_range(-m..=m)
        } else {
            0.0
        }
    };
    let rotation_deg = sym(policy.max_rotation_deg);
    let shift_x_px = sym(policy.max_shift_px);
    let shift_y_px = sym(policy.max_shift_px);
    let shear = sym(policy.max_shear);
    let zoom = 1.0 + sym(policy.max_zoom);
    let hflip = policy.allow_hflip && rng.random_bool(0.5);
    AffineDraw {
        rotation_deg,
        shift_x_px,
        shift_y_px,
        shear,
        zoom,
        hflip,
    }
}

/// Warps the image about its center: flip, rotate, shear, zoom, then
/// translate, composed into one matrix and inverse-mapped with bilinear
/// sampling.
pub fn apply_affine(img: &GrayImage, draw: &AffineDraw) -> GrayImage {
    if *draw == AffineDraw::IDENTITY {
        return img.clone();
    }
    let (w, h) = img.dims();
    let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    let a = draw.linear();
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let inv = [
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ];
    GrayImage::from_fn(w, h, |r, c| {
        let dx = c as f64 - cx - draw.shift_x_px;
        let dy = r as f64 - cy - draw.shift_y_px;
        let sx = inv[0][0] * dx + inv[0][1] * dy + cx;
        let sy = inv[1][0] * dx + inv[1][1] * dy + cy;
        to_u8(sample_bilinear(img, sy, sx))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::horizontal_mirror;

    fn ramp() -> GrayImage {
        GrayImage::from_fn(31, 23, |r, c| ((r * 11 + c * 5) % 256) as u8)
    }

    #[test]
    fn zero_policy_draws_identity() {
        let d = draw_affine(&AffinePolicy::none(), 1, 2, 3);
        assert_eq!(d, AffineDraw::IDENTITY);
    }

    #[test]
    fn draws_are_keyed() {
        let p = AffinePolicy::default();
        assert_eq!(draw_affine(&p, 5, 9, 1), draw_affine(&p, 5, 9, 1));
        assert_ne!(draw_affine(&p, 5, 9, 1), draw_affine(&p, 5, 9, 2));
        assert_ne!(draw_affine(&p, 5, 9, 1), draw_affine(&p, 5, 10, 1));
    }

    #[test]
    fn draws_stay_in_bounds() {
        let p = AffinePolicy::default();
        for i in 0..2000 {
            let d = draw_affine(&p, 42, i, 0);
            assert!(d.rotation_deg.abs() <= 40.0);
            assert!(d.shift_x_px.abs() <= 45.0 && d.shift_y_px.abs() <= 45.0);
            assert!(d.shear.abs() <= 0.2);
            assert!((0.8..=1.2).contains(&d.zoom));
        }
    }

    #[test]
    fn identity_and_flip_are_exact() {
        let img = ramp();
        assert_eq!(apply_affine(&img, &AffineDraw::IDENTITY), img);
        let flip = AffineDraw {
            hflip: true,
            ..AffineDraw::IDENTITY
        };
        assert_eq!(apply_affine(&img, &flip), horizontal_mirror(&img));
    }

    #[test]
    fn pure_shift_moves_peak() {
        let mut img = GrayImage::filled(40, 30, 0);
        img.set(12, 7, 255);
        let d = AffineDraw {
            shift_x_px: 10.0,
            ..AffineDraw::IDENTITY
        };
        let out = apply_affine(&img, &d);
        assert_eq!(out.get(12, 17), 255);
        assert_eq!(out.pixels().iter().filter(|&&p| p > 0).count(), 1);
    }

    #[test]
    fn forward_point_matches_warp() {
        let mut img = GrayImage::filled(41, 41, 0);
        img.set(10, 25, 255);
        let d = AffineDraw {
            rotation_deg: 90.0,
            ..AffineDraw::IDENTITY
        };
        let (x, y) = d.forward_point(25.0, 10.0, 41, 41);
        let out = apply_affine(&img, &d);
        assert_eq!(out.get(y.round() as usize, x.round() as usize), 255);
    }

    #[test]
    fn policy_validation() {
        assert!(AffinePolicy::default().validate().is_ok());
        assert!(AffinePolicy {
            max_shear: -0.1,
            ..AffinePolicy::default()
        }
        .validate()
        .is_err());
    }
}
