//! Offline (base) augmentations applied once per dataset split, and the
//! online random affine augmentation applied per training sample.

pub mod offline;
pub mod online;

pub use offline::{
    add_gaussian_noise, apply_condition, baseline, baseline_rotated, cube_shuffle,
    horizontal_split, no_roi, no_roi_split, roi_crop, roi_split, rotate_ccw90,
    AugmentationCondition, ConditionKind, ConditionName, RoiSpec, SplitSpec,
};
pub use online::{apply_affine, draw_affine, AffineDraw, AffinePolicy};
