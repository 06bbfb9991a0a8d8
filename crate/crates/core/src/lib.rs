//! Knee radiograph augmentation study: preprocessing, offline and online
//! augmentation, a small CNN engine, Grad-CAM, metrics and the experiment
//! pipeline.

pub mod augment;
pub mod error;
pub mod gradcam;
pub mod imagecore;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod seed;

pub use augment::{AffinePolicy, AugmentationCondition, ConditionKind, ConditionName};
pub use error::{Error, Result};
pub use gradcam::{compute_gradcam, render_overlay, GradCamResult};
pub use imagecore::{GrayImage, RgbImage};
pub use metrics::{confusion, prf1, roc_one_vs_all, ConfusionMatrix, MetricsReport, RocCurve};
pub use nn::{LayerStack, ScalingConfig, Tensor4};
