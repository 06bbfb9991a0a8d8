//! Class activation maps from gradients at the last spatial layer, and
//! heatmap overlays.

use crate::error::{Error, Result};
use crate::imagecore::ops::corner_aligned;
use crate::imagecore::{round_half_up, GrayImage, RgbImage};
use crate::nn::train::images_to_tensor;
use crate::nn::{softmax_rows, LayerStack, Tensor4};

/// Overlay opacity at full heat.
pub const OVERLAY_ALPHA: f64 = 0.4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCamResult {
    /// Non-negative map at feature resolution, row-major.
    pub map: Vec<f64>,
    pub map_rows: usize,
    pub map_cols: usize,
    /// Channel weights, one per feature map.
    pub weights: Vec<f64>,
    /// Map resized to the image and scaled so its maximum is 1.
    pub upsampled: Vec<f64>,
    pub width: usize,
    pub height: usize,
    pub class_id: usize,
    /// Softmax probability of `class_id`.
    pub confidence: f64,
}

impl GradCamResult {
    pub fn heat(&self, row: usize, col: usize) -> f64 {
        self.upsampled[row * self.width + col]
    }
}

/// Grad-CAM for `target_class` using the pre-softmax logit.
///
/// The image is resized to the network input for the forward pass; the map
/// is upsampled back to the image's own size.
pub fn compute_gradcam(
    net: &LayerStack,
    img: &GrayImage,
    target_class: usize,
) -> Result<GradCamResult> {
    let classes = net.num_classes();
    if target_class >= classes {
        return Err(Error::LabelOutOfRange {
            label: target_class,
            classes,
        });
    }
    let flat = net
        .flatten_index()
        .filter(|&i| i > 0)
        .ok_or(Error::NoSpatialLayer)?;
    let x = images_to_tensor(&[img], net.input_dims())?;
    let (logits, tape) = net.forward(&x, true)?;
    let mut seed = Tensor4::zeros(logits.dims());
    seed.data_mut()[target_class] = 1.0;
    let (d_psi, _) = net.backprop(&tape, &seed, flat)?;
    let psi = tape.output(flat - 1).expect("complete tape");
    let (channels, rows, cols) = psi.sample_dims();
    let z = (rows * cols) as f64;
    let weights: Vec<f64> = (0..channels)
        .map(|k| d_psi.plane(0, k).iter().sum::<f64>() / z)
        .collect();
    let mut map = vec![0.0; rows * cols];
    for (k, b) in weights.iter().enumerate() {
        for (m, v) in map.iter_mut().zip(psi.plane(0, k)) {
            *m += b * v;
        }
    }
    map.iter_mut().for_each(|v| *v = v.max(0.0));
    let (width, height) = img.dims();
    let upsampled = normalize_max(resize_map(&map, rows, cols, height, width));
    let confidence = softmax_rows(&logits)[target_class];
    Ok(GradCamResult {
        map,
        map_rows: rows,
        map_cols: cols,
        weights,
        upsampled,
        width,
        height,
        class_id: target_class,
        confidence,
    })
}

/// Corner-aligned bilinear resize of a real-valued map.
pub fn resize_map(
    map: &[f64],
    rows: usize,
    cols: usize,
    out_rows: usize,
    out_cols: usize,
) -> Vec<f64> {
    let at = |r: usize, c: usize| map[r * cols + c];
    let mut out = Vec::with_capacity(out_rows * out_cols);
    for i in 0..out_rows {
        let y = corner_aligned(i, rows, out_rows);
        let (y0, fy) = (y.floor() as usize, y - y.floor());
        let y1 = (y0 + 1).min(rows - 1);
        for j in 0..out_cols {
            let x = corner_aligned(j, cols, out_cols);
            let (x0, fx) = (x.floor() as usize, x - x.floor());
            let x1 = (x0 + 1).min(cols - 1);
            let top = at(y0, x0) + (at(y0, x1) - at(y0, x0)) * fx;
            let bottom = at(y1, x0) + (at(y1, x1) - at(y1, x0)) * fx;
            out.push(top + (bottom - top) * fy);
        }
    }
    out
}

fn normalize_max(mut v: Vec<f64>) -> Vec<f64> {
    let max = v.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        v.iter_mut().for_each(|x| *x /= max);
    }
    v
}

/// Jet-style colormap, each channel in [0, 1].
pub fn jet(t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    let ch = |c: f64| (1.5 - (4.0 * t - c).abs()).clamp(0.0, 1.0);
    [ch(3.0), ch(2.0), ch(1.0)]
}

/// Blends the colormapped heat over `base`: each channel is
/// `round((1 - a) * base + a * 255 * color)` with `a = OVERLAY_ALPHA * heat`.
pub fn render_overlay(result: &GradCamResult, base: &GrayImage) -> Result<RgbImage> {
    if base.dims() != (result.width, result.height) {
        return Err(Error::ShapeMismatch(format!(
            "overlay base is {}x{} but heatmap is {}x{}",
            base.width(),
            base.height(),
            result.width,
            result.height
        )));
    }
    let mut data = Vec::with_capacity(base.pixels().len() * 3);
    for (&p, &t) in base.pixels().iter().zip(&result.upsampled) {
        let a = OVERLAY_ALPHA * t;
        for c in jet(t) {
            data.push(round_half_up((1.0 - a) * p as f64 + a * 255.0 * c).clamp(0.0, 255.0) as u8);
        }
    }
    Ok(RgbImage {
        width: result.width,
        height: result.height,
        data,
    })
}
